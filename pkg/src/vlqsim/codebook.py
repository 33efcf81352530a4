"""Covering beamforming codebooks and the derived precoding codebook.

Codebooks are built by greedy sequential covering (random unit probes are
promoted to codewords whenever no existing codeword is close enough) and
certified statistically, with adversarial local refinement of the worst
probe.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import RngStream, sample_channels

__all__ = [
    "BeamformingCodebook",
    "CoveringReport",
    "PrecodingCodebook",
    "CoveringError",
    "build_covering_codebook",
    "verify_covering",
    "precoding_codebook",
    "fit_c0",
    "save_codebook",
    "load_codebook",
]

_DUPLICATE_CORR = 1.0 - 1e-9


class CoveringError(RuntimeError):
    """Post-build verification failed; the stop-streak was too small."""


@dataclass
class BeamformingCodebook:
    vectors: np.ndarray  # (n, t) complex, unit rows
    delta: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        if len(self.vectors) < 1:
            raise ValueError("codebook must be nonempty")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-12:
            raise ValueError("codewords must be unit norm to 1e-12")
        corr = np.abs(self.vectors @ self.vectors.conj().T)
        np.fill_diagonal(corr, 0.0)
        if corr.size and np.max(corr) >= _DUPLICATE_CORR:
            raise ValueError("duplicate codewords")

    @property
    def t(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.vectors)

    def max_correlation_sq(self, h: np.ndarray) -> np.ndarray:
        """max_i |<x_i, hbar>|^2 for unit rows hbar of h, vectorized."""
        h = np.atleast_2d(h)
        return np.max(np.abs(h @ self.vectors.conj().T) ** 2, axis=1)


@dataclass(frozen=True)
class CoveringReport:
    probes_tested: int
    worst_correlation_sq: float
    worst_probe: np.ndarray
    passed: bool
    delta: float

    def __post_init__(self):
        if self.passed != (self.worst_correlation_sq >= 1.0 - self.delta):
            raise ValueError("pass flag inconsistent with worst correlation")


@dataclass
class PrecodingCodebook:
    matrices: np.ndarray  # (n+1, t, t)
    delta: float
    index_of_identity: int
    beamforming: BeamformingCodebook

    def __post_init__(self):
        spectral = np.linalg.norm(self.matrices, ord=2, axis=(1, 2))
        if np.max(spectral) > 1.0 + 1e-10:
            raise ValueError("spectral norm of every precoder must be <= 1")

    @property
    def t(self) -> int:
        return self.matrices.shape[1]

    def __len__(self) -> int:
        return len(self.matrices)


def _unit_probes(gen: np.random.Generator, t: int, n: int) -> np.ndarray:
    u1 = gen.random((n, t))
    u2 = gen.random((n, t))
    g = np.sqrt(-np.log1p(-u1)) * np.exp(2j * np.pi * u2)
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def build_covering_codebook(
    t: int,
    delta: float,
    stream: RngStream,
    stop_streak: int = 200,
    probe_batch: int = 512,
    margin: float = 0.25,
) -> BeamformingCodebook:
    """Greedy sequential covering certified at squared-correlation 1 - delta.

    Probes are drawn uniformly on the unit sphere; a probe whose best
    codeword correlation^2 falls below the build threshold becomes a
    codeword.  The build threshold keeps a small margin inside delta
    (1 - (1-margin)*delta) so that the residual slivers the statistical
    stop criterion cannot rule out still sit above 1 - delta; without the
    margin, the adversarial post-build certificate essentially always finds
    a point just below the threshold.  The build stops after stop_streak
    consecutive probes required no addition, then must pass a fresh
    verification at delta itself.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if not 0.0 <= margin < 1.0:
        raise ValueError("margin must be in [0, 1)")
    if t < 1 or stop_streak < 1:
        raise ValueError("t and stop_streak must be >= 1")
    gen = stream.generator(0)
    threshold = 1.0 - (1.0 - margin) * delta
    vectors: list[np.ndarray] = []
    streak = 0
    probes = 0
    while streak < stop_streak:
        batch = _unit_probes(gen, t, probe_batch)
        mat = np.asarray(vectors) if vectors else None
        for p in batch:
            probes += 1
            best = 0.0 if mat is None else float(np.max(np.abs(mat @ p.conj()) ** 2))
            if best < threshold:
                p = p / np.linalg.norm(p)
                vectors.append(p)
                mat = np.asarray(vectors)
                streak = 0
            else:
                streak += 1
            if streak >= stop_streak:
                break
    book = BeamformingCodebook(
        vectors=np.asarray(vectors),
        delta=delta,
        metadata={
            "master_seed": stream.master_seed,
            "stream_index": stream.index,
            "stop_streak": stop_streak,
            "probes_during_build": probes,
        },
    )
    report = verify_covering(
        book, delta, probes=10 * stop_streak, refine_steps=30, stream=stream.child(1)
    )
    if not report.passed:
        raise CoveringError(
            f"post-build verification failed (worst corr^2 "
            f"{report.worst_correlation_sq:.6f} < {1 - delta:.6f}); "
            "increase stop_streak"
        )
    book.metadata["verified_probes"] = report.probes_tested
    book.metadata["verified_worst_correlation_sq"] = report.worst_correlation_sq
    return book


def _refine_worst(book: BeamformingCodebook, probe: np.ndarray, steps: int) -> np.ndarray:
    """Local descent pushing a probe away from the codebook on the sphere."""
    h = probe / np.linalg.norm(probe)
    eta = 0.5
    val = float(book.max_correlation_sq(h)[0])
    for _ in range(steps):
        corr = book.vectors @ h.conj()
        j = int(np.argmax(np.abs(corr)))
        grad = book.vectors[j] * corr[j].conj()
        cand = h - eta * grad
        cand = cand / np.linalg.norm(cand)
        cand_val = float(book.max_correlation_sq(cand)[0])
        if cand_val < val:
            h, val = cand, cand_val
        else:
            eta *= 0.5
            if eta < 1e-12:
                break
    return h


def verify_covering(
    book: BeamformingCodebook,
    delta: float,
    probes: int,
    refine_steps: int = 30,
    stream: RngStream | None = None,
) -> CoveringReport:
    """Statistical covering certificate with adversarial refinement.

    Draws uniform unit probes, finds the worst one, then runs local descent
    maximizing its distance to the codebook before reporting.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    if stream is None:
        stream = RngStream(0)
    gen = stream.generator(0)
    worst_val = math.inf
    worst_probe = None
    remaining = probes
    while remaining > 0:
        n = min(remaining, 1 << 15)
        remaining -= n
        batch = _unit_probes(gen, book.t, n)
        vals = book.max_correlation_sq(batch)
        i = int(np.argmin(vals))
        if vals[i] < worst_val:
            worst_val = float(vals[i])
            worst_probe = batch[i]
    if refine_steps > 0:
        refined = _refine_worst(book, worst_probe, refine_steps)
        refined_val = float(book.max_correlation_sq(refined)[0])
        if refined_val < worst_val:
            worst_val, worst_probe = refined_val, refined
    return CoveringReport(
        probes_tested=probes,
        worst_correlation_sq=worst_val,
        worst_probe=worst_probe,
        passed=worst_val >= 1.0 - delta,
        delta=delta,
    )


def precoding_codebook(book: BeamformingCodebook) -> PrecodingCodebook:
    """Identity precoder plus the rank-1 equivalents of the codewords."""
    t = book.t
    mats = np.empty((len(book) + 1, t, t), dtype=complex)
    mats[0] = np.eye(t) / math.sqrt(t)
    for i, x in enumerate(book.vectors):
        mats[i + 1] = np.outer(x, x.conj())
    return PrecodingCodebook(
        matrices=mats, delta=book.delta, index_of_identity=0, beamforming=book
    )


def fit_c0(family) -> float:
    """Empirical covering constant: max over the family of |B| * delta^{2t}."""
    books = list(family)
    if len(books) < 2:
        raise ValueError("need at least 2 codebooks")
    ts = {b.t for b in books}
    if len(ts) != 1:
        raise ValueError("mixed antenna counts in family")
    t = ts.pop()
    return max(len(b) * b.delta ** (2 * t) for b in books)


def save_codebook(book: BeamformingCodebook, path) -> None:
    doc = {
        "format-version": 1,
        "t": book.t,
        "delta": book.delta,
        "vectors": [[[float(z.real), float(z.imag)] for z in row] for row in book.vectors],
        "metadata": book.metadata,
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def load_codebook(path) -> BeamformingCodebook:
    doc = json.loads(Path(path).read_text())
    if doc.get("format-version") != 1:
        raise ValueError("unsupported codebook format version")
    vectors = np.array(
        [[complex(re, im) for re, im in row] for row in doc["vectors"]], dtype=complex
    )
    if vectors.shape[1] != doc["t"]:
        raise ValueError("vector length inconsistent with t")
    return BeamformingCodebook(
        vectors=vectors, delta=float(doc["delta"]), metadata=doc.get("metadata", {})
    )
