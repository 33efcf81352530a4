"""Semi-analytic SER / feedback-rate estimation.

The primary estimator averages the conditional BPSK error rate
Q(sqrt(2 snr(h))) over channel draws.  Two conditioning modes:

* "none": per-draw conditional SER; supports exact pathwise comparisons.
* "radial": the channel magnitude is integrated out analytically per
  direction (h = a hbar with a^2 ~ Gamma(t,1) independent of hbar), which
  removes the dominant variance component and keeps relative standard
  errors bounded as P grows.  Without it the per-draw estimator's relative
  stderr grows like P^t/sqrt(N) and deep-SNR points are unusable.

Common random numbers: every quantizer evaluated in one sweep batch sees
the same draws, and the chunk partition is fixed, so outputs do not depend
on the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .channel import RngStream, sample_channels
from .codebook import BeamformingCodebook
from .numerics import (
    LogLogFit,
    QuadratureSpec,
    bpsk_mrc_ser,
    fit_loglog,
    gamma_tail,
    integrate_gamma_weighted,
    q_function,
)
from .quantizer import VlqBeamformingSpec, VlqPrecodingSpec

__all__ = [
    "SweepRecord",
    "GainEstimate",
    "FullCsitBeamforming",
    "FixedLengthBeamforming",
    "VariableLengthBeamforming",
    "FullCsitPrecoding",
    "OpenLoopPrecoding",
    "VariableLengthPrecoding",
    "ser_rate_sweep",
    "ser_full_analytic",
    "estimate_gains",
    "paired_compare",
    "write_records_csv",
    "write_records_json",
]

_CHUNK = 1 << 16


@dataclass(frozen=True)
class SweepRecord:
    quantizer_id: str
    P: float
    ser: float
    ser_stderr: float
    rate: float
    rate_stderr: float
    samples: int
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.ser <= 0.5 + 1e-12:
            raise ValueError(f"ser {self.ser} outside [0, 1/2]")
        if self.ser_stderr < 0.0 or self.rate_stderr < 0.0:
            raise ValueError("stderr must be >= 0")


@dataclass(frozen=True)
class GainEstimate:
    diversity: float
    array_gain: float
    fit: LogLogFit


class FullCsitBeamforming:
    """h / ||h||; snr = ||h||^2 P, no feedback."""

    def __init__(self, t: int):
        self.t = t
        self.quantizer_id = "bf-full"

    def snr_bits(self, H: np.ndarray, P: float):
        snr = np.sum(np.abs(H) ** 2, axis=1) * P
        return snr, np.zeros(len(H))

    def conditioned(self, Hbar: np.ndarray, P: float):
        n = len(Hbar)
        return np.full(n, bpsk_mrc_ser(self.t, P)), np.zeros(n), 0.0


class FixedLengthBeamforming:
    """Nearest-codeword encoder; always sends the full index."""

    def __init__(self, book: BeamformingCodebook):
        self.book = book
        self.t = book.t
        self.bits = max(1, (len(book) - 1).bit_length())
        self.quantizer_id = "bf-flq"

    def snr_bits(self, H: np.ndarray, P: float):
        snr = self.book.max_correlation_sq(H) * P
        return snr, np.full(len(H), float(self.bits))

    def conditioned(self, Hbar: np.ndarray, P: float):
        c = self.book.max_correlation_sq(Hbar)
        return bpsk_mrc_ser(self.t, c * P), np.full(len(Hbar), float(self.bits)), 0.0


class VariableLengthBeamforming:
    """Short codeword "0" when every codeword clears beta = (t+1) ln P.

    In radial mode the conditional SER is reported as the fixed-length value
    plus half the rigorous gap bracket: the vlq differs from the flq only on
    the short branch, where both SNRs exceed beta, so the per-direction gap
    lies in [0, Q(sqrt(2 beta)) Pr(short | hbar)].  The half-width
    Q(sqrt(2 beta))/2 <= P^{-(t+1)}/4 is folded into the stderr.
    """

    def __init__(self, spec: VlqBeamformingSpec):
        self.spec = spec
        self.t = spec.codebook.t
        self.quantizer_id = "bf-vlq"

    def snr_bits(self, H: np.ndarray, P: float):
        book = self.spec.codebook
        snr_all = np.abs(H @ book.vectors.conj().T) ** 2 * P
        short = np.min(snr_all, axis=1) >= self.spec.beta(P)
        snr = np.where(short, snr_all[:, 0], np.max(snr_all, axis=1))
        bits = np.where(short, 1.0, 1.0 + self.spec.index_bits)
        return snr, bits

    def conditioned(self, Hbar: np.ndarray, P: float):
        book = self.spec.codebook
        corr = np.abs(Hbar @ book.vectors.conj().T) ** 2
        c_max = np.max(corr, axis=1)
        c_min = np.min(corr, axis=1)
        beta = self.spec.beta(P)
        p_short = gamma_tail(self.t, beta / (np.maximum(c_min, 1e-300) * P))
        gap = q_function(math.sqrt(2.0 * beta))
        ser = bpsk_mrc_ser(self.t, c_max * P) + 0.5 * gap * p_short
        rate = 1.0 + self.spec.index_bits * (1.0 - p_short)
        return ser, rate, 0.5 * gap


class FullCsitPrecoding:
    """Rank-1 projector h h^dagger / ||h||^2; snr = ||h||^2 P / r."""

    def __init__(self, t: int, r: Fraction = Fraction(1)):
        self.t = t
        self.r = float(r)
        self.quantizer_id = "pc-full"

    def snr_bits(self, H: np.ndarray, P: float):
        snr = np.sum(np.abs(H) ** 2, axis=1) * P / self.r
        return snr, np.zeros(len(H))

    def conditioned(self, Hbar: np.ndarray, P: float):
        n = len(Hbar)
        return np.full(n, bpsk_mrc_ser(self.t, P / self.r)), np.zeros(n), 0.0


class OpenLoopPrecoding:
    """Identity precoder I/sqrt(t); snr = ||h||^2 P / (r t), no feedback."""

    def __init__(self, t: int, r: Fraction = Fraction(1)):
        self.t = t
        self.r = float(r)
        self.quantizer_id = "open-loop"

    def snr_bits(self, H: np.ndarray, P: float):
        snr = np.sum(np.abs(H) ** 2, axis=1) * P / (self.r * self.t)
        return snr, np.zeros(len(H))

    def conditioned(self, Hbar: np.ndarray, P: float):
        n = len(Hbar)
        return np.full(n, bpsk_mrc_ser(self.t, P / (self.r * self.t))), np.zeros(n), 0.0


class VariableLengthPrecoding:
    """Identity precoder when ||h||^2 P >= t/delta, else nearest codeword.

    Radial mode splits the magnitude integral at the branch threshold
    x0 = t/(delta P).  The short-branch tail integral is direction-free
    (one quadrature per P); the long-branch head F(s) - U(s, x0), with
    s = c_max P / r, is evaluated through a per-P interpolation table of
    the tail integral U over the narrow range s in [(1-delta) P/r, P/r].
    The feedback rate conditioned on the direction is exact and constant.
    """

    def __init__(self, spec: VlqPrecodingSpec, quad: QuadratureSpec | None = None):
        self.spec = spec
        self.t = spec.codebook.t
        self.r = float(spec.r)
        self.quantizer_id = "pc-vlq"
        self._quad = quad or QuadratureSpec(relative_tolerance=1e-9)
        self._tables: dict[float, tuple] = {}

    def snr_bits(self, H: np.ndarray, P: float):
        book = self.spec.codebook.beamforming
        norm2 = np.sum(np.abs(H) ** 2, axis=1)
        short = norm2 * P >= self.spec.threshold
        c = book.max_correlation_sq(H)
        snr = np.where(short, norm2 * P / (self.t * self.r), c * P / self.r)
        bits = np.where(short, 1.0, 1.0 + self.spec.index_bits)
        return snr, bits

    def prepare(self, P: float) -> None:
        """Precompute the per-P quadrature table (call before chunked use)."""
        if P in self._tables:
            return
        t, r = self.t, self.r
        x0 = self.spec.threshold / P
        tail_short = integrate_gamma_weighted(
            lambda x: q_function(np.sqrt(2.0 * x * P / (t * r))), t, self._quad, lower=x0
        )
        s_lo = (1.0 - self.spec.delta) * P / r
        s_hi = P / r
        s_grid = np.geomspace(s_lo, s_hi, 33)
        tail = np.array(
            [
                integrate_gamma_weighted(
                    lambda x, s=s: q_function(np.sqrt(2.0 * x * s)), t, self._quad, lower=x0
                )
                for s in s_grid
            ]
        )
        self._tables[P] = (np.log(s_grid), np.log(np.maximum(tail, 1e-300)), tail_short)

    def conditioned(self, Hbar: np.ndarray, P: float):
        self.prepare(P)
        log_s_grid, log_tail, tail_short = self._tables[P]
        book = self.spec.codebook.beamforming
        c = np.clip(book.max_correlation_sq(Hbar), 1.0 - self.spec.delta, 1.0)
        s = c * P / self.r
        tail_long = np.exp(np.interp(np.log(s), log_s_grid, log_tail))
        ser = np.maximum(bpsk_mrc_ser(self.t, s) - tail_long, 0.0) + tail_short
        x0 = self.spec.threshold / P
        rate = np.full(len(Hbar), 1.0 + self.spec.index_bits * (1.0 - gamma_tail(self.t, x0)))
        return ser, rate, 0.0


def ser_full_analytic(
    t: int, P: float, r: Fraction | float = 1, quad: QuadratureSpec | None = None
) -> float:
    """E[Q(sqrt(2 ||h||^2 P / r))] by Gamma(t,1)-weighted quadrature."""
    if t < 1 or P <= 0.0:
        raise ValueError("need t >= 1 and P > 0")
    r = float(r)
    if not 0.0 < r <= 1.0:
        raise ValueError("r must be in (0, 1]")
    quad = quad or QuadratureSpec(relative_tolerance=1e-10)
    return integrate_gamma_weighted(lambda x: q_function(np.sqrt(2.0 * x * P / r)), t, quad)


def _chunk_bounds(samples: int, chunk: int = _CHUNK):
    return [(i, min(i + chunk, samples)) for i in range(0, samples, chunk)]


def _chunk_task(specs, P, stream, p_idx, c_idx, n, conditioning):
    """Per-chunk raw moments for every spec; identical for any worker layout."""
    t = specs[0].t
    H = sample_channels(stream.child(p_idx, c_idx), t, n)
    out = []
    if conditioning == "radial":
        Hbar = H / np.linalg.norm(H, axis=1, keepdims=True)
        for spec in specs:
            ser_v, rate_v, hw = spec.conditioned(Hbar, P)
            out.append(
                (
                    float(np.sum(ser_v)),
                    float(np.sum(ser_v**2)),
                    float(np.sum(rate_v)),
                    float(np.sum(rate_v**2)),
                    hw,
                )
            )
    else:
        for spec in specs:
            snr, bits = spec.snr_bits(H, P)
            ser_v = q_function(np.sqrt(2.0 * snr))
            out.append(
                (
                    float(np.sum(ser_v)),
                    float(np.sum(ser_v**2)),
                    float(np.sum(bits)),
                    float(np.sum(bits**2)),
                    0.0,
                )
            )
    return out


def _mean_stderr(s1: float, s2: float, n: int):
    mean = s1 / n
    var = max(s2 - s1 * s1 / n, 0.0) / max(n - 1, 1)
    return mean, math.sqrt(var / n)


def ser_rate_sweep(
    specs,
    P_grid,
    samples: int,
    stream: RngStream,
    *,
    workers: int = 1,
    conditioning: str = "radial",
) -> list:
    """SER and feedback-rate records for every (spec, P) pair.

    All specs share the channel draws at each grid point (common random
    numbers).  Chunks are a fixed partition of the sample index range with
    per-chunk substreams, and per-chunk sums are combined with compensated
    summation in index order, so the result is bit-identical for any
    worker count.
    """
    specs = list(specs)
    P_grid = [float(P) for P in P_grid]
    if not P_grid or min(P_grid) <= 0.0:
        raise ValueError("P grid must be nonempty and positive")
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if conditioning not in ("none", "radial"):
        raise ValueError("conditioning must be 'none' or 'radial'")
    if len({s.t for s in specs}) != 1:
        raise ValueError("all specs must share the antenna count")
    bounds = _chunk_bounds(samples)
    records = []
    for p_idx, P in enumerate(P_grid):
        for spec in specs:
            if hasattr(spec, "prepare") and conditioning == "radial":
                spec.prepare(P)
        tasks = [
            (p_idx, c_idx, hi - lo) for c_idx, (lo, hi) in enumerate(bounds)
        ]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(
                    pool.map(
                        lambda a: _chunk_task(specs, P, stream, a[0], a[1], a[2], conditioning),
                        tasks,
                    )
                )
        else:
            results = [
                _chunk_task(specs, P, stream, pi, ci, n, conditioning) for pi, ci, n in tasks
            ]
        for j, spec in enumerate(specs):
            s1 = math.fsum(r[j][0] for r in results)
            s2 = math.fsum(r[j][1] for r in results)
            r1 = math.fsum(r[j][2] for r in results)
            r2 = math.fsum(r[j][3] for r in results)
            hw = max(r[j][4] for r in results)
            ser, ser_se = _mean_stderr(s1, s2, samples)
            rate, rate_se = _mean_stderr(r1, r2, samples)
            records.append(
                SweepRecord(
                    quantizer_id=spec.quantizer_id,
                    P=P,
                    ser=min(ser, 0.5),
                    ser_stderr=ser_se + hw,
                    rate=rate,
                    rate_stderr=rate_se,
                    samples=samples,
                    seed=stream.master_seed,
                )
            )
    return records


def estimate_gains(records, top_decades: int = 2) -> GainEstimate:
    """Diversity and array gain from the top decades of a sweep.

    Fits ln SER against ln P; diversity is minus the slope and the array
    gain is 1/(SER * P^diversity) at the largest grid point.
    """
    recs = sorted(records, key=lambda r: r.P)
    if len(recs) < 3:
        raise ValueError("need at least 3 records")
    p_max = recs[-1].P
    span = math.log10(p_max / recs[0].P)
    if span < top_decades:
        raise ValueError(f"grid spans {span:.2f} decades < requested {top_decades}")
    cut = p_max / 10.0**top_decades
    top = [r for r in recs if r.P >= cut * (1.0 - 1e-12)]
    if len(top) < 3:
        raise ValueError("fewer than 3 records in the top decades")
    fit = fit_loglog([(r.P, r.ser) for r in top])
    d = -fit.slope
    g = 1.0 / (recs[-1].ser * p_max**d)
    return GainEstimate(diversity=d, array_gain=g, fit=fit)


def paired_compare(
    spec_a,
    spec_b,
    P: float,
    samples: int,
    stream: RngStream,
    *,
    conditioning: str = "none",
):
    """Pathwise comparison of conditional SERs on identical channel draws.

    Returns (mean-gap, gap-stderr, fraction-A-dominates, max-violation)
    where the gap is SER_A - SER_B per draw and max-violation is the most
    negative gap observed (0.0 when A dominates everywhere).
    """
    if spec_a.t != spec_b.t:
        raise ValueError("specs must share the antenna count")
    bounds = _chunk_bounds(samples)
    s1 = []
    s2 = []
    dom = 0
    worst = 0.0
    for c_idx, (lo, hi) in enumerate(bounds):
        H = sample_channels(stream.child(0, c_idx), spec_a.t, hi - lo)
        if conditioning == "radial":
            Hbar = H / np.linalg.norm(H, axis=1, keepdims=True)
            va, _, _ = spec_a.conditioned(Hbar, P)
            vb, _, _ = spec_b.conditioned(Hbar, P)
        else:
            snr_a, _ = spec_a.snr_bits(H, P)
            snr_b, _ = spec_b.snr_bits(H, P)
            va = q_function(np.sqrt(2.0 * snr_a))
            vb = q_function(np.sqrt(2.0 * snr_b))
        gap = va - vb
        s1.append(float(np.sum(gap)))
        s2.append(float(np.sum(gap**2)))
        dom += int(np.count_nonzero(gap >= 0.0))
        worst = min(worst, float(np.min(gap)))
    mean, se = _mean_stderr(math.fsum(s1), math.fsum(s2), samples)
    return mean, se, dom / samples, worst


def _format(x: float) -> str:
    return repr(float(x))


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["quantizer", "P_dB", "P_linear", "ser", "ser_stderr", "rate", "rate_stderr", "samples", "seed"]
        )
        for r in records:
            w.writerow(
                [
                    r.quantizer_id,
                    _format(10.0 * math.log10(r.P)),
                    _format(r.P),
                    _format(r.ser),
                    _format(r.ser_stderr),
                    _format(r.rate),
                    _format(r.rate_stderr),
                    r.samples,
                    r.seed,
                ]
            )


def write_records_json(records, path) -> None:
    doc = [
        {
            "quantizer": r.quantizer_id,
            "P_dB": 10.0 * math.log10(r.P),
            "P_linear": r.P,
            "ser": r.ser,
            "ser_stderr": r.ser_stderr,
            "rate": r.rate,
            "rate_stderr": r.rate_stderr,
            "samples": r.samples,
            "seed": r.seed,
        }
        for r in records
    ]
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
