"""Complex orthogonal space-time block codes and a symbol-level oracle.

The symbol-level Monte Carlo here exists to validate the semi-analytic
conditional-SER path used everywhere else; it counts actual detection
errors on BPSK blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .channel import RngStream

__all__ = ["OstbcDescriptor", "ostbc_generator", "simulate_symbol_mc"]


@dataclass(frozen=True)
class OstbcDescriptor:
    t: int  # transmit antennas
    n: int  # time slots per block
    k: int  # complex symbols per block
    r: Fraction  # space-time rate k/n
    generator: Callable[[np.ndarray], np.ndarray]  # k symbols -> (n, t) matrix

    def __post_init__(self):
        if self.r != Fraction(self.k, self.n):
            raise ValueError("rate must equal k/n")


def _alamouti(s: np.ndarray) -> np.ndarray:
    s1, s2 = s
    return np.array([[s1, s2], [-np.conj(s2), np.conj(s1)]])


def _rate34(s: np.ndarray, t: int) -> np.ndarray:
    s1, s2, s3 = s
    S = np.array(
        [
            [s1, s2, s3, 0.0],
            [-np.conj(s2), np.conj(s1), 0.0, s3],
            [-np.conj(s3), 0.0, np.conj(s1), -s2],
            [0.0, -np.conj(s3), np.conj(s2), s1],
        ]
    )
    return S[:, :t]


def ostbc_generator(t: int) -> OstbcDescriptor:
    """Standard complex orthogonal design for t antennas.

    t = 2 is Alamouti (rate 1); t in {3, 4} use the rate-3/4 design (3
    symbols over 4 slots; the 3-antenna code drops the last column).
    """
    if t == 2:
        return OstbcDescriptor(t=2, n=2, k=2, r=Fraction(1), generator=_alamouti)
    if t in (3, 4):
        return OstbcDescriptor(
            t=t, n=4, k=3, r=Fraction(3, 4), generator=lambda s, _t=t: _rate34(s, _t)
        )
    raise ValueError(f"unsupported antenna count {t}; expected 2, 3 or 4")


def simulate_symbol_mc(
    X: np.ndarray,
    h: np.ndarray,
    P: float,
    code: OstbcDescriptor,
    blocks: int,
    stream: RngStream,
):
    """Empirical BPSK SER through y = S X h sqrt(P/r) + n.

    BPSK symbols are real, so the design is real-linear in the symbol
    vector: S(s) g = sum_k s_k M_k g with M_k = S(e_k).  Orthogonality
    makes the matched-filter statistics Re(v_k^dagger y) independent with
    per-symbol SNR ||X h||^2 P / r, and the decoupled sign detector is ML.
    Returns (ser, stderr).
    """
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    X = np.atleast_2d(np.asarray(X, dtype=complex))
    h = np.asarray(h, dtype=complex)
    if X.shape != (code.t, code.t):
        raise ValueError("X must be t x t")
    g = X @ h
    # v_k = M_k g, stacked (k, n)
    V = np.stack([code.generator(np.eye(code.k)[j]) @ g for j in range(code.k)])
    amp = math.sqrt(P / float(code.r))
    gen = stream.generator()
    errors = 0
    total = 0
    chunk = 1 << 16
    remaining = blocks
    while remaining > 0:
        m = min(remaining, chunk)
        remaining -= m
        s = gen.integers(0, 2, size=(m, code.k)) * 2.0 - 1.0
        noise = (gen.standard_normal((m, code.n)) + 1j * gen.standard_normal((m, code.n))) / math.sqrt(2.0)
        y = amp * (s.astype(complex) @ V) + noise
        stat = (y @ V.conj().T).real
        errors += int(np.count_nonzero(np.sign(stat) != s))
        total += m * code.k
    p = errors / total
    stderr = math.sqrt(max(p * (1.0 - p), 1.0 / total) / total)
    return p, stderr
