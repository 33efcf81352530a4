"""Orthogonal design identities and the symbol-level detection oracle."""

import math
from fractions import Fraction

import numpy as np
import pytest

from vlqsim.channel import RngStream
from vlqsim.numerics import q_function
from vlqsim.stbc import ostbc_generator, simulate_symbol_mc


class TestDescriptors:
    def test_alamouti_shape_and_rate(self):
        code = ostbc_generator(2)
        assert (code.t, code.n, code.k) == (2, 2, 2)
        assert code.r == Fraction(1)

    def test_rate_three_quarters(self):
        for t in (3, 4):
            code = ostbc_generator(t)
            assert (code.n, code.k) == (4, 3)
            assert code.r == Fraction(3, 4)

    def test_unsupported_t(self):
        for t in (1, 5):
            with pytest.raises(ValueError):
                ostbc_generator(t)

    def test_alamouti_example(self):
        code = ostbc_generator(2)
        S = code.generator(np.array([1.0, 1.0j]))
        assert np.array_equal(S, np.array([[1.0, 1.0j], [1.0j, 1.0]]))
        assert np.allclose(S.conj().T @ S, 2.0 * np.eye(2))

    def test_bpsk_identity_exact(self):
        code = ostbc_generator(4)
        for s in ([1, 1, 1], [1, -1, 1], [-1, -1, -1]):
            S = code.generator(np.array(s, dtype=float))
            assert np.array_equal(S.conj().T @ S, 3.0 * np.eye(4))

    def test_orthogonality_random_complex(self):
        gen = np.random.default_rng(0)
        for t in (2, 3, 4):
            code = ostbc_generator(t)
            for _ in range(1000):
                s = gen.standard_normal(code.k) + 1j * gen.standard_normal(code.k)
                S = code.generator(s)
                defect = np.max(np.abs(S.conj().T @ S - np.sum(np.abs(s) ** 2) * np.eye(t)))
                assert defect < 1e-12


class TestSymbolSimulation:
    def test_noiseless_limit(self):
        code = ostbc_generator(2)
        h = np.array([1.0, 1.0j])
        ser, _ = simulate_symbol_mc(np.eye(2) / math.sqrt(2), h, 1e4, code, 10000, RngStream(7))
        assert ser == 0.0

    def test_matches_conditional_formula_alamouti(self):
        code = ostbc_generator(2)
        h = np.array([0.5 + 0.3j, -0.2 + 0.8j])
        X = np.eye(2) / math.sqrt(2)
        P = 10.0
        snr = np.linalg.norm(X @ h) ** 2 * P / float(code.r)
        want = q_function(math.sqrt(2.0 * snr))
        ser, se = simulate_symbol_mc(X, h, P, code, 500000, RngStream(5))
        assert abs(ser - want) <= 3.0 * se

    def test_matches_conditional_formula_projector(self):
        # rank-1 precoder onto the channel direction: the matched direction
        # collects the whole channel norm
        code = ostbc_generator(4)
        gen = np.random.default_rng(3)
        h = gen.standard_normal(4) + 1j * gen.standard_normal(4)
        x = h / np.linalg.norm(h)
        X = np.outer(x, x.conj())
        P = 0.5
        snr = np.linalg.norm(X @ h) ** 2 * P / float(code.r)
        want = q_function(math.sqrt(2.0 * snr))
        ser, se = simulate_symbol_mc(X, h, P, code, 400000, RngStream(6))
        assert abs(ser - want) <= 3.0 * se
        assert snr == pytest.approx(np.linalg.norm(h) ** 2 * P / float(code.r))

    def test_three_antenna_code(self):
        code = ostbc_generator(3)
        h = np.array([0.4, -0.6 + 0.2j, 0.9j])
        X = np.eye(3) / math.sqrt(3)
        P = 4.0
        snr = np.linalg.norm(X @ h) ** 2 * P / float(code.r)
        want = q_function(math.sqrt(2.0 * snr))
        ser, se = simulate_symbol_mc(X, h, P, code, 400000, RngStream(8))
        assert abs(ser - want) <= 3.0 * se

    def test_determinism(self):
        code = ostbc_generator(2)
        h = np.array([1.0, -0.5j])
        a = simulate_symbol_mc(np.eye(2) / math.sqrt(2), h, 5.0, code, 20000, RngStream(9))
        b = simulate_symbol_mc(np.eye(2) / math.sqrt(2), h, 5.0, code, 20000, RngStream(9))
        assert a == b

    def test_rejects_bad_arguments(self):
        code = ostbc_generator(2)
        with pytest.raises(ValueError):
            simulate_symbol_mc(np.eye(2), np.array([1.0, 0.0]), 1.0, code, 0, RngStream(1))
        with pytest.raises(ValueError):
            simulate_symbol_mc(np.eye(3), np.array([1.0, 0.0]), 1.0, code, 10, RngStream(1))
