import math
from fractions import Fraction

import numpy as np
import pytest

from qotpfhe.qsim import X, Y, Z
from qotpfhe.su2core import (
    IDENTITY, SIGMA1, SIGMA2, SIGMA3, DomainError, FixedFrac, phase_distance, quat_inv,
    quat_mul, quat_norm, quat_to_matrix, random_unit_quat, spectral_distance,
    su2_from_unitary, trunc_raw, truncate_k, truncate_k_raw, unitary_approx,
    unitary_approx_batch,
)


def test_sigma_matrices_are_i_times_paulis():
    assert np.allclose(quat_to_matrix(SIGMA1), 1j * X)
    assert np.allclose(quat_to_matrix(SIGMA2), 1j * Z)
    assert np.allclose(quat_to_matrix(SIGMA3), 1j * Y)
    assert np.allclose(quat_to_matrix(IDENTITY), np.eye(2))


def test_matrix_layout():
    t = (0.1, 0.2, 0.3, 0.4)
    want = np.array([[0.1 + 0.3j, 0.4 + 0.2j], [-0.4 + 0.2j, 0.1 - 0.3j]])
    assert np.allclose(quat_to_matrix(t), want)


def test_exact_arithmetic_on_fractions():
    a = (Fraction(1, 2), Fraction(1, 2), Fraction(1, 2), Fraction(1, 2))
    assert quat_mul(a, quat_inv(a)) == (1, 0, 0, 0)


def test_associativity(rng):
    for _ in range(1000):
        a, b, c = (random_unit_quat(rng) for _ in range(3))
        lhs = quat_to_matrix(quat_mul(quat_mul(a, b), c))
        rhs = quat_to_matrix(quat_mul(a, quat_mul(b, c)))
        assert np.abs(lhs - rhs).max() < 1e-10


def test_inverse_is_adjoint(rng):
    t = random_unit_quat(rng)
    assert np.allclose(quat_to_matrix(quat_inv(t)), quat_to_matrix(t).conj().T)


def test_su2_from_unitary_recovers_up_to_sign(rng):
    t = random_unit_quat(rng)
    u = np.exp(0.7j) * quat_to_matrix(t)
    back = su2_from_unitary(u)
    assert min(math.dist(back, t), math.dist(back, tuple(-x for x in t))) < 1e-12


def test_unit_vector_unchanged():
    t = (0.6, 0.0, 0.8, 0.0)
    assert unitary_approx(t) == t


def test_long_vector_fills_greedily():
    assert unitary_approx((0.5, 0.75, 0.5, 0.5)) == (0.5, 0.75, math.sqrt(3) / 4, 0)


def test_short_vector_adjusts_last():
    assert unitary_approx((0.5, 0.5, 0.5, 0)) == (0.5, 0.5, 0.5, 0.5)
    out = unitary_approx((0.5, 0.5, 0.5, -0.1))
    assert out[3] == -0.5


def test_unitary_approx_domain():
    with pytest.raises(DomainError):
        unitary_approx((2.5, 0, 0, 0))


def test_batch_matches_scalar(rng):
    rows = rng.normal(size=(500, 4))
    rows /= np.linalg.norm(rows, axis=1)[:, None]
    rows *= rng.uniform(0.9, 1.1, size=(500, 1))
    batch = unitary_approx_batch(rows)
    for r, b in zip(rows, batch):
        assert np.allclose(unitary_approx(tuple(r)), b, atol=1e-15)


def test_truncation_rounds_toward_zero():
    # 0.1011 0111... -> 0.1011 at four bits, sign kept on the magnitude
    x = 0.5 + 0.125 + 0.0625 + 2 ** -6
    assert truncate_k((x, -x, 0, 1), 4) == (0.6875, -0.6875, 0.0, 1.0)
    assert truncate_k_raw((x, -x, 0, 1), 4) == (11, -11, 0, 16)
    assert truncate_k((1, 0, 0, 0), 8) == (1.0, 0.0, 0.0, 0.0)


def test_truncation_error_bound(rng):
    for k in (4, 10, 16):
        for _ in range(200):
            t = random_unit_quat(rng)
            assert max(abs(a - b) for a, b in zip(t, truncate_k(t, k))) <= 2.0 ** -k


def test_truncate_then_approx_path(rng):
    for k in range(8, 25, 4):
        for _ in range(200):
            t = random_unit_quat(rng)
            tp = unitary_approx(truncate_k(t, k))
            d = spectral_distance(quat_to_matrix(t), quat_to_matrix(tp))
            assert d <= 4 / math.sqrt(2 ** k)


def test_spectral_distance_equals_vector_distance(rng):
    a, b = random_unit_quat(rng), random_unit_quat(rng)
    assert abs(spectral_distance(quat_to_matrix(a), quat_to_matrix(b)) - math.dist(a, b)) < 1e-12


def test_spectral_distance_of_scaled_unitary(rng):
    u = quat_to_matrix(random_unit_quat(rng))
    assert abs(spectral_distance(2 * u, u) - 1.0) < 1e-12
    assert spectral_distance(u, u) == 0


def test_phase_distance_ignores_global_phase(rng):
    u = quat_to_matrix(random_unit_quat(rng))
    assert phase_distance(np.exp(1.3j) * u, u) < 1e-12


def test_fixed_frac_encoding():
    f = FixedFrac.from_value(-0.75, 4)
    assert f.raw == -12 and f.value == Fraction(-3, 4)
    assert FixedFrac.from_raw(16, 4).bits == (1, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        FixedFrac(1, (0, 0, 0), 2)
    with pytest.raises(ValueError):
        FixedFrac(0, (1, 0, 1), 2)


def test_trunc_raw_negative():
    assert trunc_raw(-0.3, 3) == -2
    assert trunc_raw(Fraction(-1, 3), 4) == -5


def test_norm():
    assert quat_norm((Fraction(3, 5), 0, Fraction(4, 5), 0)) == 1.0
