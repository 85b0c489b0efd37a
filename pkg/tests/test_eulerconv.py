import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from qotpfhe import hebackend as hb
from qotpfhe.eulerconv import (
    EulerAngles, FixedPoint, arg_over_pi_mod2, bits_to_fraction, canonicalize, disc_center,
    disc_index, euler_from_quat_approx, euler_to_matrix, euler_to_quat, fp_inverse, fp_sqrt,
    fraction_to_bits, he_euler_from_quat, quat_to_euler_exact, taylor_ln_bound,
    taylor_ln_eval,
)
from qotpfhe.qsim import X, Z
from qotpfhe.su2core import (
    DomainError, phase_distance, quat_to_matrix, random_unit_quat, truncate_k,
)

R2 = 1 / math.sqrt(2)


def test_identity_angles():
    assert np.allclose(euler_to_matrix((0, 0, 0)), np.eye(2))


def test_quarter_beta():
    want = np.array([[R2, -R2], [R2, R2]])
    assert np.allclose(euler_to_matrix((0, Fraction(1, 4), 0)), want)


def test_hadamard_angles():
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    assert phase_distance(euler_to_matrix((0, Fraction(1, 4), Fraction(1, 2))), h) < 1e-12


def test_quarter_quarter_three_quarter_matches_quaternion():
    u = euler_to_matrix((0.25, 0.25, 0.75))
    assert phase_distance(u, quat_to_matrix((R2, R2, 0, 0))) < 1e-12


def test_exact_conversion_examples():
    e, ph = quat_to_euler_exact((1, 0, 0, 0))
    assert e.as_tuple() == (0, 0, 0) and abs(ph - 1) < 1e-15
    e, _ = quat_to_euler_exact((R2, R2, 0, 0))
    assert np.allclose(e.as_tuple(), (0.25, 0.25, 0.75))
    # U = diag(i, -i) = i R_{1/2}
    e, ph = quat_to_euler_exact((0, 0, 1, 0))
    assert e.beta == 0 and math.isclose((e.alpha + e.gamma) % 1, 0.5)
    assert np.allclose(euler_to_matrix(e), ph * quat_to_matrix((0, 0, 1, 0)))


def _near_degenerate(rng):
    out = []
    for eps in (0.0, 1e-4):
        for _ in range(10):
            v = rng.normal(size=4)
            v[0] *= eps
            v[2] *= eps
            out.append(tuple(v / np.linalg.norm(v)))
            w = rng.normal(size=4)
            w[1] *= eps
            w[3] *= eps
            out.append(tuple(w / np.linalg.norm(w)))
    return out


def test_exact_roundtrip(rng):
    quats = [random_unit_quat(rng) for _ in range(1000)] + _near_degenerate(rng)
    for t in quats:
        e, ph = quat_to_euler_exact(t)
        assert np.abs(euler_to_matrix(e) - ph * quat_to_matrix(t)).max() < 1e-10


def test_euler_to_quat_inverts(rng):
    t = random_unit_quat(rng)
    e, _ = quat_to_euler_exact(t)
    assert phase_distance(quat_to_matrix(euler_to_quat(e)), quat_to_matrix(t)) < 1e-10


def test_conjugation_by_paulis(rng):
    for _ in range(200):
        a0, b0, g0 = (Fraction(int(x), 256) for x in rng.integers(0, 256, size=3))
        b0 = min(b0, Fraction(1, 2))
        for a in (0, 1):
            for b in (0, 1):
                p = np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)
                new = canonicalize((-1) ** a * a0, (-1) ** (a + b) * b0, (-1) ** a * g0)
                lhs = euler_to_matrix(new) @ p
                rhs = p @ euler_to_matrix((a0, b0, g0))
                assert phase_distance(lhs, rhs) < 1e-10


def test_angles_validation():
    with pytest.raises(ValueError):
        EulerAngles(0, Fraction(3, 4), 0)
    with pytest.raises(ValueError):
        EulerAngles(Fraction(1, 3), 0, 0, bits=4)
    e = EulerAngles.from_bits((1, 0), (0, 1), (1, 1))
    assert e.as_tuple() == (Fraction(1, 2), Fraction(1, 4), Fraction(3, 4))
    assert e.to_bits() == ((1, 0), (0, 1), (1, 1))


def test_bit_helpers():
    assert bits_to_fraction((1, 0, 1)) == Fraction(5, 8)
    assert fraction_to_bits(Fraction(5, 8), 4) == (1, 0, 1, 0)
    with pytest.raises(ValueError):
        fraction_to_bits(Fraction(1, 3), 4)


def test_disc_index_from_sign_bits():
    assert disc_index(1, 0) == 1
    assert disc_index(-1, 0) == 2
    assert disc_index(-0.5, -0.5) == 3
    assert disc_index(0.5, -0.5) == 4
    for s in (1, 2, 3, 4):
        c = disc_center(s)
        assert disc_index(c.real, c.imag) == s


def test_taylor_at_center_is_exact():
    assert abs(taylor_ln_eval(disc_center(1), 10, 1) - 1j * math.pi / 4) < 1e-15


def test_taylor_against_complex_log():
    for z, k in ((1, 200), (1j, 300), (0.6 + 0.8j, 150)):
        assert abs(taylor_ln_eval(z, k, 1) - cmath.log(z)) <= taylor_ln_bound(k)


def test_taylor_outside_disc():
    with pytest.raises(DomainError):
        taylor_ln_eval(-1, 20, 1)


def test_arg_examples():
    f = 48
    assert abs(float(arg_over_pi_mod2(FixedPoint.from_value(1, f), FixedPoint.from_value(0, f), 200))) < 1e-9
    d = float(arg_over_pi_mod2(FixedPoint.from_value(-1, f), FixedPoint.from_value(0, f), 200))
    assert min(abs(d - 1), abs(d + 1)) < 1e-9
    d = float(arg_over_pi_mod2(FixedPoint.from_value(0.6, f), FixedPoint.from_value(0.8, f), 300))
    assert abs(d - math.atan2(0.8, 0.6) / math.pi) <= 100 * (18 / 19) ** 300 + 1e-9


def test_arg_rejects_far_points():
    with pytest.raises(DomainError):
        arg_over_pi_mod2(FixedPoint.from_value(0.05, 20), FixedPoint.from_value(0, 20), 50)


def test_fp_inverse_examples():
    f = 60
    assert fp_inverse(FixedPoint.from_value(1, f), 3).value == 1
    r = fp_inverse(FixedPoint.from_value(0.5, f), 5)
    assert abs(float(r.value) - 2) <= 2 * 0.5 ** 64 + 5 * 2.0 ** (-f + 2)
    r = fp_inverse(FixedPoint.from_value(1.5, f), 5)
    assert abs(float(r.value) - 2 / 3) <= 2 / 3 * 0.5 ** 64 + 2 ** 7 * 2.0 ** -f
    with pytest.raises(DomainError):
        fp_inverse(FixedPoint.from_value(2, f), 3)


def test_fp_sqrt_examples():
    f = 60
    assert fp_sqrt(FixedPoint.from_value(1, f), 4).value == 1
    assert fp_sqrt(FixedPoint.from_value(0, f), 4).value == 0
    r = fp_sqrt(FixedPoint.from_value(0.25, f), 6)
    assert abs(float(r.value) - 0.5) <= 0.5 * (1 - 1 / 16) ** 128 + 2 ** 8 * 2.0 ** -f
    with pytest.raises(DomainError):
        fp_sqrt(FixedPoint.from_value(-0.1, f), 3)


def test_approx_examples():
    e = euler_from_quat_approx((1, 0, 0, 0), 64)
    assert e.as_tuple() == (0, 0, 0)
    e = euler_from_quat_approx(truncate_k((R2, R2, 0, 0), 16), 200)
    for got, want in zip(e.as_tuple(), (0.25, 0.25, 0.75)):
        assert abs(float(got) - want) < 1e-3
    for t in ((0, 1, 0, 0), (0, 0, 0, 1), (0, R2, 0, -R2)):
        e = euler_from_quat_approx(t, 200)
        assert phase_distance(euler_to_matrix(e), quat_to_matrix(t)) < 1e-3


def test_approx_error_shrinks_with_degree(rng):
    quats = [random_unit_quat(rng) for _ in range(20)]

    def worst(k):
        return max(phase_distance(euler_to_matrix(euler_from_quat_approx(t, k)),
                                  quat_to_matrix(t)) for t in quats)

    errs = [worst(k) for k in (16, 32, 128)]
    assert errs[0] > errs[2] and errs[2] < 1e-3


def test_homomorphic_matches_plaintext_bitwise(rng):
    degree, m = 16, 8
    chain = hb.keychain_gen(16, 0, 1, "mock", rng=rng, n_slots=2)
    b = hb.make_backend(chain)
    f = degree + 8
    quats = [(1, 0, 0, 0), (0, 1, 0, 0), (R2, 0, 0, -R2)] + [random_unit_quat(rng) for _ in range(30)]
    for t in quats:
        tt = truncate_k(t, 16)
        enc = [b.word_enc(int(round(x * (1 << f))), f + 26, f) for x in tt]
        got = he_euler_from_quat(enc, degree, b, m)
        bits = tuple(tuple(b.dec(x) for x in word) for word in got)
        assert bits == euler_from_quat_approx(tt, degree, m).to_bits()
