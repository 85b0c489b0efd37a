"""Euler angles of SU(2) and the fixed-point kernels that compute them.

Scaled Euler angles (alpha, beta, gamma) describe
    U(alpha, beta, gamma) = R_alpha T_beta R_gamma,
    R_a = diag(1, e^{2 pi i a}),  T_b = [[cos pi b, -sin pi b], [sin pi b, cos pi b]].

The quaternion -> Euler conversion is written once, as a circuit over an
abstract "ops" object (fixed-point words plus a few bit operations).
PlainOps runs it on Python integers; a backend's ops object runs the very
same sequence of operations on ciphertexts, so the two agree bit for bit.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from .su2core import DomainError, quat_to_matrix, trunc_raw

DISC_RADIUS = 0.9
DEFAULT_TAYLOR_DEGREE = 256
DEFAULT_ANGLE_BITS = 16
SQRT_ITERS = 50
INV_ITERS = 30
# squares below 2^-40 mean cos or sin of pi*beta is below 2^-20
DEGENERATE_SQ_EXP = 40


# ---------------------------------------------------------------- angles

@dataclass(frozen=True)
class EulerAngles:
    """Angles as fractions of a full turn; beta lies in [0, 1/2].

    Values are Fractions when they come from m-bit words, floats otherwise.
    """

    alpha: object
    beta: object
    gamma: object
    bits: int | None = None

    def __post_init__(self):
        if not (0 <= self.alpha < 1 and 0 <= self.gamma < 1):
            raise ValueError("alpha and gamma must lie in [0, 1)")
        if not 0 <= self.beta <= Fraction(1, 2):
            raise ValueError("beta must lie in [0, 1/2]")
        if self.bits is not None:
            scale = 1 << self.bits
            for v in (self.alpha, self.beta, self.gamma):
                if Fraction(v) * scale != int(Fraction(v) * scale):
                    raise ValueError(f"{v} is not a {self.bits}-bit fraction")

    @classmethod
    def from_bits(cls, alpha_bits, beta_bits, gamma_bits) -> "EulerAngles":
        """Build from MSB-first bit sequences of a common length."""
        m = len(alpha_bits)
        if len(beta_bits) != m or len(gamma_bits) != m:
            raise ValueError("angle words differ in length")
        return cls(bits_to_fraction(alpha_bits), bits_to_fraction(beta_bits),
                   bits_to_fraction(gamma_bits), m)

    def to_bits(self, m: int | None = None) -> tuple:
        m = self.bits if m is None else m
        if m is None:
            raise ValueError("angle precision unknown")
        return tuple(fraction_to_bits(v, m) for v in (self.alpha, self.beta, self.gamma))

    def as_tuple(self) -> tuple:
        return (self.alpha, self.beta, self.gamma)


def bits_to_fraction(bits) -> Fraction:
    """MSB-first bits b1 b2 ... -> sum b_j 2^-j."""
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return Fraction(v, 1 << len(bits))


def fraction_to_bits(x, m: int) -> tuple:
    """Exact m-bit fraction in [0, 1) -> MSB-first bits."""
    n = Fraction(x) * (1 << m)
    if n.denominator != 1 or not 0 <= n < (1 << m):
        raise ValueError(f"{x} is not an m-bit fraction in [0, 1)")
    n = int(n)
    return tuple((n >> (m - 1 - j)) & 1 for j in range(m))


def rot_r(a) -> np.ndarray:
    return np.diag([1.0, cmath.exp(2j * math.pi * float(a))])


def rot_t(b) -> np.ndarray:
    c, s = math.cos(math.pi * float(b)), math.sin(math.pi * float(b))
    return np.array([[c, -s], [s, c]], dtype=complex)


def euler_to_matrix(e) -> np.ndarray:
    a, b, g = e.as_tuple() if isinstance(e, EulerAngles) else e
    return rot_r(a) @ rot_t(b) @ rot_r(g)


def canonicalize(alpha, beta, gamma) -> tuple:
    """Reduce to alpha, gamma in [0,1) and beta in [0,1/2], up to global phase.

    T_{b+1} = -T_b takes beta mod 1, and beta in (1/2, 1) is traded for
    1 - beta with half a turn added to alpha and gamma.
    """
    alpha, beta, gamma = alpha % 1, beta % 1, gamma % 1
    if beta > Fraction(1, 2):
        beta = 1 - beta
        alpha = (alpha + Fraction(1, 2)) % 1
        gamma = (gamma + Fraction(1, 2)) % 1
    return alpha, beta, gamma


def _turn(x: float) -> float:
    """Angle in radians -> fraction of a turn in [0, 1)."""
    v = (x / (2 * math.pi)) % 1.0
    return 0.0 if v >= 1.0 else v


def quat_to_euler_exact(t) -> tuple:
    """Floating-point Euler angles of U_t and the phase p with U(e) = p U_t."""
    t1, t2, t3, t4 = (float(x) for x in t)
    c = math.hypot(t1, t3)
    s = math.hypot(t2, t4)
    beta = math.atan2(s, c) / math.pi
    thr = 2.0 ** -20
    if s < thr:
        alpha = _turn(2 * math.atan2(-t3, t1))
        gamma = 0.0
    elif c < thr:
        alpha = 0.0
        gamma = _turn(2 * math.atan2(t2, t4))
    else:
        alpha = _turn(math.atan2(t1 * t2 + t3 * t4, -t1 * t4 + t2 * t3))
        gamma = _turn(math.atan2(-t1 * t2 + t3 * t4, -(t1 * t4 + t2 * t3)))
    e = EulerAngles(alpha, min(beta, 0.5), gamma)
    u_t = quat_to_matrix(t)
    inner = np.trace(u_t.conj().T @ euler_to_matrix(e)) / 2
    phase = inner / abs(inner)
    return e, complex(phase)


def euler_to_quat(e) -> tuple:
    """Quaternion of U(e) / sqrt(det U(e)); the sign choice is arbitrary."""
    a, b, g = e.as_tuple() if isinstance(e, EulerAngles) else e
    u = euler_to_matrix((a, b, g))
    root = cmath.exp(1j * math.pi * (float(a) + float(g)))
    v = u / root
    return (v[0, 0].real, v[0, 1].imag, v[0, 0].imag, v[0, 1].real)


# ------------------------------------------------------- Taylor log, Arg

def disc_index(a, b) -> int:
    """Disc 1..4 chosen from the sign bits of a and b."""
    da, db = int(a < 0), int(b < 0)
    l = (da - db - 2 * da * db + 1) % 4
    return l if l else 4


_THETA_OVER_PI = {1: Fraction(1, 4), 2: Fraction(3, 4), 3: Fraction(-3, 4), 4: Fraction(-1, 4)}


def disc_center(s: int) -> complex:
    return cmath.exp(1j * math.pi * float(_THETA_OVER_PI[s]))


def taylor_ln_eval(z: complex, k: int, s: int) -> complex:
    """Degree-k Taylor polynomial of the principal log around disc center s."""
    if s not in _THETA_OVER_PI:
        raise ValueError("disc index must be 1..4")
    c = disc_center(s)
    if abs(z - c) >= DISC_RADIUS:
        raise DomainError(f"{z} lies outside disc {s}")
    w = z * c.conjugate() - 1
    h = complex((-1) ** (k - 1) / k)
    for n in range(k - 1, 0, -1):
        h = h * w + (-1) ** (n - 1) / n
    return 1j * math.pi * float(_THETA_OVER_PI[s]) + w * h


def taylor_ln_bound(k: int) -> float:
    return 76.0 * (18.0 / 19.0) ** k


# ------------------------------------------------------- fixed point

@dataclass(frozen=True)
class FixedPoint:
    """Two's-complement value raw / 2^frac."""

    raw: int
    frac: int

    @classmethod
    def from_value(cls, x, frac: int) -> "FixedPoint":
        return cls(trunc_raw(x, frac), frac)

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << self.frac)

    def __float__(self):
        return float(self.value)


class PlainOps:
    """Fixed-point words as Python ints wrapped to `width` bits; bits as 0/1."""

    def __init__(self, width: int, frac: int):
        if width <= frac + 1:
            raise ValueError("width must exceed frac + 1")
        self.width = width
        self.frac = frac
        self._mask = (1 << width) - 1

    def _wrap(self, x: int) -> int:
        x &= self._mask
        return x - (1 << self.width) if x >> (self.width - 1) else x

    def const(self, raw: int) -> int:
        return self._wrap(raw)

    def add(self, a, b):
        return self._wrap(a + b)

    def sub(self, a, b):
        return self._wrap(a - b)

    def neg(self, a):
        return self._wrap(-a)

    def mul(self, a, b):
        return self._wrap((a * b) >> self.frac)

    def mulc(self, a, c: int):
        return self._wrap((a * c) >> self.frac)

    def shr(self, a, s: int):
        return a >> s

    def sign(self, a) -> int:
        return int(a < 0)

    def select(self, sel, a0, a1):
        return a1 if sel else a0

    def bits(self, a, lo: int, n: int) -> list:
        return [(a >> (lo + i)) & 1 for i in range(n)]

    def bnot(self, x):
        return 1 - x

    def band(self, x, y):
        return x & y

    def bor(self, x, y):
        return x | y


def pipeline_width(frac: int) -> int:
    # 1/(cos*sin) reaches 2^22 near the degenerate threshold and the
    # degenerate-case garbage must not matter, so keep 25 integer bits
    return frac + 26


def _fp_inverse(ops, x, d: int):
    one = ops.const(1 << ops.frac)
    a = one
    e = ops.sub(one, x)
    for _ in range(d + 1):
        a = ops.mul(a, ops.add(one, e))
        e = ops.mul(e, e)
    return a


def _fp_sqrt(ops, x, d: int):
    one = ops.const(1 << ops.frac)
    three = ops.const(3 << ops.frac)
    a = x
    b = ops.sub(x, one)
    for _ in range(d):
        a = ops.mul(a, ops.sub(one, ops.shr(b, 1)))
        b = ops.shr(ops.mul(ops.mul(b, b), ops.sub(b, three)), 2)
    return a


def fp_inverse(x: FixedPoint, d: int) -> FixedPoint:
    """1/x for x in (0, 2) by d+1 coupled squaring steps."""
    if not 0 < x.raw < (2 << x.frac):
        raise DomainError("fp_inverse needs 0 < x < 2")
    ops = PlainOps(x.frac + d + 8, x.frac)
    return FixedPoint(_fp_inverse(ops, x.raw, d), x.frac)


def fp_sqrt(x: FixedPoint, d: int) -> FixedPoint:
    """sqrt(x) for x in [0, 1]."""
    if not 0 <= x.raw <= (1 << x.frac):
        raise DomainError("fp_sqrt needs 0 <= x <= 1")
    ops = PlainOps(x.frac + 8, x.frac)
    return FixedPoint(_fp_sqrt(ops, x.raw, d), x.frac)


@lru_cache(maxsize=None)
def _inv_pi_raw(frac: int) -> int:
    with mpmath.workprec(frac + 64):
        return int(mpmath.floor(mpmath.mpf(2) ** frac / mpmath.pi))


@lru_cache(maxsize=None)
def _center_raw(s: int, frac: int) -> tuple:
    h = math.isqrt(1 << (2 * frac - 1))  # floor(2^frac / sqrt 2)
    sr = -1 if s in (2, 3) else 1
    si = -1 if s in (3, 4) else 1
    return sr * h, si * h


def _coef_raw(n: int, frac: int) -> int:
    mag = (1 << frac) // n
    return mag if n % 2 else -mag


def _arg_disc(ops, a, b, degree: int, s: int):
    """Arg(a + bi)/pi from the Taylor log on disc s (not yet reduced mod 2)."""
    f = ops.frac
    cr, ci = _center_raw(s, f)
    wr = ops.sub(ops.add(ops.mulc(a, cr), ops.mulc(b, ci)), ops.const(1 << f))
    wi = ops.sub(ops.mulc(b, cr), ops.mulc(a, ci))
    hr = ops.const(_coef_raw(degree, f))
    hi = ops.const(0)
    for n in range(degree - 1, 0, -1):
        pr = ops.sub(ops.mul(wr, hr), ops.mul(wi, hi))
        pi_ = ops.add(ops.mul(wr, hi), ops.mul(wi, hr))
        hr = ops.add(pr, ops.const(_coef_raw(n, f)))
        hi = pi_
    im = ops.add(ops.mul(wr, hi), ops.mul(wi, hr))
    theta = _THETA_OVER_PI[s] * (1 << f)
    return ops.add(ops.mulc(im, _inv_pi_raw(f)), ops.const(int(theta)))


def _arg_four_discs(ops, a, b, degree: int):
    """Evaluate on all four discs and keep the one picked by the sign bits."""
    d = {s: _arg_disc(ops, a, b, degree, s) for s in (1, 2, 3, 4)}
    da, db = ops.sign(a), ops.sign(b)
    upper = ops.select(da, d[1], d[2])
    lower = ops.select(da, d[4], d[3])
    return ops.select(db, upper, lower)


def arg_over_pi_mod2(a: FixedPoint, b: FixedPoint, k: int) -> FixedPoint:
    """Arg(a + bi)/pi reduced to [-1, 1), with Taylor degree k."""
    if a.frac != b.frac:
        raise ValueError("operands differ in precision")
    z = complex(float(a), float(b))
    if abs(z - disc_center(disc_index(float(a), float(b)))) >= DISC_RADIUS:
        raise DomainError(f"{z} lies outside the disc chosen by its sign bits")
    f = a.frac
    ops = PlainOps(f + 8, f)
    d = _arg_four_discs(ops, ops.const(a.raw), ops.const(b.raw), k)
    # sign-extend the low f+1 bits: value mod 2 in [-1, 1)
    low = d & ((2 << f) - 1)
    if low >> f:
        low -= 2 << f
    return FixedPoint(low, f)


# ------------------------------------------------- quaternion -> Euler

def _round_turn_bits(ops, d, m: int) -> list:
    """Half of d (raw at frac f, value mod 2) as an m-bit turn, MSB first."""
    f = ops.frac
    r = ops.add(d, ops.const(1 << (f - m)))
    return ops.bits(r, f + 1 - m, m)[::-1]


def _round_beta_bits(ops, d, m: int) -> list:
    f = ops.frac
    n = ops.shr(ops.add(d, ops.const(1 << (f - m - 1))), f - m)
    half = ops.const(1 << (m - 1))
    neg = ops.sign(n)
    over = ops.sign(ops.sub(half, n))
    n = ops.select(over, n, half)
    n = ops.select(neg, n, ops.const(0))
    return ops.bits(n, 0, m)[::-1]


def euler_circuit(ops, t, degree: int, m: int,
                  sqrt_iters: int = SQRT_ITERS, inv_iters: int = INV_ITERS) -> tuple:
    """Quaternion words (raw at ops.frac) -> three MSB-first m-bit angle words.

    Every step is a fixed sequence of ops calls; data-dependent choices
    (disc, degenerate branch) are made with select, never with Python `if`.
    """
    f = ops.frac
    if m < 1 or f < m + 2:
        raise ValueError("angle bits must be at least 1 and below frac - 1")
    t1, t2, t3, t4 = t
    cs = ops.add(ops.mul(t1, t1), ops.mul(t3, t3))
    sn = ops.add(ops.mul(t2, t2), ops.mul(t4, t4))
    c = _fp_sqrt(ops, cs, sqrt_iters)
    s = _fp_sqrt(ops, sn, sqrt_iters)

    d_beta = _arg_disc(ops, c, s, degree, 1)
    beta_bits = _round_beta_bits(ops, d_beta, m)

    inv_cs_sn = _fp_inverse(ops, ops.mul(c, s), inv_iters)
    t1t4, t2t3 = ops.mul(t1, t4), ops.mul(t2, t3)
    t1t2, t3t4 = ops.mul(t1, t2), ops.mul(t3, t4)
    za = (ops.mul(ops.sub(t2t3, t1t4), inv_cs_sn), ops.mul(ops.add(t1t2, t3t4), inv_cs_sn))
    zg = (ops.mul(ops.neg(ops.add(t1t4, t2t3)), inv_cs_sn),
          ops.mul(ops.sub(t3t4, t1t2), inv_cs_sn))
    d_alpha = _arg_four_discs(ops, za[0], za[1], degree)
    d_gamma = _arg_four_discs(ops, zg[0], zg[1], degree)

    # cos(pi beta) ~ 0: alpha = 0, gamma = Arg(-(t4 + t2 i)^2 / s^2)/(2 pi) + 1/2
    inv_sn = _fp_inverse(ops, sn, inv_iters)
    t2t4 = ops.mul(t2, t4)
    zc = (ops.mul(ops.sub(ops.mul(t2, t2), ops.mul(t4, t4)), inv_sn),
          ops.mul(ops.neg(ops.add(t2t4, t2t4)), inv_sn))
    d_gamma_c = ops.add(_arg_four_discs(ops, zc[0], zc[1], degree), ops.const(1 << f))

    # sin(pi beta) ~ 0: gamma = 0, alpha = Arg((t1 - t3 i)^2 / c^2)/(2 pi)
    inv_cs = _fp_inverse(ops, cs, inv_iters)
    t1t3 = ops.mul(t1, t3)
    zs = (ops.mul(ops.sub(ops.mul(t1, t1), ops.mul(t3, t3)), inv_cs),
          ops.mul(ops.neg(ops.add(t1t3, t1t3)), inv_cs))
    d_alpha_s = _arg_four_discs(ops, zs[0], zs[1], degree)

    thr = ops.const(1 << max(f - DEGENERATE_SQ_EXP, 0))
    cos_small = ops.sign(ops.sub(cs, thr))
    sin_small = ops.sign(ops.sub(sn, thr))
    zero = ops.const(0)
    d_alpha = ops.select(cos_small, ops.select(sin_small, d_alpha, d_alpha_s), zero)
    d_gamma = ops.select(cos_small, ops.select(sin_small, d_gamma, zero), d_gamma_c)
    return (_round_turn_bits(ops, d_alpha, m), beta_bits, _round_turn_bits(ops, d_gamma, m))


def euler_from_quat_approx(t, k: int = DEFAULT_TAYLOR_DEGREE,
                           bits: int = DEFAULT_ANGLE_BITS) -> EulerAngles:
    """m-bit Euler angles of a near-unit quaternion by the fixed-point circuit.

    k is the Taylor degree; the working precision is k + 8 fractional bits.
    """
    f = k + 8
    ops = PlainOps(pipeline_width(f), f)
    words = [ops.const(trunc_raw(x, f)) for x in t]
    a, b, g = euler_circuit(ops, words, k, bits)
    return EulerAngles.from_bits(a, b, g)


def he_euler_from_quat(enc_t, k: int, backend, bits: int = DEFAULT_ANGLE_BITS) -> tuple:
    """Run the conversion circuit on an encrypted quaternion.

    enc_t holds four encrypted fixed-point words under one key slot. The
    result is three MSB-first lists of encrypted bits (alpha, beta, gamma).
    """
    f = k + 8
    ops = backend.fixed_ops(pipeline_width(f), f)
    words = [ops.load(w) for w in enc_t]
    return euler_circuit(ops, words, k, bits)


__all__ = [
    "DEFAULT_ANGLE_BITS", "DEFAULT_TAYLOR_DEGREE", "EulerAngles", "FixedPoint",
    "PlainOps", "arg_over_pi_mod2", "bits_to_fraction", "canonicalize",
    "disc_center", "disc_index", "euler_circuit", "euler_from_quat_approx",
    "euler_to_matrix", "euler_to_quat", "fp_inverse", "fp_sqrt",
    "fraction_to_bits", "he_euler_from_quat", "quat_to_euler_exact",
    "rot_r", "rot_t", "taylor_ln_bound", "taylor_ln_eval",
]
