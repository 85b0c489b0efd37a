"""Quaternion index vectors for SU(2).

A 4-vector t indexes the operator
    U_t = t1*I + t2*s1 + t3*s2 + t4*s3,   s1 = iX, s2 = iZ, s3 = iY,
which as a matrix is [[t1 + t3 i, t4 + t2 i], [-t4 + t2 i, t1 - t3 i]].

Quaternions are plain 4-tuples. quat_mul and quat_inv are written with
ordinary arithmetic so they work on floats, ints and Fractions alike.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import sqrt

import numpy as np

Quat = tuple  # (t1, t2, t3, t4)

IDENTITY = (1, 0, 0, 0)
SIGMA1 = (0, 1, 0, 0)
SIGMA2 = (0, 0, 1, 0)
SIGMA3 = (0, 0, 0, 1)


class DomainError(ValueError):
    """Input lies outside the region where an approximation is defined."""


@dataclass(frozen=True)
class FixedFrac:
    """Sign bit plus a magnitude of k fractional bits.

    The magnitude carries one extra integer bit so that +-1 is representable
    (the identity key needs it). Negative zero is rejected.
    """

    sign: int
    bits: tuple  # integer bit first, then 2^-1 ... 2^-k
    k: int

    def __post_init__(self):
        if len(self.bits) != self.k + 1:
            raise ValueError("expected k+1 magnitude bits")
        if any(b not in (0, 1) for b in self.bits) or self.sign not in (0, 1):
            raise ValueError("bits must be 0/1")
        if self.sign == 1 and not any(self.bits):
            raise ValueError("negative zero is not a valid encoding")
        if self.magnitude > (1 << self.k):
            raise ValueError("magnitude exceeds 1")

    @property
    def magnitude(self) -> int:
        v = 0
        for b in self.bits:
            v = (v << 1) | b
        return v

    @property
    def raw(self) -> int:
        """Signed integer value scaled by 2^k."""
        return -self.magnitude if self.sign else self.magnitude

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << self.k)

    def __float__(self):
        return float(self.value)

    @classmethod
    def from_raw(cls, raw: int, k: int) -> "FixedFrac":
        mag = abs(raw)
        bits = tuple((mag >> (k - j)) & 1 for j in range(k + 1))
        return cls(1 if raw < 0 else 0, bits, k)

    @classmethod
    def from_value(cls, x, k: int) -> "FixedFrac":
        return cls.from_raw(trunc_raw(x, k), k)


def trunc_raw(x, k: int) -> int:
    """Scale x by 2^k and drop the remaining bits of the magnitude."""
    q = Fraction(x) * (1 << k)
    mag = abs(q.numerator) // q.denominator
    return -mag if q < 0 else mag


def quat_mul(a: Quat, b: Quat) -> Quat:
    a1, a2, a3, a4 = a
    b1, b2, b3, b4 = b
    return (
        a1 * b1 - a2 * b2 - a3 * b3 - a4 * b4,
        a1 * b2 + a2 * b1 + a3 * b4 - a4 * b3,
        a1 * b3 + a3 * b1 + a4 * b2 - a2 * b4,
        a1 * b4 + a4 * b1 + a2 * b3 - a3 * b2,
    )


def quat_inv(a: Quat) -> Quat:
    return (a[0], -a[1], -a[2], -a[3])


def quat_norm(t: Quat) -> float:
    return sqrt(sum(float(x) * float(x) for x in t))


def quat_to_matrix(t: Quat) -> np.ndarray:
    t1, t2, t3, t4 = (float(x) for x in t)
    return np.array(
        [[complex(t1, t3), complex(t4, t2)], [complex(-t4, t2), complex(t1, -t3)]]
    )


def matrix_to_quat(u: np.ndarray) -> Quat:
    """Read t back from a matrix of the quaternion form (no phase fitting)."""
    return (u[0, 0].real, u[0, 1].imag, u[0, 0].imag, u[0, 1].real)


def su2_from_unitary(u: np.ndarray) -> Quat:
    """Quaternion of u / sqrt(det u); defined up to an overall sign."""
    det = np.linalg.det(u)
    return matrix_to_quat(u / np.sqrt(det))


def _sgn(x) -> float:
    # sgn(0) = +1
    return -1.0 if x < 0 else 1.0


def unitary_approx(t: Quat, atol: float = 0.0) -> Quat:
    """Nearby unit vector to t.

    Long vectors keep leading coordinates until the running sum of squares
    reaches one and set the rest to zero. Short vectors lengthen the last
    coordinate. Signs of adjusted coordinates are kept.
    """
    x = [float(v) for v in t]
    sq = [v * v for v in x]
    n2 = sum(sq)
    norm = sqrt(n2)
    if abs(norm - 1.0) > 1.0:
        raise DomainError(f"norm {norm} too far from 1")
    if abs(norm - 1.0) <= atol or n2 == 1.0:
        return tuple(x)
    if n2 > 1.0:
        acc = 0.0
        out = [0.0, 0.0, 0.0, 0.0]
        for i in range(4):
            if acc + sq[i] >= 1.0:
                out[i] = _sgn(x[i]) * sqrt(max(0.0, 1.0 - acc))
                return tuple(out)
            out[i] = x[i]
            acc += sq[i]
        return tuple(out)  # unreachable: sum of squares exceeds one
    rest = sq[0] + sq[1] + sq[2]
    return (x[0], x[1], x[2], _sgn(x[3]) * sqrt(1.0 - rest))


def unitary_approx_batch(t: np.ndarray) -> np.ndarray:
    """Row-wise unitary_approx for an (n, 4) array."""
    t = np.asarray(t, dtype=float)
    sq = t * t
    n2 = sq.sum(axis=1)
    if np.any(np.abs(np.sqrt(n2) - 1.0) > 1.0):
        raise DomainError("norm too far from 1")
    sgn = np.where(t < 0, -1.0, 1.0)
    out = t.copy()
    short = n2 < 1.0
    rest = sq[:, :3].sum(axis=1)
    out[short, 3] = sgn[short, 3] * np.sqrt(1.0 - rest[short])
    long_ = n2 > 1.0
    if np.any(long_):
        cum = np.cumsum(sq[long_], axis=1)
        first = np.argmax(cum >= 1.0, axis=1)
        prev = np.where(first > 0, np.take_along_axis(cum, (first - 1)[:, None], 1)[:, 0], 0.0)
        rows = t[long_].copy()
        idx = np.arange(4)[None, :]
        rows[idx > first[:, None]] = 0.0
        r = np.arange(rows.shape[0])
        rows[r, first] = sgn[long_][r, first] * np.sqrt(np.maximum(0.0, 1.0 - prev))
        out[long_] = rows
    return out


def truncate_k(t: Quat, k: int) -> Quat:
    """Keep the sign and the k leading fractional bits of every component."""
    if k < 1:
        raise ValueError("k must be positive")
    return tuple(trunc_raw(x, k) / (1 << k) for x in t)


def truncate_k_raw(t: Quat, k: int) -> tuple:
    return tuple(trunc_raw(x, k) for x in t)


def spectral_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b), 2))


def random_unit_quat(rng: np.random.Generator) -> Quat:
    v = rng.normal(size=4)
    v /= np.linalg.norm(v)
    return tuple(float(x) for x in v)


def phase_distance(a: np.ndarray, b: np.ndarray) -> float:
    """min over phases of ||a - e^{i p} b||_2 (spectral), for 2x2 unitaries."""
    inner = np.trace(b.conj().T @ a)
    phase = inner / abs(inner) if abs(inner) > 1e-300 else 1.0
    return spectral_distance(a, phase * b)


__all__ = [
    "DomainError", "FixedFrac", "IDENTITY", "SIGMA1", "SIGMA2", "SIGMA3",
    "matrix_to_quat", "phase_distance", "quat_inv", "quat_mul",
    "quat_norm", "quat_to_matrix", "random_unit_quat", "spectral_distance",
    "su2_from_unitary", "trunc_raw", "truncate_k", "truncate_k_raw",
    "unitary_approx", "unitary_approx_batch",
]
