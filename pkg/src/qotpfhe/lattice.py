"""Toy GSW-style bit encryption (matrix ciphertexts) and its vector companion.

Arithmetic is mod q = 2^logq with logq <= 64, carried out in numpy uint64
(wraparound is reduction mod 2^64; a mask finishes the job for smaller q).

Keys: A is m x n with a gadget trapdoor, A' stacks A over e_sk^T A and the
secret key is sk = (-e_sk, 1), so sk^T A' = 0.
Matrix ciphertexts:  C = A' S + E + mu G,  G = I_{m+1} (x) (1, 2, ..., 2^{logq-1}).
Vector ciphertexts:  c = A' s + e + (0, ..., 0, mu q/2).
"""

from __future__ import annotations

import hashlib
import io
import math
import struct
from dataclasses import dataclass, field, fields
from functools import lru_cache

import numpy as np

MAGIC = b"QOTP"
FORMAT_VERSION = 1
KIND_PARAMS, KIND_KEYPAIR, KIND_MHE, KIND_ALT, KIND_CHAIN, KIND_BUNDLE = range(1, 7)
TABLE_SAMPLER_MAX = 1 << 16


class ParameterError(ValueError):
    """Parameters violate a sizing constraint."""


class InversionError(ArithmeticError):
    """Trapdoor inversion failed or its re-encoding check did not match."""


class FormatError(ValueError):
    """Serialized data is malformed or belongs to other parameters."""


# ------------------------------------------------------------ parameters

@dataclass(frozen=True)
class LweParams:
    lam: int
    n: int
    logq: int
    m_bar: int
    trap_base_bits: int
    beta_init: int
    eta_c: int
    eta: int
    preset: str = "custom"

    def __post_init__(self):
        if self.logq < 2:
            raise ParameterError("modulus too small")
        if self.n < 1 or self.m_bar < 1 or self.trap_base_bits < 1:
            raise ParameterError("sizes must be positive")
        if self.trap_digits < 2:
            raise ParameterError("trapdoor base must leave at least two digits")
        if self.beta_init < 1 or self.eta_c < 0 or self.eta < 0:
            raise ParameterError("noise parameters out of range")
        if self.q <= 4 * (self.m + 1) * self.beta_f:
            raise ParameterError(
                f"q = 2^{self.logq} does not exceed 4(m+1)beta_f = {4 * (self.m + 1) * self.beta_f}"
            )

    @property
    def native(self) -> bool:
        """True when arithmetic fits numpy uint64."""
        return self.logq <= 64

    @property
    def q(self) -> int:
        return 1 << self.logq

    @property
    def trap_digits(self) -> int:
        return -(-self.logq // self.trap_base_bits)

    @property
    def m(self) -> int:
        return self.m_bar + self.n * self.trap_digits

    @property
    def N(self) -> int:
        return (self.m + 1) * self.logq

    @property
    def beta_f(self) -> int:
        return self.beta_init * (self.N + 1) ** (self.eta_c + self.eta)

    @property
    def decode_threshold_bits(self) -> int:
        b, l = self.trap_base_bits, self.trap_digits
        return min((l - 1) * b, self.logq - b) - 1

    @property
    def invert_bound(self) -> float:
        """Error vectors with l2 norm below this always invert."""
        return 2.0 ** self.decode_threshold_bits / math.sqrt(self.m_bar + 1)

    @property
    def c_t(self) -> float:
        """Constant C_T with invert_bound = q / (C_T sqrt(n log q))."""
        return self.q / (self.invert_bound * math.sqrt(self.n * self.logq))

    def with_eta(self, eta: int) -> "LweParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw["eta"] = eta
        return LweParams(**kw)

    def to_text(self) -> str:
        lines = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        derived = {"q": self.q, "m": self.m, "N": self.N, "beta_f": self.beta_f,
                   "c_t": f"{self.c_t:.6g}"}
        lines += [f"# {k}={v}" for k, v in derived.items()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "LweParams":
        kv = {}
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            key, _, val = ln.partition("=")
            kv[key.strip()] = val.strip()
        try:
            kw = {f.name: (kv[f.name] if f.name == "preset" else int(kv[f.name]))
                  for f in fields(cls)}
        except KeyError as exc:
            raise FormatError(f"missing parameter {exc}") from None
        return cls(**kw)

    def digest(self) -> bytes:
        core = "\n".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self)
                         if f.name != "preset")
        return hashlib.sha256(core.encode()).digest()[:8]


def gen_params(preset: str = "toy_s", lam: int = 16) -> LweParams:
    if preset == "toy_s":
        return LweParams(lam=lam, n=4, logq=64, m_bar=4, trap_base_bits=16,
                         beta_init=4, eta_c=2, eta=3, preset="toy_s")
    if preset == "toy_m":
        return LweParams(lam=lam, n=8, logq=64, m_bar=8, trap_base_bits=16,
                         beta_init=6, eta_c=1, eta=3, preset="toy_m")
    if preset == "asymptotic":
        return asymptotic_params(lam)
    raise ParameterError(f"unknown preset {preset!r}")


def asymptotic_params(lam: int) -> LweParams:
    """n = lam and eta_c = eta = ceil(log2 lam); q grows until q > 4(m+1)beta_f."""
    if lam < 2:
        raise ParameterError("lambda must be at least 2")
    eta = max(1, math.ceil(math.log2(lam)))
    n = lam
    b = 16
    beta_init = math.ceil(2 * math.sqrt(n))
    logq = 16
    for _ in range(64):
        digits = -(-logq // b)
        m = n + n * digits
        N = (m + 1) * logq
        beta_f = beta_init * (N + 1) ** (2 * eta)
        need = (4 * (m + 1) * beta_f).bit_length() + 1
        if need <= logq:
            break
        logq = need
    return LweParams(lam=lam, n=n, logq=logq, m_bar=n, trap_base_bits=b,
                     beta_init=beta_init, eta_c=eta, eta=eta, preset="asymptotic")


# ---------------------------------------------------------- arithmetic

def _mask(params: LweParams):
    return np.uint64((1 << params.logq) - 1) if params.logq < 64 else None


def reduce(x: np.ndarray, params: LweParams) -> np.ndarray:
    x = np.asarray(x).astype(np.uint64, copy=False)
    mk = _mask(params)
    return x & mk if mk is not None else x


def centered(x: np.ndarray, params: LweParams) -> np.ndarray:
    """Representatives in [-q/2, q/2) as int64."""
    x = reduce(x, params)
    if params.logq == 64:
        return x.view(np.int64)
    half = np.uint64(1 << (params.logq - 1))
    return ((x + half) & _mask(params)).astype(np.int64) - np.int64(1 << (params.logq - 1))


def to_zq(x, params: LweParams) -> np.ndarray:
    """Signed integers (int64 or Python ints) -> residues as uint64."""
    arr = np.asarray(x)
    if arr.dtype == object:
        arr = np.array([int(v) % params.q for v in arr.ravel()], dtype=np.uint64).reshape(arr.shape)
        return arr
    return reduce(arr.astype(np.int64).view(np.uint64), params)


def matmul_q(a: np.ndarray, b: np.ndarray, params: LweParams) -> np.ndarray:
    """Product mod q of two uint64 matrices."""
    return reduce(np.matmul(a.astype(np.uint64), b.astype(np.uint64)), params)


def _matmul_bits(c0: np.ndarray, bits: np.ndarray, params: LweParams) -> np.ndarray:
    """C0 @ B mod q for a 0/1 matrix B, exact through 16-bit limbs in float64."""
    k = bits.shape[0]
    if k * 0xFFFF >= 1 << 53:
        return matmul_q(c0, bits, params)
    bf = bits.astype(np.float64)
    out = np.zeros((c0.shape[0], bits.shape[1]), dtype=np.uint64)
    for limb in range(4):
        part = ((c0 >> np.uint64(16 * limb)) & np.uint64(0xFFFF)).astype(np.float64)
        prod = (part @ bf).astype(np.uint64)
        out += prod << np.uint64(16 * limb)
    return reduce(out, params)


def gadget_vector(params: LweParams) -> np.ndarray:
    return (np.uint64(1) << np.arange(params.logq, dtype=np.uint64)).astype(np.uint64)


def gadget_matrix(params: LweParams) -> np.ndarray:
    return np.kron(np.eye(params.m + 1, dtype=np.uint64), gadget_vector(params)[None, :])


def gadget_inverse(c: np.ndarray, params: LweParams) -> np.ndarray:
    """Bit decomposition: (m+1) x K residues -> N x K bits with G @ bits = c."""
    c = reduce(c, params)
    shifts = np.arange(params.logq, dtype=np.uint64)
    bits = (c[:, None, :] >> shifts[None, :, None]) & np.uint64(1)
    return bits.reshape(params.N, c.shape[1]).astype(np.uint8)


# ------------------------------------------------------------ sampling

@lru_cache(maxsize=64)
def _gauss_table(B: int):
    xs = np.arange(-B, B + 1, dtype=np.int64)
    w = np.exp(-math.pi * (xs.astype(np.float64) / B) ** 2)
    cdf = np.cumsum(w)
    cdf /= cdf[-1]
    return xs, cdf


def sample_gaussian_vec(B: int, size, rng: np.random.Generator) -> np.ndarray:
    """Truncated discrete Gaussian on [-B, B] with weight exp(-pi x^2 / B^2)."""
    if B < 1:
        raise ParameterError("Gaussian bound must be positive")
    if B <= TABLE_SAMPLER_MAX:
        xs, cdf = _gauss_table(B)
        idx = np.searchsorted(cdf, rng.random(size), side="right")
        return xs[np.minimum(idx, xs.size - 1)]
    # wide bounds: continuous normal with the low bits filled uniformly, which
    # is indistinguishable at these widths since the density is flat over 2^s
    sigma = B / math.sqrt(2 * math.pi)
    s = max(0, math.ceil(math.log2(sigma)) - 40)
    out = np.empty(size, dtype=np.int64).ravel()
    todo = np.arange(out.size)
    while todo.size:
        y = rng.normal(0.0, sigma, todo.size)
        hi = np.floor(y / 2.0 ** s).astype(np.int64)
        x = (hi << s) + rng.integers(0, 1 << s, todo.size, dtype=np.int64)
        ok = np.abs(x) <= B
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out.reshape(size)


def sample_gaussian(B: int, q: int, rng: np.random.Generator) -> int:
    if B > q // 2:
        raise ParameterError("Gaussian bound must not exceed q/2")
    return int(sample_gaussian_vec(B, 1, rng)[0])


def gaussian_log_weight(e: np.ndarray, B: int) -> float:
    """log of exp(-pi ||e||^2 / B^2); -inf outside the truncation box."""
    ints = [int(v) for v in np.ravel(e)]
    if any(abs(v) > B for v in ints):
        return -math.inf
    return -math.pi * sum(v * v for v in ints) / (B * B)


def hellinger_shift(e_shift, B: int, samples: int, rng: np.random.Generator) -> float:
    """Monte Carlo Hellinger distance between D_B^k and D_B^k shifted by e_shift.

    Uses H^2 = E_P[(1 - sqrt(Q/P))^2] / 2 with the exact log ratio
    -pi (|e'|^2 - 2 e.e') / B^2, so tiny distances do not vanish in rounding.
    """
    shift = [int(v) for v in np.ravel(e_shift)]
    k = len(shift)
    e = sample_gaussian_vec(B, (samples, k), rng)
    sq = sum(v * v for v in shift)
    dots = [sum(int(a) * b for a, b in zip(row, shift)) for row in e]
    acc = 0.0
    for d in dots:
        lr = -math.pi * (sq - 2 * d) / (B * B)
        acc += math.expm1(0.5 * lr) ** 2
    return math.sqrt(acc / (2 * samples))


def uniform_zq(shape, params: LweParams, rng: np.random.Generator) -> np.ndarray:
    return reduce(rng.integers(0, 1 << 64, size=shape, dtype=np.uint64, endpoint=False)
                  if params.logq == 64 else
                  rng.integers(0, params.q, size=shape, dtype=np.uint64), params)


# ------------------------------------------------------------- keys

@dataclass
class TrapdoorKeypair:
    params: LweParams
    A: np.ndarray        # m x n
    R: np.ndarray        # (n * digits) x m_bar, binary
    e_sk: np.ndarray     # m, int64
    A_prime: np.ndarray = field(init=False)
    sk: np.ndarray = field(init=False)

    def __post_init__(self):
        p = self.params
        last = matmul_q(to_zq(self.e_sk, p)[None, :], self.A, p)
        self.A_prime = np.vstack([self.A, last])
        self.sk = np.concatenate([to_zq(-self.e_sk, p), np.array([1], dtype=np.uint64)])

    @property
    def pk(self) -> np.ndarray:
        return self.A_prime

    def public_only(self) -> dict:
        return {"A_prime": self.A_prime}


def _trap_gadget(params: LweParams) -> np.ndarray:
    b = params.trap_base_bits
    col = np.array([1 << (j * b) for j in range(params.trap_digits)], dtype=np.uint64)
    return np.kron(np.eye(params.n, dtype=np.uint64), col[:, None])


def gen_trap(params: LweParams, rng: np.random.Generator) -> TrapdoorKeypair:
    """Gadget trapdoor: A = [A_bar; R A_bar + G_trap] with binary R."""
    p = params
    if not p.native:
        raise ParameterError(f"q = 2^{p.logq} is beyond 64-bit arithmetic")
    a_bar = uniform_zq((p.m_bar, p.n), p, rng)
    rows = p.n * p.trap_digits
    R = rng.integers(0, 2, size=(rows, p.m_bar), dtype=np.uint64)
    empty = ~R.any(axis=1)
    R[empty, rng.integers(0, p.m_bar, size=int(empty.sum()))] = 1
    lower = reduce(matmul_q(R, a_bar, p) + _trap_gadget(p), p)
    A = np.vstack([a_bar, lower])
    e_sk = sample_gaussian_vec(p.beta_init, p.m, rng)
    return TrapdoorKeypair(p, A, R, e_sk)


def invert(kp: TrapdoorKeypair, c: np.ndarray) -> tuple:
    """Recover (s, e) from c = A s + e (columns of c may be batched).

    Raises InversionError when any column fails the gadget decoding margin
    or the recovered error exceeds the guaranteed bound.
    """
    p = kp.params
    c = reduce(np.asarray(c), p)
    single = c.ndim == 1
    if single:
        c = c[:, None]
    c1, c2 = c[: p.m_bar], c[p.m_bar:]
    v = reduce(c2 - matmul_q(kp.R, c1, p), p)
    b, l = p.trap_base_bits, p.trap_digits
    s = np.zeros((p.n, c.shape[1]), dtype=np.uint64)
    known = 0
    thr = 1 << p.decode_threshold_bits
    for j in range(l - 1, -1, -1):
        rows = v[j::l]  # digit j of every coordinate of s
        resid = reduce(rows - (s << np.uint64(j * b)), p)
        shift = j * b + known
        x = reduce(resid + np.uint64(1 << (shift - 1)), p) >> np.uint64(shift)
        err = centered(resid - (x << np.uint64(shift)), p)
        if np.any(np.abs(err) >= thr):
            raise InversionError("gadget decoding margin exceeded")
        s = s | (x << np.uint64(known))
        known += p.logq - shift
    s = reduce(s, p)
    e = centered(c - matmul_q(kp.A, s, p), p)
    norms = np.sqrt(np.sum(e.astype(np.float64) ** 2, axis=0))
    if np.any(norms >= p.invert_bound):
        raise InversionError("recovered error exceeds the inversion bound")
    if single:
        return s[:, 0], e[:, 0]
    return s, e


def invert_alt(kp: TrapdoorKeypair, c: np.ndarray) -> tuple:
    """Vector ciphertext -> (mu, s, e) with c = A' s + e + (0.., mu q/2)."""
    p = kp.params
    c = reduce(np.asarray(c), p)
    s, e_top = invert(kp, c[: p.m])
    last = reduce(c[p.m:p.m + 1] - matmul_q(kp.A_prime[p.m][None, :], s[:, None], p)[0], p)
    v = int(centered(last, p)[0])
    half = p.q // 2
    mu = 1 if abs(v) > p.q // 4 else 0
    e_last = v - (half if v > 0 else -half) * mu
    if mu and v == -half:
        e_last = 0
    return mu, s, np.concatenate([e_top, [e_last]]).astype(np.int64)


# -------------------------------------------------------- ciphertexts

@dataclass
class MheCiphertext:
    C: np.ndarray
    depth: int = 0


@dataclass
class AltCiphertext:
    c: np.ndarray


def mhe_enc(kp: TrapdoorKeypair, mu: int, rng: np.random.Generator,
            return_noise: bool = False):
    p = kp.params
    if mu not in (0, 1):
        raise ValueError("plaintext must be a bit")
    S = uniform_zq((p.n, p.N), p, rng)
    E = sample_gaussian_vec(p.beta_init, (p.m + 1, p.N), rng)
    C = reduce(matmul_q(kp.A_prime, S, p) + to_zq(E, p), p)
    if mu:
        C = reduce(C + gadget_matrix(p), p)
    ct = MheCiphertext(C, 0)
    return (ct, S, E) if return_noise else ct


def mhe_const(params: LweParams, mu: int) -> MheCiphertext:
    """Noiseless public encryption mu G, valid under every key."""
    return MheCiphertext(gadget_matrix(params) * np.uint64(mu), 0)


def mhe_dec(kp: TrapdoorKeypair, ct: MheCiphertext) -> int:
    p = kp.params
    v = int(centered(matmul_q(kp.sk[None, :], ct.C[:, -1:], p), p)[0, 0])
    return int(abs(v) >= p.q // 4)


def mhe_eval_nand(c0: MheCiphertext, c1: MheCiphertext, params: LweParams) -> MheCiphertext:
    g = gadget_matrix(params)
    prod = _matmul_bits(c0.C, gadget_inverse(c1.C, params), params)
    return MheCiphertext(reduce(g - prod, params), max(c0.depth, c1.depth) + 1)


def mhe_convert(ct: MheCiphertext) -> AltCiphertext:
    return AltCiphertext(ct.C[:, -1].copy())


def alt_enc(kp: TrapdoorKeypair, mu: int, rng: np.random.Generator,
            bound: int | None = None, return_randomness: bool = False):
    p = kp.params
    s = uniform_zq(p.n, p, rng)
    e = sample_gaussian_vec(bound or p.beta_init, p.m + 1, rng)
    c = alt_enc_with(kp, mu, s, e)
    return (c, s, e) if return_randomness else c


def alt_enc_with(kp: TrapdoorKeypair, mu: int, s: np.ndarray, e: np.ndarray) -> AltCiphertext:
    """Deterministic AltEnc(mu; (s, e))."""
    p = kp.params
    c = reduce(matmul_q(kp.A_prime, np.asarray(s, dtype=np.uint64)[:, None], p)[:, 0]
               + to_zq(e, p), p)
    if mu:
        c = c.copy()
        c[-1:] = reduce(c[-1:] + np.uint64(p.q // 2), p)
    return AltCiphertext(c)


def alt_dec(kp: TrapdoorKeypair, ct: AltCiphertext) -> int:
    p = kp.params
    v = int(centered(matmul_q(kp.sk[None, :], ct.c[:, None], p), p)[0, 0])
    return int(abs(v) >= p.q // 4)


def alt_xor(a: AltCiphertext, b: AltCiphertext, params: LweParams) -> AltCiphertext:
    return AltCiphertext(reduce(a.c + b.c, params))


# ------------------------------------------------------- serialization

def _header(kind: int, params: LweParams) -> bytes:
    return MAGIC + struct.pack("<HH", FORMAT_VERSION, kind) + params.digest()


def pack_arrays(kind: int, params: LweParams, arrays: dict) -> bytes:
    """Header, then params text, then named little-endian int64/uint64 arrays."""
    buf = io.BytesIO()
    buf.write(_header(kind, params))
    ptxt = params.to_text().encode()
    buf.write(struct.pack("<I", len(ptxt)))
    buf.write(ptxt)
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        code = b"u" if arr.dtype == np.uint64 else b"i"
        data = arr.astype("<u8" if code == b"u" else "<i8")
        nb = name.encode()
        buf.write(struct.pack("<H", len(nb)) + nb + code)
        buf.write(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(data.tobytes())
    return buf.getvalue()


def unpack_arrays(blob: bytes, kind: int | None = None,
                  params: LweParams | None = None) -> tuple:
    if len(blob) < 16 or blob[:4] != MAGIC:
        raise FormatError("bad magic")
    version, got_kind = struct.unpack_from("<HH", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported version {version}")
    if kind is not None and got_kind != kind:
        raise FormatError(f"expected kind {kind}, found {got_kind}")
    digest = blob[8:16]
    pos = 16
    (plen,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    found = LweParams.from_text(blob[pos:pos + plen].decode())
    pos += plen
    if found.digest() != digest:
        raise FormatError("params hash does not match the embedded params")
    if params is not None and params.digest() != digest:
        raise FormatError("data was produced under different parameters")
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (nl,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nl].decode()
        code = blob[pos + nl:pos + nl + 1]
        pos += nl + 1
        (nd,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        shape = struct.unpack_from(f"<{nd}I", blob, pos)
        pos += 4 * nd
        size = int(np.prod(shape)) if nd else 1
        dt = "<u8" if code == b"u" else "<i8"
        arr = np.frombuffer(blob, dtype=dt, count=size, offset=pos).reshape(shape)
        pos += 8 * size
        out[name] = arr.astype(np.uint64 if code == b"u" else np.int64)
    return found, got_kind, out


def keypair_to_bytes(kp: TrapdoorKeypair) -> bytes:
    return pack_arrays(KIND_KEYPAIR, kp.params, {"A": kp.A, "R": kp.R, "e_sk": kp.e_sk})


def keypair_from_bytes(blob: bytes) -> TrapdoorKeypair:
    params, _, arrs = unpack_arrays(blob, KIND_KEYPAIR)
    return TrapdoorKeypair(params, arrs["A"], arrs["R"], arrs["e_sk"])


__all__ = [
    "AltCiphertext", "FormatError", "InversionError", "LweParams", "MheCiphertext",
    "ParameterError", "TrapdoorKeypair", "alt_dec", "alt_enc", "alt_enc_with",
    "alt_xor", "centered", "gadget_inverse", "gadget_matrix", "gaussian_log_weight",
    "gen_params", "gen_trap", "invert", "invert_alt", "keypair_from_bytes",
    "keypair_to_bytes", "matmul_q", "mhe_const", "mhe_convert", "mhe_dec", "mhe_enc",
    "hellinger_shift", "mhe_eval_nand", "pack_arrays", "asymptotic_params", "reduce", "sample_gaussian",
    "sample_gaussian_vec", "to_zq", "uniform_zq", "unpack_arrays",
]
