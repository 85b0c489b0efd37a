"""Bitwise classical FHE behind one interface, plus the circuits built on it.

Two backends share the contract:
  MockBackend     plaintext bits with a NAND-depth counter (fast oracle)
  LatticeBackend  matrix ciphertexts from `lattice`, one key pair per slot

Keys live in a linear chain of slots 1..n; key_switch moves a bit from
slot i to slot i+1 and every binary gate insists on matching slots.

Fixed-point words (two's complement, LSB first) are built from bits by
gate-level circuits in Backend. MockBackend also has a packed word type
that evaluates the same functions on integers; its depth counter is an
upper bound on the depth of the corresponding gate-level circuit.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import lattice as lat
from .su2core import quat_mul, trunc_raw


class SlotMismatchError(ValueError):
    """Operands are encrypted under different key slots."""


class ChainError(LookupError):
    """The key chain has no link for the requested slot."""


class BudgetError(ArithmeticError):
    """Ciphertext noise is too large for the requested operation."""


@dataclass(frozen=True, eq=False)
class CipherBit:
    slot: int
    payload: object
    depth: int = 0


@dataclass(frozen=True)
class BitWord:
    """Gate-level fixed-point word: bits LSB first, value raw / 2^frac."""

    bits: tuple
    frac: int = 0

    @property
    def width(self) -> int:
        return len(self.bits)

    @property
    def slot(self) -> int:
        return self.bits[0].slot


@dataclass(frozen=True)
class MockWord:
    value: int  # signed, already wrapped to width
    width: int
    frac: int
    slot: int
    depth: int = 0


@dataclass(frozen=True)
class CipherWord:
    """Binary fraction 0.b1 b2 ... bm, bits MSB first, all in one slot."""

    bits: tuple

    @property
    def m(self) -> int:
        return len(self.bits)

    @property
    def slot(self) -> int:
        return self.bits[0].slot

    @property
    def lsb(self) -> CipherBit:
        return self.bits[-1]


def _wrap(x: int, width: int) -> int:
    x &= (1 << width) - 1
    return x - (1 << width) if x >> (width - 1) else x


# ----------------------------------------------------------- key chain

class KeyChain:
    """Slots 1..n_slots with per-slot keys and the i -> i+1 cross-encryptions.

    Lattice chains hold a trapdoor key pair per slot. The cross-encryptions
    (bits of sk_i and of the trapdoor of slot i under pk_{i+1}) are kept as
    vector ciphertexts. Mock chains hold a random 64-bit identifier per slot
    in place of key material.
    """

    def __init__(self, kind: str, params: lat.LweParams, n_slots: int,
                 keys: list, cross: dict):
        if kind not in ("mock", "lattice"):
            raise ValueError(f"unknown backend kind {kind!r}")
        self.kind = kind
        self.params = params
        self.n_slots = n_slots
        self.keys = keys
        self.cross = cross
        self.extra: dict = {}  # int64 arrays stored alongside the keys

    def key(self, slot: int):
        if not 1 <= slot <= self.n_slots:
            raise ChainError(f"slot {slot} outside 1..{self.n_slots}")
        return self.keys[slot - 1]

    def has_link(self, slot: int) -> bool:
        return 1 <= slot < self.n_slots and slot in self.cross

    def public_bundle(self) -> dict:
        """What an evaluator may see: public keys only, no secret material."""
        if self.kind == "lattice":
            return {s + 1: kp.A_prime for s, kp in enumerate(self.keys)}
        return {s + 1: None for s in range(self.n_slots)}

    def to_bytes(self) -> bytes:
        arrays = {"meta": np.array([self.n_slots, self.kind == "lattice"], dtype=np.int64)}
        if self.kind == "lattice":
            for s, kp in enumerate(self.keys, start=1):
                arrays[f"A.{s}"] = kp.A
                arrays[f"R.{s}"] = kp.R
                arrays[f"esk.{s}"] = kp.e_sk
        else:
            arrays["ids"] = np.array(self.keys, dtype=np.uint64)
        for s, entry in self.cross.items():
            for name, arr in entry.items():
                arrays[f"x{name}.{s}"] = arr
        for name, arr in self.extra.items():
            arrays[f"extra.{name}"] = np.asarray(arr, dtype=np.int64)
        return lat.pack_arrays(lat.KIND_CHAIN, self.params, arrays)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "KeyChain":
        params, _, arrs = lat.unpack_arrays(blob, lat.KIND_CHAIN)
        n_slots, is_lattice = (int(v) for v in arrs["meta"])
        if is_lattice:
            keys = [lat.TrapdoorKeypair(params, arrs[f"A.{s}"], arrs[f"R.{s}"], arrs[f"esk.{s}"])
                    for s in range(1, n_slots + 1)]
        else:
            keys = [int(v) for v in arrs["ids"]]
        cross = {}
        extra = {}
        for name, arr in arrs.items():
            if name.startswith("x"):
                field_, _, s = name[1:].partition(".")
                cross.setdefault(int(s), {})[field_] = arr
            elif name.startswith("extra."):
                extra[name[6:]] = arr
        chain = cls("lattice" if is_lattice else "mock", params, n_slots, keys, cross)
        chain.extra = extra
        return chain


def _alt_enc_bits(kp: lat.TrapdoorKeypair, bits: np.ndarray, rng) -> np.ndarray:
    """Column-wise vector encryptions of many bits at once: (m+1) x K."""
    p = kp.params
    K = bits.size
    S = lat.uniform_zq((p.n, K), p, rng)
    E = lat.sample_gaussian_vec(p.beta_init, (p.m + 1, K), rng)
    C = lat.reduce(lat.matmul_q(kp.A_prime, S, p) + lat.to_zq(E, p), p)
    C[-1] = lat.reduce(C[-1] + bits.astype(np.uint64) * np.uint64(p.q // 2), p)
    return C


def _int_bits(values: np.ndarray, width: int) -> np.ndarray:
    v = np.asarray(values).astype(np.uint64).ravel()
    return ((v[:, None] >> np.arange(width, dtype=np.uint64)[None, :]) & np.uint64(1)).ravel()


def slot_count(k: int, levels: int) -> int:
    return 3 * k * levels + 1


def keychain_gen(lam: int, levels: int, k: int, backend: str = "mock",
                 params: lat.LweParams | None = None,
                 rng: np.random.Generator | None = None,
                 n_slots: int | None = None) -> KeyChain:
    """Chain with 3kL+1 slots (or n_slots) and every cross-encryption filled in."""
    if k < 1 or levels < 0:
        raise ValueError("k must be positive and levels non-negative")
    rng = rng or np.random.default_rng()
    params = params or lat.gen_params("toy_s", lam)
    n = n_slots or slot_count(k, levels)
    cross = {}
    if backend == "mock":
        keys = [int(x) for x in rng.integers(0, 1 << 63, size=n)]
        for s in range(1, n):
            cross[s] = {"sk": _int_bits(np.array([keys[s - 1]]), 64).astype(np.uint64)}
        return KeyChain("mock", params, n, keys, cross)
    if backend != "lattice":
        raise ValueError(f"unknown backend {backend!r}")
    keys = [lat.gen_trap(params, rng) for _ in range(n)]
    for s in range(1, n):
        src, dst = keys[s - 1], keys[s]
        sk_bits = _int_bits(src.sk, params.logq)
        trap_bits = src.R.astype(np.uint64).ravel()
        cross[s] = {"sk": _alt_enc_bits(dst, sk_bits, rng),
                    "trap": _alt_enc_bits(dst, trap_bits, rng)}
    return KeyChain("lattice", params, n, keys, cross)


# ------------------------------------------------------------- backends

class Backend:
    """NAND-complete bit FHE. Subclasses provide enc/dec/const/nand/key_switch."""

    kind = "abstract"

    def __init__(self, chain: KeyChain):
        self.chain = chain
        self.stats = Counter()

    # -- primitives
    def enc(self, bit: int, slot: int = 1) -> CipherBit:
        raise NotImplementedError

    def dec(self, x: CipherBit) -> int:
        raise NotImplementedError

    def const(self, bit: int, slot: int) -> CipherBit:
        raise NotImplementedError

    def nand(self, a: CipherBit, b: CipherBit) -> CipherBit:
        raise NotImplementedError

    def key_switch(self, x: CipherBit) -> CipherBit:
        raise NotImplementedError

    def _check(self, *xs):
        slot = xs[0].slot
        for x in xs[1:]:
            if x.slot != slot:
                raise SlotMismatchError(f"slots {slot} and {x.slot} differ")

    def _next_slot(self, slot: int) -> int:
        if not self.chain.has_link(slot):
            raise ChainError(f"no key-switch link from slot {slot}")
        return slot + 1

    # -- derived gates
    def bnot(self, a):
        return self.nand(a, self.const(1, a.slot))

    def band(self, a, b):
        return self.bnot(self.nand(a, b))

    def bor(self, a, b):
        return self.nand(self.bnot(a), self.bnot(b))

    def bxor(self, a, b):
        t = self.nand(a, b)
        return self.nand(self.nand(a, t), self.nand(b, t))

    def mux(self, a, b, sel):
        """a when sel = 0, b when sel = 1."""
        return self.nand(self.nand(a, self.bnot(sel)), self.nand(b, sel))

    def key_switch_to(self, x: CipherBit, slot: int) -> CipherBit:
        if slot < x.slot:
            raise ChainError("key switching only moves forward")
        while x.slot < slot:
            x = self.key_switch(x)
        return x

    def _full_add(self, a, b, c):
        n1 = self.nand(a, b)
        t = self.nand(self.nand(a, n1), self.nand(b, n1))
        n4 = self.nand(t, c)
        s = self.nand(self.nand(t, n4), self.nand(c, n4))
        return s, self.nand(n1, n4)

    # -- gate-level fixed-point words
    def word_enc(self, raw: int, width: int, frac: int, slot: int = 1):
        raw = _wrap(raw, width)
        return BitWord(tuple(self.enc((raw >> i) & 1, slot) for i in range(width)), frac)

    def word_dec(self, w) -> int:
        return _wrap(sum(self.dec(b) << i for i, b in enumerate(w.bits)), w.width)

    def word_const(self, raw: int, width: int, frac: int, slot: int):
        raw = _wrap(raw, width)
        return BitWord(tuple(self.const((raw >> i) & 1, slot) for i in range(width)), frac)

    def _ripple(self, xs, ys, carry):
        out = []
        for a, b in zip(xs, ys):
            s, carry = self._full_add(a, b, carry)
            out.append(s)
        return out

    def word_add(self, a, b):
        self._same_width(a, b)
        return BitWord(tuple(self._ripple(a.bits, b.bits, self.const(0, a.slot))), a.frac)

    def word_sub(self, a, b):
        self._same_width(a, b)
        nb = [self.bnot(x) for x in b.bits]
        return BitWord(tuple(self._ripple(a.bits, nb, self.const(1, a.slot))), a.frac)

    def word_neg(self, a):
        return self.word_sub(self.word_const(0, a.width, a.frac, a.slot), a)

    def word_resize(self, a, width: int):
        bits = a.bits[:width] + (a.bits[-1],) * max(0, width - a.width)
        return BitWord(tuple(bits), a.frac)

    def word_shl(self, a, s: int):
        zero = self.const(0, a.slot)
        return BitWord(((zero,) * s + a.bits)[: a.width], a.frac)

    def word_shr(self, a, s: int):
        return BitWord(a.bits[s:] + (a.bits[-1],) * min(s, a.width), a.frac)

    def word_sign(self, a):
        return a.bits[-1]

    def word_bits(self, a, lo: int, n: int) -> list:
        if lo < 0 or lo + n > a.width:
            raise ValueError("bit range outside the word")
        return list(a.bits[lo:lo + n])

    def word_select(self, sel, a0, a1):
        self._same_width(a0, a1)
        return BitWord(tuple(self.mux(x, y, sel) for x, y in zip(a0.bits, a1.bits)), a0.frac)

    def word_mulc(self, a, c: int, shift: int):
        """floor(a * c / 2^shift) for a public integer c, wrapped to a's width."""
        wide = a.width + shift
        x = self.word_resize(a, wide)
        acc = self.word_const(0, wide, a.frac, a.slot)
        mag = abs(c)
        j = 0
        while mag >> j:
            if (mag >> j) & 1:
                acc = self.word_add(acc, self.word_shl(x, j))
            j += 1
        if c < 0:
            acc = self.word_neg(acc)
        return BitWord(acc.bits[shift:shift + a.width], a.frac)

    def word_mul(self, a, b, shift: int):
        """floor(a * b / 2^shift) of two encrypted words, wrapped to a's width."""
        self._same_width(a, b)
        wide = a.width + shift
        x = self.word_resize(a, wide)
        y = self.word_resize(b, wide)
        acc = self.word_const(0, wide, a.frac, a.slot)
        for j, bit in enumerate(y.bits):
            shifted = self.word_shl(x, j)
            part = BitWord(tuple(self.band(u, bit) for u in shifted.bits), a.frac)
            acc = self.word_add(acc, part)
        return BitWord(acc.bits[shift:shift + a.width], a.frac)

    def word_key_switch(self, a):
        return BitWord(tuple(self.key_switch(b) for b in a.bits), a.frac)

    def word_from_bits(self, bits, frac: int = 0):
        return BitWord(tuple(bits), frac)

    def _same_width(self, a, b):
        if a.width != b.width:
            raise ValueError(f"word widths {a.width} and {b.width} differ")
        if a.slot != b.slot:
            raise SlotMismatchError(f"slots {a.slot} and {b.slot} differ")

    def fixed_ops(self, width: int, frac: int) -> "FixedOps":
        return FixedOps(self, width, frac)


class MockBackend(Backend):
    """Plaintext payloads; depth counts NAND layers since the last refresh.

    packed=True makes word operations act on MockWord integers, which is
    what makes the long fixed-point circuits affordable.
    """

    kind = "mock"

    def __init__(self, chain: KeyChain, packed: bool = True):
        super().__init__(chain)
        self.packed = packed

    def enc(self, bit, slot=1):
        self.chain.key(slot)
        self.stats["enc"] += 1
        return CipherBit(slot, int(bit) & 1, 0)

    def dec(self, x):
        self.chain.key(x.slot)
        return x.payload

    def const(self, bit, slot):
        return CipherBit(slot, int(bit) & 1, 0)

    def nand(self, a, b):
        self._check(a, b)
        self.stats["nand"] += 1
        return CipherBit(a.slot, 1 - (a.payload & b.payload), max(a.depth, b.depth) + 1)

    def key_switch(self, x):
        slot = self._next_slot(x.slot)
        self.stats["key_switch"] += 1
        return CipherBit(slot, x.payload, 0)

    # -- packed words
    def word_enc(self, raw, width, frac, slot=1):
        if not self.packed:
            return super().word_enc(raw, width, frac, slot)
        self.chain.key(slot)
        return MockWord(_wrap(raw, width), width, frac, slot, 0)

    def word_dec(self, w):
        if isinstance(w, BitWord):
            return super().word_dec(w)
        return w.value

    def word_const(self, raw, width, frac, slot):
        if not self.packed:
            return super().word_const(raw, width, frac, slot)
        return MockWord(_wrap(raw, width), width, frac, slot, 0)

    def _pk(self, a, value, extra, width=None, frac=None, depth_from=()):
        d = max([a.depth] + [x.depth for x in depth_from]) + extra
        w = a.width if width is None else width
        return MockWord(_wrap(value, w), w, a.frac if frac is None else frac, a.slot, d)

    def _cost_add(self, w):
        self.stats["nand"] += 9 * w
        return 2 * w + 5

    def word_add(self, a, b):
        if isinstance(a, BitWord):
            return super().word_add(a, b)
        self._same_width(a, b)
        return self._pk(a, a.value + b.value, self._cost_add(a.width), depth_from=(b,))

    def word_sub(self, a, b):
        if isinstance(a, BitWord):
            return super().word_sub(a, b)
        self._same_width(a, b)
        return self._pk(a, a.value - b.value, self._cost_add(a.width), depth_from=(b,))

    def word_neg(self, a):
        if isinstance(a, BitWord):
            return super().word_neg(a)
        return self._pk(a, -a.value, self._cost_add(a.width))

    def word_resize(self, a, width):
        if isinstance(a, BitWord):
            return super().word_resize(a, width)
        return MockWord(_wrap(a.value, width), width, a.frac, a.slot, a.depth)

    def word_shl(self, a, s):
        if isinstance(a, BitWord):
            return super().word_shl(a, s)
        return self._pk(a, a.value << s, 0)

    def word_shr(self, a, s):
        if isinstance(a, BitWord):
            return super().word_shr(a, s)
        return self._pk(a, a.value >> s, 0)

    def word_sign(self, a):
        if isinstance(a, BitWord):
            return super().word_sign(a)
        return CipherBit(a.slot, int(a.value < 0), a.depth)

    def word_bits(self, a, lo, n):
        if isinstance(a, BitWord):
            return super().word_bits(a, lo, n)
        if lo < 0 or lo + n > a.width:
            raise ValueError("bit range outside the word")
        return [CipherBit(a.slot, (a.value >> (lo + i)) & 1, a.depth) for i in range(n)]

    def word_select(self, sel, a0, a1):
        if isinstance(a0, BitWord):
            return super().word_select(sel, a0, a1)
        self._same_width(a0, a1)
        self._check(sel, CipherBit(a0.slot, 0))
        self.stats["nand"] += 4 * a0.width
        v = a1.value if sel.payload else a0.value
        return self._pk(a0, v, 3, depth_from=(a1, MockWord(0, 1, 0, a0.slot, sel.depth)))

    def word_mulc(self, a, c, shift):
        if isinstance(a, BitWord):
            return super().word_mulc(a, c, shift)
        wide = a.width + shift
        terms = bin(abs(c)).count("1") + 1
        extra = terms * self._cost_add(wide)
        return self._pk(a, (a.value * c) >> shift, extra)

    def word_mul(self, a, b, shift):
        if isinstance(a, BitWord):
            return super().word_mul(a, b, shift)
        self._same_width(a, b)
        wide = a.width + shift
        extra = wide * (self._cost_add(wide) + 2)
        self.stats["nand"] += 2 * wide * wide
        return self._pk(a, (a.value * b.value) >> shift, extra, depth_from=(b,))

    def word_key_switch(self, a):
        if isinstance(a, BitWord):
            return super().word_key_switch(a)
        slot = self._next_slot(a.slot)
        self.stats["key_switch"] += a.width
        return MockWord(a.value, a.width, a.frac, slot, 0)

    def word_from_bits(self, bits, frac=0):
        if not self.packed:
            return super().word_from_bits(bits, frac)
        self._check(*bits)
        v = sum(b.payload << i for i, b in enumerate(bits))
        return MockWord(_wrap(v, len(bits)), len(bits), frac, bits[0].slot,
                        max(b.depth for b in bits))


class LatticeBackend(Backend):
    """Matrix ciphertexts per slot; key_switch recrypts with the slot's trapdoor."""

    kind = "lattice"

    def __init__(self, chain: KeyChain, rng: np.random.Generator | None = None):
        if chain.kind != "lattice":
            raise ValueError("lattice backend needs a lattice key chain")
        super().__init__(chain)
        self.params = chain.params
        self.rng = rng or np.random.default_rng()
        self._consts = {b: lat.mhe_const(self.params, b) for b in (0, 1)}

    def enc(self, bit, slot=1):
        self.stats["enc"] += 1
        return CipherBit(slot, lat.mhe_enc(self.chain.key(slot), int(bit) & 1, self.rng), 0)

    def dec(self, x):
        return lat.mhe_dec(self.chain.key(x.slot), x.payload)

    def const(self, bit, slot):
        return CipherBit(slot, self._consts[int(bit) & 1], 0)

    def nand(self, a, b):
        self._check(a, b)
        self.stats["nand"] += 1
        ct = lat.mhe_eval_nand(a.payload, b.payload, self.params)
        return CipherBit(a.slot, ct, max(a.depth, b.depth) + 1)

    def over_budget(self, x: CipherBit) -> bool:
        return x.depth > self.params.eta_c

    def recover(self, x: CipherBit) -> int:
        """Plaintext via Convert then trapdoor inversion under x's slot."""
        try:
            mu, _, _ = lat.invert_alt(self.chain.key(x.slot), lat.mhe_convert(x.payload).c)
        except lat.InversionError as exc:
            raise BudgetError(f"noise too large to invert at depth {x.depth}") from exc
        return mu

    def key_switch(self, x):
        slot = self._next_slot(x.slot)
        mu = self.recover(x)
        self.stats["key_switch"] += 1
        return CipherBit(slot, lat.mhe_enc(self.chain.key(slot), mu, self.rng), 0)

    def convert(self, x: CipherBit) -> lat.AltCiphertext:
        return lat.mhe_convert(x.payload)

    def xor_alt(self, a: CipherBit, b: CipherBit) -> lat.AltCiphertext:
        """XOR without NAND gates by adding the converted vector ciphertexts."""
        self._check(a, b)
        return lat.alt_xor(self.convert(a), self.convert(b), self.params)


def make_backend(chain: KeyChain, rng: np.random.Generator | None = None, **kw) -> Backend:
    if chain.kind == "mock":
        return MockBackend(chain, **kw)
    return LatticeBackend(chain, rng)


# ------------------------------------------------------- fixed-point ops

class FixedOps:
    """The ops interface of eulerconv.PlainOps, evaluated on a backend."""

    def __init__(self, backend: Backend, width: int, frac: int, slot: int | None = None):
        self.b = backend
        self.width = width
        self.frac = frac
        self.slot = slot

    def load(self, w):
        """Import a word with fewer fractional bits into this format."""
        if self.slot is None:
            self.slot = w.slot
        elif w.slot != self.slot:
            raise SlotMismatchError("inputs under different slots")
        if w.frac > self.frac:
            raise ValueError("input has more fractional bits than the pipeline")
        x = self.b.word_resize(w, self.width)
        return self.b.word_shl(x, self.frac - w.frac)

    def const(self, raw):
        return self.b.word_const(raw, self.width, self.frac, self.slot)

    def add(self, a, b):
        return self.b.word_add(a, b)

    def sub(self, a, b):
        return self.b.word_sub(a, b)

    def neg(self, a):
        return self.b.word_neg(a)

    def mul(self, a, b):
        return self.b.word_mul(a, b, self.frac)

    def mulc(self, a, c):
        return self.b.word_mulc(a, c, self.frac)

    def shr(self, a, s):
        return self.b.word_shr(a, s)

    def sign(self, a):
        return self.b.word_sign(a)

    def select(self, sel, a0, a1):
        return self.b.word_select(sel, a0, a1)

    def bits(self, a, lo, n):
        return self.b.word_bits(a, lo, n)

    def bnot(self, x):
        return self.b.bnot(x)

    def band(self, x, y):
        return self.b.band(x, y)

    def bor(self, x, y):
        return self.b.bor(x, y)


# ------------------------------------------------------ angle words

def enc_fraction(backend: Backend, value, m: int, slot: int = 1) -> CipherWord:
    """Encrypt an m-bit fraction in [0, 1) bit by bit (MSB first)."""
    n = Fraction(value) * (1 << m)
    if n.denominator != 1 or not 0 <= n < (1 << m):
        raise ValueError(f"{value} is not an m-bit fraction in [0, 1)")
    n = int(n)
    return CipherWord(tuple(backend.enc((n >> (m - 1 - j)) & 1, slot) for j in range(m)))


def dec_fraction(backend: Backend, w: CipherWord) -> Fraction:
    v = 0
    for b in w.bits:
        v = (v << 1) | backend.dec(b)
    return Fraction(v, 1 << w.m)


def add_mod1(backend: Backend, a: CipherWord, b: CipherWord) -> CipherWord:
    """Ripple-carry sum of two m-bit fractions; the carry out of 2^-1 is dropped."""
    if a.m != b.m:
        raise ValueError("fraction widths differ")
    backend._check(*a.bits, *b.bits)
    carry = backend.const(0, a.slot)
    out = []
    for x, y in zip(reversed(a.bits), reversed(b.bits)):
        s, carry = backend._full_add(x, y, carry)
        out.append(s)
    return CipherWord(tuple(reversed(out)))


def add_lsb_mod1(backend: Backend, a: CipherWord, bit: CipherBit) -> CipherWord:
    """a + bit * 2^-m (mod 1) with a half-adder chain."""
    backend._check(*a.bits, bit)
    carry = bit
    out = []
    for x in reversed(a.bits):
        out.append(backend.bxor(x, carry))
        carry = backend.band(x, carry)
    return CipherWord(tuple(reversed(out)))


def negate_mod1(backend: Backend, a: CipherWord, sel: CipherBit) -> CipherWord:
    """(-1)^sel * a mod 1: XOR every bit with sel, then add sel at the LSB."""
    flipped = CipherWord(tuple(backend.bxor(x, sel) for x in a.bits))
    return add_lsb_mod1(backend, flipped, sel)


def key_switch_word(backend: Backend, w: CipherWord, slot: int | None = None) -> CipherWord:
    target = w.slot + 1 if slot is None else slot
    return CipherWord(tuple(backend.key_switch_to(b, target) for b in w.bits))


def drop_lsb(w: CipherWord) -> CipherWord:
    return CipherWord(w.bits[:-1])


# ----------------------------------------------- encrypted quaternions

def key_width(k: int) -> int:
    """Two's-complement width of a k-bit key component (covers [-2, 2))."""
    return k + 2


def enc_quat(backend: Backend, t_raw, k: int, slot: int = 1) -> tuple:
    return tuple(backend.word_enc(int(r), key_width(k), k, slot) for r in t_raw)


def dec_quat_raw(backend: Backend, words) -> tuple:
    return tuple(backend.word_dec(w) for w in words)


def eval_quat_mul_encrypted(backend: Backend, enc_t, g, k: int) -> tuple:
    """Encrypted t times public g, truncated toward zero to k bits.

    g is given by its raw k-bit integers. Each output component is a public
    linear combination of the t_i, so only constant products and additions
    are evaluated.
    """
    g = tuple(int(x) for x in g)
    wide = 2 * k + 4
    ts = [backend.word_resize(w, wide) for w in enc_t]
    basis = [(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 1, 0), (0, 0, 0, 1)]
    coeff = [quat_mul(e, g) for e in basis]  # coeff[i][l]: weight of t_i in output l
    out = []
    for l in range(4):
        acc = None
        for i in range(4):
            c = coeff[i][l]
            if c == 0:
                continue
            term = backend.word_mulc(ts[i], c, 0)
            acc = term if acc is None else backend.word_add(acc, term)
        if acc is None:
            acc = backend.word_const(0, wide, k, ts[0].slot)
        neg = backend.word_sign(acc)
        bias = backend.word_select(neg, backend.word_const(0, wide, k, acc.slot),
                                   backend.word_const((1 << k) - 1, wide, k, acc.slot))
        q = backend.word_shr(backend.word_add(acc, bias), k)
        out.append(backend.word_resize(q, key_width(k)))
    return tuple(out)


def quat_mul_trunc_raw(t_raw, g_raw, k: int) -> tuple:
    """Plaintext twin of eval_quat_mul_encrypted."""
    prod = quat_mul(tuple(int(x) for x in t_raw), tuple(int(x) for x in g_raw))
    return tuple(trunc_raw(Fraction(v, 1 << (2 * k)), k) for v in prod)


__all__ = [
    "Backend", "BitWord", "BudgetError", "ChainError", "CipherBit", "CipherWord",
    "FixedOps", "KeyChain", "LatticeBackend", "MockBackend", "MockWord",
    "SlotMismatchError", "add_lsb_mod1", "add_mod1", "dec_fraction", "dec_quat_raw",
    "drop_lsb", "enc_fraction", "enc_quat", "eval_quat_mul_encrypted", "key_switch_word",
    "key_width", "keychain_gen", "make_backend", "negate_mod1", "quat_mul_trunc_raw",
    "slot_count",
]
