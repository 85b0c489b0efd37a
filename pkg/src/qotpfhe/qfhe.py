"""Quaternion one-time pad and the leveled scheme built on it.

A qubit is encrypted by U_t for a random k-bit 4-vector t, the gate key.
One-qubit gates touch only the encrypted key: decrypting with t * g^-1
instead of t yields g applied to the plaintext. A CNOT first turns each
pad into a Pauli pad with the encrypted conditional unitary, moves the
Pauli keys through the CNOT, and writes them back as quaternion keys.

Key slots: level l (1-based) runs its conditional unitaries on slots
(l-1)3k+1 .. l*3k and hands its keys to slot l*3k+1. Decryption happens
at the tail slot 3kL+1.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import lattice as lat
from .crot import CrotEngine, SimMode
from .eulerconv import EulerAngles, euler_to_matrix, euler_to_quat, he_euler_from_quat
from .hebackend import (
    Backend, BitWord, ChainError, CipherBit, CipherWord, KeyChain, MockWord, enc_quat,
    eval_quat_mul_encrypted, key_width, keychain_gen, make_backend, slot_count,
)
from .qsim import MAX_QUBITS, StateVector, apply_1q, apply_cnot
from .su2core import (
    quat_inv, quat_to_matrix, su2_from_unitary, trunc_raw, unitary_approx, unitary_approx_batch,
)

# Taylor degree for the homomorphic Euler conversion; degree 32 already
# reaches the 16-bit rounding floor on near-unit inputs
EVAL_TAYLOR_DEGREE = 64


class LevelOverflowError(ValueError):
    """The circuit needs more levels than the key chain provides."""


# ------------------------------------------------------------- gate keys

@dataclass(frozen=True)
class GateKey:
    """Four components stored as integers scaled by 2^k."""

    raw: tuple
    k: int

    def __post_init__(self):
        if len(self.raw) != 4:
            raise ValueError("a gate key has four components")
        lim = 1 << (self.k + 1)
        if any(not -lim <= int(r) < lim for r in self.raw):
            raise ValueError("gate key component outside [-2, 2)")

    @classmethod
    def from_quat(cls, t, k: int) -> "GateKey":
        """Truncate each component toward zero to k fractional bits."""
        return cls(tuple(trunc_raw(x, k) for x in t), k)

    @property
    def value(self) -> tuple:
        return tuple(r / (1 << self.k) for r in self.raw)

    @property
    def norm(self) -> float:
        return math.sqrt(sum(float(x) ** 2 for x in self.value))


def qotp_keygen(k: int, rng: np.random.Generator) -> GateKey:
    """Three uniform k-bit magnitudes with sum of squares <= 1, the fourth
    completing the norm (rounded to k bits), then a random signed permutation."""
    if k < 1:
        raise ValueError("k must be positive")
    one = 1 << (2 * k)
    while True:
        h = [int(x) for x in rng.integers(0, 1 << k, size=3)]
        rest = one - sum(x * x for x in h)
        if rest >= 0:
            break
    h.append((math.isqrt(4 * rest) + 1) // 2)  # nearest integer to sqrt(rest)
    perm = rng.permutation(4)
    signs = rng.integers(0, 2, size=4)
    return GateKey(tuple(-h[p] if s else h[p] for p, s in zip(perm, signs)), k)


def sample_keys_batch(k: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """n keys from the qotp_keygen distribution as an (n, 4) array of floats."""
    if not 1 <= k <= 24:
        raise ValueError("batched sampling supports 1 <= k <= 24")
    one = 1 << (2 * k)
    out = np.empty((0, 3), dtype=np.int64)
    while out.shape[0] < n:
        h = rng.integers(0, 1 << k, size=(2 * (n - out.shape[0]) + 16, 3), dtype=np.int64)
        ok = (h * h).sum(axis=1) <= one
        out = np.vstack([out, h[ok]])
    h = out[:n]
    rest = one - (h * h).sum(axis=1)
    h4 = np.floor(np.sqrt(rest.astype(np.float64)) + 0.5).astype(np.int64)
    full = np.concatenate([h, h4[:, None]], axis=1)
    perm = np.argsort(rng.random((n, 4)), axis=1)
    full = np.take_along_axis(full, perm, axis=1)
    signs = np.where(rng.integers(0, 2, size=(n, 4)) == 1, -1, 1)
    return (full * signs) / float(1 << k)


def pauli_embed(x1: int, x2: int) -> tuple:
    """Key whose pad is Z^x1 X^x2 up to phase."""
    x1, x2 = int(x1), int(x2)
    return ((1 - x1) * (1 - x2), x2 * (1 - x1), x1 * (1 - x2), -x1 * x2)


def pauli_key(a: int, b: int, k: int) -> GateKey:
    """Gate key of the pad X^a Z^b."""
    return GateKey(tuple(v << k for v in pauli_embed(b, a)), k)


def pauli_keygen(k: int, rng: np.random.Generator) -> tuple:
    """Uniform Pauli pad as a gate key; returns (key, (a, b))."""
    a, b = (int(x) for x in rng.integers(0, 2, size=2))
    return pauli_key(a, b, k), (a, b)


def pad_matrix(key: GateKey) -> np.ndarray:
    return quat_to_matrix(unitary_approx(key.value))


def unpad_matrix(key: GateKey) -> np.ndarray:
    return quat_to_matrix(unitary_approx(quat_inv(key.value)))


def qotp_enc(key: GateKey, state: StateVector, qubit: int) -> StateVector:
    return apply_1q(state, qubit, pad_matrix(key))


def qotp_dec(key: GateKey, state: StateVector, qubit: int) -> StateVector:
    return apply_1q(state, qubit, unpad_matrix(key))


def security_trial(k: int, psi, trials: int, rng: np.random.Generator,
                   chunk: int = 50_000) -> np.ndarray:
    """Mean density matrix of qotp_enc(psi) over fresh keys."""
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.size != 2:
        raise ValueError("psi must be a 1-qubit state")
    psi = psi / np.linalg.norm(psi)
    total = np.zeros((2, 2), dtype=complex)
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        if k <= 24:
            t = unitary_approx_batch(sample_keys_batch(k, n, rng))
        else:
            t = np.array([unitary_approx(qotp_keygen(k, rng).value) for _ in range(n)])
        # rows of U_t psi, with U_t = [[t1 + t3 i, t4 + t2 i], [-t4 + t2 i, t1 - t3 i]]
        a = t[:, 0] + 1j * t[:, 2]
        b = t[:, 3] + 1j * t[:, 1]
        out0 = a * psi[0] + b * psi[1]
        out1 = -np.conj(b) * psi[0] + np.conj(a) * psi[1]
        v = np.stack([out0, out1], axis=1)
        total += v.T @ v.conj()
        done += n
    mean = total / trials
    return 0.5 * (mean + mean.conj().T)


# -------------------------------------------------------------- scheme

@dataclass(frozen=True)
class QheParams:
    lam: int
    levels: int
    k: int
    backend: str = "mock"
    degree: int = EVAL_TAYLOR_DEGREE
    lwe: lat.LweParams | None = None

    def __post_init__(self):
        if self.k < 1 or self.levels < 0 or self.lam < 1:
            raise ValueError("need k >= 1, levels >= 0 and lambda >= 1")
        if self.degree + 8 < self.k + 2:
            raise ValueError("Taylor degree too small for k-bit angles")

    @property
    def slots_per_level(self) -> int:
        return 3 * self.k

    @property
    def n_slots(self) -> int:
        return slot_count(self.k, self.levels)

    @property
    def tail(self) -> int:
        return self.n_slots

    def level_slot(self, level: int) -> int:
        """First slot of a 1-based level; level L+1 is the tail."""
        return (level - 1) * self.slots_per_level + 1

    @property
    def nand_budget(self) -> int:
        return self.lwe.eta_c if self.lwe is not None else 0


def qhe_keygen(lam: int, levels: int, k: int, backend: str = "mock",
               rng: np.random.Generator | None = None,
               preset: str = "toy_s", degree: int = EVAL_TAYLOR_DEGREE) -> tuple:
    """Key chain with 3kL+1 slots plus the scheme parameters."""
    rng = rng or np.random.default_rng()
    lwe = lat.gen_params(preset, lam)
    params = QheParams(lam, levels, k, backend, degree, lwe)
    chain = keychain_gen(lam, levels, k, backend, lwe, rng)
    return chain, params


@dataclass
class QotpCiphertext:
    qubit: int
    key: tuple  # four encrypted words
    gates: int = 0  # one-qubit gates folded into the key since the last reset

    @property
    def slot(self) -> int:
        return self.key[0].slot


@dataclass
class EncryptedRegister:
    state: StateVector
    cts: list
    k: int

    @property
    def n_qubits(self) -> int:
        return self.state.n_qubits


class QheContext:
    """Evaluator-side objects shared by one session."""

    def __init__(self, chain: KeyChain, params: QheParams,
                 mode: SimMode = SimMode.IDEALIZED,
                 rng: np.random.Generator | None = None,
                 backend: Backend | None = None, record: bool = False):
        if chain.n_slots != params.n_slots:
            raise ChainError(f"chain has {chain.n_slots} slots, parameters need {params.n_slots}")
        self.chain = chain
        self.params = params
        self.rng = rng or np.random.default_rng()
        self.backend = backend or make_backend(chain, self.rng)
        self.engine = CrotEngine(self.backend, mode, self.rng, record=record)

    @property
    def k(self) -> int:
        return self.params.k


def qhe_enc(ctx: QheContext, state: StateVector, rng: np.random.Generator | None = None,
            pauli: bool = False) -> EncryptedRegister:
    """Pad every qubit with an independent key and encrypt the keys at slot 1."""
    rng = rng or ctx.rng
    out = state.copy()
    cts = []
    for q in range(out.n_qubits):
        key = pauli_keygen(ctx.k, rng)[0] if pauli else qotp_keygen(ctx.k, rng)
        qotp_enc(key, out, q)
        cts.append(QotpCiphertext(q, enc_quat(ctx.backend, key.raw, ctx.k, 1)))
    return EncryptedRegister(out, cts, ctx.k)


def qhe_enc_with_keys(ctx: QheContext, state: StateVector, keys) -> EncryptedRegister:
    """Encryption under caller-chosen gate keys (tests and demos)."""
    out = state.copy()
    cts = []
    for q, key in enumerate(keys):
        if key.k != ctx.k:
            raise ValueError("key precision differs from the scheme's k")
        qotp_enc(key, out, q)
        cts.append(QotpCiphertext(q, enc_quat(ctx.backend, key.raw, ctx.k, 1)))
    return EncryptedRegister(out, cts, ctx.k)


def decrypt_keys(ctx: QheContext, reg: EncryptedRegister) -> list:
    return [GateKey(tuple(ctx.backend.word_dec(w) for w in ct.key), ctx.k) for ct in reg.cts]


def qhe_dec(ctx: QheContext, reg: EncryptedRegister) -> StateVector:
    """Remove the pads using gate keys decrypted at the tail slot."""
    out = reg.state.copy()
    for ct, key in zip(reg.cts, decrypt_keys(ctx, reg)):
        if ct.slot != ctx.params.tail:
            raise ChainError(f"qubit {ct.qubit} key sits at slot {ct.slot}, "
                             f"decryption needs slot {ctx.params.tail}")
        qotp_dec(key, out, ct.qubit)
    return out


def gate_quat(gate) -> tuple:
    """Unit quaternion of a gate given as a quaternion, Euler triple or 2x2 matrix."""
    if isinstance(gate, EulerAngles):
        return euler_to_quat(gate)
    arr = np.asarray(gate)
    if arr.shape == (2, 2):
        return su2_from_unitary(arr)
    return tuple(float(x) for x in gate)


def eval_1q(ctx: QheContext, ct: QotpCiphertext, gate) -> QotpCiphertext:
    """New key t * g^-1 for the k-bit representation g of the gate; no quantum step."""
    g = GateKey.from_quat(gate_quat(gate), ctx.k)
    key = eval_quat_mul_encrypted(ctx.backend, ct.key, quat_inv(g.raw), ctx.k)
    return replace(ct, key=key, gates=ct.gates + 1)


def he_pauli_embed(backend: Backend, x1, x2, k: int) -> tuple:
    """Encrypted pauli_embed(x1, x2) as four (k+2)-bit two's-complement words.

    Each component is 0 or +-1, so only bit k (and bit k+1 for -1) can be set.
    """
    n1, n2 = backend.bnot(x1), backend.bnot(x2)
    ones = (backend.band(n1, n2), backend.band(x2, n1), backend.band(x1, n2))
    neg = backend.band(x1, x2)
    zero = backend.const(0, x1.slot)
    width = key_width(k)

    def word(bit_k, bit_top):
        bits = [zero] * width
        bits[k] = bit_k
        bits[k + 1] = bit_top
        return backend.word_from_bits(bits, k)

    return tuple(word(b, zero) for b in ones) + (word(neg, neg),)


def _switch_word(backend: Backend, w, slot: int):
    if slot < w.slot:
        raise ChainError("key switching only moves forward")
    while w.slot < slot:
        w = backend.word_key_switch(w)
    return w


def _switch_ct(ctx: QheContext, ct: QotpCiphertext, slot: int) -> QotpCiphertext:
    return replace(ct, key=tuple(_switch_word(ctx.backend, w, slot) for w in ct.key))


def to_pauli_form(ctx: QheContext, reg: EncryptedRegister, q: int) -> tuple:
    """Turn qubit q's pad into X^a Z^b; returns encrypted (a, b) at the level's last slot."""
    ct = reg.cts[q]
    bits = he_euler_from_quat(ct.key, ctx.params.degree, ctx.backend, bits=ctx.k)
    # deepest NAND chain of the conversion circuit (an upper bound on mock)
    depth = max(x.depth for word in bits for x in word)
    stats = ctx.backend.stats
    stats["euler_depth"] = max(stats["euler_depth"], depth)
    words = tuple(CipherWord(tuple(b)) for b in bits)
    return ctx.engine.cunitary(words, reg.state, q)


def eval_cnot(ctx: QheContext, reg: EncryptedRegister, c: int, t: int) -> EncryptedRegister:
    """CNOT(c -> t) on the encrypted register; both keys advance one level."""
    if c == t:
        raise ValueError("control and target coincide")
    p = ctx.params
    s = reg.cts[c].slot
    if reg.cts[t].slot != s:
        raise ChainError("both keys must sit at the same slot")
    if (s - 1) % p.slots_per_level:
        raise ChainError(f"slot {s} is not the start of a level")
    nxt = s + p.slots_per_level
    if nxt > p.n_slots:
        raise LevelOverflowError("no key slots left for another CNOT level")
    b = ctx.backend
    ac, bc = to_pauli_form(ctx, reg, c)
    at, bt = to_pauli_form(ctx, reg, t)
    apply_cnot(reg.state, c, t)
    new = {c: (ac, b.bxor(bc, bt)), t: (b.bxor(at, ac), bt)}
    for q, (x, z) in new.items():
        x, z = b.key_switch_to(x, nxt), b.key_switch_to(z, nxt)
        reg.cts[q] = QotpCiphertext(q, he_pauli_embed(b, z, x, ctx.k), 0)
    return reg


# ------------------------------------------------------------- circuits

@dataclass(frozen=True)
class Gate1:
    qubit: int
    form: str  # "quat" or "euler"
    params: tuple  # Fractions

    def __post_init__(self):
        if self.form not in ("quat", "euler"):
            raise ValueError(f"unknown gate form {self.form!r}")
        if len(self.params) != (4 if self.form == "quat" else 3):
            raise ValueError(f"{self.form} gate needs {4 if self.form == 'quat' else 3} numbers")
        if self.form == "euler":
            EulerAngles(*self.params)

    def quat(self) -> tuple:
        if self.form == "quat":
            return tuple(float(x) for x in self.params)
        return euler_to_quat(self.params)

    def matrix(self) -> np.ndarray:
        if self.form == "euler":
            return euler_to_matrix(self.params)
        return quat_to_matrix(unitary_approx(self.quat()))

    def representable(self, bits: int) -> bool:
        scale = 1 << bits
        return all((Fraction(x) * scale).denominator == 1 for x in self.params)


@dataclass
class Level:
    gates: list = field(default_factory=list)
    cnots: list = field(default_factory=list)

    def cnot_qubits(self) -> set:
        return {q for pair in self.cnots for q in pair}


@dataclass
class Circuit:
    levels: list = field(default_factory=list)

    @property
    def n_qubits(self) -> int:
        qs = [g.qubit for lv in self.levels for g in lv.gates]
        qs += [q for lv in self.levels for pair in lv.cnots for q in pair]
        return max(qs) + 1 if qs else 0

    def counts(self) -> dict:
        return {"levels": len(self.levels),
                "one_qubit": sum(len(lv.gates) for lv in self.levels),
                "cnot": sum(len(lv.cnots) for lv in self.levels)}

    def check(self, k: int | None = None, m: int | None = None):
        """Disjoint CNOT pairs per level; numbers exact at k (quat) or m (Euler) bits."""
        for i, lv in enumerate(self.levels, 1):
            seen = set()
            for c, t in lv.cnots:
                if c == t or c in seen or t in seen:
                    raise ValueError(f"level {i}: CNOT pairs must be disjoint")
                seen |= {c, t}
            for g in lv.gates:
                bits = k if g.form == "quat" else m
                if bits is not None and not g.representable(bits):
                    raise ValueError(f"level {i}: {g.form} gate on qubit {g.qubit} "
                                     f"is not exact at {bits} bits")


class CircuitSyntaxError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


def _num(tok: str, lineno: int) -> Fraction:
    try:
        return Fraction(tok)
    except (ValueError, ZeroDivisionError):
        raise CircuitSyntaxError(lineno, f"bad number {tok!r}") from None


def _qubit(tok: str, lineno: int) -> int:
    if not re.fullmatch(r"\d+", tok):
        raise CircuitSyntaxError(lineno, f"bad qubit index {tok!r}")
    q = int(tok)
    if q >= MAX_QUBITS:
        raise CircuitSyntaxError(lineno, f"qubit index {q} exceeds the simulator limit")
    return q


def parse_circuit(text: str) -> Circuit:
    """Parse the line format; a gate after a CNOT (or a CNOT touching a
    qubit already used by this level's CNOTs) opens a new level."""
    levels = []
    cur = Level()
    explicit = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        op = toks[0].upper()
        if op == "LEVEL":
            if len(toks) != 1:
                raise CircuitSyntaxError(lineno, "LEVEL takes no arguments")
            if cur.gates or cur.cnots or explicit:
                levels.append(cur)
            cur = Level()
            explicit = True
        elif op == "U":
            if len(toks) < 3:
                raise CircuitSyntaxError(lineno, "expected U <qubit> quat|euler ...")
            q = _qubit(toks[1], lineno)
            form = toks[2].lower()
            nums = tuple(_num(x, lineno) for x in toks[3:])
            try:
                gate = Gate1(q, form, nums)
            except ValueError as exc:
                raise CircuitSyntaxError(lineno, str(exc)) from None
            if cur.cnots:
                levels.append(cur)
                cur = Level()
            cur.gates.append(gate)
        elif op == "CNOT":
            if len(toks) != 3:
                raise CircuitSyntaxError(lineno, "expected CNOT <control> <target>")
            c, t = _qubit(toks[1], lineno), _qubit(toks[2], lineno)
            if c == t:
                raise CircuitSyntaxError(lineno, "control and target coincide")
            if {c, t} & cur.cnot_qubits():
                levels.append(cur)
                cur = Level()
            cur.cnots.append((c, t))
        else:
            raise CircuitSyntaxError(lineno, f"unknown instruction {toks[0]!r}")
    if cur.gates or cur.cnots:
        levels.append(cur)
    return Circuit(levels)


def _fmt(x: Fraction) -> str:
    """Exact decimal for dyadic fractions, p/q otherwise."""
    x = Fraction(x)
    d = x.denominator
    j = d.bit_length() - 1
    if d != 1 << j:
        return f"{x.numerator}/{d}"
    if j == 0:
        return str(x.numerator)
    digits = abs(x.numerator) * 5 ** j
    s = str(digits).rjust(j + 1, "0")
    s = f"{s[:-j]}.{s[-j:]}".rstrip("0").rstrip(".")
    return ("-" if x < 0 else "") + s


def format_circuit(circuit: Circuit) -> str:
    out = []
    for i, lv in enumerate(circuit.levels):
        if i:
            out.append("LEVEL")
        for g in lv.gates:
            out.append(f"U {g.qubit} {g.form} " + " ".join(_fmt(x) for x in g.params))
        for c, t in lv.cnots:
            out.append(f"CNOT {c} {t}")
    return "\n".join(out) + "\n"


def simulate(circuit: Circuit, state: StateVector) -> StateVector:
    """Plaintext reference run."""
    out = state.copy()
    for lv in circuit.levels:
        for g in lv.gates:
            apply_1q(out, g.qubit, g.matrix())
        for c, t in lv.cnots:
            apply_cnot(out, c, t)
    return out


def euler_gate(q: int, a, b, g) -> Gate1:
    return Gate1(q, "euler", (Fraction(a), Fraction(b), Fraction(g)))


def hadamard(q: int) -> Gate1:
    return euler_gate(q, 0, Fraction(1, 4), Fraction(1, 2))


def phase_rot(q: int, a) -> Gate1:
    """R_a = diag(1, e^{2 pi i a})."""
    return euler_gate(q, Fraction(a) % 1, 0, 0)


def controlled_phase_lines(c: int, t: int, a) -> list:
    """Controlled R_a as R_{a/2}(c), R_{a/2}(t), CNOT, R_{-a/2}(t), CNOT."""
    h = Fraction(a) / 2
    return [("U", phase_rot(c, h)), ("U", phase_rot(t, h)), ("CNOT", (c, t)),
            ("U", phase_rot(t, -h)), ("CNOT", (c, t))]


def circuit_from_ops(ops) -> Circuit:
    """Build levels from ("U", Gate1) / ("CNOT", (c, t)) items by the parser's rules."""
    lines = []
    for kind, x in ops:
        if kind == "U":
            lines.append(f"U {x.qubit} {x.form} " + " ".join(_fmt(v) for v in x.params))
        elif kind == "CNOT":
            lines.append(f"CNOT {x[0]} {x[1]}")
        else:
            raise ValueError(f"unknown op {kind!r}")
    return parse_circuit("\n".join(lines))


def qft_circuit(n: int, swaps: bool = True) -> Circuit:
    """QFT on n qubits with qubit n-1 as the most significant bit.

    Controlled phases are expanded into one-qubit gates and CNOTs; the final
    bit reversal uses three CNOTs per swap.
    """
    ops = []
    for j in reversed(range(n)):
        ops.append(("U", hadamard(j)))
        for i in reversed(range(j)):
            ops += controlled_phase_lines(i, j, Fraction(1, 1 << (j - i + 1)))
    if swaps:
        for i in range(n // 2):
            a, b = i, n - 1 - i
            ops += [("CNOT", (a, b)), ("CNOT", (b, a)), ("CNOT", (a, b))]
    return circuit_from_ops(ops)


def dft_state(n: int, x: int) -> np.ndarray:
    """QFT|x> with the integer basis index as the amplitude index."""
    dim = 1 << n
    return np.exp(2j * np.pi * x * np.arange(dim) / dim) / math.sqrt(dim)


def eval_circuit(ctx: QheContext, reg: EncryptedRegister, circuit: Circuit) -> EncryptedRegister:
    """Evaluate level by level, then bring every key to the tail slot."""
    p = ctx.params
    circuit.check(m=p.k)
    if circuit.n_qubits > reg.n_qubits:
        raise ValueError("circuit addresses more qubits than the register holds")
    start = reg.cts[0].slot if reg.cts else 1
    if any(ct.slot != start for ct in reg.cts):
        raise ChainError("register keys sit at different slots")
    level = (start - 1) // p.slots_per_level
    needed = sum(1 for lv in circuit.levels if lv.cnots)
    if level + needed > p.levels:
        raise LevelOverflowError(f"circuit needs {needed} CNOT levels, "
                                 f"{p.levels - level} remain")
    for lv in circuit.levels:
        for g in lv.gates:
            reg.cts[g.qubit] = eval_1q(ctx, reg.cts[g.qubit], g.quat())
        if not lv.cnots:
            continue
        level += 1
        for c, t in lv.cnots:
            eval_cnot(ctx, reg, c, t)
        nxt = p.level_slot(level + 1)
        busy = lv.cnot_qubits()
        for q, ct in enumerate(reg.cts):
            if q not in busy:
                reg.cts[q] = _switch_ct(ctx, ct, nxt)
    return finalize(ctx, reg)


def finalize(ctx: QheContext, reg: EncryptedRegister) -> EncryptedRegister:
    reg.cts = [_switch_ct(ctx, ct, ctx.params.tail) for ct in reg.cts]
    return reg


# --------------------------------------------------- ciphertext bundle

def register_to_bytes(ctx: QheContext, reg: EncryptedRegister) -> bytes:
    """Header, encrypted gate keys, and the simulated quantum register.

    The amplitudes are the padded (encrypted) state; a real deployment would
    hand over qubits instead.
    """
    amp = reg.state.amplitudes
    arrays = {
        "meta": np.array([reg.n_qubits, reg.k, ctx.chain.kind == "lattice"], dtype=np.int64),
        "slots": np.array([ct.slot for ct in reg.cts], dtype=np.int64),
        "gates": np.array([ct.gates for ct in reg.cts], dtype=np.int64),
        "state_re": np.ascontiguousarray(amp.real).view(np.int64),
        "state_im": np.ascontiguousarray(amp.imag).view(np.int64),
    }
    for ct in reg.cts:
        for i, w in enumerate(ct.key):
            if isinstance(w, MockWord):
                arrays[f"key.{ct.qubit}.{i}"] = np.array([w.value, w.width, w.frac], dtype=np.int64)
            else:
                arrays[f"key.{ct.qubit}.{i}"] = np.stack([b.payload.C for b in w.bits])
    return lat.pack_arrays(lat.KIND_BUNDLE, ctx.chain.params, arrays)


def register_from_bytes(ctx: QheContext, blob: bytes) -> EncryptedRegister:
    _, _, arrs = lat.unpack_arrays(blob, lat.KIND_BUNDLE, ctx.chain.params)
    n, k, is_lattice = (int(v) for v in arrs["meta"])
    if bool(is_lattice) != (ctx.chain.kind == "lattice"):
        raise lat.FormatError("bundle and key chain use different backends")
    if k != ctx.k:
        raise lat.FormatError(f"bundle uses k = {k}, keys use k = {ctx.k}")
    amp = arrs["state_re"].view(np.float64) + 1j * arrs["state_im"].view(np.float64)
    state = StateVector(amp, n)
    cts = []
    for q in range(n):
        slot = int(arrs["slots"][q])
        ctx.chain.key(slot)
        words = []
        for i in range(4):
            a = arrs[f"key.{q}.{i}"]
            if is_lattice:
                bits = tuple(CipherBit(slot, lat.MheCiphertext(c.astype(np.uint64)), 0) for c in a)
                words.append(BitWord(bits, k))
            else:
                words.append(MockWord(int(a[0]), int(a[1]), int(a[2]), slot, 0))
        cts.append(QotpCiphertext(q, tuple(words), int(arrs["gates"][q])))
    return EncryptedRegister(state, cts, k)


# ------------------------------------------------------------ cost model

def cost_prior(lam: int, p: float, t_q: float) -> float:
    """Pauli-pad scheme: lam^2 encrypted CNOTs per one-qubit gate, one per CNOT."""
    return (1 - p) * lam ** 2 * t_q + p * t_q


def cost_ours(lam: int, p: float, t_q: float, t_c: float) -> float:
    """Quaternion pad: lam classical bit operations per one-qubit gate,
    lam conditional-rotation steps per CNOT."""
    return (1 - p) * lam * t_c + p * lam * t_q


def cost_table(p: float, lams, t_q: float, t_c: float) -> list:
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    rows = []
    for lam in lams:
        prior, ours = cost_prior(lam, p, t_q), cost_ours(lam, p, t_q, t_c)
        rows.append({"lambda": int(lam), "prior": prior, "ours": ours,
                     "ratio": prior / ours if ours else math.inf})
    return rows


def linear_fit(xs, ys) -> tuple:
    """Least-squares line; returns (slope, intercept, r_squared)."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(xs, ys, 1)
    pred = slope * xs + intercept
    ss_res = float(np.sum((ys - pred) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def rotation_steps_per_cnot(m: int) -> int:
    """Controlled-rotation invocations for one CNOT: two qubits, three stages
    of m-bit angles, m - 1 steps each (the top bit needs no quantum step)."""
    return 2 * 3 * (m - 1)


__all__ = [
    "Circuit", "CircuitSyntaxError", "EncryptedRegister", "EVAL_TAYLOR_DEGREE", "Gate1",
    "GateKey", "Level", "LevelOverflowError", "QheContext", "QheParams", "QotpCiphertext",
    "circuit_from_ops", "controlled_phase_lines", "cost_ours", "cost_prior", "cost_table",
    "decrypt_keys", "dft_state", "euler_gate", "eval_1q", "eval_circuit", "eval_cnot",
    "finalize", "format_circuit", "hadamard", "he_pauli_embed", "linear_fit", "pad_matrix",
    "parse_circuit", "pauli_embed", "pauli_key", "pauli_keygen", "phase_rot", "qft_circuit",
    "qhe_dec", "qhe_enc", "qhe_enc_with_keys", "qhe_keygen", "qotp_dec", "qotp_enc",
    "qotp_keygen", "register_from_bytes", "register_to_bytes", "rotation_steps_per_cnot",
    "sample_keys_batch", "security_trial", "simulate", "to_pauli_form", "unpad_matrix",
]
