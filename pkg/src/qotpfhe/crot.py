"""Rotations of a qubit controlled by encrypted angle bits.

The basic step rotates by R_w^{-zeta} for an encrypted bit zeta and leaves
two masks on the qubit, Z^{d1} and R_{2w}^{d2}; with a key chain both masks
come back encrypted one slot further along. Chaining the step over the
bits of an encrypted angle (least significant first, folding each R_{2w}
mask into the bits still to come) gives Z^d R_alpha^{-1}. Conjugating by S
gives the T-type rotation, and three such stages give any U^{-1} up to a
Pauli mask X^{d1} Z^{d2}.

Two simulation modes:
  IDEALIZED  apply the closed-form output operator with uniform masks
  EXACT      sample the lattice measurement outcomes classically and apply
             the resulting (slightly non-unitary) branch weights
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np

from . import lattice as lat
from .eulerconv import rot_r, rot_t
from .hebackend import (
    Backend, BudgetError, CipherBit, CipherWord, LatticeBackend, add_lsb_mod1,
    drop_lsb, key_switch_word, negate_mod1,
)
from .qsim import StateVector, X, Z, apply_1q

S_GATE = np.array([[1, 1], [1j, -1j]]) / math.sqrt(2)
S_INV = np.linalg.inv(S_GATE)


class SimMode(str, Enum):
    IDEALIZED = "idealized"
    EXACT = "exact"


# ----------------------------------------------------------- transcripts

@dataclass
class CrotTranscript:
    """One run of the 1-bit step; public values plus simulator-side extras."""

    w: str
    slot: int
    mode: str
    u0: int
    u1: int
    d1: int
    d2: int
    zeta: int
    y: list = field(default_factory=list)
    d_hex: str = ""
    d_len: int = 0
    r0: dict = field(default_factory=dict)
    r1: dict = field(default_factory=dict)
    c_prime: list = field(default_factory=list)
    a_prime: list = field(default_factory=list)
    params: str = ""
    log_ratio: float = 0.0
    distance: float = 0.0
    s_events: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CrotTranscript":
        return cls(**json.loads(text))

    def check(self) -> bool:
        """Both preimages map to y: AltEnc(u0; r0) = y = AltEnc(u1; r1) + c'."""
        if self.mode != SimMode.EXACT.value:
            return True
        p = lat.LweParams.from_text(self.params)
        a_prime = np.array([[int(v) for v in row] for row in self.a_prime], dtype=np.uint64)
        kp = _PublicKey(p, a_prime)

        def alt(u, r):
            s = np.array([int(v) for v in r["s"]], dtype=np.uint64)
            e = np.array([int(v) for v in r["e"]], dtype=np.int64)
            return lat.alt_enc_with(kp, u, s, e).c

        y = np.array([int(v) for v in self.y], dtype=np.uint64)
        shift = np.array([int(v) for v in self.c_prime], dtype=np.uint64)
        left = alt(self.u0, self.r0)
        right = lat.reduce(alt(self.u1, self.r1) + shift, p)
        return bool(np.array_equal(left, y) and np.array_equal(right, y))


@dataclass
class _PublicKey:
    params: lat.LweParams
    A_prime: np.ndarray


def stable_branch_distance(a: float, b: float, log_ratio: float) -> float:
    """Trace distance between (sqrt a, sqrt b) and (sqrt a, sqrt(b D)) normalized.

    Equals sqrt(ab) |1 - sqrt D| / sqrt(a + D b) with D = exp(log_ratio);
    expm1 keeps tiny log ratios from cancelling.
    """
    if a <= 0 or b <= 0:
        return 0.0
    dlt = math.exp(log_ratio)
    return math.sqrt(a * b) * abs(math.expm1(0.5 * log_ratio)) / math.sqrt(a + dlt * b)


def branch_state_exact(omega, e_shift, c0: complex, c1: complex, beta_f: int):
    """(sqrt rho0(w) c0, sqrt rho1(w) c1) normalized, with rho1(w) = rho0(w + e').

    Returns (state, ratio rho1/rho0).
    """
    omega = [int(v) for v in np.ravel(omega)]
    shift = [int(v) for v in np.ravel(e_shift)]
    moved = [o + s for o, s in zip(omega, shift)]
    in0 = all(abs(v) <= beta_f for v in omega)
    in1 = all(abs(v) <= beta_f for v in moved)
    if not (in0 or in1):
        raise ValueError("omega lies outside both supports")
    if not in0:
        return np.array([0, c1 / abs(c1)], dtype=complex), math.inf
    if not in1:
        return np.array([c0 / abs(c0), 0], dtype=complex), 0.0
    diff = sum(v * v for v in moved) - sum(v * v for v in omega)
    log_ratio = -math.pi * diff / (beta_f * beta_f)
    ratio = math.exp(log_ratio)
    v = np.array([c0, math.sqrt(ratio) * c1], dtype=complex)
    return v / np.linalg.norm(v), ratio


def _zq_bits(values, params: lat.LweParams) -> np.ndarray:
    v = lat.to_zq(np.asarray(values, dtype=object) if np.asarray(values).dtype == object
                  else np.asarray(values), params).astype(np.uint64)
    shifts = np.arange(params.logq, dtype=np.uint64)
    return ((v[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8).ravel()


# --------------------------------------------------------------- engine

class CrotEngine:
    """Runs encrypted controlled rotations on qubits of a StateVector."""

    def __init__(self, backend: Backend, mode: SimMode = SimMode.IDEALIZED,
                 rng: np.random.Generator | None = None,
                 sampling_params: lat.LweParams | None = None,
                 record: bool = False):
        self.backend = backend
        self.mode = SimMode(mode)
        self.rng = rng or np.random.default_rng()
        self.record = record
        self.transcripts: list = []
        # (bits left, lsb, folded bit) per loop step, plaintext, for audits
        self.angle_steps: list = []
        self.s_events = 0
        self._sampling_params = sampling_params
        self._aux_kp = None

    # -- helpers
    def _peek(self, x: CipherBit) -> int:
        # the physical effect depends on the plaintext bit; the simulator
        # reads it through the backend instead of running the circuit
        return self.backend.dec(x)

    def _sampling_key(self, slot: int):
        if isinstance(self.backend, LatticeBackend):
            return self.backend.chain.key(slot)
        if self._aux_kp is None:
            params = self._sampling_params or lat.gen_params("toy_s")
            self._aux_kp = lat.gen_trap(params, self.rng)
        return self._aux_kp

    def _c_prime(self, enc_zeta: CipherBit, kp) -> np.ndarray:
        if isinstance(self.backend, LatticeBackend):
            return lat.mhe_convert(enc_zeta.payload).c
        ct = lat.mhe_enc(kp, self._peek(enc_zeta), self.rng)
        return lat.mhe_convert(ct).c

    # -- the 1-bit step
    def ctrl_rot_1bit(self, w, enc_zeta: CipherBit, state: StateVector, qubit: int) -> CrotTranscript:
        """Apply Z^{d1} R_{2w}^{d2} R_w^{-zeta} to one qubit (d2 = u0 * zeta)."""
        w = Fraction(w)
        if not 0 <= w < 1:
            raise ValueError("rotation angle must lie in [0, 1)")
        self.backend.stats["alg1"] += 1
        if self.mode == SimMode.IDEALIZED:
            tr = self._ideal_step(w, enc_zeta, state, qubit)
        else:
            tr = self._exact_step(w, enc_zeta, state, qubit)
        if self.record:
            self.transcripts.append(tr)
        return tr

    def _ideal_step(self, w, enc_zeta, state, qubit):
        zeta = self._peek(enc_zeta)
        u0 = int(self.rng.integers(2))
        d1 = int(self.rng.integers(2))
        d2 = u0 * zeta
        g = _ideal_operator(w, zeta, u0, d1)
        apply_1q(state, qubit, g)
        return CrotTranscript(str(w), enc_zeta.slot, self.mode.value, u0, u0 ^ zeta, d1, d2, zeta)

    def _exact_step(self, w, enc_zeta, state, qubit):
        kp = self._sampling_key(enc_zeta.slot)
        p = kp.params
        c_prime = self._c_prime(enc_zeta, kp)
        try:
            zeta, s_p, e_p = lat.invert_alt(kp, c_prime)
        except lat.InversionError as exc:
            raise BudgetError("control ciphertext too noisy for inversion") from exc
        amp = state.amplitudes
        one = ((np.arange(amp.size) >> qubit) & 1) == 1
        prob1 = float(np.sum(np.abs(amp[one]) ** 2) / np.sum(np.abs(amp) ** 2))
        probs = (1.0 - prob1, prob1)
        beta_f = p.beta_f
        events = 0
        while True:
            j = int(self.rng.random() < prob1)
            u = int(self.rng.integers(2))
            s = lat.uniform_zq(p.n, p, self.rng)
            e = lat.sample_gaussian_vec(beta_f, p.m + 1, self.rng)
            e_int = [int(v) for v in e]
            e_shift = [int(v) for v in e_p]
            if j == 0:
                u0, s0, e0 = u, s, e_int
                u1, s1, e1 = u ^ zeta, lat.reduce(s - s_p, p), [a - b for a, b in zip(e_int, e_shift)]
            else:
                u1, s1, e1 = u, s, e_int
                u0, s0, e0 = u ^ zeta, lat.reduce(s + s_p, p), [a + b for a, b in zip(e_int, e_shift)]
            out0 = any(abs(v) > beta_f for v in e0)
            out1 = any(abs(v) > beta_f for v in e1)
            if (out0 or out1) and min(probs) > 0:
                events += 1
                continue
            break
        self.s_events += events
        y = lat.alt_enc_with(kp, u, s, np.array(e_int, dtype=np.int64)).c
        if j:
            y = lat.reduce(y + c_prime, p)
        x0 = np.concatenate([[u0], _zq_bits(s0, p), _zq_bits(np.array(e0, dtype=object), p)])
        x1 = np.concatenate([[u1], _zq_bits(s1, p), _zq_bits(np.array(e1, dtype=object), p)])
        d = self.rng.integers(0, 2, size=x0.size, dtype=np.uint8)
        d1 = int(np.bitwise_xor.reduce(d & (x0 ^ x1)))
        diff = sum(v * v for v in e1) - sum(v * v for v in e0)
        log_ratio = -math.pi * diff / (beta_f * beta_f)
        if out0 or out1:
            # only reachable when one branch has zero amplitude
            log_ratio = 0.0
        ph0 = np.exp(-2j * np.pi * float(w) * u0)
        ph1 = np.exp(-2j * np.pi * float(w) * u1) * (-1) ** d1 * math.exp(0.5 * log_ratio)
        apply_1q(state, qubit, np.diag([ph0, ph1]), unitary=False)
        state.normalize()
        dist = stable_branch_distance(probs[0], probs[1], log_ratio)
        tr = CrotTranscript(
            str(w), enc_zeta.slot, self.mode.value, u0, u1, d1, u0 * zeta, zeta,
            y=[int(v) for v in y], d_hex=np.packbits(d).tobytes().hex(), d_len=int(d.size),
            r0={"s": [int(v) for v in s0], "e": e0, "sampled": j == 0},
            r1={"s": [int(v) for v in s1], "e": e1, "sampled": j == 1},
            c_prime=[int(v) for v in c_prime],
            a_prime=[[int(v) for v in row] for row in kp.A_prime],
            params=p.to_text(), log_ratio=log_ratio, distance=dist, s_events=events,
        )
        return tr

    def ctrl_rot_1bit_keyed(self, w, enc_zeta: CipherBit, state: StateVector, qubit: int):
        """The 1-bit step with both masks returned encrypted at the next slot."""
        tr = self.ctrl_rot_1bit(w, enc_zeta, state, qubit)
        b = self.backend
        nxt = enc_zeta.slot + 1
        enc_d1 = b.enc(tr.d1, nxt)
        enc_u0 = b.enc(tr.u0, nxt)
        enc_d2 = b.band(enc_u0, b.key_switch(enc_zeta))
        return enc_d1, enc_d2, tr

    # -- multi-bit angles
    def crot(self, enc_alpha: CipherWord, state: StateVector, qubit: int) -> CipherBit:
        """Z^d R_alpha^{-1} on the qubit; returns Enc(d) at slot + m - 1."""
        b = self.backend
        word = enc_alpha
        d = None
        while word.m > 1:
            w = Fraction(1, 1 << word.m)
            enc_d1, enc_d2, tr = self.ctrl_rot_1bit_keyed(w, word.lsb, state, qubit)
            self.angle_steps.append((word.m, tr.zeta, tr.d2))
            rest = key_switch_word(b, drop_lsb(word))
            word = add_lsb_mod1(b, rest, enc_d2)
            d = enc_d1 if d is None else b.bxor(b.key_switch(d), enc_d1)
        top = word.bits[0]
        self.angle_steps.append((1, self._peek(top), 0))
        return top if d is None else b.bxor(d, top)

    def ctrot(self, enc_alpha: CipherWord, state: StateVector, qubit: int) -> CipherBit:
        """Z^d X^d T_alpha^{-1} on the qubit, up to global phase."""
        apply_1q(state, qubit, S_INV)
        d = self.crot(enc_alpha, state, qubit)
        apply_1q(state, qubit, S_GATE)
        return d

    def cunitary(self, enc_euler, state: StateVector, qubit: int) -> tuple:
        """X^{p} Z^{q} U(alpha, beta, gamma)^{-1}; returns (Enc p, Enc q) at slot + 3m - 1."""
        b = self.backend
        alpha, beta, gamma = enc_euler
        m = alpha.m
        if beta.m != m or gamma.m != m:
            raise ValueError("Euler angle words differ in width")
        s = alpha.slot
        if beta.slot != s or gamma.slot != s:
            raise ValueError("Euler angle words must share a slot")
        w1 = self.crot(alpha, state, qubit)
        beta1 = key_switch_word(b, beta, s + m)
        beta_n = negate_mod1(b, beta1, b.key_switch_to(w1, s + m))
        w2 = self.ctrot(beta_n, state, qubit)
        gamma1 = key_switch_word(b, gamma, s + 2 * m)
        gamma_n = negate_mod1(b, gamma1, b.key_switch_to(w2, s + 2 * m))
        w3 = self.crot(gamma_n, state, qubit)
        end = s + 3 * m - 1
        w1f = b.key_switch_to(w1, end)
        w2f = b.key_switch_to(w2, end)
        return w2f, b.bxor(b.bxor(w1f, w2f), w3)

    def p_gate(self, enc_a: CipherBit, state: StateVector, qubit: int) -> CipherBit:
        """Z^{d'} P^a on the qubit (P = diag(1, i)); returns Enc(d') at slot + 1."""
        b = self.backend
        word = CipherWord((b.const(0, enc_a.slot), enc_a))
        d = self.crot(word, state, qubit)
        return b.bxor(d, b.key_switch(enc_a))


def _ideal_operator(w, zeta: int, u0: int, d1: int) -> np.ndarray:
    w = float(w)
    g = np.linalg.matrix_power(rot_r(-w), zeta) if zeta else np.eye(2, dtype=complex)
    if u0 * zeta:
        g = rot_r(2 * w) @ g
    if d1:
        g = Z @ g
    return g


# ------------------------------------------------------ module-level API

def enc_ctrl_rot_1bit(w, enc_zeta, state, qubit, engine: CrotEngine) -> CrotTranscript:
    return engine.ctrl_rot_1bit(w, enc_zeta, state, qubit)


def enc_ctrl_rot_1bit_keyed(w, enc_zeta, state, qubit, engine: CrotEngine):
    return engine.ctrl_rot_1bit_keyed(w, enc_zeta, state, qubit)


def enc_crot(enc_alpha, state, qubit, engine: CrotEngine) -> CipherBit:
    return engine.crot(enc_alpha, state, qubit)


def enc_ctrot(enc_alpha, state, qubit, engine: CrotEngine) -> CipherBit:
    return engine.ctrot(enc_alpha, state, qubit)


def enc_cunitary(enc_euler, state, qubit, engine: CrotEngine) -> tuple:
    return engine.cunitary(enc_euler, state, qubit)


def enc_p_gate(enc_a, state, qubit, engine: CrotEngine) -> CipherBit:
    return engine.p_gate(enc_a, state, qubit)


def pauli_matrix(x: int, z: int) -> np.ndarray:
    """X^x Z^z."""
    return np.linalg.matrix_power(X, x) @ np.linalg.matrix_power(Z, z)


def t_matrix(alpha) -> np.ndarray:
    return rot_t(alpha)


__all__ = [
    "CrotEngine", "CrotTranscript", "S_GATE", "S_INV", "SimMode", "branch_state_exact",
    "enc_crot", "enc_ctrl_rot_1bit", "enc_ctrl_rot_1bit_keyed", "enc_ctrot",
    "enc_cunitary", "enc_p_gate", "pauli_matrix", "stable_branch_distance", "t_matrix",
]
