"""Small statevector simulator and state metrics.

Qubit 0 is the least significant bit of the amplitude index.
"""

from __future__ import annotations

import numpy as np

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
I2 = np.eye(2, dtype=complex)

MAX_QUBITS = 12


class StateVector:
    """Amplitudes over n qubits. Mutated in place by the apply functions."""

    def __init__(self, amplitudes, n_qubits: int | None = None):
        amp = np.array(amplitudes, dtype=complex).ravel()
        n = int(round(np.log2(amp.size))) if n_qubits is None else n_qubits
        if amp.size != 1 << n:
            raise ValueError("amplitude count is not a power of two")
        if n > MAX_QUBITS:
            raise ValueError(f"at most {MAX_QUBITS} qubits")
        self.n_qubits = n
        self.amplitudes = amp

    @classmethod
    def basis(cls, label: str) -> "StateVector":
        """'101' means qubit 0 = 1, qubit 1 = 0, qubit 2 = 1 (left to right)."""
        label = label.strip().strip("|>")
        n = len(label)
        idx = sum(int(c) << i for i, c in enumerate(label))
        amp = np.zeros(1 << n, dtype=complex)
        amp[idx] = 1
        return cls(amp, n)

    @classmethod
    def product(cls, qubits) -> "StateVector":
        """Tensor product of 1-qubit states, qubits[0] being qubit 0."""
        amp = np.array([1], dtype=complex)
        for q in qubits:
            amp = np.kron(np.asarray(q, dtype=complex), amp)
        return cls(amp, len(qubits))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        self.amplitudes /= self.norm()
        return self

    def dump(self) -> str:
        return "".join(
            f"{i} {float(a.real)!r} {float(a.imag)!r}\n" for i, a in enumerate(self.amplitudes)
        )

    @classmethod
    def load(cls, text: str) -> "StateVector":
        rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        amp = np.zeros(len(rows), dtype=complex)
        for idx, re, im in rows:
            amp[int(idx)] = complex(float(re), float(im))
        return cls(amp)

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def _check_qubit(state: StateVector, q: int):
    if not 0 <= q < state.n_qubits:
        raise IndexError(f"qubit {q} out of range")


def apply_1q(state: StateVector, target: int, g, unitary: bool = True) -> StateVector:
    """Apply a 2x2 matrix to one qubit.

    In unitary mode g must be within 1e-8 of unitary. With unitary=False any
    2x2 matrix is applied and nothing is renormalized.
    """
    _check_qubit(state, target)
    g = np.asarray(g, dtype=complex)
    if unitary and np.abs(g @ g.conj().T - I2).max() > 1e-8:
        raise ValueError("gate is not unitary")
    n = state.n_qubits
    psi = state.amplitudes.reshape([2] * n)
    axis = n - 1 - target
    psi = np.moveaxis(np.tensordot(g, psi, axes=([1], [axis])), 0, axis)
    state.amplitudes = psi.reshape(-1)
    return state


def apply_cnot(state: StateVector, ctrl: int, tgt: int) -> StateVector:
    _check_qubit(state, ctrl)
    _check_qubit(state, tgt)
    if ctrl == tgt:
        raise ValueError("control and target coincide")
    idx = np.arange(state.amplitudes.size)
    sel = ((idx >> ctrl) & 1) == 1
    src = idx ^ (1 << tgt)
    amp = state.amplitudes.copy()
    amp[sel] = state.amplitudes[src[sel]]
    state.amplitudes = amp
    return state


def _vec(psi) -> np.ndarray:
    return psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=complex).ravel()


def h_distance(psi1, psi2) -> float:
    a, b = _vec(psi1), _vec(psi2)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    return float(np.sqrt(0.5 * np.sum(np.abs(a - b) ** 2)))


def trace_distance_pure(psi1, psi2, tol: float = 1e-8) -> float:
    a, b = _vec(psi1), _vec(psi2)
    if a.shape != b.shape:
        raise ValueError("dimension mismatch")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if abs(na - 1) > tol or abs(nb - 1) > tol:
        raise ValueError("states must be normalized")
    a, b = a / na, b / nb
    inner = np.vdot(b, a)
    ov = abs(inner)
    # sqrt(1 - ov^2) without cancellation: 1 - ov = |a - e^{i phi} b|^2 / 2
    diff = a - (inner / ov if ov > 0 else 1.0) * b
    return min(1.0, float(np.linalg.norm(diff) * np.sqrt((1.0 + min(ov, 1.0)) / 2.0)))


def normalized(psi) -> np.ndarray:
    v = _vec(psi)
    return v / np.linalg.norm(v)


def measure_qubit(state: StateVector, idx: int, rng: np.random.Generator):
    """Born-rule measurement of one qubit; returns (bit, collapsed state)."""
    _check_qubit(state, idx)
    amp = state.amplitudes
    one = ((np.arange(amp.size) >> idx) & 1) == 1
    p1 = float(np.sum(np.abs(amp[one]) ** 2) / np.sum(np.abs(amp) ** 2))
    bit = int(rng.random() < p1)
    new = np.where(one == bool(bit), amp, 0)
    out = StateVector(new, state.n_qubits)
    return bit, out.normalize()


class DensityAccumulator:
    """Running mean of |psi><psi| over 1-qubit states."""

    def __init__(self):
        self.total = np.zeros((2, 2), dtype=complex)
        self.trials = 0

    def add(self, psi):
        v = np.asarray(_vec(psi))
        if v.size != 2:
            raise ValueError("1-qubit states only")
        self.total += np.outer(v, v.conj())
        self.trials += 1

    def add_batch(self, psis: np.ndarray):
        psis = np.asarray(psis, dtype=complex).reshape(-1, 2)
        self.total += psis.T @ psis.conj()
        self.trials += psis.shape[0]

    def mean(self) -> np.ndarray:
        if self.trials == 0:
            raise ValueError("no states accumulated")
        m = self.total / self.trials
        return 0.5 * (m + m.conj().T)


def accumulate_density(acc: DensityAccumulator, psi) -> DensityAccumulator:
    acc.add(psi)
    return acc


def mean_density(acc: DensityAccumulator) -> np.ndarray:
    return acc.mean()


def dense_1q(n: int, target: int, g) -> np.ndarray:
    """Full 2^n matrix of a 1-qubit gate (test oracle)."""
    out = np.array([[1]], dtype=complex)
    for q in reversed(range(n)):
        out = np.kron(out, g if q == target else I2)
    return out
