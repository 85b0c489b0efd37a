import math
from fractions import Fraction

import numpy as np
import pytest

from qotpfhe import hebackend as hb
from qotpfhe import lattice as lat
from qotpfhe.crot import (
    CrotEngine, CrotTranscript, S_GATE, S_INV, SimMode, branch_state_exact, pauli_matrix,
    stable_branch_distance,
)
from qotpfhe.eulerconv import rot_r, rot_t
from qotpfhe.qsim import X, Z, StateVector, trace_distance_pure

M = 4


@pytest.fixture
def backend():
    chain = hb.keychain_gen(16, 0, 1, "mock", rng=np.random.default_rng(11), n_slots=3 * M + 2)
    return hb.make_backend(chain)


def rand_state(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def rand_frac(rng, m=M):
    return Fraction(int(rng.integers(0, 1 << m)), 1 << m)


def test_s_gate_inverse():
    assert np.allclose(S_GATE @ S_INV, np.eye(2))
    # S^-1 R_a S is T_a up to phase, which is what ctrot relies on
    a = 0.3
    g = S_GATE @ rot_r(a) @ S_INV
    t = rot_t(a)
    assert abs(abs(np.trace(g.conj().T @ t)) - 2) < 1e-12


@pytest.mark.parametrize("mode", [SimMode.IDEALIZED, SimMode.EXACT])
def test_crot_output_operator(backend, rng, mode):
    eng = CrotEngine(backend, mode, rng)
    worst = 0.0
    for _ in range(20):
        a, psi = rand_frac(rng), rand_state(rng)
        st = StateVector(psi.copy())
        d = backend.dec(eng.crot(hb.enc_fraction(backend, a, M, 1), st, 0))
        got = np.linalg.matrix_power(Z, d) @ st.amplitudes
        worst = max(worst, trace_distance_pure(got, rot_r(-float(a)) @ psi))
    assert worst < (1e-12 if mode == SimMode.IDEALIZED else 1e-6)


def test_ctrot_output_operator(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    for _ in range(20):
        a, psi = rand_frac(rng), rand_state(rng)
        st = StateVector(psi.copy())
        d = backend.dec(eng.ctrot(hb.enc_fraction(backend, a, M, 1), st, 0))
        got = pauli_matrix(d, d) @ st.amplitudes
        assert trace_distance_pure(got, rot_t(-float(a)) @ psi) < 1e-12


def test_cunitary_output_operator_and_slot(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    for _ in range(20):
        angles, psi = [rand_frac(rng) for _ in range(3)], rand_state(rng)
        st = StateVector(psi.copy())
        words = [hb.enc_fraction(backend, x, M, 1) for x in angles]
        ep, eq = eng.cunitary(words, st, 0)
        assert ep.slot == eq.slot == 1 + 3 * M - 1
        got = pauli_matrix(0, backend.dec(eq)) @ np.linalg.matrix_power(X, backend.dec(ep)) @ st.amplitudes
        u = rot_r(float(angles[0])) @ rot_t(float(angles[1])) @ rot_r(float(angles[2]))
        assert trace_distance_pure(got, np.linalg.inv(u) @ psi) < 1e-12


def test_cunitary_rejects_mismatched_words(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    st = StateVector.basis("0")
    words = [hb.enc_fraction(backend, Fraction(1, 4), M, 1) for _ in range(2)]
    with pytest.raises(ValueError):
        eng.cunitary(words + [hb.enc_fraction(backend, Fraction(1, 4), 3, 1)], st, 0)
    with pytest.raises(ValueError):
        eng.cunitary(words + [hb.enc_fraction(backend, Fraction(1, 4), M, 2)], st, 0)


def test_crot_slot_and_step_count(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    before = backend.stats["alg1"]
    d = eng.crot(hb.enc_fraction(backend, Fraction(5, 16), M, 1), StateVector.basis("0"), 0)
    assert d.slot == 1 + M - 1
    assert backend.stats["alg1"] - before == M - 1
    assert [s[0] for s in eng.angle_steps] == [4, 3, 2, 1]


def test_p_gate(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    p = np.diag([1, 1j])
    for a in (0, 1):
        psi = rand_state(rng)
        st = StateVector(psi.copy())
        enc = eng.p_gate(backend.enc(a, 1), st, 0)
        assert enc.slot == 2
        got = np.linalg.matrix_power(Z, backend.dec(enc)) @ st.amplitudes
        assert trace_distance_pure(got, np.linalg.matrix_power(p, a) @ psi) < 1e-12


def test_one_bit_step_rejects_bad_angle(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    with pytest.raises(ValueError):
        eng.ctrl_rot_1bit(Fraction(1), backend.enc(1, 1), StateVector.basis("0"), 0)


@pytest.mark.parametrize("zeta", [0, 1])
def test_one_bit_step_masks(backend, rng, zeta):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    w = Fraction(1, 8)
    for _ in range(10):
        psi = rand_state(rng)
        st = StateVector(psi.copy())
        tr = eng.ctrl_rot_1bit(w, backend.enc(zeta, 1), st, 0)
        assert tr.d2 == tr.u0 * zeta and tr.u1 == tr.u0 ^ zeta
        want = (np.linalg.matrix_power(Z, tr.d1)
                @ np.linalg.matrix_power(rot_r(2 * float(w)), tr.d2)
                @ np.linalg.matrix_power(rot_r(-float(w)), zeta) @ psi)
        assert trace_distance_pure(st.amplitudes, want) < 1e-12


def test_keyed_step_returns_next_slot(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng)
    d1, d2, tr = eng.ctrl_rot_1bit_keyed(Fraction(1, 4), backend.enc(1, 3), StateVector.basis("1"), 0)
    assert d1.slot == d2.slot == 4
    assert (backend.dec(d1), backend.dec(d2)) == (tr.d1, tr.d2)


def test_exact_transcripts_check_and_roundtrip(backend, rng):
    eng = CrotEngine(backend, SimMode.EXACT, rng, record=True)
    for zeta in (0, 1):
        eng.ctrl_rot_1bit(Fraction(1, 4), backend.enc(zeta, 1), StateVector(rand_state(rng)), 0)
    assert len(eng.transcripts) == 2
    for tr in eng.transcripts:
        assert tr.check()
        back = CrotTranscript.from_json(tr.to_json())
        assert back == tr and back.check()
        # mask covers u, s and e as bits
        prm = lat.LweParams.from_text(tr.params)
        assert tr.d_len == 1 + (prm.n + prm.m + 1) * prm.logq
    bad = CrotTranscript.from_json(eng.transcripts[0].to_json())
    bad.u0 ^= 1
    assert not bad.check()


def test_idealized_transcript_check_trivial(backend, rng):
    eng = CrotEngine(backend, SimMode.IDEALIZED, rng, record=True)
    eng.ctrl_rot_1bit(Fraction(1, 2), backend.enc(1, 1), StateVector.basis("0"), 0)
    assert eng.transcripts[0].check()


def test_exact_on_basis_state_has_no_drift(backend, rng):
    # with one branch empty the weights cannot distort the state
    eng = CrotEngine(backend, SimMode.EXACT, rng)
    for label in ("0", "1"):
        tr = eng.ctrl_rot_1bit(Fraction(1, 8), backend.enc(1, 1), StateVector.basis(label), 0)
        assert tr.distance == 0


def test_lattice_exact_crot():
    rng = np.random.default_rng(12)
    m = 2
    chain = hb.keychain_gen(16, 0, 1, "lattice", rng=rng, n_slots=m + 1)
    b = hb.make_backend(chain, rng)
    eng = CrotEngine(b, SimMode.EXACT, rng, record=True)
    for num in range(1 << m):
        a = Fraction(num, 1 << m)
        psi = rand_state(rng)
        st = StateVector(psi.copy())
        d = b.dec(eng.crot(hb.enc_fraction(b, a, m, 1), st, 0))
        got = np.linalg.matrix_power(Z, d) @ st.amplitudes
        assert trace_distance_pure(got, rot_r(-float(a)) @ psi) < 1e-6
    assert all(tr.check() for tr in eng.transcripts)


def test_stable_branch_distance_matches_direct_formula():
    for a, b, lr in ((0.5, 0.5, 0.3), (0.9, 0.1, -1.2), (0.2, 0.8, 2.0)):
        u = np.array([math.sqrt(a), math.sqrt(b)])
        v = np.array([math.sqrt(a), math.sqrt(b * math.exp(lr))])
        v /= np.linalg.norm(v)
        assert math.isclose(stable_branch_distance(a, b, lr), trace_distance_pure(u, v), rel_tol=1e-9)
    assert stable_branch_distance(1.0, 0.0, 5.0) == 0
    assert stable_branch_distance(0.5, 0.5, 0.0) == 0
    # tiny ratios stay resolvable: first order term is sqrt(ab) |lr| / 2
    assert math.isclose(stable_branch_distance(0.5, 0.5, 1e-14), 0.25e-14, rel_tol=1e-6)


def test_branch_state_exact_cases():
    c0 = c1 = 1 / math.sqrt(2)
    v, ratio = branch_state_exact([0, 0], [0, 0], c0, c1, 4)
    assert ratio == 1 and np.allclose(v, [c0, c1])
    v, ratio = branch_state_exact([4, 0], [1, 0], c0, c1, 4)
    assert ratio == 0 and np.allclose(v, [1, 0])
    v, ratio = branch_state_exact([5, 0], [-1, 0], c0, c1, 4)
    assert ratio == math.inf and np.allclose(v, [0, 1])
    v, ratio = branch_state_exact([1, 0], [1, 0], c0, c1, 4)
    assert math.isclose(ratio, math.exp(-math.pi * 3 / 16))
    with pytest.raises(ValueError):
        branch_state_exact([9, 0], [0, 0], c0, c1, 4)
