import math
from fractions import Fraction

import numpy as np
import pytest

from qotpfhe import hebackend as hb
from qotpfhe import lattice as lat
from qotpfhe import qfhe as Q
from qotpfhe.eulerconv import euler_to_matrix
from qotpfhe.qsim import H, X, Z, StateVector, h_distance, trace_distance_pure
from qotpfhe.su2core import phase_distance, quat_to_matrix, random_unit_quat


def rand_state(rng, n):
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


@pytest.fixture
def session(rng):
    def make(levels=1, k=8, degree=16):
        chain, params = Q.qhe_keygen(16, levels, k, rng=rng, degree=degree)
        return Q.QheContext(chain, params, rng=rng)
    return make


# ---- keys

def test_gate_key_validation():
    with pytest.raises(ValueError):
        Q.GateKey((1, 2, 3), 4)
    with pytest.raises(ValueError):
        Q.GateKey((32, 0, 0, 0), 4)
    key = Q.GateKey.from_quat((0.75, -0.3, 0, 0.1), 4)
    assert key.raw == (12, -4, 0, 1)
    assert key.value == (0.75, -0.25, 0.0, 0.0625)


def test_keygen_norm_and_spread(rng):
    for k in (2, 8, 16):
        for _ in range(200):
            key = Q.qotp_keygen(k, rng)
            # three components exact, the fourth rounded to k bits
            assert abs(key.norm - 1) <= 2.0 ** -k * 1.01
    with pytest.raises(ValueError):
        Q.qotp_keygen(0, rng)


def test_batched_keys_match_scalar_distribution(rng):
    k, n = 6, 40_000
    batch = Q.sample_keys_batch(k, n, rng)
    scalar = np.array([Q.qotp_keygen(k, rng).value for _ in range(n)])
    for col in range(4):
        assert abs(batch[:, col].mean()) < 0.02
        assert abs(np.mean(batch[:, col] ** 2) - np.mean(scalar[:, col] ** 2)) < 0.01
    assert np.all(np.abs(batch * (1 << k) - np.round(batch * (1 << k))) == 0)


def test_pauli_embed_examples():
    assert Q.pauli_embed(0, 0) == (1, 0, 0, 0)
    assert Q.pauli_embed(1, 0) == (0, 0, 1, 0)
    assert Q.pauli_embed(0, 1) == (0, 1, 0, 0)
    assert Q.pauli_embed(1, 1) == (0, 0, 0, -1)


def test_pauli_keys_pad_with_paulis():
    for a in (0, 1):
        for b in (0, 1):
            want = np.linalg.matrix_power(X, a) @ np.linalg.matrix_power(Z, b)
            assert phase_distance(Q.pad_matrix(Q.pauli_key(a, b, 8)), want) < 1e-12


def test_qotp_roundtrip(rng):
    # norm repair and inversion need not commute for short keys, hence the k-dependent bound
    for k in (4, 16, 30):
        for _ in range(50):
            psi = rand_state(rng, 2)
            key = Q.qotp_keygen(k, rng)
            st = Q.qotp_enc(key, StateVector(psi.copy()), 1)
            back = Q.qotp_dec(key, st, 1)
            assert trace_distance_pure(back.amplitudes, psi) <= 4 / math.sqrt(2 ** k)


def test_qotp_roundtrip_exact_for_unit_keys(rng):
    for _ in range(50):
        psi = rand_state(rng, 1)
        key = Q.pauli_keygen(8, rng)[0]
        back = Q.qotp_dec(key, Q.qotp_enc(key, StateVector(psi.copy()), 0), 0)
        assert np.allclose(back.amplitudes, psi, atol=1e-12)


def test_security_trial_close_to_mixed(rng):
    rho = Q.security_trial(10, [1, 0], 20_000, rng)
    assert np.abs(rho - np.eye(2) / 2).max() < 5 / math.sqrt(20_000)
    with pytest.raises(ValueError):
        Q.security_trial(10, [1, 0, 0, 0], 10, rng)


# ---- parameters and context

def test_params_slots():
    p = Q.QheParams(16, 2, 4)
    assert p.slots_per_level == 12 and p.n_slots == 25 and p.tail == 25
    assert p.level_slot(1) == 1 and p.level_slot(3) == 25
    with pytest.raises(ValueError):
        Q.QheParams(16, 1, 0)
    with pytest.raises(ValueError):
        Q.QheParams(16, 1, 40, degree=16)


def test_context_checks_slot_count(rng):
    chain, params = Q.qhe_keygen(16, 1, 4, rng=rng, degree=16)
    other = Q.QheParams(16, 2, 4, degree=16)
    with pytest.raises(hb.ChainError):
        Q.QheContext(chain, other)


def test_encrypt_decrypt_without_gates(session, rng):
    ctx = session(levels=0)
    psi = rand_state(rng, 3)
    reg = Q.qhe_enc(ctx, StateVector(psi.copy()))
    assert all(ct.slot == 1 for ct in reg.cts)
    out = Q.qhe_dec(ctx, Q.finalize(ctx, reg))
    assert trace_distance_pure(out.amplitudes, psi) < 1e-10


def test_decrypt_requires_tail_slot(session, rng):
    ctx = session(levels=1)
    reg = Q.qhe_enc(ctx, StateVector.basis("0"))
    with pytest.raises(hb.ChainError):
        Q.qhe_dec(ctx, reg)


def test_decrypted_keys_match_chosen_keys(session, rng):
    ctx = session(levels=0)
    keys = [Q.qotp_keygen(ctx.k, rng) for _ in range(2)]
    reg = Q.qhe_enc_with_keys(ctx, StateVector.basis("00"), keys)
    assert Q.decrypt_keys(ctx, reg) == keys
    with pytest.raises(ValueError):
        Q.qhe_enc_with_keys(ctx, StateVector.basis("0"), [Q.qotp_keygen(ctx.k + 1, rng)])


# ---- gates

def test_gate_quat_forms(rng):
    t = random_unit_quat(rng)
    assert Q.gate_quat(t) == tuple(t)
    back = Q.gate_quat(quat_to_matrix(t))
    assert phase_distance(quat_to_matrix(back), quat_to_matrix(t)) < 1e-12
    assert phase_distance(quat_to_matrix(Q.gate_quat(H)), H) < 1e-12


def test_eval_1q_folds_gate_into_key(session, rng):
    ctx = session(levels=0, k=16)
    for _ in range(10):
        psi = rand_state(rng, 1)
        reg = Q.qhe_enc(ctx, StateVector(psi.copy()))
        g = random_unit_quat(rng)
        reg.cts[0] = Q.eval_1q(ctx, reg.cts[0], g)
        assert reg.cts[0].gates == 1
        out = Q.qhe_dec(ctx, Q.finalize(ctx, reg))
        want = quat_to_matrix(g) @ psi
        assert trace_distance_pure(out.amplitudes, want) < 1e-3


def test_eval_cnot_bell(session, rng):
    ctx = session(levels=1, k=12)
    reg = Q.qhe_enc(ctx, StateVector.basis("00"))
    reg.cts[0] = Q.eval_1q(ctx, reg.cts[0], H)
    Q.eval_cnot(ctx, reg, 0, 1)
    assert reg.cts[0].slot == reg.cts[1].slot == ctx.params.tail
    out = Q.qhe_dec(ctx, reg)
    bell = np.array([1, 0, 0, 1]) / math.sqrt(2)
    assert trace_distance_pure(out.amplitudes, bell) < 1e-2


def test_eval_cnot_guards(session):
    ctx = session(levels=1, k=4)
    reg = Q.qhe_enc(ctx, StateVector.basis("00"))
    with pytest.raises(ValueError):
        Q.eval_cnot(ctx, reg, 1, 1)
    Q.eval_cnot(ctx, reg, 0, 1)
    with pytest.raises(Q.LevelOverflowError):
        Q.eval_cnot(ctx, reg, 0, 1)


def test_he_pauli_embed_matches_plain(session):
    ctx = session(levels=0, k=6)
    b = ctx.backend
    for x1 in (0, 1):
        for x2 in (0, 1):
            words = Q.he_pauli_embed(b, b.enc(x1), b.enc(x2), ctx.k)
            got = tuple(b.word_dec(w) for w in words)
            assert got == tuple(v << ctx.k for v in Q.pauli_embed(x1, x2))


# ---- circuits

def test_parse_levels_and_format_roundtrip():
    text = ("# demo\nU 0 euler 0 0.25 0.5\nU 1 quat 1 0 0 0\nCNOT 0 1\nU 1 euler 1/8 0 0\n"
            "CNOT 1 2\nLEVEL\nU 2 euler 0 0 0\n")
    c = Q.parse_circuit(text)
    assert [len(lv.gates) for lv in c.levels] == [2, 1, 1]
    assert [lv.cnots for lv in c.levels] == [[(0, 1)], [(1, 2)], []]
    assert c.n_qubits == 3
    assert c.counts() == {"levels": 3, "one_qubit": 4, "cnot": 2}
    assert Q.parse_circuit(Q.format_circuit(c)) == c
    assert "0.125" in Q.format_circuit(c)


def test_overlapping_cnots_split_levels():
    c = Q.parse_circuit("CNOT 0 1\nCNOT 2 3\nCNOT 1 2\n")
    assert [lv.cnots for lv in c.levels] == [[(0, 1), (2, 3)], [(1, 2)]]


@pytest.mark.parametrize("text,line", [
    ("U 0 euler 0 0\n", 1),
    ("U x euler 0 0 0\n", 1),
    ("\nCNOT 1 1\n", 2),
    ("CNOT 0\n", 1),
    ("FOO 1\n", 1),
    ("U 0 euler 0 0.75 0\n", 1),
    ("U 0 euler 0 1/0 0\n", 1),
    ("U 99 euler 0 0 0\n", 1),
    ("U 0 spin 0 0 0\n", 1),
    ("LEVEL 2\n", 1),
])
def test_syntax_errors(text, line):
    with pytest.raises(Q.CircuitSyntaxError) as info:
        Q.parse_circuit(text)
    assert info.value.lineno == line


def test_circuit_check():
    c = Q.Circuit([Q.Level([Q.euler_gate(0, Fraction(1, 3), 0, 0)], [])])
    with pytest.raises(ValueError):
        c.check(m=8)
    c = Q.Circuit([Q.Level([], [(0, 1), (1, 2)])])
    with pytest.raises(ValueError):
        c.check()


def test_gate_helpers():
    assert phase_distance(Q.hadamard(0).matrix(), H) < 1e-12
    assert np.allclose(Q.phase_rot(0, Fraction(1, 4)).matrix(), np.diag([1, 1j]))
    g = Q.Gate1(0, "quat", (Fraction(0), Fraction(1), Fraction(0), Fraction(0)))
    assert phase_distance(g.matrix(), X) < 1e-12
    assert g.representable(1)
    with pytest.raises(ValueError):
        Q.Gate1(0, "quat", (1, 0, 0))


def test_controlled_phase_expansion(rng):
    a = Fraction(1, 8)
    c = Q.circuit_from_ops(Q.controlled_phase_lines(0, 1, a))
    psi = rand_state(rng, 2)
    out = Q.simulate(c, StateVector(psi.copy()))
    want = psi * np.array([1, 1, 1, np.exp(2j * np.pi * float(a))])
    assert trace_distance_pure(out.amplitudes, want) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3])
def test_qft_matches_dft(n):
    c = Q.qft_circuit(n)
    for x in range(1 << n):
        v = np.zeros(1 << n)
        v[x] = 1
        out = Q.simulate(c, StateVector(v))
        assert trace_distance_pure(out.amplitudes, Q.dft_state(n, x)) < 1e-12


def test_qft_file_matches_builder():
    from pathlib import Path
    text = (Path(__file__).parent.parent / "circuits" / "qft3.qc").read_text()
    assert Q.parse_circuit(text) == Q.qft_circuit(3)


def test_eval_circuit_small(session, rng):
    c = Q.parse_circuit("U 0 euler 0 0.25 0.5\nCNOT 0 1\nU 1 euler 0.125 0.25 0\n")
    ctx = session(levels=1, k=12)
    psi = rand_state(rng, 2)
    reg = Q.eval_circuit(ctx, Q.qhe_enc(ctx, StateVector(psi.copy())), c)
    out = Q.qhe_dec(ctx, reg)
    want = Q.simulate(c, StateVector(psi))
    assert trace_distance_pure(out.amplitudes, want.amplitudes) < 1e-2


def test_eval_circuit_level_overflow(session):
    ctx = session(levels=1, k=4)
    c = Q.parse_circuit("CNOT 0 1\nCNOT 1 0\n")
    with pytest.raises(Q.LevelOverflowError):
        Q.eval_circuit(ctx, Q.qhe_enc(ctx, StateVector.basis("00")), c)


def test_eval_circuit_rejects_wide_circuit(session):
    ctx = session(levels=0, k=4)
    with pytest.raises(ValueError):
        Q.eval_circuit(ctx, Q.qhe_enc(ctx, StateVector.basis("0")), Q.parse_circuit("U 1 euler 0 0 0\n"))


# ---- bundles

def test_bundle_roundtrip(session, rng):
    ctx = session(levels=0, k=8)
    reg = Q.qhe_enc(ctx, StateVector(rand_state(rng, 2)))
    reg.cts[1] = Q.eval_1q(ctx, reg.cts[1], H)
    back = Q.register_from_bytes(ctx, Q.register_to_bytes(ctx, reg))
    assert np.array_equal(back.state.amplitudes, reg.state.amplitudes)
    assert Q.decrypt_keys(ctx, back) == Q.decrypt_keys(ctx, reg)
    assert [ct.gates for ct in back.cts] == [0, 1]


def test_bundle_rejects_other_k(session, rng):
    a, b = session(levels=0, k=8), session(levels=0, k=6)
    blob = Q.register_to_bytes(a, Q.qhe_enc(a, StateVector.basis("0")))
    with pytest.raises(lat.FormatError):
        Q.register_from_bytes(b, blob)


# ---- cost model

def test_cost_functions():
    assert Q.cost_prior(10, 0.5, 2.0) == 0.5 * 100 * 2 + 0.5 * 2
    assert Q.cost_ours(10, 0.5, 2.0, 0.1) == 0.5 * 10 * 0.1 + 0.5 * 10 * 2
    rows = Q.cost_table(1.0, [4, 8], 1.0, 1.0)
    assert [r["ratio"] for r in rows] == [0.25, 0.125]
    with pytest.raises(ValueError):
        Q.cost_table(1.5, [4], 1, 1)


def test_linear_fit_exact_line():
    slope, icpt, r2 = Q.linear_fit([1, 2, 3], [3, 5, 7])
    assert math.isclose(slope, 2) and math.isclose(icpt, 1) and math.isclose(r2, 1)


def test_rotation_steps_per_cnot_counts_engine(session):
    ctx = session(levels=1, k=4)
    reg = Q.qhe_enc(ctx, StateVector.basis("00"))
    before = ctx.backend.stats["alg1"]
    Q.eval_cnot(ctx, reg, 0, 1)
    assert ctx.backend.stats["alg1"] - before == Q.rotation_steps_per_cnot(4) == 18


def test_euler_gate_matrix_matches_helper():
    g = Q.euler_gate(0, Fraction(1, 8), Fraction(1, 4), Fraction(3, 8))
    assert np.allclose(g.matrix(), euler_to_matrix((Fraction(1, 8), Fraction(1, 4), Fraction(3, 8))))
    assert h_distance(g.matrix()[:, 0], euler_to_matrix(g.params)[:, 0]) == 0
