"""Command-line front end.

Every command takes --seed and writes a JSON report (schema version
REPORT_SCHEMA) to --report or standard output. Exit codes: 0 success,
2 bad parameters or inputs, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import statistics
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import lattice as lat
from .crot import CrotEngine, CrotTranscript, SimMode
from .hebackend import BudgetError, ChainError, KeyChain, keychain_gen, make_backend
from .qfhe import (
    CircuitSyntaxError, LevelOverflowError, QheContext, QheParams, cost_table, eval_circuit,
    linear_fit, parse_circuit, qhe_dec, qhe_enc, qhe_keygen, register_from_bytes,
    register_to_bytes, rotation_steps_per_cnot, security_trial, simulate,
)
from .qsim import StateVector, trace_distance_pure

REPORT_SCHEMA = 1
EXIT_OK, EXIT_PARAM, EXIT_VERIFY = 0, 2, 3


class VerificationFailed(Exception):
    """A check the command was asked to perform did not pass."""


# ------------------------------------------------------------- helpers

def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def _digest(obj) -> str:
    data = obj if isinstance(obj, bytes) else json.dumps(obj, sort_keys=True).encode()
    return hashlib.sha256(data).hexdigest()[:16]


def _emit(report: dict, dest: str | None):
    report = {"schema": REPORT_SCHEMA, **report}
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if dest:
        Path(dest).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(msg: str):
    print(msg, file=sys.stderr)


def parse_state(spec: str) -> StateVector:
    """'|101>' (qubit 0 leftmost), '|+>' style 1-qubit labels, or a JSON file.

    The file holds either a list of amplitudes (numbers or [re, im] pairs)
    or {"amplitudes": [...]}.
    """
    s = spec.strip()
    if s.startswith("|") or all(c in "01" for c in s) and s:
        label = s.strip("|>")
        if label in ("+", "-"):
            sign = 1 if label == "+" else -1
            return StateVector(np.array([1, sign]) / math.sqrt(2))
        if label in ("i", "-i"):
            sign = 1 if label == "i" else -1
            return StateVector(np.array([1, sign * 1j]) / math.sqrt(2))
        if not label or any(c not in "01" for c in label):
            raise ValueError(f"malformed basis label {spec!r}")
        return StateVector.basis(label)
    path = Path(s)
    if not path.exists():
        raise ValueError(f"state {spec!r} is neither a basis label nor a file")
    data = json.loads(path.read_text())
    if isinstance(data, dict):
        data = data.get("amplitudes")
    if not isinstance(data, list) or not data:
        raise ValueError("amplitude file must hold a non-empty list")
    amp = np.array([complex(x[0], x[1]) if isinstance(x, list) else complex(x) for x in data])
    norm = np.linalg.norm(amp)
    if norm == 0:
        raise ValueError("zero state vector")
    return StateVector(amp / norm)


def _state_json(state: StateVector) -> list:
    return [[float(a.real), float(a.imag)] for a in state.amplitudes]


def _read_keys(path: str):
    chain = KeyChain.from_bytes(Path(path).read_bytes())
    meta = chain.extra.get("qhe")
    if meta is None:
        raise ValueError(f"{path} holds no scheme parameters")
    lam, levels, k, degree = (int(v) for v in meta)
    params = QheParams(lam, levels, k, chain.kind, degree, chain.params)
    return chain, params


def _context(args, record: bool = False) -> QheContext:
    chain, params = _read_keys(args.keys)
    mode = SimMode(getattr(args, "mode", "idealized"))
    return QheContext(chain, params, mode, _rng(args.seed), record=record)


def _read_circuit(path: str):
    return parse_circuit(Path(path).read_text())


def _engine_report(ctx: QheContext) -> dict:
    eng = ctx.engine
    out = {"rotation_steps": int(ctx.backend.stats["alg1"]), "s_events": int(eng.s_events),
           "classical_depth": int(ctx.backend.stats["euler_depth"])}
    if eng.transcripts:
        dists = [t.distance for t in eng.transcripts]
        out["crot_distance_max"] = max(dists)
        out["crot_distance_median"] = statistics.median(dists)
        out["transcript_digest"] = _digest([t.to_json() for t in eng.transcripts])
    return out


# ------------------------------------------------------------ commands

def cmd_keygen(args) -> int:
    rng = _rng(args.seed)
    chain, params = qhe_keygen(args.lam, args.levels, args.kbits, args.backend, rng,
                               args.preset, args.degree)
    chain.extra["qhe"] = np.array([params.lam, params.levels, params.k, params.degree])
    blob = chain.to_bytes()
    Path(args.out).write_bytes(blob)
    _summary(f"{chain.n_slots} key slots written to {args.out}")
    _emit({"command": "keygen", "seed": args.seed, "slots": chain.n_slots,
           "backend": chain.kind, "params_hash": chain.params.digest().hex(),
           "lambda": params.lam, "levels": params.levels, "k": params.k,
           "degree": params.degree, "key_digest": _digest(blob)}, args.report)
    return EXIT_OK


def cmd_encrypt(args) -> int:
    ctx = _context(args)
    state = parse_state(args.state)
    reg = qhe_enc(ctx, state, pauli=args.pauli)
    blob = register_to_bytes(ctx, reg)
    Path(args.out).write_bytes(blob)
    _emit({"command": "encrypt", "seed": args.seed, "qubits": state.n_qubits,
           "params_hash": ctx.chain.params.digest().hex(), "bundle_digest": _digest(blob)},
          args.report)
    return EXIT_OK


def cmd_decrypt(args) -> int:
    ctx = _context(args)
    reg = register_from_bytes(ctx, Path(args.inp).read_bytes())
    out = qhe_dec(ctx, reg)
    report = {"command": "decrypt", "seed": args.seed, "state": _state_json(out)}
    if args.out:
        Path(args.out).write_text(json.dumps({"amplitudes": _state_json(out)}) + "\n")
    if args.reference:
        ref = parse_state(args.reference)
        d = trace_distance_pure(out.normalize(), ref)
        report["trace_distance"] = d
        _summary(f"trace distance to reference: {d:.3e}")
        if args.tol is not None and d > args.tol:
            _emit(report, args.report)
            raise VerificationFailed(f"distance {d:.3e} exceeds {args.tol}")
    _emit(report, args.report)
    return EXIT_OK


def cmd_eval(args) -> int:
    record = args.record is not None or args.mode == SimMode.EXACT.value
    ctx = _context(args, record=record)
    reg = register_from_bytes(ctx, Path(args.inp).read_bytes())
    circuit = _read_circuit(args.circuit)
    eval_circuit(ctx, reg, circuit)
    blob = register_to_bytes(ctx, reg)
    Path(args.out).write_bytes(blob)
    if args.record:
        Path(args.record).write_text(json.dumps(
            {"seed": args.seed, "transcripts": [json.loads(t.to_json())
                                                for t in ctx.engine.transcripts]}) + "\n")
    _emit({"command": "eval", "seed": args.seed, "mode": args.mode, **circuit.counts(),
           **_engine_report(ctx), "bundle_digest": _digest(blob)}, args.report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    circuit = _read_circuit(args.circuit)
    state = parse_state(args.state)
    out = simulate(circuit, state)
    if args.out:
        Path(args.out).write_text(json.dumps({"amplitudes": _state_json(out)}) + "\n")
    _emit({"command": "simulate", **circuit.counts(), "state": _state_json(out)}, args.report)
    return EXIT_OK


def cmd_verify(args) -> int:
    """keygen, encrypt, eval, decrypt in memory; compare with the plaintext run."""
    circuit = _read_circuit(args.circuit)
    state = parse_state(args.state)
    levels = sum(1 for lv in circuit.levels if lv.cnots)
    rng = _rng(args.seed)
    chain, params = qhe_keygen(args.lam, levels, args.kbits, "mock", rng, degree=args.degree)
    mode = SimMode(args.mode)
    ctx = QheContext(chain, params, mode, rng, record=mode == SimMode.EXACT)
    reg = qhe_enc(ctx, state)
    eval_circuit(ctx, reg, circuit)
    out = qhe_dec(ctx, reg)
    ref = simulate(circuit, state)
    d = trace_distance_pure(out.normalize(), ref)
    ok = d <= args.tol
    _summary(f"trace distance {d:.3e} ({'ok' if ok else 'FAIL'}, tolerance {args.tol})")
    _emit({"command": "verify", "seed": args.seed, "mode": args.mode, "k": args.kbits,
           **circuit.counts(), **_engine_report(ctx), "trace_distance": d,
           "tolerance": args.tol, "passed": ok}, args.report)
    if not ok:
        raise VerificationFailed(f"distance {d:.3e} exceeds {args.tol}")
    return EXIT_OK


def cmd_security(args) -> int:
    if args.trials < 10_000:
        _summary(f"warning: {args.trials} trials is below the 10^4 the bound assumes")
    state = parse_state(args.state)
    if state.n_qubits != 1:
        raise ValueError("security trials take a 1-qubit state")
    rho = security_trial(args.kbits, state.amplitudes, args.trials, _rng(args.seed))
    dev = float(np.abs(rho - np.eye(2) / 2).max())
    bound = 5 / math.sqrt(args.trials)
    report = {"command": "security", "seed": args.seed, "k": args.kbits, "trials": args.trials,
              "mean_density": [[[float(z.real), float(z.imag)] for z in row] for row in rho],
              "max_deviation": dev, "bound": bound, "passed": dev <= bound}
    _summary(f"max entrywise deviation from I/2: {dev:.4f} (bound {bound:.4f})")
    _emit(report, args.report)
    if dev > bound:
        raise VerificationFailed("mean density matrix is too far from I/2")
    return EXIT_OK


def measure_costs(rng: np.random.Generator, samples: int = 5) -> tuple:
    """Median seconds for one exact-mode rotation step and one lattice NAND."""
    chain = keychain_gen(16, 0, 1, "lattice", rng=rng, n_slots=2)
    backend = make_backend(chain, rng)
    engine = CrotEngine(backend, SimMode.EXACT, rng)
    t_q, t_c = [], []
    x, y = backend.enc(1, 1), backend.enc(0, 1)
    for _ in range(samples):
        zeta = backend.enc(int(rng.integers(2)), 1)
        state = StateVector(np.array([0.6, 0.8]))
        t0 = time.perf_counter()
        engine.ctrl_rot_1bit(Fraction(1, 4), zeta, state, 0)
        t_q.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        backend.nand(x, y)
        t_c.append(time.perf_counter() - t0)
    return statistics.median(t_q), statistics.median(t_c)


def count_rotation_steps(k: int, circuit_text: str, rng) -> tuple:
    """(counted, predicted) rotation steps for a mock evaluation of a circuit."""
    circuit = parse_circuit(circuit_text)
    levels = sum(1 for lv in circuit.levels if lv.cnots)
    chain, params = qhe_keygen(16, levels, k, "mock", rng, degree=16 + k)
    ctx = QheContext(chain, params, SimMode.IDEALIZED, rng)
    reg = qhe_enc(ctx, StateVector.basis("0" * max(circuit.n_qubits, 1)))
    eval_circuit(ctx, reg, circuit)
    predicted = circuit.counts()["cnot"] * rotation_steps_per_cnot(k)
    return int(ctx.backend.stats["alg1"]), predicted


def cmd_bench(args) -> int:
    try:
        lams = [int(x) for x in args.lambda_range.split(",")]
    except ValueError:
        raise ValueError(f"bad lambda range {args.lambda_range!r}") from None
    ps = [float(x) for x in args.p.split(",")]
    if any(not 0 <= p <= 1 for p in ps):
        raise ValueError("p must lie in [0, 1]")
    rng = _rng(args.seed)
    if args.t_q is not None and args.t_c is not None:
        t_q, t_c = args.t_q, args.t_c
    else:
        t_q, t_c = measure_costs(rng, args.samples)
    tables = {}
    fits = {}
    for p in ps:
        rows = cost_table(p, lams, t_q, t_c)
        tables[str(p)] = rows
        slope, icpt, r2 = linear_fit(lams, [r["ratio"] for r in rows])
        fits[str(p)] = {"slope": slope, "intercept": icpt, "r2": r2}
    k = 4
    counted, predicted = count_rotation_steps(k, "U 0 euler 0 0.25 0.5\nCNOT 0 1\n", rng)
    counted0, _ = count_rotation_steps(k, "U 0 euler 0 0.25 0.5\nU 1 euler 0.5 0 0\n", rng)
    check = {"k": k, "counted": counted, "predicted": predicted,
             "one_qubit_only_counted": counted0,
             "passed": counted == predicted and counted0 == 0}
    if args.csv:
        lines = ["p,lambda,prior,ours,ratio"]
        for p, rows in tables.items():
            lines += [f"{p},{r['lambda']},{r['prior']:.6g},{r['ours']:.6g},{r['ratio']:.6g}"
                      for r in rows]
        Path(args.csv).write_text("\n".join(lines) + "\n")
    for p, rows in tables.items():
        _summary(f"p={p}: ratios " + ", ".join(f"{r['lambda']}:{r['ratio']:.3g}" for r in rows))
    _emit({"command": "bench", "seed": args.seed, "t_q": t_q, "t_c": t_c,
           "tables": tables, "fits": fits, "op_check": check}, args.report)
    if not check["passed"]:
        raise VerificationFailed("counted rotation steps disagree with the model")
    return EXIT_OK


def cmd_transcript(args) -> int:
    path = Path(args.run)
    if not path.exists():
        raise ValueError(f"no recorded run at {args.run}")
    data = json.loads(path.read_text())
    trs = [CrotTranscript(**t) for t in data.get("transcripts", [])]
    bad = [i for i, t in enumerate(trs) if not t.check()]
    dump = [json.loads(t.to_json()) for t in trs]
    if args.out:
        Path(args.out).write_text(json.dumps({"transcripts": dump}, sort_keys=True) + "\n")
    _emit({"command": "transcript", "count": len(trs), "failed": bad,
           "digest": _digest([t.to_json() for t in trs])}, args.report)
    if bad:
        raise VerificationFailed(f"{len(bad)} transcripts fail the preimage identity")
    return EXIT_OK


# -------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qotpfhe", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--report", help="write the JSON report here instead of stdout")
        return p

    p = add("keygen", cmd_keygen, "generate a key chain")
    p.add_argument("--lambda", dest="lam", type=int, default=16)
    p.add_argument("--levels", type=int, default=1)
    p.add_argument("--kbits", type=int, default=16)
    p.add_argument("--backend", choices=["mock", "lattice"], default="mock")
    p.add_argument("--preset", choices=["toy_s", "toy_m"], default="toy_s")
    p.add_argument("--degree", type=int, default=64, help="Taylor degree of the Euler circuit")
    p.add_argument("--out", required=True)

    p = add("encrypt", cmd_encrypt, "pad a state and encrypt its gate keys")
    p.add_argument("--keys", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--pauli", action="store_true", help="use Pauli pads")
    p.add_argument("--out", required=True)

    p = add("decrypt", cmd_decrypt, "decrypt a ciphertext bundle")
    p.add_argument("--keys", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out")
    p.add_argument("--reference", help="state to compare against")
    p.add_argument("--tol", type=float, help="fail (exit 3) above this trace distance")

    p = add("eval", cmd_eval, "evaluate a circuit on a ciphertext bundle")
    p.add_argument("--keys", required=True)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--circuit", required=True)
    p.add_argument("--mode", choices=[m.value for m in SimMode], default="idealized")
    p.add_argument("--record", help="write rotation-step transcripts here")
    p.add_argument("--out", required=True)

    p = add("simulate", cmd_simulate, "plaintext reference run")
    p.add_argument("--circuit", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--out")

    p = add("verify", cmd_verify, "encrypted run against the plaintext run")
    p.add_argument("--circuit", required=True)
    p.add_argument("--state", required=True)
    p.add_argument("--lambda", dest="lam", type=int, default=16)
    p.add_argument("--kbits", type=int, default=16)
    p.add_argument("--degree", type=int, default=64)
    p.add_argument("--mode", choices=[m.value for m in SimMode], default="idealized")
    p.add_argument("--tol", type=float, default=1e-3)

    p = add("security", cmd_security, "mean density matrix over fresh pads")
    p.add_argument("--kbits", type=int, default=14)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--state", default="|0>")

    p = add("bench", cmd_bench, "cost model against the Pauli-pad scheme")
    p.add_argument("--p", default="0.5", help="comma-separated CNOT fractions")
    p.add_argument("--lambda-range", default="8,16,32,64")
    p.add_argument("--samples", type=int, default=5)
    p.add_argument("--t-q", type=float, help="use this rotation-step time instead of measuring")
    p.add_argument("--t-c", type=float, help="use this bit-operation time instead of measuring")
    p.add_argument("--csv", help="also write the tables as CSV")

    p = add("transcript", cmd_transcript, "re-check and dump recorded transcripts")
    p.add_argument("--run", required=True)
    p.add_argument("--out")
    return ap


PARAM_ERRORS = (ValueError, lat.ParameterError, lat.FormatError, ChainError,
                LevelOverflowError, CircuitSyntaxError, OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except VerificationFailed as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except BudgetError as exc:
        print(f"noise budget exhausted: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except PARAM_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
