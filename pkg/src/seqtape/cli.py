"""``seqtape`` command line: compile, check, simulate, nmf.

Exit codes: 0 success, 2 invalid input, 3 route refused, 4 cap exceeded,
1 failed check or internal error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from typing import Sequence

import numpy as np

from . import circuits, io, ltm, mps, smps
from .errors import InvalidInput, SeqtapeError


def _say(args, *lines: str) -> None:
    if not args.quiet:
        for line in lines:
            print(line)


# -- compile --------------------------------------------------------------------

def cmd_compile(args) -> int:
    m = io.mps_from_json(io.read_json(args.input))
    if args.route == "naive":
        if args.pad:
            m = mps.pad_bond(m, args.pad)
        c = circuits.dilate_mps_naive(m)
    else:
        c = circuits.decouple_compile(m, chi=args.pad)
    cases = c.meta.get("cases") or [circuits.site_case(c.d, c.chi)] * c.n_sites
    c = replace(c, meta={**c.meta, "cases": [int(x) for x in cases]})
    io.write_json(args.output, io.circuit_to_json(c))
    _say(args, f"route {args.route}: chi={c.chi} d={c.d} sites={c.n_sites}",
         f"cases per site: {' '.join(str(x) for x in cases)}",
         f"max unitarity deviation: {c.max_unitarity_deviation():.3e}",
         f"wrote {args.output}")
    return 0


# -- check ----------------------------------------------------------------------

def _suite_canonical(obj, tol):
    m = io.mps_from_json(obj)
    devs = [m.canonical_deviation(n) for n in range(m.n_sites)]
    bad = [n for n, x in enumerate(devs, start=1) if x > tol]
    return not bad, {"deviations": devs, "failed_sites": bad}


def _suite_unitarity(obj, tol):
    c = io.circuit_from_json(obj)
    devs = [float(np.max(np.abs(g.conj().T @ g - np.eye(g.shape[0])))) for g in c.gates]
    bad = [n for n, x in enumerate(devs, start=1) if x > tol]
    return not bad, {"deviations": devs, "failed_sites": bad}


def _suite_decoupling(obj, tol):
    c = replace(io.circuit_from_json(obj), decoupled=False)
    r = circuits.run_circuit(c)
    overlap = circuits.correlator_overlap(r)
    second = float(r.schmidt[1]) if r.schmidt.size > 1 else 0.0
    return overlap >= 1 - tol, {"correlator_overlap": overlap, "second_schmidt": second}


def _suite_stochastic(obj, tol):
    s = io.smps_from_json(obj)
    devs = [float(np.max(np.abs(t.sum((0, 1)) - 1))) for t in s.tensors]
    bad = [n for n, x in enumerate(devs, start=1) if x > tol]
    return not bad, {"deviations": devs, "failed_sites": bad}


SUITES = {
    "canonical": _suite_canonical,
    "unitarity": _suite_unitarity,
    "decoupling": _suite_decoupling,
    "stochastic": _suite_stochastic,
}


def cmd_check(args) -> int:
    ok, details = SUITES[args.suite](io.read_json(args.input), args.tol)
    report = {"suite": args.suite, "pass": bool(ok), "tol": args.tol, **details}
    if args.output:
        io.write_json(args.output, report)
    lines = [f"{args.suite}: {'PASS' if ok else 'FAIL'}"]
    for k, v in details.items():
        lines.append(f"  {k}: {v}")
    _say(args, *lines)
    return 0 if ok else 1


# -- simulate -------------------------------------------------------------------

def _gate_matrix(x, kind: str) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if kind == "lqtm" and a.ndim == 3:
        return a[..., 0] + 1j * a[..., 1]
    return a


def _machine_from_json(obj: dict) -> tuple[ltm.LtmSpec, list[ltm.GateStep]]:
    io._need(obj, "Q", "d", "N", "gates", "steps")
    kind = obj["kind"]
    ctrl = obj.get("control", {})
    gates = {name: _gate_matrix(g, kind) for name, g in obj["gates"].items()}
    spec = ltm.LtmSpec(kind, obj["Q"], obj["d"], obj["N"], gates,
                       tuple(ctrl.get("states", (ltm.RUN, ltm.HALT))), ctrl.get("start", ltm.RUN),
                       frozenset(ctrl.get("halting", [ltm.HALT])))
    steps = [ltm.GateStep(s.get("gate"), s.get("site"), int(s.get("shift", 0)), s.get("ctrl"))
             for s in obj["steps"]]
    return spec, steps


def _bits(idx: int, d: int, n: int) -> list[int]:
    return [int(b) for b in np.unravel_index(idx, (d,) * n)] if n else []


def _simulate_machine(obj: dict, args) -> dict:
    spec, steps = _machine_from_json(obj)
    inp = obj.get("input", {})
    tape = inp.get("tape", [0] * spec.n_sites)
    proc = inp.get("processor", 0)
    head = int(inp.get("head", 0))
    if spec.kind == "lctm":
        res = ltm.run(spec, steps, ltm.initial_configuration(spec, tape, proc, head))
        q, bits = res.final.state
        return {"kind": "lctm", "tape": list(bits), "processor": q, "head": res.final.head,
                "control": res.final.control, "halted": res.halted, "steps": len(res.trace) - 1}
    if spec.kind == "lptm":
        if head:
            raise InvalidInput("probabilistic programs start with the head at site 0")
        r = smps.lptm_run(spec, steps, tape, proc, mode="exact" if args.mode == "enumerate" else "sample",
                          shots=args.shots, seed=args.seed)
        out = {"kind": "lptm", "mode": args.mode, "distribution": io.encode_real(r.distribution)}
        if r.counts is not None:
            out.update(counts=r.counts.tolist(), shots=args.shots, seed=args.seed)
        return out
    res = ltm.run(spec, steps, ltm.initial_configuration(spec, tape, proc, head), record_states=False)
    probs = np.real(np.diag(ltm.tape_marginal(spec, res.final))) if res.final.state.ndim == 2 else \
        np.sum(np.abs(res.final.state.reshape(spec.q_dim, -1)) ** 2, axis=0)
    return _quantum_outcomes(probs, spec.d, spec.n_sites, args, {"kind": "lqtm", "halted": res.halted})


def _quantum_outcomes(probs, d, n, args, out: dict) -> dict:
    probs = np.asarray(probs, dtype=float)
    if args.mode == "enumerate":
        out["branches"] = [{"tape": _bits(int(i), d, n), "probability": float(probs[i])}
                           for i in np.flatnonzero(probs > 1e-15)]
    else:
        rng = np.random.default_rng(args.seed)
        counts = rng.multinomial(args.shots, probs / probs.sum())
        out.update(counts={"".join(map(str, _bits(int(i), d, n))): int(counts[i]) for i in np.flatnonzero(counts)},
                   shots=args.shots, seed=args.seed)
    out["mode"] = args.mode
    return out


def _simulate_circuit(obj: dict, args) -> dict:
    io._need(obj, "circuit", "n_qubits")
    n = int(obj["n_qubits"])
    circ = [tuple([g[0]] + [int(x) for x in g[1:]]) for g in obj["circuit"]]
    psi = obj.get("input")
    psi = io.decode_complex(psi) if psi is not None else None
    ideal = ltm.simulate_dense(circ, n, psi)
    route = obj.get("compile", "unilateral")
    if route == "swap":
        spec, prog = ltm.compile_qcm_to_lqtm(circ, n)
        cfg = ltm.initial_configuration(spec, [0] * n if psi is None else psi)
        res = ltm.run(spec, prog, cfg, record_states=False)
        out_state = res.final.state.reshape(2, -1)
        err = float(np.max(np.abs(out_state[0] - ideal)))
        return {"kind": "lqtm", "compile": "swap", "mode": args.mode, "max_error": err,
                "ancilla_residual": float(np.linalg.norm(out_state[1])), "steps": len(prog)}
    if route != "unilateral":
        raise InvalidInput(f"unknown compile route {route!r}")
    spec, prog, corr = ltm.compile_unilateral(circ, n)
    branches, res = ltm.enumerate_branches(spec, prog, corr, psi)
    heads = ltm.head_positions(res.trace)
    out = {"kind": "lqtm", "compile": "unilateral", "mode": args.mode,
           "measured_sites": list(corr.measured), "tape_sites": spec.n_sites,
           "head_nondecreasing": bool(all(b >= a for a, b in zip(heads, heads[1:])))}
    if args.mode == "enumerate":
        out["branches"] = [{"outcome": list(b.outcome), "probability": b.probability,
                            "correction": corr.labels[b.outcome],
                            "max_error": float(np.max(np.abs(b.corrected - ideal)))} for b in branches]
    else:
        rng = np.random.default_rng(args.seed)
        p = np.array([b.probability for b in branches])
        counts = rng.multinomial(args.shots, p / p.sum())
        out.update(counts={"".join(map(str, b.outcome)): int(k) for b, k in zip(branches, counts) if k},
                   shots=args.shots, seed=args.seed)
    return out


def _simulate_smps(obj: dict, args) -> dict:
    if "smps" in obj:
        s = io.smps_from_json(obj["smps"])
    elif "distribution" in obj:
        p, d, n = io.distribution_from_json(obj["distribution"])
        s = smps.prob_to_smps(p, d, n)
    else:
        raise InvalidInput("smps program needs an 'smps' or 'distribution' field")
    prog = smps.decouple_stochastic(s)
    out = {"kind": "smps", "mode": args.mode, "d": prog.d, "N": prog.n_sites, "chi": prog.chi}
    gen = smps.generate_distribution(prog)
    if args.mode == "enumerate":
        out.update(distribution=io.encode_real(gen.distribution), correlator=io.encode_real(gen.correlator))
    else:
        rep = smps.sample_sequential(prog, args.shots, args.seed)
        out.update(counts=rep.counts.tolist(), shots=args.shots, seed=args.seed, tv=rep.tv, tv_bound=rep.bound)
    return out


def cmd_simulate(args) -> int:
    obj = io.read_json(args.input)
    kind = obj.get("kind")
    if kind == "smps":
        out = _simulate_smps(obj, args)
    elif kind == "lqtm" and "circuit" in obj:
        out = _simulate_circuit(obj, args)
    elif kind in ltm.KINDS:
        out = _simulate_machine(obj, args)
    else:
        raise InvalidInput(f"unknown program kind {kind!r}")
    io.write_json(args.output, out)
    summary = [f"{kind} program, mode {args.mode}"]
    if "branches" in out:
        summary.append(f"{len(out['branches'])} branches")
    if "tape" in out:
        summary.append(f"tape {''.join(map(str, out['tape']))} halted={out['halted']}")
    summary.append(f"wrote {args.output}")
    _say(args, *summary)
    return 0


# -- nmf ------------------------------------------------------------------------

def cmd_nmf(args) -> int:
    a = io.matrix_from_json(io.read_json(args.input))
    r = smps.nmf_kl(a, args.k, max_iter=args.max_iter, tol=args.tol, seed=args.seed)
    io.write_json(args.output, io.nmf_to_json(r))
    _say(args, f"k={r.k} iterations={r.iterations} divergence={r.divergence:.6e}", f"wrote {args.output}")
    return 0


# -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqtape", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("input")
        sp.add_argument("-o", "--output", required=True)
        sp.add_argument("--quiet", action="store_true")

    c = sub.add_parser("compile", help="compile an MPX file to a circuit")
    common(c)
    c.add_argument("--route", choices=("naive", "decouple"), default="decouple")
    c.add_argument("--pad", type=int, default=None, help="constant bond dimension")
    c.set_defaults(func=cmd_compile)

    k = sub.add_parser("check", help="run an invariant suite on an artifact")
    k.add_argument("input")
    k.add_argument("-o", "--output")
    k.add_argument("--quiet", action="store_true")
    k.add_argument("--suite", choices=sorted(SUITES), required=True)
    k.add_argument("--tol", type=float, default=1e-10)
    k.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="run a machine or generator program")
    common(s)
    s.add_argument("--mode", choices=("enumerate", "sample"), default="enumerate")
    s.add_argument("--shots", type=int, default=10000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    n = sub.add_parser("nmf", help="KL nonnegative matrix factorization")
    common(n)
    n.add_argument("--k", type=int, required=True)
    n.add_argument("--max-iter", type=int, default=2000)
    n.add_argument("--tol", type=float, default=1e-12)
    n.add_argument("--seed", type=int, default=0)
    n.set_defaults(func=cmd_nmf)
    return p


def _validate(args) -> None:
    if getattr(args, "tol", 1.0) is not None and getattr(args, "tol", 1.0) <= 0:
        raise InvalidInput("--tol must be positive")
    if getattr(args, "shots", 1) < 1:
        raise InvalidInput("--shots must be positive")
    seed = getattr(args, "seed", 0)
    if not 0 <= seed < 2**64:
        raise InvalidInput("--seed must be a 64-bit unsigned integer")


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        return args.func(args)
    except SeqtapeError as exc:
        print(f"seqtape: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"seqtape: internal error: {exc!r}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
