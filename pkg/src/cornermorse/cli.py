"""Command line front end: validate, critical, complex, homology, trace.

Every command reads one JSON problem config and writes one JSON report.
Exit codes: 0 success (and oracle match for ``homology``), 2 config or
Morse validation failure, 3 numeric failure, 4 oracle mismatch.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .connect import InconclusiveError, MorseSmaleViolation, TransversalityError, build_complex
from .critical import find_critical_points
from .domain import DomainError
from .expr import ExprDomainError
from .field import MorseViolation, validate_morse
from .flow import FlowError, integrate, write_trace
from .homology import expected_homology, homology, verify_chain
from .problem import ConfigError, load_problem

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC, EXIT_MISMATCH = 0, 2, 3, 4
COMMANDS = ("validate", "critical", "complex", "homology", "trace")


def _matrix(M) -> list[list[int]]:
    return [[int(v) for v in row] for row in np.asarray(M, dtype=object)]


def _complex_section(mc) -> dict:
    return {
        "generators": {str(k): v for k, v in sorted(mc.generators.items())},
        "boundary_matrices": {str(k): _matrix(mc.boundary(k))
                              for k in range(1, mc.top + 1)},
        "chain_check": verify_chain(mc),
        "trajectories": [
            {"source": t.source, "target": t.target, "sign": int(t.sign),
             "seed": [float(x) for x in t.seed],
             "angle": None if t.angle is None else float(t.angle)}
            for t in mc.trajectories],
    }


def run(command: str, pr, trace_path=None) -> tuple[int, dict]:
    """Run one pipeline command; returns ``(exit_code, report)``.

    The report carries a ``timing`` block; everything else is a function
    of the problem and the tool version only.
    """
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    report = {"tool": {"name": "cornermorse", "version": __version__},
              "command": command, "config": pr.resolved()}
    timing = {}
    code = EXIT_OK
    t0 = time.perf_counter()
    try:
        search = find_critical_points(pr, strict=False)
        timing["critical"] = time.perf_counter() - t0
        report["critical_points"] = [cp.to_json() for cp in search.points]
        report["epsilon"] = {str(cp.id): cp.epsilon for cp in search.essential}
        t1 = time.perf_counter()
        val = validate_morse(pr, search.points)
        timing["validate"] = time.perf_counter() - t1
        report["morse_validation"] = val.to_json()
        if not val.passed:
            report["error"] = {"kind": "validation",
                               "message": f"{len(val.failures)} Morse condition failure(s)"}
            return _finish(report, timing, EXIT_INVALID)
        if command == "critical":
            report["coverage"] = search.coverage
        if command in ("complex", "homology", "trace"):
            t1 = time.perf_counter()
            mc = build_complex(pr, search)
            timing["complex"] = time.perf_counter() - t1
            report.update(_complex_section(mc))
            if command in ("homology", "trace"):
                h = homology(mc) if report["chain_check"] else None
                oracle = expected_homology(pr.domain)
                report["oracle_betti"] = oracle.betti
                if h is None:
                    report["betti"] = report["torsion"] = None
                    report["match"] = False
                else:
                    report["betti"] = h.betti
                    report["torsion"] = h.torsion
                    report["match"] = h.betti == oracle.betti and h.torsion == oracle.torsion
                if not report["match"]:
                    code = EXIT_MISMATCH
            if command == "trace":
                paths = [t.path for t in mc.trajectories]
                if not paths:
                    # nothing connects: dump the flow from each unstable seed instead
                    paths = [integrate(pr, cp.location + cp.epsilon * cp.E_minus[:, 0])
                             for cp in search.essential if cp.index]
                text = write_trace(pr, paths)
                if trace_path is not None:
                    Path(trace_path).write_text(text)
                report["trace"] = {"path": None if trace_path is None else str(trace_path),
                                   "trajectories": len(paths)}
    except (MorseViolation, DomainError, ExprDomainError) as exc:
        if isinstance(exc, MorseSmaleViolation):
            report["error"] = {"kind": "morse_smale", "message": str(exc)}
            return _finish(report, timing, EXIT_NUMERIC)
        report["error"] = {"kind": "validation", "message": str(exc)}
        return _finish(report, timing, EXIT_INVALID)
    except (TransversalityError, InconclusiveError, FlowError) as exc:
        report["error"] = {"kind": type(exc).__name__, "message": str(exc)}
        return _finish(report, timing, EXIT_NUMERIC)
    return _finish(report, timing, code)


def _finish(report, timing, code):
    report["exit_code"] = code
    report["timing"] = {k: round(v, 6) for k, v in timing.items()}
    return code, report


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cornermorse",
        description="Morse complex of a gradient flow on a flat manifold with corners.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="problem JSON file")
    ap.add_argument("--output", help="report path (default: stdout)")
    ap.add_argument("--trace", help="CSV trajectory dump (trace command)")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    ap.add_argument("--samples", type=int, default=None,
                    help="unstable-sphere samples m (default 64)")
    ap.add_argument("--epsilon", type=float, default=None,
                    help="override the per-critical-point sphere radius")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        pr = load_problem(args.config)
        opts = {}
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            opts["seed"] = args.seed
        cx = {}
        if args.samples is not None:
            if args.samples < 2:
                raise ConfigError("--samples must be at least 2")
            cx["samples"] = args.samples
        if args.epsilon is not None:
            if not args.epsilon > 0:
                raise ConfigError("--epsilon must be > 0")
            cx["epsilon"] = args.epsilon
        if cx:
            opts["complex"] = cx
        if opts:
            pr = pr.with_options(**opts)
    except ConfigError as exc:
        code = EXIT_INVALID
        report = {"tool": {"name": "cornermorse", "version": __version__},
                  "command": args.command, "exit_code": code,
                  "error": {"kind": "config", "message": str(exc)}}
    else:
        code, report = run(args.command, pr, trace_path=args.trace)
    text = dumps(report)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if "error" in report:
        print(f"cornermorse: {report['error']['message']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
