"""Command-line entry points: tapgen, tapsolve and tapsuite.

Exit codes: 0 ok, 1 bound or invariant failure, 2 infeasible or malformed
input, 3 cap exceeded, 4 certificate failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction

from .bounded import PipelineParams, lazy_kbranch_driver, solve_diameter_le7, uplink_2approx
from .core import dump_instance, load_instance
from .errors import BoundViolation, CapExceededError, CertificateFailure, InfeasibleError, InvalidInstanceError
from .exact import solve_exact
from .generate import generate
from .lp import build_bunch3_lp, build_cut_lp, build_kbranch_lp, solve_lp
from .suite import q, run_suite
from .unitgap import build_dual, check_certificate, iterative_contraction

SOLVE_ALGOS = ("exact", "cutlp", "kbranch", "bunch3", "outer", "unitgap", "unitgap-bunch", "diam7", "uplink2")


def _default(obj):
    if isinstance(obj, Fraction):
        return q(obj)
    if isinstance(obj, (set, frozenset, tuple)):
        return sorted(obj) if isinstance(obj, (set, frozenset)) else list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(data) -> str:
    return json.dumps(data, default=_default, indent=2, sort_keys=True)


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def tapgen(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="tapgen", description="Generate a seeded instance.")
    ap.add_argument("--seed", type=int, required=True)
    ap.add_argument("--profile", default="random-tree")
    ap.add_argument("--n", type=int, default=10)
    ap.add_argument("--max-cost", type=int, default=1, help="1 gives a unit-cost instance")
    ap.add_argument("--links", type=int, default=None)
    ap.add_argument("--out", required=True)
    args = ap.parse_args(argv)
    try:
        inst = generate(args.seed, args.profile, n=args.n, max_cost=args.max_cost, links=args.links)
    except ValueError as exc:
        return _fail(2, str(exc))
    dump_instance(inst, args.out)
    return 0


def _lp_report(result) -> dict:
    return {"objective": result.objective, "x": {str(j): v for j, v in sorted(result.x.items()) if v}}


def solve_one(instance, algo: str, k: int = 6, lam=2) -> tuple[dict, int]:
    """Report for one algorithm plus the exit code it implies."""
    report: dict = {"algo": algo}
    if algo == "exact":
        sol = solve_exact(instance)
        report.update(cost=sol.cost, links=sol.links)
    elif algo == "cutlp":
        report.update(_lp_report(solve_lp(build_cut_lp(instance))))
    elif algo == "kbranch":
        report.update(_lp_report(solve_lp(build_kbranch_lp(instance, k))), k=k)
    elif algo == "bunch3":
        report.update(_lp_report(solve_lp(build_bunch3_lp(instance))))
    elif algo == "outer":
        mode = "unit" if instance.is_unit else "general"
        res = lazy_kbranch_driver(instance, PipelineParams(k, Fraction(lam), mode))
        report.update(res.trace(), links=res.links, k=k, **{"lambda": Fraction(lam)}, costMode=mode)
    elif algo in ("unitgap", "unitgap-bunch"):
        mode = "cut2815" if algo == "unitgap" else "bunch74"
        cover, state = iterative_contraction(instance)
        report.update(cost=len(cover), links=cover)
        cert = build_dual(state, mode)
        check = check_certificate(instance, cover, cert)
        report.update(
            lp="cut" if mode == "cut2815" else "bunch3",
            lpValue=check.lp_value,
            ratio=Fraction(len(cover)) / check.lp_value,
            bound=cert.rho,
            certificate=json.loads(cert.to_json(check.ok)),
        )
        if not check.gap_ok:
            return report, 1
        if not check.ok:
            return report, 4
    elif algo == "diam7":
        res = solve_diameter_le7(instance)
        report.update(cost=res.cost, links=res.links, optimum=res.optimum, ratio=res.ratio, bound=res.bound)
    elif algo == "uplink2":
        lp = solve_lp(build_cut_lp(instance))
        ids = uplink_2approx(instance, lp.x)
        cost = instance.cost_of(ids)
        report.update(cost=cost, links=ids, lpValue=lp.objective, ratio=Fraction(cost) / lp.objective, bound=2)
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    if "cost" in report and "lpValue" not in report and algo not in ("outer",):
        lp = solve_lp(build_cut_lp(instance)).objective
        report["ratio"] = Fraction(report["cost"]) / lp if lp else Fraction(1)
    return report, 0


def tapsolve(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="tapsolve", description="Solve one instance file.")
    ap.add_argument("--algo", choices=SOLVE_ALGOS, required=True)
    ap.add_argument("--k", type=int, default=6)
    ap.add_argument("--lambda", dest="lam", type=Fraction, default=Fraction(2))
    ap.add_argument("file")
    args = ap.parse_args(argv)
    try:
        instance = load_instance(args.file)
        if not instance.is_feasible:
            raise InfeasibleError(f"uncovered tree edges {list(instance.uncovered_edges)}")
        report, code = solve_one(instance, args.algo, args.k, args.lam)
    except (OSError, InvalidInstanceError, InfeasibleError, ValueError) as exc:
        return _fail(2, str(exc))
    except CapExceededError as exc:
        return _fail(3, str(exc))
    except CertificateFailure as exc:
        return _fail(4, str(exc))
    except (BoundViolation, AssertionError) as exc:
        return _fail(1, str(exc))
    print(dumps(report))
    return code


def tapsuite(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="tapsuite", description="Run a generated-instance suite.")
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", required=True)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args(argv)
    try:
        with open(args.config) as fh:
            config = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(2, str(exc))
    if args.workers is not None:
        config["workers"] = args.workers
    try:
        reports, summary = run_suite(config)
    except ValueError as exc:
        return _fail(2, str(exc))
    with open(args.out, "w") as fh:
        fh.write(dumps({"reports": [r.to_json() for r in reports], "summary": summary}))
        fh.write("\n")
    print(dumps(summary))
    return 1 if summary["failures"] else 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    commands = {"gen": tapgen, "solve": tapsolve, "suite": tapsuite}
    if not argv or argv[0] not in commands:
        print("usage: python -m tapaug {gen,solve,suite} ...", file=sys.stderr)
        return 2
    return commands[argv[0]](argv[1:])


def _entry(fn):
    def run():
        sys.exit(fn())

    return run


tapgen_main = _entry(tapgen)
tapsolve_main = _entry(tapsolve)
tapsuite_main = _entry(tapsuite)
