"""Suite orchestration: per-instance gap reports and aggregate maxima."""
from __future__ import annotations

import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

from .bounded import PipelineParams, lazy_kbranch_driver, solve_diameter_le7, uplink_2approx
from .core import TapInstance
from .errors import CertificateFailure, TapError
from .exact import solve_exact
from .generate import generate
from .lp import build_bunch3_lp, build_cut_lp, build_kbranch_lp, solve_lp
from .unitgap import build_dual, check_certificate, iterative_contraction

ALGORITHMS = ("exact", "outer", "unitgap", "unitgap-bunch", "diam7", "uplink2")
CERT_MODES = {"unitgap": "cut2815", "unitgap-bunch": "bunch74"}


def q(v) -> str:
    """Exact rational as a "p/q" string."""
    v = Fraction(v)
    return f"{v.numerator}/{v.denominator}"


@dataclass
class GapReport:
    instanceId: str
    n: int
    leafCount: int
    diameter: int
    maxCost: int
    exactOpt: int
    cutLpOpt: Fraction
    kBranchLpOpt: Fraction
    bunch3LpOpt: Fraction
    algorithms: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    def sandwich(self) -> list[str]:
        bad = []
        if not self.cutLpOpt <= self.kBranchLpOpt <= self.exactOpt:
            bad.append("cutLpOpt <= kBranchLpOpt <= exactOpt")
        if not self.cutLpOpt <= self.bunch3LpOpt <= self.exactOpt:
            bad.append("cutLpOpt <= bunch3LpOpt <= exactOpt")
        for name, rec in self.algorithms.items():
            if "cost" in rec and rec["cost"] < self.exactOpt:
                bad.append(f"{name} cost below the optimum")
        return bad

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("cutLpOpt", "kBranchLpOpt", "bunch3LpOpt"):
            out[key] = q(out[key])
        out["algorithms"] = {
            name: {k: q(v) if isinstance(v, Fraction) else v for k, v in rec.items()}
            for name, rec in self.algorithms.items()
        }
        return out


def _ratio(cost, lp: Fraction) -> Fraction:
    return Fraction(cost) / lp if lp else Fraction(1 if cost == 0 else 0)


def run_algorithm(instance: TapInstance, name: str, k: int = 6, lam=2, cutlp=None) -> dict:
    """Run one algorithm; the record holds cost, ratio vs the Cut-LP and any bound."""
    cutlp = cutlp if cutlp is not None else solve_lp(build_cut_lp(instance))
    rec: dict = {}
    if name == "exact":
        rec["cost"] = solve_exact(instance).cost
    elif name == "outer":
        mode = "unit" if instance.is_unit else "general"
        res = lazy_kbranch_driver(instance, PipelineParams(k, Fraction(lam), mode))
        rec.update(cost=res.cost, lpValue=res.lp_value, bound=res.bound, addedRows=len(res.added_rows))
        rec["certifiedRatio"] = res.ratio
    elif name in CERT_MODES:
        if not instance.is_unit:
            return {"skipped": "needs unit costs"}
        cover, state = iterative_contraction(instance)
        rec["cost"] = len(cover)
        try:
            cert = build_dual(state, CERT_MODES[name])
            report = check_certificate(instance, cover, cert)
            rec["certificate"] = "pass" if report.ok else "fail"
            rec["certifiedRatio"] = _ratio(len(cover), report.lp_value)
            rec["bound"] = cert.rho
        except CertificateFailure as exc:
            rec["certificate"] = f"failure: {exc.clause}"
    elif name == "diam7":
        if instance.diameter() > 7:
            return {"skipped": "diameter above 7"}
        res = solve_diameter_le7(instance)
        rec.update(cost=res.cost, certifiedRatio=res.ratio, bound=res.bound)
    elif name == "uplink2":
        ids = uplink_2approx(instance, cutlp.x)
        rec.update(cost=instance.cost_of(ids), bound=Fraction(2))
    else:
        raise ValueError(f"unknown algorithm {name!r}")
    rec["ratio"] = _ratio(rec["cost"], cutlp.objective)
    return rec


def evaluate(instance_id: str, instance: TapInstance, algorithms, k: int = 6, lam=2) -> GapReport:
    cutlp = solve_lp(build_cut_lp(instance))
    report = GapReport(
        instance_id,
        len(instance.nodes),
        len(instance.leaves),
        instance.diameter(),
        instance.max_cost,
        solve_exact(instance).cost,
        cutlp.objective,
        solve_lp(build_kbranch_lp(instance, k)).objective,
        solve_lp(build_bunch3_lp(instance)).objective,
    )
    for name in algorithms:
        try:
            rec = run_algorithm(instance, name, k, lam, cutlp)
        except (TapError, AssertionError) as exc:
            report.failures.append(f"{name}: {type(exc).__name__}: {exc}")
            continue
        report.algorithms[name] = rec
        cert = rec.get("certificate")
        if cert is not None:
            report.certificates[CERT_MODES[name]] = cert
    report.failures.extend(report.sandwich())
    return report


def _job(args):
    seed, profile, n, max_cost, algorithms, k, lam = args
    inst = generate(seed, profile, n=n, max_cost=max_cost)
    return evaluate(f"{profile}/n{n}/c{max_cost}/s{seed}", inst, algorithms, k, lam)


def suite_jobs(config: dict) -> list[tuple]:
    profiles = config.get("profiles", [])
    sizes = config.get("sizes", [10])
    count = config.get("count", 0)
    base = config.get("seed", 0)
    max_cost = config.get("maxCost", 1)
    algorithms = tuple(config.get("algorithms", ALGORITHMS))
    k, lam = config.get("k", 6), config.get("lambda", 2)
    return [
        (base + i, p, n, max_cost, algorithms, k, lam)
        for p, n, i in itertools.product(profiles, sizes, range(count))
    ]


def run_suite(config: dict) -> tuple[list[GapReport], dict]:
    """Reports in job order (independent of worker completion order) plus a summary."""
    jobs = suite_jobs(config)
    workers = config.get("workers", 1)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as pool:
            reports = list(pool.map(_job, jobs, chunksize=8))
    else:
        reports = [_job(j) for j in jobs]
    return reports, summarize(reports)


def summarize(reports: list[GapReport]) -> dict:
    maxima: dict[str, Fraction] = {}
    cert_fail: dict[str, list[str]] = {}
    for r in reports:
        for name, rec in r.algorithms.items():
            if "ratio" in rec:
                maxima[name] = max(maxima.get(name, Fraction(0)), rec["ratio"])
        for mode, status in r.certificates.items():
            if status != "pass":
                cert_fail.setdefault(mode, []).append(r.instanceId)
    return {
        "instances": len(reports),
        "maxRatioVsCutLp": {k: q(v) for k, v in sorted(maxima.items())},
        "maxExactOverCutLp": q(max((Fraction(r.exactOpt) / r.cutLpOpt for r in reports), default=0)),
        "failures": [f"{r.instanceId}: {f}" for r in reports for f in r.failures],
        "certificateFailures": cert_fail,
    }
