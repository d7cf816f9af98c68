"""Command line entry point: ``lab <command> --config cfg.json [--seed N] [--out DIR]``.

Each run writes into ``<out>/<command>-<hash8>-seed<N>/``:
``verdicts.json`` (deterministic), ``record.json`` (adds wall-clock and
version) and command-specific CSV or field files. The exit code is 0 iff
every asserted check passed; searches are exploratory and never fail a run.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import shutil
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import calculus as calc
from .config import AUTO_INTERVAL, OUTSIDE_STEP, ExperimentConfig, config_hash, load_config
from .criterion import (
    admissible_p_interval,
    band_limited_probe,
    certify_contractivity,
    compare_intervals,
    search_counterexample,
)
from .errors import LabError
from .forms import (
    CoefficientField,
    assemble_form,
    ellipticity_constants,
    make_coefficients,
    read_coefficients,
)
from .projection import project_onto_lp_ball, variational_residual
from .semigroup import evolve_and_measure
from .spaces import read_field, write_field

COMMANDS = ("certify", "interval", "project", "evolve", "search", "verify-calculus")


@dataclass
class RunRecord:
    command: str
    config: dict
    config_hash: str
    seed: int
    constants: dict | None = None
    intervals: dict | None = None
    verdicts: dict = field(default_factory=dict)
    passed: bool = True
    artifacts: list = field(default_factory=list)
    version: str = __version__
    wall_clock: float = 0.0

    def deterministic(self) -> dict:
        doc = asdict(self)
        doc.pop("wall_clock")
        doc.pop("version")
        doc.pop("artifacts")
        return doc


class Run:
    """Output directory plus the bookkeeping shared by all commands."""

    def __init__(self, command: str, cfg: ExperimentConfig):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.dir = Path(cfg.output_dir) / f"{command}-{self.hash[:8]}-seed{cfg.seed}"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.record = RunRecord(command, cfg.snapshot(), self.hash, cfg.seed)

    @property
    def stamp(self) -> dict:
        return {"config_hash": self.hash, "seed": self.cfg.seed}

    def path(self, name: str) -> Path:
        self.record.artifacts.append(name)
        return self.dir / name

    def write_json(self, name: str, doc: dict):
        self.path(name).write_text(json.dumps({**self.stamp, **doc}, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name: str, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(f"# config_hash={self.hash} seed={self.cfg.seed}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])

    def finish(self, started: float) -> RunRecord:
        rec = self.record
        rec.wall_clock = time.perf_counter() - started
        self.write_json("verdicts.json", rec.deterministic())
        self.path("record.json").write_text(json.dumps(asdict(rec), indent=2, sort_keys=True) + "\n")
        return rec


def _fmt(x):
    if isinstance(x, float):
        return repr(x)
    return x


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("LAB_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    """Ordered map, fanned out over LAB_THREADS workers."""
    items = list(items)
    n = min(_threads(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _coefficients(cfg: ExperimentConfig) -> CoefficientField:
    spec = cfg.coefficients
    if spec.family == "file":
        return read_coefficients(spec.path)
    params = dict(spec.params)
    if spec.family == "random":
        params.setdefault("seed", cfg.seed)
    return make_coefficients(spec.family, cfg.grid.build(), spec.m, **params)


def _exponents(cfg: ExperimentConfig, pint) -> list[tuple[float, bool]]:
    """(p, inside) pairs; auto-interval adds one point just outside each finite end."""
    if cfg.p != AUTO_INTERVAL:
        return [(p, p in pint) for p in cfg.p]
    out = [(pint.p_minus, True), (2.0, True)]
    below = pint.p_minus * (1 - OUTSIDE_STEP)
    if below > 1:
        out.insert(0, (below, False))
    if pint.p_plus is not None:
        out += [(pint.p_plus, True), (pint.p_plus * (1 + OUTSIDE_STEP), False)]
    return out


def _analysis(run: Run, c: CoefficientField):
    consts = ellipticity_constants(c)
    pint = admissible_p_interval(consts)
    run.record.constants = {"mu": consts.mu, "M": consts.M, "ratio": consts.ratio}
    run.record.intervals = {"contractive": pint.to_dict(),
                            "comparison": compare_intervals(pint, c.dim)}
    return consts, pint


# -- commands ----------------------------------------------------------------

def run_certify(cfg: ExperimentConfig) -> RunRecord:
    started = time.perf_counter()
    run = Run("certify", cfg)
    c = _coefficients(cfg)
    _, pint = _analysis(run, c)
    a = assemble_form(c)
    points = _exponents(cfg, pint)

    def work(item):
        p, _ = item
        return certify_contractivity(c, p, cfg.samples.n_samples, cfg.seed, cfg.stepper,
                                     cfg.kappa, cfg.tol_report, form=a)

    verdicts = _map(work, points)
    rows = []
    for (p, inside), v in zip(points, verdicts):
        d = v.to_dict()
        d["inside_interval"] = inside
        run.record.verdicts[repr(p)] = d
        rows.append([p, inside, v.dissipative, v.contractive, v.worst_gap, v.worst_ratio])
        # outside points are exploratory: the interval is only sufficient
        if inside and not v.passed:
            run.record.passed = False
    run.write_csv("certify.csv", ["p", "inside_interval", "dissipative", "contractive",
                                  "worst_gap", "worst_ratio"], rows)
    return run.finish(started)


def run_interval(cfg: ExperimentConfig) -> RunRecord:
    started = time.perf_counter()
    run = Run("interval", cfg)
    if cfg.ratio is not None:
        pint = admissible_p_interval(cfg.ratio)
        run.record.intervals = {"contractive": pint.to_dict(),
                                "comparison": compare_intervals(pint, cfg.grid.d)}
    else:
        _analysis(run, _coefficients(cfg))
    run.write_json("interval.json", {"intervals": run.record.intervals,
                                     "constants": run.record.constants})
    return run.finish(started)


def run_project(cfg: ExperimentConfig) -> RunRecord:
    started = time.perf_counter()
    if cfg.field is None:
        raise LabError("project needs 'field' in the config")
    if cfg.p == AUTO_INTERVAL or len(cfg.p) != 1:
        raise LabError("project needs exactly one exponent p")
    run = Run("project", cfg)
    src = Path(cfg.field)
    p = cfg.p[0]
    f = read_field(src)
    result = project_onto_lp_ball(f, p, tol=cfg.tol)
    out = run.path("projected" + src.suffix)
    if not result.active:
        shutil.copyfile(src, out)  # already in the ball: byte-identical copy
    else:
        write_field(result.projected, out)
    diag = result.diagnostics()
    diag["variational_residual"] = variational_residual(
        f, result, p, cfg.samples.projection_samples, seed=cfg.seed)
    diag["p"] = p
    run.record.verdicts["projection"] = diag
    run.record.passed = bool(result.outer_residual <= max(cfg.tol, 1e-12) * 10)
    run.write_json("projection.json", diag)
    return run.finish(started)


def run_evolve(cfg: ExperimentConfig) -> RunRecord:
    started = time.perf_counter()
    run = Run("evolve", cfg)
    c = _coefficients(cfg)
    _, pint = _analysis(run, c)
    if cfg.field is not None:
        u0 = read_field(cfg.field)
    else:
        u0 = band_limited_probe(c.grid.lengths, c.m, cfg.seed, 0).sample(c.grid)
    ps = [p for p, _ in _exponents(cfg, pint)]
    report = evolve_and_measure(assemble_form(c), u0, ps, cfg.stepper, cfg.tol_report)
    run.write_csv("trajectory.csv", ["time"] + [f"ratio_p={p!r}" for p in ps], report.rows())
    for p in ps:
        inside = p in pint
        run.record.verdicts[repr(p)] = {
            "worst_ratio": report.worst[p], "flagged": p in report.flagged, "inside_interval": inside,
        }
        if inside and p in report.flagged:
            run.record.passed = False
    return run.finish(started)


def run_search(cfg: ExperimentConfig) -> RunRecord:
    started = time.perf_counter()
    run = Run("search", cfg)
    c = _coefficients(cfg)
    _, pint = _analysis(run, c)
    a = assemble_form(c)
    points = _exponents(cfg, pint)
    results = _map(lambda item: search_counterexample(c, item[0], cfg.samples.budget, cfg.seed, form=a),
                   points)
    for (p, inside), res in zip(points, results):
        doc = res.to_dict()
        doc["inside_interval"] = inside
        doc["violation_found"] = res.best_gap < 0
        if res.witness is not None and res.best_gap < 0:
            name = f"witness_p{p:.6g}.json"
            write_field(res.witness, run.path(name))
            doc["witness"] = name
        run.record.verdicts[repr(p)] = doc
    run.record.passed = True  # exploratory
    return run.finish(started)


CALCULUS_HS = (1 / 64, 1 / 128, 1 / 256)
ORDER_TOL = 0.3


def calculus_suite(seed: int = 0):
    """(check name, residual function, probe, target order)."""
    return [
        ("chain_linear_alpha2", calc.chain_rule_residual, calc.linear_probe(2.0, 0.5, alpha=2.0), 2.0),
        ("chain_random_m3", calc.chain_rule_residual, calc.random_probe(3, seed=seed, alpha=1.5), 2.0),
        ("chain_gaussian_truncated", calc.chain_rule_residual, calc.gaussian_probe(alpha=1.0, M=0.6), 2.0),
        ("chain_random_2d_truncated", calc.chain_rule_residual,
         calc.random_probe(2, d=2, seed=seed, alpha=2.0, M=2.0), 2.0),
        ("kink_gaussian", calc.kink_residual, calc.gaussian_probe(alpha=1.0, M=0.6), 1.0),
        ("norm_random_m3", calc.norm_gradient_residual, calc.random_probe(3, seed=seed), 2.0),
        ("norm_gaussian", calc.norm_gradient_residual, calc.gaussian_probe(), 2.0),
    ]


def truncation_identity_residual(seed: int = 0, n: int = 1000) -> float:
    """Max relative mismatch between truncate_field(alpha=p-2, M=inf) and the test-function gradient."""
    from .criterion import test_function_gradient

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in (2.5, 3.0, 4.0, 7.0):
        val = rng.standard_normal((n, 3)) + 1j * rng.standard_normal((n, 3))
        grad = rng.standard_normal((n, 2, 3)) + 1j * rng.standard_normal((n, 2, 3))
        _, dv = calc.truncate_field(val, grad, p - 2, math.inf)
        ref = test_function_gradient(val, grad, p)
        scale = np.abs(ref).max(axis=(1, 2)) + 1e-300
        worst = max(worst, float((np.abs(dv - ref).max(axis=(1, 2)) / scale).max()))
    return worst


def run_verify_calculus(cfg: ExperimentConfig) -> RunRecord:
    started = time.perf_counter()
    run = Run("verify-calculus", cfg)
    rows, checks = [], {}
    for name, fn, probe, target in calculus_suite(cfg.seed):
        res = [fn(probe, h) for h in CALCULUS_HS]
        orders = calc.measured_orders(res, CALCULUS_HS)
        ok = all(abs(o - target) <= ORDER_TOL for o in orders)
        for i, h in enumerate(CALCULUS_HS):
            rows.append([name, int(round(1 / h)), res[i], orders[i - 1] if i else ""])
        checks[name] = {"residuals": res, "orders": orders, "target": target, "passed": ok}

    ident = truncation_identity_residual(cfg.seed)
    checks["truncation_identity"] = {"residual": ident, "passed": ident <= 1e-14}
    circle = calc.norm_gradient_residual(calc.circle_probe(3.0), CALCULUS_HS[-1])
    checks["norm_circle"] = {"residual": circle, "passed": circle <= 1e-12}
    rows += [["truncation_identity", "", ident, ""], ["norm_circle", 256, circle, ""]]

    for p in (1.3, 2.0, 4.0):
        rep = calc.strict_convexity_probe(p, 2, cfg.samples.convexity_trials, cfg.seed)
        ok = rep.strictly_convex and rep.trend_monotone
        checks[f"strict_convexity_p{p:g}"] = {"worst_slack": rep.worst_slack,
                                              "trend_monotone": rep.trend_monotone, "passed": ok}
        rows.append([f"strict_convexity_p{p:g}", "", rep.worst_slack, ""])
    young = calc.young_survey(cfg.samples.young_draws, cfg.seed)
    checks["young"] = {**asdict(young),
                       "passed": young.negatives == 0 and young.flag_mismatches == 0 and young.strict_zero == 0}
    rows.append(["young_min_slack", "", young.min_slack, ""])

    run.write_csv("calculus.csv", ["check", "grid", "residual", "order"], rows)
    run.record.verdicts = checks
    run.record.passed = all(v["passed"] for v in checks.values())
    return run.finish(started)


RUNNERS = {
    "certify": run_certify,
    "interval": run_interval,
    "project": run_project,
    "evolve": run_evolve,
    "search": run_search,
    "verify-calculus": run_verify_calculus,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="lab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default=None, help="output root directory")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.out is not None:
            cfg = cfg.with_output(args.out)
        rec = RUNNERS[args.command](cfg)
    except LabError as exc:
        report = {"error": type(exc).__name__, "message": str(exc)}
        for attr in ("diagnostics", "constants"):
            if getattr(exc, attr, None) is not None:
                report[attr] = str(getattr(exc, attr))
        print(json.dumps(report), file=sys.stderr)
        return 2
    status = "PASS" if rec.passed else "FAIL"
    print(f"{args.command}: {status} ({Path(rec.config['output_dir'])}"
          f"/{args.command}-{rec.config_hash[:8]}-seed{rec.seed})")
    return 0 if rec.passed else 1


if __name__ == "__main__":
    sys.exit(main())
