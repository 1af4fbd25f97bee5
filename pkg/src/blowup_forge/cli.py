"""Command-line orchestration: configuration, module pipelines, reports and manifests.

Every subcommand writes its tables as CSV, its reports as JSON and its
plots as SVG (drawn from the CSV files) into ``--out-dir``, followed by
``manifest.json``.  The manifest holds only reproducible content (config
hash, versions, verdicts, file hashes); wall-clock times go to
``timings.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import multiprocessing
import os
import platform
import sys
import time
import traceback
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__
from . import checks as C
from .errors import ForgeError
from .plots import line_plot_from_csv

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class Field:
    kind: type
    default: Any
    check: Callable[[Any], bool]
    rule: str


def _pos(x):
    return x > 0


SCHEMA: Dict[str, Dict[str, Field]] = {
    "global": {
        "T": Field(float, 1e-2, lambda x: 0 < x <= 0.1, "0 < T <= 0.1"),
        "M": Field(float, 1e-2, lambda x: 0 < x <= 1, "0 < M <= 1"),
        "R": Field(float, 100.0, lambda x: x >= 10, "R >= 10"),
        "a": Field(float, 0.5, lambda x: 0 < x < 1, "0 < a < 1"),
        "nu": Field(float, 1.75, _pos, "nu > 0"),
        "alpha": Field(float, 0.25, lambda x: 0 < x < 0.5, "0 < alpha < 1/2"),
        "tau0": Field(float, 0.0, lambda x: x >= 0, "tau0 >= 0 (0 selects -log T)"),
        "seed": Field(int, 0, lambda x: x >= 0, "seed >= 0"),
    },
    "modulation": {
        "panel_nodes": Field(int, 16, lambda x: 4 <= x <= 64, "4 <= panel_nodes <= 64"),
    },
    "spectral": {
        "max_degree": Field(int, 6, lambda x: 0 <= x <= 12, "0 <= max_degree <= 12"),
    },
    "residual": {
        "n_times": Field(int, 20, lambda x: x >= 2, "n_times >= 2"),
        "n_reassembly": Field(int, 1000, lambda x: x >= 1, "n_reassembly >= 1"),
    },
    "inner": {
        "radii": Field(list, [10.0, 20.0, 40.0], lambda x: len(x) >= 1 and all(r > 0 for r in x),
                       "non-empty list of positive radii"),
        "n_sources": Field(int, 5, lambda x: x >= 1, "n_sources >= 1"),
        "cells": Field(int, 800, lambda x: x >= 50, "cells >= 50"),
        "steps": Field(int, 400, lambda x: x >= 50, "steps >= 50"),
        "span_factor": Field(float, 4.0, _pos, "span_factor > 0"),
    },
    "simulate": {
        "mode": Field(str, "rescaled", lambda x: x in ("fixed", "rescaled"), "fixed or rescaled"),
        "amplitude": Field(float, 20.0, _pos, "amplitude > 0"),
        "width": Field(float, 1.0, _pos, "width > 0"),
        "L": Field(float, 16.0, _pos, "L > 0"),
        "n": Field(int, 200, lambda x: x >= 8 and x % 2 == 0, "even n >= 8"),
        "rtol": Field(float, 1e-7, lambda x: 0 < x < 1, "0 < rtol < 1"),
        "threshold": Field(float, 1e8, lambda x: x > 1, "threshold > 1"),
        "halvings": Field(int, 3, lambda x: x >= 1, "halvings >= 1"),
        "t_end": Field(float, math.inf, _pos, "t_end > 0"),
    },
}


class ConfigError(ForgeError, ValueError):
    """Invalid configuration; ``problems`` lists ``(field path, message)``."""

    def __init__(self, problems: List[Tuple[str, str]]):
        self.problems = problems
        super().__init__("; ".join(f"{p}: {m}" for p, m in problems))


def _coerce(f: Field, value):
    if f.kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if f.kind is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if f.kind is list and isinstance(value, list):
        return [float(v) for v in value]
    if f.kind is str and isinstance(value, str):
        return value
    raise TypeError(f"expected {f.kind.__name__}")


def default_config() -> Dict[str, Dict[str, Any]]:
    return {s: {k: f.default for k, f in fields.items()} for s, fields in SCHEMA.items()}


def load_config(path: Optional[str], overrides: Dict[str, Any] = None) -> Dict[str, Dict[str, Any]]:
    """Parse, merge and validate a configuration.

    A supplied file must contain the ``[global]`` table, and every table it
    contains must be complete.  ``overrides`` maps ``section.key`` to values
    that replace file or default entries.  All problems are collected
    before raising :class:`ConfigError`.
    """
    cfg = default_config()
    problems: List[Tuple[str, str]] = []
    if path is not None:
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError([("config", f"cannot read {path}: {exc.strerror}")])
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([("config", f"not valid TOML: {exc}")])
        if "global" not in raw:
            problems.append(("global", "missing table"))
        for section, table in raw.items():
            if section not in SCHEMA:
                problems.append((section, "unknown table"))
                continue
            if not isinstance(table, dict):
                problems.append((section, "must be a table"))
                continue
            for key in table:
                if key not in SCHEMA[section]:
                    problems.append((f"{section}.{key}", "unknown field"))
            for key, f in SCHEMA[section].items():
                if key not in table:
                    problems.append((f"{section}.{key}", "missing field"))
                    continue
                try:
                    cfg[section][key] = _coerce(f, table[key])
                except (TypeError, ValueError) as exc:
                    problems.append((f"{section}.{key}", str(exc)))
        if "global" not in raw:
            for key in SCHEMA["global"]:
                problems.append((f"global.{key}", "missing field"))
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".")
        cfg[section][key] = value
    for section, fields in SCHEMA.items():
        for key, f in fields.items():
            path_ = f"{section}.{key}"
            if any(p == path_ for p, _ in problems):
                continue
            try:
                ok = f.check(cfg[section][key])
            except TypeError:
                ok = False
            if not ok:
                problems.append((path_, f"out of range, need {f.rule}"))
    if problems:
        raise ConfigError(problems)
    return cfg


def config_hash(cfg) -> str:
    text = json.dumps(cfg, sort_keys=True, default=repr)
    return hashlib.sha256(text.encode()).hexdigest()


def context_from(cfg) -> C.Context:
    from .ansatz import AnsatzFields

    g = cfg["global"]
    fields = AnsatzFields(M=g["M"], T=g["T"], R=g["R"])
    return C.Context(fields=fields, a=g["a"], seed=g["seed"], alpha=g["alpha"],
                     tau0=g["tau0"] if g["tau0"] > 0 else None)


# ---------------------------------------------------------------------------
# output helpers


def _num(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, dict):
        return {str(k): _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_num(x) for x in v]
    return v


class Emitter:
    """Writes artifacts into one directory and indexes them."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.files: List[str] = []
        self.volatile: List[str] = []

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def _add(self, name):
        if name not in self.files:
            self.files.append(name)

    def json(self, name, obj, volatile=False):
        with open(self.path(name), "w") as fh:
            json.dump(_num(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        (self.volatile if volatile else self.files).append(name)

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
        self._add(name)

    def plot(self, name, source, x, ys, title, logx=False, logy=False):
        line_plot_from_csv(self.path(source), self.path(name), x, ys, title, logx, logy)
        self._add(name)

    def digest(self, name):
        with open(self.path(name), "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()


def write_manifest(em: Emitter, command: str, cfg, verdicts: Dict[str, bool], timings: Dict[str, float]):
    """Write ``timings.json`` then the deterministic ``manifest.json``."""
    em.json("timings.json", {k: round(v, 3) for k, v in timings.items()}, volatile=True)
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "config": cfg,
        "versions": {"blowup_forge": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "checks": verdicts,
        "passed": all(verdicts.values()),
        "files": {name: em.digest(name) for name in sorted(em.files)},
        "volatile_files": sorted(em.volatile),
    }
    em.json("manifest.json", manifest, volatile=True)
    return manifest


# ---------------------------------------------------------------------------
# subcommands


def cmd_constants(cfg, em: Emitter, workers: int):
    from .bubble_core import bubble_radial, dilation_radial, kernel_residual, solve_negative_mode
    from .quad import mass_constants

    nm = solve_negative_mode()
    mc = mass_constants()
    res = {f"W{j}": kernel_residual(j).sup_residual for j in range(1, 7)}
    c2 = C.criterion_2(None)
    c3 = C.criterion_3(None)
    em.json("constants.json", {"mass": mc.to_dict(), "lambda0": nm.eigenvalue,
                               "kernel_residuals": res, "tail_slope": c3.metrics["tail_slope"],
                               "I_p_oracle": C.beta_oracle_Ip()})
    r = np.linspace(0.0, 30.0, 301)
    em.csv("profiles.csv", ["r", "U", "W6", "W0"],
           zip(r, bubble_radial(r), dilation_radial(r), nm.profile(r)))
    em.plot("profiles.svg", "profiles.csv", "r", ["U", "W6", "W0"], "radial profiles")
    ok = max(res.values()) <= 1e-6
    return {"kernel_annihilation": ok, "constant_identities": c2.passed, "negative_mode": c3.passed}


def _trajectory_rows(traj):
    sig = traj.grid.sigma
    order = np.argsort(-sig, kind="stable")
    for k in order:
        yield (sig[k], traj.lam[0, k], traj.lam[1, k], traj.lam0[0, k], traj.lam0[1, k],
               traj.lam1[0, k], *traj.xi[0, k], *traj.xi[1, k])


def _trajectory_header():
    return (["sigma", "lambda1", "lambda2", "lambda1_0", "lambda2_0", "lambda1_1"]
            + [f"xi1_{k}" for k in range(1, 6)] + [f"xi2_{k}" for k in range(1, 6)])


def cmd_modulation(cfg, em: Emitter, workers: int, ctx=None):
    from . import modulation as M

    ctx = ctx or context_from(cfg)
    grid = M.PanelGrid(ctx.fields.T, n=cfg["modulation"]["panel_nodes"])
    ctx._traj = M.solve_trajectory(ctx.fields, grid)
    traj = ctx.traj
    c4 = C.criterion_4(ctx)
    c6 = C.criterion_6(ctx)
    em.csv("trajectory.csv", _trajectory_header(), _trajectory_rows(traj))
    em.json("rates.json", {"slope_1": c4.metrics["slope_1"], "slope_2": c4.metrics["slope_2"],
                           "proxy_slope": c4.metrics["proxy_slope"], "kappa_1": traj.kappa(1),
                           "kappa_2": traj.kappa(2), "contraction": c6.metrics["contraction"],
                           "max_correction_ratio": c6.metrics["max_ratio"],
                           "ode_residual": c4.metrics["ode_residual"]})
    em.plot("trajectory.svg", "trajectory.csv", "sigma", ["lambda1", "lambda2"], "scales against T - t",
            logx=True, logy=True)
    return {"leading_order_laws": c4.passed, "fixed_point": c6.passed}


def cmd_spectral(cfg, em: Emitter, workers: int):
    from . import selfsim as SS

    ctx = context_from(cfg)
    c8 = C.criterion_8(ctx)
    z = SS.test_grid(seed=ctx.seed)
    deg = cfg["spectral"]["max_degree"]
    rows = [(*a, sum(a) / 2.0, SS.eigen_residual(a, z)) for a in SS.multi_indices(deg)]
    em.csv("modes.csv", [f"alpha{k}" for k in range(1, 6)] + ["eigenvalue", "residual"], rows)
    rng = np.random.default_rng(ctx.seed + 1)
    f0 = SS.SpectralField({a: rng.normal() for a in SS.multi_indices(8, 5)})
    log = SS.evolve_complement(f0, np.linspace(0.0, 4.0, 9))
    em.csv("complement.csv", ["tau", "norm", "envelope"], zip(log.taus, log.norms, log.envelope))
    em.json("spectral.json", {**c8.metrics, "parts": c8.parts})
    em.plot("complement.svg", "complement.csv", "tau", ["norm", "envelope"], "complement decay", logy=True)
    return {"spectral_suite": c8.passed}


def cmd_residual(cfg, em: Emitter, workers: int, ctx=None):
    from . import ansatz as A

    ctx = ctx or context_from(cfg)
    traj, fields = ctx.traj, ctx.fields
    rows = []
    worst = 0.0
    for s in np.geomspace(1e-8 * fields.T, fields.T / 2, cfg["residual"]["n_times"]):
        ratio, _ = A.orthogonality_matrix(None, traj, fields, sigma=s)
        worst = max(worst, float(np.max(np.abs(ratio))))
        for i in range(ratio.shape[0]):
            for j in range(ratio.shape[1]):
                rows.append((s, i + 1, j + 1, ratio[i, j]))
    em.csv("orthogonality.csv", ["sigma", "i", "j", "ratio"], rows)
    c9 = C.criterion_9(ctx)
    taus = None if ctx.tau0 is None else ctx.tau0 + np.arange(0.0, 5.01, 0.5)
    fit = A.rho_norm_G(traj, fields, taus=taus)
    em.csv("rho_norm.csv", ["tau", "norm"], zip(fit.taus, fit.norms))
    rep = A.majorant_check(traj, fields, A.MajorantSchedule(a=ctx.a))
    em.json("majorant.json", rep.to_dict())
    ra = A.reassembly_check(traj, fields, n=cfg["residual"]["n_reassembly"], seed=ctx.seed)
    em.json("reassembly.json", {"n": ra.n, "max_ratio": ra.max_ratio, "max_abs": ra.max_abs,
                                "passed": ra.passed})
    em.json("outer_decay.json", {"exponent": fit.exponent, "fit_residual": fit.residual,
                                 "orthogonality_max": worst})
    em.plot("rho_norm.svg", "rho_norm.csv", "tau", ["norm"], "weighted norm of the outer source", logy=True)
    return {"orthogonality": worst <= 1e-6, "outer_decay": c9.passed, "reassembly": ra.passed}


def cmd_inner(cfg, em: Emitter, workers: int, ctx=None):
    from . import inner_solver as I

    ctx = ctx or context_from(cfg)
    sec = cfg["inner"]
    c3 = I.c3_scan(radii=tuple(sec["radii"]), a=ctx.a, n_sources=sec["n_sources"], seed=ctx.seed,
                   span_factor=sec["span_factor"], n=sec["cells"], steps=sec["steps"])
    em.csv("c3.csv", ["R", "solution", "coefficient"], zip(c3.radii, c3.solution, c3.coefficient))
    measured, predicted = I.unstable_growth()
    env = I.envelope_check(ctx.traj, ctx.fields, nu=cfg["global"]["nu"], a=ctx.a)
    em.csv("envelope.csv", ["t0", "mode0", "mode1", "mode0_refined", "mode1_refined"],
           [(t, *c, *f) for t, c, f in zip(env.t0, env.constants, env.refined)])
    growth_err = abs(measured / predicted - 1.0)
    em.json("inner.json", {"c3_solution_spread": c3.solution_spread,
                           "c3_coefficient_spread": c3.coefficient_spread,
                           "growth_measured": measured, "growth_predicted": predicted,
                           "growth_error": growth_err, "envelope_constant": env.constant,
                           "envelope_change": env.max_change})
    em.plot("c3.svg", "c3.csv", "R", ["solution", "coefficient"], "empirical inner constants", logx=True)
    return {"c3_solution": c3.solution_spread <= 0.2, "c3_coefficient": c3.coefficient_spread <= 0.2,
            "unstable_growth": growth_err <= 0.1, "envelope": env.max_change <= 0.2}


def cmd_simulate(cfg, em: Emitter, workers: int):
    from . import radial_sim as S

    sec = cfg["simulate"]
    amp, width = sec["amplitude"], sec["width"]
    controls = S.SimControls(mode=sec["mode"], L=sec["L"], n=sec["n"], rtol=sec["rtol"],
                             threshold=sec["threshold"], halvings=sec["halvings"], t_end=sec["t_end"])
    hist = S.integrate(lambda r: amp * np.exp(-r * r / (2.0 * width ** 2)), controls)
    em.csv("telemetry.csv", ["t", "sup", "gauge", "n"], hist.rows())
    report = {"status": hist.status, "steps": int(hist.t.size), "rejected": hist.rejected,
              "min_value": hist.min_value}
    verdict = {"simulation": hist.status != "inconclusive"}
    if hist.status == "blowup":
        try:
            fit = S.detect_blowup_rate(hist)
            report.update({"T": fit.T, "beta": fit.beta, "c": fit.c, "c_tail": fit.c_tail,
                           "errors": list(fit.errors), "accepted": fit.accepted, "reason": fit.reason,
                           "beta_reference": S.BETA_ODE, "c_reference": S.KAPPA_ODE})
            verdict["rate_fit"] = fit.accepted
        except ForgeError as exc:
            report["fit_error"] = str(exc)
            verdict["rate_fit"] = False
    em.json("rate_fit.json", report)
    em.plot("telemetry.svg", "telemetry.csv", "t", ["sup"], "sup-norm history", logy=True)
    return verdict


_CTX: Optional[C.Context] = None


def _run_criterion(k: int):
    t0 = time.perf_counter()
    try:
        res = C.CRITERIA[k](_CTX).to_dict()
    except Exception as exc:  # a failing check still gets a verdict
        res = {"criterion": k, "title": C.TITLES[k], "passed": False, "parts": {},
               "metrics": {}, "error": f"{type(exc).__name__}: {exc}"}
    return k, res, time.perf_counter() - t0


def run_criteria(ctx: C.Context, selected: Sequence[int], workers: int = 1):
    """Evaluate criteria, in parallel when ``workers > 1``; results in criterion order."""
    global _CTX
    _CTX = ctx
    timings = {}
    if any(k in C.NEEDS_TRAJECTORY for k in selected):
        t0 = time.perf_counter()
        ctx.traj
        timings["trajectory"] = time.perf_counter() - t0
    if workers > 1 and len(selected) > 1:
        with multiprocessing.get_context("fork").Pool(workers) as pool:
            out = pool.map(_run_criterion, selected, chunksize=1)
    else:
        out = [_run_criterion(k) for k in selected]
    results = {}
    for k, res, dt in sorted(out, key=lambda x: x[0]):
        results[k] = res
        timings[f"criterion_{k}"] = dt
    return results, timings


def cmd_verify_all(cfg, em: Emitter, workers: int, criteria: Sequence[int] = None):
    ctx = context_from(cfg)
    selected = sorted(criteria) if criteria else sorted(C.CRITERIA)
    results, timings = run_criteria(ctx, selected, workers)
    passed = all(r["passed"] for r in results.values())
    em.json("verdict.json", {"passed": passed, "criteria": [results[k] for k in selected]})
    em.csv("criteria.csv", ["criterion", "title", "passed"],
           [(k, results[k]["title"], int(results[k]["passed"])) for k in selected])
    return {f"criterion_{k}": results[k]["passed"] for k in selected}, timings


COMMANDS = {
    "constants": cmd_constants,
    "modulation": cmd_modulation,
    "spectral": cmd_spectral,
    "residual": cmd_residual,
    "inner": cmd_inner,
    "simulate": cmd_simulate,
}

_SECTIONS = {"constants": (), "modulation": ("modulation",), "spectral": ("spectral",),
             "residual": ("residual",), "inner": ("inner",), "simulate": ("simulate",),
             "verify-all": ()}


# ---------------------------------------------------------------------------
# argument parsing


def _flag_type(f: Field):
    if f.kind is list:
        return lambda s: [float(x) for x in s.split(",")]
    return f.kind


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blowup-forge", description="Two-bubble blow-up toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, sections in _SECTIONS.items():
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="TOML configuration file")
        p.add_argument("--out-dir", default=os.path.join("runs", name), help="output directory")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--seed", type=int, default=None, help="seed for randomized sampling")
        for section in ("global",) + sections:
            for key, f in SCHEMA[section].items():
                if key == "seed":
                    continue
                p.add_argument(f"--{key}", dest=f"{section}.{key}", type=_flag_type(f), default=None,
                               help=f"{section}.{key} ({f.rule})")
        if name == "verify-all":
            p.add_argument("--criteria", type=lambda s: [int(x) for x in s.split(",")], default=None,
                           help="comma-separated subset of criteria")
    return parser


def main(argv: Sequence[str] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if "." in k and v is not None}
    if args.seed is not None:
        overrides["global.seed"] = args.seed
    try:
        if args.workers < 1:
            raise ConfigError([("workers", "must be at least 1")])
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        for path, msg in exc.problems:
            print(f"config error: {path}: {msg}", file=sys.stderr)
        return 2
    em = Emitter(args.out_dir)
    t0 = time.perf_counter()
    timings: Dict[str, float] = {}
    try:
        if args.command == "verify-all":
            verdicts, timings = cmd_verify_all(cfg, em, args.workers, args.criteria)
        else:
            verdicts = COMMANDS[args.command](cfg, em, args.workers)
    except Exception as exc:
        traceback.print_exc()
        verdicts = {"pipeline": False}
        em.json("error.json", {"error": f"{type(exc).__name__}: {exc}"})
    timings["total"] = time.perf_counter() - t0
    manifest = write_manifest(em, args.command, cfg, verdicts, timings)
    for k, v in verdicts.items():
        print(f"{'PASS' if v else 'FAIL'} {k}")
    return 0 if manifest["passed"] else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
