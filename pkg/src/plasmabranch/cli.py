"""Command line interface.

    plasmabranch solve     --domain unit-disk --p 2 --lambda 5
    plasmabranch branch    --domain unit-disk --p 2 --out results/
    plasmabranch spectrum  --domain unit-square --p 1 --lambda 3 --k 6
    plasmabranch sobolev   --domain unit-disk --t 4
    plasmabranch verify    --out results/

Settings come from built-in defaults, then an optional JSON file
(``--config``), then explicit flags.  A config file may hold a ``runs`` list;
each entry overrides the shared settings, writes into its own subdirectory
of ``out`` and the runs execute in parallel processes.  Exit codes: 0
success, 1 bad configuration, 2 solver failure, 3 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from . import continuation as cont
from . import spectral, verification
from .domain import build_domain
from .errors import DomainError, SolverError
from .observables import energy
from .state import newton_solve, solve_small_lambda, to_free_boundary

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 1, 2, 3
MODES = ("solve", "branch", "spectrum", "sobolev", "verify")
COLUMNS = ["s", "lambda", "alpha", "E", "sigma1", "nu1", "dalpha_dlambda", "dE_dlambda", "fold", "I", "gamma"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    mode: str = "solve"
    domain: str = "unit-disk"
    resolution: object = None
    p: float = 1.0
    lam: float = 0.0
    lambda_max: float | None = None
    alpha_tol: float = cont.ALPHA_TOL
    sigma_fraction: float = cont.SIGMA_FRACTION
    fold_limit: int = cont.FOLD_LIMIT
    modes: int = 8
    k: int = 3
    t: float | None = None
    out: str = "."
    seed: int = 0
    plot: bool = False
    criteria: list | None = None
    disk_res: object = (512, 64)
    square_res: int = 128
    ball_res: int = 2048

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"field 'mode': expected one of {MODES}, got {self.mode!r}")
        kind = self.domain
        ball = re.match(r"^radial-ball\((\d+)\)$", kind)
        if kind not in ("unit-square", "unit-disk") and not ball:
            raise ConfigError(f"field 'domain': unsupported kind {kind!r}")
        _number(self, "p", lo=1.0)
        if ball:
            n = int(ball.group(1))
            if n < 2:
                raise ConfigError("field 'domain': ball dimension must be >= 2")
            if n >= 3 and self.p >= n / (n - 2):
                raise ConfigError(f"field 'p': must be < {n / (n - 2):g} for radial-ball({n})")
        _number(self, "lam", lo=0.0)
        if self.lambda_max is not None:
            _number(self, "lambda_max", lo=0.0)
        _number(self, "alpha_tol", lo=0.0, strict=True)
        _number(self, "sigma_fraction", lo=0.0, strict=True)
        for name in ("fold_limit", "modes", "k", "seed"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < (0 if name == "seed" else 1):
                raise ConfigError(f"field '{name}': expected a positive integer, got {v!r}")
        if self.t is not None:
            _number(self, "t", lo=2.0)
        if self.criteria is not None:
            bad = [c for c in self.criteria if c not in verification.CRITERIA]
            if bad:
                raise ConfigError(f"field 'criteria': unknown ids {bad}")
        return self


def _number(cfg, name, lo=None, strict=False):
    v = getattr(cfg, name)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"field '{name}': expected a finite number, got {v!r}")
    if lo is not None and (v < lo or (strict and v == lo)):
        raise ConfigError(f"field '{name}': must be {'>' if strict else '>='} {lo:g}, got {v!r}")


FIELD_ALIASES = {"lambda": "lam", "res": "resolution"}


def _settings(data, where=""):
    known = {f.name for f in fields(RunConfig)}
    out = {}
    for key, value in data.items():
        name = FIELD_ALIASES.get(key, key.replace("-", "_"))
        if name not in known:
            raise ConfigError(f"field '{where}{key}': unknown setting")
        out[name] = value
    return out


def load_config(path):
    """Shared settings and the (possibly empty) list of per-run overrides."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    runs = data.pop("runs", [])
    if not isinstance(runs, list) or not all(isinstance(r, dict) for r in runs):
        raise ConfigError("field 'runs': expected a list of objects")
    return _settings(data), [_settings(r, f"runs[{i}].") for i, r in enumerate(runs)]


def build_parser():
    parser = argparse.ArgumentParser(prog="plasmabranch", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        sp = sub.add_parser(mode)
        sp.add_argument("--config", help="JSON file with settings (flags override it)")
        sp.add_argument("--domain", help="unit-square | unit-disk | radial-ball(N)")
        sp.add_argument("--res", help="grid size: N, or NR,NTHETA for the disk")
        sp.add_argument("--p", type=float)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--lambda-max", type=float)
        sp.add_argument("--alpha-tol", type=float)
        sp.add_argument("--sigma-fraction", type=float)
        sp.add_argument("--fold-limit", type=int)
        sp.add_argument("--modes", type=int, help="azimuthal cutoff for disk eigensolves")
        sp.add_argument("--k", type=int, help="number of eigenpairs")
        sp.add_argument("--t", type=float, help="Sobolev exponent (default 2p)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--plot", action="store_true", default=None, help="also write a gnuplot script")
        sp.add_argument("--criteria", help="comma separated criterion ids (verify)")
        sp.add_argument("--jobs", type=int, help="parallel processes for batch configs")
        sp.add_argument("-v", "--verbose", action="store_true")
    return parser


def _parse_res(text):
    if text is None or isinstance(text, (int, list, tuple)):
        return text
    parts = [int(x) for x in str(text).split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def make_configs(args):
    """One RunConfig per batch entry (a single one without ``runs``)."""
    shared, runs = load_config(args.config) if args.config else ({}, [])
    if not runs:
        return [make_config(args, shared)]
    cfgs = []
    for i, run in enumerate(runs):
        cfg = make_config(args, {**shared, **run})
        tag = re.sub(r"[^A-Za-z0-9.]+", "-", f"{cfg.domain}-p{cfg.p:g}").strip("-")
        cfg.out = str(Path(cfg.out) / f"run{i:02d}-{tag}")
        cfgs.append(cfg)
    return cfgs


def make_config(args, file_values=None):
    values = dict(file_values or {})
    for f in fields(RunConfig):
        v = getattr(args, "res" if f.name == "resolution" else f.name, None)
        if v is not None:
            values[f.name] = v
    values["mode"] = args.mode
    if "criteria" in values and isinstance(values["criteria"], str):
        try:
            values["criteria"] = [int(c) for c in values["criteria"].split(",") if c]
        except ValueError:
            raise ConfigError(f"field 'criteria': not a list of integers: {values['criteria']!r}") from None
    try:
        values["resolution"] = _parse_res(values.get("resolution"))
    except ValueError:
        raise ConfigError(f"field 'resolution': cannot parse {values.get('resolution')!r}") from None
    for key in ("p", "lam", "lambda_max", "alpha_tol", "sigma_fraction", "t"):
        if isinstance(values.get(key), int) and not isinstance(values.get(key), bool):
            values[key] = float(values[key])
    cfg = RunConfig(**values)
    if cfg.mode == "verify" and cfg.resolution is not None:
        attr = {"unit-disk": "disk_res", "unit-square": "square_res"}.get(cfg.domain, "ball_res")
        setattr(cfg, attr, cfg.resolution)
    return cfg.validate()


# ------------------------------------------------------------------ output


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if x is None:
        return "nan"
    x = float(x)
    return repr(x) if not math.isfinite(x) else f"{x:.17g}"


def free_boundary_columns(sol):
    try:
        fb = to_free_boundary(sol)
        return fb.I, fb.gamma
    except ValueError:
        return np.nan, np.nan


def point_row(pt):
    I, gamma = free_boundary_columns(pt.solution)
    return [pt.s, pt.lam, pt.alpha, pt.E, pt.sigma1, pt.nu1, pt.dalpha_dlambda, pt.dE_dlambda, pt.fold, I, gamma]


def endpoint_row(branch):
    ep = branch.endpoint
    p = branch.p
    I = ep.lam ** (p / (p - 1)) if p > 1 else np.nan
    gamma = 0.0 if p > 1 else np.nan
    return [ep.s, ep.lam, 0.0, ep.E, np.nan, np.nan, np.nan, np.nan, False, I, gamma]


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])


def write_json(path, data):
    Path(path).write_text(json.dumps(verification._jsonable(data), indent=2, sort_keys=True) + "\n")


GNUPLOT = """# gnuplot script for {csv}
set datafile separator ','
set key autotitle columnhead
set xlabel 'lambda'
set multiplot layout 2,2
plot '{csv}' using 2:3 with linespoints title 'alpha'
plot '{csv}' using 2:4 with linespoints title 'E'
plot '{csv}' using 2:5 with linespoints title 'sigma1', '' using 2:6 with linespoints title 'nu1'
plot '{csv}' using 2:11 with linespoints title 'gamma'
unset multiplot
"""


def write_plot(out, stem):
    (out / f"{stem}.gp").write_text(GNUPLOT.format(csv=f"{stem}.csv"))


def sidecar(cfg, domain, extra):
    data = {
        "version": __version__,
        "mode": cfg.mode,
        "domain": domain.kind if domain is not None else cfg.domain,
        "resolution": list(np.atleast_1d(domain.resolution)) if domain is not None else None,
        "p": cfg.p,
        "seed": cfg.seed,
        "config": asdict(cfg),
        "tolerances": {"newton_residual": 1e-12, "eigensolver": 1e-12, "alpha_tol": cfg.alpha_tol},
    }
    data.update(extra)
    return data


# ------------------------------------------------------------------ modes


def _domain(cfg):
    res = cfg.resolution if cfg.resolution is not None else None
    try:
        return build_domain(cfg.domain, res)
    except DomainError as exc:
        raise ConfigError(f"field 'resolution': {exc}") from None


def _solve_point(cfg, domain):
    """Branch point at cfg.lam, by continuation from lambda = 0 if a cold Newton start fails."""
    metric = cont._Metric(domain.core)
    try:
        sol = solve_small_lambda(domain, 0.0, cfg.p) if cfg.lam == 0 else newton_solve(domain, cfg.lam, cfg.p)
    except SolverError:
        br = cont.trace_branch(domain, cfg.p, lambda_max=cfg.lam, alpha_tol=cfg.alpha_tol, m_max=cfg.modes)
        if abs(br.points[-1].lam - cfg.lam) > 1e-12 * max(1.0, cfg.lam):
            raise SolverError(f"branch ended ({br.termination}) before lambda = {cfg.lam}")
        sol = br.points[-1].solution
    return sol, metric


def run_solve(cfg, out):
    domain = _domain(cfg)
    sol, metric = _solve_point(cfg, domain)
    E = energy(sol)
    sigma1 = nu1 = np.nan
    if domain.kind in ("unit-square", "unit-disk"):
        spec = spectral.constrained_eigs(domain, sol, k=1, m_max=cfg.modes)
        sigma1, nu1 = spec.sigma1, spec.nu1
    dalpha, eta = cont.tangent(sol)
    dE = cont.energy_slope_forms(sol, eta)[0]
    I, gamma = free_boundary_columns(sol)
    write_csv(out / "solve.csv", COLUMNS, [[0.0, sol.lam, sol.alpha, E.E, sigma1, nu1, dalpha, dE, False, I, gamma]])
    write_json(out / "solve.json", sidecar(cfg, domain, {
        "residual_norm": sol.residual_norm, "mass_error": sol.mass_error, "iterations": sol.iterations,
        "energy": asdict(E),
    }))
    print(f"lambda={sol.lam:.10g} alpha={sol.alpha:.12g} E={E.E:.12g} sigma1={sigma1:.8g}")
    return EXIT_OK


def run_branch(cfg, out):
    domain = _domain(cfg)
    if domain.kind not in ("unit-square", "unit-disk"):
        raise ConfigError("field 'domain': branch tracing needs unit-square or unit-disk")
    br = cont.trace_branch(domain, cfg.p, lambda_max=cfg.lambda_max, alpha_tol=cfg.alpha_tol,
                           sigma_fraction=cfg.sigma_fraction, fold_limit=cfg.fold_limit, m_max=cfg.modes)
    rows = [point_row(pt) for pt in br.points]
    if br.endpoint is not None:
        rows.append(endpoint_row(br))
    write_csv(out / "branch.csv", COLUMNS, rows)
    write_json(out / "branch.json", sidecar(cfg, domain, {
        "termination": br.termination,
        "points": len(br.points),
        "endpoint": asdict(br.endpoint) if br.endpoint else None,
        "folds": br.folds,
        "settings": br.settings,
        "last_row": "alpha -> 0 extrapolation" if br.endpoint else "last computed point",
    }))
    if cfg.plot:
        write_plot(out, "branch")
    last = rows[-1]
    print(f"{len(br.points)} points, termination: {br.termination}; final lambda={last[1]:.10g} E={last[3]:.10g}")
    return EXIT_OK if br.termination in ("lambda_max reached", "alpha <= alpha_tol") else EXIT_SOLVER


def run_spectrum(cfg, out):
    domain = _domain(cfg)
    if domain.kind not in ("unit-square", "unit-disk"):
        raise ConfigError("field 'domain': spectra need unit-square or unit-disk")
    sol, _ = _solve_point(cfg, domain)
    spec = spectral.constrained_eigs(domain, sol, k=cfg.k, m_max=cfg.modes)
    rows = [[j + 1, s, spec.modes[j], spec.means[j]] for j, s in enumerate(spec.sigma)]
    write_csv(out / "spectrum.csv", ["j", "sigma", "mode", "mean"], rows)
    write_json(out / "spectrum.json", sidecar(cfg, domain, {
        "lambda": sol.lam, "alpha": sol.alpha, "nu1": spec.nu1, "tau": spec.tau, "m": spec.m,
        "eigensolver_tol": spec.tol,
    }))
    print("sigma:", " ".join(f"{s:.10g}" for s in spec.sigma), f"nu1={spec.nu1:.10g}")
    return EXIT_OK


def run_sobolev(cfg, out):
    domain = _domain(cfg)
    t = cfg.t if cfg.t is not None else 2 * cfg.p
    res = spectral.sobolev_constant(domain, t)
    write_json(out / "sobolev.json", sidecar(cfg, domain, {"t": t, "Lambda": res.value, "iterations": res.iterations}))
    print(f"Lambda(t={t:g}) = {res.value:.12g} ({res.iterations} iterations)")
    return EXIT_OK


def run_verify(cfg, out):
    wb = verification.Workbench(disk_res=tuple(np.atleast_1d(cfg.disk_res)) if np.ndim(cfg.disk_res) else cfg.disk_res,
                                square_res=cfg.square_res, ball_res=cfg.ball_res, seed=cfg.seed, m_max=cfg.modes)
    records = verification.run(wb, cfg.criteria)
    report = {
        "version": __version__,
        "grids": {"disk": wb.disk_res, "square": wb.square_res, "ball": wb.ball_res},
        "seed": cfg.seed,
        "records": [r.as_dict() for r in records],
        "passed": sum(r.passed for r in records),
        "failed": [r.id for r in records if not r.passed],
    }
    write_json(out / "verify.json", report)
    print(f"{report['passed']}/{len(records)} criteria passed")
    return EXIT_OK if not report["failed"] else EXIT_VERIFY


RUNNERS = {"solve": run_solve, "branch": run_branch, "spectrum": run_spectrum, "sobolev": run_sobolev, "verify": run_verify}


def execute(cfg):
    try:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return RUNNERS[cfg.mode](cfg, out)
    except ConfigError as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfgs = make_configs(args)
    except (ConfigError, TypeError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if len(cfgs) == 1:
        return execute(cfgs[0])
    workers = min(len(cfgs), args.jobs or os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        codes = list(pool.map(execute, cfgs))
    for cfg, code in zip(cfgs, codes):
        print(f"{cfg.out}: exit {code}")
    return max(codes)


if __name__ == "__main__":
    sys.exit(main())
