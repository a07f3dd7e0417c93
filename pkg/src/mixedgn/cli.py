"""Command-line front end: ``solve``, ``verify``, ``sweep`` and ``report``.

Exit codes: 0 success, 1 certificate FAIL, 2 non-convergence, 3 bracket
failure, 4 box too small, 5 invalid parameters or configuration,
6 snapshot hash mismatch.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .io import (HashMismatchError, append_csv_row, completed_keys, dump_json, ensure_csv,
                 load_ground_state, read_csv_rows, row_key, save_certificate, save_ground_state)
from .params import ParameterError, ProblemParams
from .plotting import write_report
from .solvers import (BracketError, ConvergenceError, DegenerateError, SolverOptions,
                      critical_mass_search, default_initial_guess, petviashvili_solve)
from .spectral import SpectralGrid
from .verification import CSV_COLUMNS, optimality_certificate

log = logging.getLogger("mixedgn")

EXIT_OK, EXIT_FAIL, EXIT_NOCONV, EXIT_BRACKET, EXIT_BOX, EXIT_PARAMS, EXIT_HASH = 0, 1, 2, 3, 4, 5, 6

GRID_DEFAULTS = {1: (512, 32.0), 2: (128, 16.0), 3: (64, 12.0)}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    dim: int = 1
    s_low: float = 0.5
    s_high: float = 1.0
    p: float | None = None
    n: int | None = None
    box: float | None = None
    omega: float | None = None
    seed: int = 0
    max_iters: int = 500
    residual_tol: float = 1e-10
    boundary_tol: float = 1e-2
    samples: int = 1000
    output: str | None = None
    csv: str | None = None
    out_dir: str | None = None
    s_low_values: list = field(default_factory=list)
    s_high_values: list = field(default_factory=list)
    p_values: list = field(default_factory=list)
    jobs: int = 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def render(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        return cls.from_dict(json.loads(text))

    def grid(self) -> SpectralGrid:
        n0, L0 = GRID_DEFAULTS.get(self.dim, (64, 12.0))
        return SpectralGrid(self.dim, self.n or n0, self.box or L0)

    def params(self, s_low=None, s_high=None, p=None) -> ProblemParams:
        p = self.p if p is None else p
        if p is None:
            raise ParameterError("the nonlinearity exponent p is required")
        return ProblemParams(self.dim, self.s_low if s_low is None else s_low,
                             self.s_high if s_high is None else s_high, p)

    def solver_options(self) -> SolverOptions:
        return SolverOptions(max_iters=self.max_iters, residual_tol=self.residual_tol,
                             boundary_tol=self.boundary_tol, seed=self.seed)

    def sweep_points(self) -> list[ProblemParams]:
        sl = self.s_low_values or [self.s_low]
        sh = self.s_high_values or [self.s_high]
        ps = self.p_values or ([self.p] if self.p is not None else [])
        if not ps:
            raise ConfigError("sweep needs at least one p value")
        return [ProblemParams(self.dim, a, b, c) for a, b, c in itertools.product(sl, sh, ps)]


# argument parsing -------------------------------------------------------------

_FLAG_MAP = {
    "dim": "dim", "n": "n", "box": "box", "s_low": "s_low", "s_high": "s_high", "p": "p",
    "omega": "omega", "seed": "seed", "max_iters": "max_iters", "tol": "residual_tol",
    "boundary_tol": "boundary_tol", "samples": "samples", "out": "output", "csv": "csv",
    "out_dir": "out_dir", "jobs": "jobs",
}


def _common(sp, *, physics=True, multi=False):
    S = argparse.SUPPRESS
    sp.add_argument("--config", help="JSON config file; flags override it")
    if physics:
        sp.add_argument("--dim", type=int, default=S)
        sp.add_argument("--n", type=int, default=S, help="points per axis (power of two)")
        sp.add_argument("--box", type=float, default=S, help="half box length L")
        nargs = "+" if multi else None
        sp.add_argument("--s-low", dest="s_low", type=float, nargs=nargs, default=S)
        sp.add_argument("--s-high", dest="s_high", type=float, nargs=nargs, default=S)
        sp.add_argument("--p", type=float, nargs=nargs, default=S)
        sp.add_argument("--max-iters", dest="max_iters", type=int, default=S)
        sp.add_argument("--tol", type=float, default=S, help="equation residual tolerance")
        sp.add_argument("--boundary-tol", dest="boundary_tol", type=float, default=S)
    sp.add_argument("--seed", type=int, default=S)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    ap = argparse.ArgumentParser(prog="mixedgn", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve", help="ground state at fixed omega, or at the critical mass")
    _common(sp)
    sp.add_argument("--omega", type=float, default=S)
    sp.add_argument("--out", default=S, help="snapshot header path (default groundstate.json)")

    sp = sub.add_parser("verify", help="certify a ground-state snapshot")
    sp.add_argument("snapshot")
    _common(sp, physics=False)
    sp.add_argument("--samples", type=int, default=S)
    sp.add_argument("--out", default=S, help="certificate JSON path")
    sp.add_argument("--csv", default=S, help="append the certificate row to this CSV")

    sp = sub.add_parser("sweep", help="critical mass and certificate over a parameter grid")
    _common(sp, multi=True)
    sp.add_argument("--samples", type=int, default=S)
    sp.add_argument("--csv", default=S)
    sp.add_argument("--jobs", type=int, default=S)

    sp = sub.add_parser("report", help="render SVG curves from a sweep CSV")
    sp.add_argument("csv")
    sp.add_argument("--out-dir", dest="out_dir", default=S)
    return ap


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    base = {}
    if getattr(ns, "config", None):
        try:
            base = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc}") from exc
    cfg = RunConfig.from_dict(base).to_dict()
    multi = ns.command == "sweep"
    for flag, key in _FLAG_MAP.items():
        if flag in vars(ns):
            val = getattr(ns, flag)
            if multi and flag in ("s_low", "s_high", "p"):
                cfg[f"{key}_values"] = list(val)
            else:
                cfg[key] = val
    return RunConfig.from_dict(cfg)


# commands ---------------------------------------------------------------------

def _summary(gs) -> str:
    r = gs.report
    return (f"omega={gs.omega:.12g} mass={r.mass:.12g} J={r.energy:.6e} "
            f"residual={gs.residual:.3e} boundary={gs.boundary_decay:.3e}")


def cmd_solve(cfg: RunConfig) -> int:
    params = cfg.params()
    grid = cfg.grid()
    opts = cfg.solver_options()
    extra = {"config": cfg.to_dict()}
    if cfg.omega is not None:
        gs = petviashvili_solve(params, cfg.omega, default_initial_guess(params, grid, cfg.omega), opts)
        extra["mode"] = "fixed_omega"
    else:
        res = critical_mass_search(params, grid, opts, route_w=False)
        gs = res.ground
        extra["mode"] = "critical_mass"
        extra["c0"] = res.c0
    out = Path(cfg.output or "groundstate.json")
    save_ground_state(out, gs, opts, extra)
    print(_summary(gs))
    if "box_too_small" in gs.flags:
        log.warning("boundary layer %.3e exceeds %.1e: box too small", gs.boundary_decay,
                    opts.boundary_tol)
        return EXIT_BOX
    return EXIT_OK


def cmd_verify(snapshot: str, cfg: RunConfig) -> int:
    gs, header = load_ground_state(snapshot)
    params = gs.params
    saved = header.get("config") or {}
    opts = SolverOptions.from_dict(header["solver_options"])
    seed = cfg.seed if cfg.seed != RunConfig.seed else saved.get("seed", cfg.seed)
    cert = optimality_certificate(gs, params, n_samples=cfg.samples, seed=seed, opts=opts)
    out = Path(cfg.output) if cfg.output else Path(snapshot).with_suffix(".certificate.json")
    save_certificate(out, cert, {"snapshot": str(snapshot), "seed": seed})
    if cfg.csv:
        append_csv_row(cfg.csv, cert.csv_row())
    print(f"status={cert.status} c0A={cert.c0_routeA:.10g} c0W={cert.c0_routeW:.10g} "
          f"c0F={cert.c0_formula:.10g} C_best={cert.C_best:.10g}")
    for f in cert.failures:
        print(f"  fail: {f}")
    return EXIT_OK if cert.status == "PASS" else EXIT_FAIL


def _error_row(params: ProblemParams, status: str) -> list:
    nan = math.nan
    row = [params.dim, params.s_low, params.s_high, params.p] + [nan] * (len(CSV_COLUMNS) - 5)
    row[CSV_COLUMNS.index("violations")] = -1
    return row + [status]


def _sweep_job(args) -> list:
    cfg_dict, pdict = args
    cfg = RunConfig.from_dict(cfg_dict)
    params = ProblemParams.from_dict(pdict)
    opts = cfg.solver_options()
    try:
        res = critical_mass_search(params, cfg.grid(), opts)
        cert = optimality_certificate(res.ground, params, cfg.samples, cfg.seed, opts,
                                      route_w=res.route_w)
        return cert.csv_row()
    except BracketError:
        return _error_row(params, "ERROR_BRACKET")
    except (ConvergenceError, DegenerateError):
        return _error_row(params, "ERROR_CONVERGENCE")


def cmd_sweep(cfg: RunConfig) -> int:
    points = cfg.sweep_points()
    if not cfg.csv:
        raise ConfigError("sweep needs --csv")
    if cfg.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    ensure_csv(cfg.csv)
    done = completed_keys(cfg.csv)
    todo = [P for P in points if row_key(P.dim, P.s_low, P.s_high, P.p) not in done]
    log.info("%d of %d grid points already done", len(points) - len(todo), len(points))
    tasks = [(cfg.to_dict(), P.to_dict()) for P in todo]
    if cfg.jobs == 1 or len(tasks) <= 1:
        for t in tasks:
            row = _sweep_job(t)
            append_csv_row(cfg.csv, row)
            print(",".join(str(x) for x in row))
    else:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            # rows are written in grid order by this process only
            for row in ex.map(_sweep_job, tasks):
                append_csv_row(cfg.csv, row)
                print(",".join(str(x) for x in row))
    return EXIT_OK


def cmd_report(csv_path: str, cfg: RunConfig) -> int:
    rows = read_csv_rows(csv_path)
    out_dir = cfg.out_dir or str(Path(csv_path).parent)
    for path in write_report(rows, out_dir):
        print(path)
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = resolve_config(ns)
        if ns.command == "solve":
            return cmd_solve(cfg)
        if ns.command == "verify":
            return cmd_verify(ns.snapshot, cfg)
        if ns.command == "sweep":
            return cmd_sweep(cfg)
        return cmd_report(ns.csv, cfg)
    except (ParameterError, ConfigError) as exc:
        log.error("invalid parameters: %s", exc)
        return EXIT_PARAMS
    except ValueError as exc:
        if isinstance(exc, HashMismatchError):
            log.error("%s", exc)
            return EXIT_HASH
        log.error("invalid input: %s", exc)
        return EXIT_PARAMS
    except BracketError as exc:
        log.error("%s", exc)
        return EXIT_BRACKET
    except (ConvergenceError, DegenerateError) as exc:
        log.error("%s", exc)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
