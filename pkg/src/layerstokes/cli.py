"""Batch command-line front end.

Every run writes into one output directory: a copy of the configuration
(when one is given), CSV tables and JSON summaries.  Exit status 0 means the
run finished and, for ``verify``, that its acceptance predicate holds.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .symbols import OffSectorError

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    dim: int
    n_tan: list
    period: list
    n_z: int
    delta: float
    mu: float
    lambda_re: float
    lambda_im: float
    epsilon: float
    gamma0: float
    pad_factor: float
    seed: int
    q: float
    output_dir: str

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        keys = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - keys)
        missing = sorted(keys - set(data))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(missing)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        from .symbols import require_sector

        try:
            self.grid()
            self.layer()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not 1 < float(self.q) < math.inf:
            raise ConfigError("q must lie in (1, inf)")
        require_sector(self.parameter())

    def grid(self):
        from .fields import LayerGrid

        return LayerGrid(int(self.dim), tuple(self.n_tan), tuple(self.period), int(self.n_z),
                         float(self.delta), float(self.pad_factor))

    def layer(self):
        from .symbols import LayerConfig

        return LayerConfig(float(self.mu), float(self.delta), int(self.dim))

    def parameter(self):
        from .symbols import ResolventParameter

        return ResolventParameter(complex(self.lambda_re, self.lambda_im), float(self.epsilon),
                                  float(self.gamma0))


def default_config() -> dict:
    return dict(dim=2, n_tan=[16], period=[2 * math.pi], n_z=65, delta=1.0, mu=1.0,
                lambda_re=1.0, lambda_im=2.0, epsilon=math.pi / 4, gamma0=0.1, pad_factor=4.0,
                seed=0, q=2.0, output_dir="out")


# ------------------------------------------------------------------ helpers
def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("LAYERSTOKES_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"LAYERSTOKES_THREADS must be an integer, got {env!r}")
    return 1


def _out_dir(args, cfg: RunConfig | None) -> Path:
    out = args.out or (cfg.output_dir if cfg else None) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    if cfg is not None:
        (path / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: Path, payload) -> None:
    from .verify import _jsonable

    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def _seed(args, cfg: RunConfig | None) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.seed if cfg is not None else 0


def _load_cfg(args, required: bool) -> RunConfig | None:
    if args.config:
        return RunConfig.load(args.config)
    if required:
        raise ConfigError("--config is required")
    return None


# ------------------------------------------------------------------- solve
def cmd_solve(args) -> int:
    from .fields import LayerField, dump_field_csv, load_field_csv
    from .pipeline import (manufactured_case, relative_error, residual_full,
                           solve_boundary_only, solve_full)
    from .reduction import DataBundle

    cfg = _load_cfg(args, True)
    grid, layer, p = cfg.grid(), cfg.layer(), cfg.parameter()
    exact = None
    if args.kind:
        d, exact = manufactured_case(args.kind, grid, p, layer, seed=_seed(args, cfg))
    else:
        if not args.h:
            raise ConfigError("solve needs --kind or at least --h FILE")

        def load(path, ncomp):
            if path is None:
                return LayerField.zeros(grid, ncomp)
            try:
                f = load_field_csv(path)
            except (OSError, ValueError, KeyError) as exc:
                raise ConfigError(f"cannot read field {path}: {exc}") from exc
            if f.grid != grid or f.ncomp != ncomp:
                raise ConfigError(f"field {path} does not match the configured grid")
            return f

        d = DataBundle(load(args.f, grid.dim), load(args.g, 1), load(args.h, grid.dim))
    boundary_only = not (np.any(d.f.values) or np.any(d.g.values))
    sol = solve_boundary_only(d.h, p, layer) if boundary_only else solve_full(d, p, layer)
    out = _out_dir(args, cfg)
    dump_field_csv(sol.u, out / "u.csv", "u")
    dump_field_csv(sol.theta, out / "theta.csv", "theta")
    report = {"solver": "boundary_only" if boundary_only else "full",
              "residual": residual_full(sol, d, p, layer)}
    if exact is not None:
        report["error_u"] = relative_error(sol.u, exact.u)
        report["error_theta"] = relative_error(sol.theta, exact.theta)
    _write_json(out / "residual.json", report)
    print(json.dumps({k: v for k, v in report.items() if k != "residual"} | {
        "max_residual": max(report["residual"].values())}, default=float))
    return EXIT_OK


def cmd_manufactured(args) -> int:
    from .fields import dump_field_csv
    from .pipeline import manufactured_case

    cfg = _load_cfg(args, True)
    d, exact = manufactured_case(args.kind, cfg.grid(), cfg.parameter(), cfg.layer(),
                                 seed=_seed(args, cfg))
    out = _out_dir(args, cfg)
    for name, f in (("f", d.f), ("g", d.g), ("h", d.h), ("u_exact", exact.u),
                    ("theta_exact", exact.theta)):
        dump_field_csv(f, out / f"{name}.csv", name)
    print(f"wrote {args.kind} case to {out}")
    return EXIT_OK


# ------------------------------------------------------------------ verify
def _sector(cfg: RunConfig | None, gamma0_default: float = 1.0):
    if cfg is None:
        return 1.0, 1.0, math.pi / 4, gamma0_default, 0
    return cfg.mu, cfg.delta, cfg.epsilon, cfg.gamma0, cfg.seed


def _scan_grid(args, eps, gamma0, defaults):
    from .verify import ScanGrid

    v = lambda name: getattr(args, name) if getattr(args, name) is not None else defaults[name]
    lmin = v("lmin") if v("lmin") is not None else 1.01 * gamma0
    return ScanGrid.build(lmin, v("lmax"), v("nl"), v("amin"), v("amax"), v("na"), v("args"),
                          eps, gamma0)


def cmd_verify(args) -> int:
    from . import verify as V
    from .symbols import LayerConfig

    cfg = _load_cfg(args, False)
    for name in ("lmin", "lmax", "amin", "amax"):
        val = getattr(args, name)
        if val is not None and not val > 0:
            raise ConfigError(f"--{name} must be positive, got {val}")
    for name in ("nl", "na", "args", "m", "trials", "samples"):
        val = getattr(args, name)
        if val is not None and val < 1:
            raise ConfigError(f"--{name} must be at least 1, got {val}")
    mu, delta, eps, gamma0, seed = _sector(cfg)
    if args.seed is not None:
        seed = args.seed
    layer = LayerConfig(mu, delta, cfg.dim if cfg else 2)
    out = _out_dir(args, cfg)
    threads = _threads(args)
    sub = args.sub
    scan_defaults = dict(lmin=None, lmax=1e4, nl=50, amin=1e-3, amax=1e3, na=50, args=9)

    if sub == "scan-det":
        g = _scan_grid(args, eps, gamma0, scan_defaults)
        rep = V.scan_det_lower_bound(g, layer, threads)
        rep.write(out, "scan_det")
        ok = rep.summary["inf_ratio"] > 0
        msg = f"inf ratio {rep.summary['inf_ratio']:.6g} at {rep.summary['argmin']}"
    elif sub == "scan-deriv":
        g = _scan_grid(args, eps, gamma0, dict(scan_defaults, nl=20, na=20, args=5))
        reps = V.scan_inv_det_derivatives(g, layer, 2, 1.0, threads)
        half = V.scan_inv_det_derivatives(g, layer, 2, 0.5, threads)
        consts = {}
        ok = True
        for (ell, a), rep in reps.items():
            rep.write(out, f"scan_deriv_l{ell}_a{a}")
            c1 = rep.summary["fitted_constant"]
            c2 = half[(ell, a)].summary["fitted_constant"]
            stable = np.isfinite(c1) and 0.5 <= c2 / c1 <= 2.0
            consts[f"l{ell}_a{a}"] = {"constant": c1, "half_step": c2, "stable": bool(stable)}
            ok &= bool(stable)
        _write_json(out / "scan_deriv_summary.json", consts)
        msg = json.dumps({k: round(v["constant"], 6) for k, v in consts.items()})
    elif sub == "fa-pos":
        nx = args.nl or 400
        x = np.linspace(1.0, 50.0, nx + 1)[1:]
        amin = args.amin if args.amin is not None else 1e-3
        amax = args.amax if args.amax is not None else 50.0
        A = np.logspace(math.log10(amin), math.log10(amax), args.na or 200)
        reps = V.check_fA_positivity(x, A, delta, mu)
        for key, rep in reps.items():
            rep.write(out, f"fa_{key}")
        ok = all(r.summary["positive"] and r.summary["ingredients_ok"] for r in reps.values())
        msg = "; ".join(f"{k}: min {r.summary['min']:.6g} at {r.summary['argmin']}"
                        for k, r in reps.items())
    elif sub == "degeneracy":
        amin = args.amin if args.amin is not None else 1e-4
        amax = args.amax if args.amax is not None else 1e-2
        n = args.na or 41
        A, d = V.degeneracy_samples((amin, amax), delta, mu, 0.0, n)
        slope = V.fit_zero_lambda_degeneracy((amin, amax), delta, mu, 0.0, n)
        rows = {"lambda_re": np.zeros(n), "lambda_im": np.zeros(n), "A": A, "value": d,
                "bound": A ** 10, "ratio": d / A ** 10}
        ok = 9.9 <= slope <= 10.1
        V.ScanReport(rows, {"slope": slope, "ok": ok}, {"scan": "degeneracy"}).write(out, "degeneracy")
        msg = f"slope {slope:.6f}"
    elif sub == "bequiv":
        g = _scan_grid(args, eps, max(gamma0, 1e-12), dict(scan_defaults, lmin=None))
        reps = V.check_B_equivalence(g, eps, mu)
        for key, rep in reps.items():
            rep.write(out, f"bequiv_{key}")
        ok = all(r.summary["ok"] for r in reps.values())
        msg = json.dumps({k: r.summary for k, r in reps.items()})
    elif sub == "rbound":
        mmax = args.m or 32
        ms = [1]
        while ms[-1] * 2 <= mmax:
            ms.append(ms[-1] * 2)
        if ms[-1] != mmax:
            ms.append(mmax)
        stats, rep = V.r_bound_trend(args.op, tuple(ms), args.trials, seed,
                                     V.default_lambda_set(eps, min(gamma0, 0.1)))
        rep.write(out, "rbound")
        ok = rep.summary["bounded"]
        msg = f"growth {rep.summary['growth']:.4f} over m = {ms}"
    elif sub == "crosscheck":
        n = args.samples
        det = V.crosscheck_det(n, seed, eps, gamma0, layer)
        cof = V.crosscheck_cofactors(n, seed, eps, gamma0, layer)
        ok = det["max_rel"] <= 1e-9 and cof["max_rel"] <= 1e-8 and cof["adjugate_residual"] <= 1e-8
        _write_json(out / "crosscheck.json", {"det": det, "cofactors": cof, "ok": ok})
        msg = f"det {det['max_rel']:.3g}, cofactors {cof['max_rel']:.3g}, adjugate {cof['adjugate_residual']:.3g}"
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown verify subcommand {sub}")
    print(f"verify {sub}: {'PASS' if ok else 'FAIL'}: {msg}")
    return EXIT_OK if ok else EXIT_FAIL


# ------------------------------------------------------------------ parser
def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.HelpFormatter
    ap = argparse.ArgumentParser(prog="layerstokes", formatter_class=fmt,
                                 description="Stokes resolvent problem in a periodic layer.")
    common = argparse.ArgumentParser(add_help=False, formatter_class=fmt)
    common.add_argument("--config", help="JSON run configuration (exactly the RunConfig keys)")
    common.add_argument("--out", help="output directory (default: output_dir from the config)")
    common.add_argument("--threads", type=int, default=None,
                        help="worker cap; falls back to LAYERSTOKES_THREADS, then 1")
    common.add_argument("--seed", type=int, default=None, help="random seed override (default: seed from the config, else 0)")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], formatter_class=fmt,
                       help="solve a manufactured case or data read from field files")
    s.add_argument("--kind", choices=["single_mode_boundary", "smooth_full"], default=None,
                   help="manufactured data kind (default: none, read --f/--g/--h)")
    s.add_argument("--f", help="force field CSV (default: zero)")
    s.add_argument("--g", help="divergence datum CSV (default: zero)")
    s.add_argument("--h", help="boundary stress field CSV")
    s.set_defaults(func=cmd_solve)

    m = sub.add_parser("manufactured", parents=[common], formatter_class=fmt,
                       help="write manufactured data and the exact solution")
    m.add_argument("--kind", choices=["single_mode_boundary", "smooth_full"],
                   default="smooth_full", help="manufactured data kind (default: smooth_full)")
    m.set_defaults(func=cmd_manufactured)

    v = sub.add_parser("verify", parents=[common], formatter_class=fmt,
                       help="symbol-level scans and Monte Carlo checks")
    v.add_argument("sub", choices=["scan-det", "scan-deriv", "fa-pos", "degeneracy", "bequiv",
                                   "rbound", "crosscheck"])
    v.add_argument("--lmin", type=float, default=None, help="smallest |lambda| (default 1.01 gamma0)")
    v.add_argument("--lmax", type=float, default=None, help="largest |lambda| (default 1e4)")
    v.add_argument("--nl", type=int, default=None,
                   help="number of |lambda| samples (x samples for fa-pos; default 50 / 400)")
    v.add_argument("--amin", type=float, default=None, help="smallest A (default 1e-3; 1e-4 for degeneracy)")
    v.add_argument("--amax", type=float, default=None, help="largest A (default 1e3; 50 for fa-pos; 1e-2 for degeneracy)")
    v.add_argument("--na", type=int, default=None, help="number of A samples (default 50)")
    v.add_argument("--args", type=int, default=None, help="number of arguments in the sector fan (default 9)")
    v.add_argument("--m", type=int, default=None, help="largest randomized-sum length for rbound (default 32)")
    v.add_argument("--trials", type=int, default=200, help="Monte Carlo trials per m for rbound (default 200)")
    v.add_argument("--op", choices=["lambda_S", "grad2_S", "gradP"], default="lambda_S",
                   help="operator family for rbound (default lambda_S)")
    v.add_argument("--samples", type=int, default=10_000, help="random samples for crosscheck (default 10000)")
    v.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except OffSectorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError) as exc:
        # invalid arguments surface from the numerical layer as ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
