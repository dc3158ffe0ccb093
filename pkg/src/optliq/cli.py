"""Command-line front end: parse a JSON config, dispatch, emit CSV/JSON artifacts.

Exit codes are a stable contract: 0 success / all checks pass, 1 verification
failure, 2 configuration error, 3 numerical error.  Every output file embeds
the exact resolved configuration (defaults included), so a rerun from the
embedded config reproduces the file byte for byte; the only exception is the
wall-clock ``seconds`` field of verification reports.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bsde, closed_form, control, verify
from .errors import (
    ArgumentError,
    BasisError,
    ConfigError,
    CoverageError,
    IntegrabilityError,
    NumericalError,
    OptliqError,
    PositivityError,
    SolverInconsistencyError,
    UnsupportedModelError,
)
from .model import (
    BrownianSquareImpact,
    ConstantImpact,
    ConstantRisk,
    GBMImpact,
    PowerPair,
    PowerSingularImpact,
    TableImpact,
    TableRisk,
    TimeGrid,
    ZeroRisk,
    is_deterministic_impact,
    is_umi_impact,
    sample_paths,
)

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_MODEL_KEYS = {"p", "T", "impact", "risk", "grid", "seed", "paths"}
_COMMAND_KEYS = {
    "levels",
    "stop_tol",
    "out",
    "xi",
    "candidate",
    "checkpoints",
    "L",
    "basis_degree",
    "beta",
    "alphas",
    "threads",
}

_IMPACT_KEYS = {
    "constant": {"eta0"},
    "table": {"breakpoints", "values"},
    "power_singular": {"beta"},
    "gbm": {"eta0", "mu", "sigma"},
    "brownian_square": set(),
}
_RISK_KEYS = {"zero": set(), "constant": {"c"}, "table": {"breakpoints", "values"}}


@dataclass
class RunConfig:
    """Fully resolved run configuration with a record of defaulted fields."""

    pq: PowerPair
    T: float
    impact: object
    risk: object
    grid: TimeGrid
    seed: int
    paths: int
    levels: tuple
    stop_tol: float
    out: Path
    xi: float
    candidate: dict
    checkpoints: tuple
    L: float
    basis_degree: int
    beta: float
    alphas: tuple
    threads: int
    resolved: dict = field(default_factory=dict)
    defaulted: tuple = ()


def _reject_unknown(raw: dict, allowed: set, where: str):
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _parse_impact(raw, T):
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("impact must be an object with a 'kind' field")
    kind = raw["kind"]
    if kind not in _IMPACT_KEYS:
        raise ConfigError(f"unknown impact kind {kind!r}")
    _reject_unknown({k: v for k, v in raw.items() if k != "kind"}, _IMPACT_KEYS[kind], "impact")
    try:
        if kind == "constant":
            return ConstantImpact(float(raw["eta0"]))
        if kind == "table":
            return TableImpact(tuple(raw["breakpoints"]), tuple(raw["values"]))
        if kind == "power_singular":
            return PowerSingularImpact(float(raw["beta"]), horizon=T)
        if kind == "gbm":
            return GBMImpact(float(raw["eta0"]), float(raw["mu"]), float(raw["sigma"]))
        return BrownianSquareImpact()
    except (KeyError, TypeError, ValueError, OptliqError) as exc:
        raise ConfigError(f"bad impact specification: {exc}") from exc


def _parse_risk(raw):
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("risk must be an object with a 'kind' field")
    kind = raw["kind"]
    if kind not in _RISK_KEYS:
        raise ConfigError(f"unknown risk kind {kind!r}")
    _reject_unknown({k: v for k, v in raw.items() if k != "kind"}, _RISK_KEYS[kind], "risk")
    try:
        if kind == "zero":
            return ZeroRisk()
        if kind == "constant":
            return ConstantRisk(float(raw["c"]))
        return TableRisk(tuple(raw["breakpoints"]), tuple(raw["values"]))
    except (KeyError, TypeError, ValueError, OptliqError) as exc:
        raise ConfigError(f"bad risk specification: {exc}") from exc


def load_config(path: str, overrides: dict) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _MODEL_KEYS | _COMMAND_KEYS, "config")

    defaulted = []

    def take(key, default):
        if key in raw:
            return raw[key]
        defaulted.append(key)
        return default

    try:
        p = float(take("p", 2.0))
        T = float(take("T", 1.0))
        pq = PowerPair.from_p(p)
        impact = _parse_impact(take("impact", {"kind": "constant", "eta0": 1.0}), T)
        risk = _parse_risk(take("risk", {"kind": "zero"}))
        grid_raw = take("grid", {"n": 1000, "cluster": 1.0})
        _reject_unknown(grid_raw, {"n", "cluster"}, "grid")
        n = int(grid_raw.get("n", 1000))
        cluster = float(grid_raw.get("cluster", 1.0))
        grid = TimeGrid.build(T, n, cluster)
        seed = int(take("seed", 0))
        paths = int(take("paths", 10_000))
        levels = tuple(float(x) for x in take("levels", [10.0, 100.0, 1000.0]))
        stop_tol = float(take("stop_tol", 1e-9))
        out = Path(take("out", "out"))
        xi = float(take("xi", 1.0))
        candidate = take("candidate", {"kind": "optimal"})
        checkpoints = tuple(float(c) for c in take("checkpoints", [0.25 * T, 0.5 * T, 0.75 * T]))
        L = float(take("L", 1e4))
        basis_degree = int(take("basis_degree", 3))
        beta = float(take("beta", 1.0))
        alphas = tuple(float(a) for a in take("alphas", [1.0, 0.5, 0.1, 0.01]))
        threads = int(take("threads", 1))
    except (TypeError, ValueError, OptliqError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc

    resolved = dict(raw)
    for key in defaulted:
        resolved[key] = {
            "p": p,
            "T": T,
            "impact": {"kind": "constant", "eta0": 1.0},
            "risk": {"kind": "zero"},
            "grid": {"n": n, "cluster": cluster},
            "seed": seed,
            "paths": paths,
            "levels": list(levels),
            "stop_tol": stop_tol,
            "out": str(out),
            "xi": xi,
            "candidate": candidate,
            "checkpoints": list(checkpoints),
            "L": L,
            "basis_degree": basis_degree,
            "beta": beta,
            "alphas": list(alphas),
            "threads": threads,
        }[key]

    cfg = RunConfig(
        pq=pq,
        T=T,
        impact=impact,
        risk=risk,
        grid=grid,
        seed=seed,
        paths=paths,
        levels=levels,
        stop_tol=stop_tol,
        out=out,
        xi=xi,
        candidate=candidate,
        checkpoints=checkpoints,
        L=L,
        basis_degree=basis_degree,
        beta=beta,
        alphas=alphas,
        threads=threads,
        resolved=resolved,
        defaulted=tuple(sorted(defaulted)),
    )

    for key, value in overrides.items():
        if value is None:
            continue
        setattr(cfg, key, value)
        cfg.resolved[key] = str(value) if isinstance(value, Path) else value
        cfg.defaulted = tuple(k for k in cfg.defaulted if k != key)
    return cfg


# ---------------------------------------------------------------------------
# Output helpers (17 significant digits, '.' decimal, config embedded)
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and not np.isfinite(x)):
        return ""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _config_metadata(cfg: RunConfig) -> dict:
    return {"config": cfg.resolved, "defaulted": list(cfg.defaulted), "seed": cfg.seed}


def _write_csv(path: Path, header, rows, cfg: RunConfig):
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = json.dumps(_config_metadata(cfg), sort_keys=True)
    lines = [f"# {meta}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, obj: dict, cfg: RunConfig):
    path.parent.mkdir(parents=True, exist_ok=True)
    obj = dict(obj)
    obj.update(_config_metadata(cfg))
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig) -> int:
    schedule = bsde.LSchedule(levels=cfg.levels, stop_tol=cfg.stop_tol)
    if is_deterministic_impact(cfg.impact):
        solver = lambda L: bsde.solve_penalized_deterministic(
            cfg.impact, cfg.risk, cfg.pq, cfg.grid, bsde.PenalizedParams(L=L)
        )
        slack = 0.0
    else:
        ensemble = sample_paths(
            cfg.impact, cfg.risk, cfg.grid, cfg.seed, cfg.paths, max_workers=cfg.threads
        )
        solver = lambda L: bsde.solve_penalized_mc(
            cfg.impact,
            cfg.risk,
            cfg.pq,
            ensemble,
            bsde.PenalizedParams(L=L),
            basis_degree=cfg.basis_degree,
        )
        slack = 0.01  # regression noise allowance on the common-numbers trace
    result = bsde.l_schedule_limit(
        cfg.impact, cfg.risk, cfg.pq, cfg.grid, schedule, solver, monotone_slack=slack
    )

    fld = result.field
    t = cfg.grid.nodes[: fld.n_covered_nodes]
    rows = []
    for k, tk in enumerate(t):
        yk = fld.node_values(k)
        if fld.is_stochastic:
            rows.append(
                (tk, float(yk.mean()), float(np.quantile(yk, 0.05)), float(np.quantile(yk, 0.95)), None)
            )
        else:
            rows.append((tk, float(yk[0]), None, None, None))
    _write_csv(cfg.out / "yfield.csv", ["t", "y_mean", "y_p05", "y_p95", "z_mean"], rows, cfg)
    _write_json(
        cfg.out / "convergence.json",
        {
            "levels": list(result.levels),
            "y0": list(result.y0_trace),
            "converged": result.converged,
        },
        cfg,
    )
    return EXIT_OK


def _deterministic_schedule_rows(cfg: RunConfig):
    x_fn, rate_fn = closed_form.schedule_functions(cfg.impact, cfg.pq, cfg.T)
    rows = []
    for tk in cfg.grid.nodes:
        x = cfg.xi * x_fn(tk)
        rate = -cfg.xi * rate_fn(tk) if tk < cfg.T else None
        rows.append((tk, x, None, None, rate))
    return rows


def cmd_simulate(cfg: RunConfig) -> int:
    if not is_umi_impact(cfg.impact):
        raise UnsupportedModelError(
            "no optimal-schedule construction for impact outside the UMI families"
        )
    # deterministic optimal schedule, evaluated by quadrature of the
    # mean-impact integrals (exact for the closed-form families)
    rows = _deterministic_schedule_rows(cfg)
    _write_csv(
        cfg.out / "trajectory.csv", ["t", "x_mean", "x_p05", "x_p95", "rate_mean"], rows, cfg
    )
    return EXIT_OK


def _build_trajectory(cfg: RunConfig, ensemble):
    kind = cfg.candidate.get("kind", "optimal") if isinstance(cfg.candidate, dict) else str(cfg.candidate)
    if kind == "optimal":
        cf = closed_form.closed_form_y(cfg.impact, cfg.pq, cfg.T)
        return control.integrate_control(cf, ensemble, cfg.pq, cfg.xi)
    if kind in ("linear", "constant_rate"):
        return control.candidate_control(kind, cfg.grid, cfg.xi)
    if kind == "power":
        return control.candidate_control(
            "power", cfg.grid, cfg.xi, alpha=float(cfg.candidate.get("alpha", 1.0))
        )
    raise ConfigError(f"unknown candidate kind {kind!r}")


def cmd_cost(cfg: RunConfig) -> int:
    if cfg.xi == 0.0:
        report = control.CostReport.from_terms(0.0, 0.0, 0.0, 0.0, cfg.paths)
    else:
        ensemble = sample_paths(
            cfg.impact, cfg.risk, cfg.grid, cfg.seed, cfg.paths, max_workers=cfg.threads
        )
        traj = _build_trajectory(cfg, ensemble)
        report = control.cost(traj, ensemble, cfg.risk, cfg.pq)
    _write_json(
        cfg.out / "cost.json",
        {
            "estimate": report.estimate,
            "std_error": report.std_error,
            "ci95": [report.ci95_lo, report.ci95_hi],
            "terms": report.terms,
        },
        cfg,
    )
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    result = verify.run_full_suite(
        impact=cfg.impact,
        risk=cfg.risk,
        pq=cfg.pq,
        T=cfg.T,
        seed=cfg.seed,
        paths=cfg.paths,
        threads=cfg.threads,
    )
    _write_json(cfg.out / "report.json", result.bundle(), cfg)
    return EXIT_OK if result.passed else EXIT_VERIFY_FAIL


def cmd_sweep(cfg: RunConfig) -> int:
    report = verify.counterexample_sweep(cfg.beta, cfg.alphas)
    rows = []
    for alpha in cfg.alphas:
        rows.append(
            (
                alpha,
                cfg.beta,
                closed_form.counterexample_cost_quadrature(alpha, cfg.beta),
                closed_form.counterexample_cost(alpha, cfg.beta),
            )
        )
    _write_csv(
        cfg.out / "sweep.csv", ["alpha", "beta", "j_quadrature", "j_formula"], rows, cfg
    )
    return EXIT_OK if report.passed else EXIT_VERIFY_FAIL


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optliq",
        description="Constrained optimal liquidation via penalized backward equations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "solve the penalized equation along a penalty schedule"),
        ("simulate", "emit the optimal liquidation schedule"),
        ("cost", "Monte Carlo cost of a control"),
        ("verify", "run the verification suite"),
        ("sweep", "cost sweep of power schedules in the no-optimizer regime"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="JSON model specification")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--paths", type=int, default=None, help="override the path count")
        cmd.add_argument("--out", type=Path, default=None, help="output directory")
        cmd.add_argument("--threads", type=int, default=None, help="worker cap (>=1)")
        if name == "sweep":
            cmd.add_argument("--beta", type=float, default=None)
            cmd.add_argument(
                "--alphas", type=str, default=None, help="comma-separated decreasing exponents"
            )
    return parser


_COMMANDS = {
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "cost": cmd_cost,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        "seed": args.seed,
        "paths": args.paths,
        "out": args.out,
        "threads": args.threads,
    }
    if getattr(args, "beta", None) is not None:
        overrides["beta"] = args.beta
    if getattr(args, "alphas", None) is not None:
        overrides["alphas"] = tuple(float(a) for a in args.alphas.split(","))
    try:
        cfg = load_config(args.config, overrides)
        return _COMMANDS[args.command](cfg)
    except (ConfigError, IntegrabilityError, UnsupportedModelError, ArgumentError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        NumericalError,
        SolverInconsistencyError,
        BasisError,
        CoverageError,
        PositivityError,
    ) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OptliqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
