"""Command-line entry points: configure, run, and emit reproducible artifacts.

One YAML config file drives every subcommand; see the schema in the README.
Regimes are 1-based in configs and output files (matching how the model
families are usually written down), 0-based inside the library.

Every run writes the requested CSVs plus a ``run_manifest.txt`` recording the
config hash, seed, library version, pinned tolerances and derived grid
quantities, so any output file can be traced to the exact inputs.  CSVs are
UTF-8, comma-separated, one header row, 12 significant digits, LF endings;
identical config and seed reproduce them byte for byte.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 property-check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np
import yaml

from . import pinned
from .boundary import NonMonotoneSlice, check_boundary_monotone, extract_boundary
from .gain import dG_dx, g_monte_carlo, g_pde, h_level, lg
from .grids import Grid, truncation_tail_bound
from .markov import derive_seed
from .model import ModelError, NotApplicable, RegimeModel, classify, validate
from .paths import simulate_paths
from .stepping import GridTooCoarse
from .strategy import Policy, compare_policies, evaluate_policy
from .value import solve_value
from .volterra import volterra_residual

__all__ = ["main", "run", "ConfigError"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_PROPERTY = 4

_MAX_DUMPED_PATHS = 1000


class ConfigError(ValueError):
    """Configuration problem, reported with its config-file location."""


class PropertyCheckFailure(RuntimeError):
    pass


def _fmt(v) -> str:
    """12 significant digits; inf spelled out for sentinel levels."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    f = float(v)
    if np.isinf(f):
        return "inf" if f > 0 else "-inf"
    return f"{f:.12g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_manifest(out_dir: Path, entries: dict) -> None:
    with open(out_dir / "run_manifest.txt", "w", encoding="utf-8", newline="\n") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={_fmt(v) if isinstance(v, (int, float, np.floating, np.integer)) else v}\n")


# ---------------------------------------------------------------------------
# Config loading and validation
# ---------------------------------------------------------------------------


def _need(cfg: dict, section: str, key: str, kind, where: str):
    if key not in cfg:
        raise ConfigError(f"{where}.{key}: missing required key")
    val = cfg[key]
    if kind is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if kind is int and isinstance(val, int) and not isinstance(val, bool):
        return int(val)
    if kind is list and isinstance(val, list):
        return val
    raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {type(val).__name__}")


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"config parse error{loc}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    cfg["_sha256"] = hashlib.sha256(text.encode()).hexdigest()
    return cfg


def build_model(cfg: dict) -> RegimeModel:
    sec = cfg.get("model")
    if not isinstance(sec, dict):
        raise ConfigError("model: missing section")
    mu = _need(sec, "model", "mu", list, "model")
    sigma = _need(sec, "model", "sigma", list, "model")
    q = _need(sec, "model", "q", list, "model")
    horizon = _need(sec, "model", "horizon", float, "model")
    try:
        return validate(RegimeModel(mu=mu, sigma=sigma, Q=q, T=horizon))
    except (ModelError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc


def build_grid(cfg: dict, model: RegimeModel, n_t_override: int | None = None) -> Grid:
    sec = cfg.get("grid", {}) or {}
    n_x = int(sec.get("n_x", 400))
    n_t = int(n_t_override if n_t_override is not None else sec.get("n_t", 200))
    z_max = sec.get("z_max")
    if n_x < 3 or n_t < 1:
        raise ConfigError("grid: n_x must be >= 3 and n_t >= 1")
    return Grid.for_model(model, n_x=n_x, n_t=n_t, z_max=None if z_max is None else float(z_max))


def mc_settings(cfg: dict, seed_override: int | None) -> dict:
    sec = cfg.get("mc")
    if not isinstance(sec, dict):
        raise ConfigError("mc: missing section")
    if seed_override is None and "seed" not in sec:
        raise ConfigError("mc.seed: missing required key (runs must be reproducible; no clock seeding)")
    out = dict(
        n_paths=_need(sec, "mc", "n_paths", int, "mc"),
        n_steps=int(sec.get("n_steps", 250)),
        seed=int(seed_override if seed_override is not None else sec["seed"]),
        bridge_max=bool(sec.get("bridge_max", True)),
    )
    if out["n_paths"] < 1 or out["n_steps"] < 1:
        raise ConfigError("mc: n_paths and n_steps must be at least 1")
    return out


def tolerance_settings(cfg: dict) -> dict:
    sec = cfg.get("tolerances", {}) or {}
    return dict(
        tol_abs=float(sec.get("tol_abs") or pinned.TOL_ABS_DEFAULT),
        eps_sign=float(sec.get("eps_sign") or pinned.EPS_SIGN_DEFAULT),
    )


def _regime_index(cfg_value, m: int, where: str) -> int:
    j = int(cfg_value)
    if not 1 <= j <= m:
        raise ConfigError(f"{where}: regime label {j} outside 1..{m}")
    return j - 1


# ---------------------------------------------------------------------------
# Shared pipeline pieces
# ---------------------------------------------------------------------------


def _solve_all(model, grid):
    surface_g = g_pde(model, grid)
    surfaces = solve_value(model, grid, surface_g)
    return surface_g, surfaces


def _surface_rows(grid, values):
    for k in range(grid.n_t + 1):
        for i in range(grid.n_x):
            for j in range(grid.m):
                yield (grid.t[k], grid.x[i], j + 1, values[k, i, j])


def _value_rows(surfaces):
    grid = surfaces.grid
    v, g, f = surfaces.V.values, surfaces.G.values, surfaces.F.values
    for k in range(grid.n_t + 1):
        for i in range(grid.n_x):
            for j in range(grid.m):
                yield (grid.t[k], grid.x[i], j + 1, v[k, i, j], g[k, i, j], f[k, i, j])


def _boundary_rows(boundary):
    grid = boundary.grid
    for k in range(grid.n_t + 1):
        for j in range(grid.m):
            yield (
                grid.t[k],
                j + 1,
                boundary.b_raw[k, j],
                boundary.b_smoothed[k, j],
                int(~np.isfinite(boundary.b_raw[k, j])),
            )


def _base_manifest(args, cfg, model, grid, tols, subcommand, seed) -> dict:
    from . import __version__

    return {
        "subcommand": subcommand,
        "library_version": __version__,
        "config_sha256": cfg["_sha256"],
        "seed": seed,
        "threads": args.threads,
        "exercise_regime": classify(model).value,
        "n_x": grid.n_x,
        "n_t": grid.n_t,
        "z_max": grid.z_max,
        "dz": grid.dz,
        "dt": grid.dt,
        "tol_abs": tols["tol_abs"],
        "eps_sign": tols["eps_sign"],
        "tol_scheme_pinned": pinned.TOL_SCHEME,
        "truncation_tail_bound": truncation_tail_bound(model, grid.z_max),
    }


def _plot_script(out_dir: Path, csv_name: str, x_col: int, y_cols, series_col: int, m: int, title: str) -> None:
    """Tiny gnuplot helper next to a CSV; plotting stays out of process."""
    lines = [
        "set datafile separator ','",
        f"set title '{title}'",
        "set key autotitle columnhead",
    ]
    plots = []
    for j in range(1, m + 1):
        for y in y_cols:
            plots.append(
                f"'{csv_name}' using {x_col}:(column({series_col})=={j} ? column({y}) : 1/0) "
                f"with lines title 'regime {j} col{y}'"
            )
    lines.append("plot " + ", \\\n     ".join(plots))
    with open(out_dir / (csv_name + ".gp"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _dump_paths(out_dir: Path, model, mc) -> None:
    n = min(mc["n_paths"], _MAX_DUMPED_PATHS)
    bundle = simulate_paths(model, 0.0, 0, n, mc["n_steps"], mc["seed"], mc["bridge_max"])

    def rows():
        for p in range(bundle.n_paths):
            for k in range(bundle.n_steps + 1):
                yield (p, k, bundle.times[k], int(bundle.states[p, k]) + 1, bundle.y[p, k], bundle.ymax[p, k])

    _write_csv(out_dir / "paths.csv", ["path_id", "step", "t", "state", "y", "ymax"], rows())


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gcheck(args, cfg, out_dir):
    model = build_model(cfg)
    grid = build_grid(cfg, model)
    mc = mc_settings(cfg, args.seed)
    tols = tolerance_settings(cfg)
    surface_g = g_pde(model, grid)
    surface_d = dG_dx(surface_g, grid)

    rows = []
    worst = 0.0
    for i, (t, x, j) in enumerate(pinned.probe_points(model)):
        k = grid.t_index(t)
        pde_val = float(np.interp(np.log(x), grid.z, surface_g.values[k, :, j]))
        mc_val, se = g_monte_carlo(model, t, x, j, mc["n_paths"], derive_seed(mc["seed"], i), bridge_max=mc["bridge_max"])
        tol = 3.0 * se + pinned.C_PDE_MC * (grid.dz**2 + grid.dt)
        ok = abs(pde_val - mc_val) <= tol
        worst = max(worst, abs(pde_val - mc_val) - tol)
        rows.append((t, x, j + 1, pde_val, mc_val, se, pde_val - mc_val, tol, int(ok)))

    _write_csv(out_dir / "gain_surface.csv", ["t", "x", "j", "value"], _surface_rows(grid, surface_g.values))
    _write_csv(out_dir / "dgdx_surface.csv", ["t", "x", "j", "value"], _surface_rows(grid, surface_d.values))
    _write_csv(out_dir / "gcheck.csv", ["t", "x", "j", "pde", "mc", "mc_se", "diff", "tol", "pass"], rows)
    manifest = _base_manifest(args, cfg, model, grid, tols, "gcheck", mc["seed"])
    manifest["dgdx_clamp_fraction"] = surface_d.info["clamp_fraction"]
    manifest["gcheck_pass"] = int(worst <= 0.0)
    _write_manifest(out_dir, manifest)
    if args.paths_dump:
        _dump_paths(out_dir, model, mc)
    if worst > 0.0:
        raise PropertyCheckFailure("lattice and Monte Carlo gain estimates disagree beyond tolerance")
    return EXIT_OK


def cmd_solve(args, cfg, out_dir):
    model = build_model(cfg)
    grid = build_grid(cfg, model)
    tols = tolerance_settings(cfg)
    seed = args.seed if args.seed is not None else (cfg.get("mc", {}) or {}).get("seed", 0)
    surface_g, surfaces = _solve_all(model, grid)
    surface_d = dG_dx(surface_g, grid)
    surface_lg = lg(surface_g, surface_d, model, grid)

    _write_csv(out_dir / "value_surface.csv", ["t", "x", "j", "V", "G", "F"], _value_rows(surfaces))
    _write_csv(out_dir / "lg_surface.csv", ["t", "x", "j", "value"], _surface_rows(grid, surface_lg.values))
    h_rows = []
    for j in range(grid.m):
        h = h_level(surface_lg, grid, j, tols["eps_sign"])
        h_rows.extend((grid.t[k], j + 1, h[k]) for k in range(grid.n_t + 1))
    _write_csv(out_dir / "h_level.csv", ["t", "j", "h"], h_rows)
    if args.plot_script:
        _plot_script(out_dir, "h_level.csv", 1, (3,), 2, grid.m, "sign-change level by regime")
    _write_manifest(out_dir, _base_manifest(args, cfg, model, grid, tols, "solve", seed))
    return EXIT_OK


def cmd_boundary(args, cfg, out_dir):
    model = build_model(cfg)
    grid = build_grid(cfg, model)
    tols = tolerance_settings(cfg)
    seed = args.seed if args.seed is not None else (cfg.get("mc", {}) or {}).get("seed", 0)
    _, surfaces = _solve_all(model, grid)
    boundary = extract_boundary(surfaces, tols["tol_abs"])
    _write_csv(out_dir / "boundary.csv", ["t", "j", "b_raw", "b_smoothed", "is_sentinel"], _boundary_rows(boundary))
    if args.plot_script:
        _plot_script(out_dir, "boundary.csv", 1, (3, 4), 2, grid.m, "stopping boundary by regime")

    manifest = _base_manifest(args, cfg, model, grid, tols, "boundary", seed)
    report_lines = {}
    failed = False
    try:
        rep = check_boundary_monotone(boundary, model)
        report_lines.update(
            monotone_applicable=1,
            monotone_violations=rep.n_violations,
            max_jump_cells=rep.max_jump_cells,
            max_jump_per_sqrt_dt=rep.max_jump_per_sqrt_dt,
            continuity_bound=pinned.C_BOUNDARY_CONTINUITY * np.sqrt(grid.dt) / grid.dz,
        )
        failed = rep.n_violations > 0 or rep.max_jump_per_sqrt_dt > pinned.C_BOUNDARY_CONTINUITY
    except NotApplicable:
        report_lines["monotone_applicable"] = 0
    manifest.update(report_lines)
    _write_manifest(out_dir, manifest)
    with open(out_dir / "boundary_report.txt", "w", encoding="utf-8", newline="\n") as fh:
        for k, v in report_lines.items():
            fh.write(f"{k}={_fmt(v) if isinstance(v, (int, float, np.floating)) else v}\n")
    if failed:
        raise PropertyCheckFailure("boundary monotonicity/continuity check failed")
    return EXIT_OK


def cmd_volterra(args, cfg, out_dir):
    model = build_model(cfg)
    grid = build_grid(cfg, model)
    mc = mc_settings(cfg, args.seed)
    tols = tolerance_settings(cfg)
    sec = cfg.get("volterra", {}) or {}
    n_quad = int(sec.get("n_quad", 64))
    report_every = int(sec.get("report_every", 10))
    _, surfaces = _solve_all(model, grid)
    boundary = extract_boundary(surfaces, tols["tol_abs"])
    rep = volterra_residual(
        model, surfaces, boundary, mc["n_paths"], n_quad, mc["seed"],
        report_every=report_every, bridge_max=mc["bridge_max"],
    )
    rows = zip(rep.t, rep.regime + 1, rep.lhs, rep.J, rep.J_se, rep.K_integral, rep.K_se, rep.residual, rep.relative_residual)
    _write_csv(
        out_dir / "volterra.csv",
        ["t", "j", "lhs", "J", "J_se", "K_integral", "K_se", "residual", "relative_residual"],
        rows,
    )
    manifest = _base_manifest(args, cfg, model, grid, tols, "volterra", mc["seed"])
    manifest["n_quad"] = n_quad
    manifest["median_abs_relative_residual"] = rep.median_abs_relative()
    manifest["n_extrapolated_samples"] = rep.n_extrapolated
    _write_manifest(out_dir, manifest)
    return EXIT_OK


def _build_policies(cfg, model, surfaces, tols):
    sec = cfg.get("eval", {}) or {}
    names = sec.get("policies", ["boundary", "immediate", "at_maturity"])
    policies = []
    need_boundary = any(p == "boundary" for p in names)
    boundary = extract_boundary(surfaces, tols["tol_abs"]) if need_boundary else None
    for p in names:
        if p == "boundary":
            policies.append(Policy.from_boundary(boundary))
        elif p == "immediate":
            policies.append(Policy.immediate())
        elif p == "at_maturity":
            policies.append(Policy.at_maturity())
        elif isinstance(p, dict) and "threshold" in p:
            policies.append(Policy.fixed_threshold(p["threshold"]))
        else:
            raise ConfigError(f"eval.policies: unknown policy {p!r}")
    return policies


def cmd_eval(args, cfg, out_dir):
    model = build_model(cfg)
    grid = build_grid(cfg, model)
    mc = mc_settings(cfg, args.seed)
    tols = tolerance_settings(cfg)
    sec = cfg.get("eval", {}) or {}
    j0 = _regime_index(sec.get("start_regime", 1), model.m, "eval.start_regime")
    _, surfaces = _solve_all(model, grid)
    policies = _build_policies(cfg, model, surfaces, tols)
    if len(policies) == 1:
        est = evaluate_policy(model, policies[0], j0, mc["n_paths"], mc["n_steps"], mc["seed"], mc["bridge_max"])
        estimates, pairs = [est], []
    else:
        estimates, pairs = compare_policies(
            model, policies, j0, mc["n_paths"], mc["n_steps"], mc["seed"], mc["bridge_max"]
        )
    _write_csv(
        out_dir / "eval.csv",
        ["policy", "j0", "mean", "std_error", "n_paths"],
        [(e.policy.name(), j0 + 1, e.mean, e.std_error, e.n_paths) for e in estimates],
    )
    _write_csv(
        out_dir / "eval_pairs.csv",
        ["policy_a", "policy_b", "diff", "diff_se"],
        [(p.policy_a, p.policy_b, p.diff, p.diff_se) for p in pairs],
    )
    _write_manifest(out_dir, _base_manifest(args, cfg, model, grid, tols, "eval", mc["seed"]))
    return EXIT_OK


def cmd_figure(args, cfg, out_dir):
    """End-to-end reproduction of the two-state positive-drift pipeline.

    The model, horizon and 100-step time grid are pinned constants; the config
    contributes only the seed, tolerances and output location.
    """
    model = validate(pinned.make_model(pinned.FIGURE_MODEL))
    grid = build_grid(cfg, model, n_t_override=pinned.FIGURE_N_T)
    tols = tolerance_settings(cfg)
    seed = args.seed if args.seed is not None else (cfg.get("mc", {}) or {}).get("seed", 0)
    _, surfaces = _solve_all(model, grid)
    boundary = extract_boundary(surfaces, tols["tol_abs"])

    _write_csv(out_dir / "value_surface.csv", ["t", "x", "j", "V", "G", "F"], _value_rows(surfaces))
    _write_csv(out_dir / "boundary.csv", ["t", "j", "b_raw", "b_smoothed", "is_sentinel"], _boundary_rows(boundary))
    if args.plot_script:
        _plot_script(out_dir, "boundary.csv", 1, (3, 4), 2, grid.m, "stopping boundary by regime")

    manifest = _base_manifest(args, cfg, model, grid, tols, "figure", seed)
    anchor_ok = bool(np.all(np.abs(np.log(boundary.b_smoothed[-1])) <= grid.dz))
    rep = check_boundary_monotone(boundary, model)
    ordering = bool(np.all(np.log(boundary.b_smoothed[:, 0]) <= np.log(boundary.b_smoothed[:, 1]) + grid.dz))
    manifest.update(
        terminal_anchor_ok=int(anchor_ok),
        monotone_violations=rep.n_violations,
        regime1_below_regime2=int(ordering),
    )
    _write_manifest(out_dir, manifest)
    if not anchor_ok or rep.n_violations > 0:
        raise PropertyCheckFailure("figure pipeline boundary failed its anchor/monotonicity checks")
    return EXIT_OK


COMMANDS = {
    "gcheck": cmd_gcheck,
    "solve": cmd_solve,
    "boundary": cmd_boundary,
    "volterra": cmd_volterra,
    "eval": cmd_eval,
    "figure": cmd_figure,
}


def run(subcommand: str, args) -> int:
    try:
        cfg = load_config(args.config)
        out_dir = Path(args.out if args.out is not None else cfg.get("outputs", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        return COMMANDS[subcommand](args, cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridTooCoarse as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (PropertyCheckFailure, NonMonotoneSlice) as exc:
        # NonMonotoneSlice means the surfaces were too noisy to extract a
        # boundary at this tolerance: a property failure, not a config one.
        print(f"property-check failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ultmax",
        description="Optimal selling at the ultimate maximum under regime switching.",
    )
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="path to the YAML run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides config `outputs`)")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (runs are identical for any value)")
    parser.add_argument("--paths-dump", action="store_true", help="also dump simulated paths (debugging)")
    parser.add_argument("--plot-script", action="store_true", help="emit gnuplot scripts next to plottable CSVs")
    args = parser.parse_args(argv)
    return run(args.subcommand, args)


if __name__ == "__main__":
    sys.exit(main())
