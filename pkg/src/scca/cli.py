"""Command-line entry point wiring ingestion, solvers, tuning and reports.

Subcommands: scca, mscca, dscca, tune, simulate, report. Options resolve
with flags winning over an optional JSON --config file, which wins over
built-in defaults; every run echoes its resolved configuration into the
output so identical (inputs, config, seed) give byte-identical files.
Exit codes: 0 success, 1 usage or I/O failure, 2 degenerate solution.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .covariance import SparsityPattern, ViewMatrix, center_scale, load_view, write_view
from .directed import (AccessoryVector, DirectedParams, StackedProblem,
                       UnivariateSelector, directed_fit, directed_stacked,
                       directed_two_stage)
from .errors import (DegenerateInputError, EmptySupportError,
                     InsufficientFactorsError, SccaError)
from .multiview import GammaMatrix, multiview_scca
from .pattern import ConvergenceSpec
from .report import biplot_coords, interp_coords, write_report
from .simulate import (NoiseSweepSpec, RankOneSpec, StabilitySweepSpec,
                       gen_null, gen_rank_one, gen_rank_one_threeview, sweep)
from .solve import CcaSolution, fit_pair
from .tuning import FitConfig, TuneGrid, cv_tune, perm_tune


def _floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip() != ""]


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise ValueError("--config must hold a JSON object")
    return {key.replace("-", "_"): value for key, value in doc.items()}


def _opt(args, config: dict, key: str, default):
    value = getattr(args, key, None)
    if value is None:
        value = config.get(key, default)
    return value


def _conv(resolved: dict) -> ConvergenceSpec:
    return ConvergenceSpec(tol=resolved["tol"], max_iter=resolved["max_iter"])


def _gamma_matrix(spec: str | None, m: int, gamma1: float, gamma2: float) -> GammaMatrix:
    if spec is None:
        if m != 2:
            raise ValueError("--gamma-matrix is required for more than two views")
        return GammaMatrix.for_pair(gamma1, gamma2)
    text = Path(spec).read_text() if Path(spec).exists() else spec
    values = np.asarray(json.loads(text), dtype=float)
    if values.shape != (m, m):
        raise ValueError(f"gamma matrix must be {m}x{m}")
    return GammaMatrix(values)


def _solution_dict(sol: CcaSolution, view_names: list[list[str]], seed: int,
                   config: dict) -> dict:
    factors = []
    for k in range(sol.factor_count):
        iterations = {}
        if k < len(sol.iterations):
            iterations = {key: val for key, val in sol.iterations[k].items()
                          if isinstance(val, (int, float, str))}
        factors.append({
            "index": k + 1,
            "correlation": float(sol.correlations[k]),
            "directions": [d[:, k].tolist() for d in sol.directions],
            "patterns": ([p[k].bits.tolist() for p in sol.patterns]
                         if sol.patterns is not None else None),
            "iterations": iterations,
        })
    doc = {
        "format": "scca-solution",
        "version": 1,
        "metadata": {"tool_version": __version__, "seed": seed, "config": config},
        "normalization": sol.normalization,
        "views": [{"index": i + 1, "variables": names}
                  for i, names in enumerate(view_names)],
        "factors": factors,
        "warnings": list(sol.warnings),
    }
    if sol.pairwise_correlations is not None:
        doc["pairwise_correlations"] = [m.tolist() for m in sol.pairwise_correlations]
    return doc


def load_solution(path) -> tuple[CcaSolution, list[list[str]], dict]:
    """Reload a solution JSON written by this tool."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "scca-solution":
        raise ValueError(f"{path} is not a solution file")
    view_names = [view["variables"] for view in doc["views"]]
    n_views = len(view_names)
    factors = doc["factors"]
    directions = [np.column_stack([np.asarray(f["directions"][i], dtype=float)
                                   for f in factors]) for i in range(n_views)]
    patterns = None
    if factors and factors[0].get("patterns") is not None:
        patterns = [[SparsityPattern(np.asarray(f["patterns"][i], dtype=bool))
                     for f in factors] for i in range(n_views)]
    sol = CcaSolution(
        directions=directions,
        correlations=np.array([f["correlation"] for f in factors]),
        factor_count=len(factors),
        normalization=doc["normalization"],
        patterns=patterns,
        warnings=tuple(doc.get("warnings", ())))
    return sol, view_names, doc["metadata"].get("config", {})


def _write_json(doc: dict, path: Path) -> Path:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
    return path


def _out_dir(resolved: dict) -> Path:
    out = Path(resolved["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_centered(paths: list[str], delimiter, scale: bool) -> list[ViewMatrix]:
    return [center_scale(load_view(p, delimiter=delimiter), scale=scale)
            for p in paths]


def _load_accessory(path: str, delimiter=None) -> AccessoryVector:
    view = load_view(path, delimiter=delimiter)
    if view.p != 1:
        raise ValueError("accessory file must hold a single column")
    return AccessoryVector(view.data[:, 0]).center()


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with option defaults (flags win)")
    p.add_argument("--penalty", choices=["l1", "l0"])
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--scale", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--stage2", choices=["svd", "gep", "power"])
    p.add_argument("--out")
    p.add_argument("--jobs", type=int)
    p.add_argument("--delimiter")


def _resolve_common(args, config) -> dict:
    resolved = {
        "penalty": _opt(args, config, "penalty", "l1"),
        "gamma1": float(_opt(args, config, "gamma1", 0.0)),
        "gamma2": float(_opt(args, config, "gamma2", 0.0)),
        "tol": float(_opt(args, config, "tol", 1e-8)),
        "max_iter": int(_opt(args, config, "max_iter", 10000)),
        "seed": int(_opt(args, config, "seed", 0)),
        "scale": bool(_opt(args, config, "scale", True)),
        "stage2": _opt(args, config, "stage2", None),
        "out": _opt(args, config, "out", "."),
        "jobs": _opt(args, config, "jobs", None),
        "delimiter": _opt(args, config, "delimiter", None),
    }
    if resolved["gamma1"] < 0 or resolved["gamma2"] < 0:
        raise ValueError("sparsity parameters must be non-negative")
    if resolved["tol"] <= 0 or resolved["max_iter"] < 1:
        raise ValueError("tol must be positive and max-iter at least 1")
    return resolved


def _echo(resolved: dict, **extra) -> dict:
    """Effective configuration for the output file; the output directory and
    worker count are excluded so reruns elsewhere stay byte-identical."""
    echo = {k: v for k, v in resolved.items() if k not in ("out", "jobs")}
    echo.update(extra)
    return echo


def cmd_scca(args) -> int:
    config = _load_config(args.config)
    r = _resolve_common(args, config)
    factors = int(_opt(args, config, "factors", 1))
    if factors < 1:
        raise ValueError("--factors must be at least 1")
    stage2 = r["stage2"] or "svd"
    if stage2 not in ("svd", "gep"):
        raise ValueError("pair stage two must be 'svd' or 'gep'")
    x1, x2 = _load_centered([args.x1, args.x2], r["delimiter"], r["scale"])
    conv = _conv(r)
    sol = fit_pair(x1, x2, r["gamma1"], r["gamma2"], factors=factors,
                   penalty=r["penalty"], conv=conv, stage2=stage2)
    echo = _echo(r, factors=factors, stage2=stage2, x1=args.x1, x2=args.x2,
                 subcommand="scca")
    out = _out_dir(r)
    _write_json(_solution_dict(sol, [x1.names, x2.names], r["seed"], echo),
                out / "solution.json")
    for warning in sol.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(out / "solution.json")
    return 0


def cmd_mscca(args) -> int:
    config = _load_config(args.config)
    r = _resolve_common(args, config)
    factors = int(_opt(args, config, "factors", 1))
    if factors != 1:
        raise ValueError("the multi-view pipeline fits a single factor")
    stage2 = r["stage2"] or "power"
    if stage2 not in ("power", "gep"):
        raise ValueError("multi-view stage two must be 'power' or 'gep'")
    views = _load_centered(args.views, r["delimiter"], r["scale"])
    gam = _gamma_matrix(_opt(args, config, "gamma_matrix", None) or args.gamma_matrix,
                        len(views), r["gamma1"], r["gamma2"])
    sol = multiview_scca(views, gam, penalty=r["penalty"], conv=_conv(r),
                         stage2=stage2)
    echo = _echo(r, stage2=stage2, views=list(args.views),
                 gamma_matrix=gam.values.tolist(), subcommand="mscca")
    out = _out_dir(r)
    _write_json(_solution_dict(sol, [v.names for v in views], r["seed"], echo),
                out / "solution.json")
    print(out / "solution.json")
    return 0


def cmd_dscca(args) -> int:
    config = _load_config(args.config)
    r = _resolve_common(args, config)
    mode = _opt(args, config, "mode", "dot")
    eps1 = float(_opt(args, config, "eps1", 1.0))
    eps2 = float(_opt(args, config, "eps2", 1.0))
    stage2 = r["stage2"] or "svd"
    x1, x2 = _load_centered([args.x1, args.x2], r["delimiter"], r["scale"])
    y = _load_accessory(args.y, r["delimiter"])
    if y.values.size != x1.n:
        raise ValueError("accessory length does not match the views")
    conv = _conv(r)
    params = DirectedParams(r["gamma1"], r["gamma2"], eps1, eps2)
    if mode in ("dot", "reg"):
        sol = directed_fit(x1, x2, y, params, mode=mode, conv=conv, stage2=stage2)
    elif mode == "stacked":
        sp = StackedProblem.build(x1, x2, eps1, eps2)
        pattern, _v, z = directed_stacked(sp, y, r["gamma1"], r["gamma2"], conv=conv)
        z1, z2 = z.values[:x1.p], z.values[x1.p:]
        sol = CcaSolution(
            directions=[z1[:, None], z2[:, None]],
            correlations=np.array([0.0]), factor_count=1, normalization="stacked",
            patterns=[[SparsityPattern(pattern.bits[:x1.p])],
                      [SparsityPattern(pattern.bits[x1.p:])]])
        rho = np.corrcoef(x1.data @ z1, x2.data @ z2)[0, 1] if z1.any() and z2.any() else 0.0
        sol.correlations = np.array([float(rho)])
    elif mode == "two-stage":
        selector = UnivariateSelector(float(_opt(args, config, "keep_fraction", 0.5)))
        sol = directed_two_stage(x1, x2, y, selector, r["gamma1"], r["gamma2"],
                                 penalty=r["penalty"], conv=conv, stage2=stage2)
    else:
        raise ValueError("mode must be dot, reg, stacked or two-stage")
    echo = _echo(r, mode=mode, eps1=eps1, eps2=eps2, stage2=stage2,
                 x1=args.x1, x2=args.x2, y=args.y, subcommand="dscca")
    out = _out_dir(r)
    _write_json(_solution_dict(sol, [x1.names, x2.names], r["seed"], echo),
                out / "solution.json")
    print(out / "solution.json")
    return 0


def cmd_tune(args) -> int:
    config = _load_config(args.config)
    r = _resolve_common(args, config)
    method = _opt(args, config, "method", "perm")
    g1_grid = _floats(_opt(args, config, "gamma1_grid", None) or args.gamma1_grid)
    g2_grid = _floats(_opt(args, config, "gamma2_grid", None) or args.gamma2_grid)
    grid = TuneGrid(tuple(g1_grid), tuple(g2_grid),
                    folds=int(_opt(args, config, "folds", 5)),
                    permutations=int(_opt(args, config, "permutations", 100)),
                    seed=r["seed"])
    x1 = load_view(args.x1, delimiter=r["delimiter"])
    x2 = load_view(args.x2, delimiter=r["delimiter"])
    cfg = FitConfig(penalty=r["penalty"], stage2=r["stage2"] or "svd",
                    scale=r["scale"])
    tune = cv_tune if method == "cv" else perm_tune
    report = tune(x1, x2, grid, penalty=r["penalty"], conv=_conv(r), cfg=cfg,
                  jobs=r["jobs"])
    echo = _echo(r, method=method, gamma1_grid=g1_grid, gamma2_grid=g2_grid,
                 subcommand="tune")
    doc = {"metadata": {"tool_version": __version__, "seed": r["seed"], "config": echo},
           "report": report.to_dict()}
    out = _out_dir(r)
    _write_json(doc, out / "tune.json")
    print(out / "tune.json")
    return 0


def _parse_supports(spec: str | None):
    if spec is None:
        return None
    pairs = []
    for token in spec.split(","):
        pos, neg = token.split(":")
        pairs.append((int(pos), int(neg)))
    return tuple(pairs)


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    r = _resolve_common(args, config)
    model = _opt(args, config, "model", "pair")
    n = int(_opt(args, config, "n", 50))
    sigma = _opt(args, config, "sigma", None)
    sigmas = _floats(sigma) if isinstance(sigma, str) else sigma
    supports = _parse_supports(_opt(args, config, "supports", None))
    out = _out_dir(r)
    written = []
    if model == "pair":
        p = [int(v) for v in _floats(_opt(args, config, "p", "500,400"))]
        sig = tuple(sigmas) if sigmas else (0.2, 0.2)
        if len(sig) == 1:
            sig = (sig[0], sig[0])
        spec = RankOneSpec(p=tuple(p), n=n, sigma=sig, seed=r["seed"],
                           supports=supports)
        x1, x2, truths = gen_rank_one(spec)
        views = [x1, x2]
    elif model == "three":
        p = [int(v) for v in _floats(_opt(args, config, "p", "500,400,600"))]
        sig = tuple(sigmas) if sigmas else (0.2, 0.2, 0.1)
        spec = RankOneSpec(p=tuple(p), n=n, sigma=sig, seed=r["seed"],
                           supports=supports)
        views, truths = gen_rank_one_threeview(spec)
    elif model == "null":
        p = [int(v) for v in _floats(_opt(args, config, "p", "60,60"))]
        x1, x2 = gen_null(n, p[0], p[1], seed=r["seed"])
        views, truths = [x1, x2], None
    else:
        raise ValueError("model must be pair, three or null")
    for i, view in enumerate(views):
        written.append(write_view(view, out / f"x{i + 1}.csv"))
    if truths is not None:
        for i, truth in enumerate(truths):
            lines = ["name,value"]
            lines += [f"{views[i].names[j]},{repr(float(truth[j]))}"
                      for j in range(truth.size)]
            path = out / f"truth{i + 1}.csv"
            path.write_text("\n".join(lines) + "\n")
            written.append(path)

    sweep_kind = _opt(args, config, "sweep", None)
    if sweep_kind == "noise":
        table = sweep(NoiseSweepSpec(seed=r["seed"]), penalty=r["penalty"],
                      conv=_conv(r))
        written.append(table.write_csv(out / "sweep.csv"))
    elif sweep_kind == "stability":
        table = sweep(StabilitySweepSpec(seed=r["seed"]), penalty=r["penalty"],
                      conv=_conv(r))
        written.append(table.write_csv(out / "sweep.csv"))
    elif sweep_kind is not None:
        raise ValueError("sweep must be 'noise' or 'stability'")
    for path in written:
        print(path)
    return 0


def cmd_report(args) -> int:
    config = _load_config(args.config)
    r = _resolve_common(args, config)
    kind = _opt(args, config, "kind", "biplot")
    fmt = _opt(args, config, "format", "csv")
    sol, _names, fit_config = load_solution(args.solution)
    scale = bool(fit_config.get("scale", r["scale"]))
    views = _load_centered(args.views, r["delimiter"], scale)
    if kind == "biplot":
        data = biplot_coords(sol, views)
    elif kind == "interp":
        markers = int(_opt(args, config, "markers", 5))
        data = interp_coords(sol, views, markers_per_variable=markers)
    else:
        raise ValueError("kind must be 'biplot' or 'interp'")
    out = _out_dir(r)
    path = write_report(data, out / f"{kind}.{fmt}", format=fmt)
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scca",
        description="Two-stage sparse canonical correlation analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scca", help="sparse CCA on two views")
    p.add_argument("--x1", required=True)
    p.add_argument("--x2", required=True)
    p.add_argument("--factors", type=int)
    _common(p)
    p.set_defaults(func=cmd_scca)

    p = sub.add_parser("mscca", help="multi-view sparse CCA")
    p.add_argument("--views", nargs="+", required=True)
    p.add_argument("--gamma-matrix", dest="gamma_matrix")
    p.add_argument("--factors", type=int)
    _common(p)
    p.set_defaults(func=cmd_mscca)

    p = sub.add_parser("dscca", help="directed sparse CCA")
    p.add_argument("--x1", required=True)
    p.add_argument("--x2", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--mode", choices=["dot", "reg", "stacked", "two-stage"])
    p.add_argument("--eps1", type=float)
    p.add_argument("--eps2", type=float)
    p.add_argument("--keep-fraction", dest="keep_fraction", type=float)
    _common(p)
    p.set_defaults(func=cmd_dscca)

    p = sub.add_parser("tune", help="hyperparameter search")
    p.add_argument("--x1", required=True)
    p.add_argument("--x2", required=True)
    p.add_argument("--method", choices=["cv", "perm"])
    p.add_argument("--gamma1-grid", dest="gamma1_grid", required=True)
    p.add_argument("--gamma2-grid", dest="gamma2_grid", required=True)
    p.add_argument("--folds", type=int)
    p.add_argument("--permutations", type=int)
    _common(p)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("simulate", help="generate synthetic datasets")
    p.add_argument("--model", choices=["pair", "three", "null"])
    p.add_argument("--n", type=int)
    p.add_argument("--p")
    p.add_argument("--sigma")
    p.add_argument("--supports", help="planted pos:neg runs per view, e.g. 25:25,25:25")
    p.add_argument("--sweep", choices=["noise", "stability"])
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="emit plot coordinates from a solution")
    p.add_argument("--solution", required=True)
    p.add_argument("--views", nargs="+", required=True)
    p.add_argument("--kind", choices=["biplot", "interp"])
    p.add_argument("--format", choices=["csv", "json", "svg"])
    p.add_argument("--markers", type=int)
    _common(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (EmptySupportError, DegenerateInputError, InsufficientFactorsError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (SccaError, OSError, ValueError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
