"""Command-line interface: ``sparsegc {simulate,fit,predict,cv,stabsel,roc}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 solver
non-convergence (only with ``--strict``). Settings come from flags, then
the ``--config`` JSON file, then built-in defaults.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .io import (
    RankTransform,
    fmt,
    labels_present,
    rank_standardize,
    read_model,
    read_samples,
    write_json,
    write_model,
    write_samples,
    write_table,
)
from .model_selection import (
    TuningGrid,
    cross_validate,
    nested_cross_validate,
    stability_selection,
)
from .simulation import SimDesign, generate_population, rho_ladder, roc_study
from .solver import fit, predict_scores
from .types import DataError, PenaltyParams, SolverConfig

logger = logging.getLogger("sparsegc")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

_SOLVER_FLAGS = {
    "t0": float,
    "alpha": float,
    "delta": float,
    "eta": float,
    "prox_tol": float,
    "admm_tol_init": float,
    "admm_tol_min": float,
    "admm_mu": float,
    "max_outer_iter": int,
    "max_admm_iter": int,
}


class UsageError(Exception):
    pass


class NotConverged(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, *, jobs=False, seed=False, solver=False):
    p.add_argument("--config", type=Path, help="JSON file with 'solver', 'grid', 'gamma' sections")
    p.add_argument("--strict", action="store_true", help="exit 4 if any fit fails to converge")
    p.add_argument("-v", "--verbose", action="count", default=0)
    if jobs:
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")
    if seed:
        p.add_argument("--seed", type=int, default=0)
    if solver:
        g = p.add_argument_group("solver")
        for name, typ in _SOLVER_FLAGS.items():
            g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
        p.add_argument("--gamma", type=float, default=None, help="ridge weight (default 1e-5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsegc", description="Node- and edge-sparse classification of weighted graphs."
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    d = SimDesign()
    p = sub.add_parser("simulate", help="draw a two-class SBM population")
    p.add_argument("--nodes", type=int, default=d.num_nodes)
    p.add_argument("--communities", type=int, default=len(d.community_sizes))
    p.add_argument("--active-communities", type=_ints, default=list(d.active_communities))
    p.add_argument("--p", type=float, default=d.differentiating_probability)
    p.add_argument("--per-class", type=int, default=d.samples_per_class)
    p.add_argument("--mu-within", type=float, default=d.mu_within)
    p.add_argument("--mu-between", type=float, default=d.mu_between)
    p.add_argument("--noise-variance", type=float, default=d.noise_variance)
    p.add_argument("--effect-mean", type=float, default=d.effect_mean)
    p.add_argument("--effect-variance", type=float, default=d.effect_variance)
    p.add_argument("--sample-seed", type=int, default=None, help="redraw samples, same truth")
    p.add_argument("--out", type=Path, required=True, help="SampleFile (.csv or .csv.gz)")
    p.add_argument("--truth", type=Path, default=None, help="ground-truth JSON")
    _common(p, seed=True)

    p = sub.add_parser("fit", help="fit one (lambda, rho) model")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--rank-standardize", action="store_true")
    p.add_argument("--out", type=Path, required=True, help="ModelFile")
    p.add_argument("--diagnostics", type=Path, default=None, help="diagnostics JSON")
    _common(p, solver=True)

    p = sub.add_parser("predict", help="score subjects with a fitted model")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True, help="CSV subject,label,score")
    _common(p)

    p = sub.add_parser("cv", help="cross-validated grid search")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--lambda-grid", type=_floats, default=None)
    p.add_argument("--rho-grid", type=_floats, default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--nested", action="store_true")
    p.add_argument("--inner-folds", type=int, default=10)
    p.add_argument("--rank-standardize", action="store_true")
    p.add_argument("--out", type=Path, required=True, help="heat-map CSV")
    p.add_argument("--summary", type=Path, default=None, help="chosen cells JSON")
    _common(p, jobs=True, seed=True, solver=True)

    p = sub.add_parser("stabsel", help="complementary-pairs stability selection")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--theta", type=float, default=0.75)
    p.add_argument("--rank-standardize", action="store_true")
    p.add_argument("--top", type=int, default=None, help="keep only the top edges")
    p.add_argument("--out", type=Path, required=True, help="ranked edge CSV")
    p.add_argument("--nodes-out", type=Path, default=None, help="node probability CSV")
    _common(p, jobs=True, seed=True, solver=True)

    p = sub.add_parser("roc", help="edge/node ROC over simulated replications")
    p.add_argument("--nodes", type=int, default=d.num_nodes)
    p.add_argument("--communities", type=int, default=len(d.community_sizes))
    p.add_argument("--active-communities", type=_ints, default=list(d.active_communities))
    p.add_argument("--p", type=_floats, default=[0.25, 0.5, 0.75, 1.0])
    p.add_argument("--per-class", type=int, default=d.samples_per_class)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--lambda", dest="lam", type=float, default=0.05)
    p.add_argument("--rho-grid", type=_floats, default=None)
    p.add_argument("--out", type=Path, required=True, help="per-replication AUC CSV")
    p.add_argument("--points", type=Path, default=None, help="ROC points CSV")
    _common(p, jobs=True, seed=True, solver=True)
    return parser


def _load_config(args) -> dict:
    if getattr(args, "config", None) is None:
        return {}
    try:
        cfg = json.loads(args.config.read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"{args.config}: {exc}") from None
    if not isinstance(cfg, dict):
        raise DataError(f"{args.config}: top level must be a JSON object")
    unknown = set(cfg) - {"solver", "grid", "gamma"}
    if unknown:
        raise DataError(f"{args.config}: unknown sections {sorted(unknown)}")
    return cfg


def _solver_config(args, cfg: dict) -> SolverConfig:
    fields = {f.name for f in dataclasses.fields(SolverConfig)}
    base = dict(cfg.get("solver", {}))
    unknown = set(base) - fields
    if unknown:
        raise DataError(f"{args.config}: unknown solver keys {sorted(unknown)}")
    for name in _SOLVER_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            base[name] = v
    try:
        return SolverConfig(**base)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _gamma(args, cfg: dict) -> float:
    if getattr(args, "gamma", None) is not None:
        return args.gamma
    return float(cfg.get("gamma", 1e-5))


def _grid(args, cfg: dict) -> TuningGrid:
    default = TuningGrid.default()
    g = cfg.get("grid", {})
    lam = args.lambda_grid or g.get("lambdas") or default.lambdas
    rho = args.rho_grid or g.get("rhos") or default.rhos
    try:
        return TuningGrid(sorted(lam), sorted(rho))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args, cfg) -> int:
    design = SimDesign.equal_communities(
        args.nodes,
        args.communities,
        active_communities=tuple(args.active_communities),
        differentiating_probability=args.p,
        samples_per_class=args.per_class,
        mu_within=args.mu_within,
        mu_between=args.mu_between,
        noise_variance=args.noise_variance,
        effect_mean=args.effect_mean,
        effect_variance=args.effect_variance,
        seed=args.seed,
    )
    data, truth = generate_population(design, sample_seed=args.sample_seed)
    truth_path = args.truth or args.out.with_name(args.out.name.split(".")[0] + ".truth.json")
    write_samples(args.out, data)
    write_json(truth_path, {"design": design.to_dict(), "sample_seed": args.sample_seed, **truth.to_dict()})
    print(f"wrote {len(data)} samples to {args.out} and ground truth to {truth_path}")
    return EXIT_OK


def cmd_fit(args, cfg) -> int:
    config = _solver_config(args, cfg)
    penalty = PenaltyParams(args.lam, args.rho, _gamma(args, cfg))
    data = read_samples(args.data)
    meta = {"lambda": penalty.lam, "rho": penalty.rho, "gamma": penalty.gamma}
    if args.rank_standardize:
        data, record = rank_standardize(data)
        meta["rank_transform"] = {
            "means": [fmt(v) for v in record.means],
            "sds": [fmt(v) for v in record.sds],
        }
    model, diag = fit(data, penalty, config)
    if args.strict and (not diag.converged or diag.admm_cap_hits):
        raise NotConverged(
            f"fit did not converge in {diag.outer_iterations} iterations "
            f"({diag.admm_cap_hits} inner cap hits)"
        )
    meta["diagnostics"] = {
        "outer_iterations": diag.outer_iterations,
        "converged": diag.converged,
        "final_objective": fmt(diag.final_objective),
        "kkt_residual": fmt(diag.kkt_residual),
        "active_edges": model.active_edges,
        "active_nodes": model.active_nodes,
    }
    write_model(args.out, model, meta)
    if args.diagnostics is not None:
        write_json(args.diagnostics, diag.to_dict())
    print(
        f"objective {diag.final_objective:.10g}, {model.active_edges} edges, "
        f"{model.active_nodes} nodes, converged={diag.converged}"
    )
    return EXIT_OK


def cmd_predict(args, cfg) -> int:
    model, meta = read_model(args.model)
    has_labels = labels_present(args.data)
    data = read_samples(args.data, num_nodes=model.num_nodes, require_labels=has_labels)
    if "rank_transform" in meta:
        rt = meta["rank_transform"]
        means = np.array(rt["means"], dtype=float)
        sds = np.array(rt["sds"], dtype=float)
        data = RankTransform(means, sds, sds == 0).apply(data)
    scores = predict_scores(model, data)
    labels = np.where(scores >= 0, 1, -1)
    write_table(
        args.out,
        ["subject", "label", "score"],
        ([sid, int(lab), float(s)] for sid, lab, s in zip(data.subject_ids, labels, scores)),
    )
    if has_labels:
        acc = float(np.mean(labels == data.y))
        print(json.dumps({"accuracy": acc, "n": len(data)}))
    return EXIT_OK


def cmd_cv(args, cfg) -> int:
    config = _solver_config(args, cfg)
    grid = _grid(args, cfg)
    gamma = _gamma(args, cfg)
    data = read_samples(args.data)
    cv = cross_validate(
        data, grid, args.folds, args.seed, config,
        gamma=gamma, jobs=args.jobs, rank_standardize=args.rank_standardize,
    )
    if args.strict and cv.failed_fits:
        raise NotConverged(f"{cv.failed_fits} fits failed")
    header = ["lambda", "rho", "accuracy", "accuracy_se", "edge_sparsity", "node_sparsity",
              "active_edges", "active_nodes"]
    write_table(args.out, header, ([row[h] for h in header] for row in cv.table()))
    summary = {
        "folds": args.folds,
        "seed": args.seed,
        "chosen_cell": {"lambda": cv.chosen_cell[0], "rho": cv.chosen_cell[1]},
        "chosen_accuracy": cv.best_accuracy(),
        "chosen_accuracy_se": float(cv.accuracy_se[cv.cell_index(cv.chosen_cell)]),
        "one_se_cell": {"lambda": cv.one_se_cell[0], "rho": cv.one_se_cell[1]},
        "fold_assignments": cv.fold_assignments.tolist(),
        "failed_fits": cv.failed_fits,
    }
    if args.nested:
        nested = nested_cross_validate(
            data, grid, args.folds, args.inner_folds, args.seed, config,
            gamma=gamma, jobs=args.jobs, rank_standardize=args.rank_standardize,
        )
        summary["nested"] = {
            "accuracy": nested.accuracy,
            "accuracy_se": nested.accuracy_se,
            "outer_accuracy": nested.outer_accuracy.tolist(),
            "chosen_cells": [list(c) for c in nested.chosen_cells],
        }
    if args.summary is not None:
        write_json(args.summary, summary)
    print(json.dumps({k: summary[k] for k in ("chosen_cell", "chosen_accuracy", "one_se_cell")}))
    return EXIT_OK


def cmd_stabsel(args, cfg) -> int:
    config = _solver_config(args, cfg)
    data = read_samples(args.data)
    if args.rank_standardize:
        data, _ = rank_standardize(data)
    rep = stability_selection(
        data, (args.lam, args.rho), args.pairs, args.seed, config,
        gamma=_gamma(args, cfg), jobs=args.jobs, theta=args.theta,
    )
    if args.strict and rep.failed_fits:
        raise NotConverged(f"{rep.failed_fits} subsample fits failed")
    ranking = rep.ranking()[: args.top] if args.top else rep.ranking()
    write_table(
        args.out,
        ["rank", "i", "j", "coefficient", "probability"],
        ([k + 1, i, j, c, p] for k, (i, j, c, p) in enumerate(ranking)),
    )
    if args.nodes_out is not None:
        write_table(
            args.nodes_out,
            ["node", "probability"],
            ([k, float(p)] for k, p in enumerate(rep.node_probability)),
        )
    print(json.dumps({
        "fits": 2 * rep.num_subsample_pairs - rep.failed_fits,
        "failed_fits": rep.failed_fits,
        "expected_false_bound": rep.expected_false_bound,
        "theta": rep.theta,
    }))
    return EXIT_OK


def cmd_roc(args, cfg) -> int:
    config = _solver_config(args, cfg)
    rhos = sorted(args.rho_grid) if args.rho_grid else rho_ladder(args.lam)
    designs = [
        SimDesign.equal_communities(
            args.nodes,
            args.communities,
            active_communities=tuple(args.active_communities),
            differentiating_probability=p,
            samples_per_class=args.per_class,
            seed=args.seed + rep,
        )
        for p in args.p
        for rep in range(args.reps)
    ]
    results = roc_study(designs, args.lam, rhos, config, gamma=_gamma(args, cfg), jobs=args.jobs)
    rows, points = [], []
    for d, r in zip(designs, results):
        rows.append([d.differentiating_probability, d.seed - args.seed, r.edge_auc, r.node_auc])
        for efpr, etpr, nfpr, ntpr in r.raw_points:
            points.append([d.differentiating_probability, d.seed - args.seed, efpr, etpr, nfpr, ntpr])
    write_table(args.out, ["p", "rep", "edge_auc", "node_auc"], rows)
    if args.points is not None:
        write_table(args.points, ["p", "rep", "efpr", "etpr", "nfpr", "ntpr"], points)
    for p in args.p:
        sel = [r for d, r in zip(designs, results) if d.differentiating_probability == p]
        print(
            f"p={p:g}: edge AUC {np.mean([r.edge_auc for r in sel]):.3f}, "
            f"node AUC {np.mean([r.node_auc for r in sel]):.3f}"
        )
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "stabsel": cmd_stabsel,
    "roc": cmd_roc,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        cfg = _load_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"sparsegc {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NotConverged as exc:
        print(f"sparsegc {args.command}: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (DataError, OSError) as exc:
        print(f"sparsegc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"sparsegc {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
