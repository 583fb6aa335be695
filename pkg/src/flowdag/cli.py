"""Command-line entry points: synth, fit, eval, benchmark."""
from __future__ import annotations

import argparse
import dataclasses
import json
import multiprocessing
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import graphio, linalg, metrics, synth, trainer
from .made_flow import NonFiniteError, save_checkpoint
from .sachs import load_sachs_ground_truth
from .trainer import DivergenceError, TrainConfig

__all__ = [
    "ExperimentConfig",
    "main",
    "run_fit",
    "run_eval",
    "run_synth_benchmark",
    "load_sachs_ground_truth",
]

EXIT_BAD_DATA = 3
EXIT_TRAINING = 4


@dataclass
class ExperimentConfig:
    mode: str
    train: TrainConfig
    out_dir: Path
    data_path: Path | None = None
    truth_path: Path | None = None
    use_sachs_truth: bool = False
    log1p: bool = False
    synth_spec: dict | None = None
    seeds: tuple = ()
    workers: int = 1

    def validate(self):
        sources = (self.data_path is not None) + (self.synth_spec is not None)
        if sources != 1:
            raise ValueError("exactly one input source (dataset path or synth spec) required")
        self.train.validate()
        return self

    def echo(self) -> dict:
        raw = dataclasses.asdict(self)
        raw["out_dir"] = str(self.out_dir)
        raw["data_path"] = None if self.data_path is None else str(self.data_path)
        raw["truth_path"] = None if self.truth_path is None else str(self.truth_path)
        raw["seeds"] = list(self.seeds)
        return raw


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

_TRAIN_FLAGS = {
    "num_blocks": int,
    "learning_rate": float,
    "inner_steps": int,
    "batch_size": int,
    "lambda_init": float,
    "rho_init": float,
    "rho_max": float,
    "h_tolerance": float,
    "max_outer_iters": int,
    "jacobian_batch": int,
    "threshold": float,
    "l1_weight": float,
    "seed": int,
    "poly_alpha": float,
    "alpha_bound": float,
    "guard_every": int,
}


def _add_train_flags(parser):
    group = parser.add_argument_group("training", "override TrainConfig defaults")
    for name, typ in _TRAIN_FLAGS.items():
        group.add_argument(f"--{name.replace('_', '-')}", type=typ, default=None)
    group.add_argument("--hidden-sizes", type=str, default=None,
                       help="comma-separated hidden layer widths, e.g. 100 or 64,64")
    group.add_argument("--constraint", choices=("exp", "poly"), default=None)
    group.add_argument("--config", type=Path, default=None,
                       help="YAML file with TrainConfig overrides")


def _load_config_file(path: Path) -> dict:
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")
    if "train" in raw and isinstance(raw["train"], dict):
        raw = raw["train"]
    valid = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(raw) - valid
    if unknown:
        raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
    return raw


def _train_config_from(args) -> TrainConfig:
    values = {}
    if getattr(args, "config", None) is not None:
        values.update(_load_config_file(args.config))
    for name in list(_TRAIN_FLAGS) + ["constraint"]:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    if getattr(args, "hidden_sizes", None) is not None:
        values["hidden_sizes"] = tuple(int(h) for h in args.hidden_sizes.split(","))
    elif "hidden_sizes" in values:
        values["hidden_sizes"] = tuple(values["hidden_sizes"])
    return TrainConfig(**values)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowdag",
        description="DAG structure learning with masked autoregressive flows",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("synth", help="generate a synthetic benchmark dataset")
    ps.add_argument("--d", type=int, required=True)
    ps.add_argument("--edges-per-node", type=float, default=1.0,
                    help="x of the ERx scheme: expected x*d edges")
    ps.add_argument("--mechanism", choices=synth.MECHANISMS, default="gp")
    ps.add_argument("--n", type=int, default=1000)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--noise-scale-range", type=float, nargs=2, default=None,
                    metavar=("LOW", "HIGH"))
    ps.add_argument("--out", type=Path, required=True)

    pf = sub.add_parser("fit", help="learn a DAG from a CSV dataset")
    pf.add_argument("--data", type=Path, required=True)
    pf.add_argument("--truth", type=Path, default=None,
                    help="ground-truth edge list for metrics")
    pf.add_argument("--sachs-truth", action="store_true",
                    help="score against the bundled 17-edge consensus graph")
    pf.add_argument("--log1p", action="store_true",
                    help="apply log1p to the data before standardization")
    pf.add_argument("--out", type=Path, required=True)
    _add_train_flags(pf)

    pe = sub.add_parser("eval", help="compare predicted and true edge lists")
    pe.add_argument("--pred", type=Path, required=True)
    pe.add_argument("--truth", type=Path, required=True)
    pe.add_argument("--nodes", type=Path, default=None,
                    help="file with one node name per line (default: union of endpoints)")
    pe.add_argument("--out", type=Path, default=None,
                    help="write metrics JSON here instead of stdout")

    pb = sub.add_parser("benchmark", help="multi-seed synthetic benchmark")
    pb.add_argument("--d", type=int, required=True)
    pb.add_argument("--edges-per-node", type=float, default=1.0)
    pb.add_argument("--mechanism", choices=synth.MECHANISMS, default="gp")
    pb.add_argument("--n", type=int, default=1000)
    pb.add_argument("--seeds", type=str, default="0,1,2,3,4",
                    help="comma-separated seed list")
    pb.add_argument("--workers", type=int, default=1)
    pb.add_argument("--out", type=Path, required=True)
    _add_train_flags(pb)

    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    graph = synth.sample_er_dag(args.d, args.edges_per_node, seed=args.seed)
    gt = synth.ground_truth_for(graph, args.mechanism,
                                noise_scale_range=args.noise_scale_range, seed=args.seed)
    data = synth.simulate_sem(gt, args.n, seed=args.seed)
    names = graphio.default_names(args.d)
    graphio.write_dataset_csv(out / "data.csv", data, names)
    graphio.write_edge_list(out / "truth_edges.txt", graph, names)
    print(f"wrote {out / 'data.csv'} ({args.n}x{args.d}) and truth with {int(graph.sum())} edges")
    return 0


def _resolve_truth(config: ExperimentConfig, names):
    if config.use_sachs_truth:
        truth, truth_names = load_sachs_ground_truth()
        if sorted(names) != sorted(truth_names):
            raise ValueError(
                f"dataset columns {names} do not match the bundled consensus proteins"
            )
        order = [truth_names.index(n) for n in names]
        return truth[np.ix_(order, order)]
    if config.truth_path is not None:
        edges = graphio.read_edge_list(config.truth_path)
        return graphio.edges_to_graph(edges, names)
    return None


def run_fit(config: ExperimentConfig):
    """Train on a CSV dataset and write the full artifact set."""
    config.validate()
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data, names = graphio.read_dataset_csv(config.data_path)
    if config.log1p:
        if (data <= -1).any():
            raise ValueError("log1p preprocessing requires all entries > -1")
        data = np.log1p(data)
    truth = _resolve_truth(config, names)

    (out / "config.json").write_text(json.dumps(config.echo(), indent=2, sort_keys=True) + "\n")
    result = trainer.outer_loop(config.train, data, names=names, out_dir=out)

    graphio.write_adjacency_csv(out / "adjacency.csv", result.adjacency, names)
    graphio.write_edge_list(out / "edges.txt", result.graph, names)
    (out / "final.dot").write_text(graphio.emit_dot(result.graph, names))
    save_checkpoint(result.flow, out / "model.npz")
    report = None
    if truth is not None:
        report = metrics.metrics_report(result.graph, truth)
        report["converged"] = result.converged
        (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n")
    return result, report


def run_eval(args) -> int:
    pred_edges = graphio.read_edge_list(args.pred)
    truth_edges = graphio.read_edge_list(args.truth)
    if args.nodes is not None:
        names = [ln.strip() for ln in Path(args.nodes).read_text().splitlines() if ln.strip()]
    else:
        names = sorted({n for e in pred_edges + truth_edges for n in e})
    predicted = graphio.edges_to_graph(pred_edges, names)
    truth = graphio.edges_to_graph(truth_edges, names)
    report = metrics.metrics_report(predicted, truth)
    text = json.dumps(report, indent=2) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def _benchmark_seed(payload):
    """One benchmark seed; runs in a worker process when workers > 1."""
    spec, train_cfg, out_dir, seed = payload
    seed_dir = Path(out_dir) / f"seed_{seed}"
    seed_dir.mkdir(parents=True, exist_ok=True)
    try:
        graph = synth.sample_er_dag(spec["d"], spec["edges_per_node"], seed=seed)
        gt = synth.ground_truth_for(graph, spec["mechanism"])
        data = synth.simulate_sem(gt, spec["n"], seed=seed)
        names = graphio.default_names(spec["d"])
        graphio.write_dataset_csv(seed_dir / "data.csv", data, names)
        graphio.write_edge_list(seed_dir / "truth_edges.txt", graph, names)
        cfg = dataclasses.replace(train_cfg, seed=seed)
        result = trainer.outer_loop(cfg, data, names=names, out_dir=seed_dir)
        graphio.write_adjacency_csv(seed_dir / "adjacency.csv", result.adjacency, names)
        graphio.write_edge_list(seed_dir / "edges.txt", result.graph, names)
        (seed_dir / "final.dot").write_text(graphio.emit_dot(result.graph, names))
        report = metrics.metrics_report(result.graph, graph)
        report.update(seed=seed, converged=result.converged,
                      final_h=result.history[-1].h,
                      outer_iters=len(result.history),
                      acyclic=bool(linalg.is_acyclic(result.graph)))
        (seed_dir / "metrics.json").write_text(json.dumps(report, indent=2) + "\n")
        return seed, report, None
    except Exception as err:  # per-seed failures recorded, run continues
        (seed_dir / "error.txt").write_text(f"{type(err).__name__}: {err}\n")
        return seed, None, f"{type(err).__name__}: {err}"


def summarize_benchmark(reports: list) -> dict:
    shds = np.array([r["shd"] for r in reports], dtype=float)
    tprs = np.array([r["tpr"] for r in reports], dtype=float)
    return {
        "num_seeds": len(reports),
        "shd_mean": float(shds.mean()),
        "shd_sd": float(shds.std()),
        "tpr_mean": float(tprs.mean()),
        "tpr_sd": float(tprs.std()),
        "cells": {
            "shd": f"{shds.mean():.1f}±{shds.std():.1f}",
            "tpr": f"{tprs.mean():.2f}±{tprs.std():.2f}",
        },
        "per_seed": reports,
    }


def run_synth_benchmark(config: ExperimentConfig):
    """Generate/train/evaluate across seeds and aggregate Table-style cells."""
    config.validate()
    if not config.seeds:
        raise ValueError("benchmark needs at least one seed")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(config.echo(), indent=2, sort_keys=True) + "\n")
    payloads = [(config.synth_spec, config.train, out, seed) for seed in config.seeds]
    if config.workers > 1:
        with multiprocessing.get_context("spawn").Pool(config.workers) as pool:
            outcomes = pool.map(_benchmark_seed, payloads)
    else:
        outcomes = [_benchmark_seed(p) for p in payloads]

    reports = [rep for _, rep, _ in outcomes if rep is not None]
    failures = {seed: err for seed, _, err in outcomes if err is not None}
    if not reports:
        raise RuntimeError(f"every seed failed: {failures}")
    summary = summarize_benchmark(reports)
    if failures:
        summary["failures"] = failures
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    lines = [f"seed={r['seed']} shd={r['shd']} tpr={r['tpr']:.3f} "
             f"edges={r['num_predicted']} converged={r['converged']}" for r in reports]
    lines.append(f"SHD {summary['cells']['shd']}  TPR {summary['cells']['tpr']}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    print(lines[-1])
    return summary


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            return run_synth(args)
        if args.command == "eval":
            return run_eval(args)
        if args.command == "fit":
            config = ExperimentConfig(
                mode="fit",
                train=_train_config_from(args),
                out_dir=args.out,
                data_path=args.data,
                truth_path=args.truth,
                use_sachs_truth=args.sachs_truth,
                log1p=args.log1p,
            )
            result, report = run_fit(config)
            status = "converged" if result.converged else "not-converged"
            msg = f"{status}: {int(result.graph.sum())} edges"
            if report is not None:
                msg += f", shd={report['shd']} tpr={report['tpr']:.3f}"
            print(msg)
            return 0
        if args.command == "benchmark":
            config = ExperimentConfig(
                mode="benchmark",
                train=_train_config_from(args),
                out_dir=args.out,
                synth_spec={
                    "d": args.d,
                    "edges_per_node": args.edges_per_node,
                    "mechanism": args.mechanism,
                    "n": args.n,
                },
                seeds=tuple(int(s) for s in args.seeds.split(",") if s.strip()),
                workers=args.workers,
            )
            run_synth_benchmark(config)
            return 0
        raise AssertionError(f"unhandled command {args.command}")
    except (FileNotFoundError, ValueError) as err:
        print(f"error (bad input): {err}", file=sys.stderr)
        return EXIT_BAD_DATA
    except (DivergenceError, NonFiniteError, RuntimeError) as err:
        print(f"error (training): {err}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
