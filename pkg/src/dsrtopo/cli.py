"""Batch experiment runner.

Subcommands: simulate (datasets), train (one model), prune (iterative pruning
campaigns), topo-train (topology priors at matched sparsity), analyze (graph
stats for mask files), report (aggregate results). Everything is config-driven
(JSON), writes only into the output directory, and derives every component
seed from one master seed, so single-threaded reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dynamics, graphs, metrics, model, pruning, training
from .errors import ConfigurationError, DsrError, TrainingFailureError
from .seeding import derive_seed

COMMANDS = ("simulate", "train", "prune", "topo-train", "analyze", "report")

# Constants fixed by design decisions; emitted into every config snapshot.
PIPELINE_CONSTANTS = {
    "divergence_guard": model.DIVERGENCE_GUARD,
    "bin_margin": 0.05,
    "laplace_pseudocount": 1,
    "bins_low_dim": 30,
    "bins_high_dim": 8,
    "d_stsp_sentinel": "n_dims * ln(k)",
    "spectrum_smoothing_bins": metrics.DEFAULT_SPECTRUM_SMOOTHING,
    "pred_error_steps": metrics.DEFAULT_PRED_STEPS,
    "eval_orbit_steps": 10_000,
    "eval_transient": 500,
    "geometric_score_orbit_steps": 5000,
    "geometric_score_transient": 500,
    "transient_discard": 1000,
    "radam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
    "grad_clip_default": 10.0,
    "lr_schedule": "geometric, lr_start at epoch 0 to lr_end at the last epoch",
    "tie_break": "lowest (row, col) pruned first",
    "geohub_max_redraws": graphs.MAX_REDRAWS,
}


def _log(out_dir: Path, event: str, **fields) -> None:
    line = json.dumps({"event": event, **fields}, sort_keys=True)
    with (out_dir / "log.jsonl").open("a") as fh:
        fh.write(line + "\n")


def _write_snapshot(out_dir: Path, cfg: dict, command: str) -> None:
    snapshot = {"command": command, "config": cfg, "constants": PIPELINE_CONSTANTS}
    (out_dir / "config_snapshot.json").write_text(
        json.dumps(snapshot, indent=2, sort_keys=True) + "\n"
    )


def _require(cfg: dict, key: str, command: str):
    if key not in cfg:
        raise ConfigurationError(f"{command}: config is missing required key {key!r}")
    return cfg[key]


def build_train_config(cfg: dict) -> tuple[training.TrainConfig, int]:
    """TrainConfig plus latent dimension from a config block.

    A ``preset`` name supplies defaults; any TrainConfig field and ``m_dim``
    can be overridden directly.
    """
    block = dict(cfg.get("train", {}))
    preset_name = block.pop("preset", None)
    m_dim = block.pop("m_dim", None)
    if preset_name is not None:
        preset = training.paper_preset(preset_name)
        base = preset.config
        if m_dim is None:
            m_dim = preset.m_dim
    else:
        base = training.TrainConfig()
    if m_dim is None:
        raise ConfigurationError("train block needs a preset or an explicit m_dim")
    unknown = set(block) - set(base.__dict__)
    if unknown:
        raise ConfigurationError(f"unknown train config keys: {sorted(unknown)}")
    return base.replace(**block), int(m_dim)


def run_simulate(cfg: dict, out_dir: Path, master_seed: int) -> Path:
    """Generate (or preprocess) a dataset and write CSV + JSON sidecar."""
    system = _require(cfg, "system", "simulate")
    data_seed = derive_seed(master_seed, "dataset")
    if system == "ecg":
        raw_path = _require(cfg, "raw_path", "simulate")
        raw = dynamics.load_raw_series(raw_path)
        dataset = dynamics.preprocess_timeseries(
            raw,
            smooth_sigma=cfg.get("smooth_sigma", 6.0),
            window=cfg.get("window", 49),
            embed_dim=cfg.get("embed_dim", 5),
            lag=cfg.get("lag", 10),
            noise_pct=cfg.get("noise_pct", 0.05),
            seed=data_seed,
        )
    else:
        spec, default_noise = dynamics.system_preset(system)
        if "dt" in cfg:
            spec.dt = float(cfg["dt"])
        traj = dynamics.simulate_system(
            spec,
            n_steps=int(cfg.get("n_steps", 100_000)),
            x0=np.array(cfg["x0"]) if "x0" in cfg else None,
            discard=int(cfg.get("discard", 1000)),
        )
        dataset = dynamics.make_dataset(
            traj, cfg.get("noise_pct", default_noise), data_seed
        )
    path = out_dir / "dataset.csv"
    dynamics.save_dataset(dataset, path)
    _log(out_dir, "simulate_done", system=system, rows=dataset.series.data.shape[0])
    return path


def _load_dataset(cfg: dict, command: str) -> dynamics.Dataset:
    path = _require(cfg, "dataset", command)
    if not Path(path).exists():
        raise ConfigurationError(f"{command}: dataset file not found: {path}")
    return dynamics.load_dataset(path)


def run_train(cfg: dict, out_dir: Path, master_seed: int) -> None:
    """Train one model on an existing dataset; write checkpoint + histories."""
    dataset = _load_dataset(cfg, "train")
    train_cfg, m_dim = build_train_config(cfg)
    train_cfg = train_cfg.replace(seed=derive_seed(master_seed, "train"))
    mask = model.TopologyMask.full(m_dim)
    if "mask" in cfg:
        mask = model.load_mask(cfg["mask"])
    result = training.train(dataset, mask, train_cfg)
    model.save_checkpoint(result.best_params, mask, out_dir / "checkpoint.json")
    loss_lines = ["epoch,loss"] + [
        f"{e},{v!r}" for e, v in enumerate(result.loss_history)
    ]
    (out_dir / "loss_history.csv").write_text("\n".join(loss_lines) + "\n")
    eval_lines = ["epoch,d_stsp"] + [
        f"{e},{v!r}" for e, v in zip(result.eval_epochs, result.d_stsp_history)
    ]
    (out_dir / "eval_history.csv").write_text("\n".join(eval_lines) + "\n")
    report = metrics.evaluate_model(result.best_params, mask, dataset)
    rows = [
        metrics.RESULTS_HEADER,
        metrics.format_report_row("train", "none", report, result.best_epoch),
    ]
    (out_dir / "results.csv").write_text("\n".join(rows) + "\n")
    _log(out_dir, "train_done", best_d_stsp=result.best_d_stsp)


def _prune_cell(args):
    dataset_path, criterion, cfg_dict, out_str = args
    dataset = dynamics.load_dataset(dataset_path)
    train_cfg, m_dim = build_train_config(cfg_dict)
    schedule = pruning.PruneSchedule(**cfg_dict.get("schedule", {}))
    geo_cfg = pruning.GeometricScoreConfig(**cfg_dict.get("geo_eval", {}))
    trace = pruning.iterative_prune(
        dataset, train_cfg, criterion, schedule, m_dim, eval_cfg=geo_cfg
    )
    out_dir = Path(out_str)
    (out_dir / f"trace_{criterion}.csv").write_text(
        "\n".join(pruning.trace_csv_lines(trace)) + "\n"
    )
    mask_dir = out_dir / "masks"
    mask_dir.mkdir(exist_ok=True)
    for rec in trace.iterations:
        model.save_mask(rec.mask, mask_dir / f"{criterion}_iter{rec.iteration:02d}.mask")
    model.save_mask(trace.final_mask, mask_dir / f"{criterion}_final.mask")
    rows = []
    for rec in trace.iterations:
        if rec.report is not None:
            rows.append(
                metrics.format_report_row(
                    f"{criterion}:iter{rec.iteration}", criterion, rec.report, None
                )
            )
    return criterion, trace.status, rows


def run_prune(cfg: dict, out_dir: Path, master_seed: int, threads: int) -> None:
    """Iterative pruning for each configured criterion; shared seed/schedule."""
    _require(cfg, "dataset", "prune")
    criteria = cfg.get("criteria", list(pruning.CRITERIA))
    for c in criteria:
        if c not in pruning.CRITERIA:
            raise ConfigurationError(
                f"prune: unknown criterion {c!r}; valid: {pruning.CRITERIA}"
            )
    cfg = dict(cfg)
    cfg.setdefault("train", {})
    cfg["train"] = dict(cfg["train"])
    cfg["train"]["seed"] = derive_seed(master_seed, "prune-train")
    cells = [(cfg["dataset"], c, cfg, str(out_dir)) for c in criteria]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_prune_cell, cells))
    else:
        outcomes = [_prune_cell(c) for c in cells]
    rows = [metrics.RESULTS_HEADER]
    for criterion, status, cell_rows in outcomes:
        rows.extend(cell_rows)
        _log(out_dir, "prune_cell_done", criterion=criterion, status=status)
    (out_dir / "results.csv").write_text("\n".join(rows) + "\n")


def _topo_cell(args):
    dataset_path, kind, seed_idx, cfg_dict, master_seed, out_str = args
    dataset = dynamics.load_dataset(dataset_path)
    train_cfg, m_dim = build_train_config(cfg_dict)
    n_dim = dataset.series.data.shape[1]
    target = int(cfg_dict.get("target_entries", 300))
    g = graphs.generate_topology(
        kind,
        m_dim,
        derive_seed(master_seed, f"topo-mask:{kind}:{seed_idx}"),
        target_entries=target,
        p=cfg_dict.get("ws_p", 0.1),
        n_readout=n_dim,
    )
    mask = graphs.graph_to_mask(g)
    out_dir = Path(out_str)
    mask_dir = out_dir / "masks"
    mask_dir.mkdir(exist_ok=True)
    model.save_mask(mask, mask_dir / f"{kind}_seed{seed_idx}.mask")
    # training seed shared across topologies at a given seed index (paired design)
    cell_cfg = train_cfg.replace(seed=derive_seed(master_seed, f"topo-train:{seed_idx}"))
    try:
        result = training.train(dataset, mask, cell_cfg)
    except TrainingFailureError as exc:
        return kind, seed_idx, mask.n_active, None, None, f"failed@{exc.epoch}"
    report = metrics.evaluate_model(result.best_params, mask, dataset)
    return kind, seed_idx, mask.n_active, report, result.epoch_of_threshold, "ok"


def run_topo_train(cfg: dict, out_dir: Path, master_seed: int, threads: int) -> None:
    """Train topology-prior masks at matched nonzero-entry counts."""
    _require(cfg, "dataset", "topo-train")
    kinds = cfg.get("topologies", list(graphs.GENERATORS))
    for kind in kinds:
        if kind not in graphs.GENERATORS:
            raise ConfigurationError(
                f"topo-train: unknown topology {kind!r}; valid: {graphs.GENERATORS}"
            )
    n_seeds = int(cfg.get("n_seeds", 5))
    cells = [
        (cfg["dataset"], kind, s, cfg, master_seed, str(out_dir))
        for kind in kinds
        for s in range(n_seeds)
    ]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(_topo_cell, cells))
    else:
        outcomes = [_topo_cell(c) for c in cells]
    rows = [metrics.RESULTS_HEADER]
    epoch_rows = ["topology,seed,n_entries,epoch_of_threshold,d_stsp,status"]
    for kind, s, n_entries, report, epoch_thr, status in outcomes:
        _log(out_dir, "topo_cell_done", topology=kind, seed=s, status=status)
        if report is None:
            epoch_rows.append(f"{kind},{s},{n_entries},,,{status}")
            continue
        rows.append(
            metrics.format_report_row(f"{kind}:seed{s}", f"topo-{kind}", report, epoch_thr)
        )
        thr = "" if epoch_thr is None else str(epoch_thr)
        epoch_rows.append(
            f"{kind},{s},{n_entries},{thr},{report.d_stsp!r},{status}"
        )
    (out_dir / "results.csv").write_text("\n".join(rows) + "\n")
    (out_dir / "epoch_of_threshold.csv").write_text("\n".join(epoch_rows) + "\n")


def run_analyze(cfg: dict, out_dir: Path, master_seed: int) -> None:
    """Graph statistics for a list of mask files."""
    mask_paths = _require(cfg, "masks", "analyze")
    n_readout = int(cfg.get("n_readout", 0))
    rows = [graphs.GRAPH_STATS_HEADER]
    for path in mask_paths:
        mask = model.load_mask(path)
        g = graphs.mask_to_graph(mask)
        stats = graphs.graph_stats(
            g,
            n_random_refs=int(cfg.get("swi_refs", 10)),
            seed=derive_seed(master_seed, f"analyze:{Path(path).name}"),
            n_readout=n_readout,
        )
        rows.append(graphs.graph_stats_row(Path(path).stem, g, stats))
    (out_dir / "graph_stats.csv").write_text("\n".join(rows) + "\n")
    _log(out_dir, "analyze_done", n_masks=len(mask_paths))


def run_report(cfg: dict, out_dir: Path) -> None:
    """Aggregate results CSVs into per-criterion medians."""
    result_paths = _require(cfg, "results", "report")
    groups: dict[str, dict[str, list[float]]] = {}
    for path in result_paths:
        lines = Path(path).read_text().strip().splitlines()
        header = lines[0].split(",")
        for line in lines[1:]:
            vals = dict(zip(header, line.split(",")))
            grp = groups.setdefault(vals["criterion"], {"d_stsp": [], "d_hellinger": [], "pe20": []})
            for key in ("d_stsp", "d_hellinger", "pe20"):
                if vals.get(key):
                    grp[key].append(float(vals[key]))
    rows = ["criterion,n,median_d_stsp,median_d_hellinger,median_pe20"]
    for crit in sorted(groups):
        g = groups[crit]
        med = [
            repr(statistics.median(g[key])) if g[key] else ""
            for key in ("d_stsp", "d_hellinger", "pe20")
        ]
        rows.append(f"{crit},{len(g['d_stsp'])}," + ",".join(med))
    (out_dir / "summary.csv").write_text("\n".join(rows) + "\n")


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dsr-topo",
        description="Sparse PLRNN reconstruction, pruning, and topology experiments",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON experiment config")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out or cfg.get("out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    master_seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    (out_dir / "log.jsonl").write_text("")
    try:
        _write_snapshot(out_dir, cfg, args.command)
        if args.command == "simulate":
            run_simulate(cfg, out_dir, master_seed)
        elif args.command == "train":
            run_train(cfg, out_dir, master_seed)
        elif args.command == "prune":
            run_prune(cfg, out_dir, master_seed, args.threads)
        elif args.command == "topo-train":
            run_topo_train(cfg, out_dir, master_seed, args.threads)
        elif args.command == "analyze":
            run_analyze(cfg, out_dir, master_seed)
        else:
            run_report(cfg, out_dir)
    except DsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        _log(out_dir, "error", message=str(exc))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
