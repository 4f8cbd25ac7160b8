"""Command-line entry point: reproducible experiment recipes over the
generation, processing, training, and evaluation modules.

Exit codes: 0 success, 1 user/config error, 2 internal error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from . import pipeline as pipeline_ops
from .config import ExperimentConfig, load_config, write_resolved
from .data import DomainTag, read_dataset, write_dataset
from .diffusion import build_schedule, schedule_table
from .errors import ConfigError, DatasetError, GenerationError
from .evaluation import EvalReport, PolicyRunner, grid_eval
from .experiments import (
    alpha_sweep,
    budget_sweep,
    evaluate_battery,
    factor_ablation,
    generate_pool,
    grid_experiment,
    paper_budget_rows,
)
from .policy import load_policy, serialize_policy
from .training import finetune, pretrain
from .world import GRIPPER, HAND, default_catalog, embodiment_for, get_task, ood_scenarios

ROBOT_DIMS = (GRIPPER.state_dim, GRIPPER.action_dim)
HUMAN_DIMS = (HAND.state_dim, HAND.action_dim)

POOL_DIRS = {DomainTag.SIM: "sim", DomainTag.HUMAN: "human", DomainTag.REAL: "real"}


def _log(msg: str) -> None:
    print(msg, flush=True)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise ConfigError(f"missing {what}: {path} (run the producing command first)")
    return path


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out if args.out else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_resolved(cfg, out)
    return out


# ---------------------------------------------------------------------------
# commands

def cmd_generate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    counts = {
        DomainTag.SIM: cfg.counts.n_sim,
        DomainTag.HUMAN: cfg.counts.n_hum,
        DomainTag.REAL: cfg.counts.n_real,
    }
    for i, (domain, n) in enumerate(counts.items()):
        t0 = time.time()
        episodes = generate_pool(domain, cfg.world, n, cfg.seed * 3 + 11 + i, init=args.init)
        summary = write_dataset(episodes, out / POOL_DIRS[domain], ROBOT_DIMS, HUMAN_DIMS)
        _log(f"{domain.value}: wrote {summary['episodes']} episodes in {time.time() - t0:.0f}s")
    return 0


def cmd_pipeline(cfg: ExperimentConfig, args) -> int:
    src = _require(Path(args.data), "dataset directory")
    episodes = read_dataset(src)
    out = _out_dir(cfg, args)
    processed = []
    for ep in episodes:
        layout = embodiment_for(ep.domain).layout
        if args.stage == "resample":
            processed.append(pipeline_ops.resample(ep, args.hz, layout))
        elif args.stage == "prune":
            processed.append(
                pipeline_ops.prune_static(ep, cfg.world.prune_threshold, True, layout)
            )
        else:
            processed.append(pipeline_ops.relativize(ep, layout))
    summary = write_dataset(processed, out / src.name, ROBOT_DIMS, HUMAN_DIMS)
    _log(f"{args.stage}: {summary['episodes']} episodes -> {summary['path']}")
    return 0


def cmd_pretrain(cfg: ExperimentConfig, args) -> int:
    data = Path(args.data)
    sim_eps, hum_eps = [], []
    if cfg.pretrain.alpha < 1.0:
        sim_eps = read_dataset(_require(data / "sim", "sim dataset"))
    if cfg.pretrain.alpha > 0.0:
        hum_eps = read_dataset(_require(data / "human", "human dataset"))
    out = _out_dir(cfg, args)
    tcfg = dataclasses.replace(cfg.pretrain, seed=cfg.seed)
    result = pretrain(sim_eps, hum_eps, cfg.policy, tcfg, out_dir=out)
    (out / "schedule.tsv").write_text(schedule_table(build_schedule()))
    _log(f"pretrain done: final loss {result.log[-1]['loss_total']:.4f} -> {out}")
    return 0


def cmd_finetune(cfg: ExperimentConfig, args) -> int:
    real_eps = read_dataset(_require(Path(args.data) / "real", "real dataset"))
    pretrained = None
    if args.mode != "real_only":
        pretrained = load_policy(_require(Path(args.checkpoint), "pretraining checkpoint"))
    out = _out_dir(cfg, args)
    tcfg = dataclasses.replace(cfg.finetune, seed=cfg.seed)
    result = finetune(pretrained, real_eps, cfg.policy, tcfg, mode=args.mode, out_dir=out)
    _log(f"finetune [{args.mode}] done: final loss {result.log[-1]['loss_total']:.4f} -> {out}")
    return 0


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    bundle = load_policy(_require(Path(args.checkpoint), "policy checkpoint"))
    out = _out_dir(cfg, args)
    report = evaluate_battery(
        bundle, cfg.world, args.battery, cfg.eval.n_trials,
        base_seed=cfg.seed, rollout=cfg.eval.rollout,
    )
    report.save(out / f"report_{args.battery}.json")
    _log(f"{args.battery} battery: {report.summary_line()}")
    return 0


def cmd_ablate_factor(cfg: ExperimentConfig, args) -> int:
    from .experiments import build_pools

    out = _out_dir(cfg, args)
    pools = build_pools(cfg.world, cfg.counts, cfg.seed)
    factors = [args.factor] if args.factor != "all" else ["bg", "light", "dist", "obj"]
    for factor in factors:
        result = factor_ablation(
            factor, pools, cfg.world, cfg.policy, cfg.pretrain, cfg.finetune,
            cfg.eval.n_trials, cfg.seed, cache_dir=out / "cache", log=_log,
        )
        result.full.save(out / f"ablation_{factor}_full.json")
        result.without.save(out / f"ablation_{factor}_without.json")
        _log(
            f"factor {factor}: full SR {result.full.sr:.1f} vs "
            f"without SR {result.without.sr:.1f}"
        )
    return 0


def cmd_grid_eval(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    catalog = default_catalog()
    if args.checkpoint:
        bundle = load_policy(_require(Path(args.checkpoint), "policy checkpoint"))
        grid = grid_eval(
            PolicyRunner(bundle, rollout=cfg.eval.rollout),
            get_task(cfg.world.task),
            catalog.init_region("full"),
            catalog,
            ood_scenarios()[0][1],
            n_per_cell=cfg.eval.grid_n_per_cell,
            base_seed=cfg.seed,
            render_cfg=cfg.world.render_cfg,
        )
        results = {"checkpoint": [grid]}
    else:
        exp = grid_experiment(
            ["real_only", "simhum"], cfg.eval.seeds, cfg.world, cfg.counts,
            cfg.policy, cfg.pretrain, cfg.finetune, cfg.eval.grid_n_per_cell,
            cache_dir=out / "cache", log=_log,
        )
        results = exp.results
    rows = ["mode\tseed_idx\tseen_mean_pr\tunseen_mean_pr"]
    for mode, grids in results.items():
        for i, g in enumerate(grids):
            np.savetxt(out / f"grid_{mode}_{i}.tsv", g.heatmap, fmt="%.2f", delimiter="\t")
            rows.append(f"{mode}\t{i}\t{g.seen_mean():.2f}\t{g.unseen_mean():.2f}")
            if args.plot:
                _plot_heatmap(g.heatmap, out / f"grid_{mode}_{i}.png")
    (out / "grid_summary.tsv").write_text("\n".join(rows) + "\n")
    _log("\n".join(rows))
    return 0


ALPHA_SWEEP_HEADER = "alpha\tseed\tsr\tsr_se\tpr\tpr_se"


def cmd_sweep_alpha(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    alphas = cfg.eval.sweep_alphas
    results = alpha_sweep(
        alphas, cfg.eval.seeds, cfg.world, cfg.counts, cfg.policy,
        cfg.pretrain, cfg.finetune, cfg.eval.n_trials,
        cache_dir=out / "cache", log=_log,
    )
    rows = [ALPHA_SWEEP_HEADER]
    for alpha in alphas:
        for seed, rep in zip(cfg.eval.seeds, results[alpha]):
            rows.append(
                f"{alpha}\t{seed}\t{rep.sr:.2f}\t{rep.sr_se:.2f}\t{rep.pr:.2f}\t{rep.pr_se:.2f}"
            )
    (out / "alpha_sweep.tsv").write_text("\n".join(rows) + "\n")
    if args.plot:
        _plot_alpha_curve(results, alphas, out / "alpha_sweep.png")
    _log("\n".join(rows))
    return 0


def cmd_sweep_budget(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    rows_spec = paper_budget_rows(scale=cfg.eval.budget_scale)
    results = budget_sweep(
        rows_spec, cfg.eval.seeds, cfg.world, cfg.policy, cfg.pretrain,
        cfg.finetune, cfg.eval.n_trials, cache_dir=out / "cache", log=_log,
    )
    lines = ["label\tn_real\tn_sim\tn_hum\tmode\tmean_sr\tmean_pr"]
    for row in rows_spec:
        reps = results[row.label]
        lines.append(
            f"{row.label}\t{row.n_real}\t{row.n_sim}\t{row.n_hum}\t{row.mode}"
            f"\t{np.mean([r.sr for r in reps]):.2f}\t{np.mean([r.pr for r in reps]):.2f}"
        )
    (out / "budget_sweep.tsv").write_text("\n".join(lines) + "\n")
    _log("\n".join(lines))
    return 0


def cmd_report(cfg: ExperimentConfig, args) -> int:
    for path in args.reports:
        report = EvalReport.from_json(_require(Path(path), "report file").read_text())
        _log(f"{path}: {report.summary_line()}")
        for name, stats in sorted(report.per_scenario.items()):
            _log(f"  {name}: SR {stats['sr']:.1f} PR {stats['pr']:.1f} (n={stats['n']})")
    return 0


def _plot_heatmap(heatmap: np.ndarray, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(heatmap, cmap="viridis", vmin=0, vmax=100, origin="lower")
    for (r, c), v in np.ndenumerate(heatmap):
        ax.text(c, r, f"{v:.0f}", ha="center", va="center", color="white", fontsize=8)
    fig.colorbar(im, label="mean PR (%)")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


def _plot_alpha_curve(results, alphas, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    means = [np.mean([r.pr for r in results[a]]) for a in alphas]
    stds = [np.std([r.pr for r in results[a]]) for a in alphas]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.errorbar(alphas, means, yerr=stds, marker="o")
    ax.set_xlabel("human fraction per batch")
    ax.set_ylabel("OOD PR (%)")
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)


# ---------------------------------------------------------------------------
# argument wiring

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotrain")
    parser.add_argument("--config", help="layered key-value config file")
    parser.add_argument("--preset", choices=("paper", "desk", "smoke"))
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="dotted-path config override, repeatable",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate the three demonstration pools")
    p.add_argument("--init", default="full", help="init region id for all pools")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("pipeline", help="run one post-processing stage over a dataset")
    p.add_argument("stage", choices=("resample", "prune", "relativize"))
    p.add_argument("--data", required=True, help="source dataset directory")
    p.add_argument("--hz", type=float, default=10.0, help="target rate for resample")
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("pretrain", help="co-train on the sim and human pools")
    p.add_argument("--data", required=True, help="directory holding sim/ and human/ datasets")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="recombine and adapt on the real pool")
    p.add_argument("--data", required=True, help="directory holding the real/ dataset")
    p.add_argument("--checkpoint", help="pretraining checkpoint (not for real_only)")
    p.add_argument(
        "--mode", default="simhum", choices=("real_only", "sim_real", "hum_real", "simhum")
    )
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="run a scenario battery on a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--battery", default="ood", choices=("id", "ood"))
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate-factor", help="leave-one-factor-out paired training")
    p.add_argument("--factor", default="all", choices=("bg", "light", "dist", "obj", "all"))
    p.set_defaults(fn=cmd_ablate_factor)

    p = sub.add_parser("grid-eval", help="position-generalization grid")
    p.add_argument("--checkpoint", help="evaluate one checkpoint instead of training modes")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_grid_eval)

    p = sub.add_parser("sweep-alpha", help="co-training ratio sweep")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(fn=cmd_sweep_alpha)

    p = sub.add_parser("sweep-budget", help="collection-budget sweep")
    p.set_defaults(fn=cmd_sweep_budget)

    p = sub.add_parser("report", help="print stored evaluation reports")
    p.add_argument("reports", nargs="+")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = {}
        for item in args.set:
            if "=" not in item:
                raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
            key, value = item.split("=", 1)
            overrides[key.strip()] = value.strip()
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        cfg = load_config(args.config, args.preset, overrides)
        return args.fn(cfg, args)
    except (ConfigError, DatasetError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except GenerationError as e:
        print(f"generation error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
