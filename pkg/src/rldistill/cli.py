"""Experiment front-end.

Subcommands cover every workflow: ``distill``, ``eval``, ``rl-baseline``,
``random-baseline``, ``kmin-sweep``, ``encoder-rollback`` (distill with
``--split-layer``), ``export-view`` and ``cost-report``. Each run writes a
manifest first (resolved config, per-stage seeds, planned artifact paths),
then its artifacts atomically, then rewrites the manifest with timings and
counts. Artifacts other than the manifest are byte-reproducible from
(config, master seed); the manifest carries the volatile bookkeeping
(timestamps, measured timings).

Exit codes: 0 success, 2 config/usage error, 3 numerical failure,
4 distillation finished without beating the random baseline.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import config as config_mod
from . import distill as distill_mod
from . import evaluate as eval_mod
from . import ppo as ppo_mod
from . import reports
from . import rng as rng_mod
from .errors import ConfigError, ContractViolation, DatasetFormatError, NumericalFailure

MANIFEST_VERSION = 1

CURVE_HEADER = ["epoch", "mean_reward", "std_reward", "episodes", "transitions"]
DIAG_HEADER = ["epoch", "policy_loss", "critic_loss", "inner_lr"]
AGENTS_HEADER = ["agent", "mean_reward", "episodes"]
SUMMARY_HEADER = [
    "distribution", "agents", "episodes_per_agent",
    "mean_reward", "std_pooled", "std_agent_means", "source",
]
SWEEP_HEADER = [
    "k", "mean_reward", "std_reward", "converged", "did_not_learn",
    "predicted_kmin", "success", "error",
]
COST_HEADER = [
    "training_kind", "manifest", "time_per_iteration_s", "iterations",
    "total_time_s", "datapoints", "kshot_per_model_s", "break_even_models",
]


# ---------------------------------------------------------------------------
# manifest plumbing
# ---------------------------------------------------------------------------


class Manifest:
    def __init__(self, out_dir: str, subcommand: str, rc: config_mod.RunConfig):
        self.path = os.path.join(out_dir, "manifest.json")
        self.doc = {
            "format_version": MANIFEST_VERSION,
            "subcommand": subcommand,
            "created_unix": time.time(),
            "master_seed": rc.master_seed,
            "config": rc.to_dict(),
            "stage_seeds": {
                stage: rng_mod.stage_seed(rc.master_seed, stage)
                for stage in (
                    "dataset-init", "critic-init", "train-learners",
                    "eval", "rl-baseline", "random-baseline",
                )
            },
            "artifacts": {},
            "timings": {},
            "counts": {},
            "flags": {},
            "status": "running",
        }
        self.write()

    def artifact(self, name: str, path: str):
        self.doc["artifacts"][name] = path

    def finish(self, status="complete", **extra):
        self.doc.update(extra)
        self.doc["status"] = status
        self.write()

    def write(self):
        reports.atomic_write_text(self.path, json.dumps(self.doc, indent=2) + "\n")


def _write_curve(out_dir: str, curve, title: str, manifest: Manifest):
    csv_path = os.path.join(out_dir, "reward_curve.csv")
    rows = [[p.epoch, p.mean_reward, p.std_reward, p.episodes, p.transitions] for p in curve]
    reports.write_csv(csv_path, CURVE_HEADER, rows)
    png_path = os.path.join(out_dir, "reward_curve.png")
    reports.save_reward_curve_png(
        png_path,
        [p.epoch for p in curve], [p.mean_reward for p in curve], [p.std_reward for p in curve],
        title,
    )
    manifest.artifact("reward_curve_csv", csv_path)
    manifest.artifact("reward_curve_png", png_path)


def _write_eval_report(out_dir: str, report, source: str, manifest: Manifest, prefix="eval"):
    agents_csv = os.path.join(out_dir, f"{prefix}_agents.csv")
    reports.write_csv(
        agents_csv, AGENTS_HEADER,
        [[i, float(m), report.rewards.shape[1]] for i, m in enumerate(report.agent_means)],
    )
    summary_csv = os.path.join(out_dir, f"{prefix}_summary.csv")
    reports.write_csv(
        summary_csv, SUMMARY_HEADER,
        [[
            report.distribution_id, report.rewards.shape[0], report.rewards.shape[1],
            report.grand_mean, report.pooled_std, report.agent_mean_std, source,
        ]],
    )
    png = os.path.join(out_dir, f"{prefix}_agents.png")
    reports.save_eval_histogram_png(
        png, report.agent_means, f"{report.distribution_id}: {report.grand_mean:.1f} ± {report.pooled_std:.1f}"
    )
    manifest.artifact(f"{prefix}_agents_csv", agents_csv)
    manifest.artifact(f"{prefix}_summary_csv", summary_csv)
    manifest.artifact(f"{prefix}_agents_png", png)
    print(report.summary())


def _measure_kshot_timing(env_config, dataset, encoder, tanh_last) -> dict:
    """Measured per-model k-shot cost on this machine: sample + one-step
    train, and one evaluation episode for reference."""
    train_times, eval_times = [], []
    for draw in range(5):
        t0 = time.perf_counter()
        params = eval_mod.sample_eval_agent(
            "lambda", env_config, 987654321, draw, encoder, tanh_last
        )
        trained = eval_mod.train_on_synthetic(params, dataset, encoder, tanh_last)
        train_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        eval_mod.rollout_reward(env_config, trained, env_config.max_steps, draw, encoder, tanh_last)
        eval_times.append(time.perf_counter() - t0)
    return {
        "kshot_train_seconds_per_model": float(np.median(train_times)),
        "kshot_eval_seconds_per_episode": float(np.median(eval_times)),
    }


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _progress_printer(every=200):
    def cb(report):
        if report.epoch % every == 0:
            print(
                f"epoch {report.epoch:6d}  reward {report.mean_reward:7.2f}  "
                f"inner_lr {report.inner_lr:.4f}",
                flush=True,
            )
    return cb


def _run_distill(rc: config_mod.RunConfig, out_dir: str, require_split: bool, subcommand: str) -> int:
    env_config = rc.env_config()
    dcfg = rc.distill_config()
    split_layer = rc.split_layer()
    if require_split and split_layer is None:
        raise ConfigError("encoder-rollback requires distill.split_layer (or --split-layer)")
    manifest = Manifest(out_dir, subcommand, rc)
    t0 = time.perf_counter()
    if split_layer is None:
        lam = eval_mod.make_distribution(
            "lambda", env_config, base_seed=rng_mod.stage_seed(rc.master_seed, "train-learners")
        )
        dataset, report = distill_mod.distill(env_config, lam, dcfg, progress=_progress_printer())
        split = None
        encoder = None
    else:
        split = distill_mod.make_encoder_split(env_config, split_layer, seed=rc.master_seed)
        dataset, encoder, report = distill_mod.distill_with_encoder(
            env_config, split, dcfg, progress=_progress_printer()
        )
    total = time.perf_counter() - t0

    ds_path = os.path.join(out_dir, "dataset.json")
    reports.atomic_write_text(ds_path, distill_mod.dataset_to_text(dataset))
    manifest.artifact("dataset", ds_path)
    if split is not None and split.split_index > 0:
        trained_split = distill_mod.EncoderSplit(
            split.split_index, split.total_layers, encoder, split.learner_dist
        )
        enc_path = os.path.join(out_dir, "encoder.json")
        reports.atomic_write_text(enc_path, distill_mod.encoder_to_text(trained_split, env_config))
        manifest.artifact("encoder", enc_path)
    _write_curve(out_dir, report.curve, f"distillation (k={dataset.k})", manifest)
    diag_csv = os.path.join(out_dir, "distill_diagnostics.csv")
    reports.write_csv(
        diag_csv, DIAG_HEADER,
        [[p.epoch, p.policy_loss, p.critic_loss, p.inner_lr] for p in report.curve],
    )
    manifest.artifact("diagnostics_csv", diag_csv)

    transitions = int(sum(p.transitions for p in report.curve))
    timing = {
        "total_seconds": total,
        "seconds_per_meta_epoch": total / max(1, report.epochs_run),
    }
    timing.update(_measure_kshot_timing(
        env_config, dataset, encoder if (split and split.split_index > 0) else None,
        split.encoder_tanh_last if split else True,
    ))
    manifest.finish(
        timings=timing,
        counts={
            "meta_epochs": report.epochs_run,
            "transitions_total": transitions,
            "datapoints": transitions,
        },
        flags={
            "did_not_learn": report.did_not_learn,
            "stop_reason": report.stop_reason,
            "best_epoch": report.best_epoch,
            "best_window_reward": report.best_window_reward,
            "random_baseline_mean": report.random_baseline_mean,
            "split_layer": split_layer,
        },
    )
    print(
        f"distilled k={dataset.k} in {report.epochs_run} meta-epochs: "
        f"best window reward {report.best_window_reward:.1f} ({report.stop_reason})"
    )
    return 4 if report.did_not_learn else 0


def cmd_distill(args) -> int:
    rc = _load(args)
    out_dir = rc.out_dir
    return _run_distill(rc, out_dir, require_split=False, subcommand="distill")


def cmd_encoder_rollback(args) -> int:
    rc = _load(args)
    return _run_distill(rc, rc.out_dir, require_split=True, subcommand="encoder-rollback")


def cmd_eval(args) -> int:
    rc = _load(args)
    with open(args.dataset) as fh:
        dataset = distill_mod.dataset_from_text(fh.read())
    encoder = None
    tanh_last = True
    if args.encoder:
        with open(args.encoder) as fh:
            encoder, _, _, tanh_last = distill_mod.encoder_from_text(fh.read())
    out_dir = rc.out_dir
    manifest = Manifest(out_dir, "eval", rc)
    protocol = eval_mod.EvalProtocol(
        n_agents=int(rc["eval"]["agents"]),
        n_episodes=int(rc["eval"]["episodes"]),
        distribution=str(rc["eval"]["distribution"]),
        seed=rng_mod.stage_seed(rc.master_seed, "eval"),
    )
    t0 = time.perf_counter()
    report = eval_mod.kshot_eval(
        dataset, protocol, dataset.env, encoder=encoder,
        encoder_tanh_last=tanh_last, workers=rc.workers,
    )
    # the summary names the dataset by basename so reruns into different
    # directories stay byte-identical; the manifest records the full path
    manifest.doc["flags"]["dataset_path"] = args.dataset
    _write_eval_report(out_dir, report, source=os.path.basename(args.dataset), manifest=manifest)
    manifest.finish(
        timings={"total_seconds": time.perf_counter() - t0},
        counts={"agents": protocol.n_agents, "episodes": protocol.n_agents * protocol.n_episodes},
    )
    return 0


def cmd_rl_baseline(args) -> int:
    rc = _load(args)
    env_config = rc.env_config()
    hyper = rc.ppo_hyperparams()
    out_dir = rc.out_dir
    manifest = Manifest(out_dir, "rl-baseline", rc)
    seed = rng_mod.stage_seed(rc.master_seed, "rl-baseline")
    lam = eval_mod.make_distribution("lambda", env_config, base_seed=rng_mod.stage_seed(seed, "train-learners"))
    t0 = time.perf_counter()
    actor, critic, curve = ppo_mod.train_rl_baseline(
        env_config, lam, hyper,
        epochs=int(rc["rl"]["epochs"]),
        seed=seed,
        actor_lr=float(rc["rl"]["actor_lr"]),
        early_stop_reward=rc["rl"]["early_stop_reward"],
    )
    total = time.perf_counter() - t0
    _write_curve(out_dir, curve, "direct PPO baseline", manifest)

    eval_seed = rng_mod.stage_seed(rc.master_seed, "rl-final-eval")
    episodes = int(rc["eval"]["episodes"])
    rewards = np.array([
        eval_mod.rollout_reward(env_config, actor, env_config.max_steps, rng_mod.stage_seed(eval_seed, "episode", i))
        for i in range(episodes)
    ])
    final = eval_mod.EvalReport(rewards=rewards[None, :], distribution_id="rl-final-policy")
    _write_eval_report(out_dir, final, source="trained policy", manifest=manifest, prefix="final_eval")
    transitions = int(sum(p.transitions for p in curve))
    manifest.finish(
        timings={"total_seconds": total, "seconds_per_epoch": total / max(1, len(curve))},
        counts={"epochs": len(curve), "transitions_total": transitions, "datapoints": transitions},
        flags={"final_eval_mean": final.grand_mean},
    )
    print(f"baseline trained for {len(curve)} epochs; final eval mean {final.grand_mean:.1f}")
    return 0


def cmd_random_baseline(args) -> int:
    rc = _load(args)
    env_config = rc.env_config()
    if args.episodes is None:
        episodes = int(rc["eval"]["agents"]) * int(rc["eval"]["episodes"])
    else:
        episodes = args.episodes
    out_dir = rc.out_dir
    manifest = Manifest(out_dir, "random-baseline", rc)
    t0 = time.perf_counter()
    report = eval_mod.random_baseline(
        env_config, episodes, seed=rng_mod.stage_seed(rc.master_seed, "random-baseline")
    )
    summary_csv = os.path.join(out_dir, "eval_summary.csv")
    reports.write_csv(
        summary_csv, SUMMARY_HEADER,
        [[report.distribution_id, 1, episodes, report.grand_mean,
          report.pooled_std, 0.0, f"{env_config.n_dims}D uniform-random"]],
    )
    png = os.path.join(out_dir, "eval_rewards.png")
    reports.save_eval_histogram_png(
        png, report.rewards[0], f"uniform random on {env_config.n_dims}D: {report.grand_mean:.1f}"
    )
    manifest.artifact("eval_summary_csv", summary_csv)
    manifest.artifact("eval_rewards_png", png)
    manifest.finish(
        timings={"total_seconds": time.perf_counter() - t0},
        counts={"episodes": episodes},
    )
    print(report.summary())
    return 0


def cmd_kmin_sweep(args) -> int:
    rc = _load(args)
    env_config = rc.env_config()
    k_values = config_mod.parse_k_range(args.k_range or str(rc["kmin"]["k_range"]))
    success_reward = float(rc["kmin"]["success_reward"])
    out_dir = rc.out_dir
    manifest = Manifest(out_dir, "kmin-sweep", rc)
    predicted = distill_mod.min_dataset_size(env_config.action_count)
    rows = []
    means, stds = [], []
    for k in k_values:
        sub_dir = os.path.join(out_dir, f"k_{k}")
        os.makedirs(sub_dir, exist_ok=True)
        try:
            dcfg_k = dataclasses.replace(rc.distill_config(), k=k)
            lam = eval_mod.make_distribution(
                "lambda", env_config, base_seed=rng_mod.stage_seed(rc.master_seed, "train-learners")
            )
            dataset, report = distill_mod.distill(env_config, lam, dcfg_k, progress=_progress_printer(500))
            reports.atomic_write_text(
                os.path.join(sub_dir, "dataset.json"), distill_mod.dataset_to_text(dataset)
            )
            protocol = eval_mod.EvalProtocol(
                n_agents=int(rc["eval"]["agents"]), n_episodes=int(rc["eval"]["episodes"]),
                distribution="lambda", seed=rng_mod.stage_seed(rc.master_seed, "eval"),
            )
            result = eval_mod.kshot_eval(dataset, protocol, env_config, workers=rc.workers)
            mean, std = result.grand_mean, result.pooled_std
            rows.append([
                k, mean, std, report.stop_reason == "converged", report.did_not_learn,
                predicted, mean >= success_reward, "",
            ])
            means.append(mean)
            stds.append(std)
            print(f"k={k}: mean {mean:.1f} ± {std:.1f}")
        except NumericalFailure as exc:
            rows.append([k, 0.0, 0.0, False, True, predicted, False, str(exc)])
            means.append(0.0)
            stds.append(0.0)
    sweep_csv = os.path.join(out_dir, "kmin_sweep.csv")
    reports.write_csv(sweep_csv, SWEEP_HEADER, rows)
    png = os.path.join(out_dir, "kmin_sweep.png")
    reports.save_kmin_sweep_png(
        png, k_values, means, stds, predicted,
        f"{env_config.n_dims}D sweep (predicted minimum {predicted})",
    )
    manifest.artifact("kmin_sweep_csv", sweep_csv)
    manifest.artifact("kmin_sweep_png", png)
    manifest.finish(counts={"runs": len(k_values)})
    return 0


def cmd_export_view(args) -> int:
    rc = _load(args)
    with open(args.dataset) as fh:
        dataset = distill_mod.dataset_from_text(fh.read())
    out_dir = rc.out_dir
    manifest = Manifest(out_dir, "export-view", rc)
    header, rows = eval_mod.export_dataset_view(dataset)
    csv_path = os.path.join(out_dir, "dataset_view.csv")
    reports.write_csv(csv_path, header, rows)
    soft = np.array([row[-dataset.action_dim :] for row in rows])
    png = os.path.join(out_dir, "dataset_view.png")
    reports.save_dataset_view_png(
        png, dataset.states, dataset.labels, soft,
        f"k={dataset.k} distilled dataset",
    )
    manifest.artifact("dataset_view_csv", csv_path)
    manifest.artifact("dataset_view_png", png)
    manifest.finish()
    print(f"wrote {csv_path}")
    return 0


def cmd_cost_report(args) -> int:
    rc = _load(args)
    out_dir = rc.out_dir
    manifest = Manifest(out_dir, "cost-report", rc)
    docs = []
    for path in args.manifests:
        try:
            with open(path) as fh:
                docs.append((path, json.load(fh)))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
    rl_per_model: dict[int, float] = {}
    for path, doc in docs:
        if doc.get("subcommand") == "rl-baseline" and "total_seconds" in doc.get("timings", {}):
            n_dims = int(doc["config"]["env"]["n_dims"])
            rl_per_model[n_dims] = float(doc["timings"]["total_seconds"])
    rows = []
    labels, per_model = [], []
    for path, doc in docs:
        kind = doc.get("subcommand")
        timings = doc.get("timings", {})
        counts = doc.get("counts", {})
        if "total_seconds" not in timings:
            raise ConfigError(f"manifest {path} has no timing records")
        if kind == "rl-baseline":
            rows.append([
                "rl", path, timings.get("seconds_per_epoch", 0.0), counts.get("epochs", 0),
                timings["total_seconds"], counts.get("datapoints", 0), "", "",
            ])
            labels.append(f"rl {os.path.basename(os.path.dirname(path))}")
            per_model.append(timings["total_seconds"])
        elif kind in ("distill", "encoder-rollback"):
            kshot = float(timings.get("kshot_train_seconds_per_model", 0.0))
            n_dims = int(doc["config"]["env"]["n_dims"])
            break_even = ""
            if n_dims in rl_per_model and rl_per_model[n_dims] > kshot:
                break_even = max(0.0, timings["total_seconds"] / (rl_per_model[n_dims] - kshot))
            rows.append([
                kind, path, timings.get("seconds_per_meta_epoch", 0.0),
                counts.get("meta_epochs", 0), timings["total_seconds"],
                counts.get("datapoints", 0), kshot, break_even,
            ])
            labels.append(f"k-shot {os.path.basename(os.path.dirname(path))}")
            per_model.append(max(kshot, 1e-6))
        else:
            raise ConfigError(f"manifest {path} has unsupported subcommand {kind!r}")
    csv_path = os.path.join(out_dir, "cost_report.csv")
    reports.write_csv(csv_path, COST_HEADER, rows)
    png = os.path.join(out_dir, "cost_report.png")
    reports.save_cost_report_png(png, labels, per_model, "per-model training cost")
    manifest.artifact("cost_report_csv", csv_path)
    manifest.artifact("cost_report_png", png)
    manifest.finish(counts={"manifests": len(docs)})
    print(f"wrote {csv_path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _load(args) -> config_mod.RunConfig:
    overrides: dict[str, str] = {}
    for dotted, value in getattr(args, "overrides", None) or []:
        overrides[dotted] = value
    if getattr(args, "seed", None) is not None:
        overrides["run.master_seed"] = str(args.seed)
    if getattr(args, "out_dir", None) is not None:
        overrides["run.out_dir"] = args.out_dir
    if getattr(args, "workers", None) is not None:
        overrides["run.workers"] = str(args.workers)
    if getattr(args, "k", None) is not None:
        overrides["distill.k"] = str(args.k)
    if getattr(args, "meta_epochs", None) is not None:
        overrides["distill.meta_epoch_budget"] = str(args.meta_epochs)
    if getattr(args, "split_layer", None) is not None:
        overrides["distill.split_layer"] = str(args.split_layer)
    if getattr(args, "epochs", None) is not None and hasattr(args, "config"):
        overrides["rl.epochs"] = str(args.epochs)
    if getattr(args, "agents", None) is not None:
        overrides["eval.agents"] = str(args.agents)
    if getattr(args, "eval_episodes", None) is not None:
        overrides["eval.episodes"] = str(args.eval_episodes)
    if getattr(args, "distribution", None) is not None:
        overrides["eval.distribution"] = args.distribution
    path = getattr(args, "config", None)
    return config_mod.load_config(path, overrides)


def _add_common(sub, config_positional=True):
    if config_positional:
        sub.add_argument("config", nargs="?", default=None, help="config file (key=value sections)")
    sub.add_argument("--seed", type=int, default=None, help="master seed (overrides run.master_seed)")
    sub.add_argument("--out-dir", default=None, help="artifact directory (overrides run.out_dir)")
    sub.add_argument("--workers", type=int, default=None, help="parallel evaluation workers")
    sub.add_argument(
        "--set", dest="overrides", action="append", nargs=2, metavar=("SECTION.KEY", "VALUE"),
        help="override any config field",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rldistill",
        description="Distill N-dimensional cart-pole into single-batch supervised datasets.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("distill", help="train a synthetic dataset against the environment")
    _add_common(p)
    p.add_argument("--k", type=int, default=None, help="synthetic instance count")
    p.add_argument("--meta-epochs", type=int, default=None, help="meta-epoch budget")
    p.add_argument("--split-layer", type=int, default=None, help="encoder split point (0 = none)")
    p.set_defaults(func=cmd_distill)

    p = subs.add_parser("encoder-rollback", help="distill behind a persistent encoder split")
    _add_common(p)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--meta-epochs", type=int, default=None)
    p.add_argument("--split-layer", type=int, default=None, required=False)
    p.set_defaults(func=cmd_encoder_rollback)

    p = subs.add_parser("eval", help="k-shot evaluate a dataset file")
    p.add_argument("dataset", help="dataset file produced by distill")
    p.add_argument("--distribution", default=None, choices=eval_mod.VARIANTS)
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--episodes", dest="eval_episodes", type=int, default=None)
    p.add_argument("--encoder", default=None, help="encoder file for split-trained datasets")
    p.add_argument("--config", default=None)
    _add_common(p, config_positional=False)
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("rl-baseline", help="train PPO directly on the environment")
    _add_common(p)
    p.add_argument("--epochs", type=int, default=None)
    p.set_defaults(func=cmd_rl_baseline)

    p = subs.add_parser("random-baseline", help="uniform-random agent reward levels")
    _add_common(p)
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(func=cmd_random_baseline)

    p = subs.add_parser("kmin-sweep", help="distill across a range of k and evaluate each")
    _add_common(p)
    p.add_argument("--k-range", default=None, help="inclusive LO:HI or comma list")
    p.set_defaults(func=cmd_kmin_sweep)

    p = subs.add_parser("export-view", help="tabular + figure view of a dataset file")
    p.add_argument("dataset")
    p.add_argument("--config", default=None)
    _add_common(p, config_positional=False)
    p.set_defaults(func=cmd_export_view)

    p = subs.add_parser("cost-report", help="cost accounting across run manifests")
    p.add_argument("manifests", nargs="+", help="manifest.json paths from previous runs")
    p.add_argument("--config", default=None)
    _add_common(p, config_positional=False)
    p.set_defaults(func=cmd_cost_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetFormatError, ContractViolation) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
