"""Command-line entry points.

Subcommands: gen-bank, pretrain, train, eval, sweep, heatmap, trace.
Every run writes a manifest (config + digest + seeds) next to its
outputs; failures exit nonzero with a machine-readable error record on
stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np
import torch

from .. import bank as bank_mod
from .. import nncore
from ..agents import JointConfig, PPOConfig, joint_train
from ..bank import ConfigurationError
from ..training import (PretrainConfig, pretrain_passive, sample_static_dataset,
                        save_dataset_manifest)
from .config import ExperimentConfig
from .evaluate import evaluate_agent, write_manifest
from .sweeps import run_heatmap, run_sweep, run_trace
from .workbench import (EpisodeSampler, build_bank, build_models, build_scene_pool,
                        load_models, save_models)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    overrides = {}
    if getattr(args, "agent", None):
        overrides["agent"] = args.agent
    if getattr(args, "episodes", None):
        overrides["episodes"] = args.episodes
    if getattr(args, "preset", None):
        overrides["preset"] = args.preset
    if getattr(args, "seed", None) is not None:
        overrides["seeds"] = (args.seed,)
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    return cfg.validate()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_bank(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sound_bank = build_bank(cfg)
    bank_mod.save_bank(sound_bank, out)
    write_manifest(out / "run_manifest.json", cfg, {"command": "gen-bank"})
    print(f"wrote {len(sound_bank.clips)} clips to {out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    torch.manual_seed(cfg.seeds[0])
    sound_bank = build_bank(cfg)
    scenes = build_scene_pool(cfg)
    rng = np.random.default_rng(cfg.seeds[0])
    pcfg = PretrainConfig(n_train=cfg.pretrain_examples,
                          n_val=max(50, cfg.pretrain_examples // 8),
                          max_updates=cfg.pretrain_updates, seed=cfg.seeds[0])
    train = sample_static_dataset(sound_bank, scenes, pcfg.n_train, rng, split="train")
    val = sample_static_dataset(sound_bank, scenes, pcfg.n_val, rng, split="val")
    separator, _ = build_models(cfg, with_memory=False)
    history_path = out / "pretrain_log.csv"
    with open(history_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["update", "train_loss", "val_loss"])
        writer.writeheader()
        result = pretrain_passive(separator.passive, train, val, pcfg,
                                  log=lambda row: (writer.writerow(row), f.flush()))
    nncore.save_checkpoint(out / "passive.ckpt", separator.passive,
                           {"val_loss": result["val_loss"], "preset": cfg.preset})
    save_dataset_manifest(train, out / "pretrain_dataset.json")
    write_manifest(out / "run_manifest.json", cfg,
                   {"command": "pretrain", "val_loss": result["val_loss"]})
    print(f"pretrained passive separator: val loss {result['val_loss']:.4f} "
          f"after {result['updates']} updates")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    sound_bank = build_bank(cfg)
    scenes = build_scene_pool(cfg)
    separator, policy = build_models(cfg)
    nncore.load_checkpoint(Path(args.models) / "passive.ckpt", separator.passive)
    for p in separator.passive.parameters():
        p.requires_grad_(False)
    sampler = EpisodeSampler(cfg, sound_bank, scenes, seed=cfg.seeds[0], split="train")
    reward_kind = "novelty" if cfg.agent == "novelty-policy" else "separation"
    jcfg = JointConfig(alternations=cfg.alternations,
                       episodes_per_update=cfg.episodes_per_update,
                       reward_kind=reward_kind, seed=cfg.seeds[0])
    log_path = out / "train_log.csv"
    fieldnames = ["update", "mean_reward", "collisions", "memory_loss",
                  "policy_loss", "value_loss", "entropy", "mean_ratio"]
    with open(log_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        joint_train(sampler, separator, policy, jcfg,
                    log=lambda row: (writer.writerow(row), f.flush()))
    save_models(out, separator, policy, {"preset": cfg.preset, "agent": cfg.agent})
    write_manifest(out / "run_manifest.json", cfg, {"command": "train"})
    print(f"trained {cfg.agent} for {cfg.alternations} alternations -> {out}")
    return 0


def _load_eval_models(args, cfg):
    separator, policy = load_models(Path(args.models), cfg)
    if cfg.agent in ("policy", "novelty-policy"):
        return separator, policy
    return separator, None


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    separator, policy = _load_eval_models(args, cfg)
    sound_bank = build_bank(cfg)
    scenes = build_scene_pool(cfg)
    specs = {seed: [EpisodeSampler(cfg, sound_bank, scenes, seed=seed).spec()
                    for _ in range(cfg.episodes)]
             for seed in cfg.seeds}
    report = evaluate_agent(cfg, separator, policy, specs)
    report.write_csv(out / "eval.csv")
    write_manifest(out / "run_manifest.json", cfg, {
        "command": "eval", "mean_si_sdr": report.mean_si_sdr,
        "mean_stft_distance": report.mean_stft_distance,
        "failures": report.failures})
    print(f"{cfg.agent}: SI-SDR {report.mean_si_sdr:.3f} dB, "
          f"STFT distance {report.mean_stft_distance:.4f} "
          f"({len(report.results)} episodes)")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    separator, policy = _load_eval_models(args, cfg)
    sound_bank = build_bank(cfg)
    scenes = build_scene_pool(cfg)
    values = [json.loads(v) for v in args.values.split(",")]
    rows = run_sweep(cfg, separator, policy, sound_bank, scenes,
                     args.param, values, out / "sweep.csv")
    write_manifest(out / "run_manifest.json", cfg,
                   {"command": "sweep", "param": args.param, "values": values})
    for row in rows:
        print(f"{args.param}={row['value']}: SI-SDR {row['mean_si_sdr']}")
    return 0


def cmd_heatmap(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    separator, _ = _load_eval_models(args, cfg)
    sound_bank = build_bank(cfg)
    scenes = build_scene_pool(cfg)
    rows = run_heatmap(cfg, separator, sound_bank, scenes, out / "heatmap.csv",
                       seed=cfg.seeds[0])
    write_manifest(out / "run_manifest.json", cfg, {"command": "heatmap"})
    print(f"heatmap over {len(rows)} poses -> {out / 'heatmap.csv'}")
    return 0


def cmd_trace(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    separator, policy = _load_eval_models(args, cfg)
    sound_bank = build_bank(cfg)
    scenes = build_scene_pool(cfg)
    run_trace(cfg, separator, policy, sound_bank, scenes, out / "trace.jsonl",
              seed=cfg.seeds[0])
    write_manifest(out / "run_manifest.json", cfg, {"command": "trace"})
    print(f"trace -> {out / 'trace.jsonl'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dynsep",
        description="Active audio-visual dynamic-source separation workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, models=False):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--preset", choices=["tiny", "paper"], default=None)
        if models:
            p.add_argument("--models", required=True, help="checkpoint directory")

    p = sub.add_parser("gen-bank", help="build and export the sound bank")
    common(p)
    p.set_defaults(func=cmd_gen_bank)

    p = sub.add_parser("pretrain", help="pretrain the passive separator")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="joint-train memory and motion policy")
    common(p, models=True)
    p.add_argument("--agent", choices=["policy", "novelty-policy"], default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate an agent on test episodes")
    common(p, models=True)
    p.add_argument("--agent", default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="vary one parameter, one CSV row per value")
    common(p, models=True)
    p.add_argument("--agent", default=None)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated JSON values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("heatmap", help="separation quality at every free cell")
    common(p, models=True)
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("trace", help="export one episode trajectory as JSONL")
    common(p, models=True)
    p.add_argument("--agent", default=None)
    p.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, FileNotFoundError, ValueError) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
