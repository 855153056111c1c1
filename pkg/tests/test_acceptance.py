"""End-to-end acceptance checks for the whole workbench.

Each test covers one numbered acceptance criterion at its stated tolerance
and prints exactly one PASS/FAIL line (bypassing capture) so the criterion
outcomes are visible in any run log.
"""

from __future__ import annotations

import copy
import json
import sys
import time

import numpy as np
import pytest
import torch
import torch.nn as nn

from dynsep import acoustics, dsp, metrics, nncore
from dynsep.acoustics import AgentPose, GridScene, compute_rir, geodesic_distance, mix, spatialize
from dynsep.agents import (JointConfig, PolicyNet, ScriptedAgent, collect_episode,
                           joint_train)
from dynsep.agents.baselines import NoveltyCounter, novelty_reward
from dynsep.agents.joint import compute_reward
from dynsep.envs import Action, Episode, sample_episode
from dynsep.harness import ExperimentConfig, evaluate_agent
from dynsep.harness.cli import main as cli_main
from dynsep.harness.workbench import EpisodeSampler
from dynsep.nncore import (PreNormSelfAttention, conv2d, fully_connected, grad_check,
                           gru, transpose_conv2d)
from dynsep.separator import (DynamicSeparator, PassiveSeparator, TransformerMemory,
                              passive_loss, transformer_loss)
from dynsep.training import (PretrainConfig, StaticDataset, pretrain_passive,
                             sample_static_dataset)

from conftest import episode_config

SEEDS = (0, 1, 2)

# tiny end-to-end benchmark shared by criteria 9-11
BENCH = dict(voice_categories=1, music_categories=1, background_categories=0,
             clips_per_category=5, scene_seeds=(3, 11), budget=10, episodes=12,
             agent="stand", refine_horizon=14)
JOINT_ALTERNATIONS = 40
JOINT_EPISODES_PER_UPDATE = 2
MEMORY_LR = 1e-3


def report(num: int, name: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    line = f"[acceptance] criterion {num:2d} {status} {name}"
    if detail:
        line += f" ({detail})"
    print(line, file=sys.__stdout__, flush=True)
    return ok


def open_scene(h=20, w=20):
    return GridScene(occupancy=np.zeros((h, w), dtype=bool),
                     absorption=np.zeros((h, w)), seed=0)


def direct_gains(rir):
    return rir.left[0][1], rir.right[0][1]


# --------------------------------------------------------------------------
# 1. DSP suite
# --------------------------------------------------------------------------

def test_criterion_01_dsp():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(100):
        x = rng.standard_normal(dsp.SEGMENT_SAMPLES).astype(np.float32)
        y = dsp.istft(dsp.stft(x))
        worst = max(worst, float(np.linalg.norm(y - x) / np.linalg.norm(x)))

    n = np.arange(dsp.SEGMENT_SAMPLES)
    tone = np.sin(2 * np.pi * 250.0 * n / dsp.SAMPLE_RATE).astype(np.float32)
    mag = np.abs(dsp.stft(tone))
    peak_ok = int(np.argmax(mag.mean(axis=1))) == 16

    spec = rng.standard_normal((512, 32, 2)).astype(np.float32)
    bijective = np.array_equal(dsp.unslice_reshape(dsp.slice_reshape(spec)), spec)

    elapsed = time.monotonic() - t0
    ok = worst < 1e-3 and peak_ok and bijective and elapsed < 10.0
    assert report(1, "dsp round-trip / tone bin / slice bijectivity", ok,
                  f"worst rel L2 {worst:.2e}, peak@16 {peak_ok}, "
                  f"bijective {bijective}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 2. Metric suite
# --------------------------------------------------------------------------

def test_criterion_02_metrics():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    s = rng.standard_normal(16000).astype(np.float32)
    clamp_hi = metrics.si_sdr(s, s) == 60.0 and metrics.si_sdr(2 * s, s) == 60.0
    t = np.zeros(4, np.float32)
    t[0] = 1.0
    u = np.zeros(4, np.float32)
    u[1] = 1.0
    clamp_lo = metrics.si_sdr(u, t) == -60.0
    d = metrics.stft_distance(np.full((512, 32, 1), 0.1, np.float32),
                              np.zeros((512, 32, 1), np.float32))
    uniform_ok = abs(d - 12.8) < 1e-4
    elapsed = time.monotonic() - t0
    ok = clamp_hi and clamp_lo and uniform_ok and elapsed < 5.0
    assert report(2, "metric clamps and closed form", ok,
                  f"uniform {d:.6f}, {elapsed:.2f}s")


# --------------------------------------------------------------------------
# 3. Gradient suite
# --------------------------------------------------------------------------

class _GruUnroll(nn.Module):
    def __init__(self):
        super().__init__()
        self.cell = gru(6, 8)

    def forward(self, x):
        out, _ = self.cell(x)
        return out


def test_criterion_03_gradients():
    t0 = time.monotonic()
    worst = 0.0
    for seed in SEEDS:
        torch.manual_seed(seed)
        layers = [
            (fully_connected(5, 4), (torch.randn(3, 5),)),
            (conv2d(2, 3, kernel=3, stride=1, padding=1), (torch.randn(1, 2, 5, 5),)),
            (transpose_conv2d(2, 2, kernel=2, stride=2, padding=0),
             (torch.randn(1, 2, 4, 4),)),
            (_GruUnroll(), (torch.randn(5, 1, 6),)),
            (PreNormSelfAttention(8, 2, 16), (torch.randn(3, 1, 8),)),
            (nn.LayerNorm(6), (torch.randn(4, 6),)),
        ]
        for module, inputs in layers:
            worst = max(worst, grad_check(module, inputs).max_rel_error)
    elapsed = time.monotonic() - t0
    ok = worst < 1e-3 and elapsed < 120.0
    assert report(3, "finite-difference gradient checks", ok,
                  f"max rel err {worst:.2e} over {len(SEEDS)} seeds, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 4. Acoustics suite
# --------------------------------------------------------------------------

def test_criterion_04_acoustics():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)
    a = rng.standard_normal(16000).astype(np.float32)
    b = rng.standard_normal(16000).astype(np.float32)
    rir = compute_rir(open_scene(), (10, 5), AgentPose((10, 10), 0))
    linear = float(np.max(np.abs(
        spatialize(a + b, rir) - (spatialize(a, rir) + spatialize(b, rir)))))

    pose = AgentPose((10, 2), 90)
    near = direct_gains(compute_rir(open_scene(), (10, 4), pose, reverb=False))[0]
    far = direct_gains(compute_rir(open_scene(), (10, 6), pose, reverb=False))[0]
    halving = abs(near / far - 2.0)

    gains = []
    for n_walls in range(3):
        scene = open_scene()
        for i in range(n_walls):
            scene.occupancy[10, 4 + i] = True
        gains.append(direct_gains(compute_rir(scene, (10, 8), pose, reverb=False))[0])
    occlusion_ok = gains[0] > gains[1] > gains[2]

    front = AgentPose((10, 10), 0)
    gl_l, gr_l = direct_gains(compute_rir(open_scene(), (10, 5), front, reverb=False))
    gl_r, gr_r = direct_gains(compute_rir(open_scene(), (10, 15), front, reverb=False))
    ild_ok = (gl_l > gr_l and gr_r > gl_r
              and abs(gl_l - gr_r) < 1e-9 and abs(gr_l - gl_r) < 1e-9)

    elapsed = time.monotonic() - t0
    ok = linear < 1e-6 and halving < 1e-9 and occlusion_ok and ild_ok and elapsed < 10
    assert report(4, "mixing linearity / 1-over-r / occlusion / ILD swap", ok,
                  f"linearity {linear:.1e}, halving err {halving:.1e}, {elapsed:.1f}s")


# --------------------------------------------------------------------------
# 5. Loss/reward closed forms
# --------------------------------------------------------------------------

def test_criterion_05_losses():
    rng = np.random.default_rng(0)
    b = torch.rand(2, 32, 32, 32)
    m = torch.rand(2, 32, 32, 16)
    eq1 = abs(float(passive_loss(b + 0.1, b, m, m)) - 0.1) < 1e-6

    truth = torch.rand(15, 32, 32, 16)
    eq2 = abs(float(transformer_loss(truth + 0.25, truth)) - 0.25) < 1e-6

    x = rng.random((32, 32, 16)).astype(np.float32)
    eq3 = abs(compute_reward(x + 0.2, x) - (-0.2)) < 1e-6

    counter = NoveltyCounter()
    first = novelty_reward(counter, (3, 3))
    for _ in range(2):
        novelty_reward(counter, (3, 3))
    fourth = novelty_reward(counter, (3, 3))
    novelty_ok = abs(first - 1.0) < 1e-6 and abs(fourth - 0.5) < 1e-6

    ok = eq1 and eq2 and eq3 and novelty_ok
    assert report(5, "loss and reward closed forms", ok,
                  f"eq1 {eq1}, eq2 {eq2}, eq3 {eq3}, novelty {novelty_ok}")


# --------------------------------------------------------------------------
# 6. Oracle equivalence (ideal ratio mask + learned passive on a toy bank)
# --------------------------------------------------------------------------

def _toy_dataset(n, rng, scale=0.2):
    """Two categories with disjoint frequency-slice support; both ears equal."""
    mixes, binos, monos, labels = [], [], [], []
    for _ in range(n):
        m1 = np.zeros((32, 32, 16), np.float32)
        m2 = np.zeros((32, 32, 16), np.float32)
        m1[:, :, :8] = rng.random((32, 32, 8)) * scale
        m2[:, :, 8:] = rng.random((32, 32, 8)) * scale
        b1 = np.concatenate([m1, m1], 2)
        b2 = np.concatenate([m2, m2], 2)
        lab = int(rng.integers(1, 3))
        tgt_b, tgt_m = (b1, m1) if lab == 1 else (b2, m2)
        mixes.append(b1 + b2)
        binos.append(tgt_b)
        monos.append(tgt_m)
        labels.append(lab)
    return StaticDataset(np.stack(mixes), np.stack(binos), np.stack(monos),
                         np.array(labels, np.float32))


def test_criterion_06_oracle_equivalence():
    t0 = time.monotonic()
    rng = np.random.default_rng(0)

    # ideal-ratio-mask arithmetic on disjoint-support mixtures is exact
    worst = 0.0
    for _ in range(20):
        data = _toy_dataset(1, rng)
        mix_mag, target = data.mix_mag[0], data.binaural[0]
        mask = np.divide(target, mix_mag, out=np.zeros_like(target),
                         where=mix_mag > 0)
        worst = max(worst, metrics.stft_distance(mask * mix_mag, target))
    oracle_ok = worst < 1e-6

    # learned passive approaches the oracle's (zero) validation loss
    train = _toy_dataset(400, rng)
    val = _toy_dataset(64, rng)
    model = PassiveSeparator("tiny")
    torch.manual_seed(0)
    result = pretrain_passive(model, train, val,
                              PretrainConfig(max_updates=1500, eval_every=100,
                                             patience=20, seed=0))
    elapsed = time.monotonic() - t0
    learned_ok = result["val_loss"] < 0.05 and result["updates"] <= 2000
    ok = oracle_ok and learned_ok and elapsed < 900.0
    assert report(6, "ideal-mask oracle + learned passive", ok,
                  f"oracle err {worst:.1e}, val loss {result['val_loss']:.4f} "
                  f"after {result['updates']} updates, {elapsed:.0f}s")


# --------------------------------------------------------------------------
# 7 & 8. Multi-step refinement and memory-length effect on a synthetic task
# --------------------------------------------------------------------------

CORR_STEPS = 16


def _correlated_episode(rng, noise=0.3):
    """Slowly modulated target with noisy per-step initial estimates."""
    base = rng.random((32, 32, 16)).astype(np.float32) * 0.5
    phase = rng.random() * 2 * np.pi
    truths, inits = [], []
    for t in range(CORR_STEPS):
        tr = base * (1.0 + 0.3 * np.sin(2 * np.pi * t / CORR_STEPS + phase))
        truths.append(tr.astype(np.float32))
        inits.append(np.clip(tr + rng.normal(0, noise, tr.shape),
                             0, None).astype(np.float32))
    return np.stack(inits), np.stack(truths)


@pytest.fixture(scope="module")
def correlated_task_stats():
    stats = {"train_time": 0.0}
    t0 = time.monotonic()
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        torch.manual_seed(seed)
        mem = TransformerMemory("tiny", refine_horizon=14)
        params = [p for p in mem.parameters() if p.requires_grad]
        adam = nncore.adam_state(params)
        for _ in range(300):
            ini, tru = _correlated_episode(rng)
            refined = mem(torch.from_numpy(ini), torch.arange(CORR_STEPS))
            n = refined.shape[0]
            loss = transformer_loss(refined, torch.from_numpy(tru[-n:]))
            mem.zero_grad()
            loss.backward()
            nncore.adam_step(params, [p.grad for p in params], 1e-3, adam)

        held = np.random.default_rng(10_000 + seed)
        ref_err, init_err, first1, first15 = [], [], [], []
        with torch.no_grad():
            for _ in range(100):
                ini, tru = _correlated_episode(held)
                out = mem(torch.from_numpy(ini), torch.arange(CORR_STEPS)).numpy()
                n = out.shape[0]
                ref_err.append(np.mean(np.abs(out[:-1] - tru[-n:-1])))
                init_err.append(np.mean(np.abs(ini[-n:-1] - tru[-n:-1])))
                o1 = mem(torch.from_numpy(ini[:2]), torch.arange(2)).numpy()[-1]
                first1.append(np.mean(np.abs(o1 - tru[1])))
                o15 = mem(torch.from_numpy(ini[:16]), torch.arange(16)).numpy()[-1]
                first15.append(np.mean(np.abs(o15 - tru[15])))
        stats[seed] = {"refined": float(np.mean(ref_err)),
                       "initial": float(np.mean(init_err)),
                       "first1": float(np.mean(first1)),
                       "first15": float(np.mean(first15))}
    stats["train_time"] = time.monotonic() - t0
    return stats


def test_criterion_07_refinement_beats_initial(correlated_task_stats):
    s = correlated_task_stats
    refined = float(np.median([s[i]["refined"] for i in SEEDS]))
    initial = float(np.median([s[i]["initial"] for i in SEEDS]))
    elapsed = s["train_time"]
    ok = refined < initial and elapsed < 1200.0
    assert report(7, "trained memory refines past estimates", ok,
                  f"refined {refined:.4f} < initial {initial:.4f}, "
                  f"100 held-out episodes x {len(SEEDS)} seeds, {elapsed:.0f}s")


def test_criterion_08_memory_length_effect(correlated_task_stats):
    s = correlated_task_stats
    late = float(np.median([s[i]["first15"] for i in SEEDS]))
    early = float(np.median([s[i]["first1"] for i in SEEDS]))
    ok = late <= early
    assert report(8, "fuller memory improves first estimates", ok,
                  f"step-15 err {late:.4f} <= step-1 err {early:.4f}")


# --------------------------------------------------------------------------
# 9-11. Tiny end-to-end benchmark (shared joint training per seed)
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def bench_trained(bench_bank, bench_scenes, bench_passive):
    """Joint-trained separator+policy per seed, plus the training wall time."""
    t0 = time.monotonic()
    trained = {}
    for seed in SEEDS:
        torch.manual_seed(100 + seed)
        memory = TransformerMemory("tiny", refine_horizon=BENCH["refine_horizon"])
        separator = DynamicSeparator(copy.deepcopy(bench_passive), memory,
                                     memory_size=19)
        for p in separator.passive.parameters():
            p.requires_grad_(False)
        policy = PolicyNet("tiny")
        cfg = ExperimentConfig(**{**BENCH, "seeds": (seed,)}).validate()
        sampler = EpisodeSampler(cfg, bench_bank, bench_scenes,
                                 seed=1000 + seed, split="train")
        joint_train(sampler, separator, policy,
                    JointConfig(alternations=JOINT_ALTERNATIONS,
                                episodes_per_update=JOINT_EPISODES_PER_UPDATE,
                                memory_lr=MEMORY_LR, seed=seed))
        trained[seed] = (separator, policy)
    return trained, time.monotonic() - t0


@pytest.fixture(scope="module")
def bench_specs(bench_bank, bench_scenes):
    def make(seed, **overrides):
        cfg = ExperimentConfig(**{**BENCH, "seeds": (seed,), **overrides}).validate()
        sampler = EpisodeSampler(cfg, bench_bank, bench_scenes, seed=seed)
        return cfg, {seed: [sampler.spec() for _ in range(cfg.episodes)]}
    return make


def test_criterion_09_ablation_direction(bench_trained, bench_specs):
    trained, train_time = bench_trained
    t0 = time.monotonic()
    full, e0, nomem = [], [], []
    for seed in SEEDS:
        separator, _ = trained[seed]
        cfg, specs = bench_specs(seed)
        full.append(evaluate_agent(cfg, separator, None, specs).mean_si_sdr)
        separator.memory.refine_horizon = 0
        e0.append(evaluate_agent(cfg, separator, None, specs).mean_si_sdr)
        separator.memory.refine_horizon = BENCH["refine_horizon"]
        passive_only = DynamicSeparator(separator.passive, None, memory_size=19)
        nomem.append(evaluate_agent(cfg, passive_only, None, specs).mean_si_sdr)
    med_full = float(np.median(full))
    med_e0 = float(np.median(e0))
    med_nomem = float(np.median(nomem))
    elapsed = train_time + (time.monotonic() - t0)
    ok = med_full >= med_nomem and med_full >= med_e0 and elapsed < 7200.0
    assert report(9, "full model beats no-memory and horizon-0 ablations", ok,
                  f"SI-SDR full {med_full:.3f} vs E=0 {med_e0:.3f} vs "
                  f"no-memory {med_nomem:.3f}, {elapsed:.0f}s incl. training")


def _stand_mean_reward(spec, separator):
    ep = Episode(spec, training=True)
    obs = ep.reset()
    separator.reset()
    separator.observe(obs.mix_mag, obs.target_label, obs.step)
    rewards = []
    while not ep.done:
        result = ep.step(Action.NO_OP)
        obs = result.observation
        _, m_est = separator.observe(obs.mix_mag, obs.target_label, obs.step)
        rewards.append(compute_reward(m_est, result.ground_truth["monaural_mag"]))
    return float(np.mean(rewards))


def test_criterion_10_policy_and_baseline_contracts(bench_trained, bench_specs,
                                                    bench_bank, bench_scenes):
    trained, _ = bench_trained
    policy_r, stand_r = [], []
    for seed in SEEDS:
        separator, policy = trained[seed]
        _, specs = bench_specs(seed)
        gen = torch.Generator().manual_seed(0)
        policy_r.append(float(np.mean(
            [collect_episode(Episode(s, training=True), separator, policy, gen,
                             mode="greedy").mean_reward for s in specs[seed]])))
        stand_r.append(float(np.mean(
            [_stand_mean_reward(s, separator) for s in specs[seed]])))
    med_policy = float(np.median(policy_r))
    med_stand = float(np.median(stand_r))
    policy_ok = med_policy >= med_stand

    # scripted baseline per-step contracts
    rng = np.random.default_rng(7)
    contracts_ok = True
    stand_spec = sample_episode(bench_bank, bench_scenes, episode_config(), rng)
    ep = Episode(stand_spec)
    ep.reset()
    agent = ScriptedAgent("stand")
    start = ep.pose
    while not ep.done:
        ep.step(agent.action(ep))
    contracts_ok &= ep.pose == start

    ep = Episode(stand_spec)
    ep.reset()
    agent = ScriptedAgent("rotate")
    headings = [ep.pose.heading]
    for _ in range(8):
        ep.step(agent.action(ep))
        headings.append(ep.pose.heading)
    contracts_ok &= headings[0] == headings[4] == headings[8]
    contracts_ok &= len(set(headings[:4])) == 4

    for i in range(10):
        spec = sample_episode(bench_bank, bench_scenes, episode_config(), rng)
        ep = Episode(spec)
        ep.reset()
        agent = ScriptedAgent("proximity", np.random.default_rng(i))
        while not ep.done:
            ep.step(agent.action(ep))
            contracts_ok &= geodesic_distance(spec.scene, ep.pose.node,
                                              spec.target.location) <= 2.0

    for i in range(6):
        spec = sample_episode(bench_bank, bench_scenes, episode_config(), rng)
        ep = Episode(spec)
        ep.reset()
        agent = ScriptedAgent("doa", np.random.default_rng(i))
        while not ep.done:
            ep.step(agent.action(ep))
        start_node = spec.start_pose.node
        if ep.pose.node != start_node:
            fr, fc = acoustics.HEADING_VEC[ep.pose.heading]
            to_start = (start_node[0] - ep.pose.node[0],
                        start_node[1] - ep.pose.node[1])
            contracts_ok &= (fr, fc) == to_start

    ok = policy_ok and bool(contracts_ok)
    assert report(10, "trained policy vs stand + baseline contracts", ok,
                  f"reward policy {med_policy:.4f} vs stand {med_stand:.4f}, "
                  f"contracts {bool(contracts_ok)}")


def test_criterion_11_noise_sweep_direction(bench_trained, bench_specs):
    trained, _ = bench_trained
    per_snr = {snr: [] for snr in (None, 40.0, 30.0, 20.0)}
    for seed in SEEDS:
        separator, _ = trained[seed]
        for snr in per_snr:
            cfg, specs = bench_specs(seed, noise_snr_db=snr)
            per_snr[snr].append(evaluate_agent(cfg, separator, None, specs).mean_si_sdr)
    medians = [float(np.median(per_snr[s])) for s in (None, 40.0, 30.0, 20.0)]
    ok = all(medians[i] >= medians[i + 1] for i in range(3))
    assert report(11, "SI-SDR monotone non-increasing with noise", ok,
                  "inf/40/30/20 dB -> " + " ".join(f"{v:.3f}" for v in medians))


# --------------------------------------------------------------------------
# 12. Reproducibility
# --------------------------------------------------------------------------

def test_criterion_12_reproducibility(tmp_path):
    cfg = dict(voice_categories=1, music_categories=1, background_categories=0,
               clips_per_category=4, scene_seeds=[3], budget=2, episodes=1,
               seeds=[0], agent="stand")
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(cfg))

    torch.manual_seed(0)
    from dynsep.harness.workbench import build_models, save_models, load_models
    models_dir = tmp_path / "models"
    separator, policy = build_models(
        ExperimentConfig.from_dict({k: tuple(v) if isinstance(v, list) else v
                                    for k, v in cfg.items()}))
    save_models(models_dir, separator, policy)

    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli_main(["eval", "--config", str(cfg_path), "--out", str(out),
                         "--models", str(models_dir)])
        assert code == 0
        outs.append(((out / "eval.csv").read_bytes(),
                     (out / "run_manifest.json").read_bytes()))
    rerun_ok = outs[0] == outs[1]

    loaded_sep, _ = load_models(models_dir, ExperimentConfig.from_dict(
        {k: tuple(v) if isinstance(v, list) else v for k, v in cfg.items()}))
    rng = np.random.default_rng(0)
    mix_mag = rng.random((32, 32, 32)).astype(np.float32)
    separator.reset()
    loaded_sep.reset()
    a = separator.observe(mix_mag, 1, 0)
    b = loaded_sep.observe(mix_mag, 1, 0)
    ckpt_ok = (np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]))

    ok = rerun_ok and ckpt_ok
    assert report(12, "bit-identical reruns and checkpoint round-trip", ok,
                  f"rerun {rerun_ok}, checkpoint {ckpt_ok}")
