"""Training and evaluation loops, seeding, and on-disk artefacts."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .config import ExperimentConfig, loads_config, to_ini
from .env import N_ACTIONS, MetricsRecord, VehicularEnv
from .envelope import EnvelopeAgent, EnvelopeAgentConfig, check_preference
from .neural import NetworkError, QNetwork, load_checkpoint, save_checkpoint
from .pareto import hypervolume
from .replay import Transition
from .scalar import ScalarAgent, ScalarAgentConfig
from .schedules import EpsilonSchedule

METRICS_SCHEMA_VERSION = 1
METRIC_COLUMNS = ["episode", "R_tran", "R_tele", "delta_e", "xi_e"]
STREAMS = ("env", "agent", "replay", "init", "eval")


def substreams(seed: int) -> Dict[str, np.random.Generator]:
    """Independent named generators fanned out from one root seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(child) for name, child in zip(STREAMS, children)}


def eval_seeds(seed: int, episodes: int) -> List[int]:
    """Per-episode environment seeds shared by every evaluated preference."""
    rng = substreams(seed)["eval"]
    return [int(x) for x in rng.integers(0, 2 ** 63 - 1, size=episodes)]


def is_envelope(cfg: ExperimentConfig) -> bool:
    return cfg.algorithm == "mo_ddqn_envelope"


def build_env(cfg: ExperimentConfig) -> VehicularEnv:
    return VehicularEnv(cfg.instance, cfg.radio, cfg.traffic, cfg.reward, gamma=cfg.agent.gamma)


def build_agent(cfg: ExperimentConfig, obs_dim: int, rng: np.random.Generator):
    a = cfg.agent
    common = dict(gamma=a.gamma, batch_size=a.batch_size, target_period=a.target_period,
                  hidden=cfg.hidden, optimizer=cfg.optimizer, replay_capacity=a.replay_capacity,
                  learning_starts=a.learning_starts)
    if is_envelope(cfg):
        acfg = EnvelopeAgentConfig(n_preferences=a.n_preferences, double=True, lambda_path=a.lambda_path,
                                   total_steps=cfg.episodes * cfg.instance.T_hl, **common)
        return EnvelopeAgent(obs_dim, N_ACTIONS, acfg, rng)
    variant = "dqn" if cfg.algorithm == "mo_dqn" else "ddqn"
    return ScalarAgent(obs_dim, N_ACTIONS, ScalarAgentConfig(variant=variant, **common), rng)


def epsilon_schedule(cfg: ExperimentConfig) -> EpsilonSchedule:
    a = cfg.agent
    return EpsilonSchedule(cfg.episodes, a.epsilon_start, a.epsilon_mid, a.epsilon_min, a.epsilon_mid_fraction)


# -- files ---------------------------------------------------------------------

def metric_columns(with_omega: bool) -> List[str]:
    return METRIC_COLUMNS + (["omega_tran"] if with_omega else [])


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


def write_metrics(path, records: Sequence[MetricsRecord], with_omega: bool) -> None:
    cols = metric_columns(with_omega)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in records:
            row = asdict(rec)
            writer.writerow([_fmt(row[c]) for c in cols])


def read_metrics(path) -> List[MetricsRecord]:
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            omega = row.get("omega_tran")
            out.append(MetricsRecord(int(row["episode"]), float(row["R_tran"]), float(row["R_tele"]),
                                     float(row["delta_e"]), float(row["xi_e"]),
                                     float(omega) if omega not in (None, "") else None))
    return out


def write_timing(path, rows: Sequence[tuple]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", "steps", "wall_ms", "ms_per_step"])
        for episode, steps, wall in rows:
            writer.writerow([episode, steps, f"{wall:.3f}", f"{wall / max(steps, 1):.4f}"])


def checkpoint_metadata(cfg: ExperimentConfig, agent, obs_dim: int, episodes_done: int) -> dict:
    meta = {
        "algorithm": cfg.algorithm,
        "obs_dim": obs_dim,
        "n_actions": N_ACTIONS,
        "n_objectives": 2,
        "episodes_trained": episodes_done,
        "updates": agent.updates,
        "metrics_schema": METRICS_SCHEMA_VERSION,
        "config": to_ini(cfg),
    }
    if is_envelope(cfg):
        meta["lambda_path"] = agent.lambdas.kind
        meta["lambda_total_steps"] = agent.lambdas.total_steps
        meta["lambda_last"] = agent.last_lambda
    return meta


# -- policies --------------------------------------------------------------------

class GreedyPolicy:
    """Frozen greedy controller built from a Q-network, with or without ω conditioning."""

    def __init__(self, net: QNetwork, envelope: bool, n_actions: int = N_ACTIONS, n_objectives: int = 2):
        self.net = net
        self.envelope = envelope
        self.n_actions = n_actions
        self.n_objectives = n_objectives

    def actions(self, obs: Sequence[np.ndarray], omega: Optional[np.ndarray] = None) -> List[int]:
        x = np.vstack(obs)
        if not self.envelope:
            return [int(a) for a in np.argmax(self.net(x), axis=1)]
        x = np.hstack([x, np.tile(omega, (len(x), 1))])
        q = self.net(x).reshape(len(x), self.n_actions, self.n_objectives)
        return [int(a) for a in np.argmax(q @ omega, axis=1)]


def rollout(env, policy: GreedyPolicy, episode: int, seed, omega: Optional[np.ndarray] = None) -> MetricsRecord:
    obs = env.reset(seed)
    done = False
    while not done:
        obs, _, done, _ = env.step(policy.actions(obs, omega))
    return env.episode_metrics(episode, None if omega is None else float(omega[0]))


# -- training --------------------------------------------------------------------

class TrainResult:
    def __init__(self, records: List[MetricsRecord], agent, timing: List[tuple], obs_dim: int):
        self.records = records
        self.agent = agent
        self.timing = timing
        self.obs_dim = obs_dim


def train(cfg: ExperimentConfig, out_dir=None, env=None, progress=None) -> TrainResult:
    """Run the configured algorithm; writes metrics, timing and checkpoints when ``out_dir`` is set."""
    streams = substreams(cfg.seed)
    env = env or build_env(cfg)
    obs = env.reset(streams["env"])
    obs_dim = len(obs[0])
    agent = build_agent(cfg, obs_dim, streams["init"])
    envelope = is_envelope(cfg)
    eps = epsilon_schedule(cfg)
    agent_rng, replay_rng = streams["agent"], streams["replay"]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.ini").write_text(to_ini(cfg), encoding="utf-8")
    records, timing = [], []
    for episode in range(cfg.episodes):
        start = time.perf_counter()
        if episode > 0:
            obs = env.reset(streams["env"])
        epsilon = eps(episode)
        omega = agent.preferences.sample_preferences(1, agent_rng)[0] if envelope else None
        done, steps = False, 0
        while not done:
            if envelope:
                actions = [agent.act(o, omega, epsilon, agent_rng) for o in obs]
            else:
                actions = [agent.act(o, epsilon, agent_rng) for o in obs]
            next_obs, rewards, done, _ = env.step(actions)
            for o, a, r, o2 in zip(obs, actions, rewards, next_obs):
                agent.pool.push(Transition(o, a, r, o2, done))
            agent.train_step(replay_rng)
            obs = next_obs
            steps += 1
        rec = env.episode_metrics(episode, float(omega[0]) if envelope else None)
        records.append(rec)
        timing.append((episode, steps, 1000.0 * (time.perf_counter() - start)))
        if progress is not None:
            progress(rec)
        if out is not None and cfg.checkpoint_every and (episode + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(out / f"checkpoint_{episode + 1:06d}.json", agent.networks(),
                            checkpoint_metadata(cfg, agent, obs_dim, episode + 1))
    if out is not None:
        write_metrics(out / "metrics.csv", records, envelope)
        write_timing(out / "timing.csv", timing)
        save_checkpoint(out / "checkpoint.json", agent.networks(),
                        checkpoint_metadata(cfg, agent, obs_dim, cfg.episodes))
    return TrainResult(records, agent, timing, obs_dim)


# -- evaluation ------------------------------------------------------------------

def omega_sweep(n: int = 11) -> List[float]:
    return [round(k / (n - 1), 12) for k in range(n)]


def summarize(records: Sequence[MetricsRecord]) -> dict:
    arr = np.array([[r.R_tran, r.R_tele, r.delta_e, r.xi_e] for r in records])
    means = arr.mean(axis=0)
    return {"episodes": len(records), "R_tran": float(means[0]), "R_tele": float(means[1]),
            "delta_e": float(means[2]), "xi_e": float(means[3])}


def evaluate(cfg: ExperimentConfig, net: QNetwork, episodes: int, omegas: Optional[Sequence[float]] = None,
             seed: Optional[int] = None, env=None):
    """Greedy rollouts; returns ``(records, rows)`` with one summary row per evaluated ω."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    envelope = is_envelope(cfg)
    env = env or build_env(cfg)
    policy = GreedyPolicy(net, envelope)
    expected_in = len(env.reset(0)[0]) + (2 if envelope else 0)
    if net.spec.input_dim != expected_in or net.spec.output_dim != N_ACTIONS * (2 if envelope else 1):
        raise NetworkError(f"checkpoint network {net.spec.input_dim}->{net.spec.output_dim} does not fit "
                           f"algorithm {cfg.algorithm}")
    seeds = eval_seeds(cfg.seed if seed is None else seed, episodes)
    if envelope:
        prefs = [0.5] if not omegas else list(omegas)
    else:
        prefs = [None]
    records, rows = [], []
    for w in prefs:
        omega = None if w is None else check_preference([w, 1.0 - w])
        batch = [rollout(env, policy, e, seeds[e], omega) for e in range(episodes)]
        records.extend(batch)
        row = summarize(batch)
        if w is not None:
            row = {"omega_tran": float(w), **row}
        rows.append(row)
    return records, rows


def write_summary_rows(path, rows: Sequence[dict]) -> None:
    cols = list(rows[0].keys())
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])


def load_policy_network(checkpoint) -> tuple:
    networks, meta = load_checkpoint(checkpoint)
    if "q" not in networks:
        raise NetworkError(f"{checkpoint} holds no 'q' network")
    return networks["q"], meta


def run_eval(cfg: ExperimentConfig, checkpoint, out_dir, episodes: Optional[int] = None,
             omegas: Optional[Sequence[float]] = None) -> dict:
    net, meta = load_policy_network(checkpoint)
    if meta.get("algorithm") not in (None, cfg.algorithm):
        raise NetworkError(f"checkpoint was trained with {meta['algorithm']}, config says {cfg.algorithm}")
    episodes = cfg.eval_episodes if episodes is None else episodes
    records, rows = evaluate(cfg, net, episodes, omegas)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    envelope = is_envelope(cfg)
    write_metrics(out / "eval_metrics.csv", records, envelope)
    write_summary_rows(out / "eval_summary.csv", rows)
    points = [(r["R_tran"], r["R_tele"]) for r in rows]
    summary = {
        "algorithm": cfg.algorithm,
        "episodes": episodes,
        "seed": cfg.seed,
        "overall": summarize(records),
        "per_omega": rows,
    }
    ref = np.asarray(cfg.hv_reference, dtype=float)
    if all(np.all(np.asarray(p) >= ref) for p in points):
        summary["hypervolume"] = hypervolume(points, ref)
        summary["hv_reference"] = list(cfg.hv_reference)
    (out / "eval_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return summary


def config_from_checkpoint(checkpoint, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Rebuild the training config stored in a checkpoint."""
    _, meta = load_checkpoint(checkpoint)
    if "config" not in meta:
        raise NetworkError(f"{checkpoint} carries no embedded config")
    return loads_config(meta["config"], overrides)
