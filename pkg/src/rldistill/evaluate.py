"""k-shot evaluation of distilled datasets, plus the random-agent baseline
and the dataset view export.

The protocol: sample ``n_agents`` fresh learners from the distribution
under test, train each on the dataset with one SGD step (using the
dataset's learned inner rate), then run ``n_episodes`` full-cap episodes
per agent with stochastic action sampling. The headline numbers pool all
agents' episode rewards; the spread of per-agent means is reported
separately. Evaluation never mutates the dataset, and its seed domain is
disjoint from every training stage by construction.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diffengine as dd
from . import distill as distill_mod
from . import env as envmod
from . import nets
from . import rng as rng_mod
from .errors import ContractViolation

VARIANTS = ("lambda", "ortho-sigma1", "xe", "xe-sigma1", "random-h", "random-l")


@dataclass(frozen=True)
class EvalProtocol:
    n_agents: int = 100
    n_episodes: int = 100
    distribution: str = "lambda"
    seed: int = 0

    def __post_init__(self):
        if self.n_agents < 1 or self.n_episodes < 1:
            raise ContractViolation("n_agents and n_episodes must be >= 1")


@dataclass
class EvalReport:
    rewards: np.ndarray       # (n_agents, n_episodes)
    distribution_id: str
    dataset_provenance: dict = field(default_factory=dict)

    @property
    def agent_means(self) -> np.ndarray:
        return self.rewards.mean(axis=1)

    @property
    def grand_mean(self) -> float:
        return float(self.rewards.mean())

    @property
    def pooled_std(self) -> float:
        """Std over all tested episodes, pooled across agents."""
        return float(self.rewards.std())

    @property
    def agent_mean_std(self) -> float:
        return float(self.agent_means.std())

    def summary(self) -> str:
        return (
            f"distribution={self.distribution_id} agents={self.rewards.shape[0]} "
            f"episodes={self.rewards.shape[1]} mean={self.grand_mean:.1f} "
            f"std={self.pooled_std:.1f} agent-mean-std={self.agent_mean_std:.1f}"
        )


def make_distribution(
    variant: str, config: envmod.CartPoleConfig, base_seed: int
) -> nets.LearnerDistribution:
    """The six evaluation distributions over the reference architecture."""
    arch = nets.ArchitectureSpec(config.obs_dim, distill_mod.REFERENCE_HIDDEN, config.action_count)
    sqrt2 = float(np.sqrt(2.0))
    if variant == "lambda":
        return nets.LearnerDistribution(nets.FIXED, arch, nets.InitScheme(nets.ORTHOGONAL, sqrt2, 0.01), base_seed, "lambda")
    if variant == "ortho-sigma1":
        return nets.LearnerDistribution(nets.FIXED, arch, nets.InitScheme(nets.ORTHOGONAL, 1.0, 1.0), base_seed, "ortho-sigma1")
    if variant == "xe":
        # Xavier-normal with the same per-layer sigma pattern as lambda
        return nets.LearnerDistribution(nets.FIXED, arch, nets.InitScheme(nets.XAVIER_NORMAL, sqrt2, 0.01), base_seed, "xe")
    if variant == "xe-sigma1":
        return nets.LearnerDistribution(nets.FIXED, arch, nets.InitScheme(nets.XAVIER_NORMAL, 1.0, 1.0), base_seed, "xe-sigma1")
    if variant == "random-h":
        return nets.LearnerDistribution(nets.RANDOM_HIDDEN_WIDTH, arch, nets.InitScheme(nets.ORTHOGONAL, sqrt2, 0.01), base_seed, "random-h")
    if variant == "random-l":
        return nets.LearnerDistribution(nets.RANDOM_DEPTH, arch, nets.InitScheme(nets.ORTHOGONAL, sqrt2, 0.01), base_seed, "random-l")
    raise ContractViolation(f"unknown distribution variant {variant!r}; choose from {VARIANTS}")


def train_on_synthetic(
    params: nets.LearnerParams,
    dataset: distill_mod.SyntheticDataset,
    encoder: nets.LearnerParams | None = None,
    encoder_tanh_last: bool = True,
    steps: int = 1,
) -> nets.LearnerParams:
    """One (or more) full-batch SGD steps on the synthetic dataset, with the
    dataset's learned inner rate. Matches the distiller's inner training
    bit-for-bit."""
    feats = dataset.states if encoder is None else nets.encoder_forward(
        encoder, dataset.states, encoder_tanh_last
    )
    current = params
    for _ in range(steps):
        tape = dd.Tape()
        pv = nets.params_on_tape(tape, current)
        logits = nets.forward_on_tape(pv, tape.constant(feats))
        loss = dd.vmean(dd.square(dd.sub(logits, tape.constant(dataset.labels))))
        grads = dd.gradient(tape, loss, pv)
        current = nets.LearnerParams(
            [current.weights[i] - dataset.inner_lr * grads[pv[2 * i]] for i in range(current.n_layers)],
            [current.biases[i] - dataset.inner_lr * grads[pv[2 * i + 1]] for i in range(current.n_layers)],
            provenance=current.provenance,
        )
    return current


def rollout_reward(
    config: envmod.CartPoleConfig,
    actor: nets.LearnerParams,
    cap: int,
    episode_seed: int,
    encoder: nets.LearnerParams | None = None,
    encoder_tanh_last: bool = True,
) -> float:
    """One stochastic episode; same per-episode seeding layout as training
    collection (reset and action streams derived from the episode seed)."""
    gen = rng_mod.substream(episode_seed, "actions")
    state = envmod.reset(config, seed=rng_mod.stage_seed(episode_seed, "reset"))
    total = 0.0
    while True:
        obs = state.observation()
        feat = obs if encoder is None else nets.encoder_forward(encoder, obs, encoder_tanh_last)
        probs = nets.policy_probs(nets.forward_logits(actor, feat))
        u = gen.random()
        action = min(int(np.searchsorted(np.cumsum(probs), u, side="right")), config.action_count - 1)
        res = envmod.step(config, state, action, step_cap=cap)
        total += res.reward
        if res.terminated or res.truncated:
            return total
        state = res.next_state


def sample_eval_agent(
    distribution: str,
    config: envmod.CartPoleConfig,
    base_seed: int,
    draw: int,
    encoder: nets.LearnerParams | None = None,
    encoder_tanh_last: bool = True,
) -> nets.LearnerParams:
    """Sample one evaluation learner; behind an encoder the learner lives on
    the encoded feature space (and is empty at a full split)."""
    if encoder is not None and not encoder_tanh_last:
        return nets.LearnerParams([], [], provenance=("identity", 0, draw))
    dist = make_distribution(distribution, config, base_seed)
    if encoder is not None and encoder.n_layers > 0:
        dims_in = encoder.weights[-1].shape[1]
        dist = nets.LearnerDistribution(
            nets.FIXED,
            nets.ArchitectureSpec(dims_in, _split_hidden(config, encoder), config.action_count),
            dist.init, dist.base_seed, dist.dist_id + "+encoder",
        )
    return nets.sample_learner(dist, draw=draw)


def _eval_one_agent(args) -> np.ndarray:
    dataset, protocol, config, encoder, tanh_last, agent_index = args
    params = sample_eval_agent(
        protocol.distribution, config, rng_mod.stage_seed(protocol.seed, "eval-agents"),
        agent_index, encoder, tanh_last,
    )
    trained = train_on_synthetic(params, dataset, encoder, tanh_last)
    agent_seed = rng_mod.stage_seed(protocol.seed, "eval-agent-episodes", agent_index)
    rewards = np.empty(protocol.n_episodes)
    for ep in range(protocol.n_episodes):
        ep_seed = rng_mod.stage_seed(agent_seed, "episode", ep)
        rewards[ep] = rollout_reward(config, trained, config.max_steps, ep_seed, encoder, tanh_last)
    return rewards


def _split_hidden(config: envmod.CartPoleConfig, encoder: nets.LearnerParams) -> tuple[int, ...]:
    """Hidden widths remaining above an encoder prefix of the reference net."""
    full = (config.obs_dim, *distill_mod.REFERENCE_HIDDEN, config.action_count)
    return tuple(full[encoder.n_layers + 1 : -1])


def kshot_eval(
    dataset: distill_mod.SyntheticDataset,
    protocol: EvalProtocol,
    config: envmod.CartPoleConfig | None = None,
    encoder: nets.LearnerParams | None = None,
    encoder_tanh_last: bool = True,
    workers: int = 1,
) -> EvalReport:
    """Evaluate a dataset under a learner distribution (pure read).

    Work is partitioned by agent index and reduced in index order, so the
    result is identical for any worker count.
    """
    config = dataset.env if config is None else config
    if dataset.input_dim != config.obs_dim or dataset.action_dim != config.action_count:
        raise ContractViolation("dataset dims do not match the environment")
    enc = encoder if (encoder is not None and encoder.n_layers > 0) else None
    jobs = [(dataset, protocol, config, enc, encoder_tanh_last, a) for a in range(protocol.n_agents)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_eval_one_agent, jobs, chunksize=4))
    else:
        rows = [_eval_one_agent(job) for job in jobs]
    return EvalReport(
        rewards=np.stack(rows),
        distribution_id=protocol.distribution,
        dataset_provenance=dict(dataset.provenance),
    )


def random_baseline(config: envmod.CartPoleConfig, episodes: int, seed: int) -> EvalReport:
    """Uniform-random action selection at the full episode cap."""
    if episodes < 1:
        raise ContractViolation("episodes must be >= 1")
    actor = nets.LearnerParams(
        [np.zeros((config.obs_dim, config.action_count))], [np.zeros(config.action_count)]
    )
    rewards = np.empty(episodes)
    for ep in range(episodes):
        ep_seed = rng_mod.stage_seed(seed, "random-episode", ep)
        rewards[ep] = rollout_reward(config, actor, config.max_steps, ep_seed)
    return EvalReport(rewards=rewards[None, :], distribution_id="uniform-random")


def export_dataset_view(dataset: distill_mod.SyntheticDataset) -> tuple[list[str], list[list]]:
    """Tabular view of the synthetic instances: all state components, raw
    soft labels, and softmaxed labels (one row per instance)."""
    header = (
        ["instance"]
        + [f"state_{i}" for i in range(dataset.input_dim)]
        + [f"label_raw_{i}" for i in range(dataset.action_dim)]
        + [f"label_soft_{i}" for i in range(dataset.action_dim)]
    )
    rows = []
    for i in range(dataset.k):
        soft = nets.policy_probs(dataset.labels[i])
        rows.append(
            [i]
            + [float(v) for v in dataset.states[i]]
            + [float(v) for v in dataset.labels[i]]
            + [float(v) for v in soft]
        )
    return header, rows
