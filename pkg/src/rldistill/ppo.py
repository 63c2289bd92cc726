"""PPO machinery shared by the distiller and the direct-RL baseline.

Covers trajectory collection with per-episode seeded streams, generalized
advantage estimation, the clipped surrogate policy loss, the squared-error
critic loss, and a plain PPO trainer used as the direct-learning baseline.
Losses are built on a diffengine tape so the same expressions serve both
ordinary training (parameters as leaves) and meta-training (parameters as
recorded results of an inner step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffengine as dd
from . import env as envmod
from . import nets
from . import rng as rng_mod
from .errors import ContractViolation
from .optim import Adam


@dataclass(frozen=True)
class PpoHyperparams:
    clip_epsilon: float = 0.2
    discount_gamma: float = 0.99
    gae_lambda: float = 0.95
    policy_epochs: int = 4
    batch_size: int = 512
    episodes_per_epoch: int = 10
    critic_lr: float = 2.5e-4
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0.0 < self.clip_epsilon < 1.0:
            raise ContractViolation("clip_epsilon must be in (0, 1)")
        if not 0.0 < self.discount_gamma <= 1.0:
            raise ContractViolation("discount_gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ContractViolation("gae_lambda must be in [0, 1]")
        if self.batch_size < 1 or self.policy_epochs < 1 or self.episodes_per_epoch < 1:
            raise ContractViolation("batch_size, policy_epochs, episodes_per_epoch must be >= 1")


@dataclass
class Trajectory:
    """Ordered transitions across several episodes, plus per-episode bookkeeping.

    ``terminated`` marks transitions where the episode failed (threshold
    violation); truncated episodes end without a terminated flag and carry a
    critic bootstrap value instead.
    """

    obs: np.ndarray             # (T, 4N)
    actions: np.ndarray         # (T,) int64
    behavior_logp: np.ndarray   # (T,) log pi_0(a|s), <= 0
    rewards: np.ndarray         # (T,)
    values: np.ndarray          # (T,) critic at collection time
    terminated: np.ndarray      # (T,) bool
    episode_starts: np.ndarray  # (E,) start index per episode
    bootstrap_values: np.ndarray  # (E,) 0 when terminated, V(s_T) when truncated
    episode_rewards: np.ndarray   # (E,)
    behavior_id: str = ""
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    @property
    def n_transitions(self) -> int:
        return len(self.rewards)

    @property
    def n_episodes(self) -> int:
        return len(self.episode_starts)

    def episode_slices(self) -> list[slice]:
        starts = list(self.episode_starts) + [self.n_transitions]
        return [slice(starts[i], starts[i + 1]) for i in range(self.n_episodes)]


def collect_episodes(
    config: envmod.CartPoleConfig,
    actor: nets.LearnerParams,
    critic: nets.LearnerParams | None,
    episodes: int,
    truncation: int,
    seed: int,
    encoder: nets.LearnerParams | None = None,
    encoder_tanh_last: bool = True,
) -> Trajectory:
    """Run ``episodes`` complete-or-truncated episodes under the actor.

    Each episode owns an independent seeded stream, so the trajectory is
    deterministic for a given seed no matter how episodes are scheduled.
    The critic is evaluated on raw observations; the actor sees encoded
    observations when an encoder is given.
    """
    obs_l, act_l, logp_l, rew_l, val_l, term_l = [], [], [], [], [], []
    starts, boots, ep_rewards = [], [], []
    for ep in range(episodes):
        ep_seed = rng_mod.stage_seed(seed, "episode", ep)
        gen = rng_mod.substream(ep_seed, "actions")
        state = envmod.reset(config, seed=rng_mod.stage_seed(ep_seed, "reset"))
        starts.append(len(rew_l))
        total = 0.0
        while True:
            obs = state.observation()
            feat = obs if encoder is None else nets.encoder_forward(encoder, obs, encoder_tanh_last)
            logits = nets.forward_logits(actor, feat)
            logp_all = nets.log_policy_probs(logits)
            probs = np.exp(logp_all)
            u = gen.random()
            action = int(np.searchsorted(np.cumsum(probs), u, side="right"))
            action = min(action, config.action_count - 1)
            value = 0.0 if critic is None else float(nets.forward_logits(critic, obs)[0])
            res = envmod.step(config, state, action, step_cap=truncation)

            obs_l.append(obs)
            act_l.append(action)
            logp_l.append(float(logp_all[action]))
            rew_l.append(res.reward)
            val_l.append(value)
            term_l.append(res.terminated)
            total += res.reward
            state = res.next_state
            if res.terminated:
                boots.append(0.0)
                break
            if res.truncated:
                boots.append(
                    0.0 if critic is None else float(nets.forward_logits(critic, state.observation())[0])
                )
                break
        ep_rewards.append(total)
    return Trajectory(
        obs=np.asarray(obs_l, dtype=np.float64),
        actions=np.asarray(act_l, dtype=np.int64),
        behavior_logp=np.asarray(logp_l, dtype=np.float64),
        rewards=np.asarray(rew_l, dtype=np.float64),
        values=np.asarray(val_l, dtype=np.float64),
        terminated=np.asarray(term_l, dtype=bool),
        episode_starts=np.asarray(starts, dtype=np.int64),
        bootstrap_values=np.asarray(boots, dtype=np.float64),
        episode_rewards=np.asarray(ep_rewards, dtype=np.float64),
        behavior_id="{}:{}:{}".format(*actor.provenance),
    )


def gae(
    trajectory: Trajectory,
    gamma: float,
    gae_lambda: float,
    bootstrap_values: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation, computed per episode.

    A_t = sum_l (gamma*lambda)^l * delta_{t+l} with
    delta_t = r_t + gamma*V(s_{t+1})*(1-done_t) - V(s_t); the value after a
    truncated episode's last step is its bootstrap value, after a
    terminated one it is 0. Returns are R_t = A_t + V(s_t).
    """
    boots = trajectory.bootstrap_values if bootstrap_values is None else np.asarray(bootstrap_values)
    advantages = np.zeros(trajectory.n_transitions)
    for ep, sl in enumerate(trajectory.episode_slices()):
        rewards = trajectory.rewards[sl]
        values = trajectory.values[sl]
        terminated = bool(trajectory.terminated[sl][-1])
        horizon = len(rewards)
        adv_next = 0.0
        for t in range(horizon - 1, -1, -1):
            if t == horizon - 1:
                next_value = 0.0 if terminated else boots[ep]
            else:
                next_value = values[t + 1]
            delta = rewards[t] + gamma * next_value - values[t]
            adv_next = delta + gamma * gae_lambda * adv_next
            advantages[sl][t] = adv_next
    returns = advantages + trajectory.values
    return advantages, returns


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Center and scale to unit variance; degenerate batches come back zero."""
    centered = adv - adv.mean()
    std = np.sqrt(np.mean(centered**2))
    if std == 0.0:
        return np.zeros_like(adv)
    return centered / std


def policy_loss_from_logits(
    logits: dd.Var,
    actions: np.ndarray,
    behavior_logp: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
) -> dd.Var:
    """Clipped-surrogate loss from recorded logits.

    -(1/b) * sum min[rho*A, clip(rho, 1-eps, 1+eps)*A] with
    rho = exp(logp_now - logp_behavior). The log-softmax subtracts the
    rowwise max as a detached constant; by shift invariance this leaves the
    gradient exact.
    """
    tape = logits.tape
    b, c = logits.value.shape
    if b < 1:
        raise ContractViolation("batch must be nonempty")
    row_max = tape.constant(np.max(logits.value, axis=1, keepdims=True))
    shifted = dd.sub(logits, dd.broadcast_to(row_max, (b, c)))
    sum_exp = dd.vsum(dd.exp(shifted), axis=1)
    log_norm = dd.reshape(dd.log(sum_exp), (b, 1))
    logp = dd.sub(shifted, dd.broadcast_to(log_norm, (b, c)))
    onehot = np.zeros((b, c))
    onehot[np.arange(b), actions] = 1.0
    logp_taken = dd.vsum(dd.mul(logp, tape.constant(onehot)), axis=1)
    ratio = dd.exp(dd.sub(logp_taken, tape.constant(behavior_logp)))
    adv = tape.constant(advantages)
    unclipped = dd.mul(ratio, adv)
    clipped = dd.mul(dd.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon), adv)
    return dd.neg(dd.vmean(dd.minimum(unclipped, clipped)))


def ppo_policy_loss(
    param_vars: list[dd.Var],
    states: np.ndarray,
    actions: np.ndarray,
    behavior_logp: np.ndarray,
    advantages: np.ndarray,
    clip_epsilon: float,
    encoder_vars: list[dd.Var] | None = None,
    encoder_tanh_last: bool = True,
) -> dd.Var:
    """Forward the batch through the (recorded) policy and apply the
    clipped-surrogate loss."""
    tape = param_vars[0].tape if param_vars else encoder_vars[0].tape
    x = tape.constant(states)
    if encoder_vars is not None:
        x = nets.encoder_on_tape(encoder_vars, x, len(encoder_vars) // 2, encoder_tanh_last)
    logits = nets.forward_on_tape(param_vars, x)
    return policy_loss_from_logits(logits, actions, behavior_logp, advantages, clip_epsilon)


def critic_loss(param_vars: list[dd.Var], states: np.ndarray, returns: np.ndarray) -> dd.Var:
    """(1/b) * sum (V(s_t) - R_t)^2, no clipping."""
    if len(returns) < 1:
        raise ContractViolation("batch must be nonempty")
    tape = param_vars[0].tape
    out = nets.forward_on_tape(param_vars, tape.constant(states))
    v = dd.reshape(out, (len(returns),))
    return dd.vmean(dd.square(dd.sub(v, tape.constant(returns))))


def make_critic(input_dim: int, hidden_widths: tuple[int, ...], seed: int) -> nets.LearnerParams:
    """Critic mirroring the policy body with one linear output (final sigma 1)."""
    dist = nets.LearnerDistribution(
        arch_mode=nets.FIXED,
        base_arch=nets.ArchitectureSpec(input_dim, hidden_widths, 1),
        init=nets.InitScheme(nets.ORTHOGONAL, hidden_sigma=float(np.sqrt(2.0)), final_sigma=1.0),
        base_seed=seed,
        dist_id="critic",
    )
    return nets.sample_learner(dist, draw=0)


def minibatch_plan(n: int, batch_size: int, perm: np.ndarray) -> list[np.ndarray]:
    """Shuffled minibatch index blocks; the last short block is kept."""
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


@dataclass
class CurvePoint:
    epoch: int
    mean_reward: float
    std_reward: float
    episodes: int
    transitions: int


def train_rl_baseline(
    config: envmod.CartPoleConfig,
    dist: nets.LearnerDistribution,
    hyper: PpoHyperparams,
    epochs: int,
    seed: int,
    actor_lr: float = 2.5e-4,
    early_stop_reward: float | None = None,
    early_stop_window: int = 20,
) -> tuple[nets.LearnerParams, nets.LearnerParams, list[CurvePoint]]:
    """Standard PPO on the environment; the reference point for distillation.

    Collect e episodes per epoch, run ``policy_epochs`` passes of shuffled
    minibatches with Adam on actor and critic, and report the per-epoch
    rollout reward curve. Raises NumericalFailure if a loss diverges.
    """
    if epochs < 1:
        raise ContractViolation("epochs must be >= 1")
    actor = nets.sample_learner(dist, draw=0)
    critic = make_critic(config.obs_dim, dist.base_arch.hidden_widths, rng_mod.stage_seed(seed, "critic-init"))
    actor_opt = Adam(actor_lr)
    critic_opt = Adam(hyper.critic_lr)
    curve: list[CurvePoint] = []
    recent: list[float] = []
    for epoch in range(epochs):
        traj = collect_episodes(
            config, actor, critic,
            episodes=hyper.episodes_per_epoch,
            truncation=config.rollout_truncation,
            seed=rng_mod.stage_seed(seed, "rollout", epoch),
        )
        adv, ret = gae(traj, hyper.discount_gamma, hyper.gae_lambda)
        n = traj.n_transitions
        for pe in range(hyper.policy_epochs):
            perm = rng_mod.substream(seed, "shuffle", epoch * hyper.policy_epochs + pe).permutation(n)
            for idx in minibatch_plan(n, hyper.batch_size, perm):
                batch_adv = normalize_advantages(adv[idx]) if hyper.normalize_advantages else adv[idx]
                tape = dd.Tape()
                avars = nets.params_on_tape(tape, actor)
                loss = ppo_policy_loss(
                    avars, traj.obs[idx], traj.actions[idx], traj.behavior_logp[idx],
                    batch_adv, hyper.clip_epsilon,
                )
                g = dd.gradient(tape, loss, avars)
                new_vals = actor_opt.step([v.value for v in avars], [g[v] for v in avars])
                actor = nets.LearnerParams(
                    new_vals[0::2], new_vals[1::2], provenance=actor.provenance
                )

                ctape = dd.Tape()
                cvars = nets.params_on_tape(ctape, critic)
                closs = critic_loss(cvars, traj.obs[idx], ret[idx])
                cg = dd.gradient(ctape, closs, cvars)
                cvals = critic_opt.step([v.value for v in cvars], [cg[v] for v in cvars])
                critic = nets.LearnerParams(cvals[0::2], cvals[1::2], provenance=critic.provenance)
        mean_r = float(traj.episode_rewards.mean())
        curve.append(
            CurvePoint(epoch, mean_r, float(traj.episode_rewards.std()), traj.n_episodes, n)
        )
        recent.append(mean_r)
        if early_stop_reward is not None and len(recent) >= early_stop_window:
            if float(np.mean(recent[-early_stop_window:])) >= early_stop_reward:
                break
    return actor, critic, curve
