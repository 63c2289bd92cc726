"""Synthetic-dataset distillation of the cart-pole environment.

The trainable object is a tiny synthetic supervised dataset: k unconstrained
state rows, k soft-label rows, and a trainable inner learning rate. Each
meta-epoch samples a fresh learner, trains it on the dataset with one
full-batch SGD step, rolls the resulting policy out, and then walks PPO
minibatches: the clipped-surrogate loss is backpropagated through the inner
SGD step to the dataset (and, in split runs, to a persistent encoder), the
critic gets an ordinary update, and the learner is retrained from the same
initialization before the next minibatch.

The meta-gradient needs no persistent higher-order graph: the inner
gradient step is recorded as ordinary tape operations (reverse-over-
reverse), so one plain reverse sweep of the outer loss reaches the dataset.
For a single inner step this equals the explicit chain rule
dL/d(theta) = -eta * d(grad_inner . v)/d(theta) with v the outer gradient
at the trained parameters, and dL/d(eta) = -grad_inner . v; the recorded
form also covers unrolled multi-step inner training.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import diffengine as dd
from . import env as envmod
from . import nets
from . import ppo
from . import rng as rng_mod
from .errors import ContractViolation, DatasetFormatError
from .optim import Adam

FORMAT_VERSION = 1
ENV_KIND = "ndcartpole"

_ENV_FIELDS = (
    "n_dims", "gravity", "cart_mass", "pole_mass", "pole_half_length",
    "force_mag", "integration_dt", "angle_threshold", "position_threshold",
    "max_steps", "rollout_truncation",
)


def min_dataset_size(action_count: int) -> int:
    """Smallest number of soft-labeled instances that can distinguish
    ``action_count`` classes: ceil(c/2) + 1."""
    if action_count < 1:
        raise ContractViolation("action_count must be >= 1")
    return math.ceil(action_count / 2) + 1


@dataclass
class SyntheticDataset:
    """The distillation target: states, soft labels, and the inner step size.

    State rows are unconstrained reals; nothing forces them into or near
    the simulator's reachable set. Labels are unconstrained logit targets.
    """

    states: np.ndarray      # (k, 4N)
    labels: np.ndarray      # (k, 2N)
    inner_lr: float
    env: envmod.CartPoleConfig
    lambda_id: str = "lambda"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        self.validate()

    @property
    def k(self) -> int:
        return self.states.shape[0]

    @property
    def input_dim(self) -> int:
        return self.states.shape[1]

    @property
    def action_dim(self) -> int:
        return self.labels.shape[1]

    def validate(self):
        if self.states.ndim != 2 or self.labels.ndim != 2:
            raise ContractViolation("states and labels must be 2-d")
        if self.states.shape[0] != self.labels.shape[0] or self.states.shape[0] < 1:
            raise ContractViolation("states/labels row counts must match and be >= 1")
        if self.inner_lr <= 0:
            raise ContractViolation("inner_lr must be > 0")
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.labels))):
            raise ContractViolation("dataset entries must be finite")
        if self.input_dim != self.env.obs_dim or self.action_dim != self.env.action_count:
            raise ContractViolation("dataset dims must match the environment (4N, 2N)")

    def copy(self) -> "SyntheticDataset":
        return SyntheticDataset(
            self.states.copy(), self.labels.copy(), self.inner_lr,
            self.env, self.lambda_id, dict(self.provenance),
        )


def initialize_dataset(config: envmod.CartPoleConfig, k: int, seed: int) -> SyntheticDataset:
    """Standard-normal states and labels, inner lr 0.02."""
    if k < 1:
        raise ContractViolation("k must be >= 1")
    gen = rng_mod.stream(seed)
    states = gen.standard_normal((k, config.obs_dim))
    labels = gen.standard_normal((k, config.action_count))
    return SyntheticDataset(states, labels, inner_lr=2e-2, env=config)


# ---------------------------------------------------------------------------
# serialization (shared with the CLI)
# ---------------------------------------------------------------------------


def _fmt_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if not np.isfinite(v):
            raise ContractViolation("cannot serialize non-finite numbers")
        return format(float(v), ".17g")
    if isinstance(v, str):
        return json.dumps(v)
    raise ContractViolation(f"unsupported value type {type(v)!r}")


def _fmt_json(obj, indent=0) -> str:
    """JSON text with floats at 17 significant digits (exact round trip)."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_fmt_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        parts = [_fmt_json(v, indent + 1) for v in obj]
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(parts) + "]"
        return "[\n" + ",\n".join(inner + p for p in parts) + "\n" + pad + "]"
    return _fmt_scalar(obj)


def dataset_to_text(ds: SyntheticDataset) -> str:
    ds.validate()
    doc = {
        "format_version": FORMAT_VERSION,
        "env": {"kind": ENV_KIND, **{f: getattr(ds.env, f) for f in _ENV_FIELDS}},
        "k": ds.k,
        "input_dim": ds.input_dim,
        "action_dim": ds.action_dim,
        "inner_lr": float(ds.inner_lr),
        "X_d": [float(x) for x in ds.states.reshape(-1)],
        "Y_d": [float(y) for y in ds.labels.reshape(-1)],
        "provenance": {
            "seed": int(ds.provenance.get("seed", 0)),
            "meta_epochs": int(ds.provenance.get("meta_epochs", 0)),
            "lambda_spec": str(ds.provenance.get("lambda_spec", ds.lambda_id)),
            "best_window_reward": float(ds.provenance.get("best_window_reward", 0.0)),
        },
    }
    return _fmt_json(doc) + "\n"


def dataset_from_text(text: str) -> SyntheticDataset:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"dataset file is not valid JSON: {exc}") from exc
    for fieldname in ("format_version", "env", "k", "input_dim", "action_dim", "inner_lr", "X_d", "Y_d"):
        if fieldname not in doc:
            raise DatasetFormatError(f"dataset file missing field {fieldname!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise DatasetFormatError(
            f"unsupported format_version {doc['format_version']} (expected {FORMAT_VERSION})"
        )
    env_doc = doc["env"]
    if env_doc.get("kind") != ENV_KIND:
        raise DatasetFormatError(f"unsupported env kind {env_doc.get('kind')!r}")
    missing = [f for f in _ENV_FIELDS if f not in env_doc]
    if missing:
        raise DatasetFormatError(f"dataset file missing env field {missing[0]!r}")
    config = envmod.CartPoleConfig(**{f: env_doc[f] for f in _ENV_FIELDS})
    k, input_dim, action_dim = doc["k"], doc["input_dim"], doc["action_dim"]
    x = np.asarray(doc["X_d"], dtype=np.float64)
    y = np.asarray(doc["Y_d"], dtype=np.float64)
    if x.size != k * input_dim or y.size != k * action_dim:
        raise DatasetFormatError("X_d/Y_d lengths do not match k and the declared dims")
    provenance = doc.get("provenance", {})
    return SyntheticDataset(
        x.reshape(k, input_dim), y.reshape(k, action_dim),
        inner_lr=float(doc["inner_lr"]), env=config,
        lambda_id=str(provenance.get("lambda_spec", "lambda")), provenance=dict(provenance),
    )


def encoder_to_text(split: "EncoderSplit", config: envmod.CartPoleConfig) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "encoder",
        "split_index": split.split_index,
        "total_layers": split.total_layers,
        "tanh_on_last": split.encoder_tanh_last,
        "env": {"kind": ENV_KIND, **{f: getattr(config, f) for f in _ENV_FIELDS}},
        "weights": [[float(x) for x in w.reshape(-1)] for w in split.encoder.weights],
        "biases": [[float(x) for x in b] for b in split.encoder.biases],
        "shapes": [list(w.shape) for w in split.encoder.weights],
    }
    return _fmt_json(doc) + "\n"


def encoder_from_text(text: str) -> tuple[nets.LearnerParams, int, int, bool]:
    """Returns (encoder params, split_index, total_layers, tanh_on_last)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"encoder file is not valid JSON: {exc}") from exc
    for fieldname in ("format_version", "kind", "split_index", "total_layers", "tanh_on_last", "weights", "biases", "shapes"):
        if fieldname not in doc:
            raise DatasetFormatError(f"encoder file missing field {fieldname!r}")
    if doc["format_version"] != FORMAT_VERSION or doc["kind"] != "encoder":
        raise DatasetFormatError("unsupported encoder file version or kind")
    weights = [
        np.asarray(flat, dtype=np.float64).reshape(shape)
        for flat, shape in zip(doc["weights"], doc["shapes"])
    ]
    biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    params = nets.LearnerParams(weights, biases, provenance=("encoder", 0, doc["split_index"]))
    return params, int(doc["split_index"]), int(doc["total_layers"]), bool(doc["tanh_on_last"])


# ---------------------------------------------------------------------------
# inner training
# ---------------------------------------------------------------------------


def _inner_train_on_tape(
    tape: dd.Tape,
    phi_vars: list[dd.Var],
    feat: dd.Var,
    y_var: dd.Var,
    eta_var: dd.Var,
    steps: int,
) -> tuple[list[dd.Var], dd.Var]:
    """Record ``steps`` full-batch SGD steps on the mean-squared-error
    between prediction logits and soft labels; returns (trained parameter
    vars, first-step loss var)."""
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    current = phi_vars
    first_loss = None
    for _ in range(steps):
        logits = nets.forward_on_tape(current, feat)
        loss = dd.vmean(dd.square(dd.sub(logits, y_var)))
        if first_loss is None:
            first_loss = loss
        grads = dd.recorded_gradient(tape, loss, current)
        current = [dd.sub(p, dd.mul(eta_var, g)) for p, g in zip(current, grads)]
    return current, first_loss


def inner_train(
    init: nets.LearnerParams, dataset: SyntheticDataset, steps: int = 1
) -> tuple[nets.LearnerParams, dd.Tape]:
    """Train a learner on the synthetic dataset; the whole computation is
    recorded so dataset gradients can flow through it."""
    if steps < 1:
        raise ContractViolation("steps must be >= 1")
    if init.weights:
        if init.weights[0].shape[0] != dataset.input_dim:
            raise ContractViolation("dataset input_dim does not match the learner")
        if init.weights[-1].shape[1] != dataset.action_dim:
            raise ContractViolation("dataset action_dim does not match the learner")
    tape = dd.Tape()
    x_var = tape.leaf(dataset.states)
    y_var = tape.leaf(dataset.labels)
    eta_var = tape.leaf(np.float64(dataset.inner_lr))
    phi_vars = nets.params_on_tape(tape, init)
    trained_vars, _ = _inner_train_on_tape(tape, phi_vars, x_var, y_var, eta_var, steps)
    trained = nets.values_to_params(trained_vars, init)
    return trained, tape


# ---------------------------------------------------------------------------
# encoder splits
# ---------------------------------------------------------------------------

REFERENCE_HIDDEN = (64, 64)


@dataclass
class EncoderSplit:
    """Split of the reference network at layer ``split_index``: layers below
    it form a persistent, outer-trained encoder; layers above it are the
    resampled learner. 0 means no encoder (full distillation); the maximum
    means the learner is empty and the run degenerates to directly training
    the encoder."""

    split_index: int
    total_layers: int
    encoder: nets.LearnerParams
    learner_dist: nets.LearnerDistribution | None  # None iff split covers all layers

    def __post_init__(self):
        if not 0 <= self.split_index <= self.total_layers:
            raise ContractViolation("split_index must be in [0, total_layers]")
        if self.encoder.n_layers != self.split_index:
            raise ContractViolation("encoder must hold exactly the split prefix")
        if (self.learner_dist is None) != (self.split_index == self.total_layers):
            raise ContractViolation("learner_dist must be None exactly at a full split")

    @property
    def encoder_tanh_last(self) -> bool:
        # the final reference layer stays linear when the encoder owns it
        return self.split_index < self.total_layers


def make_encoder_split(
    config: envmod.CartPoleConfig,
    split_index: int,
    seed: int,
    hidden: tuple[int, ...] = REFERENCE_HIDDEN,
) -> EncoderSplit:
    """Build the split of the reference policy net (4N -> 64 -> 64 -> 2N)."""
    dims = (config.obs_dim, *hidden, config.action_count)
    total = len(dims) - 1
    if not 0 <= split_index <= total:
        raise ContractViolation(f"split_index must be in [0, {total}]")
    gen = rng_mod.substream(seed, "encoder-init")
    weights, biases = [], []
    for i in range(split_index):
        gain = 0.01 if i == total - 1 else float(np.sqrt(2.0))
        weights.append(nets._orthogonal_matrix(gen, dims[i], dims[i + 1], gain))
        biases.append(np.zeros(dims[i + 1]))
    encoder = nets.LearnerParams(weights, biases, provenance=("encoder", seed, split_index))
    if split_index == total:
        learner_dist = None
    else:
        learner_dist = nets.LearnerDistribution(
            arch_mode=nets.FIXED,
            base_arch=nets.ArchitectureSpec(dims[split_index], tuple(dims[split_index + 1 : -1]), dims[-1]),
            init=nets.InitScheme(),
            base_seed=rng_mod.stage_seed(seed, "train-learners"),
            dist_id=f"split-{split_index}",
        )
    return EncoderSplit(split_index, total, encoder, learner_dist)


def _sample_split_learner(split: EncoderSplit | None, dist: nets.LearnerDistribution | None, draw: int) -> nets.LearnerParams:
    if split is not None and split.learner_dist is None:
        return nets.LearnerParams([], [], provenance=("identity", 0, draw))
    active = split.learner_dist if split is not None else dist
    return nets.sample_learner(active, draw)


# ---------------------------------------------------------------------------
# the meta loop
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistillConfig:
    k: int = 2
    meta_epoch_budget: int = 3000
    ppo: ppo.PpoHyperparams = field(default_factory=ppo.PpoHyperparams)
    distiller_lr: float = 2.5e-4
    initial_inner_lr: float = 2e-2
    inner_steps: int = 1
    convergence_window: int = 100
    convergence_patience: int = 300
    convergence_min_improvement: float = 0.01
    # the floor keeps the dataset's gradient signal alive (it scales with the
    # inner rate); at 1e-6 a downward drift early in training is unrecoverable
    inner_lr_floor: float = 2e-3
    seed: int = 0

    def __post_init__(self):
        if self.meta_epoch_budget < 1:
            raise ContractViolation("meta_epoch_budget must be >= 1")
        if self.inner_steps < 1:
            raise ContractViolation("inner_steps must be >= 1")
        if self.k < 1:
            raise ContractViolation("k must be >= 1")
        if self.initial_inner_lr <= 0 or self.distiller_lr < 0:
            raise ContractViolation("initial_inner_lr must be > 0 and distiller_lr >= 0")


@dataclass
class EpochReport:
    epoch: int
    mean_reward: float
    std_reward: float
    episodes: int
    transitions: int
    policy_loss: float
    critic_loss: float
    inner_lr: float


@dataclass
class DistillReport:
    curve: list[EpochReport]
    best_epoch: int
    best_window_reward: float
    random_baseline_mean: float
    did_not_learn: bool
    stop_reason: str

    @property
    def epochs_run(self) -> int:
        return len(self.curve)

    def epochs_to_reach(self, window_reward: float) -> int | None:
        """First epoch whose trailing-window mean reached the level, if any."""
        window = max(1, min(len(self.curve), 100))
        rewards = [p.mean_reward for p in self.curve]
        for i in range(len(rewards)):
            lo = max(0, i - window + 1)
            if float(np.mean(rewards[lo : i + 1])) >= window_reward:
                return i
        return None


class _DistillRun:
    """Mutable state of one distillation: dataset, critic, optimizers, encoder."""

    def __init__(
        self,
        config: envmod.CartPoleConfig,
        dist: nets.LearnerDistribution | None,
        cfg: DistillConfig,
        split: EncoderSplit | None,
    ):
        self.env = config
        self.dist = dist
        self.cfg = cfg
        self.split = split
        self.dataset = initialize_dataset(config, cfg.k, rng_mod.stage_seed(cfg.seed, "dataset-init"))
        self.dataset.inner_lr = cfg.initial_inner_lr
        self.critic = ppo.make_critic(
            config.obs_dim, REFERENCE_HIDDEN, rng_mod.stage_seed(cfg.seed, "critic-init")
        )
        self.theta_opt = Adam(cfg.distiller_lr)
        self.critic_opt = Adam(cfg.ppo.critic_lr)
        self.encoder = split.encoder if (split is not None and split.split_index > 0) else None
        self.encoder_tanh_last = split.encoder_tanh_last if split is not None else True

    # -- parameter plumbing -------------------------------------------------

    def _theta_list(self) -> list[np.ndarray]:
        out = [self.dataset.states, self.dataset.labels, np.float64(self.dataset.inner_lr)]
        if self.encoder is not None:
            for w, b in zip(self.encoder.weights, self.encoder.biases):
                out.extend((w, b))
        return out

    def _apply_theta(self, values: list[np.ndarray]):
        self.dataset.states = values[0]
        self.dataset.labels = values[1]
        self.dataset.inner_lr = float(max(values[2], self.cfg.inner_lr_floor))
        if self.encoder is not None:
            rest = values[3:]
            self.encoder = nets.LearnerParams(
                rest[0::2], rest[1::2], provenance=self.encoder.provenance
            )

    def _trained_policy(self, phi_init: nets.LearnerParams) -> nets.LearnerParams:
        """Learner after inner training on the current dataset (plain values)."""
        tape = dd.Tape()
        trained_vars = self._record_inner(tape, phi_init)[0]
        return nets.values_to_params(trained_vars, phi_init)

    def _record_inner(self, tape: dd.Tape, phi_init: nets.LearnerParams):
        """Record inner training on the current dataset; returns
        (trained vars, inner loss var, theta vars, encoder vars, phi vars)."""
        x_var = tape.leaf(self.dataset.states)
        y_var = tape.leaf(self.dataset.labels)
        eta_var = tape.leaf(np.float64(self.dataset.inner_lr))
        enc_vars = None
        feat = x_var
        if self.encoder is not None:
            enc_vars = nets.params_on_tape(tape, self.encoder)
            feat = nets.encoder_on_tape(enc_vars, x_var, self.encoder.n_layers, self.encoder_tanh_last)
        phi_vars = nets.params_on_tape(tape, phi_init)
        trained_vars, inner_loss = _inner_train_on_tape(
            tape, phi_vars, feat, y_var, eta_var, self.cfg.inner_steps
        )
        return trained_vars, inner_loss, [x_var, y_var, eta_var], enc_vars, phi_vars

    def meta_step_gradients(
        self,
        phi_init: nets.LearnerParams,
        obs: np.ndarray,
        actions: np.ndarray,
        behavior_logp: np.ndarray,
        advantages: np.ndarray,
    ) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Retrain from ``phi_init`` on the current dataset, evaluate the
        clipped loss on the minibatch, and differentiate it back to the
        dataset (plus encoder, in split runs).

        Returns (loss value, gradients aligned with ``_theta_list``, values
        of the phi_init leaves actually used). The leaf values are exposed
        so callers can assert that every retraining starts from the same
        initialization within a meta-epoch.
        """
        tape = dd.Tape()
        trained_vars, _, theta_vars, enc_vars, phi_vars = self._record_inner(tape, phi_init)
        loss = ppo.ppo_policy_loss(
            trained_vars, obs, actions, behavior_logp,
            advantages, self.cfg.ppo.clip_epsilon,
            encoder_vars=enc_vars, encoder_tanh_last=self.encoder_tanh_last,
        )
        wrt = theta_vars + (enc_vars or [])
        grads = dd.gradient(tape, loss, wrt)
        return float(loss.value), [grads[v] for v in wrt], [v.value for v in phi_vars]

    # -- one meta-epoch ------------------------------------------------------

    def meta_epoch(self, draw: int) -> EpochReport:
        hyper = self.cfg.ppo
        phi_init = _sample_split_learner(self.split, self.dist, draw)
        actor = self._trained_policy(phi_init)
        traj = ppo.collect_episodes(
            self.env, actor, self.critic,
            episodes=hyper.episodes_per_epoch,
            truncation=self.env.rollout_truncation,
            seed=rng_mod.stage_seed(self.cfg.seed, "rollout", draw),
            encoder=self.encoder,
            encoder_tanh_last=self.encoder_tanh_last,
        )
        adv, ret = ppo.gae(traj, hyper.discount_gamma, hyper.gae_lambda)
        n = traj.n_transitions
        policy_losses, critic_losses = [], []
        for pe in range(hyper.policy_epochs):
            perm = rng_mod.substream(
                self.cfg.seed, "shuffle", draw * hyper.policy_epochs + pe
            ).permutation(n)
            for idx in ppo.minibatch_plan(n, hyper.batch_size, perm):
                batch_adv = ppo.normalize_advantages(adv[idx]) if hyper.normalize_advantages else adv[idx]

                # meta step: retrain from phi_init on the current dataset,
                # then differentiate the clipped loss back to the dataset
                loss_value, theta_grads, _ = self.meta_step_gradients(
                    phi_init, traj.obs[idx], traj.actions[idx], traj.behavior_logp[idx], batch_adv
                )
                new_theta = self.theta_opt.step(self._theta_list(), theta_grads)
                policy_losses.append(loss_value)

                ctape = dd.Tape()
                cvars = nets.params_on_tape(ctape, self.critic)
                closs = ppo.critic_loss(cvars, traj.obs[idx], ret[idx])
                cgrads = dd.gradient(ctape, closs, cvars)
                new_critic = self.critic_opt.step(
                    [v.value for v in cvars], [cgrads[v] for v in cvars]
                )
                critic_losses.append(float(closs.value))

                self._apply_theta(new_theta)
                self.critic = nets.LearnerParams(
                    new_critic[0::2], new_critic[1::2], provenance=self.critic.provenance
                )
        return EpochReport(
            epoch=draw,
            mean_reward=float(traj.episode_rewards.mean()),
            std_reward=float(traj.episode_rewards.std()),
            episodes=traj.n_episodes,
            transitions=n,
            policy_loss=float(np.mean(policy_losses)) if policy_losses else 0.0,
            critic_loss=float(np.mean(critic_losses)) if critic_losses else 0.0,
            inner_lr=self.dataset.inner_lr,
        )


def _random_probe_mean(config: envmod.CartPoleConfig, seed: int, episodes: int = 100) -> float:
    actor = nets.LearnerParams(
        [np.zeros((config.obs_dim, config.action_count))], [np.zeros(config.action_count)]
    )
    traj = ppo.collect_episodes(
        config, actor, None, episodes=episodes,
        truncation=config.rollout_truncation, seed=seed,
    )
    return float(traj.episode_rewards.mean())


def _run(
    config: envmod.CartPoleConfig,
    dist: nets.LearnerDistribution | None,
    cfg: DistillConfig,
    split: EncoderSplit | None,
    progress=None,
) -> tuple[SyntheticDataset, nets.LearnerParams | None, DistillReport]:
    run = _DistillRun(config, dist, cfg, split)
    random_mean = _random_probe_mean(config, rng_mod.stage_seed(cfg.seed, "random-probe"))
    rewards: list[float] = []
    curve: list[EpochReport] = []
    best = (-np.inf, 0, run.dataset.copy(), None if run.encoder is None else run.encoder.copy())
    milestone = 0.0
    stall = 0
    stop_reason = "budget"
    for epoch in range(cfg.meta_epoch_budget):
        report = run.meta_epoch(epoch)
        curve.append(report)
        rewards.append(report.mean_reward)
        window = rewards[-cfg.convergence_window :]
        moving = float(np.mean(window))
        if moving > best[0]:
            best = (
                moving, epoch, run.dataset.copy(),
                None if run.encoder is None else run.encoder.copy(),
            )
        if moving >= milestone * (1.0 + cfg.convergence_min_improvement):
            milestone = moving
            stall = 0
        else:
            stall += 1
        if progress is not None:
            progress(report)
        if stall >= cfg.convergence_patience:
            stop_reason = "converged"
            break
    best_reward, best_epoch, dataset, encoder = best
    did_not_learn = bool(best_reward <= random_mean * 1.25)
    dataset.lambda_id = (dist.dist_id if dist is not None else
                         (split.learner_dist.dist_id if split and split.learner_dist else "identity"))
    dataset.provenance = {
        "seed": int(cfg.seed),
        "meta_epochs": len(curve),
        "lambda_spec": dataset.lambda_id,
        "best_window_reward": float(best_reward),
    }
    report = DistillReport(
        curve=curve,
        best_epoch=best_epoch,
        best_window_reward=float(best_reward),
        random_baseline_mean=random_mean,
        did_not_learn=did_not_learn,
        stop_reason=stop_reason,
    )
    return dataset, encoder, report


def distill(
    config: envmod.CartPoleConfig,
    dist: nets.LearnerDistribution,
    cfg: DistillConfig,
    progress=None,
) -> tuple[SyntheticDataset, DistillReport]:
    """Run meta-epochs until reward convergence or budget; returns the
    dataset snapshot with the best trailing-window rollout reward."""
    dataset, _, report = _run(config, dist, cfg, split=None, progress=progress)
    return dataset, report


def distill_with_encoder(
    config: envmod.CartPoleConfig,
    split: EncoderSplit,
    cfg: DistillConfig,
    progress=None,
) -> tuple[SyntheticDataset, nets.LearnerParams, DistillReport]:
    """Distill with a persistent encoder that is trained by the outer loss
    and never resampled; at split 0 this is exactly plain distillation, at
    the full split it reduces to directly training the encoder."""
    dataset, encoder, report = _run(config, dist=None, cfg=cfg, split=split, progress=progress)
    if encoder is None:
        encoder = nets.LearnerParams([], [], provenance=("encoder", cfg.seed, 0))
    return dataset, encoder, report


def run_meta_epoch(
    run: _DistillRun,
    draw: int,
) -> EpochReport:
    """One outer iteration: sample a learner, inner-train, roll out, then
    per minibatch update the dataset by meta-gradient and the critic by an
    ordinary gradient, retraining from the same initialization each time."""
    return run.meta_epoch(draw)


def new_run(
    config: envmod.CartPoleConfig,
    dist: nets.LearnerDistribution | None,
    cfg: DistillConfig,
    split: EncoderSplit | None = None,
) -> _DistillRun:
    return _DistillRun(config, dist, cfg, split)
