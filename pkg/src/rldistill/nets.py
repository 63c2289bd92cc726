"""Policy/critic MLPs, initialization schemes, and learner distributions.

A learner is a tanh MLP mapping observations to action logits (or to one
value estimate, for the critic). Weights are stored as (fan_in, fan_out)
matrices so the forward pass is ``h @ W + b``; biases start at zero in
every scheme. Distributions pair an architecture sampler with an init
scheme and a base seed, so draw ``i`` of a distribution is reproducible
on its own, independent of any other draw.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffengine as dd
from . import rng as rng_mod
from .errors import ContractViolation

ORTHOGONAL = "orthogonal"
XAVIER_NORMAL = "xavier_normal"

FIXED = "fixed"
RANDOM_HIDDEN_WIDTH = "random_h"
RANDOM_DEPTH = "random_l"

HIDDEN_WIDTH_CHOICES = (32, 64, 128, 256)
DEPTH_CHOICES = (1, 2, 3, 4, 5, 6)


@dataclass(frozen=True)
class ArchitectureSpec:
    """Layer sizes of one MLP; hidden layers use tanh, the output is linear.

    ``hidden_widths`` may be empty (pure linear probe), which the
    encoder-split learners rely on.
    """

    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int

    def layer_shapes(self) -> list[tuple[int, int]]:
        dims = (self.input_dim, *self.hidden_widths, self.output_dim)
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]


@dataclass(frozen=True)
class InitScheme:
    """Weight init: scaled-orthogonal or Xavier-normal, one sigma for hidden
    layers and one for the final layer."""

    kind: str = ORTHOGONAL
    hidden_sigma: float = float(np.sqrt(2.0))
    final_sigma: float = 0.01

    def __post_init__(self):
        if self.kind not in (ORTHOGONAL, XAVIER_NORMAL):
            raise ContractViolation(f"unknown init kind {self.kind!r}")
        if self.hidden_sigma <= 0 or self.final_sigma <= 0:
            raise ContractViolation("init sigmas must be > 0")


@dataclass(frozen=True)
class LearnerDistribution:
    """Distribution of learner networks: architecture sampler + init + seed."""

    arch_mode: str  # FIXED, RANDOM_HIDDEN_WIDTH or RANDOM_DEPTH
    base_arch: ArchitectureSpec
    init: InitScheme
    base_seed: int
    dist_id: str = "lambda"
    width_choices: tuple[int, ...] = HIDDEN_WIDTH_CHOICES
    depth_choices: tuple[int, ...] = DEPTH_CHOICES

    def with_seed(self, base_seed: int) -> "LearnerDistribution":
        return LearnerDistribution(
            self.arch_mode, self.base_arch, self.init, base_seed,
            self.dist_id, self.width_choices, self.depth_choices,
        )


@dataclass
class LearnerParams:
    """Sampled parameters of one learner (weights (in, out), zero-init biases)."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    provenance: tuple[str, int, int] = ("", 0, 0)  # (distribution id, seed, draw)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "LearnerParams":
        return LearnerParams(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], self.provenance
        )


def _orthogonal_matrix(gen: np.random.Generator, fan_in: int, fan_out: int, gain: float) -> np.ndarray:
    """Scaled matrix whose smaller-dimension Gram equals gain^2 * I."""
    a = gen.standard_normal((fan_in, fan_out))
    if fan_in >= fan_out:
        q, r = np.linalg.qr(a)
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        w = q
    else:
        q, r = np.linalg.qr(a.T)
        q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
        w = q.T
    return gain * w


def _xavier_matrix(gen: np.random.Generator, fan_in: int, fan_out: int, gain: float) -> np.ndarray:
    std = gain * np.sqrt(2.0 / (fan_in + fan_out))
    return std * gen.standard_normal((fan_in, fan_out))


def sample_architecture(dist: LearnerDistribution, gen: np.random.Generator) -> ArchitectureSpec:
    base = dist.base_arch
    if dist.arch_mode == FIXED:
        return base
    if dist.arch_mode == RANDOM_HIDDEN_WIDTH:
        width = int(dist.width_choices[gen.integers(0, len(dist.width_choices))])
        return ArchitectureSpec(base.input_dim, (width,) * len(base.hidden_widths), base.output_dim)
    if dist.arch_mode == RANDOM_DEPTH:
        depth = int(dist.depth_choices[gen.integers(0, len(dist.depth_choices))])
        width = base.hidden_widths[0] if base.hidden_widths else 64
        return ArchitectureSpec(base.input_dim, (width,) * depth, base.output_dim)
    raise ContractViolation(f"unknown architecture mode {dist.arch_mode!r}")


def sample_learner(dist: LearnerDistribution, draw: int) -> LearnerParams:
    """Draw learner ``draw`` from the distribution, reproducibly."""
    gen = rng_mod.substream(dist.base_seed, "learner-sample", draw)
    arch = sample_architecture(dist, gen)
    shapes = arch.layer_shapes()
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(shapes):
        gain = dist.init.final_sigma if i == len(shapes) - 1 else dist.init.hidden_sigma
        if dist.init.kind == ORTHOGONAL:
            w = _orthogonal_matrix(gen, fan_in, fan_out, gain)
        else:
            w = _xavier_matrix(gen, fan_in, fan_out, gain)
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return LearnerParams(weights, biases, provenance=(dist.dist_id, dist.base_seed, draw))


def forward_logits(params: LearnerParams, obs: np.ndarray) -> np.ndarray:
    """Plain forward pass; ``obs`` is one observation (d,) or a batch (b, d)."""
    h = np.asarray(obs, dtype=np.float64)
    squeeze = h.ndim == 1
    if squeeze:
        h = h[None, :]
    if params.weights and h.shape[1] != params.weights[0].shape[0]:
        raise ContractViolation(
            f"observation dim {h.shape[1]} != input dim {params.weights[0].shape[0]}"
        )
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
    if params.weights:
        h = h @ params.weights[-1] + params.biases[-1]
    return h[0] if squeeze else h


def params_on_tape(tape: dd.Tape, params: LearnerParams) -> list[dd.Var]:
    """Record parameters as differentiable leaves: [w0, b0, w1, b1, ...]."""
    leaves = []
    for w, b in zip(params.weights, params.biases):
        leaves.append(tape.leaf(w))
        leaves.append(tape.leaf(b))
    return leaves


def forward_on_tape(param_vars: list[dd.Var], x: dd.Var) -> dd.Var:
    """Recorded forward pass over interleaved [w, b, ...] parameter vars.

    ``x`` must be 2-d (batch, input_dim). With zero layers the input passes
    through unchanged (identity learner in a full-encoder split).
    """
    h = x
    n_layers = len(param_vars) // 2
    for i in range(n_layers):
        w, b = param_vars[2 * i], param_vars[2 * i + 1]
        h = dd.add(dd.matmul(h, w), b)
        if i < n_layers - 1:
            h = dd.tanh(h)
    return h


def encoder_forward(enc: LearnerParams, obs: np.ndarray, tanh_on_last: bool = True) -> np.ndarray:
    """Plain forward through an encoder prefix of a split network.

    ``tanh_on_last`` is False only when the encoder owns the network's
    output layer (full split), which stays linear. With zero layers this is
    the identity.
    """
    h = np.asarray(obs, dtype=np.float64)
    for i, (w, b) in enumerate(zip(enc.weights, enc.biases)):
        h = h @ w + b
        if tanh_on_last or i < enc.n_layers - 1:
            h = np.tanh(h)
    return h


def encoder_on_tape(enc_vars: list[dd.Var], x: dd.Var, n_layers: int, tanh_on_last: bool = True) -> dd.Var:
    """Recorded counterpart of :func:`encoder_forward`."""
    h = x
    for i in range(n_layers):
        w, b = enc_vars[2 * i], enc_vars[2 * i + 1]
        h = dd.add(dd.matmul(h, w), b)
        if tanh_on_last or i < n_layers - 1:
            h = dd.tanh(h)
    return h


def values_to_params(param_vars: list[dd.Var], template: LearnerParams) -> LearnerParams:
    """Copy tape values back into a plain parameter struct."""
    weights = [param_vars[2 * i].value.copy() for i in range(len(template.weights))]
    biases = [param_vars[2 * i + 1].value.copy() for i in range(len(template.biases))]
    return LearnerParams(weights, biases, provenance=template.provenance)


def policy_probs(logits: np.ndarray) -> np.ndarray:
    """Stable softmax (max-subtracted) along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_policy_probs(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=-1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))


def params_to_json(params: LearnerParams) -> dict:
    return {
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "provenance": list(params.provenance),
    }


def params_from_json(obj: dict) -> LearnerParams:
    return LearnerParams(
        [np.asarray(w, dtype=np.float64) for w in obj["weights"]],
        [np.asarray(b, dtype=np.float64) for b in obj["biases"]],
        provenance=tuple(obj.get("provenance", ("", 0, 0))),
    )
