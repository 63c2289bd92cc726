"""N-dimensional cart-pole simulator.

The system is N independent classic cart-poles sharing one agent: each
timestep the agent pushes exactly one cart with force +F or -F (action
``a`` maps to dimension ``a // 2``, sign ``+`` when ``a % 2 == 0``), every
other dimension integrates with zero applied force. The episode terminates
as soon as any dimension leaves the position or angle envelope; every step
taken (including the failing one) is worth +1 reward.

State is a pure value and ``step`` is a pure function, so environments can
run in any number of workers. Integration is semi-implicit Euler
(velocities first, then positions). Observations are the per-dimension
quadruples [x, x_dot, theta, theta_dot] concatenated in dimension order.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from . import rng as rng_mod
from .errors import ContractViolation


@dataclass(frozen=True)
class CartPoleConfig:
    """Physics constants and episode bookkeeping for one environment."""

    n_dims: int = 1
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    force_mag: float = 10.0
    integration_dt: float = 0.02
    angle_threshold: float = 0.20943951023931953  # 12 degrees
    position_threshold: float = 2.4
    max_steps: int = 500
    rollout_truncation: int = 200  # step cap used while collecting training rollouts

    def __post_init__(self):
        positive = (
            self.n_dims, self.gravity, self.cart_mass, self.pole_mass,
            self.pole_half_length, self.force_mag, self.integration_dt,
            self.angle_threshold, self.position_threshold,
        )
        if any(v <= 0 for v in positive):
            raise ContractViolation("all physical constants must be > 0")
        if self.max_steps < 1:
            raise ContractViolation("max_steps must be >= 1")
        if not 1 <= self.rollout_truncation <= self.max_steps:
            raise ContractViolation("rollout_truncation must be in [1, max_steps]")

    @property
    def obs_dim(self) -> int:
        return 4 * self.n_dims

    @property
    def action_count(self) -> int:
        return 2 * self.n_dims

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EnvState:
    """Full physical state: one [x, x_dot, theta, theta_dot] row per dimension."""

    quads: np.ndarray  # (n_dims, 4) float64
    step_count: int = 0

    def observation(self) -> np.ndarray:
        """Length-4N vector, quadruples grouped per dimension."""
        return self.quads.reshape(-1).copy()


@dataclass
class StepResult:
    next_state: EnvState
    reward: float
    terminated: bool  # a threshold was violated
    truncated: bool   # the active step cap was reached


def reset(config: CartPoleConfig, seed: int) -> EnvState:
    """Fresh episode state, every component i.i.d. uniform on [-0.05, 0.05]."""
    gen = rng_mod.stream(seed)
    quads = gen.uniform(-0.05, 0.05, size=(config.n_dims, 4))
    return EnvState(quads=quads, step_count=0)


def is_terminal(config: CartPoleConfig, state: EnvState) -> bool:
    x = state.quads[:, 0]
    theta = state.quads[:, 2]
    return bool(
        np.any(np.abs(x) > config.position_threshold)
        or np.any(np.abs(theta) > config.angle_threshold)
    )


def step(config: CartPoleConfig, state: EnvState, action: int, step_cap: int | None = None) -> StepResult:
    """Advance one timestep. ``step_cap`` defaults to ``config.max_steps``;
    rollouts during distillation pass ``config.rollout_truncation``."""
    if not 0 <= action < config.action_count:
        raise ContractViolation(f"action {action} out of range [0, {config.action_count})")
    if is_terminal(config, state):
        raise ContractViolation("step called on a terminal state")
    cap = config.max_steps if step_cap is None else step_cap

    forces = np.zeros(config.n_dims)
    forces[action // 2] = config.force_mag if action % 2 == 0 else -config.force_mag

    x, x_dot, theta, theta_dot = (state.quads[:, i] for i in range(4))
    total_mass = config.cart_mass + config.pole_mass
    polemass_length = config.pole_mass * config.pole_half_length
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)

    temp = (forces + polemass_length * theta_dot**2 * sin_t) / total_mass
    theta_acc = (config.gravity * sin_t - cos_t * temp) / (
        config.pole_half_length * (4.0 / 3.0 - config.pole_mass * cos_t**2 / total_mass)
    )
    x_acc = temp - polemass_length * theta_acc * cos_t / total_mass

    # semi-implicit Euler: velocities first, then positions
    dt = config.integration_dt
    new_x_dot = x_dot + dt * x_acc
    new_x = x + dt * new_x_dot
    new_theta_dot = theta_dot + dt * theta_acc
    new_theta = theta + dt * new_theta_dot

    quads = np.stack([new_x, new_x_dot, new_theta, new_theta_dot], axis=1)
    next_state = EnvState(quads=quads, step_count=state.step_count + 1)
    terminated = is_terminal(config, next_state)
    truncated = (not terminated) and next_state.step_count >= cap
    return StepResult(next_state=next_state, reward=1.0, terminated=terminated, truncated=truncated)
