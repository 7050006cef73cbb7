"""Particle swarm machinery: standard and generalized-momentum evolution.

Positions are hyper-parameter vectors; for latent factor training a
particle sits at ``[eta, lambda]``. Fitness is not an objective value but a
particle's share of the swarm's validation-error change within one
iteration (see :func:`fitness_contributions`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

__all__ = [
    "SearchBox",
    "PSOConstants",
    "Particle",
    "SwarmState",
    "pso_step",
    "gm_pso_step",
    "gamma_schedule",
    "bound",
    "fitness_contributions",
    "improvement_rate",
    "update_bests",
    "init_swarm",
    "STALL_EPS",
    "VELOCITY_FRACTION",
]

STALL_EPS = 1e-12
VELOCITY_FRACTION = 0.2


@dataclass(frozen=True, eq=False)
class SearchBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64)).copy()
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64)).copy()
        if lo.shape != hi.shape or lo.ndim != 1 or lo.size < 1:
            raise ValueError("lo and hi must be equal-length 1-D vectors")
        if not np.all(lo < hi):
            raise ValueError(f"need lo < hi in every dimension, got lo={lo}, hi={hi}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_intervals(cls, *intervals) -> "SearchBox":
        lo, hi = zip(*intervals)
        return cls(np.array(lo), np.array(hi))

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def width(self) -> np.ndarray:
        return self.hi - self.lo

    def velocity_limit(self, fraction: float = VELOCITY_FRACTION) -> np.ndarray:
        return fraction * self.width

    def contains(self, h) -> bool:
        h = np.asarray(h)
        return bool(np.all(h >= self.lo) and np.all(h <= self.hi))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)


class PSOConstants(NamedTuple):
    w: float = 0.729
    c1: float = 2.0
    c2: float = 2.0


@dataclass
class Particle:
    """One swarm member.

    ``position``/``velocity`` hold the latest state; ``prev_position`` and
    ``prev_velocity`` hold the state one step earlier (None before the first
    step). ``fitness_prev`` and ``ir_prev`` default to -inf so the first
    comparison against them always succeeds.
    """

    position: np.ndarray
    velocity: np.ndarray
    pbest: np.ndarray
    prev_position: np.ndarray | None = None
    prev_velocity: np.ndarray | None = None
    pbest_fitness: float = -math.inf
    fitness: float = -math.inf
    fitness_prev: float = -math.inf
    ir: float = -math.inf
    ir_prev: float = -math.inf
    steps: int = 0

    @classmethod
    def at(cls, position) -> "Particle":
        h = np.array(position, dtype=np.float64)
        return cls(position=h, velocity=np.zeros_like(h), pbest=h.copy())


def _draw(rng: np.random.Generator, dim: int, per_dimension: bool):
    if per_dimension:
        return rng.random(dim), rng.random(dim)
    r1, r2 = rng.random(2)
    return r1, r2


def _attraction(p: Particle, gbest, consts: PSOConstants, r1, r2):
    h = p.position
    return consts.w * p.velocity + consts.c1 * r1 * (p.pbest - h) + consts.c2 * r2 * (gbest - h)


def pso_step(
    p: Particle,
    gbest,
    consts: PSOConstants,
    rng: np.random.Generator,
    per_dimension: bool = False,
) -> Particle:
    """Inertia plus attraction to pbest and gbest; returns the moved particle."""
    r1, r2 = _draw(rng, p.position.size, per_dimension)
    s = _attraction(p, np.asarray(gbest, dtype=np.float64), consts, r1, r2)
    h = p.position + s
    return replace(
        p,
        position=h,
        velocity=s,
        prev_position=p.position,
        prev_velocity=p.velocity,
        steps=p.steps + 1,
    )


def gm_pso_step(
    p: Particle,
    gbest,
    consts: PSOConstants,
    gamma: float,
    t: int,
    rng: np.random.Generator,
    per_dimension: bool = False,
) -> Particle:
    """PSO step with generalized-momentum history terms.

    For ``t == 1`` this is :func:`pso_step`. Afterwards the velocity gains
    ``gamma * (s[t-1] - s[t-2])`` and the position gains
    ``gamma * (h[t-1] - h[t-2])`` on top of the standard move.
    """
    if t <= 1:
        return pso_step(p, gbest, consts, rng, per_dimension)
    if p.prev_position is None or p.prev_velocity is None:
        raise RuntimeError(f"particle has no step history at t={t}")
    r1, r2 = _draw(rng, p.position.size, per_dimension)
    s = _attraction(p, np.asarray(gbest, dtype=np.float64), consts, r1, r2)
    s = s + gamma * (p.velocity - p.prev_velocity)
    h = p.position + s + gamma * (p.position - p.prev_position)
    return replace(
        p,
        position=h,
        velocity=s,
        prev_position=p.position,
        prev_velocity=p.velocity,
        steps=p.steps + 1,
    )


def gamma_schedule(t: int, m: int = 5, gamma_min: float = 0.4, gamma_max: float = 1.4) -> float:
    """Staircase momentum coefficient: +0.1 every ``m`` iterations, capped."""
    if t < 0 or m < 1:
        raise ValueError(f"need t >= 0 and m >= 1, got t={t}, m={m}")
    return min(gamma_min + 0.1 * (t // m), gamma_max)


def bound(p: Particle, box: SearchBox, s_max) -> Particle:
    """Clamp position into ``box`` and velocity into ``[-s_max, s_max]``."""
    s_max = np.broadcast_to(np.asarray(s_max, dtype=np.float64), p.velocity.shape)
    return replace(
        p,
        position=np.clip(p.position, box.lo, box.hi),
        velocity=np.clip(p.velocity, -s_max, s_max),
    )


def fitness_contributions(ledger: Sequence[float], a_prev: float | None = None) -> np.ndarray:
    """Each particle's share of this iteration's validation-error change.

    ``ledger`` is ``[A_0, A_1, ..., A_q]`` where ``A_0`` is the error after
    the previous iteration and ``A_j`` the error after particle j's
    sub-iteration. Returns ``(A_j - A_{j-1}) / (A_q - A_0)`` for j = 1..q,
    which sums to one. When the swarm-wide change is below ``STALL_EPS`` all
    contributions are zero.
    """
    a = np.asarray(ledger, dtype=np.float64)
    if a.ndim != 1 or a.size < 2:
        raise ValueError(f"ledger needs at least two values, got shape {a.shape}")
    if a_prev is not None and a[0] != a_prev:
        raise ValueError(f"ledger starts at {a[0]!r} but previous error is {a_prev!r}")
    denom = a[-1] - a[0]
    if abs(denom) < STALL_EPS:
        return np.zeros(a.size - 1)
    return np.diff(a) / denom


def improvement_rate(f_prev: float, f_cur: float, h_prev, h_cur, scale=None) -> float:
    """Fitness drop discounted by ``exp`` of the Euclidean displacement.

    ``scale`` (per-dimension widths) switches to a normalized distance.
    """
    delta = np.asarray(h_prev, dtype=np.float64) - np.asarray(h_cur, dtype=np.float64)
    if scale is not None:
        delta = delta / np.asarray(scale, dtype=np.float64)
    return (f_prev - f_cur) / math.exp(float(np.linalg.norm(delta)))


@dataclass
class SwarmState:
    particles: list
    box: SearchBox
    consts: PSOConstants = PSOConstants()
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    gbest: np.ndarray | None = None
    gbest_metric: float = -math.inf
    gbest_rule: str = "improvement"
    gamma: float = 0.4
    gamma_min: float = 0.4
    gamma_max: float = 1.4
    gamma_every: int = 5
    momentum: bool = True
    t: int = 0
    s_max: np.ndarray | None = None
    per_dimension_random: bool = False
    normalized_distance: bool = False
    ledger: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.particles) < 2:
            raise ValueError("a swarm needs at least two particles")
        if self.gbest_rule not in ("improvement", "fitness"):
            raise ValueError(f"unknown gbest rule {self.gbest_rule!r}")
        if self.s_max is None:
            self.s_max = self.box.velocity_limit()
        if self.gbest is None:
            self.gbest = np.mean([p.position for p in self.particles], axis=0)

    @property
    def q(self) -> int:
        return len(self.particles)

    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.particles])

    def evolve(self) -> None:
        """Advance the iteration counter and move every particle, then bound it."""
        self.t += 1
        moved = []
        for p in self.particles:
            if self.momentum:
                p = gm_pso_step(p, self.gbest, self.consts, self.gamma, self.t, self.rng, self.per_dimension_random)
            else:
                p = pso_step(p, self.gbest, self.consts, self.rng, self.per_dimension_random)
            moved.append(bound(p, self.box, self.s_max))
        self.particles = moved
        if self.momentum:
            self.gamma = gamma_schedule(self.t, self.gamma_every, self.gamma_min, self.gamma_max)

    def assess(self, ledger: Sequence[float]) -> np.ndarray:
        """Score the iteration from its error ledger and update the bests."""
        ledger = [float(a) for a in ledger]
        if len(ledger) != self.q + 1:
            raise ValueError(f"ledger has {len(ledger)} values, swarm needs {self.q + 1}")
        self.ledger.append(ledger)
        F = fitness_contributions(ledger)
        stalled = abs(ledger[-1] - ledger[0]) < STALL_EPS
        scale = self.box.width if self.normalized_distance else None
        for j, p in enumerate(self.particles):
            p.fitness_prev, p.fitness = p.fitness, float(F[j])
            p.ir_prev = p.ir
            if self.t >= 2 and p.prev_position is not None:
                p.ir = improvement_rate(p.fitness_prev, p.fitness, p.prev_position, p.position, scale)
        if stalled:
            return F
        if self.gbest_rule == "fitness" or self.t == 1:
            self.gbest_metric = -math.inf
        for j in range(self.q):
            update_bests(self, j)
        return F


def update_bests(state: SwarmState, j: int) -> SwarmState:
    """Refresh particle ``j``'s pbest and possibly the swarm's gbest.

    pbest moves to the current position when fitness rose over the previous
    iteration. gbest follows the running argmax of fitness at ``t == 1`` (and
    at every ``t`` under the ``"fitness"`` rule; ties keep the lower index);
    otherwise it moves to particle ``j`` whenever that particle's improvement
    rate rose over its own previous value.
    """
    p = state.particles[j]
    if p.fitness > p.fitness_prev:
        p.pbest = p.position.copy()
        p.pbest_fitness = p.fitness
    if state.gbest_rule == "fitness" or state.t == 1:
        if p.fitness > state.gbest_metric:
            state.gbest = p.position.copy()
            state.gbest_metric = p.fitness
    elif p.ir > p.ir_prev:
        state.gbest = p.position.copy()
        state.gbest_metric = p.ir
    return state


def init_swarm(
    q: int,
    box: SearchBox,
    rng: np.random.Generator,
    consts: PSOConstants = PSOConstants(),
    momentum: bool = True,
    **kwargs,
) -> SwarmState:
    """Positions uniform in ``box``, zero velocities, pbest at the start."""
    particles = [Particle.at(box.sample(rng)) for _ in range(q)]
    gbest_rule = kwargs.pop("gbest_rule", "improvement" if momentum else "fitness")
    state = SwarmState(particles, box, consts, rng, momentum=momentum, gbest_rule=gbest_rule, **kwargs)
    state.gamma = state.gamma_min
    return state
