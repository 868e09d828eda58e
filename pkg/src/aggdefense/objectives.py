"""Local defender cost, aggregation map and the gradients used by the optimizer.

Each defender's cost is

    ||x - p_ref||^2_Q1 + ||s - b_ref||^2_Q2 + ||s - x||^2_Q3 + sum_j -log ||x - x_j||

where ``s`` stands for the team barycenter. Basketball mode drops the Q3
term. The barrier gradient returned by :func:`grad1_cost` carries a factor 2:
each unordered pair appears in two agents' costs, so that is the derivative
of the team-wide sum with respect to ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

Mode = Literal["surveillance", "basketball"]
MODES = ("surveillance", "basketball")


def _as_gain(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim == 0:
        return float(q) * np.eye(3)
    if q.shape != (3, 3):
        raise ValueError(f"gain must be a scalar or 3x3, got shape {q.shape}")
    return q


@dataclass(frozen=True)
class CostGains:
    """Quadratic weights plus barrier settings for one defender.

    Scalars are accepted for ``Q1``..``Q3`` and expanded to ``gamma * I3``.
    In scalar terms Q1 is the intruder-tracking gain gamma_p, Q2 the
    barycenter-to-target gain gamma_b and Q3 the cohesion gain gamma_agg.
    """

    Q1: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray
    lam: float = 0.5
    lam_agg: float = 0.5
    barrier: bool = True
    barrier_epsilon: float = 0.05
    barrier_grad_cap: float = 1e3

    def __post_init__(self):
        for name in ("Q1", "Q2", "Q3"):
            Q = _as_gain(getattr(self, name))
            if not np.allclose(Q, Q.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(Q).min() < 0:
                raise ValueError(f"{name} must be positive semidefinite")
            object.__setattr__(self, name, Q)
        if np.linalg.eigvalsh(self.Q1).min() <= 0:
            raise ValueError("Q1 must be positive definite")
        for name in ("lam", "lam_agg"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not self.barrier_epsilon > 0 or not self.barrier_grad_cap > 0:
            raise ValueError("barrier_epsilon and barrier_grad_cap must be positive")

    @classmethod
    def scalar(cls, gamma_p: float, gamma_b: float, gamma_agg: float, **kw) -> "CostGains":
        return cls(Q1=gamma_p, Q2=gamma_b, Q3=gamma_agg, **kw)


@dataclass(frozen=True)
class CostSnapshot:
    """Reference points and sensed neighbor offsets x_i - x_j for one evaluation."""

    p_ref: np.ndarray
    b_ref: np.ndarray
    offsets: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        object.__setattr__(self, "p_ref", np.asarray(self.p_ref, dtype=float))
        object.__setattr__(self, "b_ref", np.asarray(self.b_ref, dtype=float))
        off = np.asarray(self.offsets, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "offsets", off)

    def with_offsets(self, offsets) -> "CostSnapshot":
        return CostSnapshot(self.p_ref, self.b_ref, offsets)


def phi(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float).copy()


def phi_jacobian(x: np.ndarray) -> np.ndarray:
    return np.eye(3)


def sigma(x_all) -> np.ndarray:
    """Mean of phi(x_i) over agents: the team barycenter."""
    x_all = np.asarray(x_all, dtype=float).reshape(-1, 3)
    if x_all.shape[0] == 0:
        raise ValueError("sigma needs at least one agent")
    return x_all.mean(axis=0)


def tracking_point(mode: Mode, p, anchor, lam: float) -> np.ndarray:
    """Point on the intruder-anchor segment the defender is drawn to.

    surveillance: lam * p + (1 - lam) * target; basketball:
    lam * basket + (1 - lam) * p. The basketball convention weights the
    anchor by ``lam``, so the two modes run in opposite directions.
    """
    p = np.asarray(p, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if mode == "surveillance":
        return lam * p + (1.0 - lam) * anchor
    if mode == "basketball":
        return lam * anchor + (1.0 - lam) * p
    raise ValueError(f"unknown mode {mode!r}")


def ball_point(basket, ball, lam_agg: float) -> np.ndarray:
    """Basketball barycenter reference (1 - lam_agg) * basket + lam_agg * ball."""
    return (1.0 - lam_agg) * np.asarray(basket, float) + lam_agg * np.asarray(ball, float)


def _qnorm2(v: np.ndarray, Q: np.ndarray) -> float:
    return float(v @ Q @ v)


def barrier_value(offsets: np.ndarray, gains: CostGains) -> float:
    if not gains.barrier or len(offsets) == 0:
        return 0.0
    d = np.linalg.norm(offsets, axis=1)
    return float(-np.log(np.maximum(d, gains.barrier_epsilon)).sum())


def barrier_grad(offsets: np.ndarray, gains: CostGains) -> np.ndarray:
    """Gradient of sum_j -log||x - x_j|| in x (no factor 2), guarded and capped."""
    if not gains.barrier or len(offsets) == 0:
        return np.zeros(3)
    d2 = np.einsum("ij,ij->i", offsets, offsets)
    terms = -offsets / np.maximum(d2, gains.barrier_epsilon**2)[:, None]
    mag = np.linalg.norm(terms, axis=1)
    scale = np.where(mag > gains.barrier_grad_cap, gains.barrier_grad_cap / np.where(mag > 0, mag, 1.0), 1.0)
    return (terms * scale[:, None]).sum(axis=0)


def eval_cost(x, s, snapshot: CostSnapshot, gains: CostGains, mode: Mode = "surveillance") -> float:
    x = np.asarray(x, dtype=float)
    s = np.asarray(s, dtype=float)
    val = _qnorm2(x - snapshot.p_ref, gains.Q1) + _qnorm2(s - snapshot.b_ref, gains.Q2)
    if mode == "surveillance":
        val += _qnorm2(s - x, gains.Q3)
    return val + barrier_value(snapshot.offsets, gains)


def grad1_cost(x, s, snapshot: CostSnapshot, gains: CostGains, mode: Mode = "surveillance") -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = 2.0 * gains.Q1 @ (x - snapshot.p_ref)
    if mode == "surveillance":
        g = g + 2.0 * gains.Q3 @ (x - np.asarray(s, dtype=float))
    return g + 2.0 * barrier_grad(snapshot.offsets, gains)


def grad2_cost(x, s, snapshot: CostSnapshot, gains: CostGains, mode: Mode = "surveillance") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    g = 2.0 * gains.Q2 @ (s - snapshot.b_ref)
    if mode == "surveillance":
        g = g + 2.0 * gains.Q3 @ (s - np.asarray(x, dtype=float))
    return g
