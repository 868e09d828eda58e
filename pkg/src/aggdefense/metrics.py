"""Full-information benchmark and run diagnostics."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constraints import FeasibleBox
from .network import CommGraph
from .objectives import CostGains, CostSnapshot, Mode, grad2_cost

log = logging.getLogger(__name__)


class GlobalProblem:
    """Team cost sum_i f_i(x_i, sigma(x), x_Ni) over stacked positions X (N x 3).

    Neighbor sets come from ``graph`` and stay frozen while X moves. The
    gradient block for agent i is grad1 f_i + (1/N) sum_j grad2 f_j, both at
    the true barycenter, which is what the agents' trackers approximate.
    """

    def __init__(
        self,
        snapshots: Sequence[CostSnapshot],
        gains: Sequence[CostGains],
        boxes: Sequence[FeasibleBox],
        graph: CommGraph,
        mode: Mode = "surveillance",
    ):
        self.n = len(snapshots)
        self.mode = mode
        self.p_ref = np.array([s.p_ref for s in snapshots])
        self.b_ref = np.array([s.b_ref for s in snapshots])
        self.Q1 = np.array([g.Q1 for g in gains])
        self.Q2 = np.array([g.Q2 for g in gains])
        self.Q3 = np.array([g.Q3 for g in gains]) if mode == "surveillance" else np.zeros((self.n, 3, 3))
        self.lower = np.array([b.lower for b in boxes])
        self.upper = np.array([b.upper for b in boxes])
        g0 = gains[0]
        self.barrier = g0.barrier and len(graph.edges) > 0
        self.eps = g0.barrier_epsilon
        self.cap = g0.barrier_grad_cap
        self.pairs = np.array(sorted(graph.edges), dtype=int).reshape(-1, 2)
        # isotropic gains (gamma * I) take an elementwise fast path
        Qs = np.stack([self.Q1, self.Q2, self.Q3])
        diag = Qs[..., 0, 0]
        self.isotropic = bool(np.all(Qs == diag[..., None, None] * np.eye(3)))
        self.q = diag[..., None]  # (3, n, 1)

    def project(self, X: np.ndarray) -> np.ndarray:
        return np.minimum(np.maximum(X, self.lower), self.upper)

    def cost(self, X: np.ndarray) -> float:
        sig = X.mean(axis=0)
        d1 = X - self.p_ref
        d2 = sig - self.b_ref
        d3 = sig - X
        if self.isotropic:
            q1, q2, q3 = self.q
            val = float(np.sum(q1 * d1 * d1) + np.sum(q2 * d2 * d2) + np.sum(q3 * d3 * d3))
        else:
            val = (
                np.einsum("ni,nij,nj->", d1, self.Q1, d1)
                + np.einsum("ni,nij,nj->", d2, self.Q2, d2)
                + np.einsum("ni,nij,nj->", d3, self.Q3, d3)
            )
        if self.barrier:
            diff = X[self.pairs[:, 0]] - X[self.pairs[:, 1]]
            d = np.linalg.norm(diff, axis=1)
            # each unordered pair appears in both agents' costs
            val += 2.0 * float(-np.log(np.maximum(d, self.eps)).sum())
        return float(val)

    def per_agent_costs(self, X: np.ndarray) -> np.ndarray:
        sig = X.mean(axis=0)
        d1 = X - self.p_ref
        d2 = sig - self.b_ref
        d3 = sig - X
        out = (
            np.einsum("ni,nij,nj->n", d1, self.Q1, d1)
            + np.einsum("ni,nij,nj->n", d2, self.Q2, d2)
            + np.einsum("ni,nij,nj->n", d3, self.Q3, d3)
        )
        if self.barrier:
            for a, b in self.pairs:
                v = -np.log(max(np.linalg.norm(X[a] - X[b]), self.eps))
                out[a] += v
                out[b] += v
        return out

    def grad(self, X: np.ndarray) -> np.ndarray:
        sig = X.mean(axis=0)
        if self.isotropic:
            q1, q2, q3 = self.q
            g1 = 2.0 * (q1 * (X - self.p_ref) + q3 * (X - sig))
            g2 = 2.0 * (q2 * (sig - self.b_ref) + q3 * (sig - X))
        else:
            g1 = 2.0 * (np.einsum("nij,nj->ni", self.Q1, X - self.p_ref) + np.einsum("nij,nj->ni", self.Q3, X - sig))
            g2 = 2.0 * (np.einsum("nij,nj->ni", self.Q2, sig - self.b_ref) + np.einsum("nij,nj->ni", self.Q3, sig - X))
        G = g1 + g2.mean(axis=0)
        if self.barrier:
            diff = X[self.pairs[:, 0]] - X[self.pairs[:, 1]]
            d2 = np.einsum("ij,ij->i", diff, diff)
            terms = -diff / np.maximum(d2, self.eps**2)[:, None]
            mag = np.linalg.norm(terms, axis=1)
            over = mag > self.cap
            terms[over] *= (self.cap / mag[over])[:, None]
            Gb = np.zeros_like(X)
            np.add.at(Gb, self.pairs[:, 0], terms)
            np.add.at(Gb, self.pairs[:, 1], -terms)
            G = G + 2.0 * Gb
        return G

    def hessian_quadratic(self) -> np.ndarray:
        """Constant Hessian (3N x 3N) of the quadratic part."""
        n = self.n
        H = np.zeros((3 * n, 3 * n))
        avg = np.kron(np.ones((1, n)) / n, np.eye(3))
        for i in range(n):
            E = np.zeros((3, 3 * n))
            E[:, 3 * i : 3 * i + 3] = np.eye(3)
            H += E.T @ self.Q1[i] @ E + avg.T @ self.Q2[i] @ avg + (avg - E).T @ self.Q3[i] @ (avg - E)
        return 2.0 * H

    def lipschitz(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian_quadratic()).max())


@dataclass
class OracleResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool


def centralized_oracle(
    problem: GlobalProblem,
    x_warm: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    lipschitz: float | None = None,
) -> OracleResult:
    """Projected gradient on the team cost, stopped when the step norm is below ``tol``.

    Step 1/L from the quadratic Hessian; with barriers an Armijo backtracking
    keeps the iteration monotone, and the result is a stationary point.
    """
    L = lipschitz if lipschitz is not None else problem.lipschitz()
    step0 = 1.0 / max(L, 1e-12)
    X = problem.project(np.asarray(x_warm, dtype=float))
    f = problem.cost(X)
    step = step0
    for k in range(1, max_iter + 1):
        G = problem.grad(X)
        if problem.barrier:
            while True:
                X_new = problem.project(X - step * G)
                D = X_new - X
                f_new = problem.cost(X_new)
                if f_new <= f + np.sum(G * D) + 0.5 / step * np.sum(D * D) or step < 1e-14:
                    break
                step *= 0.5
        else:
            X_new = problem.project(X - step * G)
            D = X_new - X
            f_new = None
        X = X_new
        if np.linalg.norm(D) <= tol:
            return OracleResult(X, problem.cost(X), k, True)
        f = problem.cost(X) if f_new is None else f_new
        if problem.barrier:
            step = min(step0, step * 2.0)
    log.warning("centralized oracle hit the iteration cap (%d)", max_iter)
    return OracleResult(X, problem.cost(X), max_iter, False)


def optimality_residual(problem: GlobalProblem, X: np.ndarray, eta: float = 1e-2) -> float:
    return float(np.linalg.norm(X - problem.project(X - eta * problem.grad(X))))


@dataclass
class RegretLedger:
    costs: np.ndarray
    oracle_costs: np.ndarray
    gaps: np.ndarray
    cumulative: np.ndarray

    @property
    def total(self) -> float:
        return float(self.cumulative[-1]) if len(self.cumulative) else 0.0


def dynamic_regret(costs: Sequence[float], oracle_costs: Sequence[float]) -> RegretLedger:
    """Sum over t of f^t(x^t) - f^t(x*^t); inputs indexed t = 1..T."""
    c = np.asarray(costs, dtype=float)
    o = np.asarray(oracle_costs, dtype=float)
    gaps = c - o
    return RegretLedger(c, o, gaps, np.cumsum(gaps))


def tracking_errors(
    X: np.ndarray,
    S: np.ndarray,
    Y: np.ndarray,
    snapshots: Sequence[CostSnapshot],
    gains: Sequence[CostGains],
    mode: Mode = "surveillance",
) -> tuple[float, float]:
    """(max_i ||s_i - sigma(x)||, max_i ||y_i - mean_j grad2 f_j(x_j, s_j)||)."""
    sig = X.mean(axis=0)
    g2 = np.array([grad2_cost(X[j], S[j], snapshots[j], gains[j], mode) for j in range(len(X))])
    s_err = float(np.linalg.norm(S - sig, axis=1).max())
    y_err = float(np.linalg.norm(Y - g2.mean(axis=0), axis=1).max())
    return s_err, y_err


def tracker_conservation(
    X: np.ndarray,
    S: np.ndarray,
    Y: np.ndarray,
    snapshots: Sequence[CostSnapshot],
    gains: Sequence[CostGains],
    mode: Mode = "surveillance",
) -> tuple[float, float]:
    """(max |mean s - sigma(x)|, ||sum y - sum grad2 f_i(x_i, s_i)||); both vanish in exact arithmetic."""
    g2 = np.array([grad2_cost(X[j], S[j], snapshots[j], gains[j], mode) for j in range(len(X))])
    return float(np.abs(S.mean(axis=0) - X.mean(axis=0)).max()), float(np.linalg.norm(Y.sum(axis=0) - g2.sum(axis=0)))


def min_pairwise_distance(X: np.ndarray) -> float:
    n = len(X)
    if n < 2:
        return float("inf")
    diff = X[:, None, :] - X[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return float(d[np.triu_indices(n, k=1)].min())
