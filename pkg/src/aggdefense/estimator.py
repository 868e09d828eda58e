"""Kalman prediction of an intruder and the target with a double-integrator model.

The filter runs in one-step predictor form: the estimate held at time t is
the prediction of the state at t given measurements up to t-1, and one step
consumes z^t to produce the prediction for t+1. That step factors exactly as
a Joseph-form correction with the filter gain followed by the model
prediction; :func:`kf_step_compact` is the stacked closed form of the same
map.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property, lru_cache

import numpy as np

I3 = np.eye(3)
Z3 = np.zeros((3, 3))


@dataclass(frozen=True)
class KinematicModel:
    dt: float
    S: np.ndarray  # 6x6 process covariance
    R: np.ndarray  # 3x3 measurement covariance

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        S = np.asarray(self.S, dtype=float)
        R = np.asarray(self.R, dtype=float)
        if S.shape != (6, 6) or R.shape != (3, 3):
            raise ValueError("S must be 6x6 and R 3x3")
        for name, M in (("S", S), ("R", R)):
            if not np.allclose(M, M.T, atol=1e-12):
                raise ValueError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(M).min() < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "R", R)

    @cached_property
    def F(self) -> np.ndarray:
        return np.block([[I3, self.dt * I3], [Z3, I3]])

    @cached_property
    def G(self) -> np.ndarray:
        return np.vstack([Z3, self.dt * I3])

    @cached_property
    def H(self) -> np.ndarray:
        return np.hstack([I3, Z3])

    @classmethod
    def double_integrator(cls, dt: float, sigma2: float, r: float) -> "KinematicModel":
        """Process noise S = G G^T sigma2 from an acceleration of variance sigma2."""
        G = np.vstack([Z3, dt * I3])
        return cls(dt=dt, S=sigma2 * G @ G.T, R=r * I3)

    @classmethod
    def isotropic(cls, dt: float, s: float, r: float) -> "KinematicModel":
        """Isotropic process noise S = s I6."""
        return cls(dt=dt, S=s * np.eye(6), R=r * I3)


@dataclass(frozen=True)
class FilterState:
    xi: np.ndarray  # (position, velocity)
    P: np.ndarray


def kf_predict(state: FilterState, model: KinematicModel) -> FilterState:
    F = model.F
    return FilterState(F @ state.xi, F @ state.P @ F.T + model.S)


def _innovation_cov(P: np.ndarray, model: KinematicModel) -> np.ndarray:
    H = model.H
    return H @ P @ H.T + model.R


def kf_gain(P: np.ndarray, model: KinematicModel) -> np.ndarray:
    """Predictor gain K = F P H^T (H P H^T + R)^-1 (6x3).

    Raises ``numpy.linalg.LinAlgError`` when the innovation covariance is
    singular.
    """
    S_in = _innovation_cov(P, model)
    # K = F P H^T S_in^-1, solved as S_in^T K^T = (F P H^T)^T
    PHt = model.F @ P @ model.H.T
    return np.linalg.solve(S_in.T, PHt.T).T


def filter_gain(P: np.ndarray, model: KinematicModel) -> np.ndarray:
    """Filter-form gain P H^T (H P H^T + R)^-1; ``kf_gain`` equals F times this."""
    S_in = _innovation_cov(P, model)
    return np.linalg.solve(S_in.T, (P @ model.H.T).T).T


def kf_correct(state: FilterState, z: np.ndarray, K: np.ndarray, model: KinematicModel) -> FilterState:
    """Measurement update with the Joseph-form covariance."""
    H = model.H
    xi = state.xi + K @ (np.asarray(z, dtype=float) - H @ state.xi)
    IKH = np.eye(6) - K @ H
    P = IKH @ state.P @ IKH.T + K @ model.R @ K.T
    return FilterState(xi, P)


@dataclass(frozen=True)
class StackedFilter:
    """Intruder and target filters of one agent, stacked into a 12-state filter."""

    intruder: FilterState
    target: FilterState
    intruder_model: KinematicModel
    target_model: KinematicModel

    @property
    def xi(self) -> np.ndarray:
        return np.concatenate([self.intruder.xi, self.target.xi])

    @property
    def P(self) -> np.ndarray:
        return _blkdiag(self.intruder.P, self.target.P)

    @cached_property
    def F_bar(self) -> np.ndarray:
        return _blkdiag(self.intruder_model.F, self.target_model.F)

    @cached_property
    def H_bar(self) -> np.ndarray:
        return _blkdiag(self.intruder_model.H, self.target_model.H)

    @cached_property
    def S_bar(self) -> np.ndarray:
        return _blkdiag(self.intruder_model.S, self.target_model.S)

    @cached_property
    def R_bar(self) -> np.ndarray:
        return _blkdiag(self.intruder_model.R, self.target_model.R)

    def gain(self) -> np.ndarray:
        return _blkdiag(
            kf_gain(self.intruder.P, self.intruder_model),
            kf_gain(self.target.P, self.target_model),
        )


def _blkdiag(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((A.shape[0] + B.shape[0], A.shape[1] + B.shape[1]))
    out[: A.shape[0], : A.shape[1]] = A
    out[A.shape[0] :, A.shape[1] :] = B
    return out


def init_filter(
    z0: np.ndarray,
    intruder_model: KinematicModel,
    target_model: KinematicModel,
    p0: float = 1.0,
) -> StackedFilter:
    """Positions from the first 6-vector measurement, zero velocities, P = p0 I.

    ``p0 = 0`` starts from a zero covariance (the strict initialization).
    """
    z0 = np.asarray(z0, dtype=float)
    P = p0 * np.eye(6)
    return StackedFilter(
        intruder=FilterState(np.concatenate([z0[:3], np.zeros(3)]), P.copy()),
        target=FilterState(np.concatenate([z0[3:], np.zeros(3)]), P.copy()),
        intruder_model=intruder_model,
        target_model=target_model,
    )


def kf_step_compact(filt: StackedFilter, z: np.ndarray | None, K: np.ndarray | None = None) -> StackedFilter:
    """One predictor step xi' = (F - K H) xi + K z, P' = (F-KH) P (F-KH)^T + K R K^T + S.

    ``z=None`` marks a missing measurement and runs prediction only. ``K``
    overrides the 12x6 gain (normally recomputed from the current P).
    """
    Fb, Hb = filt.F_bar, filt.H_bar
    xi, P = filt.xi, filt.P
    if z is None:
        xi_new = Fb @ xi
        P_new = Fb @ P @ Fb.T + filt.S_bar
    else:
        if K is None:
            K = filt.gain()
        A = Fb - K @ Hb
        xi_new = A @ xi + K @ np.asarray(z, dtype=float)
        P_new = A @ P @ A.T + K @ filt.R_bar @ K.T + filt.S_bar
    # cross blocks are zero by construction; keep only the diagonal blocks
    return replace(
        filt,
        intruder=FilterState(xi_new[:6], P_new[:6, :6]),
        target=FilterState(xi_new[6:], P_new[6:, 6:]),
    )


def filtered_positions(filt: StackedFilter, z: np.ndarray | None) -> tuple[np.ndarray, np.ndarray]:
    """Current-time position estimates H xi_{t|t}, without the one-step extrapolation."""
    if z is None:
        return position_estimate(filt)
    z = np.asarray(z, dtype=float)
    out = []
    for block, model, zb in ((filt.intruder, filt.intruder_model, z[:3]), (filt.target, filt.target_model, z[3:])):
        corrected = kf_correct(block, zb, filter_gain(block.P, model), model)
        out.append(model.H @ corrected.xi)
    return out[0], out[1]


def position_estimate(filt: StackedFilter) -> tuple[np.ndarray, np.ndarray]:
    return filt.intruder_model.H @ filt.intruder.xi, filt.target_model.H @ filt.target.xi


def measure(
    intruder_pos: np.ndarray,
    target_pos: np.ndarray,
    R_p: np.ndarray,
    R_b: np.ndarray,
    rng: np.random.Generator,
    dropout: float = 0.0,
    dropout_rng: np.random.Generator | None = None,
) -> np.ndarray | None:
    """Noisy stacked position measurement (6-vector), or ``None`` when dropped.

    Noise is drawn even for R = 0 so the stream position does not depend on
    the covariance; a zero covariance yields the truth exactly.
    """
    w_p = _gaussian(rng, R_p)
    w_b = _gaussian(rng, R_b)
    if dropout > 0.0:
        u = (dropout_rng if dropout_rng is not None else rng).random()
        if u < dropout:
            return None
    return np.concatenate([np.asarray(intruder_pos, float) + w_p, np.asarray(target_pos, float) + w_b])


def _gaussian(rng: np.random.Generator, cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    e = rng.standard_normal(cov.shape[0])
    if not np.any(cov):
        return np.zeros(cov.shape[0])
    return _sqrt_factor(cov.tobytes(), cov.shape[0]) @ e


@lru_cache(maxsize=64)
def _sqrt_factor(buf: bytes, dim: int) -> np.ndarray:
    # eigh-based square root tolerates semidefinite covariances
    vals, vecs = np.linalg.eigh(np.frombuffer(buf).reshape(dim, dim))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))
