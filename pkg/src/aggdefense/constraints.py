"""Per-agent feasible boxes between an intruder and the protected point."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FieldBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(3)
        hi = np.asarray(self.upper, dtype=float).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"field lower {lo} exceeds upper {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def unbounded(cls) -> "FieldBox":
        return cls(np.full(3, -np.inf), np.full(3, np.inf))


@dataclass(frozen=True)
class FeasibleBox:
    lower: np.ndarray
    upper: np.ndarray
    repaired: tuple[bool, bool, bool] = (False, False, False)

    @property
    def n_repaired(self) -> int:
        return sum(self.repaired)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


def adaptive_tolerance(p_c, b_c, kappa_c, eps_min_c):
    """Margin kept from the intruder: max(eps_min, kappa * |p - b|^2). Vectorizes."""
    return np.maximum(eps_min_c, kappa_c * np.abs(np.asarray(p_c, float) - np.asarray(b_c, float)) ** 2)


def build_box(p_hat, b_hat, kappa, eps_min, field: FieldBox) -> FeasibleBox:
    """Band between intruder ``p_hat`` and protected point ``b_hat``, cut by the field.

    A component whose interval comes out empty collapses to the point of the
    field closest to ``b_hat``; such components are flagged in ``repaired``.
    """
    p = np.asarray(p_hat, dtype=float).reshape(3)
    b = np.asarray(b_hat, dtype=float).reshape(3)
    eps = adaptive_tolerance(p, b, np.broadcast_to(kappa, 3), np.broadcast_to(eps_min, 3))
    below = p <= b
    lo = np.where(below, p + eps, b)
    hi = np.where(below, b, p - eps)
    lo = np.maximum(lo, field.lower)
    hi = np.minimum(hi, field.upper)
    empty = lo > hi
    if np.any(empty):
        anchor = np.clip(b, field.lower, field.upper)
        lo = np.where(empty, anchor, lo)
        hi = np.where(empty, anchor, hi)
    return FeasibleBox(lo, hi, tuple(bool(e) for e in empty))


def project(x, box: FeasibleBox) -> np.ndarray:
    return np.minimum(np.maximum(np.asarray(x, dtype=float), box.lower), box.upper)
