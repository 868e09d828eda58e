"""Per-agent projected feasible-direction update with barycenter and gradient trackers."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .constraints import FeasibleBox, project
from .estimator import StackedFilter
from .network import Mailbox, ProtocolError
from .objectives import CostGains, CostSnapshot, Mode, grad1_cost, grad2_cost, phi, phi_jacobian


@dataclass(frozen=True)
class AgentState:
    """Private data of one defender between rounds.

    ``snapshot`` and ``box`` are the predicted cost and feasible set for the
    current step; ``x_tilde`` is the last projected point (for logging).
    """

    agent_id: int
    x: np.ndarray
    s: np.ndarray
    y: np.ndarray
    gains: CostGains
    snapshot: CostSnapshot
    box: FeasibleBox
    filter: StackedFilter | None = None
    alpha: float = 0.2
    delta: float = 0.4
    mode: Mode = "surveillance"
    x_tilde: np.ndarray | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError(f"delta must lie in [0, 1], got {self.delta}")


def init_agent(
    agent_id: int,
    x0,
    box0: FeasibleBox,
    snapshot0: CostSnapshot,
    gains: CostGains,
    filt: StackedFilter | None = None,
    alpha: float = 0.2,
    delta: float = 0.4,
    mode: Mode = "surveillance",
) -> AgentState:
    x = project(x0, box0)
    s = phi(x)
    y = grad2_cost(x, s, snapshot0, gains, mode)
    return AgentState(agent_id, x, s, y, gains, snapshot0, box0, filt, alpha, delta, mode)


def mix(mailbox: Mailbox, weights_row: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted sums of neighbor (s, y) over the nonzero entries of ``weights_row``."""
    msgs = mailbox.by_sender()
    s_mix = np.zeros(3)
    y_mix = np.zeros(3)
    for j in np.flatnonzero(weights_row):
        m = msgs.get(int(j))
        if m is None:
            raise ProtocolError(f"agent {mailbox.owner}: no message from neighbor {j}")
        s_mix = s_mix + weights_row[j] * m.s
        y_mix = y_mix + weights_row[j] * m.y
    return s_mix, y_mix


def optimize_step(
    state: AgentState,
    mailbox: Mailbox,
    weights_row: Sequence[float],
    snapshot_next: CostSnapshot,
    box_next: FeasibleBox,
    strict_box: bool = False,
) -> AgentState:
    """One round of the local update.

    The descent direction uses the current predicted cost ``state.snapshot``;
    the projection uses ``box_next`` (the set predicted in this round) unless
    ``strict_box`` selects the previous one. ``snapshot_next`` enters only
    the gradient tracker and becomes the state's snapshot for the next round.
    """
    weights_row = np.asarray(weights_row, dtype=float)
    x, s, y = state.x, state.s, state.y
    g = grad1_cost(x, s, state.snapshot, state.gains, state.mode) + phi_jacobian(x) @ y
    box = state.box if strict_box else box_next
    x_tilde = project(x - state.alpha * g, box)
    x_new = x + state.delta * (x_tilde - x)

    s_mix, y_mix = mix(mailbox, weights_row)
    s_new = s_mix + phi(x_new) - phi(x)
    y_new = (
        y_mix
        + grad2_cost(x_new, s_new, snapshot_next, state.gains, state.mode)
        - grad2_cost(x, s, state.snapshot, state.gains, state.mode)
    )
    return replace(state, x=x_new, s=s_new, y=y_new, snapshot=snapshot_next, box=box_next, x_tilde=x_tilde)
