"""World dynamics, scenario specs and the built-in presets."""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .constraints import FieldBox
from .estimator import KinematicModel
from .network import CommGraph
from .objectives import MODES, CostGains


class ConfigError(ValueError):
    pass


@dataclass
class TrajectorySpec:
    """Piecewise-linear path through ``waypoints`` with optional jump ``events``.

    Both are lists of ``[t, x, y, z]`` with ``t`` in seconds. An event at
    ``t_e`` relocates the point to its position from ``t_e`` on (right
    continuous); the path then heads linearly to the next waypoint.
    """

    waypoints: list[list[float]]
    events: list[list[float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.waypoints:
            raise ConfigError("trajectory needs at least one waypoint")
        self.waypoints = [[float(v) for v in w] for w in self.waypoints]
        self.events = sorted(([float(v) for v in e] for e in self.events), key=lambda e: e[0])
        for row in self.waypoints + self.events:
            if len(row) != 4:
                raise ConfigError(f"trajectory rows are [t, x, y, z], got {row}")
        times = [w[0] for w in self.waypoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigError("waypoint times must be strictly increasing")

    @classmethod
    def constant(cls, pos) -> "TrajectorySpec":
        return cls([[0.0, *map(float, pos)]])

    @classmethod
    def from_csv(cls, path: str | Path, events=None) -> "TrajectorySpec":
        rows = []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].strip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in row[:4]])
                except ValueError:
                    continue  # header line
        return cls(rows, events or [])

    def event_times(self) -> list[float]:
        return [e[0] for e in self.events]


def sample_trajectory(spec: TrajectorySpec, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity at time ``t``; times outside the waypoint span are clamped."""
    wp = spec.waypoints
    t0 = wp[0][0]
    t = max(t, t0)
    k = 0
    while k + 1 < len(wp) and wp[k + 1][0] <= t:
        k += 1
    start_t, start_p = wp[k][0], np.array(wp[k][1:])
    # latest event at or after the bracketing waypoint overrides the segment start
    for e in spec.events:
        if start_t <= e[0] <= t:
            start_t, start_p = e[0], np.array(e[1:])
    if k + 1 >= len(wp):
        return start_p, np.zeros(3)
    end_t, end_p = wp[k + 1][0], np.array(wp[k + 1][1:])
    vel = (end_p - start_p) / (end_t - start_t)
    return start_p + (t - start_t) * vel, vel


@dataclass
class AgentSpec:
    gamma_p: float
    gamma_b: float
    gamma_agg: float
    lam: float
    x0: list[float]


@dataclass
class NoiseSpec:
    """Filter and sensing noise. ``process`` is ``isotropic`` (S = s_iso I) or
    ``double_integrator`` (S = G G^T sigma2)."""

    process: str = "isotropic"
    s_iso: float = 10.0
    sigma2_p: float = 1.0
    sigma2_b: float = 1.0
    r_p: float = 1e-4
    r_b: float = 1e-4
    dropout: float = 0.0
    p0: float = 1.0
    sensing: float = 0.0


@dataclass
class ScenarioSpec:
    name: str
    mode: str
    n: int
    horizon: int
    agents: list[AgentSpec]
    intruders: list[TrajectorySpec]
    target: TrajectorySpec
    dt: float = 0.01
    comm_radius: float = 10.0
    alpha: float = 0.2
    delta: float = 0.4
    lam_agg: float = 0.5
    barrier: bool = True
    barrier_epsilon: float = 0.05
    barrier_grad_cap: float = 1e3
    kappa: list[float] = field(default_factory=lambda: [0.01, 0.01, 0.01])
    eps_min: list[float] = field(default_factory=lambda: [0.1, 0.1, 0.1])
    field_lower: list[float] = field(default_factory=lambda: [-10.0, -10.0, 0.0])
    field_upper: list[float] = field(default_factory=lambda: [10.0, 10.0, 3.0])
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    basket: list[float] | None = None
    laziness: float = 0.0
    v_max: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if len(self.agents) != self.n or len(self.intruders) != self.n:
            raise ConfigError(
                f"n={self.n} but {len(self.agents)} agents and {len(self.intruders)} intruder trajectories"
            )
        if self.horizon < 0:
            raise ConfigError("horizon must be non-negative")
        if self.mode == "basketball" and self.basket is None:
            raise ConfigError("basketball mode needs a basket position")
        if not (self.dt > 0 and self.comm_radius > 0):
            raise ConfigError("dt and comm_radius must be positive")
        for a in self.agents:
            if not 0 <= a.lam <= 1:
                raise ConfigError(f"lambda {a.lam} outside [0, 1]")
        FieldBox(self.field_lower, self.field_upper)

    # -- derived objects -------------------------------------------------
    @property
    def field_box(self) -> FieldBox:
        return FieldBox(self.field_lower, self.field_upper)

    def cost_gains(self, i: int, barrier: bool | None = None) -> CostGains:
        a = self.agents[i]
        return CostGains.scalar(
            a.gamma_p,
            a.gamma_b,
            a.gamma_agg,
            lam=a.lam,
            lam_agg=self.lam_agg,
            barrier=self.barrier if barrier is None else barrier,
            barrier_epsilon=self.barrier_epsilon,
            barrier_grad_cap=self.barrier_grad_cap,
        )

    def kinematic_models(self) -> tuple[KinematicModel, KinematicModel]:
        nz = self.noise
        if nz.process == "isotropic":
            return (
                KinematicModel.isotropic(self.dt, nz.s_iso, nz.r_p),
                KinematicModel.isotropic(self.dt, nz.s_iso, nz.r_b),
            )
        if nz.process == "double_integrator":
            return (
                KinematicModel.double_integrator(self.dt, nz.sigma2_p, nz.r_p),
                KinematicModel.double_integrator(self.dt, nz.sigma2_b, nz.r_b),
            )
        raise ConfigError(f"unknown process noise form {nz.process!r}")

    @property
    def lam(self) -> tuple[float, ...]:
        return tuple(a.lam for a in self.agents)

    @property
    def gamma_agg(self) -> float:
        vals = {a.gamma_agg for a in self.agents}
        return vals.pop() if len(vals) == 1 else tuple(a.gamma_agg for a in self.agents)

    # -- serialization ---------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any], base_dir: Path | None = None) -> "ScenarioSpec":
        d = dict(d)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        try:
            d["agents"] = [AgentSpec(**a) for a in d["agents"]]
            d["intruders"] = [_traj_from(t, base_dir) for t in d["intruders"]]
            d["target"] = _traj_from(d["target"], base_dir)
            if "noise" in d:
                d["noise"] = NoiseSpec(**d["noise"])
            return cls(**d)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed scenario: {exc}") from exc

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    @classmethod
    def loads(cls, text: str, base_dir: Path | None = None) -> "ScenarioSpec":
        data = yaml.safe_load(text)
        if not isinstance(data, dict):
            raise ConfigError("scenario config must be a mapping")
        return cls.from_dict(data, base_dir)


def _traj_from(d, base_dir: Path | None) -> TrajectorySpec:
    if isinstance(d, TrajectorySpec):
        return d
    if "csv" in d:
        path = Path(d["csv"])
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"trajectory file not found: {path}")
        return TrajectorySpec.from_csv(path, d.get("events"))
    return TrajectorySpec(d["waypoints"], d.get("events", []))


def load_scenario(path: str | Path) -> ScenarioSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return ScenarioSpec.loads(path.read_text(), base_dir=path.parent)


# -- world ---------------------------------------------------------------


@dataclass
class WorldState:
    """Ground truth at one tick; only the harness and the oracle read it directly."""

    t: int
    time: float
    intruders: np.ndarray
    intruder_vel: np.ndarray
    target: np.ndarray
    target_vel: np.ndarray
    defenders: np.ndarray


def world_at(spec: ScenarioSpec, t: int, defenders) -> WorldState:
    time = t * spec.dt
    ints = [sample_trajectory(tr, time) for tr in spec.intruders]
    b, vb = sample_trajectory(spec.target, time)
    return WorldState(
        t=t,
        time=time,
        intruders=np.array([p for p, _ in ints]),
        intruder_vel=np.array([v for _, v in ints]),
        target=b,
        target_vel=vb,
        defenders=np.asarray(defenders, dtype=float).copy(),
    )


def sensed_offsets(
    defenders,
    i: int,
    graph: CommGraph,
    rng: np.random.Generator | None = None,
    noise_std: float = 0.0,
) -> np.ndarray:
    """Relative vectors x_i - x_j to every neighbor j != i."""
    x = np.asarray(defenders, dtype=float)
    nbrs = [j for j in graph.neighbors(i) if j != i]
    off = x[i] - x[nbrs] if nbrs else np.zeros((0, 3))
    if noise_std > 0 and rng is not None and len(off):
        off = off + noise_std * rng.standard_normal(off.shape)
    return off


def max_step_displacement(spec: TrajectorySpec, dt: float, horizon: int) -> float:
    """Largest move between consecutive ticks, ignoring declared jump events."""
    jumps = set()
    for te in spec.event_times():
        jumps.add(int(np.ceil(te / dt - 1e-9)))
    worst = 0.0
    prev, _ = sample_trajectory(spec, 0.0)
    for k in range(1, horizon + 1):
        cur, _ = sample_trajectory(spec, k * dt)
        if k not in jumps:
            worst = max(worst, float(np.linalg.norm(cur - prev)))
        prev = cur
    return worst


# -- presets -------------------------------------------------------------

_TARGET = [0.0, 0.0, 1.0]
_INTRUDERS = [[6.0, 2.0, 1.0], [-3.0, 6.0, 1.0], [1.0, -6.0, 1.0]]
_DEFENDERS_X0 = [[0.8, 0.3, 1.0], [-0.4, 0.8, 1.0], [0.2, -0.8, 1.0]]


def _surveillance(name, gammas, lams, alpha=0.2, horizon=3000) -> ScenarioSpec:
    gamma_p, gamma_b, gamma_agg = gammas
    return ScenarioSpec(
        name=name,
        mode="surveillance",
        n=3,
        horizon=horizon,
        agents=[AgentSpec(gamma_p, gamma_b, gamma_agg, lam, list(x0)) for lam, x0 in zip(lams, _DEFENDERS_X0)],
        intruders=[TrajectorySpec.constant(p) for p in _INTRUDERS],
        target=TrajectorySpec.constant(_TARGET),
        comm_radius=9.0,
        alpha=alpha,
        delta=0.4,
        noise=NoiseSpec(process="isotropic", s_iso=10.0, r_p=1e-4, r_b=1e-4),
    )


def _surveillance_dynamic() -> ScenarioSpec:
    # intruders close in on the target at about 0.15 m/s
    start = [[7.5, 2.5, 1.0], [-4.0, 7.5, 1.0], [1.5, -7.5, 1.0]]
    end = [[3.2, 1.4, 1.0], [-1.6, 3.0, 1.0], [0.2, -3.3, 1.0]]
    intruders = [TrajectorySpec([[0.0, *a], [15.0, *((np.array(a) + np.array(b)) / 2 + [0.4, -0.4, 0.0])], [30.0, *b]]) for a, b in zip(start, end)]
    return ScenarioSpec(
        name="surveillance_dynamic",
        mode="surveillance",
        n=3,
        horizon=3000,
        agents=[AgentSpec(4.0, 2.0, 0.5, 0.6, list(x0)) for x0 in _DEFENDERS_X0],
        intruders=intruders,
        target=TrajectorySpec([[0.0, 0.0, 0.0, 1.0], [30.0, 0.6, -0.3, 1.0]]),
        comm_radius=9.0,
        alpha=0.1,
        noise=NoiseSpec(process="double_integrator", sigma2_p=0.5, sigma2_b=0.5, r_p=1e-4, r_b=1e-4),
        v_max=0.5,
    )


def _basketball() -> ScenarioSpec:
    basket = [0.0, 0.0, 1.0]
    paths = [
        [[0.0, 5.0, 3.0, 1.0], [10.0, 4.0, 1.5, 1.0], [20.0, 3.0, 2.5, 1.0], [30.0, 3.5, 1.0, 1.0]],
        [[0.0, 5.5, -1.0, 1.0], [10.0, 4.5, -2.5, 1.0], [20.0, 5.0, -0.5, 1.0], [30.0, 4.0, -1.5, 1.0]],
        [[0.0, 6.0, 1.0, 1.0], [10.0, 5.5, 0.0, 1.0], [20.0, 4.5, 0.5, 1.0], [30.0, 2.5, -0.5, 1.0]],
    ]
    holder_a, holder_b = np.array(paths[0]), np.array(paths[2])
    t_pass = 15.0
    at_pass_a = holder_a[1, 1:] + (t_pass - 10.0) / 10.0 * (holder_a[2, 1:] - holder_a[1, 1:])
    at_pass_b = holder_b[1, 1:] + (t_pass - 10.0) / 10.0 * (holder_b[2, 1:] - holder_b[1, 1:])
    ball = TrajectorySpec(
        [paths[0][0], paths[0][1], [t_pass, *at_pass_a.tolist()], paths[2][2], paths[2][3]],
        events=[[t_pass, *at_pass_b.tolist()]],
    )
    x0 = [[3.0, 1.5, 1.0], [3.0, -0.5, 1.0], [3.5, 0.5, 1.0]]
    return ScenarioSpec(
        name="basketball_demo",
        mode="basketball",
        n=3,
        horizon=3000,
        agents=[AgentSpec(5.0, 2.0, 0.0, 0.4, x) for x in x0],
        intruders=[TrajectorySpec(p) for p in paths],
        target=ball,
        basket=basket,
        lam_agg=0.5,
        comm_radius=6.0,
        alpha=0.1,
        kappa=[0.02, 0.02, 0.02],
        eps_min=[0.2, 0.2, 0.2],
        field_lower=[-1.0, -5.0, 0.0],
        field_upper=[8.0, 5.0, 2.0],
        noise=NoiseSpec(process="double_integrator", sigma2_p=1.0, sigma2_b=5.0, r_p=1e-4, r_b=1e-4),
        v_max=0.5,
    )


# Step sizes below keep the linearized tracker iteration contractive for
# each gain set; alpha = 0.2 with delta = 0.4 diverges for these gains.
def _fig3(lam):
    return lambda name: _surveillance(name, (10.0, 5.0, 0.1), (lam,) * 3, alpha=0.05)


def _fig4(g):
    return lambda name: _surveillance(name, (2.0, g, g), (0.5, 0.8, 0.2), alpha=0.02)


PRESETS = {
    "fig3_left": _fig3(0.8),
    "fig3_right": _fig3(0.2),
    "fig4_left": _fig4(5.0),
    "fig4_right": _fig4(20.0),
    "basketball_demo": lambda name: _basketball(),
    "surveillance_dynamic": lambda name: _surveillance_dynamic(),
}


def preset(name: str) -> ScenarioSpec:
    try:
        return PRESETS[name](name)
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
