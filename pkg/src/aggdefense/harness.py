"""Simulation driver: world -> graph -> measure -> predict -> exchange -> optimize."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .algorithm import AgentState, init_agent, optimize_step
from .constraints import FeasibleBox, build_box
from .estimator import filtered_positions, init_filter, kf_step_compact, measure, position_estimate
from .metrics import GlobalProblem, centralized_oracle, dynamic_regret, min_pairwise_distance, tracking_errors
from .network import CommGraph, SyncBus, build_proximity_graph, check_b_connectivity, metropolis_weights
from .objectives import CostGains, CostSnapshot, ball_point, eval_cost, grad2_cost, tracking_point
from .scenarios import ScenarioSpec, preset, sensed_offsets, world_at

log = logging.getLogger(__name__)

OUT_ENV = "AGGDEF_OUT"

# noise sources per agent, each an independent stream
MEAS, DROPOUT, SENSING = 0, 1, 2


@dataclass
class RunConfig:
    scenario: ScenarioSpec
    out_dir: Path | None = None
    seed: int | None = None
    horizon: int | None = None
    trace: bool = True
    box_timing: str = "predicted"  # or "strict": project onto the previous round's box
    strict_kalman_init: bool = False
    barrier: bool | None = None
    oracle: bool = True
    prediction: bool = True
    measurement_noise: bool = True
    b_window: int = 10

    def __post_init__(self):
        if self.box_timing not in ("predicted", "strict"):
            raise ValueError(f"box_timing must be 'predicted' or 'strict', got {self.box_timing!r}")

    @property
    def effective_seed(self) -> int:
        return self.scenario.seed if self.seed is None else self.seed

    @property
    def effective_horizon(self) -> int:
        return self.scenario.horizon if self.horizon is None else self.horizon

    def flags(self) -> dict[str, Any]:
        return {
            "seed": self.effective_seed,
            "horizon": self.effective_horizon,
            "box_timing": self.box_timing,
            "strict_kalman_init": self.strict_kalman_init,
            "barrier": self.barrier,
            "oracle": self.oracle,
            "prediction": self.prediction,
            "measurement_noise": self.measurement_noise,
            "b_window": self.b_window,
        }


@dataclass
class RunResult:
    """In-memory history of one run. Arrays are indexed [t, agent, ...] for t = 0..T."""

    spec: ScenarioSpec
    config: RunConfig
    X: np.ndarray
    X_tilde: np.ndarray
    S: np.ndarray
    Y: np.ndarray
    P_hat: np.ndarray
    B_hat: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    local_cost: np.ndarray
    degree: np.ndarray
    intruders: np.ndarray
    target: np.ndarray
    graphs: list[CommGraph]
    s_conservation: np.ndarray
    y_conservation: np.ndarray
    s_error: np.ndarray
    y_error: np.ndarray
    min_distance: np.ndarray
    repairs: np.ndarray
    feasibility_violations: int
    outside_after_step: int
    global_cost: np.ndarray | None = None
    oracle_cost: np.ndarray | None = None
    oracle_x: np.ndarray | None = None
    oracle_converged: np.ndarray | None = None
    b_connected: list[bool] = field(default_factory=list)
    runtime: float = 0.0
    summary: dict[str, Any] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return self.X.shape[0] - 1

    @property
    def regret(self) -> float:
        if self.global_cost is None:
            return float("nan")
        return float(np.sum(self.global_cost[1:] - self.oracle_cost[1:]))


def _rng(seed: int, agent: int, source: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(agent, source)))


def true_snapshots(spec: ScenarioSpec, intruders: np.ndarray, target: np.ndarray, gains: list[CostGains]):
    """Reference points and boxes built from ground truth (oracle side)."""
    snaps, boxes = [], []
    for i in range(spec.n):
        refs = _references(spec, intruders[i], target, gains[i])
        snaps.append(CostSnapshot(*refs))
        boxes.append(_box(spec, intruders[i], target))
    return snaps, boxes


def _references(spec: ScenarioSpec, p, b, gains: CostGains) -> tuple[np.ndarray, np.ndarray]:
    if spec.mode == "surveillance":
        return tracking_point("surveillance", p, b, gains.lam), np.asarray(b, float)
    basket = np.asarray(spec.basket, float)
    return tracking_point("basketball", p, basket, gains.lam), ball_point(basket, b, gains.lam_agg)


def _box(spec: ScenarioSpec, p, b) -> FeasibleBox:
    anchor = b if spec.mode == "surveillance" else np.asarray(spec.basket, float)
    return build_box(p, anchor, np.asarray(spec.kappa), np.asarray(spec.eps_min), spec.field_box)


def _global_problem(spec, gains, world_p, world_b, graph) -> GlobalProblem:
    snaps, boxes = true_snapshots(spec, world_p, world_b, gains)
    return GlobalProblem(snaps, gains, boxes, graph, spec.mode)


def run(config: RunConfig) -> RunResult:
    spec = config.scenario
    n, T, seed = spec.n, config.effective_horizon, config.effective_seed
    gains = [spec.cost_gains(i, config.barrier) for i in range(n)]
    model_p, model_b = spec.kinematic_models()
    R_p = model_p.R if config.measurement_noise else np.zeros((3, 3))
    R_b = model_b.R if config.measurement_noise else np.zeros((3, 3))
    meas_rng = [_rng(seed, i, MEAS) for i in range(n)]
    drop_rng = [_rng(seed, i, DROPOUT) for i in range(n)]
    sense_rng = [_rng(seed, i, SENSING) for i in range(n)]
    strict = config.box_timing == "strict"
    t_start = time.perf_counter()

    def hist(*shape, fill=np.nan):
        return np.full((T + 1, *shape), fill)

    X, Xt, S, Y = hist(n, 3), hist(n, 3), hist(n, 3), hist(n, 3)
    P_hat, B_hat, lo, hi = hist(n, 3), hist(n, 3), hist(n, 3), hist(n, 3)
    cost, degree = hist(n), hist(n, fill=0)
    intr, targ = hist(n, 3), hist(3)
    s_cons, y_cons, s_err, y_err, dmin, repairs = hist(), hist(), hist(), hist(), hist(), hist(fill=0)
    graphs: list[CommGraph] = []
    violations = 0
    outside = 0

    # -- initialization ------------------------------------------------
    world = world_at(spec, 0, [a.x0 for a in spec.agents])
    agents: list[AgentState] = []
    x0 = np.array([a.x0 for a in spec.agents], dtype=float)
    graph = build_proximity_graph(x0, spec.comm_radius)
    for i in range(n):
        z0 = measure(world.intruders[i], world.target, R_p, R_b, meas_rng[i])
        filt = init_filter(z0, model_p, model_b, p0=0.0 if config.strict_kalman_init else spec.noise.p0)
        p_hat, b_hat = position_estimate(filt)
        box0 = _box(spec, p_hat, b_hat)
        offsets = sensed_offsets(x0, i, graph, sense_rng[i], spec.noise.sensing)
        snap0 = CostSnapshot(*_references(spec, p_hat, b_hat, gains[i]), offsets)
        agents.append(init_agent(i, x0[i], box0, snap0, gains[i], filt, spec.alpha, spec.delta, spec.mode))
    bus = SyncBus(n)

    for t in range(T + 1):
        world = world_at(spec, t, [a.x for a in agents])
        graph = metropolis_weights(build_proximity_graph(world.defenders, spec.comm_radius), spec.laziness)
        graphs.append(graph)
        offsets = [sensed_offsets(world.defenders, i, graph, sense_rng[i], spec.noise.sensing) for i in range(n)]
        # the barrier part of the current-round cost uses offsets sensed now
        agents = [dataclasses.replace(a, snapshot=a.snapshot.with_offsets(offsets[a.agent_id])) for a in agents]

        X[t] = [a.x for a in agents]
        S[t] = [a.s for a in agents]
        Y[t] = [a.y for a in agents]
        intr[t], targ[t] = world.intruders, world.target
        for a in agents:
            i = a.agent_id
            P_hat[t, i], B_hat[t, i] = a.snapshot.p_ref, a.snapshot.b_ref
            lo[t, i], hi[t, i] = a.box.lower, a.box.upper
            cost[t, i] = eval_cost(a.x, a.s, a.snapshot, a.gains, a.mode)
            degree[t, i] = graph.degree(i)
            repairs[t] += a.box.n_repaired
        snaps_t = [a.snapshot for a in agents]
        g2 = np.array([grad2_cost(a.x, a.s, a.snapshot, a.gains, a.mode) for a in agents])
        s_cons[t] = np.abs(S[t].mean(axis=0) - X[t].mean(axis=0)).max()
        y_cons[t] = np.linalg.norm(Y[t].sum(axis=0) - g2.sum(axis=0))
        s_err[t], y_err[t] = tracking_errors(X[t], S[t], Y[t], snaps_t, gains, spec.mode)
        dmin[t] = min_pairwise_distance(X[t])
        if t == T:
            break

        # measure + predict (local to each agent)
        nexts: list[tuple[CostSnapshot, FeasibleBox]] = []
        for a in agents:
            i = a.agent_id
            z = measure(world.intruders[i], world.target, R_p, R_b, meas_rng[i], spec.noise.dropout, drop_rng[i])
            new_filter = kf_step_compact(a.filter, z)
            if config.prediction:
                p_hat, b_hat = position_estimate(new_filter)
            else:
                p_hat, b_hat = filtered_positions(a.filter, z)
            snap_next = CostSnapshot(*_references(spec, p_hat, b_hat, a.gains), offsets[i])
            nexts.append((snap_next, _box(spec, p_hat, b_hat)))
            agents[i] = dataclasses.replace(a, filter=new_filter)

        # exchange barrier
        for a in agents:
            bus.post(a.agent_id, a.s, a.y)
        bus.deliver(graph)

        new_agents = []
        for a in agents:
            i = a.agent_id
            snap_next, box_next = nexts[i]
            used = a.box if strict else box_next
            b = optimize_step(a, bus.mailbox(i), graph.weights[i], snap_next, box_next, strict_box=strict)
            Xt[t, i] = b.x_tilde
            if not used.contains(b.x_tilde):
                violations += 1
            if used.contains(a.x) and not used.contains(b.x):
                violations += 1
            if not used.contains(b.x):
                outside += 1
            new_agents.append(b)
        agents = new_agents
        bus.next_round()

    result = RunResult(
        spec=spec, config=config, X=X, X_tilde=Xt, S=S, Y=Y, P_hat=P_hat, B_hat=B_hat,
        box_lo=lo, box_hi=hi, local_cost=cost, degree=degree, intruders=intr, target=targ,
        graphs=graphs, s_conservation=s_cons, y_conservation=y_cons, s_error=s_err, y_error=y_err,
        min_distance=dmin, repairs=repairs, feasibility_violations=violations, outside_after_step=outside,
    )
    result.b_connected = check_b_connectivity(graphs, config.b_window)
    if False in result.b_connected:
        log.warning("B-connectivity (B=%d) first violated at t=%d", config.b_window, result.b_connected.index(False))
    if config.oracle:
        _attach_oracle(result, gains)
    result.runtime = time.perf_counter() - t_start
    result.summary = summarize(result)
    if config.out_dir is not None:
        write_outputs(result, Path(config.out_dir))
    return result


def compute_oracle(spec: ScenarioSpec, gains, X, intruders, target, graphs):
    """Per-step global and oracle costs for t = 0..T (oracle warm-started at the previous optimum)."""
    T = X.shape[0] - 1
    gcost = np.full(T + 1, np.nan)
    ocost = np.full(T + 1, np.nan)
    ox = np.full_like(X, np.nan)
    conv = np.ones(T + 1, dtype=bool)
    warm = None
    lips = None
    for t in range(T + 1):
        prob = _global_problem(spec, gains, intruders[t], target[t], graphs[t])
        if lips is None:
            lips = prob.lipschitz()  # gains are fixed over the run
        res = centralized_oracle(prob, X[t] if warm is None else warm, lipschitz=lips)
        warm = res.x
        gcost[t] = prob.cost(X[t])
        ocost[t] = res.cost
        ox[t] = res.x
        conv[t] = res.converged
    return gcost, ocost, ox, conv


def _attach_oracle(result: RunResult, gains) -> None:
    g, o, ox, conv = compute_oracle(result.spec, gains, result.X, result.intruders, result.target, result.graphs)
    result.global_cost, result.oracle_cost, result.oracle_x, result.oracle_converged = g, o, ox, conv


def summarize(r: RunResult) -> dict[str, Any]:
    out: dict[str, Any] = {
        "scenario": r.spec.name,
        "n": r.spec.n,
        "horizon": r.T,
        "seed": r.config.effective_seed,
        "runtime_s": r.runtime,
        "max_s_conservation": float(np.nanmax(r.s_conservation)),
        "max_y_conservation": float(np.nanmax(r.y_conservation)),
        "final_s_error": float(r.s_error[-1]),
        "final_y_error": float(r.y_error[-1]),
        "max_s_error": float(np.nanmax(r.s_error)),
        "max_y_error": float(np.nanmax(r.y_error)),
        "feasibility_violations": r.feasibility_violations,
        "iterates_outside_box": r.outside_after_step,
        "box_repairs": int(np.sum(r.repairs)),
        "min_pairwise_distance": float(np.nanmin(r.min_distance)),
        "b_connectivity_violations": int(sum(1 for c in r.b_connected if not c)),
    }
    if r.global_cost is not None:
        ledger = dynamic_regret(r.global_cost[1:], r.oracle_cost[1:])
        out["regret"] = ledger.total
        out["regret_baseline"] = "stationary point" if r.spec.barrier and r.config.barrier is not False else "global minimum"
        out["oracle_nonconverged"] = int(np.sum(~r.oracle_converged))
    return out


# -- output files -----------------------------------------------------------

def _f(v: float) -> str:
    return "%.17g" % v


def _vec(prefix: str) -> list[str]:
    return [f"{prefix}{c}" for c in "xyz"]


TRACE_FIELDS = (
    ["t", "agent"] + _vec("x_") + _vec("xt_") + _vec("s_") + _vec("y_") + _vec("phat_") + _vec("bhat_")
    + _vec("lo_") + _vec("hi_") + ["cost", "degree"]
)


def write_outputs(r: RunResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    cfg = {"scenario": r.spec.to_dict(), "run": r.config.flags()}
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
    if r.config.trace:
        with open(out / "trace.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_FIELDS)
            for t in range(r.T + 1):
                for i in range(r.spec.n):
                    row = [t, i]
                    for arr in (r.X, r.X_tilde, r.S, r.Y, r.P_hat, r.B_hat, r.box_lo, r.box_hi):
                        row += [_f(v) for v in arr[t, i]]
                    row += [_f(r.local_cost[t, i]), int(r.degree[t, i])]
                    w.writerow(row)
        with open(out / "graph.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "i", "j", "w_ij"])
            for t, g in enumerate(r.graphs):
                for a, b in g.edge_list():
                    w.writerow([t, a, b, _f(g.weights[a, b])])
        with open(out / "world.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            header = ["t"] + [f"p{i}_{c}" for i in range(r.spec.n) for c in "xyz"] + _vec("b_")
            w.writerow(header)
            for t in range(r.T + 1):
                w.writerow([t] + [_f(v) for v in r.intruders[t].ravel()] + [_f(v) for v in r.target[t]])
    write_metrics(out / "metrics.csv", r)
    (out / "summary.json").write_text(json.dumps(r.summary, indent=2, sort_keys=True) + "\n")


METRIC_FIELDS = ["t", "global_cost", "oracle_cost", "gap", "cumulative_regret", "s_error", "y_error",
                 "min_distance", "repairs", "oracle_converged"]


def write_metrics(path: Path, r: RunResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        cum = 0.0
        for t in range(r.T + 1):
            if r.global_cost is not None:
                g, o = r.global_cost[t], r.oracle_cost[t]
                gap = g - o
                if t >= 1:
                    cum += gap
                ocols = [_f(g), _f(o), _f(gap) if t >= 1 else "", _f(cum), int(r.oracle_converged[t])]
            else:
                ocols = ["", "", "", "", ""]
            w.writerow([t, *ocols[:4], _f(r.s_error[t]), _f(r.y_error[t]), _f(r.min_distance[t]),
                        int(r.repairs[t]), ocols[4]])


# -- replay -----------------------------------------------------------------

def load_run(trace_dir: Path):
    """Read config, defender positions, graphs and ground truth back from a run directory."""
    trace_dir = Path(trace_dir)
    cfg = yaml.safe_load((trace_dir / "config.yaml").read_text())
    spec = ScenarioSpec.from_dict(cfg["scenario"])
    flags = cfg["run"]
    n, T = spec.n, flags["horizon"]
    X = np.full((T + 1, n, 3), np.nan)
    with open(trace_dir / "trace.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            t, i = int(row["t"]), int(row["agent"])
            X[t, i] = [float(row[k]) for k in _vec("x_")]
    edges: list[list[tuple[int, int]]] = [[] for _ in range(T + 1)]
    with open(trace_dir / "graph.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            edges[int(row["t"])].append((int(row["i"]), int(row["j"])))
    graphs = [CommGraph.from_edges(n, e) for e in edges]
    intr = np.full((T + 1, n, 3), np.nan)
    targ = np.full((T + 1, 3), np.nan)
    with open(trace_dir / "world.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            t = int(row["t"])
            intr[t] = np.array([float(row[f"p{i}_{c}"]) for i in range(n) for c in "xyz"]).reshape(n, 3)
            targ[t] = [float(row[k]) for k in _vec("b_")]
    return spec, flags, X, graphs, intr, targ


def replay_oracle(trace_dir: Path) -> tuple[np.ndarray, np.ndarray, float]:
    """Recompute per-step gaps and R_T from a finished run's files."""
    spec, flags, X, graphs, intr, targ = load_run(trace_dir)
    gains = [spec.cost_gains(i, flags.get("barrier")) for i in range(spec.n)]
    g, o, _, _ = compute_oracle(spec, gains, X, intr, targ, graphs)
    ledger = dynamic_regret(g[1:], o[1:])
    return ledger.gaps, ledger.cumulative, ledger.total


def read_metrics(path: Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_report(trace_dir: Path, out_dir: Path | None = None) -> dict[str, Path]:
    """Plot-ready CSVs: positions over time, regret curve, tracker errors."""
    trace_dir = Path(trace_dir)
    out_dir = Path(out_dir) if out_dir is not None else trace_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)
    spec, flags, X, graphs, intr, targ = load_run(trace_dir)
    metrics = read_metrics(trace_dir / "metrics.csv")
    paths = {k: out_dir / f"{k}.csv" for k in ("positions", "regret", "tracker_errors")}
    with open(paths["positions"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "time", "agent", "x", "y", "z", "intruder_x", "intruder_y", "intruder_z",
                    "target_x", "target_y", "target_z"])
        for t in range(X.shape[0]):
            for i in range(spec.n):
                w.writerow([t, _f(t * spec.dt), i, *map(_f, X[t, i]), *map(_f, intr[t, i]), *map(_f, targ[t])])
    with open(paths["regret"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "gap", "cumulative_regret"])
        for row in metrics:
            if int(row["t"]) >= 1:
                w.writerow([row["t"], row["gap"], row["cumulative_regret"]])
    with open(paths["tracker_errors"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "s_error", "y_error"])
        for row in metrics:
            w.writerow([row["t"], row["s_error"], row["y_error"]])
    return paths


def default_out_dir(name: str) -> Path:
    return Path(os.environ.get(OUT_ENV, "runs")) / name


def config_from_preset(name: str, **kw) -> RunConfig:
    return RunConfig(scenario=preset(name), **kw)
