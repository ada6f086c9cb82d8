"""Deterministic 2-D swarm simulator on the unit torus.

Three behaviors: hexagonal lattice formation (one two-term force law), square
lattice formation (kin/non-kin force classes), and boids-style coordinated
motion (cohesion / separation / alignment averaged over neighbors).  Agents
are unit-mass holonomic points driven by a double integrator; sensing is
noiseless within a fixed range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "AgentState",
    "BehaviorParams",
    "SimConfig",
    "WorldState",
    "TrajectoryLog",
    "SimError",
    "torus_displacement",
    "lj_force",
    "pair_force_vector",
    "boids_accel",
    "step",
    "simulate",
    "write_trajectory",
    "read_trajectory",
    "AGENT_HEADER",
    "PAIR_HEADER",
]

BEHAVIORS = ("hex", "square", "boids")

AGENT_HEADER = "t,agent,px,py,vx,vy,ax,ay,kin"
PAIR_HEADER = "t,i,j,fx,fy,r,kin_pair"


class SimError(ValueError):
    pass


@dataclass(frozen=True)
class AgentState:
    """Single agent: position on the unit torus, world-frame velocity."""

    position: tuple[float, float]
    velocity: tuple[float, float] = (0.0, 0.0)
    kin_label: int = 1
    mass: float = 1.0


@dataclass(frozen=True)
class BehaviorParams:
    """Force-law coefficients and behavior weights.

    ``a``/``b`` give the hex (and square non-kin) two-term law a/r^12 - b/r^6;
    ``a_kin``/``b_kin`` the square same-category class.  ``damping`` is a
    per-integration-step velocity scaling applied in the shape-formation
    behaviors so lattices settle; ``force_clamp`` bounds each pair force's
    magnitude to keep the integrator stable near the initial-separation limit.
    Both knobs are recorded in run metadata.
    """

    behavior: str = "hex"
    a: float = 1.2e-10
    b: float = 2.2e-5
    a_kin: float = 7.84e-9
    b_kin: float = 1.7e-4
    delta: float = 0.13
    C: float = 2.0
    S: float = 75.0
    A: float = 3.0
    sensing_range: float = 0.5
    damping: float = 0.9
    force_clamp: float = 1000.0
    speed_cap: float = 0.5

    def __post_init__(self):
        if self.behavior not in BEHAVIORS:
            raise SimError(f"unknown behavior {self.behavior!r}")
        if self.sensing_range <= 0:
            raise SimError("sensing_range must be positive")
        if not 0.0 < self.damping <= 1.0:
            raise SimError("damping must lie in (0, 1]")
        if self.force_clamp <= 0 or self.speed_cap <= 0:
            raise SimError("force_clamp and speed_cap must be positive")


@dataclass(frozen=True)
class SimConfig:
    agent_count: int = 20
    duration_s: float = 25.0
    integration_dt_s: float = 0.005
    record_hz: float = 10.0
    runs: int = 1
    rng_seed: int = 0
    params: BehaviorParams = field(default_factory=BehaviorParams)
    min_start_separation: float = 0.05

    def __post_init__(self):
        if self.agent_count < 1:
            raise SimError("agent_count must be >= 1")
        if self.duration_s <= 0 or self.integration_dt_s <= 0:
            raise SimError("duration and dt must be positive")
        if self.runs < 1:
            raise SimError("runs must be >= 1")
        if self.rng_seed < 0:
            raise SimError("rng_seed must be >= 0")
        period = 1.0 / self.record_hz
        steps = round(period / self.integration_dt_s)
        if steps < 1 or abs(steps * self.integration_dt_s - period) > 1e-9:
            raise SimError(
                "record period must be an integer multiple of integration dt"
            )
        if round(self.duration_s * self.record_hz) < 1:
            raise SimError("duration too short to record a single frame")

    @property
    def steps_per_frame(self) -> int:
        return round(1.0 / (self.record_hz * self.integration_dt_s))

    @property
    def n_frames(self) -> int:
        return round(self.duration_s * self.record_hz)


def boids_config(**kw) -> SimConfig:
    """Boids defaults: 50 agents at 30 Hz recording, dt chosen to divide the
    record period exactly."""
    base = dict(
        agent_count=50,
        record_hz=30.0,
        integration_dt_s=1.0 / 300.0,
        params=BehaviorParams(behavior="boids"),
    )
    base.update(kw)
    return SimConfig(**base)


@dataclass
class WorldState:
    """Columnar swarm snapshot."""

    pos: np.ndarray  # (N, 2) in [0, 1)
    vel: np.ndarray  # (N, 2)
    kin: np.ndarray  # (N,) int, labels in {1, 2}

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=float)
        self.vel = np.asarray(self.vel, dtype=float)
        self.kin = np.asarray(self.kin, dtype=int)


# ---------------------------------------------------------------------------
# Geometry and force laws


def torus_displacement(frm: np.ndarray, to: np.ndarray) -> np.ndarray:
    """Minimum-image displacement on the unit torus; components in [-0.5, 0.5)."""
    d = np.asarray(to, dtype=float) - np.asarray(frm, dtype=float)
    return (d + 0.5) % 1.0 - 0.5


def lj_force(r: float, a: float, b: float) -> float:
    """Signed two-term radial force a/r^12 - b/r^6; positive is repulsive."""
    if r <= 0:
        raise SimError("pair distance must be positive")
    return a / r**12 - b / r**6


def pair_force_vector(
    i: AgentState, j: AgentState, params: BehaviorParams
) -> np.ndarray:
    """Force on agent i from agent j (shape behaviors).

    The square behavior selects the kin coefficient class when the labels
    match; out-of-range pairs contribute zero.
    """
    disp = torus_displacement(np.asarray(i.position), np.asarray(j.position))
    r = float(np.hypot(disp[0], disp[1]))
    if r == 0.0 or r > params.sensing_range:
        return np.zeros(2)
    if params.behavior == "square" and i.kin_label == j.kin_label:
        a, b = params.a_kin, params.b_kin
    else:
        a, b = params.a, params.b
    magnitude = lj_force(r, a, b)
    magnitude = float(np.clip(magnitude, -params.force_clamp, params.force_clamp))
    # positive magnitude pushes i away from j (repulsion along the j->i axis)
    return -magnitude * disp / r


def boids_accel(
    self_state: AgentState,
    neighbors: Sequence[AgentState],
    params: BehaviorParams,
) -> np.ndarray:
    """Cohesion/separation/alignment rule averaged over in-range neighbors.

    Returns zero for an empty neighborhood; coincident neighbors are skipped.
    """
    total = np.zeros(2)
    count = 0
    pos = np.asarray(self_state.position)
    for n in neighbors:
        disp = torus_displacement(pos, np.asarray(n.position))
        r = float(np.hypot(disp[0], disp[1]))
        if r == 0.0 or r > params.sensing_range:
            continue
        vel = np.asarray(n.velocity, dtype=float)
        total += params.C * disp / r - params.S * disp / r**2 + params.A * vel
        count += 1
    if count == 0:
        return np.zeros(2)
    return total / count


# ---------------------------------------------------------------------------
# Vectorized stepping


def _pair_matrices(world: WorldState, params: BehaviorParams):
    """Minimum-image displacements, distances and the in-range mask."""
    disp = torus_displacement(world.pos[:, None, :], world.pos[None, :, :])
    r = np.sqrt((disp**2).sum(axis=2))
    n = world.pos.shape[0]
    mask = (r > 0.0) & (r <= params.sensing_range)
    np.fill_diagonal(mask, False)
    return disp, r, mask


def _shape_forces(world: WorldState, params: BehaviorParams):
    """Per-pair force matrix (force on i from j) and per-agent sums."""
    disp, r, mask = _pair_matrices(world, params)
    safe_r = np.where(mask, r, 1.0)
    if params.behavior == "square":
        same = world.kin[:, None] == world.kin[None, :]
        a = np.where(same, params.a_kin, params.a)
        b = np.where(same, params.b_kin, params.b)
    else:
        a, b = params.a, params.b
    magnitude = a / safe_r**12 - b / safe_r**6
    magnitude = np.clip(magnitude, -params.force_clamp, params.force_clamp)
    pair_f = np.where(
        mask[:, :, None], (-magnitude / safe_r)[:, :, None] * disp, 0.0
    )
    return pair_f, pair_f.sum(axis=1), r, mask


def _boids_forces(world: WorldState, params: BehaviorParams):
    """Per-pair rule terms (before averaging) and per-agent mean acceleration."""
    disp, r, mask = _pair_matrices(world, params)
    safe_r = np.where(mask, r, 1.0)
    term = (
        params.C * disp / safe_r[:, :, None]
        - params.S * disp / (safe_r**2)[:, :, None]
        + params.A * np.broadcast_to(world.vel[None, :, :], disp.shape)
    )
    term = np.where(mask[:, :, None], term, 0.0)
    counts = mask.sum(axis=1)
    accel = np.zeros_like(world.vel)
    nonzero = counts > 0
    accel[nonzero] = term.sum(axis=1)[nonzero] / counts[nonzero, None]
    return term, accel, r, mask


def _step_full(world: WorldState, params: BehaviorParams, dt: float):
    if params.behavior == "boids":
        pair_f, accel, r, mask = _boids_forces(world, params)
        vel = world.vel + accel * dt
        speed = np.sqrt((vel**2).sum(axis=1))
        over = speed > params.speed_cap
        if over.any():
            vel[over] *= (params.speed_cap / speed[over])[:, None]
    else:
        pair_f, accel, r, mask = _shape_forces(world, params)
        vel = params.damping * (world.vel + accel * dt)
    pos = (world.pos + vel * dt) % 1.0
    return WorldState(pos, vel, world.kin.copy()), accel, pair_f, r, mask


def step(world: WorldState, params: BehaviorParams, dt: float) -> WorldState:
    """Semi-implicit Euler update of the whole swarm (unit mass)."""
    if dt <= 0:
        raise SimError("dt must be positive")
    return _step_full(world, params, dt)[0]


# ---------------------------------------------------------------------------
# Trajectory recording


@dataclass
class TrajectoryLog:
    """Recorded frames of one run plus per-pair force records."""

    behavior: str
    run_index: int
    times: np.ndarray  # (F,)
    pos: np.ndarray  # (F, N, 2)
    vel: np.ndarray  # (F, N, 2)
    acc: np.ndarray  # (F, N, 2)
    kin: np.ndarray  # (N,)
    pair_t: np.ndarray  # (K,)
    pair_i: np.ndarray  # (K,)
    pair_j: np.ndarray  # (K,)
    pair_f: np.ndarray  # (K, 2)
    pair_r: np.ndarray  # (K,)
    pair_kin: np.ndarray  # (K,) 1 = same category, 2 = different
    degenerate_pairs: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return self.times.shape[0]

    @property
    def n_agents(self) -> int:
        return self.kin.shape[0]


def _initial_positions(
    rng: np.random.Generator, count: int, min_sep: float
) -> np.ndarray:
    pos = np.empty((count, 2))
    placed = 0
    attempts = 0
    while placed < count:
        attempts += 1
        if attempts > 10_000 * count:
            raise SimError("could not place agents with the minimum separation")
        cand = rng.random(2)
        if placed:
            d = torus_displacement(pos[:placed], cand[None, :])
            if (np.sqrt((d**2).sum(axis=1)) < min_sep).any():
                continue
        pos[placed] = cand
        placed += 1
    return pos


def _initial_world(cfg: SimConfig, rng: np.random.Generator) -> WorldState:
    pos = _initial_positions(rng, cfg.agent_count, cfg.min_start_separation)
    kin = np.ones(cfg.agent_count, dtype=int)
    if cfg.params.behavior == "square":
        # alternating categories, half and half
        kin[1::2] = 2
    if cfg.params.behavior == "boids":
        heading = rng.random(cfg.agent_count) * 2.0 * math.pi
        vel = np.stack([np.cos(heading), np.sin(heading)], axis=1)
    else:
        vel = np.zeros((cfg.agent_count, 2))
    return WorldState(pos, vel, kin)


def simulate_run(cfg: SimConfig, run_index: int) -> TrajectoryLog:
    """Simulate one seeded run and record frames at the configured rate."""
    rng = np.random.default_rng([cfg.rng_seed, run_index])
    world = _initial_world(cfg, rng)
    params = cfg.params
    n_frames = cfg.n_frames
    spf = cfg.steps_per_frame
    n = cfg.agent_count

    times = np.empty(n_frames)
    pos = np.empty((n_frames, n, 2))
    vel = np.empty((n_frames, n, 2))
    acc = np.empty((n_frames, n, 2))
    pair_chunks: list[tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
    degenerate = 0

    for frame in range(n_frames):
        for _ in range(spf):
            world, accel, pair_f, r, mask = _step_full(world, params, cfg.integration_dt_s)
        t = (frame + 1) / cfg.record_hz
        times[frame] = t
        pos[frame] = world.pos
        vel[frame] = world.vel
        acc[frame] = accel
        degenerate += int(((r == 0.0).sum() - n) // 2)
        ii, jj = np.nonzero(mask)
        pair_chunks.append((t, ii, jj, pair_f[ii, jj], r[ii, jj]))

    pair_t = np.concatenate([np.full(c[1].shape[0], c[0]) for c in pair_chunks])
    pair_i = np.concatenate([c[1] for c in pair_chunks])
    pair_j = np.concatenate([c[2] for c in pair_chunks])
    pair_f_all = (
        np.concatenate([c[3] for c in pair_chunks])
        if pair_t.size
        else np.zeros((0, 2))
    )
    pair_r_all = np.concatenate([c[4] for c in pair_chunks])
    pair_kin = np.where(
        world.kin[pair_i] == world.kin[pair_j], 1, 2
    ) if pair_t.size else np.zeros(0, dtype=int)

    return TrajectoryLog(
        behavior=params.behavior,
        run_index=run_index,
        times=times,
        pos=pos,
        vel=vel,
        acc=acc,
        kin=world.kin.copy(),
        pair_t=pair_t,
        pair_i=pair_i,
        pair_j=pair_j,
        pair_f=pair_f_all,
        pair_r=pair_r_all,
        pair_kin=pair_kin,
        degenerate_pairs=degenerate,
        meta={
            "behavior": params.behavior,
            "seed": str(cfg.rng_seed),
            "run": str(run_index),
            "damping": format(params.damping, ".17g"),
            "force_clamp": format(params.force_clamp, ".17g"),
            "speed_cap": format(params.speed_cap, ".17g"),
        },
    )


def simulate(cfg: SimConfig) -> list[TrajectoryLog]:
    """All configured runs, each on its own (seed, run-index) RNG stream."""
    return [simulate_run(cfg, k) for k in range(cfg.runs)]


# ---------------------------------------------------------------------------
# Persistence (one agent CSV + one pair CSV per run)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory(log: TrajectoryLog, agents_path, pairs_path) -> None:
    lines = [f"# {k}={v}" for k, v in sorted(log.meta.items())]
    lines.append(AGENT_HEADER)
    for f in range(log.n_frames):
        t = _fmt(log.times[f])
        for a in range(log.n_agents):
            px, py = log.pos[f, a]
            vx, vy = log.vel[f, a]
            ax, ay = log.acc[f, a]
            lines.append(
                f"{t},{a},{_fmt(px)},{_fmt(py)},{_fmt(vx)},{_fmt(vy)},"
                f"{_fmt(ax)},{_fmt(ay)},{log.kin[a]}"
            )
    with open(agents_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    plines = [f"# {k}={v}" for k, v in sorted(log.meta.items())]
    plines.append(PAIR_HEADER)
    for k in range(log.pair_t.shape[0]):
        fx, fy = log.pair_f[k]
        plines.append(
            f"{_fmt(log.pair_t[k])},{log.pair_i[k]},{log.pair_j[k]},"
            f"{_fmt(fx)},{_fmt(fy)},{_fmt(log.pair_r[k])},{log.pair_kin[k]}"
        )
    with open(pairs_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(plines) + "\n")


def _read_csv(path, header: str):
    meta: dict[str, str] = {}
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
                continue
            if line == header:
                continue
            parts = line.split(",")
            if len(parts) != len(header.split(",")):
                raise SimError(f"{path}:{lineno}: malformed row {line!r}")
            rows.append(parts)
    return meta, rows


def read_trajectory(agents_path, pairs_path) -> TrajectoryLog:
    meta, arows = _read_csv(agents_path, AGENT_HEADER)
    _, prows = _read_csv(pairs_path, PAIR_HEADER)
    if not arows:
        raise SimError(f"{agents_path}: no agent rows")

    agents = sorted({int(r[1]) for r in arows})
    n = len(agents)
    times = sorted({float(r[0]) for r in arows})
    frame_of = {t: i for i, t in enumerate(times)}
    f_count = len(times)

    pos = np.zeros((f_count, n, 2))
    vel = np.zeros((f_count, n, 2))
    acc = np.zeros((f_count, n, 2))
    kin = np.ones(n, dtype=int)
    for r in arows:
        f = frame_of[float(r[0])]
        a = int(r[1])
        pos[f, a] = (float(r[2]), float(r[3]))
        vel[f, a] = (float(r[4]), float(r[5]))
        acc[f, a] = (float(r[6]), float(r[7]))
        kin[a] = int(r[8])

    k_count = len(prows)
    pair_t = np.zeros(k_count)
    pair_i = np.zeros(k_count, dtype=int)
    pair_j = np.zeros(k_count, dtype=int)
    pair_f = np.zeros((k_count, 2))
    pair_r = np.zeros(k_count)
    pair_kin = np.zeros(k_count, dtype=int)
    for k, r in enumerate(prows):
        pair_t[k] = float(r[0])
        pair_i[k] = int(r[1])
        pair_j[k] = int(r[2])
        pair_f[k] = (float(r[3]), float(r[4]))
        pair_r[k] = float(r[5])
        pair_kin[k] = int(r[6])

    return TrajectoryLog(
        behavior=meta.get("behavior", "hex"),
        run_index=int(meta.get("run", "0")),
        times=np.asarray(times),
        pos=pos,
        vel=vel,
        acc=acc,
        kin=kin,
        pair_t=pair_t,
        pair_i=pair_i,
        pair_j=pair_j,
        pair_f=pair_f,
        pair_r=pair_r,
        pair_kin=pair_kin,
        meta=meta,
    )
