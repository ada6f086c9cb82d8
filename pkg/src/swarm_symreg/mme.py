"""Nested macro-micro evolution over expression trees.

The macro layer evolves expression *structure* (subtree crossover, node
mutation, structural duplicate removal); the micro layer tunes each
survivor's parameter vector with a small (mu+lambda) GA on a log scale.
Both layers share one fitness: a weighted sum of a complexity transform and
a worst-normalized accuracy transform, lower is better.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import exprtree as et
from .exprtree import (
    ARITY,
    DEFAULT_COSTS,
    CostTable,
    ExprNode,
    Invalid,
    Op,
    Param,
    Var,
)

__all__ = [
    "Individual",
    "MicroConfig",
    "MmeConfig",
    "RegressionDataset",
    "MmeResult",
    "MmeError",
    "MmeConfigError",
    "make_individual",
    "fc",
    "accuracy_h",
    "fitness",
    "compute_mse",
    "micro_evolve",
    "macro_generation",
    "run_mme",
    "best_solution",
    "random_individual",
    "score_population",
    "remove_duplicates",
    "write_results",
    "read_results",
    "RESULTS_HEADER",
]

RESULTS_HEADER = "rank,expr,complexity,mse,fitness,generation"


class MmeError(RuntimeError):
    pass


class MmeConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class MicroConfig:
    """Inner-GA settings for parameter tuning.

    Parameter magnitudes are drawn log-uniformly from
    ``[1e-12, 10**(-12 + init_spread)]`` with random sign; mutation is a
    multiplicative log-normal step with occasional sign flips.
    """

    micro_population: int = 32
    micro_generations: int = 25
    init_spread: float = 15.0
    mutation_sigma: float = 0.3
    convergence_tol: float = 1e-6
    sign_flip_rate: float = 0.1

    def __post_init__(self):
        if self.micro_population < 1 or self.micro_generations < 1:
            raise MmeConfigError("micro population and generations must be >= 1")
        if self.init_spread <= 0 or self.mutation_sigma <= 0:
            raise MmeConfigError("init_spread and mutation_sigma must be positive")
        if self.convergence_tol < 0:
            raise MmeConfigError("convergence_tol must be >= 0")


@dataclass(frozen=True)
class MmeConfig:
    population_size: int = 4000
    max_generations: int = 200
    rho: float = 0.3
    tau: int = 12
    operators: tuple[str, ...] = ("add", "sub", "mul", "div", "pow")
    costs: CostTable = field(default_factory=lambda: DEFAULT_COSTS)
    survivor_fraction: float = 0.25
    crossover_rate: float = 0.7
    mutation_rate: float = 0.3
    max_nodes: int = 40
    micro: MicroConfig = field(default_factory=MicroConfig)
    rng_seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise MmeConfigError("population_size must be >= 2")
        if not 0.0 <= self.rho <= 1.0:
            raise MmeConfigError("rho must lie in [0, 1]")
        if self.tau < 1:
            raise MmeConfigError("tau must be >= 1")
        if not 0.0 < self.survivor_fraction < 1.0:
            raise MmeConfigError("survivor_fraction must lie in (0, 1)")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise MmeConfigError(f"{name} must lie in [0, 1]")
        if not self.operators:
            raise MmeConfigError("operator set must not be empty")
        for kind in self.operators:
            if kind not in ARITY:
                raise MmeConfigError(f"unknown operator {kind!r}")
        if self.max_nodes < 3:
            raise MmeConfigError("max_nodes must be >= 3")
        if self.rng_seed < 0:
            raise MmeConfigError("rng_seed must be >= 0")


# ---------------------------------------------------------------------------
# Data


@dataclass
class RegressionDataset:
    """Tabular samples mapping feature columns to one or two target columns.

    For 2-column (vector) targets, ``features_alt`` carries the second
    component's view of the same samples: an expression is evaluated once per
    component against the matching view, and the MSE averages over rows and
    both components.
    """

    features: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...] = ()
    target_names: tuple[str, ...] = ()
    features_alt: np.ndarray | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.features.ndim != 2:
            raise MmeConfigError("features must be a 2-d array")
        if self.features.shape[0] == 0:
            raise MmeConfigError("dataset must contain at least one row")
        if self.targets.shape[0] != self.features.shape[0]:
            raise MmeConfigError("features and targets row counts differ")
        if self.targets.ndim == 2:
            if self.targets.shape[1] != 2:
                raise MmeConfigError("matrix targets must have exactly 2 columns")
            if self.features_alt is None:
                raise MmeConfigError("2-column targets require features_alt")
            self.features_alt = np.asarray(self.features_alt, dtype=float)
            if self.features_alt.shape != self.features.shape:
                raise MmeConfigError("features_alt shape must match features")
            if not np.isfinite(self.features_alt).all():
                raise MmeConfigError("features_alt must be finite")
        elif self.targets.ndim != 1:
            raise MmeConfigError("targets must be a vector or a 2-column matrix")
        if not np.isfinite(self.features).all() or not np.isfinite(self.targets).all():
            raise MmeConfigError("dataset entries must be finite")
        if not self.feature_names:
            self.feature_names = tuple(f"x{i}" for i in range(self.features.shape[1]))
        if len(self.feature_names) != self.features.shape[1]:
            raise MmeConfigError("feature_names length mismatch")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


# ---------------------------------------------------------------------------
# Individuals


@dataclass
class Individual:
    """An expression plus its parameter vector and cached scores."""

    expr: ExprNode
    params: np.ndarray
    complexity: int
    text: str
    skey: str
    mse: float | Invalid | None = None
    fitness: float | None = None
    generation: int = 0


def make_individual(
    expr: ExprNode,
    params: Sequence[float],
    costs: CostTable = DEFAULT_COSTS,
    generation: int = 0,
) -> Individual:
    et.validate(expr)
    params = np.asarray(params, dtype=float)
    if et.param_count(expr) != params.shape[0]:
        raise MmeConfigError("parameter vector length must match tree slot count")
    return Individual(
        expr=expr,
        params=params,
        complexity=et.complexity(expr, costs),
        text=et.serialize(expr, params),
        skey=et.structure_key(expr),
        generation=generation,
    )


def _rebuilt(ind: Individual, params: np.ndarray, mse: float | Invalid | None) -> Individual:
    return Individual(
        expr=ind.expr,
        params=params,
        complexity=ind.complexity,
        text=et.serialize(ind.expr, params),
        skey=ind.skey,
        mse=mse,
        generation=ind.generation,
    )


# ---------------------------------------------------------------------------
# Fitness pieces


def fc(complexity: int, tau: int) -> float:
    """Complexity transform: zero up to the target complexity, linear above."""
    if tau < 1:
        raise MmeConfigError("tau must be >= 1")
    return max(0, complexity - tau) / tau


def accuracy_h(mse: float, worst_mse: float) -> float:
    """Accuracy transform: MSE normalized by the generation's worst survivor."""
    if worst_mse <= 0:
        raise MmeConfigError("worst_mse must be positive")
    return mse / worst_mse


def fitness(ind: Individual, worst_mse: float, cfg: MmeConfig) -> float | Invalid:
    """Weighted blend of complexity and accuracy transforms; lower is better."""
    if ind.mse is None:
        raise MmeError("individual has no cached MSE")
    if isinstance(ind.mse, Invalid):
        return ind.mse
    return cfg.rho * fc(ind.complexity, cfg.tau) + (1.0 - cfg.rho) * accuracy_h(
        ind.mse, worst_mse
    )


# ---------------------------------------------------------------------------
# MSE


def _batch_mse(expr: ExprNode, params: np.ndarray, data: RegressionDataset) -> np.ndarray:
    """MSE per candidate parameter vector; np.inf marks invalid candidates."""
    values, reasons = et.evaluate_batch(expr, params, data.features)
    with np.errstate(all="ignore"):
        if data.targets.ndim == 1:
            mse = np.mean((values - data.targets[None, :]) ** 2, axis=1)
        else:
            values_y, reasons_y = et.evaluate_batch(expr, params, data.features_alt)
            reasons = np.maximum(reasons, reasons_y)
            err_x = (values - data.targets[None, :, 0]) ** 2
            err_y = (values_y - data.targets[None, :, 1]) ** 2
            mse = 0.5 * (np.mean(err_x, axis=1) + np.mean(err_y, axis=1))
    mse = np.where((reasons != 0) | ~np.isfinite(mse), np.inf, mse)
    return mse


def compute_mse(ind: Individual, data: RegressionDataset) -> float | Invalid:
    """Mean squared error over all rows (and both components for 2-d targets)."""
    out = et.evaluate_rows(ind.expr, ind.params, data.features)
    if isinstance(out, Invalid):
        return out
    with np.errstate(all="ignore"):
        if data.targets.ndim == 1:
            mse = float(np.mean((out - data.targets) ** 2))
        else:
            out_y = et.evaluate_rows(ind.expr, ind.params, data.features_alt)
            if isinstance(out_y, Invalid):
                return out_y
            mse = float(
                0.5
                * (
                    np.mean((out - data.targets[:, 0]) ** 2)
                    + np.mean((out_y - data.targets[:, 1]) ** 2)
                )
            )
    # squared errors can overflow even when every row value is finite
    return mse if math.isfinite(mse) else Invalid(et.NON_FINITE)


def _ensure_scored(ind: Individual, data: RegressionDataset) -> None:
    if ind.mse is None:
        ind.mse = compute_mse(ind, data)


def score_population(
    pop: Iterable[Individual], data: RegressionDataset, cfg: MmeConfig
) -> list[Individual]:
    """Drop invalid individuals, compute fitness against the worst survivor,
    and return the population ranked best-first (deterministic tie-breaks)."""
    pop = list(pop)
    for ind in pop:
        _ensure_scored(ind, data)
    valid = [ind for ind in pop if not isinstance(ind.mse, Invalid)]
    if not valid:
        return []
    worst = max(ind.mse for ind in valid)
    for ind in valid:
        h = 0.0 if worst == 0.0 else ind.mse / worst
        ind.fitness = cfg.rho * fc(ind.complexity, cfg.tau) + (1.0 - cfg.rho) * h
    valid.sort(key=lambda i: (i.fitness, i.complexity, i.text))
    return valid


def remove_duplicates(pop: Iterable[Individual]) -> list[Individual]:
    """Keep one representative per structure: the best-fitness scored one,
    else the first encountered."""
    best: dict[str, Individual] = {}
    for ind in pop:
        cur = best.get(ind.skey)
        if cur is None:
            best[ind.skey] = ind
            continue
        ind_rank = (0, ind.fitness) if ind.fitness is not None else (1, 0.0)
        cur_rank = (0, cur.fitness) if cur.fitness is not None else (1, 0.0)
        if ind_rank < cur_rank:
            best[ind.skey] = ind
    return list(best.values())


# ---------------------------------------------------------------------------
# Random trees and variation operators


def _sample_param_value(rng: np.random.Generator, micro: MicroConfig) -> float:
    mag = 10.0 ** (-12.0 + micro.init_spread * rng.random())
    return mag if rng.random() < 0.5 else -mag


def _grow(
    rng: np.random.Generator,
    cfg: MmeConfig,
    n_features: int,
    max_depth: int,
    values: list[float],
) -> ExprNode:
    def build(depth: int) -> ExprNode:
        terminal = depth >= max_depth or (depth > 0 and rng.random() < 0.3)
        if terminal:
            if rng.random() < 0.5:
                return Var(int(rng.integers(n_features)))
            values.append(_sample_param_value(rng, cfg.micro))
            return Param(len(values) - 1)
        kind = cfg.operators[int(rng.integers(len(cfg.operators)))]
        children = tuple(build(depth + 1) for _ in range(ARITY[kind]))
        return Op(kind, children)

    return build(0)


def random_individual(
    rng: np.random.Generator,
    cfg: MmeConfig,
    n_features: int,
    max_depth: int = 4,
    generation: int = 0,
) -> Individual:
    values: list[float] = []
    expr = _grow(rng, cfg, n_features, max_depth, values)
    return make_individual(expr, values, cfg.costs, generation)


def _pick_path(rng: np.random.Generator, expr: ExprNode) -> tuple[int, ...]:
    paths = et.all_paths(expr)
    return paths[int(rng.integers(len(paths)))]


def mutate(
    ind: Individual,
    cfg: MmeConfig,
    rng: np.random.Generator,
    n_features: int,
    generation: int = 0,
) -> Individual:
    """One of: subtree replacement, in-place operator swap, leaf type flip."""
    kind = int(rng.integers(3))
    expr = ind.expr
    values = dict(enumerate(ind.params))

    if kind == 1:
        op_paths = [p for p in et.all_paths(expr) if isinstance(et.get_subtree(expr, p), Op)]
        if op_paths:
            path = op_paths[int(rng.integers(len(op_paths)))]
            node = et.get_subtree(expr, path)
            options = [
                k
                for k in cfg.operators
                if ARITY[k] == ARITY[node.kind] and k != node.kind
            ]
            if options:
                new = Op(options[int(rng.integers(len(options)))], node.children)
                new_expr = et.replace_subtree(expr, path, new)
                return make_individual(new_expr, ind.params, cfg.costs, generation)
        kind = 0  # degenerate tree: fall back to subtree replacement

    if kind == 2:
        leaf_paths = [
            p for p in et.all_paths(expr) if not isinstance(et.get_subtree(expr, p), Op)
        ]
        path = leaf_paths[int(rng.integers(len(leaf_paths)))]
        leaf = et.get_subtree(expr, path)
        if isinstance(leaf, Var):
            slot = len(ind.params)
            values[slot] = _sample_param_value(rng, cfg.micro)
            raw = et.replace_subtree(expr, path, Param(slot))
        else:
            raw = et.replace_subtree(expr, path, Var(int(rng.integers(n_features))))
        new_expr, params = et.canonicalize_params(raw, values)
        return make_individual(new_expr, params, cfg.costs, generation)

    # subtree replacement
    path = _pick_path(rng, expr)
    local: list[float] = []
    sub = _grow(rng, cfg, n_features, 3, local)
    base = len(ind.params)
    raw = et.replace_subtree(expr, path, et.shift_param_slots(sub, base))
    if et.node_count(raw) > cfg.max_nodes:
        # keep the tree bounded: drop in a fresh leaf instead
        local = [_sample_param_value(rng, cfg.micro)]
        raw = et.replace_subtree(expr, path, Param(base))
    merged = values | {base + i: v for i, v in enumerate(local)}
    new_expr, params = et.canonicalize_params(raw, merged)
    return make_individual(new_expr, params, cfg.costs, generation)


def crossover(
    a: Individual,
    b: Individual,
    cfg: MmeConfig,
    rng: np.random.Generator,
    n_features: int,
    generation: int = 0,
) -> Individual:
    """Swap a random subtree of ``a`` for a random subtree of ``b``.

    Donor parameter values travel with the donated subtree.
    """
    for _ in range(8):
        path_a = _pick_path(rng, a.expr)
        donor = et.get_subtree(b.expr, _pick_path(rng, b.expr))
        base = len(a.params)
        raw = et.replace_subtree(a.expr, path_a, et.shift_param_slots(donor, base))
        if et.node_count(raw) <= cfg.max_nodes:
            merged = dict(enumerate(a.params)) | {
                base + s: v for s, v in enumerate(b.params)
            }
            new_expr, params = et.canonicalize_params(raw, merged)
            return make_individual(new_expr, params, cfg.costs, generation)
    return mutate(a, cfg, rng, n_features, generation)


def _tournament(ranked: list[Individual], rng: np.random.Generator, size: int = 4) -> Individual:
    k = min(size, len(ranked))
    idx = rng.integers(0, len(ranked), size=k).min()
    return ranked[int(idx)]


def _breed(
    parents: list[Individual],
    n_children: int,
    cfg: MmeConfig,
    rng: np.random.Generator,
    n_features: int,
    generation: int,
) -> list[Individual]:
    children: list[Individual] = []
    while len(children) < n_children:
        if rng.random() < cfg.crossover_rate and len(parents) >= 2:
            pa = _tournament(parents, rng)
            pb = _tournament(parents, rng)
            child = crossover(pa, pb, cfg, rng, n_features, generation)
            if rng.random() < cfg.mutation_rate:
                child = mutate(child, cfg, rng, n_features, generation)
        else:
            child = mutate(_tournament(parents, rng), cfg, rng, n_features, generation)
        children.append(child)
    return children


# ---------------------------------------------------------------------------
# Micro evolution


def micro_evolve(
    ind: Individual,
    data: RegressionDataset,
    micro: MicroConfig,
    rng: np.random.Generator,
) -> Individual:
    """Tune the parameter vector; structure is untouched and the returned MSE
    is never worse than the input's (the incumbent seeds the population)."""
    _ensure_scored(ind, data)
    n_slots = len(ind.params)
    if n_slots == 0:
        return ind

    pop = max(2, micro.micro_population)
    cand = np.empty((pop, n_slots), dtype=float)
    cand[0] = ind.params
    mags = 10.0 ** (-12.0 + micro.init_spread * rng.random((pop - 1, n_slots)))
    signs = np.where(rng.random((pop - 1, n_slots)) < 0.5, 1.0, -1.0)
    cand[1:] = mags * signs

    mse = _batch_mse(ind.expr, cand, data)
    best_idx = int(np.argmin(mse))
    best_mse = float(mse[best_idx])
    best_vec = cand[best_idx].copy()
    history = [best_mse]

    half = pop // 2
    for _ in range(micro.micro_generations):
        order = np.argsort(mse, kind="stable")
        parents = cand[order[:half]]
        parent_mse = mse[order[:half]]
        n_kids = pop - half
        picks = rng.integers(0, half, size=n_kids)
        # multi-scale step sizes: coarse rungs explore, fine rungs polish
        # constants far below the base sigma
        rungs = 10.0 ** -rng.integers(0, 5, size=n_kids).astype(float)
        steps = rng.normal(0.0, micro.mutation_sigma, size=(n_kids, n_slots))
        factors = np.exp(steps * rungs[:, None])
        flips = np.where(
            (rng.random((n_kids, n_slots)) < micro.sign_flip_rate)
            & (rungs[:, None] == 1.0),
            -1.0,
            1.0,
        )
        kids = parents[picks] * factors * flips
        kid_mse = _batch_mse(ind.expr, kids, data)
        cand = np.vstack([parents, kids])
        mse = np.concatenate([parent_mse, kid_mse])
        gen_best = int(np.argmin(mse))
        if float(mse[gen_best]) < best_mse:
            best_mse = float(mse[gen_best])
            best_vec = cand[gen_best].copy()
        history.append(best_mse)
        if len(history) > 5 and math.isfinite(history[-6]):
            rel = (history[-6] - best_mse) / max(history[-6], 1e-300)
            if rel < micro.convergence_tol:
                break

    if not math.isfinite(best_mse):
        # every candidate (incumbent included) failed on this dataset
        reason = ind.mse if isinstance(ind.mse, Invalid) else Invalid(et.NON_FINITE)
        return _rebuilt(ind, ind.params, reason)
    return _rebuilt(ind, best_vec, best_mse)


# ---------------------------------------------------------------------------
# Macro generation and the full run


def _pareto_front(ranked: list[Individual]) -> list[Individual]:
    """Entries not dominated in (complexity, mse), complexity-ascending."""
    front: list[Individual] = []
    best = math.inf
    for ind in sorted(ranked, key=lambda i: (i.complexity, i.mse, i.text)):
        if ind.mse < best:
            front.append(ind)
            best = ind.mse
    return front


def _seed_population(
    data: RegressionDataset,
    cfg: MmeConfig,
    rng: np.random.Generator,
    generation: int,
) -> list[Individual]:
    inds: list[Individual] = []
    seen: set[str] = set()
    attempts = 0
    while len(inds) < cfg.population_size and attempts < 4 * cfg.population_size:
        attempts += 1
        depth = 2 + attempts % 4
        ind = random_individual(rng, cfg, data.n_features, depth, generation)
        if ind.skey in seen:
            continue
        seen.add(ind.skey)
        inds.append(ind)
    return inds


def _scored_seed(
    data: RegressionDataset,
    cfg: MmeConfig,
    rng: np.random.Generator,
    generation: int,
) -> tuple[list[Individual], int]:
    recoveries = 0
    for _ in range(5):
        ranked = score_population(
            _seed_population(data, cfg, rng, generation), data, cfg
        )
        if ranked:
            return ranked, recoveries
        recoveries += 1
    raise MmeError("could not seed a population with any valid individual")


def macro_generation(
    pop: list[Individual],
    data: RegressionDataset,
    cfg: MmeConfig,
    rng: np.random.Generator,
    generation: int = 0,
    stats: dict | None = None,
) -> list[Individual]:
    """One macro generation: breed, dedup, rank, micro-tune survivors, re-rank.

    Output is at most ``population_size`` long with no structural duplicates.
    """
    if not pop:
        raise MmeError("macro_generation needs a non-empty population")
    recoveries = 0
    parents = score_population(pop, data, cfg)
    if not parents:
        parents, rec = _scored_seed(data, cfg, rng, generation)
        recoveries += rec + 1

    n_children = max(0, cfg.population_size - len(parents))
    children = _breed(parents, n_children, cfg, rng, data.n_features, generation)
    candidates = remove_duplicates(parents + children)
    ranked = score_population(candidates, data, cfg)
    if not ranked:
        ranked, rec = _scored_seed(data, cfg, rng, generation)
        recoveries += rec + 1

    k = max(2, math.ceil(cfg.survivor_fraction * cfg.population_size))
    survivors = ranked[:k]
    # keep the (complexity, mse) Pareto front alive so the final report stays
    # genuinely Pareto-style; this includes the overall mse elite
    kept = set(map(id, survivors))
    for member in _pareto_front(ranked):
        if id(member) not in kept:
            survivors.append(member)
            kept.add(id(member))

    seeds = rng.integers(0, 2**63, size=len(survivors))
    tuned = [
        micro_evolve(ind, data, cfg.micro, np.random.default_rng(int(s)))
        for ind, s in zip(survivors, seeds)
    ]
    out = score_population(tuned, data, cfg)
    if not out:
        raise MmeError("population lost all valid individuals after micro pass")
    if stats is not None:
        stats["recoveries"] = stats.get("recoveries", 0) + recoveries
    return out


@dataclass
class MmeResult:
    """Final report: individuals sorted by complexity first, then MSE."""

    entries: list[Individual]
    recoveries: int
    generations: int
    target_scale: float = 1.0


def best_solution(
    result: MmeResult, window: float = 4.0, rel_floor: float = 1e-5
) -> Individual:
    """Headline solution of a run: the least complex entry that fits.

    "Fits" means MSE within ``window`` times the best MSE, or below
    ``rel_floor**2`` of the target's mean square (fits separated only by
    sub-noise-floor precision count as ties, resolved by complexity).
    """
    scored = [e for e in result.entries if isinstance(e.mse, float)]
    if not scored:
        raise MmeError("result contains no valid entries")
    floor = min(e.mse for e in scored)
    cut = max(window * floor, rel_floor**2 * result.target_scale)
    near = [e for e in scored if e.mse <= cut] or scored
    return min(near, key=lambda e: (e.complexity, e.mse, e.text))


def run_mme(data: RegressionDataset, cfg: MmeConfig) -> MmeResult:
    """Run the full nested evolution and report the final ranked population."""
    if not isinstance(data, RegressionDataset):
        raise MmeConfigError("run_mme expects a RegressionDataset")
    rng0 = np.random.default_rng([cfg.rng_seed, 0])
    pop, recoveries = _scored_seed(data, cfg, rng0, generation=0)
    stats: dict = {"recoveries": recoveries}
    for gen in range(1, cfg.max_generations + 1):
        rng_gen = np.random.default_rng([cfg.rng_seed, gen])
        pop = macro_generation(pop, data, cfg, rng_gen, generation=gen, stats=stats)
    entries = sorted(pop, key=lambda i: (i.complexity, i.mse, i.text))
    return MmeResult(
        entries=entries,
        recoveries=stats["recoveries"],
        generations=cfg.max_generations,
        target_scale=float(np.mean(data.targets**2)),
    )


# ---------------------------------------------------------------------------
# Results file


def write_results(
    result: MmeResult, path, meta: Mapping[str, str] | None = None
) -> None:
    lines = []
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}")
    lines.append(f"# recoveries={result.recoveries}")
    lines.append(f"# generations={result.generations}")
    lines.append(RESULTS_HEADER)
    for rank, ind in enumerate(result.entries, start=1):
        mse = format(ind.mse, ".17g") if isinstance(ind.mse, float) else "invalid"
        fit = format(ind.fitness, ".17g") if ind.fitness is not None else ""
        lines.append(
            f'{rank},"{ind.text}",{ind.complexity},{mse},{fit},{ind.generation}'
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_results(path) -> list[dict]:
    """Parse a results CSV back into dict rows with parsed expressions."""
    rows: list[dict] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line == RESULTS_HEADER:
                continue
            rank, rest = line.split(",", 1)
            if not rest.startswith('"'):
                raise MmeError(f"malformed results row: {line!r}")
            text, tail = rest[1:].split('"', 1)
            parts = tail.lstrip(",").split(",")
            expr, params = et.parse(text)
            rows.append(
                {
                    "rank": int(rank),
                    "text": text,
                    "expr": expr,
                    "params": params,
                    "complexity": int(parts[0]),
                    "mse": float(parts[1]) if parts[1] != "invalid" else None,
                    "fitness": float(parts[2]) if parts[2] else None,
                    "generation": int(parts[3]),
                }
            )
    return rows
