"""Position estimation and association selection.

Given one association hypothesis for a target, its four range picks become
circle constraints: each BS's half direct range is a distance to that BS,
and each BS's implied target-to-IRS distance is a distance to the serving
IRS.  The position estimate minimizes the squared residuals of those
constraints, weighted by the standard deviation of the range quantization
error; a damped Gauss-Newton iteration solves the 2-D problem.

Solution selection evaluates every enumerated solution, reusing per-tuple
solves through a cache.  Any tuple whose fit residual exceeds a threshold is
marked bad and every solution containing it is discarded without further
solves; the surviving solution with the smallest total residual wins, ties
broken lexicographically.  If pruning eliminates everything the selection
falls back to the unpruned minimum so a localization answer always exists
whenever the feasible set is nonempty.
"""

import math
from dataclasses import dataclass

import numpy as np

from .scene import Point2D, Scene, distance, nearest_irs
from .ranging import RangeSets
from .association import (
    AssociationTuple,
    FeasibleSet,
    circle_intersections,
    enumerate_feasible,
    irs_range_estimate,
)


@dataclass(frozen=True)
class ResidualWeights:
    """Per-constraint standard deviations in meters.

    ``sigma_direct`` weighs the two BS-circle residuals, ``sigma_via`` the
    two IRS-circle residuals.  The default for both is the standard
    deviation of a uniform error over one range cell of the 400 MHz grid,
    cell / (2 sqrt(3)).
    """

    sigma_direct: float = 0.75 / (2.0 * math.sqrt(3.0))
    sigma_via: float = 0.75 / (2.0 * math.sqrt(3.0))

    def __post_init__(self):
        if self.sigma_direct <= 0 or self.sigma_via <= 0:
            raise ValueError("weights must be positive")

    @classmethod
    def from_cell(cls, cell_m: float) -> "ResidualWeights":
        sigma = cell_m / (2.0 * math.sqrt(3.0))
        return cls(sigma_direct=sigma, sigma_via=sigma)


@dataclass(frozen=True)
class GnConfig:
    """Gauss-Newton solver knobs.

    ``residual_threshold`` is the pruning bound on a tuple's total squared
    weighted residual; 16 keeps every correct hypothesis of the quantized
    400 MHz grid (worst case just under 15) while rejecting fits that miss
    by a couple of range cells.
    """

    max_iters: int = 100
    step_tol_m: float = 1e-10
    residual_threshold: float = 16.0
    damping: float = 1e-3

    def __post_init__(self):
        if self.max_iters < 1 or self.step_tol_m <= 0:
            raise ValueError("bad iteration limits")
        if self.residual_threshold <= 0 or self.damping <= 0:
            raise ValueError("threshold and damping must be positive")


@dataclass(frozen=True)
class LocEstimate:
    """One tuple's position fit."""

    position: Point2D
    residual: float
    converged: bool
    n_iters: int


def _constraints(sets: RangeSets, t: AssociationTuple, scene: Scene, w: ResidualWeights):
    """(anchor, range, sigma) triples for the four circle constraints."""
    irs_pos = scene.irs[t.irs]
    triples = []
    for m in (0, 1):
        triples.append(
            (scene.bs[m], 0.5 * sets.direct[m][t.direct(m)], w.sigma_direct)
        )
    for m in (0, 1):
        triples.append((irs_pos, irs_range_estimate(sets, t, m, scene), w.sigma_via))
    return triples


def residual_terms(
    pos, sets: RangeSets, t: AssociationTuple, scene: Scene, w: ResidualWeights
) -> np.ndarray:
    """Weighted circle residuals at ``pos``: BS 1, BS 2, via BS 1, via BS 2."""
    return np.array(
        [
            (rng - distance(anchor, pos)) / sigma
            for anchor, rng, sigma in _constraints(sets, t, scene, w)
        ]
    )


def _residual_and_jacobian(pos: np.ndarray, triples):
    r = np.empty(len(triples))
    jac = np.empty((len(triples), 2))
    for i, (anchor, rng, sigma) in enumerate(triples):
        diff = pos - np.asarray(anchor, dtype=float)
        d = math.hypot(diff[0], diff[1])
        r[i] = (rng - d) / sigma
        # range gradient is the unit vector away from the anchor
        jac[i] = -diff / (max(d, 1e-12) * sigma)
    return r, jac


def fit_position(triples, cfg: GnConfig, init) -> LocEstimate:
    """Damped Gauss-Newton fit of circle constraints from ``init``."""
    x = np.asarray(init, dtype=float).copy()
    r, jac = _residual_and_jacobian(x, triples)
    cost = float(r @ r)
    lam = cfg.damping
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        a = jac.T @ jac
        g = jac.T @ r
        step = None
        while lam <= 1e12:
            try:
                candidate = np.linalg.solve(a + lam * np.eye(2), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new, jac_new = _residual_and_jacobian(x + candidate, triples)
            cost_new = float(r_new @ r_new)
            if cost_new <= cost + 1e-15:
                step = candidate
                x = x + candidate
                r, jac, cost = r_new, jac_new, cost_new
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
        if step is None:
            break
        if math.hypot(step[0], step[1]) < cfg.step_tol_m:
            converged = True
            break
    return LocEstimate(
        position=Point2D(float(x[0]), float(x[1])),
        residual=cost,
        converged=converged,
        n_iters=it,
    )


def default_init(sets: RangeSets, t: AssociationTuple, scene: Scene) -> Point2D:
    """Starting point from the two direct-range circles.

    Prefer the intersection point whose nearest IRS matches the tuple's;
    when both match, pick the one that better fits the implied IRS range.
    No intersection (or neither point matching) falls back to the midpoint
    of the intersection pair, then to the tuple's IRS position.
    """
    r1 = 0.5 * sets.direct[0][t.direct1]
    r2 = 0.5 * sets.direct[1][t.direct2]
    points = circle_intersections(scene.bs[0], r1, scene.bs[1], r2)
    if not points:
        return scene.irs[t.irs]
    matching = [p for p in points if nearest_irs(scene.irs, p) == t.irs]
    if len(matching) == 1:
        return matching[0]
    candidates = matching if matching else list(points)
    if len(candidates) == 1:
        return candidates[0]
    want = irs_range_estimate(sets, t, 0, scene)
    fit = [abs(distance(scene.irs[t.irs], p) - want) for p in candidates]
    best = int(np.argmin(fit))
    if abs(fit[0] - fit[1]) <= 1e-12 and not matching:
        mid = Point2D(
            0.5 * (points[0].x + points[1].x), 0.5 * (points[0].y + points[1].y)
        )
        return mid
    return candidates[best]


def gauss_newton_solve(
    sets: RangeSets,
    t: AssociationTuple,
    scene: Scene,
    w: ResidualWeights,
    cfg: GnConfig,
    init=None,
) -> LocEstimate:
    """Fit one tuple's position; ``init=None`` uses ``default_init``."""
    triples = _constraints(sets, t, scene, w)
    start = default_init(sets, t, scene) if init is None else init
    return fit_position(triples, cfg, start)


class TupleCache:
    """Memoized tuple solves shared across solutions of one selection run.

    Also tracks tuples whose residual failed the pruning threshold so
    dependent solutions are discarded without touching the solver again.
    """

    def __init__(self, solver):
        self._solver = solver
        self._store: dict[AssociationTuple, LocEstimate] = {}
        self.solver_calls = 0

    def get(self, t: AssociationTuple) -> LocEstimate:
        if t not in self._store:
            self._store[t] = self._solver(t)
            self.solver_calls += 1
        return self._store[t]


@dataclass(frozen=True)
class SolveStats:
    """Selection-run accounting."""

    n_solutions: int
    n_survivors: int
    solver_calls: int
    n_pruned_tuples: int
    fallback: bool


@dataclass(frozen=True)
class LocalizationResult:
    """Chosen association and per-target fits, in target-rank order."""

    solution: tuple[AssociationTuple, ...] | None
    estimates: tuple[LocEstimate, ...]
    stats: SolveStats


def select_association(
    feasible: FeasibleSet,
    sets: RangeSets,
    scene: Scene,
    w: ResidualWeights,
    cfg: GnConfig,
    memoize: bool = True,
) -> LocalizationResult:
    """Pick the minimum-total-residual solution with threshold pruning.

    Solutions are scanned in lexicographic order.  A tuple whose residual
    reaches ``cfg.residual_threshold`` is marked bad once and removes every
    solution containing it.  Survivors compete on total residual; the first
    minimum wins, making ties deterministic.  When nothing survives, the
    scan repeats without the threshold so a nonempty feasible set always
    yields an answer.  ``memoize=False`` re-solves tuples on every use and
    exists for verifying cache transparency.
    """

    def solver(t: AssociationTuple) -> LocEstimate:
        return gauss_newton_solve(sets, t, scene, w, cfg)

    cache = TupleCache(solver)
    calls_without_memo = 0

    def solve(t: AssociationTuple) -> LocEstimate:
        nonlocal calls_without_memo
        if memoize:
            return cache.get(t)
        calls_without_memo += 1
        est = cache.get(t) if t in cache._store else None
        if est is None:
            est = solver(t)
            cache._store[t] = est
        return est

    ordered = sorted(feasible.solutions)
    bad: set[AssociationTuple] = set()
    best = None
    best_total = math.inf
    survivors = 0
    for sol in ordered:
        if any(t in bad for t in sol):
            continue
        total = 0.0
        ok = True
        for t in sol:
            est = solve(t)
            if est.residual >= cfg.residual_threshold:
                bad.add(t)
                ok = False
                break
            total += est.residual
        if not ok:
            continue
        survivors += 1
        if total < best_total:
            best_total = total
            best = sol
    fallback = False
    if best is None and ordered:
        # every solution contained a failed tuple; compete without pruning
        fallback = True
        for sol in ordered:
            total = sum(solve(t).residual for t in sol)
            if total < best_total:
                best_total = total
                best = sol
    calls = calls_without_memo if not memoize else cache.solver_calls
    stats = SolveStats(
        n_solutions=len(ordered),
        n_survivors=survivors,
        solver_calls=calls,
        n_pruned_tuples=len(bad),
        fallback=fallback,
    )
    if best is None:
        return LocalizationResult(solution=None, estimates=(), stats=stats)
    estimates = tuple(solve(t) for t in best)
    return LocalizationResult(solution=best, estimates=estimates, stats=stats)


def solve_single_irs(
    sets: RangeSets,
    scene: Scene,
    tau: float,
    w: ResidualWeights,
    cfg: GnConfig,
) -> LocalizationResult:
    """Consistency filter then pruned selection; scene must have one IRS."""
    if scene.n_irs != 1:
        raise ValueError("solve_single_irs requires exactly one IRS")
    feasible = enumerate_feasible(sets, scene, tau, use_closest_irs=False)
    return select_association(feasible, sets, scene, w, cfg)


def solve_multi_irs(
    sets: RangeSets,
    scene: Scene,
    tau: float,
    w: ResidualWeights,
    cfg: GnConfig,
) -> LocalizationResult:
    """Multi-IRS pipeline with the closest-IRS filter ahead of selection.

    With a single IRS the filter can only discard hypotheses the selection
    needs, so the single-IRS path is used verbatim in that case and both
    entry points return identical results.
    """
    if scene.n_irs == 1:
        return solve_single_irs(sets, scene, tau, w, cfg)
    feasible = enumerate_feasible(sets, scene, tau, use_closest_irs=True)
    return select_association(feasible, sets, scene, w, cfg)
