"""Data association between per-BS range lists.

Phase I leaves each BS with two anonymous sorted lists: round-trip direct
echo lengths and total via-IRS echo lengths.  Phase II must decide which
entries across the four lists belong to the same physical target, and which
IRS relayed its compound echo.  One target's hypothesis is the index tuple

    (direct1, direct2, via1, via2, irs)

picking one entry from each list plus a serving IRS.  A full solution
assigns such a tuple to every target so that no list entry is used twice;
targets are labeled by rank in BS 1's direct list, which pins ``direct1`` to
the target index and leaves (K!)^3 * R^K raw solutions.

The workhorse filter needs no positions: both BSs can compute the candidate
target-to-IRS distance

    via_m - direct_m / 2 - d(BS_m, IRS)

and the two values must agree for a correct hypothesis.  With quantized
ranges they agree within three half range cells, hence the tolerance knob.
A second, optional filter intersects the two direct-range circles and keeps
only hypotheses whose IRS is nearest to one of the two intersection points.
"""

import math
from dataclasses import dataclass
from itertools import permutations, product

import numpy as np

from .scene import Point2D, Scene, distance, nearest_irs
from .ranging import RangeSets


@dataclass(frozen=True, order=True)
class AssociationTuple:
    """One target's pick from the four range lists plus its serving IRS.

    All indices are 0-based.  Ordering is lexicographic over the fields,
    used for deterministic tie breaking.
    """

    direct1: int
    direct2: int
    via1: int
    via2: int
    irs: int

    def direct(self, m: int) -> int:
        return (self.direct1, self.direct2)[m]

    def via(self, m: int) -> int:
        return (self.via1, self.via2)[m]


@dataclass(frozen=True)
class FeasibleSet:
    """Enumerated solutions plus bookkeeping about the filters applied."""

    solutions: tuple[tuple[AssociationTuple, ...], ...]
    tau: float
    closest_irs_filter: bool


def is_valid_solution(solution, k: int, r: int) -> bool:
    """Permutation sanity: each list index used once, IRSs in range."""
    if len(solution) != k:
        return False
    for field in ("direct1", "direct2", "via1", "via2"):
        used = [getattr(t, field) for t in solution]
        if sorted(used) != list(range(k)):
            return False
    return all(0 <= t.irs < r for t in solution)


def count_unfiltered_solutions(k: int, r: int) -> int:
    """Size of the raw hypothesis space: (K!)^3 * R^K.

    BS 1's direct list labels the targets, so one of the four index
    assignments is pinned; the remaining three permute freely and every
    target independently picks one of R serving IRSs.  Exact integer.
    """
    if k < 1 or r < 1:
        raise ValueError("k and r must be >= 1")
    return math.factorial(k) ** 3 * r**k


def irs_range_estimate(sets: RangeSets, t: AssociationTuple, m: int, scene: Scene) -> float:
    """Target-to-IRS distance implied by BS ``m`` under hypothesis ``t``."""
    via = sets.via_irs[m][t.via(m)]
    direct = sets.direct[m][t.direct(m)]
    return via - 0.5 * direct - distance(scene.bs[m], scene.irs[t.irs])


def consistency_gap(sets: RangeSets, t: AssociationTuple, scene: Scene) -> float:
    """Disagreement between the two BSs' implied target-to-IRS distances."""
    return abs(
        irs_range_estimate(sets, t, 0, scene) - irs_range_estimate(sets, t, 1, scene)
    )


def consistency_check(sets: RangeSets, t: AssociationTuple, scene: Scene, tau: float) -> bool:
    """True when the two BSs' implied IRS distances agree strictly within ``tau``.

    The comparison is exclusive at the boundary on purpose: quantized range
    lists place every gap on a lattice of half-cell steps, so a gap exactly
    at the threshold carries real probability mass, all of it from wrong
    pairings.  A matching tuple sits strictly inside (its worst quantization
    disagreement is 1.125 m against the default 1.5 m threshold), so the
    exclusive test never rejects it.
    """
    return consistency_gap(sets, t, scene) < tau


def circle_intersections(c1, r1: float, c2, r2: float) -> tuple[Point2D, ...]:
    """Intersection points of two circles, () when disjoint or nested.

    Tangency returns the touching point twice so callers can treat the
    result uniformly as zero or two points.
    """
    if r1 < 0 or r2 < 0:
        raise ValueError("radii must be nonnegative")
    x1, y1 = float(c1[0]), float(c1[1])
    x2, y2 = float(c2[0]), float(c2[1])
    d = math.hypot(x2 - x1, y2 - y1)
    if d == 0:
        return ()
    if d > r1 + r2 or d < abs(r1 - r2):
        return ()
    a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h_sq = r1 * r1 - a * a
    h = math.sqrt(max(h_sq, 0.0))
    ex = (x2 - x1) / d
    ey = (y2 - y1) / d
    mx = x1 + a * ex
    my = y1 + a * ey
    p = Point2D(mx + h * (-ey), my + h * ex)
    q = Point2D(mx - h * (-ey), my - h * ex)
    return (p, q)


def closest_irs_candidates(
    scene: Scene, sets: RangeSets, direct1: int, direct2: int
) -> frozenset[int]:
    """IRS indices nearest to either direct-circle intersection point.

    The direct ranges fix the target to at most two points; a target is
    served by its nearest IRS, so only the IRSs nearest to those points can
    appear in a correct hypothesis with this (direct1, direct2) pick.  Ties
    within 1e-9 m keep every tied IRS.  Empty when the circles miss.
    """
    r1 = 0.5 * sets.direct[0][direct1]
    r2 = 0.5 * sets.direct[1][direct2]
    points = circle_intersections(scene.bs[0], r1, scene.bs[1], r2)
    candidates = set()
    for p in points:
        dists = [distance(q, p) for q in scene.irs]
        best = min(dists)
        candidates.update(r for r, d in enumerate(dists) if d <= best + 1e-9)
    return frozenset(candidates)


def enumerate_feasible(
    sets: RangeSets,
    scene: Scene,
    tau: float,
    use_closest_irs: bool = False,
) -> FeasibleSet:
    """Depth-first enumeration of consistency-feasible solutions.

    Targets are taken in BS 1 direct-list order, so level ``k`` pins
    ``direct1 = k`` and branches over unused picks of the other three lists
    and over serving IRSs; branches whose consistency gap reaches ``tau``
    are cut immediately (same exclusive boundary as consistency_check).
    Candidates at each level are visited in order of increasing gap, which
    makes the output order deterministic.  With ``use_closest_irs``,
    hypotheses whose IRS is not nearest to a direct-circle intersection
    point are cut as well.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    k = len(sets.direct[0])
    if not sets.balanced(k):
        raise ValueError(f"unbalanced range lists {sets.counts()}; need K entries each")
    n_irs = scene.n_irs

    d1 = np.asarray(sets.direct[0])
    d2 = np.asarray(sets.direct[1])
    v1 = np.asarray(sets.via_irs[0])
    v2 = np.asarray(sets.via_irs[1])
    d_bi = np.array(
        [[distance(bs_pos, q) for q in scene.irs] for bs_pos in scene.bs]
    )
    bi_gap = d_bi[0] - d_bi[1]
    # a_m[v, d] = via_m[v] - direct_m[d] / 2; gap needs only their difference
    a1 = v1[:, None] - 0.5 * d1[None, :]
    a2 = v2[:, None] - 0.5 * d2[None, :]

    irs_memo: dict[tuple[int, int], frozenset[int]] = {}

    def allowed_irs(i: int, j: int) -> frozenset[int]:
        if not use_closest_irs:
            return frozenset(range(n_irs))
        key = (i, j)
        if key not in irs_memo:
            irs_memo[key] = closest_irs_candidates(scene, sets, i, j)
        return irs_memo[key]

    solutions: list[tuple[AssociationTuple, ...]] = []
    partial: list[AssociationTuple] = []
    free_d2 = [True] * k
    free_v1 = [True] * k
    free_v2 = [True] * k

    def recurse(level: int) -> None:
        if level == k:
            solutions.append(tuple(partial))
            return
        d2_idx = [j for j in range(k) if free_d2[j]]
        v1_idx = [j for j in range(k) if free_v1[j]]
        v2_idx = [j for j in range(k) if free_v2[j]]
        candidates = []
        for j in d2_idx:
            gammas = [g for g in allowed_irs(level, j)]
            if not gammas:
                continue
            # gap over the (via1, via2, irs) grid for this (direct1, direct2)
            gaps = np.abs(
                a1[v1_idx, level][:, None, None]
                - a2[v2_idx, j][None, :, None]
                - bi_gap[gammas][None, None, :]
            )
            for ia, ib, ig in np.argwhere(gaps < tau):
                candidates.append(
                    (float(gaps[ia, ib, ig]), j, v1_idx[ia], v2_idx[ib], gammas[ig])
                )
        candidates.sort()
        for _, j, via1, via2, g in candidates:
            partial.append(
                AssociationTuple(direct1=level, direct2=j, via1=via1, via2=via2, irs=g)
            )
            free_d2[j] = free_v1[via1] = free_v2[via2] = False
            recurse(level + 1)
            free_d2[j] = free_v1[via1] = free_v2[via2] = True
            partial.pop()

    recurse(0)
    return FeasibleSet(
        solutions=tuple(solutions), tau=tau, closest_irs_filter=use_closest_irs
    )


def brute_force_solutions(k: int, r: int):
    """Every raw solution by direct product of permutations; oracle use only.

    Yields tuples of AssociationTuple with no feasibility filtering, for
    cross-checking the enumerated hypothesis space at small K.
    """
    idx = range(k)
    for p2 in permutations(idx):
        for q1 in permutations(idx):
            for q2 in permutations(idx):
                for gammas in product(range(r), repeat=k):
                    yield tuple(
                        AssociationTuple(
                            direct1=i, direct2=p2[i], via1=q1[i], via2=q2[i], irs=gammas[i]
                        )
                        for i in idx
                    )


def ground_truth_solution(
    scene: Scene, sets: RangeSets, cell_m: float | None = None
) -> tuple[AssociationTuple, ...] | None:
    """The correct solution for a scene whose range sets are given.

    Targets are ranked by distance to BS 1, matching the labeling the
    enumeration uses.  Each target's true (possibly quantized) ranges are
    located in the lists by value; equal values are assigned to distinct
    slots in rank order, which is the unique answer up to swaps of identical
    entries.  Returns None when some true range is missing from a list,
    which means detection failed upstream.
    """

    def q(value: float) -> float:
        if cell_m is None:
            return value
        return (math.floor(value / cell_m) + 0.5) * cell_m

    k = scene.n_targets
    if not sets.balanced(k):
        return None
    order = sorted(range(k), key=lambda i: distance(scene.bs[0], scene.targets[i]))
    used = {("direct", 0): set(), ("direct", 1): set(), ("via", 0): set(), ("via", 1): set()}

    def claim(kind: str, m: int, value: float) -> int | None:
        values = sets.direct[m] if kind == "direct" else sets.via_irs[m]
        for idx, v in enumerate(values):
            if idx not in used[(kind, m)] and abs(v - value) <= 1e-9:
                used[(kind, m)].add(idx)
                return idx
        return None

    solution = []
    for rank, i in enumerate(order):
        t = scene.targets[i]
        g = scene.true_irs[i]
        picks = {}
        for m in (0, 1):
            d_bt = distance(scene.bs[m], t)
            d_total = d_bt + distance(scene.irs[g], t) + distance(scene.bs[m], scene.irs[g])
            picks[("direct", m)] = claim("direct", m, q(2.0 * d_bt))
            picks[("via", m)] = claim("via", m, q(d_total))
        if any(v is None for v in picks.values()):
            return None
        if picks[("direct", 0)] != rank:
            return None
        solution.append(
            AssociationTuple(
                direct1=rank,
                direct2=picks[("direct", 1)],
                via1=picks[("via", 0)],
                via2=picks[("via", 1)],
                irs=g,
            )
        )
    return tuple(solution)


def solutions_equivalent(
    sets: RangeSets, a: tuple[AssociationTuple, ...], b: tuple[AssociationTuple, ...]
) -> bool:
    """Target-wise equality of selected range values and serving IRS.

    Indices may differ when lists hold duplicate values; two solutions that
    pick identical ranges and IRSs everywhere are physically the same.
    """
    if len(a) != len(b):
        return False
    for ta, tb in zip(a, b):
        if ta.irs != tb.irs:
            return False
        for m in (0, 1):
            if sets.direct[m][ta.direct(m)] != sets.direct[m][tb.direct(m)]:
                return False
            if sets.via_irs[m][ta.via(m)] != sets.via_irs[m][tb.via(m)]:
                return False
    return True
