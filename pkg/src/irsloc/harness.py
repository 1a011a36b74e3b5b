"""Monte-Carlo experiment drivers and metrics.

One trial samples a scene, produces range sets (either straight from
quantized geometry, the default, or through the full waveform and sparse
recovery path), runs association plus localization, and scores the result
against ground truth.  A target counts as an error when its estimate lands
more than ``error_radius_m`` from the truth; trials whose range lists do not
contain one entry per target are detection failures and score every target
as an error.

Determinism: every experiment spawns one child seed per trial from a master
seed, so runs are reproducible and different trial counts share prefixes.
"""

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .scene import (
    Point2D,
    Scene,
    SceneSamplingError,
    as_point,
    check_topology,
    distance,
    mirror_across_bs_line,
    sample_targets,
)
from .waveform import (
    DelayWindowError,
    OfdmConfig,
    build_paths,
    make_pilots,
    make_plan,
    simulate_freq_rx,
)
from .ranging import (
    RangeSets,
    RangingConfig,
    build_range_sets,
    lasso_solve,
    weighted_lasso_solve,
)
from .association import (
    count_unfiltered_solutions,
    enumerate_feasible,
    ground_truth_solution,
    solutions_equivalent,
)
from .locate import (
    GnConfig,
    LocalizationResult,
    LocEstimate,
    ResidualWeights,
    SolveStats,
    fit_position,
    gauss_newton_solve,
    select_association,
    solve_multi_irs,
)
from .association import AssociationTuple, circle_intersections

DEFAULT_BS = (Point2D(100.0, 0.0), Point2D(-100.0, 0.0))
DEFAULT_IRS_LAYOUTS = {
    1: (Point2D(0.0, 40.0),),
    2: (Point2D(-60.0, 40.0), Point2D(70.0, 40.0)),
    3: (Point2D(-60.0, 60.0), Point2D(70.0, 60.0), Point2D(0.0, -70.0)),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a trial needs; JSON round-trippable."""

    bs: tuple[Point2D, Point2D] = DEFAULT_BS
    irs: tuple[Point2D, ...] = DEFAULT_IRS_LAYOUTS[1]
    k: int = 4
    trials: int = 1000
    seed: int = 1
    target_radius_m: float = 50.0
    tau_m: float = 1.5
    error_radius_m: float = 0.8
    skip_phase1: bool = True
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    gn: GnConfig = field(default_factory=GnConfig)
    ranging: RangingConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "bs", tuple(as_point(p) for p in self.bs))
        object.__setattr__(self, "irs", tuple(as_point(p) for p in self.irs))
        if self.k < 1 or self.trials < 1:
            raise ValueError("k and trials must be >= 1")
        if self.tau_m < 0 or self.error_radius_m <= 0 or self.target_radius_m <= 0:
            raise ValueError("bad experiment radii")

    @property
    def weights(self) -> ResidualWeights:
        return ResidualWeights.from_cell(self.ofdm.cell_m)

    def ranging_config(self, scene: Scene) -> RangingConfig:
        if self.ranging is not None:
            return self.ranging
        return RangingConfig.calibrated(self.ofdm, scene, self.target_radius_m)

    def to_dict(self) -> dict:
        d = {
            "bs": [list(p) for p in self.bs],
            "irs": [list(p) for p in self.irs],
            "k": self.k,
            "trials": self.trials,
            "seed": self.seed,
            "target_radius_m": self.target_radius_m,
            "tau_m": self.tau_m,
            "error_radius_m": self.error_radius_m,
            "skip_phase1": self.skip_phase1,
            "ofdm": {
                "n_subcarriers": self.ofdm.n_subcarriers,
                "subcarrier_spacing_hz": self.ofdm.subcarrier_spacing_hz,
                "cp_len": self.ofdm.cp_len,
                "n_taps": self.ofdm.n_taps,
                "tx_power_dbm": self.ofdm.tx_power_dbm,
                "noise_psd_dbm_hz": self.ofdm.noise_psd_dbm_hz,
                "bs_reflect_gain": self.ofdm.bs_reflect_gain,
                "irs_reflect_gain": self.ofdm.irs_reflect_gain,
                "c0": self.ofdm.c0,
            },
            "gn": {
                "max_iters": self.gn.max_iters,
                "step_tol_m": self.gn.step_tol_m,
                "residual_threshold": self.gn.residual_threshold,
                "damping": self.gn.damping,
            },
        }
        if self.ranging is not None:
            d["ranging"] = {
                "rho": self.ranging.rho,
                "rho1": self.ranging.rho1,
                "rho2": self.ranging.rho2,
                "delta1": self.ranging.delta1,
                "delta2": self.ranging.delta2,
                "max_iters": self.ranging.max_iters,
                "conv_tol": self.ranging.conv_tol,
            }
        else:
            d["ranging"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        kwargs = dict(d)
        kwargs["bs"] = tuple(as_point(p) for p in d["bs"])
        kwargs["irs"] = tuple(as_point(p) for p in d["irs"])
        if d.get("ofdm"):
            kwargs["ofdm"] = OfdmConfig(**d["ofdm"])
        if d.get("gn"):
            kwargs["gn"] = GnConfig(**d["gn"])
        if d.get("ranging"):
            kwargs["ranging"] = RangingConfig(**d["ranging"])
        else:
            kwargs.pop("ranging", None)
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def required_taps(bs, irs, radius_m: float, cfg: OfdmConfig) -> int:
    """Smallest modeled tap count that covers every echo of the layout.

    Both the direct round trip and the compound path via an IRS are bounded
    by twice the largest BS-to-IRS distance plus twice the coverage radius.
    Adds a small guard band and rounds up to a multiple of 64.
    """
    reach = max(distance(as_point(b), as_point(q)) for b in bs for q in irs)
    bound = 2.0 * (reach + radius_m)
    taps = math.ceil(bound / cfg.cell_m) + 8
    return ((taps + 63) // 64) * 64


def default_config(n_irs: int = 1, **overrides) -> ExperimentConfig:
    """Stock geometry for the given IRS count (1, 2 or 3).

    Widens the modeled delay window when the layout's farthest echoes would
    fall outside the stock tap count, unless the caller supplies its own
    OFDM settings.
    """
    if n_irs not in DEFAULT_IRS_LAYOUTS:
        raise ValueError("stock layouts exist for 1, 2 or 3 IRSs")
    cfg = ExperimentConfig(irs=DEFAULT_IRS_LAYOUTS[n_irs], **overrides)
    if "ofdm" not in overrides:
        taps = required_taps(cfg.bs, cfg.irs, cfg.target_radius_m, cfg.ofdm)
        if taps > cfg.ofdm.n_taps:
            cfg = replace(
                cfg, ofdm=replace(cfg.ofdm, cp_len=taps, n_taps=taps)
            )
    return cfg


@dataclass(frozen=True)
class TrialOutcome:
    """Scored result of one Monte-Carlo trial."""

    trial: int
    k: int
    detection_failed: bool
    association_correct: bool
    errors_m: tuple[float, ...]
    true_positions: tuple[Point2D, ...]
    est_positions: tuple[Point2D | None, ...]
    residuals: tuple[float, ...]
    chosen: tuple[AssociationTuple, ...] | None
    n_unfiltered: int
    n_feasible: int
    n_survivors: int
    solver_calls: int
    fallback: bool
    wall_time_s: float


def _failed_outcome(trial, k, scene, n_unfiltered, wall) -> TrialOutcome:
    truths = _true_positions_by_rank(scene) if scene is not None else tuple()
    return TrialOutcome(
        trial=trial,
        k=k,
        detection_failed=True,
        association_correct=False,
        errors_m=tuple(math.inf for _ in range(k)),
        true_positions=truths,
        est_positions=tuple(None for _ in range(k)),
        residuals=tuple(math.inf for _ in range(k)),
        chosen=None,
        n_unfiltered=n_unfiltered,
        n_feasible=0,
        n_survivors=0,
        solver_calls=0,
        fallback=False,
        wall_time_s=wall,
    )


def _true_positions_by_rank(scene: Scene) -> tuple[Point2D, ...]:
    order = sorted(
        range(scene.n_targets), key=lambda i: distance(scene.bs[0], scene.targets[i])
    )
    return tuple(scene.targets[i] for i in order)


def _phase1_range_sets(scene: Scene, cfg: ExperimentConfig, seed_seq) -> RangeSets:
    """Full waveform path: synthesize pilots and echoes, recover ranges."""
    plan = make_plan(cfg.ofdm.n_subcarriers)
    rcfg = cfg.ranging_config(scene)
    pilot_seed, phase_seed_seq, noise1, noise2 = seed_seq.spawn(4)
    phase_seed = int(phase_seed_seq.generate_state(1)[0])
    pilots = make_pilots(plan, pilot_seed)
    snap1 = simulate_freq_rx(
        build_paths(scene, cfg.ofdm, symbol=1, phase_seed=phase_seed),
        pilots,
        cfg.ofdm,
        plan,
        seed=noise1,
    )
    snap2 = simulate_freq_rx(
        build_paths(scene, cfg.ofdm, symbol=2, phase_seed=phase_seed),
        pilots,
        cfg.ofdm,
        plan,
        seed=noise2,
    )
    first = []
    second = []
    for m in (0, 1):
        est1 = lasso_solve(snap1.by_bs[m], cfg.ofdm, rcfg)
        phi3 = {
            int(l) for l in np.nonzero(est1.magnitudes >= rcfg.delta1)[0]
        }
        known = _known_bins_for_bs(scene, cfg.ofdm, m)
        est2 = weighted_lasso_solve(snap2.by_bs[m], known, phi3, cfg.ofdm, rcfg)
        first.append(est1)
        second.append(est2)
    return build_range_sets(
        (first[0], first[1]), (second[0], second[1]), scene, cfg.ofdm, rcfg
    )


def _known_bins_for_bs(scene: Scene, ofdm: OfdmConfig, m: int) -> frozenset[int]:
    from .ranging import irs_echo_bins

    return irs_echo_bins(scene, ofdm)[m]


def run_trial(
    cfg: ExperimentConfig,
    trial: int,
    seed_seq,
    oracle: bool = False,
) -> TrialOutcome:
    """Sample, localize and score one scene.

    ``oracle`` bypasses association: every target is fit from its
    ground-truth tuple, providing the perfect-association reference curve.
    """
    start = time.perf_counter()
    k = cfg.k
    n_unfiltered = count_unfiltered_solutions(k, len(cfg.irs))
    scene_seed, phase1_seed = seed_seq.spawn(2)
    try:
        scene = sample_targets(
            cfg.bs,
            cfg.irs,
            k,
            cfg.target_radius_m,
            scene_seed,
            cell_m=cfg.ofdm.cell_m,
        )
    except SceneSamplingError:
        return _failed_outcome(trial, k, None, n_unfiltered, time.perf_counter() - start)

    if cfg.skip_phase1:
        sets = RangeSets.from_geometry(scene, cell_m=cfg.ofdm.cell_m)
    else:
        try:
            sets = _phase1_range_sets(scene, cfg, phase1_seed)
        except DelayWindowError:
            return _failed_outcome(
                trial, k, scene, n_unfiltered, time.perf_counter() - start
            )
        if not sets.balanced(k):
            return _failed_outcome(
                trial, k, scene, n_unfiltered, time.perf_counter() - start
            )

    truth = ground_truth_solution(scene, sets, cell_m=cfg.ofdm.cell_m)
    if truth is None:
        return _failed_outcome(trial, k, scene, n_unfiltered, time.perf_counter() - start)

    if oracle:
        estimates = tuple(
            gauss_newton_solve(sets, t, scene, cfg.weights, cfg.gn) for t in truth
        )
        result = LocalizationResult(
            solution=truth,
            estimates=estimates,
            stats=SolveStats(
                n_solutions=1,
                n_survivors=1,
                solver_calls=len(truth),
                n_pruned_tuples=0,
                fallback=False,
            ),
        )
    else:
        result = solve_multi_irs(sets, scene, cfg.tau_m, cfg.weights, cfg.gn)

    truths = _true_positions_by_rank(scene)
    if result.solution is None:
        errors = tuple(math.inf for _ in range(k))
        ests = tuple(None for _ in range(k))
        residuals = tuple(math.inf for _ in range(k))
        correct = False
    else:
        ests = tuple(e.position for e in result.estimates)
        errors = tuple(distance(p, t) for p, t in zip(ests, truths))
        residuals = tuple(e.residual for e in result.estimates)
        correct = solutions_equivalent(sets, result.solution, truth)
    return TrialOutcome(
        trial=trial,
        k=k,
        detection_failed=False,
        association_correct=correct,
        errors_m=errors,
        true_positions=truths,
        est_positions=ests,
        residuals=residuals,
        chosen=result.solution,
        n_unfiltered=n_unfiltered,
        n_feasible=result.stats.n_solutions,
        n_survivors=result.stats.n_survivors,
        solver_calls=result.stats.solver_calls,
        fallback=result.stats.fallback,
        wall_time_s=time.perf_counter() - start,
    )


def error_probability(outcomes, radius: float = 0.8) -> float:
    """Fraction of targets localized worse than ``radius`` meters.

    Detection and association failures contribute every target of their
    trial to the numerator (their errors are infinite).
    """
    total = 0
    bad = 0
    for o in outcomes:
        for e in o.errors_m:
            total += 1
            if not (e <= radius):
                bad += 1
    if total == 0:
        raise ValueError("no outcomes")
    return bad / total


def association_accuracy(outcomes) -> float:
    return sum(1 for o in outcomes if o.association_correct) / len(outcomes)


def run_localization(cfg: ExperimentConfig, oracle: bool = False) -> list[TrialOutcome]:
    """All trials of one localization experiment, sequential and seeded."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
    return [run_trial(cfg, i, s, oracle=oracle) for i, s in enumerate(seeds)]


# ---------------------------------------------------------------------------
# cardinality experiment


def cardinality_experiment(cfg: ExperimentConfig, k_values) -> list[dict]:
    """Feasible-set size statistics per target count.

    For each K: mean size of the consistency-filtered set, plus the second
    reduction stage, which is residual pruning for a single IRS and the
    closest-IRS filter for several.
    """
    rows = []
    r = len(cfg.irs)
    for k in k_values:
        kcfg = replace(cfg, k=int(k))
        seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
        feas = []
        reduced = []
        for s in seeds:
            scene = sample_targets(
                kcfg.bs, kcfg.irs, kcfg.k, kcfg.target_radius_m, s.spawn(1)[0],
                cell_m=kcfg.ofdm.cell_m,
            )
            sets = RangeSets.from_geometry(scene, cell_m=kcfg.ofdm.cell_m)
            plain = enumerate_feasible(sets, scene, kcfg.tau_m, use_closest_irs=False)
            feas.append(len(plain.solutions))
            if r == 1:
                sel = select_association(plain, sets, scene, kcfg.weights, kcfg.gn)
                reduced.append(sel.stats.n_survivors)
            else:
                filtered = enumerate_feasible(
                    sets, scene, kcfg.tau_m, use_closest_irs=True
                )
                reduced.append(len(filtered.solutions))
        feas_arr = np.asarray(feas, dtype=float)
        red_arr = np.asarray(reduced, dtype=float)
        rows.append(
            {
                "k": int(k),
                "n_irs": r,
                "trials": cfg.trials,
                "unfiltered": count_unfiltered_solutions(int(k), r),
                "mean_feasible": float(feas_arr.mean()),
                "se_feasible": float(feas_arr.std(ddof=1) / math.sqrt(len(feas_arr)))
                if len(feas_arr) > 1
                else 0.0,
                "mean_reduced": float(red_arr.mean()),
                "se_reduced": float(red_arr.std(ddof=1) / math.sqrt(len(red_arr)))
                if len(red_arr) > 1
                else 0.0,
                "reduced_kind": "residual_pruned" if r == 1 else "closest_irs",
            }
        )
    return rows


# ---------------------------------------------------------------------------
# three-active-BS baseline


@dataclass(frozen=True)
class BaselineTriple:
    """Index pick (rank-pinned anchor 1, anchors 2 and 3) for one target."""

    i1: int
    i2: int
    i3: int


def _baseline_truth(scene3, anchors, ranges, cell_m):
    k = scene3.n_targets
    order = sorted(range(k), key=lambda i: distance(anchors[0], scene3.targets[i]))
    used = [set(), set(), set()]

    def claim(a: int, value: float) -> int | None:
        q = (math.floor(value / cell_m) + 0.5) * cell_m
        for idx, v in enumerate(ranges[a]):
            if idx not in used[a] and abs(v - q) <= 1e-9:
                used[a].add(idx)
                return idx
        return None

    triples = []
    for rank, i in enumerate(order):
        t = scene3.targets[i]
        picks = [claim(a, 2.0 * distance(anchors[a], t)) for a in range(3)]
        if any(p is None for p in picks) or picks[0] != rank:
            return None
        triples.append(BaselineTriple(i1=picks[0], i2=picks[1], i3=picks[2]))
    return tuple(triples)


def _baseline_init(anchors, radii):
    points = circle_intersections(anchors[0], radii[0], anchors[1], radii[1])
    if not points:
        return anchors[2]
    fit = [abs(distance(anchors[2], p) - radii[2]) for p in points]
    return points[int(np.argmin(fit))]


def run_baseline_trial(
    cfg: ExperimentConfig, trial: int, seed_seq, oracle: bool = False
) -> TrialOutcome:
    """One trial of the all-active-anchor reference scheme.

    The first IRS position hosts a third active BS that measures its own
    direct round-trip ranges, so association has no consistency filter to
    lean on: it scans index triples exhaustively (first anchor pinned by
    target labeling), pruning triples whose trilateration residual fails the
    same threshold as the main scheme, and keeps the minimum-total-residual
    assignment.
    """
    start = time.perf_counter()
    k = cfg.k
    anchors = (cfg.bs[0], cfg.bs[1], cfg.irs[0])
    n_unfiltered = math.factorial(k) ** 2
    scene_seed, _ = seed_seq.spawn(2)
    try:
        scene3 = sample_targets(
            cfg.bs,
            (cfg.irs[0],),
            k,
            cfg.target_radius_m,
            scene_seed,
            cell_m=cfg.ofdm.cell_m,
        )
    except SceneSamplingError:
        return _failed_outcome(trial, k, None, n_unfiltered, time.perf_counter() - start)

    cell = cfg.ofdm.cell_m
    ranges = []
    for a in anchors:
        vals = sorted(
            (math.floor(2.0 * distance(a, t) / cell) + 0.5) * cell
            for t in scene3.targets
        )
        ranges.append(tuple(vals))
    truth = _baseline_truth(scene3, anchors, ranges, cell)
    if truth is None:
        return _failed_outcome(trial, k, scene3, n_unfiltered, time.perf_counter() - start)

    w = cfg.weights
    cache: dict[BaselineTriple, LocEstimate] = {}

    def solve(t: BaselineTriple) -> LocEstimate:
        if t not in cache:
            radii = (
                0.5 * ranges[0][t.i1],
                0.5 * ranges[1][t.i2],
                0.5 * ranges[2][t.i3],
            )
            triples = [
                (anchors[a], radii[a], w.sigma_direct) for a in range(3)
            ]
            cache[t] = fit_position(triples, cfg.gn, _baseline_init(anchors, radii))
        return cache[t]

    if oracle:
        estimates = tuple(solve(t) for t in truth)
        best = truth
        survivors = 1
        fallback = False
    else:
        bad: set[BaselineTriple] = set()
        best = None
        best_total = math.inf
        survivors = 0
        partial: list[BaselineTriple] = []
        free2 = [True] * k
        free3 = [True] * k

        def recurse(level: int, total: float, enforce: bool) -> None:
            nonlocal best, best_total, survivors
            if level == k:
                if enforce:
                    survivors += 1
                if total < best_total:
                    best_total = total
                    best = tuple(partial)
                return
            for j2 in range(k):
                if not free2[j2]:
                    continue
                for j3 in range(k):
                    if not free3[j3]:
                        continue
                    t = BaselineTriple(i1=level, i2=j2, i3=j3)
                    if enforce and t in bad:
                        continue
                    est = solve(t)
                    if enforce and est.residual >= cfg.gn.residual_threshold:
                        bad.add(t)
                        continue
                    partial.append(t)
                    free2[j2] = free3[j3] = False
                    recurse(level + 1, total + est.residual, enforce)
                    free2[j2] = free3[j3] = True
                    partial.pop()

        recurse(0, 0.0, True)
        fallback = best is None
        if fallback:
            recurse(0, 0.0, False)
        estimates = tuple(solve(t) for t in best)

    truths = _true_positions_by_rank(scene3)
    ests = tuple(e.position for e in estimates)
    errors = tuple(distance(p, t) for p, t in zip(ests, truths))
    correct = all(
        ranges[0][a.i1] == ranges[0][b.i1]
        and ranges[1][a.i2] == ranges[1][b.i2]
        and ranges[2][a.i3] == ranges[2][b.i3]
        for a, b in zip(best, truth)
    )
    return TrialOutcome(
        trial=trial,
        k=k,
        detection_failed=False,
        association_correct=correct,
        errors_m=errors,
        true_positions=truths,
        est_positions=ests,
        residuals=tuple(e.residual for e in estimates),
        chosen=None,
        n_unfiltered=n_unfiltered,
        n_feasible=n_unfiltered,
        n_survivors=survivors,
        solver_calls=len(cache),
        fallback=fallback,
        wall_time_s=time.perf_counter() - start,
    )


def baseline_3bs(cfg: ExperimentConfig, oracle: bool = False) -> list[TrialOutcome]:
    """All trials of the three-active-BS reference scheme."""
    if cfg.k > 7:
        raise ValueError("baseline association is exhaustive; K > 7 is impractical")
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.trials)
    return [run_baseline_trial(cfg, i, s, oracle=oracle) for i, s in enumerate(seeds)]


# ---------------------------------------------------------------------------
# anchor-placement (topology) experiment


def topology_variants(bs) -> dict[str, tuple[Point2D, ...]]:
    """Stock two-IRS placements probing the distinctness conditions.

    The failing variants pair an IRS with its mirror image across the BS
    line, which has an identical BS-distance difference: on the bisector
    that breaks the both-differences-nonzero condition, off it the pairwise
    distinctness condition.
    """
    c1_anchor = Point2D(0.0, 60.0)
    c2_anchor = Point2D(80.0, -60.0)
    return {
        "c1_hold": (c1_anchor, Point2D(30.0, -60.0)),
        "c1_fail": (c1_anchor, mirror_across_bs_line(bs, c1_anchor)),
        "c2_hold": (c2_anchor, Point2D(120.0, -60.0)),
        "c2_fail": (c2_anchor, mirror_across_bs_line(bs, c2_anchor)),
    }


def topology_experiment(cfg: ExperimentConfig, variants=None) -> list[dict]:
    """Localization accuracy under placements that pass or fail the checks.

    All variants run the same trial seeds, so rows are directly comparable.
    """
    if variants is None:
        variants = topology_variants(cfg.bs)
    rows = []
    for name, irs in variants.items():
        vcfg = replace(cfg, irs=tuple(irs))
        probe = Scene(
            bs=vcfg.bs, irs=vcfg.irs, targets=(vcfg.irs[0],), true_irs=(0,)
        )
        report = check_topology(probe)
        outcomes = run_localization(vcfg)
        rows.append(
            {
                "variant": name,
                "irs": json.dumps([list(p) for p in vcfg.irs]),
                "c1_ok": report.c1_ok,
                "c2_ok": report.c2_ok,
                "trials": vcfg.trials,
                "k": vcfg.k,
                "error_probability": error_probability(outcomes, cfg.error_radius_m),
                "association_accuracy": association_accuracy(outcomes),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# perfect-range uniqueness experiment


def uniqueness_experiment(
    n_scenes: int,
    seed: int = 1,
    k_values=(2, 3, 4),
    r_values=(1, 2, 3),
    bs=DEFAULT_BS,
    radius: float = 50.0,
    tau: float = 1e-9,
    position_tol: float = 1e-6,
) -> dict:
    """Exact-range sanity check of the association stage.

    Scenes cycle over all (K, R) combinations with the stock IRS layouts.
    With exact ranges and a tolerance near zero the consistency filter must
    leave exactly one solution, the true one, and the fit must reproduce the
    true positions.  Reports the success count and the worst position error.
    """
    w = ResidualWeights()
    gn = GnConfig()
    seeds = np.random.SeedSequence(seed).spawn(n_scenes)
    combos = [(k, r) for k in k_values for r in r_values]
    successes = 0
    unique = 0
    worst = 0.0
    failures = []
    for i, s in enumerate(seeds):
        k, r = combos[i % len(combos)]
        irs = DEFAULT_IRS_LAYOUTS[r]
        scene = sample_targets(bs, irs, k, radius, s, cell_m=DEFAULT_CELL_FOR_SAMPLING)
        sets = RangeSets.from_geometry(scene, cell_m=None)
        feasible = enumerate_feasible(sets, scene, tau, use_closest_irs=False)
        truth = ground_truth_solution(scene, sets, cell_m=None)
        ok = (
            len(feasible.solutions) == 1
            and truth is not None
            and solutions_equivalent(sets, feasible.solutions[0], truth)
        )
        if ok:
            unique += 1
            truths = _true_positions_by_rank(scene)
            errs = []
            for t, true_pos in zip(feasible.solutions[0], truths):
                est = gauss_newton_solve(sets, t, scene, w, gn)
                errs.append(distance(est.position, true_pos))
            worst = max(worst, max(errs))
            if max(errs) <= position_tol:
                successes += 1
            else:
                failures.append({"scene": i, "k": k, "r": r, "worst_err": max(errs)})
        else:
            failures.append({"scene": i, "k": k, "r": r, "n_solutions": len(feasible.solutions)})
    return {
        "scenes": n_scenes,
        "unique_and_correct": unique,
        "localized": successes,
        "worst_position_error_m": worst,
        "failures": failures,
    }


DEFAULT_CELL_FOR_SAMPLING = 0.75


# ---------------------------------------------------------------------------
# CSV output


def write_localization_csv(path, outcomes) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "trial",
                "target",
                "est_x",
                "est_y",
                "residual",
                "direct1",
                "direct2",
                "via1",
                "via2",
                "irs",
                "true_x",
                "true_y",
                "error_m",
                "association_correct",
                "detection_failed",
            ]
        )
        for o in outcomes:
            for rank in range(o.k):
                est = o.est_positions[rank] if rank < len(o.est_positions) else None
                true = o.true_positions[rank] if rank < len(o.true_positions) else None
                t = o.chosen[rank] if o.chosen is not None else None
                writer.writerow(
                    [
                        o.trial,
                        rank,
                        "" if est is None else repr(est.x),
                        "" if est is None else repr(est.y),
                        "" if math.isinf(o.residuals[rank]) else repr(o.residuals[rank]),
                        "" if t is None else t.direct1,
                        "" if t is None else t.direct2,
                        "" if t is None else t.via1,
                        "" if t is None else t.via2,
                        "" if t is None else t.irs,
                        "" if true is None else repr(true.x),
                        "" if true is None else repr(true.y),
                        "inf" if math.isinf(o.errors_m[rank]) else repr(o.errors_m[rank]),
                        int(o.association_correct),
                        int(o.detection_failed),
                    ]
                )


def write_rows_csv(path, rows: list[dict]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def summarize_localization(outcomes, error_radius: float, label: str) -> dict:
    return {
        "mode": label,
        "trials": len(outcomes),
        "k": outcomes[0].k if outcomes else 0,
        "error_probability": error_probability(outcomes, error_radius),
        "association_accuracy": association_accuracy(outcomes),
        "detection_failures": sum(1 for o in outcomes if o.detection_failed),
        "mean_feasible": float(np.mean([o.n_feasible for o in outcomes])),
        "mean_survivors": float(np.mean([o.n_survivors for o in outcomes])),
        "mean_solver_calls": float(np.mean([o.solver_calls for o in outcomes])),
        "mean_wall_time_s": float(np.mean([o.wall_time_s for o in outcomes])),
    }
