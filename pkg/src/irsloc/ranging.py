"""Range extraction from estimated multipath channels.

Phase I of the pipeline: recover the sparse tap vector of each BS's
monostatic channel from one pilot symbol, threshold it into a delay support,
and convert delays to ranges.  The first symbol sees only direct target
echoes; the second adds IRS reflections, whose delays are known from anchor
geometry, plus the compound target-via-IRS echoes.  Taps that were already
explained by the first symbol or by anchor geometry get a weaker l1 penalty
in the second solve, and whatever survives outside those known bins is read
as a compound echo.

The tap estimate under the l1 objective

    0.5 * ||y - A h||^2 + sum_l beta_l |h_l|

is computed by proximal gradient iteration (complex soft thresholding) with
a backtracking step size.  On the interleaved comb A'A is a scaled identity,
so the iteration converges essentially in one step; the backtracking handles
anything less friendly.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .scene import Scene, distance
from .waveform import BsSnapshot, OfdmConfig, steering_matrix


@dataclass(frozen=True)
class RangingConfig:
    """Sparse-recovery weights and detection thresholds.

    ``rho`` penalizes every tap in the first-symbol solve.  The second-symbol
    solve uses ``rho1`` on delay bins already known to carry an echo and the
    heavier ``rho2`` elsewhere.  ``delta1`` and ``delta2`` are the magnitude
    thresholds that turn the two estimates into supports.
    """

    rho: float
    rho1: float
    rho2: float
    delta1: float
    delta2: float
    max_iters: int = 5000
    conv_tol: float = 1e-8

    def __post_init__(self):
        if self.rho < 0 or self.rho1 < 0 or self.rho2 < 0:
            raise ValueError("penalties must be nonnegative")
        if self.rho1 > self.rho2:
            raise ValueError("rho1 must not exceed rho2")
        if self.delta1 <= 0 or self.delta2 <= 0:
            raise ValueError("detection thresholds must be positive")
        if self.max_iters < 1 or self.conv_tol <= 0:
            raise ValueError("bad iteration limits")

    @classmethod
    def calibrated(
        cls, cfg: OfdmConfig, scene: Scene, coverage_radius: float
    ) -> "RangingConfig":
        """Thresholds from the link budget of the worst covered geometry.

        Tap noise standard deviation follows from the per-subcarrier noise
        and the comb's matched-filter gain.  Detection sits at six sigma,
        clamped to half of the weakest echo amplitude any target inside the
        coverage radius can produce, so calibration never places the
        threshold above a modeled echo.  Penalties use the universal rule
        sigma * sqrt(2 log L) in the tap domain.
        """
        if coverage_radius <= 0:
            raise ValueError("coverage_radius must be positive")
        n_sc = cfg.n_subcarriers // 2
        p = cfg.subcarrier_power_w
        sigma_tap = math.sqrt(cfg.noise_var / (p * n_sc))

        weakest = math.inf
        for bs_pos in scene.bs:
            for q in scene.irs:
                d_bi = distance(bs_pos, q)
                d_bt_max = d_bi + coverage_radius
                g3 = math.sqrt(cfg.bs_reflect_gain) / d_bt_max**2
                g4 = math.sqrt(cfg.bs_reflect_gain * cfg.irs_reflect_gain) / (
                    d_bt_max * coverage_radius * d_bi
                )
                g2 = math.sqrt(cfg.bs_reflect_gain * cfg.irs_reflect_gain) / d_bi**2
                weakest = min(weakest, g2, g3, g4)
        cap = 0.5 * weakest
        delta = cap if sigma_tap == 0 or 6.0 * sigma_tap > cap else 6.0 * sigma_tap

        # objective-domain weight giving a sigma*sqrt(2 log L) tap shrinkage
        rho = sigma_tap * math.sqrt(2.0 * math.log(cfg.n_taps)) * (p * n_sc)
        return cls(rho=rho, rho1=rho / 10.0, rho2=rho, delta1=delta, delta2=delta)


@dataclass(eq=False)
class ChannelEstimate:
    """Tap vector estimate plus solver diagnostics."""

    h: np.ndarray
    converged: bool
    n_iters: int
    objective: float
    rel_change: float

    @property
    def magnitudes(self) -> np.ndarray:
        return np.abs(self.h)


def soft_threshold(z, t):
    """Complex soft thresholding: shrink magnitude by ``t``, keep phase."""
    z = np.asarray(z, dtype=complex)
    mag = np.abs(z)
    scale = np.maximum(1.0 - t / np.maximum(mag, 1e-300), 0.0)
    out = z * scale
    if out.ndim == 0:
        return complex(out)
    return out


def _prox_gradient(y, a, beta, step0, max_iters, tol):
    """Iterative soft thresholding with backtracking on the smooth part."""
    ah = a.conj().T
    h = np.zeros(a.shape[1], dtype=complex)
    resid = y.copy()
    smooth = 0.5 * float(np.vdot(resid, resid).real)
    objective = smooth
    # objective changes below double precision of the starting value are noise
    floor = max(objective, 1e-300) * 1e-15
    step = step0
    rel = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        grad = -(ah @ resid)
        while True:
            candidate = soft_threshold(h - step * grad, step * beta)
            delta = candidate - h
            resid_new = y - a @ candidate
            smooth_new = 0.5 * float(np.vdot(resid_new, resid_new).real)
            bound = (
                smooth
                + float(np.vdot(grad, delta).real)
                + float(np.vdot(delta, delta).real) / (2.0 * step)
            )
            if smooth_new <= bound + 1e-12 * max(1.0, abs(bound)):
                break
            step *= 0.5
            if step < 1e-30:
                break
        h = candidate
        resid = resid_new
        smooth = smooth_new
        obj_new = smooth + float(np.sum(beta * np.abs(h)))
        gap = abs(objective - obj_new)
        rel = gap / max(objective, 1e-300)
        objective = obj_new
        if gap <= tol * max(objective, floor):
            return h, True, it, objective, rel
    return h, False, it, objective, rel


def _solve(snap: BsSnapshot, cfg: OfdmConfig, beta: np.ndarray, rcfg: RangingConfig):
    g = steering_matrix(snap.subcarriers, cfg.n_subcarriers, cfg.n_taps)
    a = math.sqrt(snap.tx_power_w) * snap.pilots[:, None] * g
    step0 = 1.0 / (snap.tx_power_w * len(snap.subcarriers))
    h, converged, iters, obj, rel = _prox_gradient(
        snap.rx, a, beta, step0, rcfg.max_iters, rcfg.conv_tol
    )
    return ChannelEstimate(
        h=h, converged=converged, n_iters=iters, objective=obj, rel_change=rel
    )


def lasso_solve(snap: BsSnapshot, cfg: OfdmConfig, rcfg: RangingConfig) -> ChannelEstimate:
    """First-symbol tap recovery with a uniform l1 penalty."""
    beta = np.full(cfg.n_taps, rcfg.rho)
    return _solve(snap, cfg, beta, rcfg)


def weighted_lasso_solve(
    snap: BsSnapshot,
    irs_bins,
    target_bins,
    cfg: OfdmConfig,
    rcfg: RangingConfig,
) -> ChannelEstimate:
    """Second-symbol recovery; known-echo bins get the lighter penalty.

    ``irs_bins`` are delay bins of the static anchor reflections (from
    geometry), ``target_bins`` the support detected in the first symbol.
    Bins beyond the tap window are ignored, they cannot appear in the
    estimate anyway.  With both sets empty this reduces to ``lasso_solve``
    at penalty ``rho2``.
    """
    beta = np.full(cfg.n_taps, rcfg.rho2)
    for l in set(irs_bins) | set(target_bins):
        if 0 <= l < cfg.n_taps:
            beta[l] = rcfg.rho1
    return _solve(snap, cfg, beta, rcfg)


def detect_support(est: ChannelEstimate, delta: float) -> set[int]:
    """Delay bins whose estimated magnitude reaches ``delta``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return {int(l) for l in np.nonzero(est.magnitudes >= delta)[0]}


def delay_to_range(l: int, cfg: OfdmConfig) -> float:
    """Center of delay cell ``l`` as a total path length in meters."""
    return (l + 0.5) * cfg.cell_m


def irs_echo_bins(scene: Scene, cfg: OfdmConfig) -> tuple[frozenset[int], frozenset[int]]:
    """Known delay bins of the static BS-IRS-BS reflections, per BS."""
    out = []
    for bs_pos in scene.bs:
        out.append(
            frozenset(
                math.floor(2.0 * distance(bs_pos, q) * cfg.bandwidth_hz / cfg.c0)
                for q in scene.irs
            )
        )
    return out[0], out[1]


@dataclass(frozen=True)
class RangeSets:
    """Phase-I output: per-BS sorted range lists.

    ``direct[m]`` holds round-trip lengths of BS -> target -> BS echoes,
    ``via_irs[m]`` total lengths of BS -> target -> IRS -> BS echoes.  The
    optional bin fields carry the detected delay supports when the sets came
    from waveform processing; geometry-built sets leave them unset.
    """

    direct: tuple[tuple[float, ...], tuple[float, ...]]
    via_irs: tuple[tuple[float, ...], tuple[float, ...]]
    direct_bins: tuple[frozenset[int], frozenset[int]] | None = None
    via_bins: tuple[frozenset[int], frozenset[int]] | None = None
    irs_bins: tuple[frozenset[int], frozenset[int]] | None = None

    def __post_init__(self):
        for group in (self.direct, self.via_irs):
            for values in group:
                if list(values) != sorted(values):
                    raise ValueError("range lists must be sorted ascending")

    def counts(self) -> tuple[int, int, int, int]:
        return (
            len(self.direct[0]),
            len(self.direct[1]),
            len(self.via_irs[0]),
            len(self.via_irs[1]),
        )

    def balanced(self, k: int) -> bool:
        """True when every list has exactly one entry per target."""
        return all(c == k for c in self.counts())

    @classmethod
    def from_geometry(cls, scene: Scene, cell_m: float | None = None) -> "RangeSets":
        """Range sets straight from ground truth, bypassing the waveform.

        With ``cell_m`` set, every length is floor-quantized to the delay
        grid and reported at its cell center, exactly as the waveform path
        would produce under perfect detection.  Duplicate quantized values
        are kept as separate entries so each list still has K entries.
        """

        def q(value: float) -> float:
            if cell_m is None:
                return value
            return (math.floor(value / cell_m) + 0.5) * cell_m

        direct = []
        via = []
        for bs_pos in scene.bs:
            d3 = []
            d4 = []
            for k, t in enumerate(scene.targets):
                d_bt = distance(bs_pos, t)
                g = scene.true_irs[k]
                d3.append(q(2.0 * d_bt))
                d4.append(
                    q(d_bt + distance(scene.irs[g], t) + distance(bs_pos, scene.irs[g]))
                )
            direct.append(tuple(sorted(d3)))
            via.append(tuple(sorted(d4)))
        return cls(direct=(direct[0], direct[1]), via_irs=(via[0], via[1]))


def build_range_sets(
    first_symbol: tuple[ChannelEstimate, ChannelEstimate],
    second_symbol: tuple[ChannelEstimate, ChannelEstimate],
    scene: Scene,
    cfg: OfdmConfig,
    rcfg: RangingConfig,
) -> RangeSets:
    """Threshold the two per-BS estimates into range lists.

    Direct-echo bins come from the first symbol.  The second symbol's
    support, minus those bins and minus the known anchor-reflection bins, is
    read as compound target-via-IRS echoes.  List lengths are whatever
    detection produced; callers decide whether unbalanced lists abort a
    trial.
    """
    known = irs_echo_bins(scene, cfg)
    direct = []
    via = []
    d_bins = []
    v_bins = []
    for m in (0, 1):
        phi3 = detect_support(first_symbol[m], rcfg.delta1)
        phi = detect_support(second_symbol[m], rcfg.delta2)
        phi4 = phi - phi3 - set(known[m])
        direct.append(tuple(delay_to_range(l, cfg) for l in sorted(phi3)))
        via.append(tuple(delay_to_range(l, cfg) for l in sorted(phi4)))
        d_bins.append(frozenset(phi3))
        v_bins.append(frozenset(phi4))
    return RangeSets(
        direct=(direct[0], direct[1]),
        via_irs=(via[0], via[1]),
        direct_bins=(d_bins[0], d_bins[1]),
        via_bins=(v_bins[0], v_bins[1]),
        irs_bins=known,
    )


def write_range_sets_csv(path, sets: RangeSets) -> None:
    """Persist range values as rows of (bs, set, index, meters)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bs", "set", "index", "meters"])
        for m in (0, 1):
            for i, v in enumerate(sets.direct[m]):
                writer.writerow([m + 1, "direct", i, repr(v)])
            for i, v in enumerate(sets.via_irs[m]):
                writer.writerow([m + 1, "via_irs", i, repr(v)])


def read_range_sets_csv(path) -> RangeSets:
    """Inverse of ``write_range_sets_csv``; bin fields are not persisted."""
    rows = {("direct", 0): [], ("direct", 1): [], ("via_irs", 0): [], ("via_irs", 1): []}
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["set"], int(row["bs"]) - 1)
            rows[key].append((int(row["index"]), float(row["meters"])))
    out = {}
    for key, pairs in rows.items():
        pairs.sort()
        out[key] = tuple(v for _, v in pairs)
    return RangeSets(
        direct=(out[("direct", 0)], out[("direct", 1)]),
        via_irs=(out[("via_irs", 0)], out[("via_irs", 1)]),
    )
