"""Scene geometry for two-BS, multi-IRS device-free sensing.

A scene is a 2-D layout holding two active base stations (BSs) at known
positions, ``R >= 1`` passive reflecting surfaces (IRSs) acting as extra
anchors, and ``K >= 1`` passive targets to be localized.  Each target sits in
the coverage region of exactly one IRS, the one nearest to it, and that
assignment is recorded as ground truth for scoring.

The module also hosts the anchor-placement checks used by the uniqueness
experiments: pairwise differences of BS-to-IRS distances must be distinct,
otherwise two IRSs become interchangeable in the association step.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

# Half the round-trip range grid of the default 400 MHz waveform; used only to
# keep sampled targets in distinct delay cells so range lists have K entries.
DEFAULT_CELL_M = 0.75


class Point2D(NamedTuple):
    """Planar point, coordinates in meters."""

    x: float
    y: float


class SceneSamplingError(RuntimeError):
    """Raised when rejection sampling cannot place all targets."""


def as_point(p) -> Point2D:
    """Coerce a 2-sequence to a finite Point2D."""
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite coordinates: {p!r}")
    return Point2D(x, y)


def distance(a, b) -> float:
    """Euclidean distance in meters between two planar points."""
    return math.hypot(float(a[0]) - float(b[0]), float(a[1]) - float(b[1]))


def nearest_irs(irs: tuple, point) -> int:
    """Index of the IRS closest to ``point`` (first one on exact ties)."""
    dists = [distance(p, point) for p in irs]
    return int(np.argmin(dists))


@dataclass(frozen=True)
class Scene:
    """Static layout of one trial.

    ``true_irs[k]`` is the index of the IRS nearest to target ``k``.  It is
    ground truth for scoring only; estimators never read it.
    """

    bs: tuple[Point2D, Point2D]
    irs: tuple[Point2D, ...]
    targets: tuple[Point2D, ...]
    true_irs: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bs", tuple(as_point(p) for p in self.bs))
        object.__setattr__(self, "irs", tuple(as_point(p) for p in self.irs))
        object.__setattr__(self, "targets", tuple(as_point(p) for p in self.targets))
        object.__setattr__(self, "true_irs", tuple(int(g) for g in self.true_irs))
        if len(self.bs) != 2:
            raise ValueError("exactly two base stations required")
        if len(self.irs) < 1:
            raise ValueError("at least one IRS required")
        if len(self.targets) < 1:
            raise ValueError("at least one target required")
        if len(self.true_irs) != len(self.targets):
            raise ValueError("true_irs must have one entry per target")
        if len(set(self.irs)) != len(self.irs):
            raise ValueError("IRS positions must be distinct")
        for k, (t, g) in enumerate(zip(self.targets, self.true_irs)):
            if not 0 <= g < len(self.irs):
                raise ValueError(f"true_irs[{k}] out of range")
            d_g = distance(self.irs[g], t)
            if any(distance(p, t) < d_g - 1e-9 for p in self.irs):
                raise ValueError(f"true_irs[{k}] is not the nearest IRS")

    @property
    def n_irs(self) -> int:
        return len(self.irs)

    @property
    def n_targets(self) -> int:
        return len(self.targets)

    def to_dict(self) -> dict:
        return {
            "bs": [list(p) for p in self.bs],
            "irs": [list(p) for p in self.irs],
            "targets": [list(p) for p in self.targets],
            "true_irs": list(self.true_irs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            bs=tuple(as_point(p) for p in d["bs"]),
            irs=tuple(as_point(p) for p in d["irs"]),
            targets=tuple(as_point(p) for p in d["targets"]),
            true_irs=tuple(d["true_irs"]),
        )


@dataclass(frozen=True)
class TopologyReport:
    """Outcome of the anchor-placement check.

    ``offending_pairs`` lists IRS index pairs whose BS-distance differences
    coincide within tolerance.  A pair with both differences near zero means
    both IRSs sit on the perpendicular bisector of the BS segment
    (``c1_ok`` false); any other coincidence puts them on a common hyperbola
    branch with the BSs as foci (``c2_ok`` false).
    """

    c1_ok: bool
    c2_ok: bool
    offending_pairs: tuple[tuple[int, int], ...]

    @property
    def ok(self) -> bool:
        return self.c1_ok and self.c2_ok


def bs_distance_difference(scene_or_bs, irs_pos) -> float:
    """d(BS1, IRS) - d(BS2, IRS), the quantity that must be pairwise distinct."""
    bs = scene_or_bs.bs if isinstance(scene_or_bs, Scene) else scene_or_bs
    return distance(bs[0], irs_pos) - distance(bs[1], irs_pos)


def check_topology(scene: Scene, tol: float = 1e-6) -> TopologyReport:
    """Verify that IRS placement admits unique association.

    Two IRSs with equal BS-distance differences (within ``tol`` meters)
    produce identical consistency gaps for swapped assignments, so the
    association step cannot tell them apart even with perfect ranges.
    """
    deltas = [bs_distance_difference(scene, p) for p in scene.irs]
    offending = []
    c1_ok = True
    c2_ok = True
    for r in range(len(deltas)):
        for s in range(r + 1, len(deltas)):
            if abs(deltas[r] - deltas[s]) <= tol:
                offending.append((r, s))
                if abs(deltas[r]) <= tol and abs(deltas[s]) <= tol:
                    c1_ok = False
                else:
                    c2_ok = False
    return TopologyReport(c1_ok=c1_ok, c2_ok=c2_ok, offending_pairs=tuple(offending))


def _half_disc_sample(rng, center: Point2D, radius: float, bs) -> Point2D:
    """Uniform draw from the half disc around ``center`` on the side of the
    BS line, so the sensing region sits between its IRS and the BSs."""
    b1 = np.asarray(bs[0], dtype=float)
    b2 = np.asarray(bs[1], dtype=float)
    axis = b2 - b1
    norm = np.hypot(*axis)
    if norm < 1e-12:
        raise ValueError("base stations coincide; BS line undefined")
    u = axis / norm
    n = np.array([-u[1], u[0]])
    side = float(np.dot(np.asarray(center) - b1, n))
    toward = -n if side > 0 else n
    r = radius * math.sqrt(rng.uniform())
    phi = rng.uniform(0.0, math.pi)
    offset = r * (math.cos(phi) * u + math.sin(phi) * toward)
    return Point2D(center.x + offset[0], center.y + offset[1])


def sample_targets(
    bs,
    irs,
    k: int,
    radius: float,
    seed,
    cell_m: float | None = DEFAULT_CELL_M,
    max_attempts_per_target: int = 1000,
) -> Scene:
    """Draw a random scene with ``k`` targets.

    Each target picks a serving IRS uniformly, then lands uniformly in the
    half disc of the given radius around that IRS, on the side facing the
    BS line.  Draws are rejected when the sampled point is nearer to some
    other IRS, or when ``cell_m`` is set and one of the point's echoes
    (direct round trip, or total path via its serving IRS) falls in the same
    floor-quantized delay cell as any other echo a BS hears: another
    target's echo, a static BS-IRS-BS reflection, or the point's own second
    echo at that BS.  A collision would merge two entries of a range list or
    hide one behind a known reflection, and downstream association assumes
    one direct plus one via entry per target in every list.  Deterministic
    in ``seed``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    bs = tuple(as_point(p) for p in bs)
    irs = tuple(as_point(p) for p in irs)
    rng = np.random.default_rng(seed)

    occupied: list[set[int]] = [set(), set()]
    if cell_m is not None:
        for m, bs_pos in enumerate(bs):
            for q in irs:
                occupied[m].add(math.floor(2.0 * distance(bs_pos, q) / cell_m))

    targets: list[Point2D] = []
    assignment: list[int] = []
    for _ in range(k):
        for attempt in range(max_attempts_per_target):
            g = int(rng.integers(len(irs)))
            pos = _half_disc_sample(rng, irs[g], radius, bs)
            if nearest_irs(irs, pos) != g:
                continue
            cells = _echo_cells(bs, irs[g], pos, cell_m) if cell_m else None
            if cells is not None and any(
                d == v or d in occupied[m] or v in occupied[m]
                for m, (d, v) in enumerate(cells)
            ):
                continue
            if cells is not None:
                for m, (d, v) in enumerate(cells):
                    occupied[m].update((d, v))
            targets.append(pos)
            assignment.append(g)
            break
        else:
            raise SceneSamplingError(
                f"could not place target {len(targets)} after "
                f"{max_attempts_per_target} attempts"
            )
    return Scene(bs=bs, irs=irs, targets=tuple(targets), true_irs=tuple(assignment))


def _echo_cells(bs, serving_irs: Point2D, pos: Point2D, cell_m: float):
    """Quantized delay cells of the two echoes each BS hears from a target.

    Returns one ``(direct, via)`` cell pair per BS, where direct is the
    BS-target-BS round trip and via the BS-target-IRS-BS compound path.
    """
    d_it = distance(serving_irs, pos)
    pairs = []
    for bs_pos in bs:
        d_bt = distance(bs_pos, pos)
        via = d_bt + d_it + distance(bs_pos, serving_irs)
        pairs.append(
            (math.floor(2.0 * d_bt / cell_m), math.floor(via / cell_m))
        )
    return pairs


def mirror_across_bs_line(bs, point) -> Point2D:
    """Reflect ``point`` across the line through the two BSs.

    Reflection preserves the distance to every point on the line, so the
    image has the same BS-distance difference as the original.  Used to
    construct anchor placements that defeat the pairwise-distinctness check.
    """
    b1 = np.asarray(as_point(bs[0]), dtype=float)
    b2 = np.asarray(as_point(bs[1]), dtype=float)
    u = b2 - b1
    norm = np.hypot(*u)
    if norm < 1e-12:
        raise ValueError("base stations coincide; BS line undefined")
    u = u / norm
    v = np.asarray(as_point(point), dtype=float) - b1
    along = np.dot(v, u) * u
    reflected = b1 + 2.0 * along - v
    return Point2D(float(reflected[0]), float(reflected[1]))
