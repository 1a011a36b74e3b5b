"""OFDM echo synthesis for the two-BS sensing downlink.

Both BSs transmit pilot symbols on disjoint interleaved subcarrier combs, so
each BS hears only its own monostatic echoes after demodulation.  Echo paths
are modeled as integer-delay taps on a length-``L`` grid; the cyclic prefix
absorbs the full delay spread, which makes the frequency-domain model

    y[n] = sqrt(p) * s[n] * sum_l h[l] * exp(-2j*pi*(c_n - 1)*l / N) + z[n]

exact (``c_n`` is the 1-based subcarrier index).  ``simulate_freq_rx``
implements that model directly; the time-domain modulate/convolve/demodulate
chain is equivalent sample for sample and serves as its reference.

Echo kinds, named for the receiver ``m`` (transmitter is also ``m``):

* ``INTER_BS``: BS-to-BS direct path.  Lands only on the other BS's comb, so
  the builder never emits it for the monostatic channel.
* ``IRS_ECHO``: BS -> IRS -> BS static reflection, delay known from geometry.
* ``TARGET_ECHO``: BS -> target -> BS direct echo.
* ``TARGET_VIA_IRS``: BS -> target -> IRS -> BS compound echo.

During the first pilot symbol the IRSs are absorbing, so only target echoes
exist; from the second symbol on they reflect and the IRS-related taps appear.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .scene import Scene, distance


class LinkType(str, Enum):
    INTER_BS = "inter_bs"
    IRS_ECHO = "irs_echo"
    TARGET_ECHO = "target_echo"
    TARGET_VIA_IRS = "target_via_irs"


class DelayWindowError(ValueError):
    """An echo falls beyond the modeled tap window."""


def dbm_to_watts(dbm: float) -> float:
    return 1e-3 * 10.0 ** (dbm / 10.0)


@dataclass(frozen=True)
class OfdmConfig:
    """Waveform and link-budget constants shared by both BSs.

    ``n_taps`` is the modeled delay-spread window ``L``; the cyclic prefix
    must cover it (``cp_len >= n_taps - 1``) and the interleaved combs limit
    it to ``n_subcarriers / 2`` taps before delay aliasing.  Reflection gains
    are dimensionless amplitude constants: a bounce off a target contributes
    ``sqrt(bs_reflect_gain)``, a bounce off an IRS ``sqrt(irs_reflect_gain)``,
    and every traversed leg divides by its length.
    """

    n_subcarriers: int = 2048
    subcarrier_spacing_hz: float = 195312.5
    cp_len: int = 512
    n_taps: int = 512
    tx_power_dbm: float = 39.0
    noise_psd_dbm_hz: float | None = -174.0
    bs_reflect_gain: float = 1.0
    irs_reflect_gain: float = 0.04
    c0: float = 3.0e8

    def __post_init__(self):
        if self.n_subcarriers < 2 or self.n_subcarriers % 2 != 0:
            raise ValueError("n_subcarriers must be even and >= 2")
        if self.subcarrier_spacing_hz <= 0:
            raise ValueError("subcarrier_spacing_hz must be positive")
        if self.n_taps < 1:
            raise ValueError("n_taps must be >= 1")
        if self.cp_len < self.n_taps - 1:
            raise ValueError("cp_len must cover the delay spread (>= n_taps - 1)")
        if self.n_taps > self.n_subcarriers // 2:
            raise ValueError(
                "n_taps beyond n_subcarriers/2 aliases on an interleaved comb"
            )
        if self.bs_reflect_gain <= 0 or self.irs_reflect_gain <= 0:
            raise ValueError("reflection gains must be positive")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")

    @property
    def bandwidth_hz(self) -> float:
        return self.n_subcarriers * self.subcarrier_spacing_hz

    @property
    def cell_m(self) -> float:
        """Round-trip range quantization cell, c0 / bandwidth."""
        return self.c0 / self.bandwidth_hz

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watts(self.tx_power_dbm)

    @property
    def subcarrier_power_w(self) -> float:
        """Per-subcarrier transmit power with the total split over one comb."""
        return self.tx_power_w / (self.n_subcarriers // 2)

    @property
    def noise_var(self) -> float:
        """Per-subcarrier noise variance; zero when the PSD is disabled."""
        if self.noise_psd_dbm_hz is None:
            return 0.0
        return dbm_to_watts(self.noise_psd_dbm_hz) * self.subcarrier_spacing_hz


@dataclass(frozen=True)
class SubcarrierPlan:
    """Disjoint subcarrier combs, 1-based indices covering 1..N."""

    bs1: tuple[int, ...]
    bs2: tuple[int, ...]

    def __post_init__(self):
        union = set(self.bs1) | set(self.bs2)
        n = len(self.bs1) + len(self.bs2)
        if len(union) != n or union != set(range(1, n + 1)):
            raise ValueError("combs must partition 1..N")

    def for_bs(self, m: int) -> tuple[int, ...]:
        return (self.bs1, self.bs2)[m]


def make_plan(n_subcarriers: int, mode: str = "interleaved") -> SubcarrierPlan:
    """Assign odd 1-based subcarriers to BS 1 and even ones to BS 2."""
    if mode != "interleaved":
        raise ValueError(f"unknown plan mode: {mode!r}")
    if n_subcarriers < 2 or n_subcarriers % 2 != 0:
        raise ValueError("n_subcarriers must be even and >= 2")
    return SubcarrierPlan(
        bs1=tuple(range(1, n_subcarriers + 1, 2)),
        bs2=tuple(range(2, n_subcarriers + 1, 2)),
    )


@dataclass(frozen=True)
class PathTap:
    """One echo on the delay grid of a monostatic channel."""

    delay: int
    gain: complex
    link: LinkType
    bs: int
    target: int | None = None
    irs: int | None = None


@dataclass(frozen=True)
class PathList:
    """All modeled taps for one pilot symbol, per receiving BS."""

    symbol: int
    taps: tuple[tuple[PathTap, ...], tuple[PathTap, ...]]

    def for_bs(self, m: int) -> tuple[PathTap, ...]:
        return self.taps[m]


def path_delay(length_m: float, cfg: OfdmConfig) -> int:
    """Tap index of a path of the given total length (floor quantization)."""
    return math.floor(length_m * cfg.bandwidth_hz / cfg.c0)


def _path_phase(phase_seed: int, *key: int) -> float:
    """Stable uniform phase for one propagation path.

    Keyed by path identity so the same path carries the same phase in every
    pilot symbol; target echoes must not decorrelate between symbols.
    """
    entropy = (phase_seed & 0xFFFFFFFF,) + tuple(k & 0xFFFFFFFF for k in key)
    return float(np.random.default_rng(entropy).uniform(0.0, 2.0 * math.pi))


def build_paths(scene: Scene, cfg: OfdmConfig, symbol: int, phase_seed: int = 0) -> PathList:
    """Geometry to tap list for one pilot symbol.

    Symbol 1 models absorbing IRSs (target echoes only); symbol 2 and later
    add the static IRS reflections and the compound target-via-IRS echoes.
    Raises DelayWindowError when any modeled path exceeds the tap window.
    """
    if symbol < 1:
        raise ValueError("symbol index is 1-based")
    per_bs: list[tuple[PathTap, ...]] = []
    for m, bs_pos in enumerate(scene.bs):
        taps: list[PathTap] = []

        def add(length_m, amp, link, target=None, irs=None, key=()):
            l = path_delay(length_m, cfg)
            if l >= cfg.n_taps:
                raise DelayWindowError(
                    f"{link.value} path of {length_m:.2f} m needs tap {l}, "
                    f"window is {cfg.n_taps}"
                )
            phase = _path_phase(phase_seed, m, *key)
            taps.append(
                PathTap(
                    delay=l,
                    gain=amp * complex(math.cos(phase), math.sin(phase)),
                    link=link,
                    bs=m,
                    target=target,
                    irs=irs,
                )
            )

        for k, t in enumerate(scene.targets):
            d_bt = distance(bs_pos, t)
            if d_bt <= 0:
                raise ValueError(f"target {k} coincides with BS {m}")
            add(
                2.0 * d_bt,
                math.sqrt(cfg.bs_reflect_gain) / d_bt**2,
                LinkType.TARGET_ECHO,
                target=k,
                key=(1, k),
            )
        if symbol >= 2:
            for r, q in enumerate(scene.irs):
                d_bi = distance(bs_pos, q)
                if d_bi <= 0:
                    raise ValueError(f"IRS {r} coincides with BS {m}")
                add(
                    2.0 * d_bi,
                    math.sqrt(cfg.bs_reflect_gain * cfg.irs_reflect_gain) / d_bi**2,
                    LinkType.IRS_ECHO,
                    irs=r,
                    key=(2, r),
                )
            for k, t in enumerate(scene.targets):
                r = scene.true_irs[k]
                q = scene.irs[r]
                d_bt = distance(bs_pos, t)
                d_it = distance(q, t)
                d_bi = distance(bs_pos, q)
                if d_it <= 0:
                    raise ValueError(f"target {k} coincides with IRS {r}")
                add(
                    d_bt + d_it + d_bi,
                    math.sqrt(cfg.bs_reflect_gain * cfg.irs_reflect_gain)
                    / (d_bt * d_it * d_bi),
                    LinkType.TARGET_VIA_IRS,
                    target=k,
                    irs=r,
                    key=(3, k),
                )
        per_bs.append(tuple(taps))
    return PathList(symbol=symbol, taps=(per_bs[0], per_bs[1]))


def channel_vector(taps, n_taps: int) -> np.ndarray:
    """Sum taps (colliding delays add coherently) into a length-L vector."""
    h = np.zeros(n_taps, dtype=complex)
    for tap in taps:
        if not 0 <= tap.delay < n_taps:
            raise DelayWindowError(f"tap delay {tap.delay} outside window {n_taps}")
        h[tap.delay] += tap.gain
    return h


def ofdm_modulate(symbols: np.ndarray, cp_len: int) -> np.ndarray:
    """Unitary IDFT of one symbol vector plus cyclic prefix."""
    symbols = np.asarray(symbols, dtype=complex)
    if symbols.ndim != 1 or symbols.size < 1:
        raise ValueError("symbols must be a nonempty 1-D vector")
    if not 0 <= cp_len <= symbols.size:
        raise ValueError("cp_len must be within [0, N]")
    x = np.fft.ifft(symbols, norm="ortho")
    if cp_len == 0:
        return x
    return np.concatenate([x[-cp_len:], x])


def ofdm_demodulate(samples: np.ndarray, cp_len: int) -> np.ndarray:
    """Drop the cyclic prefix and return the unitary DFT of the body."""
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim != 1 or samples.size <= cp_len:
        raise ValueError("samples must contain a body after the prefix")
    return np.fft.fft(samples[cp_len:], norm="ortho")


@lru_cache(maxsize=16)
def _steering_cached(subcarriers: tuple[int, ...], n_fft: int, n_taps: int):
    bins = np.asarray(subcarriers, dtype=float) - 1.0
    grid = np.arange(n_taps, dtype=float)
    g = np.exp(-2j * math.pi * np.outer(bins, grid) / n_fft)
    g.setflags(write=False)
    return g

def steering_matrix(subcarriers, n_fft: int, n_taps: int) -> np.ndarray:
    """Delay steering matrix: entry (n, l) = exp(-2j*pi*(c_n - 1)*l / N).

    Cached per comb since every trial of an experiment shares it.  The
    returned array is read-only.
    """
    return _steering_cached(tuple(int(c) for c in subcarriers), n_fft, n_taps)


def make_pilots(plan: SubcarrierPlan, seed) -> tuple[np.ndarray, np.ndarray]:
    """Random unit-modulus QPSK pilots, one vector per BS comb."""
    rng = np.random.default_rng(seed)
    out = []
    for comb in (plan.bs1, plan.bs2):
        out.append(np.exp(0.5j * math.pi * rng.integers(0, 4, size=len(comb))))
    return out[0], out[1]


@dataclass(eq=False)
class BsSnapshot:
    """Received pilots on one BS comb for one symbol."""

    bs: int
    symbol: int
    subcarriers: tuple[int, ...]
    rx: np.ndarray
    pilots: np.ndarray
    tx_power_w: float
    noise_var: float


@dataclass(eq=False)
class FreqSnapshot:
    """Per-BS received frequency samples for one pilot symbol."""

    symbol: int
    by_bs: tuple[BsSnapshot, BsSnapshot]


def simulate_freq_rx(
    paths: PathList,
    pilots: tuple[np.ndarray, np.ndarray],
    cfg: OfdmConfig,
    plan: SubcarrierPlan,
    seed=None,
) -> FreqSnapshot:
    """Frequency-domain receive model on each BS's own comb.

    Implements the exact post-DFT relation for integer-delay taps within the
    cyclic prefix; additive noise is circular complex Gaussian per subcarrier
    with variance ``cfg.noise_var``.
    """
    rng = np.random.default_rng(seed)
    p = cfg.subcarrier_power_w
    snaps = []
    for m in (0, 1):
        comb = plan.for_bs(m)
        s = np.asarray(pilots[m], dtype=complex)
        if s.shape != (len(comb),):
            raise ValueError(f"pilot vector for BS {m + 1} does not match its comb")
        h = channel_vector(paths.for_bs(m), cfg.n_taps)
        g = steering_matrix(comb, cfg.n_subcarriers, cfg.n_taps)
        y = math.sqrt(p) * s * (g @ h)
        if cfg.noise_var > 0:
            scale = math.sqrt(cfg.noise_var / 2.0)
            y = y + scale * (
                rng.standard_normal(len(comb)) + 1j * rng.standard_normal(len(comb))
            )
        snaps.append(
            BsSnapshot(
                bs=m,
                symbol=paths.symbol,
                subcarriers=comb,
                rx=y,
                pilots=s,
                tx_power_w=p,
                noise_var=cfg.noise_var,
            )
        )
    return FreqSnapshot(symbol=paths.symbol, by_bs=(snaps[0], snaps[1]))
