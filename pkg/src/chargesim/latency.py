"""Per-link network delay models and scalar timing budgets.

Each link's delay is a weighted mixture of bell-shaped components, clamped to
a hard maximum, with an optional hour-of-week profile that scales component
locations (and only locations, so the support range never changes across
hours). Mixture draws use a 12-uniform near-Gaussian kernel instead of libm's
``exp``/``log`` so that traces replay bit-identically across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

MIN_LATENCY_S = 1e-9
HOURS_PER_WEEK = 168
_WEIGHT_TOL = 1e-9


class LinkKind(Enum):
    ETHERNET = "ethernet"
    WIFI = "wifi"
    THREE_G = "threeg"
    LOCAL_BUS = "local_bus"  # collector-to-meter hop inside a station


def _near_gauss(rng) -> float:
    # Sum of 12 uniforms, centered: mean 0, variance 1, support (-6, 6).
    # Pure arithmetic keeps draws bit-identical across libm implementations.
    return sum(rng.random() for _ in range(12)) - 6.0


@dataclass(frozen=True)
class DiurnalProfile:
    """Hour-of-week multipliers applied to component locations.

    Values must lie in (0, 1]: hours can only get faster, never slower, so
    the configured hard_max stays an honest bound at every hour.
    """

    scale: tuple = tuple([1.0] * HOURS_PER_WEEK)

    def __post_init__(self):
        if len(self.scale) != HOURS_PER_WEEK:
            raise ValueError(f"diurnal profile needs {HOURS_PER_WEEK} hourly multipliers, got {len(self.scale)}")
        for i, s in enumerate(self.scale):
            if not 0.0 < s <= 1.0:
                raise ValueError(f"diurnal multiplier [{i}] = {s!r} outside (0, 1]")

    def multiplier(self, at: float) -> float:
        return self.scale[int(at // 3600.0) % HOURS_PER_WEEK]

    @classmethod
    def flat(cls) -> "DiurnalProfile":
        return cls()

    @classmethod
    def with_fast_hours(cls, hours: Iterable[int], factor: float) -> "DiurnalProfile":
        """Profile that speeds up the given hours-of-week by ``factor``."""
        scale = [1.0] * HOURS_PER_WEEK
        for h in hours:
            scale[h % HOURS_PER_WEEK] = factor
        return cls(scale=tuple(scale))


@dataclass(frozen=True)
class MixtureComponent:
    weight: float
    location: float
    spread: float


@dataclass(frozen=True)
class LatencyModel:
    """Delay distribution for one network segment.

    Every sampled value lies in (0, hard_max]. The component family is a
    clamped near-Gaussian; swap components in config for other shapes.
    """

    kind: LinkKind
    components: tuple
    hard_max: float
    diurnal: DiurnalProfile = field(default_factory=DiurnalProfile)

    def __post_init__(self):
        if not self.components:
            raise ValueError("latency model needs at least one mixture component")
        total = 0.0
        for i, c in enumerate(self.components):
            if c.weight <= 0:
                raise ValueError(f"component [{i}] weight {c.weight!r} must be positive")
            if c.location < 0 or c.spread < 0:
                raise ValueError(f"component [{i}] location/spread must be non-negative")
            total += c.weight
        if abs(total - 1.0) > _WEIGHT_TOL:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        if self.hard_max <= 0:
            raise ValueError(f"hard_max {self.hard_max!r} must be positive")

    def sample(self, rng, at: float = 0.0) -> float:
        u = rng.random()
        acc = 0.0
        comp = self.components[-1]
        for c in self.components:
            acc += c.weight
            if u <= acc:
                comp = c
                break
        loc = comp.location * self.diurnal.multiplier(at)
        value = loc if comp.spread == 0.0 else loc + comp.spread * _near_gauss(rng)
        return min(self.hard_max, max(MIN_LATENCY_S, value))

    def analytic_mean(self, at: float = 0.0) -> float:
        """Closed-form mixture mean (ignores the clamp, which is negligible
        when spreads are small relative to the distance to the bounds)."""
        mult = self.diurnal.multiplier(at)
        return sum(c.weight * c.location * mult for c in self.components)

    def to_dict(self) -> dict:
        d = {
            "components": [
                {"weight": c.weight, "location": c.location, "spread": c.spread}
                for c in self.components
            ],
            "hard_max": self.hard_max,
        }
        if any(s != 1.0 for s in self.diurnal.scale):
            d["diurnal"] = list(self.diurnal.scale)
        return d

    @classmethod
    def from_dict(cls, kind: LinkKind, d: dict) -> "LatencyModel":
        comps = tuple(
            MixtureComponent(weight=c["weight"], location=c["location"], spread=c.get("spread", 0.0))
            for c in d["components"]
        )
        diurnal = DiurnalProfile(scale=tuple(d["diurnal"])) if "diurnal" in d else DiurnalProfile()
        return cls(kind=kind, components=comps, hard_max=d["hard_max"], diurnal=diurnal)


def sample_latency(model: LatencyModel, rng, at: float = 0.0) -> float:
    """Draw one delay from ``model`` at simulation time ``at``."""
    return model.sample(rng, at)


@dataclass(frozen=True)
class TimingBudget:
    """Scalar timing symbols for analytic delay budgets.

    ``t_ethernet`` covers Ethernet segments in both roles: the station uplink
    when the server is co-located, and the collector's in-station hop to a
    meter. ``t_3g_uplink`` is derived as half the 3G round trip.
    """

    t_server_cloud: float = 0.0
    t_cloud: float = 0.0
    t_ethernet: float = 0.0
    t_wifi: float = 0.0
    t_3g: float = 0.0
    t_metering: float = 0.0

    def __post_init__(self):
        for name in ("t_server_cloud", "t_cloud", "t_ethernet", "t_wifi", "t_3g", "t_metering"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def t_3g_uplink(self) -> float:
        return 0.5 * self.t_3g

    def link_time(self, link: LinkKind) -> float:
        if link is LinkKind.ETHERNET or link is LinkKind.LOCAL_BUS:
            return self.t_ethernet
        if link is LinkKind.WIFI:
            return self.t_wifi
        return self.t_3g


@dataclass(frozen=True)
class LinkModelSet:
    """The full set of segment models one experiment samples from.

    ``metering`` is the time a meter takes to produce a reading (its local
    radio hop folded in); ``local_bus`` is the collector's wired hop to a
    meter inside the station.
    """

    ethernet: LatencyModel
    wifi: LatencyModel
    threeg: LatencyModel
    local_bus: LatencyModel
    metering: LatencyModel
    t_server_cloud: float = 0.0
    t_cloud: float = 0.0

    def for_link(self, link: LinkKind) -> LatencyModel:
        return {
            LinkKind.ETHERNET: self.ethernet,
            LinkKind.WIFI: self.wifi,
            LinkKind.THREE_G: self.threeg,
            LinkKind.LOCAL_BUS: self.local_bus,
        }[link]


def round_trip_time(source, link: LinkKind, rng=None, at: float = 0.0) -> float:
    """One retrieval round trip: cloud hops + link transit + metering.

    ``source`` is either a TimingBudget (deterministic evaluation) or a
    LinkModelSet (stochastic draw, requires ``rng``).
    """
    if isinstance(source, TimingBudget):
        return source.t_server_cloud + source.t_cloud + source.link_time(link) + source.t_metering
    if rng is None:
        raise ValueError("sampling a LinkModelSet requires an rng")
    return (
        source.t_server_cloud
        + source.t_cloud
        + source.for_link(link).sample(rng, at)
        + source.metering.sample(rng, at)
    )


# --- default models -------------------------------------------------------
# The four-peak cellular mixture is a synthetic fit to the measured shape
# (four modes, 4.5 s worst case); the peak positions/weights themselves are
# not measured ground truth. WiFi is Ethernet shifted +20 ms pending a real
# worst-case figure.


def ethernet_default() -> LatencyModel:
    return LatencyModel(
        kind=LinkKind.ETHERNET,
        components=(MixtureComponent(1.0, 5e-05, 1e-05),),
        hard_max=1e-03,
    )


def wifi_default() -> LatencyModel:
    return LatencyModel(
        kind=LinkKind.WIFI,
        components=(MixtureComponent(1.0, 0.02005, 0.004),),
        hard_max=0.05,
    )


def threeg_default() -> LatencyModel:
    return LatencyModel(
        kind=LinkKind.THREE_G,
        components=(
            MixtureComponent(0.4, 0.8, 0.15),
            MixtureComponent(0.3, 1.5, 0.15),
            MixtureComponent(0.2, 2.5, 0.15),
            MixtureComponent(0.1, 4.0, 0.15),
        ),
        hard_max=4.5,
    )


def local_bus_default() -> LatencyModel:
    return LatencyModel(
        kind=LinkKind.LOCAL_BUS,
        components=(MixtureComponent(1.0, 0.001, 0.0002),),
        hard_max=0.005,
    )


def metering_default() -> LatencyModel:
    return LatencyModel(
        kind=LinkKind.LOCAL_BUS,
        components=(MixtureComponent(1.0, 0.2, 0.02),),
        hard_max=0.5,
    )


def default_models() -> LinkModelSet:
    return LinkModelSet(
        ethernet=ethernet_default(),
        wifi=wifi_default(),
        threeg=threeg_default(),
        local_bus=local_bus_default(),
        metering=metering_default(),
    )


def worst_case_budget(models: LinkModelSet) -> TimingBudget:
    """Budget whose fields upper-bound every sample the model set can draw;
    used for hard staleness bounds."""
    return TimingBudget(
        t_server_cloud=models.t_server_cloud,
        t_cloud=models.t_cloud,
        t_ethernet=models.local_bus.hard_max,
        t_wifi=models.wifi.hard_max,
        t_3g=models.threeg.hard_max,
        t_metering=models.metering.hard_max,
    )


# --- histograms -----------------------------------------------------------


@dataclass
class Histogram:
    edges: list
    counts: list

    @property
    def n(self) -> int:
        return sum(self.counts)

    def rows(self) -> list:
        """(bin_low, bin_high, count) rows, the CSV export shape."""
        return [
            (self.edges[i], self.edges[i + 1], self.counts[i])
            for i in range(len(self.counts))
        ]

    def mean(self) -> float:
        if self.n == 0:
            return 0.0
        mids = [(self.edges[i] + self.edges[i + 1]) / 2.0 for i in range(len(self.counts))]
        return sum(m * c for m, c in zip(mids, self.counts)) / self.n

    def mode_count(self, rel_height: float = 0.05, valley_ratio: float = 0.5) -> int:
        return count_modes(self.counts, rel_height=rel_height, valley_ratio=valley_ratio)


def histogram_of(values: Sequence[float], bins: int, low: float, high: float) -> Histogram:
    if bins < 1:
        raise ValueError(f"need at least one bin, got {bins}")
    if high <= low:
        raise ValueError("histogram range must be non-empty")
    width = (high - low) / bins
    counts = [0] * bins
    for v in values:
        idx = int((v - low) / width)
        counts[min(max(idx, 0), bins - 1)] += 1
    edges = [low + i * width for i in range(bins + 1)]
    return Histogram(edges=edges, counts=counts)


def empirical_histogram(model: LatencyModel, n: int, bins: int, rng, at: float = 0.0) -> Histogram:
    """Histogram of ``n`` draws over (0, hard_max], equal-width bins."""
    if n < 1:
        raise ValueError(f"need at least one draw, got {n}")
    values = [model.sample(rng, at) for _ in range(n)]
    return histogram_of(values, bins, 0.0, model.hard_max)


def count_modes(counts: Sequence[int], rel_height: float = 0.05, valley_ratio: float = 0.5) -> int:
    """Count distinct peaks in a binned distribution.

    A bin is a candidate peak if, after light smoothing, it dominates its
    neighbors and reaches ``rel_height`` of the tallest bin. Adjacent
    candidates are merged unless a valley between them dips below
    ``valley_ratio`` of the smaller peak.
    """
    k = len(counts)
    if k == 0:
        return 0
    smooth = []
    for i in range(k):
        lo, hi = max(0, i - 1), min(k - 1, i + 1)
        window = counts[lo:hi + 1]
        smooth.append(sum(window) / len(window))
    top = max(smooth)
    if top <= 0:
        return 0
    threshold = rel_height * top
    candidates = []
    for i in range(k):
        left = smooth[i - 1] if i > 0 else -1.0
        right = smooth[i + 1] if i < k - 1 else -1.0
        if smooth[i] > left and smooth[i] >= right and smooth[i] >= threshold:
            candidates.append(i)
    modes: list[int] = []
    for c in candidates:
        if modes:
            prev = modes[-1]
            valley = min(smooth[prev:c + 1])
            if valley > valley_ratio * min(smooth[prev], smooth[c]):
                if smooth[c] > smooth[prev]:
                    modes[-1] = c
                continue
        modes.append(c)
    return len(modes)


def histograms_indistinguishable(a: Histogram, b: Histogram, alpha: float = 0.01) -> bool:
    """Two-sample chi-square homogeneity test on shared bins.

    Returns True when the hypothesis "same underlying distribution" is NOT
    rejected at level ``alpha``. Bins whose combined count is below 10 are
    pooled to keep the test valid.
    """
    from scipy.stats import chi2_contingency

    if len(a.counts) != len(b.counts):
        raise ValueError("histograms must share binning")
    col_a: list[float] = []
    col_b: list[float] = []
    pool_a = pool_b = 0
    for ca, cb in zip(a.counts, b.counts):
        pool_a += ca
        pool_b += cb
        if pool_a + pool_b >= 10:
            col_a.append(pool_a)
            col_b.append(pool_b)
            pool_a = pool_b = 0
    if pool_a + pool_b > 0 and col_a:
        col_a[-1] += pool_a
        col_b[-1] += pool_b
    if len(col_a) < 2:
        return True  # everything in one bin: trivially identical shape
    _, p_value, _, _ = chi2_contingency([col_a, col_b])
    return bool(p_value >= alpha)
