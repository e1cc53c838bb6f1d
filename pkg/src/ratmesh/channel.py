"""Large-scale fading channel model: median LoS/NLoS loss, transition-zone
interpolation, log-normal shadowing outage and per-link success probability.

Distances are entered in meters and converted to kilometers inside the
logarithms; frequencies are in MHz (the 32.45 constant is the free-space
constant for the MHz/km convention). All losses are in dB.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field


def los_distance(p: float) -> float:
    """Distance in meters below which the LoS median loss applies.

    ``p`` is the location correction percentage, a fraction in (0, 1).
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"location correction percentage must be in (0, 1), got {p}")
    lg = math.log10(p)
    return 212.0 * lg * lg - 64.0 * lg


@dataclass(frozen=True)
class ChannelParams:
    """Propagation constants shared by all RATs.

    ``d_los`` is derived from ``location_pct`` on construction and must not
    be supplied by callers.
    """

    transition_width: float = 20.0  # meters between the LoS and NLoS regimes
    shadow_sigma: float = 7.0       # dB, std dev of the log-normal shadowing
    location_pct: float = 0.1       # fraction in (0, 1)
    l_urban: float = 6.8            # dB, urban environment correction
    delta_los: float = -7.9         # dB, LoS offset
    delta_nlos: float = -9.0        # dB, NLoS offset
    d_los: float = field(init=False)

    def __post_init__(self):
        if self.transition_width <= 0:
            raise ValueError("transition_width must be positive")
        if self.shadow_sigma <= 0:
            raise ValueError("shadow_sigma must be positive")
        object.__setattr__(self, "d_los", los_distance(self.location_pct))


@dataclass(frozen=True)
class RatParams:
    """One radio access technology: 1 is short-range, 2 is long-range."""

    rat_id: int
    carrier_freq_mhz: float
    max_coupling_loss_db: float
    time_cost: float = 1.0  # time units per exchange, >= 1

    def __post_init__(self):
        if self.rat_id not in (1, 2):
            raise ValueError(f"rat_id must be 1 or 2, got {self.rat_id}")
        if self.carrier_freq_mhz <= 0:
            raise ValueError("carrier_freq_mhz must be positive")
        if self.time_cost < 1.0:
            raise ValueError("time_cost must be >= 1")


def default_channel_params() -> ChannelParams:
    return ChannelParams()


def default_rats(rho: float = 5.0) -> tuple[RatParams, RatParams]:
    """The 2.4 GHz short-range and 868 MHz long-range RAT pair."""
    return (
        RatParams(rat_id=1, carrier_freq_mhz=2400.0, max_coupling_loss_db=105.0, time_cost=1.0),
        RatParams(rat_id=2, carrier_freq_mhz=868.0, max_coupling_loss_db=154.0, time_cost=rho),
    )


def _check_distance(d: float) -> None:
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")


def median_loss_los(d: float, f: float, params: ChannelParams) -> float:
    """Median path loss in dB under line of sight at distance d (m), f (MHz)."""
    _check_distance(d)
    if f <= 0:
        raise ValueError(f"frequency must be positive, got {f}")
    return 32.45 + 20.0 * math.log10(f) + 20.0 * math.log10(d / 1000.0) + params.delta_los


def median_loss_nlos(d: float, f: float, params: ChannelParams) -> float:
    """Median path loss in dB without line of sight."""
    _check_distance(d)
    if f <= 0:
        raise ValueError(f"frequency must be positive, got {f}")
    return (
        9.5
        + 45.0 * math.log10(f)
        + 40.0 * math.log10(d / 1000.0)
        + params.l_urban
        + params.delta_nlos
    )


def mean_loss(d: float, f: float, params: ChannelParams) -> float:
    """Mean loss in dB: LoS below d_los, NLoS above d_los + w, linear
    interpolation between the regime endpoints inside the transition zone."""
    _check_distance(d)
    lo, hi = params.d_los, params.d_los + params.transition_width
    if d < lo:
        return median_loss_los(d, f, params)
    if d > hi:
        return median_loss_nlos(d, f, params)
    l_lo = median_loss_los(lo, f, params)
    l_hi = median_loss_nlos(hi, f, params)
    return l_lo + (d - lo) / params.transition_width * (l_hi - l_lo)


def q_function(z: float) -> float:
    """Upper-tail probability of the standard normal distribution."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def outage_prob(d: float, rat: RatParams, params: ChannelParams, *, literal_sign: bool = False) -> float:
    """Probability that the shadowed loss at distance d exceeds the RAT's MCL.

    The Q argument is (MCL - mean_loss)/sigma so outage grows with distance;
    ``literal_sign=True`` flips it (kept only for comparison, see README).
    """
    margin = rat.max_coupling_loss_db - mean_loss(d, rat.carrier_freq_mhz, params)
    z = -margin / params.shadow_sigma if literal_sign else margin / params.shadow_sigma
    return q_function(z)


def link_prob(d: float, rat: RatParams, params: ChannelParams, *, literal_sign: bool = False) -> float:
    """Probability that a link at distance d is usable (complement of outage)."""
    return 1.0 - outage_prob(d, rat, params, literal_sign=literal_sign)


def link_prob_batch(distances, rat: RatParams, params: ChannelParams) -> "list[float]":
    """link_prob over an iterable of distances; used by the topology sampler."""
    inv_sigma = 1.0 / (params.shadow_sigma * math.sqrt(2.0))
    f = rat.carrier_freq_mhz
    mcl = rat.max_coupling_loss_db
    return [
        1.0 - 0.5 * math.erfc((mcl - mean_loss(d, f, params)) * inv_sigma)
        for d in distances
    ]


def channel_curve(
    rat: RatParams,
    d_grid: "list[float]",
    params: ChannelParams,
    *,
    literal_sign: bool = False,
) -> "list[tuple[float, float]]":
    """Outage probability on a strictly increasing distance grid.

    Returns one (d, p_out) row per grid point.
    """
    if not d_grid:
        raise ValueError("distance grid must not be empty")
    prev = 0.0
    for d in d_grid:
        if d <= prev:
            raise ValueError("distance grid must be strictly increasing and positive")
        prev = d
    return [(d, outage_prob(d, rat, params, literal_sign=literal_sign)) for d in d_grid]


def write_curve_csv(rows: "list[tuple[float, float]]", path) -> None:
    """Write a channel curve as CSV with header d_m,p_out (6 significant digits)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["d_m", "p_out"])
        for d, p in rows:
            writer.writerow([f"{d:.6g}", f"{p:.6g}"])
