"""THz link physics: subcarrier grid, path loss, beam squint, jitter, noise.

Deterministic quantities (grid, per-subcarrier mean gains, jitter variances,
thermal noise, SNR) are computed by :func:`link_statistics`; the per-round
stochastic gains and the block-erasure decision come from
:func:`sample_realization`.

All operations are pure functions of their inputs plus an explicit RNG, so
they are safe to call concurrently.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

# The link-budget golden values in the test suite are derived with the
# rounded speed of light, as is conventional in channel simulators.
SPEED_OF_LIGHT = 3.0e8  # m/s
BOLTZMANN = 1.380649e-23  # J/K

# Central-difference step for the jitter sensitivity (slope of the array
# factor with respect to pointing angle).
_ANGLE_STEP_RAD = 1e-5


@dataclass(frozen=True)
class SubcarrierGrid:
    """Frequency plan of one multicarrier uplink."""

    n_subcarriers: int
    center_freq_hz: float
    bandwidth_hz: float
    freqs_hz: np.ndarray
    subcarrier_bw_hz: float


@dataclass
class LinkGeometry:
    """Geometry and array parameters of one client link."""

    distance_m: float
    user_angle_rad: float = 0.0
    steer_angle_rad: float = 0.0
    n_antennas: int = 64
    antenna_spacing_m: float | None = None  # None -> half wavelength at f_c
    squint_severity: float = 1.0
    jitter_std_rad: float = 0.0
    fading_var: float = 0.0
    tx_power_w: float = 0.01

    def __post_init__(self):
        if self.distance_m <= 0:
            raise ValueError("distance_m must be positive")
        if self.n_antennas < 1:
            raise ValueError("n_antennas must be >= 1")
        if self.squint_severity < 0:
            raise ValueError("squint_severity must be >= 0")
        if self.jitter_std_rad < 0:
            raise ValueError("jitter_std_rad must be >= 0")
        if self.fading_var < 0:
            raise ValueError("fading_var must be >= 0")
        if self.tx_power_w < 0:
            raise ValueError("tx_power_w must be >= 0")

    def spacing_for(self, grid: SubcarrierGrid) -> float:
        if self.antenna_spacing_m is not None:
            return self.antenna_spacing_m
        return SPEED_OF_LIGHT / (2.0 * grid.center_freq_hz)


@dataclass
class LinkStatistics:
    """Per-subcarrier first/second-order statistics of one client link.

    ``noise_vars`` is the post-compensation additive noise variance per
    coordinate in normalized update units, i.e. 1/SNR per subcarrier.
    ``noise_scale`` is the matching received-frame noise std per unit
    signal rms (computed in a form that stays finite when a gain is zero).
    ``squint_gains`` keeps the normalized array gain so analysis code can
    separate it from spreading/absorption loss.  ``shared_frac`` is the
    fraction of the log-variance of the multiplicative fluctuation that is
    driven by the per-round pointing error common to all subcarriers (the
    rest is independent small-scale fading).
    """

    mean_gains: np.ndarray
    jitter_vars: np.ndarray
    noise_vars: np.ndarray
    snr: np.ndarray
    noise_scale: np.ndarray = field(default=None)  # type: ignore[assignment]
    squint_gains: np.ndarray = field(default=None)  # type: ignore[assignment]
    shared_frac: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.mean_gains = np.asarray(self.mean_gains, dtype=float)
        self.jitter_vars = np.asarray(self.jitter_vars, dtype=float)
        self.noise_vars = np.asarray(self.noise_vars, dtype=float)
        self.snr = np.asarray(self.snr, dtype=float)
        if self.noise_scale is None:
            # Generic reconstruction; link_statistics supplies the stable form.
            with np.errstate(invalid="ignore"):
                scale = self.mean_gains * np.sqrt(self.noise_vars)
            self.noise_scale = np.where(self.mean_gains == 0.0, 0.0, scale)
        self.noise_scale = np.asarray(self.noise_scale, dtype=float)
        if self.squint_gains is None:
            self.squint_gains = np.ones_like(self.mean_gains)
        if self.shared_frac is None:
            self.shared_frac = np.zeros_like(self.mean_gains)
        if np.any(self.mean_gains < 0):
            raise ValueError("mean gains must be nonnegative")
        if np.any(self.jitter_vars < 0):
            raise ValueError("jitter variances must be nonnegative")

    @property
    def n_subcarriers(self) -> int:
        return self.mean_gains.shape[0]


@dataclass(frozen=True)
class ChannelRealization:
    """One round's sampled multiplicative gains and delivery indicator."""

    gains: np.ndarray
    delivered: bool


def build_grid(center_freq_hz: float, bandwidth_hz: float,
               n_subcarriers: int) -> SubcarrierGrid:
    """Split ``bandwidth_hz`` around ``center_freq_hz`` into equal subcarriers."""
    if n_subcarriers < 1:
        raise ValueError("n_subcarriers must be >= 1")
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth_hz must be positive")
    if center_freq_hz <= bandwidth_hz / 2.0:
        raise ValueError("bandwidth exceeds twice the center frequency")
    df = bandwidth_hz / n_subcarriers
    n = np.arange(n_subcarriers)
    freqs = center_freq_hz - bandwidth_hz / 2.0 + (n + 0.5) * df
    if df / center_freq_hz > 0.01:
        warnings.warn(
            "subcarrier bandwidth is not small against the carrier "
            "(ratio %.3g); the narrowband per-subcarrier gain model is "
            "questionable" % (df / center_freq_hz),
            stacklevel=2,
        )
    return SubcarrierGrid(n_subcarriers, center_freq_hz, bandwidth_hz, freqs, df)


def absorption_coeff(freq_hz: float, absorption_table) -> float:
    """Molecular absorption coefficient k_a(f) in 1/m.

    ``absorption_table`` is a sequence of (frequency_hz, k_a) pairs sorted by
    frequency.  Lookup is piecewise linear, clamped to the end values outside
    the table range; an empty table means vacuum (0).
    """
    table = list(absorption_table)
    if not table:
        return 0.0
    freqs = np.asarray([row[0] for row in table], dtype=float)
    coeffs = np.asarray([row[1] for row in table], dtype=float)
    if np.any(np.diff(freqs) <= 0):
        raise ValueError("absorption table frequencies must be strictly increasing")
    if np.any(coeffs < 0):
        raise ValueError("absorption coefficients must be nonnegative")
    return float(np.interp(freq_hz, freqs, coeffs))


def load_absorption_csv(path) -> list[tuple[float, float]]:
    """Load a two-column (frequency_hz, k_a_per_m) CSV absorption table."""
    rows: list[tuple[float, float]] = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{line_no}: expected two columns")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                if line_no == 1:
                    continue  # header row
                raise
    return rows


def path_gain(freq_hz: float, distance_m: float, k_a: float) -> float:
    """Free-space spreading loss with exponential molecular absorption.

    Returns the linear power gain (c / (4 pi f d))^2 * exp(-k_a * d).
    """
    if freq_hz <= 0:
        raise ValueError("freq_hz must be positive")
    if distance_m <= 0:
        raise ValueError("distance_m must be positive")
    if k_a < 0:
        raise ValueError("k_a must be nonnegative")
    amp = SPEED_OF_LIGHT / (4.0 * math.pi * freq_hz * distance_m)
    return amp * amp * math.exp(-k_a * distance_m)


def _sinc(x: float) -> float:
    # sin(x)/x with sinc(0) = 1; np.sinc uses the normalized convention.
    return float(np.sinc(x / math.pi))


def squint_mean_gain(freq_hz: float, grid: SubcarrierGrid,
                     geometry: LinkGeometry,
                     user_angle_rad: float | None = None) -> float:
    """Normalized ULA power gain at ``freq_hz``, peak 1 at zero squint.

    The beam is steered at ``steer_angle_rad`` for the center frequency; at
    other frequencies the main lobe drifts to the squinted angle
    arcsin((f_c/f) sin(steer)).  ``squint_severity`` scales the resulting
    phase deviation.  ``user_angle_rad`` overrides the geometry's user angle
    (used by the jitter sensitivity derivative).
    """
    phi = geometry.user_angle_rad if user_angle_rad is None else user_angle_rad
    fc = grid.center_freq_hz
    # sin of the squinted pointing angle, clamped to endfire.
    sin_squint = (fc / freq_hz) * math.sin(geometry.steer_angle_rad)
    sin_squint = max(-1.0, min(1.0, sin_squint))
    d_ant = geometry.spacing_for(grid)
    z = (geometry.squint_severity * geometry.n_antennas * math.pi * freq_hz
         * d_ant / SPEED_OF_LIGHT) * (math.sin(phi) - sin_squint)
    s = _sinc(z)
    return s * s


def jitter_variance(freq_hz: float, grid: SubcarrierGrid,
                    geometry: LinkGeometry) -> float:
    """Multiplicative distortion variance on one subcarrier.

    The pointing-jitter part is the squared slope of the array gain with
    respect to the user angle (central difference) times the jitter
    variance; small-scale fading adds a flat floor.
    """
    h = _ANGLE_STEP_RAD
    up = squint_mean_gain(freq_hz, grid, geometry,
                          user_angle_rad=geometry.user_angle_rad + h)
    down = squint_mean_gain(freq_hz, grid, geometry,
                            user_angle_rad=geometry.user_angle_rad - h)
    slope = (up - down) / (2.0 * h)
    sens = slope * slope
    return sens * geometry.jitter_std_rad ** 2 + geometry.fading_var


def noise_variance(noise_temp_k: float, grid: SubcarrierGrid) -> float:
    """Thermal noise power per subcarrier, k_B * T * (B / N_c), in watts."""
    if noise_temp_k <= 0:
        raise ValueError("noise_temp_k must be positive")
    return BOLTZMANN * noise_temp_k * grid.subcarrier_bw_hz


def link_statistics(grid: SubcarrierGrid, geometry: LinkGeometry,
                    noise_temp_k: float,
                    power_allocation: np.ndarray | None = None,
                    absorption_table=()) -> LinkStatistics:
    """Assemble the deterministic per-subcarrier statistics of one link.

    ``power_allocation`` must sum to the geometry's transmit power; by
    default the power is split uniformly across subcarriers.
    """
    n = grid.n_subcarriers
    if power_allocation is None:
        alloc = np.full(n, geometry.tx_power_w / n)
    else:
        alloc = np.asarray(power_allocation, dtype=float)
        if alloc.shape != (n,):
            raise ValueError("power_allocation length must match the grid")
        if np.any(alloc < 0):
            raise ValueError("power_allocation entries must be nonnegative")
        if not math.isclose(float(alloc.sum()), geometry.tx_power_w,
                            rel_tol=1e-9, abs_tol=1e-30):
            raise ValueError("power_allocation must sum to tx_power_w")

    thermal = noise_variance(noise_temp_k, grid)
    squint = np.empty(n)
    jitter = np.empty(n)
    spread = np.empty(n)
    for i, f in enumerate(grid.freqs_hz):
        k_a = absorption_coeff(float(f), absorption_table)
        spread[i] = path_gain(float(f), geometry.distance_m, k_a)
        squint[i] = squint_mean_gain(float(f), grid, geometry)
        jitter[i] = jitter_variance(float(f), grid, geometry)
    mean_gains = spread * squint
    snr = alloc * mean_gains / thermal

    with np.errstate(divide="ignore"):
        noise_vars = np.where(snr > 0, 1.0 / snr, np.inf)
    # Received-frame noise std per unit signal rms: mean_gain * sqrt(1/snr),
    # computed as sqrt(mean_gain * thermal / alloc) so zero-gain subcarriers
    # carry zero signal and zero (normalized) noise instead of NaN.
    with np.errstate(divide="ignore", invalid="ignore"):
        noise_scale = np.sqrt(np.where(alloc > 0, mean_gains * thermal / alloc, np.inf))

    # Split of the fluctuation log-variance between the shared pointing
    # error and independent fading.
    v_total = np.log1p(jitter)
    v_shared = np.log1p(np.maximum(jitter - geometry.fading_var, 0.0))
    with np.errstate(invalid="ignore"):
        shared_frac = np.where(v_total > 0, v_shared / v_total, 0.0)

    return LinkStatistics(
        mean_gains=mean_gains,
        jitter_vars=jitter,
        noise_vars=noise_vars,
        snr=snr,
        noise_scale=noise_scale,
        squint_gains=squint,
        shared_frac=shared_frac,
    )


def sample_realization(rng: np.random.Generator, stats: LinkStatistics,
                       erasure_threshold: float) -> ChannelRealization:
    """Draw one round's multiplicative gains and the delivery indicator.

    Each subcarrier gain is the mean gain times a unit-mean lognormal
    fluctuation with variance ``jitter_vars[n]``.  The log-variance is split
    between one shared standard normal (the round's pointing error, common
    to all subcarriers) and an independent per-subcarrier draw, per
    ``stats.shared_frac``.  The packet is delivered iff the mean
    instantaneous spectral efficiency (1/N_c) sum log2(1 + SNR_n) reaches
    ``erasure_threshold`` (block erasure: all subcarriers share the fate).
    """
    n = stats.n_subcarriers
    v = np.log1p(stats.jitter_vars)
    shared = rng.standard_normal()
    indep = rng.standard_normal(n)
    frac = np.clip(stats.shared_frac, 0.0, 1.0)
    log_x = (np.sqrt(v * frac) * shared
             + np.sqrt(v * (1.0 - frac)) * indep
             - v / 2.0)
    x = np.exp(log_x)
    gains = stats.mean_gains * x
    snr_inst = stats.snr * x
    spectral_eff = float(np.mean(np.log2(1.0 + snr_inst)))
    delivered = bool(spectral_eff >= erasure_threshold)
    return ChannelRealization(gains=gains, delivered=delivered)
