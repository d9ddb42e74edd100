"""Uplink transform of a model update.

Send side: interleave -> partition into per-subcarrier blocks -> stochastic
quantization -> channel application (multiplicative gain + additive noise,
or whole-update erasure).  Receive side: per-subcarrier gain estimation from
pilots, floor-based exclusion of dead subcarriers, compensation, reassembly.

The link works in normalized update units; there is no waveform synthesis.
An erased transmission is represented by ``None``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .channel import ChannelRealization, LinkStatistics


@dataclass(frozen=True)
class SubcarrierPayload:
    """A model vector split into equal-length per-subcarrier blocks."""

    blocks: np.ndarray  # (n_subcarriers, d_sub)
    pad_len: int

    @property
    def n_subcarriers(self) -> int:
        return self.blocks.shape[0]

    @property
    def d_sub(self) -> int:
        return self.blocks.shape[1]


@dataclass(frozen=True)
class QuantizerSpec:
    """Per-subcarrier bit budget and the matching QSGD error bound."""

    bits_per_subcarrier: np.ndarray
    omega_bound: np.ndarray

    @classmethod
    def uniform(cls, bits: int, n_subcarriers: int, d_sub: int) -> "QuantizerSpec":
        bits_arr = np.full(n_subcarriers, int(bits))
        return cls(bits_per_subcarrier=bits_arr,
                   omega_bound=omega_for_bits(bits_arr, d_sub))

    @property
    def omega_mean(self) -> float:
        return float(np.mean(self.omega_bound))


def omega_for_bits(bits, d_sub: int):
    """QSGD relative mean-square error bound min{d_sub / 2^(2b), 1}."""
    bits = np.asarray(bits, dtype=float)
    if np.any(bits < 1):
        raise ValueError("bits must be >= 1")
    return np.minimum(d_sub / np.power(2.0, 2.0 * bits), 1.0)


def partition(vec: np.ndarray, n_subcarriers: int) -> SubcarrierPayload:
    """Contiguous split into equal blocks, zero-padding the tail."""
    if n_subcarriers < 1:
        raise ValueError("n_subcarriers must be >= 1")
    d = vec.shape[0]
    if d < 1:
        raise ValueError("vector must be non-empty")
    d_sub = math.ceil(d / n_subcarriers)
    pad = n_subcarriers * d_sub - d
    padded = np.concatenate([vec, np.zeros(pad)]) if pad else vec.copy()
    return SubcarrierPayload(blocks=padded.reshape(n_subcarriers, d_sub), pad_len=pad)


def _permutation(permutation_seed: int, d: int) -> np.ndarray:
    return np.random.default_rng(int(permutation_seed)).permutation(d)


def interleave(vec: np.ndarray, permutation_seed: int) -> np.ndarray:
    """Apply the round's random coordinate permutation."""
    return vec[_permutation(permutation_seed, vec.shape[0])]


def deinterleave(vec: np.ndarray, permutation_seed: int) -> np.ndarray:
    """Invert :func:`interleave` with the same seed."""
    perm = _permutation(permutation_seed, vec.shape[0])
    out = np.empty_like(vec)
    out[perm] = vec
    return out


def qsgd_quantize(block: np.ndarray, bits: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Unbiased norm-scaled stochastic quantization with 2^bits levels."""
    return quantize_payload_blocks(block[None, :], np.array([bits]), rng)[0]


def quantize_payload_blocks(blocks: np.ndarray, bits,
                            rng: np.random.Generator) -> np.ndarray:
    """Quantize every block of a payload; zero blocks pass through."""
    bits = np.broadcast_to(np.asarray(bits, dtype=float), (blocks.shape[0],))
    if np.any(bits < 1):
        raise ValueError("bits must be >= 1")
    norms = np.linalg.norm(blocks, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    levels = np.power(2.0, bits)
    u = rng.random(blocks.shape)
    out = _kernels.quantize_blocks(
        np.ascontiguousarray(blocks, dtype=np.float64),
        np.ascontiguousarray(levels / safe),
        np.ascontiguousarray(safe / levels),
        u,
    )
    return out


def quantize_payload(payload: SubcarrierPayload, quantizer: QuantizerSpec | None,
                     rng: np.random.Generator) -> SubcarrierPayload:
    if quantizer is None:
        return payload
    return SubcarrierPayload(
        blocks=quantize_payload_blocks(payload.blocks,
                                       quantizer.bits_per_subcarrier, rng),
        pad_len=payload.pad_len,
    )


def transmit(payload: SubcarrierPayload, realization: ChannelRealization,
             stats: LinkStatistics,
             rng: np.random.Generator) -> SubcarrierPayload | None:
    """Apply the channel to a payload; returns ``None`` on erasure.

    Each delivered block is scaled by the realized gain and receives i.i.d.
    Gaussian noise whose received-frame std is the block rms times
    ``stats.noise_scale`` (so the post-compensation per-coordinate noise
    variance is ``stats.noise_vars`` = 1/SNR, the normalized-unit model).
    """
    if payload.n_subcarriers != stats.n_subcarriers:
        raise ValueError("payload block count must match the statistics")
    if not realization.delivered:
        return None
    rms = np.sqrt(np.mean(payload.blocks ** 2, axis=1))
    noise_std = rms * stats.noise_scale
    z = rng.standard_normal(payload.blocks.shape)
    received = _kernels.apply_channel_blocks(
        np.ascontiguousarray(payload.blocks, dtype=np.float64),
        np.ascontiguousarray(realization.gains, dtype=np.float64),
        np.ascontiguousarray(noise_std, dtype=np.float64),
        z,
    )
    return SubcarrierPayload(blocks=received, pad_len=payload.pad_len)


def pilot_statistic(received_pilot: np.ndarray, sent_pilot: np.ndarray) -> float:
    """Least-squares scalar gain estimate from one pilot exchange."""
    denom = float(np.dot(sent_pilot, sent_pilot))
    if denom == 0.0:
        raise ValueError("sent pilot must have positive norm")
    return float(np.dot(received_pilot, sent_pilot)) / denom


def pilot_round(realization: ChannelRealization, stats: LinkStatistics,
                d_sub: int, rng: np.random.Generator) -> np.ndarray:
    """One pilot exchange per subcarrier; erased rounds record zeros.

    Pilots are unit-rms known vectors and see the same noise scale as the
    data symbols, so the statistic tracks (delivery rate) x (mean gain).
    """
    n = stats.n_subcarriers
    if not realization.delivered:
        return np.zeros(n)
    pilot = np.ones(d_sub)
    noise = rng.standard_normal((n, d_sub)) * stats.noise_scale[:, None]
    received = realization.gains[:, None] * pilot[None, :] + noise
    return received.mean(axis=1)  # equals <y, u>/||u||^2 for the all-ones pilot


class GainEstimator:
    """Sliding-window mean of pilot statistics per subcarrier.

    Subcarriers whose estimate falls below the floor delta are excluded
    from compensation (their blocks are zeroed) to keep the inverse-gain
    noise amplification bounded.  The floor is either an absolute value or
    relative to the median estimate across subcarriers.
    """

    def __init__(self, n_subcarriers: int, window: int,
                 delta_abs: float | None = None, delta_rel: float = 1e-3):
        if window < 1:
            raise ValueError("window must be >= 1")
        self.n_subcarriers = n_subcarriers
        self.window = window
        self.delta_abs = delta_abs
        self.delta_rel = delta_rel
        self._buffer = np.zeros((window, n_subcarriers))
        self._count = 0
        self._pos = 0

    def update(self, statistics: np.ndarray) -> "GainEstimator":
        statistics = np.asarray(statistics, dtype=float)
        if statistics.shape != (self.n_subcarriers,):
            raise ValueError("statistics length must match the subcarrier count")
        self._buffer[self._pos] = statistics
        self._pos = (self._pos + 1) % self.window
        self._count = min(self._count + 1, self.window)
        return self

    @property
    def estimates(self) -> np.ndarray:
        if self._count == 0:
            return np.zeros(self.n_subcarriers)
        return self._buffer[: self._count].mean(axis=0)

    @property
    def floor_delta(self) -> float:
        if self.delta_abs is not None:
            return self.delta_abs
        return self.delta_rel * float(np.median(self.estimates))

    @property
    def excluded(self) -> np.ndarray:
        return self.estimates < self.floor_delta


def update_estimate(estimator: GainEstimator,
                    new_statistics: np.ndarray) -> GainEstimator:
    """Push one round of pilot statistics into the estimator."""
    return estimator.update(new_statistics)


def compensate_blocks(received: SubcarrierPayload, estimator: GainEstimator,
                      enabled: bool = True) -> tuple[np.ndarray, int]:
    """Rescale received blocks by the inverse gain estimates.

    Excluded subcarriers (and any whose estimate is not usable) are zeroed;
    the count of zeroed subcarriers is returned for the round record.
    With ``enabled=False`` the blocks pass through untouched (uncompensated
    reception).
    """
    blocks = np.array(received.blocks, dtype=float)
    if not enabled:
        return blocks, 0
    estimates = estimator.estimates
    dead = estimator.excluded | ~np.isfinite(estimates) | (estimates == 0.0)
    blocks[dead] = 0.0
    alive = ~dead
    blocks[alive] /= estimates[alive, None]
    return blocks, int(np.count_nonzero(dead))


def assemble(blocks: np.ndarray, pad_len: int, permutation_seed: int | None,
             out_len: int | None = None) -> np.ndarray:
    """Reassemble blocks into a model vector: concat, strip padding, deinterleave."""
    flat = blocks.reshape(-1)
    if pad_len:
        flat = flat[: flat.shape[0] - pad_len]
    if out_len is not None and flat.shape[0] != out_len:
        raise ValueError("assembled length does not match the expected vector size")
    if permutation_seed is None:
        return flat.copy()
    return deinterleave(flat, permutation_seed)


def compensate(received: SubcarrierPayload, estimator: GainEstimator,
               permutation_seed: int | None = None,
               enabled: bool = True) -> tuple[np.ndarray, int]:
    """Full receive side: compensation, reassembly, deinterleaving."""
    blocks, n_excluded = compensate_blocks(received, estimator, enabled=enabled)
    return assemble(blocks, received.pad_len, permutation_seed), n_excluded
