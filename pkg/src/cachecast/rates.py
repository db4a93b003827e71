"""System configuration and the cache-channel coding rate formulas.

Two delivery strategies are modeled for multicasting one file to ``L``
receivers over channels with per-receiver mutual informations ``I_l``:

* separate coding: the transmitter sends the largest uncached remainder at
  the worst channel's rate, and
* joint coding: each receiver's cached fraction shrinks its decoding search
  space, so receiver ``l`` only constrains the common rate through
  ``rate * (1 - C_l / F) <= I_l``.

Times are reported in normalized units ``(F - C) / I``; conversion to
ms/Mb lives in :mod:`cachecast.evaluate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .linalg import trace_inner


def noise_power_watts(noise_dbm_per_hz: float, bandwidth_hz: float) -> float:
    """Total noise power in watts over the given bandwidth."""
    dbm = noise_dbm_per_hz + 10.0 * math.log10(bandwidth_hz)
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass
class SystemConfig:
    """Global problem constants.

    ``sigma2`` is the total noise power in watts (precomputed from the noise
    PSD and bandwidth, see :func:`default_config`).  ``antenna_gain_dbi`` and
    ``pattern_loss_db`` together set the net antenna gain entering the average
    channel energy; the default pattern loss models the average loss of a
    directional transmit element toward receivers spread over a half plane.
    """

    file_size: float = 100.0
    total_cache: float = 100.0
    power: float = 40.0
    sigma2: float = noise_power_watts(-150.0, 2.0e7)
    cp_antennas: int = 10
    num_bs: int = 5
    num_files: int = 1
    bandwidth_hz: float = 2.0e7
    antenna_gain_dbi: float = 17.0
    pattern_loss_db: float = 17.0
    corr_rho: float = 0.5

    def __post_init__(self):
        if self.file_size <= 0:
            raise ValidationError("file_size must be positive")
        if not 0 <= self.total_cache <= self.num_bs * self.num_files * self.file_size:
            raise ValidationError(
                "total_cache must lie in [0, L*K*F] "
                f"(got {self.total_cache}, bound {self.num_bs * self.num_files * self.file_size})"
            )
        if self.power <= 0:
            raise ValidationError("power must be positive")
        if self.sigma2 <= 0:
            raise ValidationError("sigma2 must be positive")
        if self.cp_antennas < 1 or self.num_bs < 1 or self.num_files < 1:
            raise ValidationError("cp_antennas, num_bs and num_files must be >= 1")


def default_config(**overrides) -> SystemConfig:
    """SystemConfig preloaded with the standard simulation defaults
    (5 BSs, 10 CP antennas, 40 W, 20 MHz, -150 dBm/Hz noise, F = 100)."""
    if "noise_dbm_per_hz" in overrides:
        noise = overrides.pop("noise_dbm_per_hz")
        bw = overrides.get("bandwidth_hz", 2.0e7)
        overrides.setdefault("sigma2", noise_power_watts(noise, bw))
    return SystemConfig(**overrides)


@dataclass
class CacheAllocation:
    """Per-BS, per-file cache sizes ``C_{lk}`` in the same units as the file
    size.  ``sizes`` has shape (L, K); single-file allocations may be built
    from a length-L vector."""

    sizes: np.ndarray
    file_size: float

    def __post_init__(self):
        sizes = np.atleast_1d(np.asarray(self.sizes, dtype=float))
        if sizes.ndim == 1:
            sizes = sizes[:, None]
        if sizes.ndim != 2:
            raise ValidationError(f"cache sizes must be (L,) or (L, K), got {sizes.shape}")
        self.sizes = sizes
        if np.any(sizes < -1e-9) or np.any(sizes > self.file_size + 1e-9):
            raise ValidationError("cache sizes must lie in [0, file_size]")

    @property
    def fractions(self) -> np.ndarray:
        return self.sizes / self.file_size

    @property
    def total(self) -> float:
        return float(self.sizes.sum())

    def per_file_totals(self) -> np.ndarray:
        return self.sizes.sum(axis=0)

    def column(self, k: int) -> np.ndarray:
        return self.sizes[:, k]

    def validate_budget(self, total_cache: float, tol: float = 1e-9):
        if self.total > total_cache + tol:
            raise ValidationError(
                f"allocation total {self.total} exceeds budget {total_cache}"
            )


@dataclass
class PopularityProfile:
    """File request probabilities ``p_k`` (nonnegative, summing to one)."""

    probs: np.ndarray
    zipf_alpha: float | None = None

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValidationError("popularity must be a nonempty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValidationError("popularity must be nonnegative and sum to 1")
        self.probs = p

    def __len__(self):
        return self.probs.size


@dataclass
class RateReport:
    """Per-channel delivery summary for one cache allocation."""

    per_bs_mutual_info: np.ndarray
    joint_rate: float
    joint_time: float
    separate_rate: float
    separate_time: float

    def __post_init__(self):
        if self.joint_rate < self.separate_rate - 1e-12:
            raise ValidationError("joint coding rate fell below separate coding rate")
        if self.joint_time > self.separate_time + 1e-12:
            raise ValidationError("joint coding time exceeded separate coding time")


def mutual_info(h: np.ndarray, w: np.ndarray, sigma2: float) -> float:
    """Multicast mutual information ``log2(1 + tr(h h^H W) / sigma2)`` in
    bits per channel use."""
    if sigma2 <= 0:
        raise ValidationError("sigma2 must be positive")
    h = np.asarray(h, dtype=complex).reshape(-1)
    snr = trace_inner(np.outer(h, h.conj()), w) / sigma2
    return math.log2(1.0 + max(snr, 0.0))


def _as_cache_vector(cache, file_size: float) -> np.ndarray:
    if isinstance(cache, CacheAllocation):
        if cache.sizes.shape[1] != 1:
            raise ValidationError("rate formulas take a single-file allocation")
        return cache.sizes[:, 0]
    return np.asarray(cache, dtype=float).reshape(-1)


def separate_time(info: np.ndarray, cache, file_size: float) -> float:
    """Downloading time of separate cache-channel coding:
    ``max_l (F - C_l) / min_l I_l``."""
    info = np.asarray(info, dtype=float)
    c = _as_cache_vector(cache, file_size)
    residual = np.max(file_size - c)
    if residual <= 0.0:
        return 0.0
    imin = np.min(info)
    if imin <= 0.0:
        return math.inf
    return float(residual / imin)


def separate_rate(info: np.ndarray, cache, file_size: float) -> float:
    t = separate_time(info, cache, file_size)
    if t == 0.0:
        return math.inf
    return 0.0 if math.isinf(t) else file_size / t


def joint_time(info: np.ndarray, cache, file_size: float) -> float:
    """Downloading time of joint cache-channel coding:
    ``max_l (F - C_l) / I_l`` with the 0/0 convention (fully cached BS with a
    dead channel needs nothing, so contributes 0)."""
    info = np.asarray(info, dtype=float)
    c = _as_cache_vector(cache, file_size)
    residual = file_size - c
    t = 0.0
    for res_l, i_l in zip(residual, info):
        if res_l <= 0.0:
            continue
        if i_l <= 0.0:
            return math.inf
        t = max(t, res_l / i_l)
    return t


def joint_rate(info: np.ndarray, cache, file_size: float) -> float:
    t = joint_time(info, cache, file_size)
    if t == 0.0:
        return math.inf
    return 0.0 if math.isinf(t) else file_size / t


def rate_report(info: np.ndarray, cache, file_size: float) -> RateReport:
    info = np.asarray(info, dtype=float)
    return RateReport(
        per_bs_mutual_info=info,
        joint_rate=joint_rate(info, cache, file_size),
        joint_time=joint_time(info, cache, file_size),
        separate_rate=separate_rate(info, cache, file_size),
        separate_time=separate_time(info, cache, file_size),
    )
