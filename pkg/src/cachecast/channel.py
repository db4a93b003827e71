"""Channel sample generation for the multicast backhaul simulator.

Each base station ``l`` sees a channel vector ``h_l = K_l^{1/2} v_l`` from the
multi-antenna transmitter, where ``v_l`` has i.i.d. unit-variance circularly
symmetric complex Gaussian entries and ``K_l`` is the long-term transmit-side
correlation matrix.  ``K_l = g_l * R(rho, theta_l)`` combines the distance
driven average gain ``g_l`` with a one-parameter exponential correlation
profile ``R_ij = rho^|i-j| * exp(1j * pi * (i - j) * sin(theta_l))`` (PSD by
construction, unit diagonal).

Generation uses the counter-based Philox generator so identical
(seed, geometry, config) inputs reproduce bit-identical samples on any
platform.  Train and test sets draw from disjoint sub-streams of the master
seed; the per-BS angles (when not given by the geometry) come from a third
sub-stream shared by both roles, so the long-term statistics match.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .linalg import matrix_sqrt
from .rates import SystemConfig

_ANGLE_STREAM = 0
_ROLE_STREAMS = {"train": 1, "test": 2}

DEFAULT_DISTANCES_M = (398.0, 278.0, 473.0, 286.0, 267.0)


@dataclass(frozen=True)
class BsGeometry:
    """Distances (meters) from the central transmitter to each BS, plus
    optional nominal angles of arrival in degrees."""

    distances_m: tuple
    angles_deg: tuple | None = None

    def __post_init__(self):
        d = tuple(float(x) for x in self.distances_m)
        if len(d) < 1 or any(x <= 0 for x in d):
            raise ValidationError("need at least one BS with a positive distance")
        object.__setattr__(self, "distances_m", d)
        if self.angles_deg is not None:
            a = tuple(float(x) for x in self.angles_deg)
            if len(a) != len(d):
                raise ValidationError("angles_deg must match distances_m in length")
            object.__setattr__(self, "angles_deg", a)

    @property
    def num_bs(self) -> int:
        return len(self.distances_m)


def default_geometry() -> BsGeometry:
    return BsGeometry(DEFAULT_DISTANCES_M)


def path_loss_db(distance_km: float) -> float:
    """Macro path loss ``128.1 + 37.6 log10(d)`` dB for ``d`` in kilometers."""
    if distance_km <= 0:
        raise ValidationError("distance must be positive")
    return 128.1 + 37.6 * math.log10(distance_km)


def average_gain(distance_m: float, config: SystemConfig) -> float:
    """Linear average channel energy per antenna: path loss combined with the
    net antenna gain (element gain minus average pattern loss)."""
    gain_db = (
        config.antenna_gain_dbi
        - config.pattern_loss_db
        - path_loss_db(distance_m / 1000.0)
    )
    return 10.0 ** (gain_db / 10.0)


def resolve_angles(geometry: BsGeometry, seed: int) -> BsGeometry:
    """Fill in missing angles of arrival, drawn uniformly from (-90, 90)
    degrees once per BS from the angle sub-stream of ``seed``."""
    if geometry.angles_deg is not None:
        return geometry
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_ANGLE_STREAM,))
    rng = np.random.Generator(np.random.Philox(ss))
    angles = rng.uniform(-90.0, 90.0, size=geometry.num_bs)
    return replace(geometry, angles_deg=tuple(angles))


def build_correlation(geometry: BsGeometry, bs_index: int, config: SystemConfig) -> np.ndarray:
    """Transmit correlation matrix ``K_l`` for one BS (M x M, Hermitian PSD,
    trace ``M * g_l``)."""
    if not 0 <= bs_index < geometry.num_bs:
        raise ValidationError(f"bs_index {bs_index} out of range")
    if geometry.angles_deg is None:
        raise ValidationError(
            "geometry has no angles; call resolve_angles(geometry, seed) first"
        )
    m = config.cp_antennas
    rho = config.corr_rho
    if not 0 <= rho < 1:
        raise ValidationError("corr_rho must lie in [0, 1)")
    g = average_gain(geometry.distances_m[bs_index], config)
    theta = math.radians(geometry.angles_deg[bs_index])
    idx = np.arange(m)
    delta = idx[:, None] - idx[None, :]
    r = rho ** np.abs(delta) * np.exp(1j * math.pi * delta * math.sin(theta))
    return g * r


@dataclass
class ChannelSet:
    """A batch of channel realizations: ``samples[n, l, :]`` is the length-M
    channel vector of BS ``l`` in realization ``n``."""

    samples: np.ndarray
    seed: int
    role: str

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=complex)
        if s.ndim != 3 or s.shape[0] < 1:
            raise ValidationError(f"samples must be (N, L, M) with N >= 1, got {s.shape}")
        if not np.all(np.isfinite(s.view(float))):
            raise ValidationError("channel samples contain non-finite values")
        if self.role not in _ROLE_STREAMS:
            raise ValidationError(f"role must be one of {sorted(_ROLE_STREAMS)}")
        self.samples = s

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_bs(self) -> int:
        return self.samples.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.samples.shape[2]


def sample_channels(
    geometry: BsGeometry,
    config: SystemConfig,
    seed: int,
    n_samples: int,
    role: str = "train",
) -> ChannelSet:
    """Draw ``n_samples`` independent channel realizations for every BS."""
    if n_samples < 1:
        raise ValidationError("n_samples must be >= 1")
    if role not in _ROLE_STREAMS:
        raise ValidationError(f"role must be one of {sorted(_ROLE_STREAMS)}")
    geometry = resolve_angles(geometry, seed)
    L, m = geometry.num_bs, config.cp_antennas

    roots = [matrix_sqrt(build_correlation(geometry, l, config)) for l in range(L)]
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(_ROLE_STREAMS[role],))
    rng = np.random.Generator(np.random.Philox(ss))
    z = rng.standard_normal(size=(n_samples, L, m, 2))
    v = (z[..., 0] + 1j * z[..., 1]) / math.sqrt(2.0)

    h = np.empty((n_samples, L, m), dtype=complex)
    for l in range(L):
        h[:, l, :] = v[:, l, :] @ roots[l].T  # (S v)_i = sum_j S_ij v_j
    return ChannelSet(samples=h, seed=int(seed), role=role)


_MAGIC = "cachecast-channels-v1"


def save_channels(cs: ChannelSet, path) -> None:
    """Serialize a ChannelSet: one JSON metadata line, then the samples as
    interleaved (real, imag) float64 pairs in row-major (sample, BS, antenna)
    order.  The round trip is lossless."""
    n, L, m = cs.samples.shape
    header = {
        "format": _MAGIC,
        "num_samples": n,
        "num_bs": L,
        "num_antennas": m,
        "seed": cs.seed,
        "role": cs.role,
    }
    payload = np.ascontiguousarray(cs.samples, dtype=np.complex128)
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        f.write(b"\n")
        f.write(payload.tobytes())


def load_channels(path) -> ChannelSet:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != _MAGIC:
        raise ValidationError(f"{path}: not a channel file")
    n, L, m = header["num_samples"], header["num_bs"], header["num_antennas"]
    body = raw[nl + 1 :]
    expected = n * L * m * 16
    if len(body) != expected:
        raise ValidationError(
            f"{path}: expected {expected} payload bytes, found {len(body)}"
        )
    samples = np.frombuffer(body, dtype=np.complex128).reshape(n, L, m).copy()
    return ChannelSet(samples=samples, seed=int(header["seed"]), role=header["role"])
