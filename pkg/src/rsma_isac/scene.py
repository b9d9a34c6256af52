"""Seeded problem instances: system parameters, user channels and radar scenes.

All quantities here are linear (milliwatts, radians).  Unit conversion from
dBm / degrees happens once, in :mod:`rsma_isac.harness` (config files) or in
the estimator's ``fit``.

Random draws go through :func:`make_rng`, a PCG64 generator fed with a 64-bit
seed, and complex Gaussians are produced by Box-Muller over the generator's
canonical uniform doubles so that a seed yields the same scene on any
platform.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "RNG_NAME",
    "dbm_to_mw",
    "db_to_linear",
    "ConfigError",
    "CorrelationProfile",
    "SystemConfig",
    "ChannelSet",
    "RadarScene",
    "make_rng",
    "complex_normal",
    "steering_vector",
    "radar_response",
    "generate_user_channel",
    "generate_channel_set",
    "build_radar_scene",
    "default_radar_scene",
]

#: Identifies the generator + normal-variate method behind every scene draw.
RNG_NAME = "pcg64-boxmuller-v1"

HALF_PI = np.pi / 2
# width of the HighCorrelation LoS sector and NLoS spread around each LoS
SECTOR_WIDTH = np.deg2rad(10.0)
NLOS_SPREAD = np.deg2rad(5.0)


def dbm_to_mw(dbm):
    """Power in dBm to milliwatts."""
    return 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def db_to_linear(db):
    """Power ratio in dB to a linear ratio."""
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


class ConfigError(ValueError):
    """Invalid system or experiment parameter.  ``key`` names the culprit."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class CorrelationProfile(str, enum.Enum):
    LOW = "LowCorrelation"
    HIGH = "HighCorrelation"

    @classmethod
    def parse(cls, value) -> "CorrelationProfile":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower()
        for member in cls:
            if text in (member.value.lower(), member.name.lower()):
                return member
        raise ConfigError("profiles", f"unknown correlation profile {value!r}")


def _as_tuple(value, n: int, key: str) -> tuple:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n, float(arr[0]))
    if arr.size != n:
        raise ConfigError(key, f"expected {n} values, got {arr.size}")
    return tuple(float(v) for v in arr)


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of the joint rate-allocation / beamforming problem.

    Powers are linear milliwatts, ``scnr_threshold`` is a linear ratio.
    ``user_noise_power`` and ``user_weights`` accept a scalar (broadcast to all
    users) or one value per user.

    ``pathloss_db`` is the power gain folded into every path gain, and
    ``nlos_gain_db`` the NLoS path variance relative to the LoS path.
    """

    n_tx: int = 32
    n_rx: int = 32
    n_rf: int = 8
    n_users: int = 4
    carrier_freq_hz: float = 28e9
    antenna_spacing_wavelengths: float = 0.5
    power_budget: float = 1000.0
    user_noise_power: float | Sequence[float] = 1e-10
    echo_noise_power: float = 1e-10
    user_weights: float | Sequence[float] = 1.0
    scnr_threshold: float = 10.0
    n_paths: int = 4
    pathloss_db: float = -80.0
    nlos_gain_db: float = -10.0
    fully_digital: bool = False

    def __post_init__(self):
        for key in ("n_tx", "n_rx", "n_users", "n_paths"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(key, "must be an integer >= 1")
        k = int(self.n_users)
        if self.fully_digital:
            object.__setattr__(self, "n_rf", int(self.n_tx))
        if not k + 1 <= self.n_rf:
            raise ConfigError("n_rf", f"K+1 ≤ N_RF violated (K={k}, N_RF={self.n_rf})")
        if not self.n_rf <= self.n_tx:
            raise ConfigError("n_rf", f"N_RF ≤ N_t violated (N_RF={self.n_rf}, N_t={self.n_tx})")
        noise = _as_tuple(self.user_noise_power, k, "user_noise_power")
        weights = _as_tuple(self.user_weights, k, "user_weights")
        object.__setattr__(self, "user_noise_power", noise)
        object.__setattr__(self, "user_weights", weights)
        if not self.power_budget > 0:
            raise ConfigError("power_budget", "must be strictly positive")
        if min(noise) <= 0:
            raise ConfigError("user_noise_power", "must be strictly positive")
        if self.echo_noise_power <= 0:
            raise ConfigError("echo_noise_power", "must be strictly positive")
        if min(weights) <= 0:
            raise ConfigError("user_weights", "must be strictly positive")
        if self.scnr_threshold < 0:
            raise ConfigError("scnr_threshold", "must be nonnegative")
        if self.carrier_freq_hz <= 0:
            raise ConfigError("carrier_freq_hz", "must be strictly positive")
        if self.antenna_spacing_wavelengths <= 0:
            raise ConfigError("antenna_spacing_wavelengths", "must be strictly positive")

    @property
    def noise(self) -> np.ndarray:
        return np.array(self.user_noise_power)

    @property
    def weights(self) -> np.ndarray:
        return np.array(self.user_weights)

    @property
    def wavelength_m(self) -> float:
        return 299_792_458.0 / self.carrier_freq_hz


@dataclass
class ChannelSet:
    """User channels ``channels[k] = h_k`` plus the paths that generated them."""

    channels: np.ndarray
    path_gains: list[np.ndarray]
    path_angles: list[np.ndarray]
    profile: CorrelationProfile = CorrelationProfile.LOW

    @property
    def n_users(self) -> int:
        return self.channels.shape[0]

    @property
    def path_count(self) -> list[int]:
        return [len(g) for g in self.path_gains]

    def reconstruct(self, spacing: float = 0.5) -> np.ndarray:
        n_tx = self.channels.shape[1]
        return np.stack([
            _saleh_valenzuela(g, a, n_tx, spacing)
            for g, a in zip(self.path_gains, self.path_angles)
        ])


@dataclass
class RadarScene:
    """Target / clutter geometry and the derived transmit-side matrices.

    ``phi`` and ``omega`` are the target and clutter quadratic forms that
    enter the input SCNR; ``target_response`` is ``A(theta_0)`` and
    ``clutter_responses[q]`` is ``A(theta_q)``.
    """

    target_angle: float
    target_gain: complex
    clutter_angles: np.ndarray
    clutter_gains: np.ndarray
    phi: np.ndarray
    omega: np.ndarray
    target_response: np.ndarray
    clutter_responses: np.ndarray = field(repr=False)

    @property
    def n_clutter(self) -> int:
        return len(self.clutter_angles)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator for a 64-bit seed (see :data:`RNG_NAME`)."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    return np.random.Generator(np.random.PCG64(seed))


def complex_normal(rng: np.random.Generator, variance: float = 1.0, size=None):
    """Circularly-symmetric complex Gaussian samples via Box-Muller."""
    u1 = rng.random(size)
    u2 = rng.random(size)
    radius = np.sqrt(-2.0 * np.log1p(-u1))
    z = radius * np.exp(2j * np.pi * u2)
    return np.sqrt(variance / 2.0) * z


def _check_angle(theta: float) -> None:
    if not -HALF_PI <= theta <= HALF_PI:
        raise ValueError(f"angle {theta!r} rad outside [-pi/2, pi/2]")


def steering_vector(theta: float, n: int, spacing: float = 0.5) -> np.ndarray:
    """Unit-norm ULA response ``a(theta)`` of an ``n``-element array."""
    _check_angle(theta)
    if n < 1:
        raise ValueError("antenna count must be >= 1")
    m = np.arange(n)
    return np.exp(2j * np.pi * spacing * m * np.sin(theta)) / np.sqrt(n)


def radar_response(theta: float, n_tx: int, n_rx: int, spacing: float = 0.5) -> np.ndarray:
    """Two-way array response ``sqrt(N_r N_t) a_r(theta) a_t(theta)^H``."""
    a_t = steering_vector(theta, n_tx, spacing)
    a_r = steering_vector(theta, n_rx, spacing)
    return np.sqrt(n_rx * n_tx) * np.outer(a_r, a_t.conj())


def _saleh_valenzuela(gains, angles, n_tx, spacing=0.5) -> np.ndarray:
    a = np.stack([steering_vector(t, n_tx, spacing) for t in angles], axis=1)
    return np.sqrt(n_tx / len(gains)) * (a @ np.asarray(gains))


def _draw_sector_center(rng: np.random.Generator) -> float:
    half = SECTOR_WIDTH / 2 + NLOS_SPREAD
    return float(-HALF_PI + half + rng.random() * (np.pi - 2 * half))


def generate_user_channel(
    cfg: SystemConfig,
    profile: CorrelationProfile | str,
    rng: np.random.Generator,
    sector_center: float | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw one Saleh-Valenzuela user channel.

    Path 0 is the LoS path.  Under ``HighCorrelation`` the LoS angle lies in a
    10 degree sector around ``sector_center`` (drawn from ``rng`` when not
    given) and the NLoS paths within 5 degrees of it; under
    ``LowCorrelation`` every angle is uniform on [-pi/2, pi/2].

    Returns
    -------
    gains, angles, h : ndarray
        Complex path gains (pathloss included), departure angles in radians
        and the resulting channel vector of length ``cfg.n_tx``.
    """
    profile = CorrelationProfile.parse(profile)
    n_paths = int(cfg.n_paths)
    amplitude = 10.0 ** (cfg.pathloss_db / 20.0)
    nlos_var = 10.0 ** (cfg.nlos_gain_db / 10.0)

    if profile is CorrelationProfile.HIGH:
        if sector_center is None:
            sector_center = _draw_sector_center(rng)
        los = sector_center + (rng.random() - 0.5) * SECTOR_WIDTH
        nlos = los + (rng.random(n_paths - 1) * 2.0 - 1.0) * NLOS_SPREAD
        angles = np.concatenate([[los], nlos])
    else:
        angles = -HALF_PI + rng.random(n_paths) * np.pi
    angles = np.clip(angles, -HALF_PI, HALF_PI)

    variances = np.full(n_paths, nlos_var)
    variances[0] = 1.0
    gains = amplitude * complex_normal(rng, 1.0, n_paths) * np.sqrt(variances)
    h = _saleh_valenzuela(gains, angles, cfg.n_tx, cfg.antenna_spacing_wavelengths)
    return gains, angles, h


def generate_channel_set(
    cfg: SystemConfig, profile: CorrelationProfile | str, rng: np.random.Generator
) -> ChannelSet:
    profile = CorrelationProfile.parse(profile)
    center = _draw_sector_center(rng) if profile is CorrelationProfile.HIGH else None
    gains, angles, chans = [], [], []
    for _ in range(cfg.n_users):
        g, a, h = generate_user_channel(cfg, profile, rng, sector_center=center)
        gains.append(g)
        angles.append(a)
        chans.append(h)
    return ChannelSet(np.stack(chans), gains, angles, profile)


def _hermitian(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def build_radar_scene(
    target_angle: float,
    target_gain: complex,
    clutter: Sequence[tuple[float, complex]],
    cfg: SystemConfig,
) -> RadarScene:
    """Assemble ``Phi`` and ``Omega`` for one target and ``Q`` clutter patches.

    ``clutter`` is a sequence of ``(angle, complex gain)`` pairs and may be
    empty, in which case ``Omega`` is the zero matrix.
    """
    spacing = cfg.antenna_spacing_wavelengths
    a0 = radar_response(target_angle, cfg.n_tx, cfg.n_rx, spacing)
    phi = _hermitian(abs(target_gain) ** 2 * (a0.conj().T @ a0))

    omega = np.zeros((cfg.n_tx, cfg.n_tx), dtype=complex)
    responses = []
    for angle, gain in clutter:
        aq = radar_response(angle, cfg.n_tx, cfg.n_rx, spacing)
        omega += abs(gain) ** 2 * (aq.conj().T @ aq)
        responses.append(aq)
    omega = _hermitian(omega)
    clutter_responses = (np.stack(responses) if responses
                         else np.zeros((0, cfg.n_rx, cfg.n_tx), dtype=complex))

    return RadarScene(
        target_angle=float(target_angle),
        target_gain=complex(target_gain),
        clutter_angles=np.array([float(a) for a, _ in clutter]),
        clutter_gains=np.array([complex(g) for _, g in clutter]),
        phi=phi,
        omega=omega,
        target_response=a0,
        clutter_responses=clutter_responses,
    )


DEFAULT_CLUTTER_DEG = (-50.0, -20.0, 40.0)


def default_radar_scene(cfg: SystemConfig) -> RadarScene:
    """Target at broadside, three unit-RCS clutter patches at -50, -20, +40 deg."""
    clutter = [(np.deg2rad(a), 1.0) for a in DEFAULT_CLUTTER_DEG]
    return build_radar_scene(0.0, 1.0, clutter, cfg)
