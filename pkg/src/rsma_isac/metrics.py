"""Communication and sensing metrics for a hybrid RSMA precoder.

Effective precoders are ``N_t x (K+1)`` matrices whose column 0 carries the
common stream and column ``k`` the private stream of user ``k``.  Channels are
stored row-wise, so ``H.conj() @ P`` gives every ``h_k^H p_j`` at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import ChannelSet, RadarScene, SystemConfig

__all__ = [
    "G_CONST",
    "POWER_RTOL",
    "RATE_ATOL",
    "SCNR_RTOL",
    "UNIT_MODULUS_ATOL",
    "HbfSolution",
    "MetricReport",
    "effective_gains",
    "sinr",
    "rates_and_wsr",
    "mmse_errors",
    "awmse",
    "awmse_optimal_value",
    "clutter_covariance",
    "output_scnr",
    "mvdr_receive",
    "average_output_scnr",
    "scnr_input",
    "evaluate",
]

#: Optimal augmented WMSE offset: min AWMSE = G_CONST - rate.
G_CONST = 1.0 / np.log(2.0) + np.log2(np.log(2.0))

POWER_RTOL = 1e-8
RATE_ATOL = 1e-6
SCNR_RTOL = 1e-6
UNIT_MODULUS_ATOL = 1e-10


@dataclass
class HbfSolution:
    """Analog precoder, digital precoder and common-rate split.

    ``fully_digital`` marks the reference solutions whose analog stage is the
    identity; those are exempt from the unit-modulus check.
    """

    analog: np.ndarray
    digital: np.ndarray
    common_rates: np.ndarray
    fully_digital: bool = False

    @property
    def precoder(self) -> np.ndarray:
        return self.analog @ self.digital

    @property
    def n_users(self) -> int:
        return self.digital.shape[1] - 1


@dataclass
class MetricReport:
    sinr_common: np.ndarray
    sinr_private: np.ndarray
    rate_common: np.ndarray
    rate_private: np.ndarray
    common_rate_cap: float
    wsr: float
    scnr_in: float = float("nan")
    scnr_out: float = float("nan")
    feasible: bool = False
    violations: tuple = ()


def _channels(channels) -> np.ndarray:
    h = channels.channels if isinstance(channels, ChannelSet) else np.asarray(channels)
    if not np.all(np.isfinite(h)):
        raise ValueError("channel entries must be finite")
    return np.atleast_2d(h)


def _precoder(sol) -> np.ndarray:
    return sol.precoder if isinstance(sol, HbfSolution) else np.asarray(sol)


def effective_gains(precoder: np.ndarray, channels) -> np.ndarray:
    """``G[k, j] = h_k^H p_j`` for every user ``k`` and stream ``j``."""
    h = _channels(channels)
    p = np.asarray(precoder)
    if p.shape[0] != h.shape[1]:
        raise ValueError(f"precoder has {p.shape[0]} rows, channels have {h.shape[1]} antennas")
    if p.shape[1] != h.shape[0] + 1:
        raise ValueError(f"precoder needs K+1={h.shape[0] + 1} columns, got {p.shape[1]}")
    return h.conj() @ p


def _powers(precoder, channels, noise):
    """Signal powers, private interference and noise per user.

    Returns ``(common, own, interference)`` where ``interference[k]`` sums the
    private streams ``i != k`` received at user ``k``.
    """
    g2 = np.abs(effective_gains(precoder, channels)) ** 2
    k = g2.shape[0]
    private = g2[:, 1:]
    own = np.diagonal(private).copy()
    mask = ~np.eye(k, dtype=bool)
    interference = np.array([private[i, mask[i]].sum() for i in range(k)])
    return g2[:, 0], own, interference


def sinr(sol, channels, cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """Common-stream and private-stream SINR of every user."""
    common, own, interf = _powers(_precoder(sol), channels, cfg.noise)
    noise = cfg.noise
    return common / (own + interf + noise), own / (interf + noise)


def rates_and_wsr(sol: HbfSolution, channels, cfg: SystemConfig) -> MetricReport:
    """Rates, common-rate cap and weighted sum rate (communication part only)."""
    g_c, g_p = sinr(sol, channels, cfg)
    r_c = np.log2(1.0 + g_c)
    r_p = np.log2(1.0 + g_p)
    cap = float(r_c.min())
    c = np.asarray(sol.common_rates, dtype=float)
    wsr = float(np.sum(cfg.weights * (c + r_p)))
    bad = []
    if np.any(c < 0):
        bad.append("common_rate_negative")
    if c.sum() > cap + RATE_ATOL:
        bad.append("common_rate_sum")
    return MetricReport(g_c, g_p, r_c, r_p, cap, wsr, feasible=not bad, violations=tuple(bad))


def mmse_errors(precoder, channels, cfg: SystemConfig) -> tuple[np.ndarray, np.ndarray]:
    """MMSE of the common and private stream estimates at every user.

    Works on any effective precoder (``F_RF F_D``, ``X`` or ``Z_k``).  The
    errors are formed as (interference + noise) / total to avoid cancelling
    ``T - |signal|^2``.
    """
    common, own, interf = _powers(precoder, channels, cfg.noise)
    noise = cfg.noise
    t_p = own + interf + noise
    t_c = common + t_p
    return t_p / t_c, (interf + noise) / t_p


def awmse(precoder, channels, cfg: SystemConfig, weights, equalizers):
    """Augmented weighted MSEs ``u * mse(w) - log2(u)`` of both streams.

    ``weights`` and ``equalizers`` are ``(common, private)`` pairs of
    length-``K`` arrays.  The equalizer multiplies the received sample.
    """
    g = effective_gains(precoder, channels)
    common, own, interf = _powers(precoder, channels, cfg.noise)
    noise = cfg.noise
    t_p = own + interf + noise
    t_c = common + t_p
    (u_c, u_p), (w_c, w_p) = weights, equalizers
    k = np.arange(g.shape[0])
    mse_c = np.abs(w_c) ** 2 * t_c - 2.0 * np.real(w_c * g[:, 0]) + 1.0
    mse_p = np.abs(w_p) ** 2 * t_p - 2.0 * np.real(w_p * g[k, k + 1]) + 1.0
    return u_c * mse_c - np.log2(u_c), u_p * mse_p - np.log2(u_p)


def awmse_optimal_value(rate):
    """Minimum augmented WMSE for a stream achieving ``rate`` bit/s/Hz."""
    rate = np.asarray(rate, dtype=float)
    if np.any(rate < 0):
        raise ValueError("rate must be nonnegative")
    out = G_CONST - rate
    return float(out) if out.ndim == 0 else out


def clutter_covariance(precoder, scene: RadarScene) -> np.ndarray:
    """``R_c = sum_q |xi_q|^2 A_q P P^H A_q^H`` (receive side)."""
    p = np.asarray(precoder)
    n_rx = scene.target_response.shape[0]
    r = np.zeros((n_rx, n_rx), dtype=complex)
    for gain, a in zip(scene.clutter_gains, scene.clutter_responses):
        ap = a @ p
        r += abs(gain) ** 2 * (ap @ ap.conj().T)
    return r


def _interference_matrix(precoder, scene, cfg):
    n_rx = scene.target_response.shape[0]
    return clutter_covariance(precoder, scene) + cfg.echo_noise_power * np.eye(n_rx)


def output_scnr(v, x, precoder, scene: RadarScene, cfg: SystemConfig) -> float:
    """Filtered-echo SCNR for receive filter ``v`` and transmit sample ``x``."""
    m = _interference_matrix(precoder, scene, cfg)
    num = abs(scene.target_gain * (v.conj() @ scene.target_response @ x)) ** 2
    return float(num / np.real(v.conj() @ m @ v))


def mvdr_receive(x, precoder, scene: RadarScene, cfg: SystemConfig):
    """MVDR receive filter for transmit sample ``x`` and its output SCNR.

    The filter is normalised to be distortionless, ``v^H A(theta_0) x = 1``.
    """
    m = _interference_matrix(precoder, scene, cfg)
    ax = scene.target_response @ np.asarray(x)
    mi_ax = np.linalg.solve(m, ax)
    quad = np.real(ax.conj() @ mi_ax)
    v = mi_ax / quad
    return v, float(abs(scene.target_gain) ** 2 * quad)


def average_output_scnr(precoder, scene: RadarScene, cfg: SystemConfig) -> float:
    """Stream-averaged MVDR output SCNR ``tr(R_0 (R_c + sigma_z^2 I)^-1)``."""
    m = _interference_matrix(precoder, scene, cfg)
    ap = scene.target_response @ np.asarray(precoder)
    r0 = abs(scene.target_gain) ** 2 * (ap @ ap.conj().T)
    return float(np.real(np.trace(np.linalg.solve(m, r0))))


def scnr_input(precoder, scene: RadarScene, cfg: SystemConfig) -> float:
    """Cauchy-Schwarz lower bound on the average output SCNR."""
    p = np.asarray(precoder)
    num = np.real(np.sum(p.conj() * (scene.phi @ p)))
    den = np.real(np.sum(p.conj() * (scene.omega @ p)))
    n_rx = scene.target_response.shape[0]
    return float(max(num, 0.0) / (max(den, 0.0) + n_rx * cfg.echo_noise_power))


def evaluate(sol: HbfSolution, channels, scene: RadarScene, cfg: SystemConfig) -> MetricReport:
    """Full metric report with the feasibility verdict on every design constraint."""
    report = rates_and_wsr(sol, channels, cfg)
    p = sol.precoder
    report.scnr_in = scnr_input(p, scene, cfg)
    report.scnr_out = average_output_scnr(p, scene, cfg)
    bad = list(report.violations)
    power = float(np.sum(np.abs(p) ** 2))
    if power > cfg.power_budget * (1.0 + POWER_RTOL):
        bad.append("power")
    if not sol.fully_digital and np.max(np.abs(np.abs(sol.analog) - 1.0)) > UNIT_MODULUS_ATOL:
        bad.append("unit_modulus")
    if report.scnr_in < cfg.scnr_threshold * (1.0 - SCNR_RTOL):
        bad.append("scnr")
    report.violations = tuple(bad)
    report.feasible = not bad
    return report
