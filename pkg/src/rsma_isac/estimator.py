"""scikit-learn style front-end: fit a precoder to one channel matrix.

``fit`` takes the ``K x N_t`` complex channel matrix (row ``k`` is ``h_k``)
and designs the precoder; ``predict`` returns per-user rates achieved by the
fitted precoder on a channel matrix of the same shape and ``score`` their
weighted sum.  Hyperparameters use engineering units (dBm, dB, degrees) and
are converted once in ``fit``.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .baselines import SchemeKind, solve_scheme
from .metrics import MetricReport, evaluate, sinr
from .scene import SystemConfig, build_radar_scene, db_to_linear, dbm_to_mw
from .solver import SolverOptions, Status

__all__ = ["check_channel_matrix", "RsmaIsacBeamformer"]


def check_channel_matrix(H, n_tx: int | None = None, n_users: int | None = None) -> np.ndarray:
    """Validate a channel matrix and return it as a 2-D complex array.

    Parameters
    ----------
    H : array_like, shape (K, N_t)
        Row ``k`` is the channel of user ``k``.  A 1-D input is one user.
    n_tx, n_users : int, optional
        Required shape, e.g. the one seen during ``fit``.

    Raises
    ------
    ValueError
        On wrong dimensionality, empty input, non-finite entries or a shape
        mismatch.
    """
    arr = np.asarray(H)
    if arr.dtype == object or not np.issubdtype(arr.dtype, np.number):
        raise ValueError("channel matrix must be numeric")
    arr = np.atleast_2d(arr).astype(complex)
    if arr.ndim != 2:
        raise ValueError(f"channel matrix must be 2-D (K, N_t), got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("channel matrix is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("channel matrix contains non-finite entries")
    if n_users is not None and arr.shape[0] != n_users:
        raise ValueError(f"expected {n_users} users (rows), got {arr.shape[0]}")
    if n_tx is not None and arr.shape[1] != n_tx:
        raise ValueError(f"expected {n_tx} antennas (columns), got {arr.shape[1]}")
    return arr


class RsmaIsacBeamformer(BaseEstimator):
    """Joint common-rate allocation and hybrid beamforming for one channel draw.

    Parameters
    ----------
    scheme : {"RsmaHybrid", "SdmaHybrid", "RsmaFullyDigital"}
    n_rf : int
        RF chains; ignored by the fully-digital scheme.
    n_rx : int
        Radar receive antennas.
    power_dbm, noise_dbm, echo_noise_dbm : float
        Power budget, user noise power and echo noise power.
    scnr_threshold_db : float
        Input-SCNR threshold of the sensing constraint.
    user_weights : float or sequence, optional
        Rate weights; ``None`` means all ones.
    target_angle_deg, clutter_angles_deg : float, sequence of float
        Radar geometry; target and clutter have unit reflection gain.
    solver_options : dict, optional
        Keyword arguments of :class:`~rsma_isac.solver.SolverOptions`.
    random_state : int
        Seed of the analog-precoder initialisation.

    Attributes
    ----------
    analog_, digital_, common_rates_ : ndarray
    precoder_ : ndarray, shape (N_t, K+1)
    report_ : MetricReport
        Rates, SCNRs and feasibility on the training channels.
    status_ : Status
    n_iter_ : tuple of int
        (outer iterations, inner sweeps).
    trace_ : list of TraceRecord
    """

    def __init__(self, scheme="RsmaHybrid", n_rf=8, n_rx=32, power_dbm=30.0, noise_dbm=-100.0,
                 echo_noise_dbm=-100.0, scnr_threshold_db=10.0, user_weights=None,
                 target_angle_deg=0.0, clutter_angles_deg=(-50.0, -20.0, 40.0),
                 solver_options=None, random_state=0):
        self.scheme = scheme
        self.n_rf = n_rf
        self.n_rx = n_rx
        self.power_dbm = power_dbm
        self.noise_dbm = noise_dbm
        self.echo_noise_dbm = echo_noise_dbm
        self.scnr_threshold_db = scnr_threshold_db
        self.user_weights = user_weights
        self.target_angle_deg = target_angle_deg
        self.clutter_angles_deg = clutter_angles_deg
        self.solver_options = solver_options
        self.random_state = random_state

    def _config(self, k: int, n_tx: int) -> SystemConfig:
        kind = SchemeKind.parse(self.scheme)
        return SystemConfig(
            n_tx=n_tx,
            n_rx=int(self.n_rx),
            n_rf=n_tx if kind is SchemeKind.RSMA_FULLY_DIGITAL else int(self.n_rf),
            n_users=k,
            power_budget=float(dbm_to_mw(self.power_dbm)),
            user_noise_power=float(dbm_to_mw(self.noise_dbm)),
            echo_noise_power=float(dbm_to_mw(self.echo_noise_dbm)),
            user_weights=1.0 if self.user_weights is None else self.user_weights,
            scnr_threshold=float(db_to_linear(self.scnr_threshold_db)),
            fully_digital=kind is SchemeKind.RSMA_FULLY_DIGITAL,
        )

    def fit(self, H, y=None):
        """Design the precoder for channel matrix ``H`` (shape ``(K, N_t)``)."""
        H = check_channel_matrix(H)
        k, n_tx = H.shape
        cfg = self._config(k, n_tx)
        clutter = [(np.deg2rad(a), 1.0) for a in np.atleast_1d(self.clutter_angles_deg)]
        scene = build_radar_scene(np.deg2rad(self.target_angle_deg), 1.0, clutter, cfg)
        opts = SolverOptions(**(self.solver_options or {}))
        result = solve_scheme(self.scheme, H, scene, cfg, opts, seed=int(self.random_state))
        sol = result.solution
        self.config_ = cfg
        self.scene_ = scene
        self.solution_ = sol
        self.analog_ = sol.analog
        self.digital_ = sol.digital
        self.common_rates_ = sol.common_rates
        self.precoder_ = sol.precoder
        self.status_ = result.status
        self.n_iter_ = (result.outer_iters, result.inner_iters_total)
        self.trace_ = result.trace
        self.report_: MetricReport = evaluate(sol, H, scene, cfg)
        self.n_features_in_ = n_tx
        return self

    def _check_fitted(self):
        if not hasattr(self, "solution_"):
            raise NotFittedError("call fit before using this estimator")

    def transform(self, H) -> np.ndarray:
        """Effective gains ``h_k^H p_j``, shape ``(K, K+1)``."""
        self._check_fitted()
        H = check_channel_matrix(H, self.n_features_in_, self.config_.n_users)
        return H.conj() @ self.precoder_

    def predict(self, H) -> np.ndarray:
        """Per-user rate ``C_k + R_k`` of the fitted precoder on ``H``.

        The common rates are the fitted split, so on channels other than the
        training ones the split may exceed what the common stream delivers;
        ``score`` reports the same sum without checking it.
        """
        self._check_fitted()
        H = check_channel_matrix(H, self.n_features_in_, self.config_.n_users)
        _, g_p = sinr(self.solution_, H, self.config_)
        return np.asarray(self.common_rates_) + np.log2(1.0 + g_p)

    def score(self, H, y=None) -> float:
        """Weighted sum rate of the fitted precoder on ``H``."""
        return float(np.sum(self.config_.weights * self.predict(H)))

    @property
    def converged_(self) -> bool:
        self._check_fitted()
        return self.status_ is Status.CONVERGED and self.report_.feasible

