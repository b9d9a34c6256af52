"""WMMSE-PDD solver for joint common-rate allocation and hybrid beamforming.

The problem is split with consensus copies ``X = F_RF F_D``, ``Y = X`` (sensing),
``Z_k = X`` (common-stream decodability) and ``q_k = c`` and solved by a
penalty-dual-decomposition double loop:

* the inner loop runs block coordinate descent over the augmented Lagrangian
  (equalizers, weights, {Y, Z_k, q_k, F_D}, {c, F_RF}, X) with the sensing
  constraint linearised around the latest ``Y``;
* the outer loop either updates the multipliers (when the constraint
  violation dropped by the required factor) or shrinks the penalty.

Every block update is a closed form, possibly with one scalar multiplier
found by bracketing + bisection.

The solver works on a :class:`Problem`, which by default is a normalised copy
of the instance: transmit power 1 and unit user noise (channels rescaled by
``sqrt(P_T) / sigma_k``), so the penalty schedule and tolerances do not
depend on the 13 decades between the noise floor and the power budget.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .metrics import G_CONST, HbfSolution
from .scene import ChannelSet, ConfigError, RadarScene, SystemConfig, make_rng

__all__ = [
    "SolverError",
    "InfeasibleSensing",
    "BisectionBracketFailure",
    "RankDeficientAnalog",
    "Status",
    "SolverOptions",
    "Problem",
    "SolverState",
    "TraceRecord",
    "SolveResult",
    "initialize",
    "initialize_aligned",
    "start_state",
    "warm_start_from",
    "al_objective",
    "update_equalizers",
    "update_weights",
    "update_Y",
    "update_Z_and_q",
    "update_FD",
    "update_c",
    "update_FRF",
    "update_X",
    "inner_loop",
    "constraint_violation",
    "update_multipliers",
    "finalize",
    "outer_loop",
    "solve",
    "solution_wsr",
]

LN2 = np.log(2.0)


class SolverError(RuntimeError):
    pass


class InfeasibleSensing(SolverError):
    """The SCNR threshold cannot be met from the current linearisation point."""


class BisectionBracketFailure(SolverError):
    """A constraint residual did not change sign inside the multiplier bracket."""


class RankDeficientAnalog(SolverError):
    """The analog precoder is numerically rank deficient."""


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    NOT_CONVERGED = "NotConverged"
    INFEASIBLE_SENSING = "InfeasibleSensing"


@dataclass(frozen=True)
class SolverOptions:
    inner_tol: float = 1e-4
    outer_tol: float = 1e-5
    max_inner: int = 30
    max_outer: int = 200
    penalty_init: float = 3e-2
    penalty_shrink: float = 0.8
    violation_shrink: float = 0.9
    bisection_tol: float = 1e-8
    bisection_max_iter: int = 200
    rf_phase_sweeps: int = 3
    bracket_cap: float = 1e12
    warm_start: bool = True
    aligned_start: bool = True
    common_seed_fractions: tuple = (0.05, 0.3)

    def __post_init__(self):
        object.__setattr__(self, "common_seed_fractions",
                           tuple(float(b) for b in np.atleast_1d(self.common_seed_fractions)))
        if not self.common_seed_fractions or not all(0 < b < 1 for b in self.common_seed_fractions):
            raise ConfigError("common_seed_fractions", "must be non-empty with entries in (0, 1)")
        for key in ("inner_tol", "outer_tol", "bisection_tol", "penalty_init"):
            if not getattr(self, key) > 0:
                raise ConfigError(key, "must be > 0")
        if not 0 < self.penalty_shrink < 1:
            raise ConfigError("penalty_shrink", "must lie in (0, 1)")
        if not 0 < self.violation_shrink < 1:
            raise ConfigError("violation_shrink", "must lie in (0, 1)")
        for key in ("max_inner", "max_outer", "bisection_max_iter"):
            if int(getattr(self, key)) < 1:
                raise ConfigError(key, "must be >= 1")
        if int(self.rf_phase_sweeps) < 0:
            raise ConfigError("rf_phase_sweeps", "must be >= 0")


@dataclass
class Problem:
    """Numerical data of one instance as seen by the block updates.

    ``channels`` holds ``h_k`` row-wise; ``echo_noise`` is the total receive
    noise ``N_r sigma_z^2`` in the input-SCNR denominator.  ``common`` turns
    the common stream on (RSMA) or pins it to zero (SDMA).  ``scale`` maps
    the problem's precoders back to physical units.
    """

    channels: np.ndarray
    noise: np.ndarray
    weights: np.ndarray
    power: float
    phi: np.ndarray
    omega: np.ndarray
    gamma0: float
    echo_noise: float
    n_rf: int
    common: bool = True
    fully_digital: bool = False
    scale: float = 1.0
    _omega_eig: tuple | None = field(default=None, repr=False)

    @classmethod
    def from_instance(
        cls,
        channels: ChannelSet | np.ndarray,
        scene: RadarScene,
        cfg: SystemConfig,
        common: bool = True,
        fully_digital: bool | None = None,
        normalize: bool = True,
    ) -> "Problem":
        h = channels.channels if isinstance(channels, ChannelSet) else np.asarray(channels)
        h = np.atleast_2d(h).astype(complex)
        noise = cfg.noise.astype(float)
        power = float(cfg.power_budget)
        echo = scene.target_response.shape[0] * cfg.echo_noise_power
        fully_digital = cfg.fully_digital if fully_digital is None else fully_digital
        scale = 1.0
        if normalize and np.isfinite(power):
            scale = np.sqrt(power)
            h = h * (scale / np.sqrt(noise))[:, None]
            noise = np.ones_like(noise)
            echo = echo / power
            power = 1.0
        n_tx = h.shape[1]
        return cls(
            channels=h,
            noise=noise,
            weights=cfg.weights.astype(float),
            power=power,
            phi=scene.phi,
            omega=scene.omega,
            gamma0=float(cfg.scnr_threshold),
            echo_noise=float(echo),
            n_rf=n_tx if fully_digital else int(cfg.n_rf),
            common=common,
            fully_digital=fully_digital,
            scale=float(scale),
        )

    @property
    def n_users(self) -> int:
        return self.channels.shape[0]

    @property
    def n_tx(self) -> int:
        return self.channels.shape[1]

    @property
    def omega_eig(self):
        if self._omega_eig is None:
            self._omega_eig = np.linalg.eigh(self.omega)
        return self._omega_eig

    def target_direction(self) -> np.ndarray:
        """Unit vector spanning the range of the rank-one ``Phi``."""
        _, vecs = np.linalg.eigh(self.phi)
        return vecs[:, -1]


@dataclass
class TraceRecord:
    outer: int
    inner: int
    al_objective: float
    violation: float
    rho: float
    wsr: float
    scnr_in: float


@dataclass
class SolverState:
    """All PDD variables, multipliers and the penalty.

    ``Z``/``q`` and their multipliers have a leading axis of length ``K`` for
    RSMA and length 0 for SDMA, where the common-stream blocks are absent.
    """

    analog: np.ndarray
    digital: np.ndarray
    common_rates: np.ndarray
    eq_common: np.ndarray
    eq_private: np.ndarray
    wt_common: np.ndarray
    wt_private: np.ndarray
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    q: np.ndarray
    lam_y: np.ndarray
    lam_z: np.ndarray
    lam_f: np.ndarray
    lam_q: np.ndarray
    rho: float
    anchor: np.ndarray
    trace: list = field(default_factory=list)

    def copy(self) -> "SolverState":
        arrays = {
            k: (v.copy() if isinstance(v, np.ndarray) else v)
            for k, v in self.__dict__.items() if k != "trace"
        }
        return SolverState(**arrays, trace=list(self.trace))


@dataclass
class SolveResult:
    solution: HbfSolution
    status: Status
    state: SolverState
    violation: float
    outer_iters: int
    inner_iters_total: int
    message: str = ""

    @property
    def trace(self) -> list:
        return self.state.trace


# ---------------------------------------------------------------------------
# small helpers


def _gains(precoder, problem):
    return problem.channels.conj() @ precoder


def _stream_powers(precoder, problem):
    """(|h^H p_c|^2, |h^H p_k|^2, private interference) per user."""
    g2 = np.abs(_gains(precoder, problem)) ** 2
    k = g2.shape[0]
    own = g2[np.arange(k), np.arange(k) + 1]
    interf = np.array([np.sum(np.delete(g2[i, 1:], i)) for i in range(k)])
    return g2[:, 0], own, interf


def _fro2(m) -> float:
    return float(np.real(np.vdot(m, m)))


def _nonneg_root(resid, opts: SolverOptions, exc, what: str, scale: float | None = None) -> float:
    """Smallest ``v >= 0`` with ``resid(v) <= 0`` for a non-increasing residual.

    Brackets over ``{0, 1, 2, 4, ...}`` up to ``opts.bracket_cap`` and bisects
    until the bracket is ``bisection_tol`` narrow (relative), or until the
    residual is within ``bisection_tol * scale`` of zero when ``scale`` is
    given.  Returns the feasible end of the bracket.
    """
    if resid(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while True:
        r_hi = resid(hi)
        if r_hi <= 0.0:
            break
        lo = hi
        hi *= 2.0
        if hi > opts.bracket_cap:
            raise exc(f"{what}: residual still {r_hi:.3e} > 0 at multiplier {lo:.3e}")
    for _ in range(opts.bisection_max_iter):
        if hi - lo <= opts.bisection_tol * hi:
            break
        if scale is not None and -r_hi <= opts.bisection_tol * scale:
            break
        mid = 0.5 * (lo + hi)
        r_mid = resid(mid)
        if r_mid > 0.0:
            lo = mid
        else:
            hi, r_hi = mid, r_mid
    return hi


# ---------------------------------------------------------------------------
# initialisation


def _zero_state(problem: Problem, analog, digital, rho) -> SolverState:
    k, n_tx = problem.n_users, problem.n_tx
    kz = k if problem.common else 0
    X = analog @ digital
    return SolverState(
        analog=analog,
        digital=digital,
        common_rates=np.zeros(k),
        eq_common=np.zeros(k, dtype=complex),
        eq_private=np.zeros(k, dtype=complex),
        wt_common=np.full(k, 1.0 / LN2),
        wt_private=np.full(k, 1.0 / LN2),
        X=X.copy(),
        Y=X.copy(),
        Z=np.repeat(X[None], kz, axis=0),
        q=np.zeros((kz, k)),
        lam_y=np.zeros_like(X),
        lam_z=np.zeros((kz, n_tx, k + 1), dtype=complex),
        lam_f=np.zeros_like(X),
        lam_q=np.zeros((kz, k)),
        rho=float(rho),
        anchor=X.copy(),
    )


def sensing_anchor(problem: Problem) -> np.ndarray:
    """Budget-limited anchor with every active column along the target direction."""
    a0 = problem.target_direction()
    cols = np.ones(problem.n_users + 1)
    if not problem.common:
        cols[0] = 0.0
    cols *= np.sqrt(problem.power / cols.sum())
    return np.outer(a0, cols)


def initialize(problem: Problem, opts: SolverOptions, rng: np.random.Generator) -> SolverState:
    """Random-phase analog precoder with a matched-filter digital stage.

    ``Y`` starts as the sensing projection of ``X`` computed from the target
    anchor, so the linearised sensing constraint holds from the first sweep.
    """
    n_tx, k = problem.n_tx, problem.n_users
    if problem.fully_digital:
        analog = np.eye(n_tx, dtype=complex)
    else:
        analog = np.exp(2j * np.pi * rng.random((n_tx, problem.n_rf)))
    h = problem.channels.T
    targets = np.column_stack([h.mean(axis=1), h])
    if not problem.common:
        targets[:, 0] = 0.0
    digital = analog.conj().T @ targets
    norms = np.linalg.norm(digital, axis=0)
    digital = np.divide(digital, norms, out=np.zeros_like(digital), where=norms > 0)
    total = _fro2(analog @ digital)
    if np.isfinite(problem.power) and total > 0:
        digital *= np.sqrt(problem.power / total)
    return start_state(problem, opts, analog, digital)


def initialize_aligned(problem: Problem, opts: SolverOptions, rng: np.random.Generator) -> SolverState:
    """Analog columns phase-aligned with the user channels (then their centroid).

    Remaining RF chains get random phases.  The digital stage is the
    least-squares fit of ``[centroid, h_1 .. h_K]`` at full power.  Unlike
    the random start, the analog subspace already contains close to the
    equal-gain beam of every user, which the WMMSE updates cannot find on
    their own at high SNR (the rate gradient vanishes like ``1 / SNR``).
    """
    n_tx, k, n_rf = problem.n_tx, problem.n_users, problem.n_rf
    h = problem.channels
    if problem.fully_digital:
        analog = np.eye(n_tx, dtype=complex)
    else:
        cols = [np.exp(1j * np.angle(h[i])) for i in range(k)]
        if k > 1:
            cols.append(np.exp(1j * np.angle(h.mean(axis=0))))
        cols = cols[:n_rf]
        cols += [np.exp(2j * np.pi * rng.random(n_tx)) for _ in range(n_rf - len(cols))]
        analog = np.column_stack(cols)
    targets = np.column_stack([h.mean(axis=0), h.T])
    if not problem.common:
        targets[:, 0] = 0.0
    digital = np.linalg.lstsq(analog, targets, rcond=None)[0]
    total = _fro2(analog @ digital)
    if np.isfinite(problem.power) and total > 0:
        digital *= np.sqrt(problem.power / total)
    return start_state(problem, opts, analog, digital)


def start_state(problem: Problem, opts: SolverOptions, analog, digital) -> SolverState:
    """Consensus state at ``(F_RF, F_D)`` with ``Y`` projected onto the sensing set."""
    state = _zero_state(problem, analog, digital, opts.penalty_init)
    if np.isfinite(problem.power):
        state.anchor = sensing_anchor(problem)
    state.Y = update_Y(state, problem, opts)
    state.anchor = state.Y.copy()
    return state


# ---------------------------------------------------------------------------
# objective


def private_awmse(state: SolverState, problem: Problem) -> np.ndarray:
    """AWMSE of every private stream at ``X`` with the current ``u``, ``w``."""
    g = _gains(state.X, problem)
    k = np.arange(problem.n_users)
    _, own, interf = _stream_powers(state.X, problem)
    t_p = own + interf + problem.noise
    w, u = state.eq_private, state.wt_private
    mse = np.abs(w) ** 2 * t_p - 2.0 * np.real(w * g[k, k + 1]) + 1.0
    return u * mse - np.log2(u)


def common_awmse(Z_k: np.ndarray, k: int, state: SolverState, problem: Problem) -> float:
    """AWMSE of the common stream at user ``k`` for the copy ``Z_k``."""
    g = problem.channels[k].conj() @ Z_k
    t_c = _fro2(g) + problem.noise[k]
    w, u = state.eq_common[k], state.wt_common[k]
    mse = abs(w) ** 2 * t_c - 2.0 * np.real(w * g[0]) + 1.0
    return float(u * mse - np.log2(u))


def penalty_term(state: SolverState) -> float:
    rho = state.rho
    total = _fro2(state.X - state.Y + rho * state.lam_y)
    total += _fro2(state.X[None] - state.Z + rho * state.lam_z)
    total += _fro2(state.X - state.analog @ state.digital + rho * state.lam_f)
    total += _fro2(state.common_rates[None] - state.q + rho * state.lam_q)
    return total / (2.0 * rho)


def al_objective(state: SolverState, problem: Problem) -> float:
    """Augmented-Lagrangian objective minimised by the inner loop."""
    eta = private_awmse(state, problem)
    return float(problem.weights @ eta - problem.weights @ state.common_rates + penalty_term(state))


# ---------------------------------------------------------------------------
# block updates


def update_equalizers(state: SolverState, problem: Problem):
    """MMSE equalizers, common ones from ``Z_k`` and private from ``X``."""
    k = problem.n_users
    g = _gains(state.X, problem)
    _, own, interf = _stream_powers(state.X, problem)
    w_p = np.conj(g[np.arange(k), np.arange(k) + 1]) / (own + interf + problem.noise)
    w_c = np.zeros(k, dtype=complex)
    for i in range(state.Z.shape[0]):
        gz = problem.channels[i].conj() @ state.Z[i]
        w_c[i] = np.conj(gz[0]) / (_fro2(gz) + problem.noise[i])
    return w_c, w_p


def update_weights(state: SolverState, problem: Problem):
    """Weights ``1 / (e_mmse ln 2)``."""
    k = problem.n_users
    _, own, interf = _stream_powers(state.X, problem)
    t_p = own + interf + problem.noise
    u_p = t_p / ((interf + problem.noise) * LN2)
    u_c = np.full(k, 1.0 / LN2)
    for i in range(state.Z.shape[0]):
        gz = problem.channels[i].conj() @ state.Z[i]
        rest = _fro2(gz[1:]) + problem.noise[i]
        u_c[i] = (abs(gz[0]) ** 2 + rest) / (rest * LN2)
    return u_c, u_p


def update_Y(state: SolverState, problem: Problem, opts: SolverOptions) -> np.ndarray:
    """Project ``X + rho Lambda_1`` onto the linearised SCNR constraint.

    The constraint is ``gamma0 (tr(Y^H Omega Y) + N_r sigma_z^2) <=
    2 Re tr(Y_t^H Phi Y) - tr(Y_t^H Phi Y_t)`` with ``Y_t = state.anchor``.
    Raises :class:`InfeasibleSensing` when no multiplier up to the bracket cap
    satisfies it.
    """
    target = state.X + state.rho * state.lam_y
    if problem.gamma0 <= 0.0:
        return target
    w, vecs = problem.omega_eig
    w = np.clip(w, 0.0, None)
    d = vecs.conj().T @ target
    b = vecs.conj().T @ (problem.phi @ state.anchor)
    const = problem.gamma0 * problem.echo_noise + np.real(np.vdot(state.anchor, problem.phi @ state.anchor))

    def y_rot(v):
        return (d + v * b) / (1.0 + v * problem.gamma0 * w)[:, None]

    def resid(v):
        yr = y_rot(v)
        quad = np.sum(w[:, None] * np.abs(yr) ** 2)
        return problem.gamma0 * quad - 2.0 * np.real(np.vdot(b, yr)) + const

    v = _nonneg_root(resid, opts, InfeasibleSensing, "sensing constraint")
    return vecs @ y_rot(v)


def update_Z_and_q(state: SolverState, problem: Problem, opts: SolverOptions, k: int):
    """Closed-form ``Z_k``, ``q_k`` with the multiplier found by bisection.

    The decodability constraint ``1^T q_k + eta_ck(Z_k) <= g`` is evaluated
    with the current common-stream weight and equalizer of user ``k``.
    """
    h = problem.channels[k]
    hh = _fro2(h)
    base = state.X + state.rho * state.lam_z[k]
    base_q = state.common_rates + state.rho * state.lam_q[k]
    u, w = state.wt_common[k], state.eq_common[k]
    hb = h.conj() @ base
    n = problem.n_users

    def h_z(v):
        hm = hb.copy()
        hm[0] += v * u * np.conj(w) * hh
        return hm / (1.0 + v * u * abs(w) ** 2 * hh)

    def resid(v):
        g = h_z(v)
        t_c = _fro2(g) + problem.noise[k]
        eta = u * (abs(w) ** 2 * t_c - 2.0 * np.real(w * g[0]) + 1.0) - np.log2(u)
        return base_q.sum() - 0.5 * v * n + eta - G_CONST

    v = _nonneg_root(resid, opts, BisectionBracketFailure, f"common-rate constraint of user {k}")
    beta = v * u * abs(w) ** 2
    m = base.copy()
    m[:, 0] += v * u * np.conj(w) * h
    z = m - np.outer(beta * h, h.conj() @ m) / (1.0 + beta * hh)
    return z, base_q - 0.5 * v


def update_FD(state: SolverState, problem: Problem | None = None) -> np.ndarray:
    """Least-squares digital precoder ``F_RF^+ (X + rho Lambda_3)``."""
    target = state.X + state.rho * state.lam_f
    cond = np.linalg.cond(state.analog)
    if not cond < 1e12:
        raise RankDeficientAnalog(f"analog precoder condition number {cond:.3e}")
    return np.linalg.lstsq(state.analog, target, rcond=None)[0]


def update_c(state: SolverState, problem: Problem) -> np.ndarray:
    """Nonnegative common rates (closed form)."""
    kz = state.q.shape[0]
    if kz == 0:
        return np.zeros_like(state.common_rates)
    s = np.sum(state.q - state.rho * state.lam_q, axis=0) + state.rho * problem.weights
    return np.maximum(0.0, s / kz)


def update_FRF(state: SolverState, opts: SolverOptions) -> np.ndarray:
    """Element-wise phase coordinate descent on the analog precoder.

    Minimises ``tr(F^H F C) - 2 Re tr(F^H B)`` over unit-modulus ``F`` with
    ``C = F_D F_D^H`` and ``B = (X + rho Lambda_3) F_D^H``.  Rows decouple, so
    each column update is applied to all rows at once; this is identical to
    visiting the entries one by one.
    """
    f = state.analog.copy()
    fd = state.digital
    c = fd @ fd.conj().T
    b = (state.X + state.rho * state.lam_f) @ fd.conj().T
    for _ in range(int(opts.rf_phase_sweeps)):
        for j in range(f.shape[1]):
            s = b[:, j] - f @ c[:, j] + f[:, j] * c[j, j]
            moved = s != 0
            f[moved, j] = np.exp(1j * np.angle(s[moved]))
    return f


def update_X(state: SolverState, problem: Problem, opts: SolverOptions) -> np.ndarray:
    """Power-constrained quadratic update of ``X``.

    Column 0 only sees the penalty terms; the private columns share the
    matrix ``sum_k alpha_k u_k |w_k|^2 h_k h_k^H``, so a single eigendecomposition
    makes the power of ``X(v3)`` explicit and the multiplier ``v3`` is found by
    bisection.
    """
    rho = state.rho
    h = problem.channels
    kz = state.Z.shape[0]
    a = (kz + 2) / (2.0 * rho)
    alpha_u = problem.weights * state.wt_private
    quad = (h.T * (alpha_u * np.abs(state.eq_private) ** 2)) @ h.conj()
    quad = 0.5 * (quad + quad.conj().T)

    v_mat = np.zeros_like(state.X)
    v_mat[:, 1:] = h.T * (alpha_u * np.conj(state.eq_private))
    consensus = state.Y + state.Z.sum(axis=0) + state.analog @ state.digital
    duals = state.lam_y + state.lam_z.sum(axis=0) + state.lam_f
    v_mat += (consensus - rho * duals) / (2.0 * rho)
    if not problem.common:
        v_mat[:, 0] = 0.0

    mu, vecs = np.linalg.eigh(quad)
    mu = np.clip(mu, 0.0, None)
    v0 = v_mat[:, 0]
    vr = vecs.conj().T @ v_mat[:, 1:]
    p0 = _fro2(v0)
    pr = np.sum(np.abs(vr) ** 2, axis=1)

    def power(v):
        return p0 / (a + v) ** 2 + np.sum(pr / (mu + a + v) ** 2)

    v3 = 0.0
    if np.isfinite(problem.power):
        v3 = _nonneg_root(lambda v: power(v) - problem.power, opts, BisectionBracketFailure,
                          "power constraint", scale=problem.power)
    x = np.empty_like(state.X)
    x[:, 0] = v0 / (a + v3)
    x[:, 1:] = vecs @ (vr / (mu + a + v3)[:, None])
    return x


# ---------------------------------------------------------------------------
# loops


def constraint_violation(state: SolverState) -> float:
    """Largest consensus residual across the four equality groups."""
    parts = [
        np.linalg.norm(state.X - state.Y),
        np.linalg.norm(state.X - state.analog @ state.digital),
    ]
    if state.Z.shape[0]:
        parts.append(np.max(np.linalg.norm(state.X[None] - state.Z, axis=(1, 2))))
        parts.append(np.max(np.linalg.norm(state.common_rates[None] - state.q, axis=1)))
    return float(max(parts))


def _quick_metrics(state: SolverState, problem: Problem) -> tuple[float, float]:
    p = state.analog @ state.digital
    _, own, interf = _stream_powers(p, problem)
    wsr = float(problem.weights @ (state.common_rates + np.log2(1.0 + own / (interf + problem.noise))))
    num = np.real(np.vdot(p, problem.phi @ p))
    den = np.real(np.vdot(p, problem.omega @ p)) + problem.echo_noise
    return wsr, float(num / den)


def _sweep(state: SolverState, problem: Problem, opts: SolverOptions, log=None) -> None:
    def mark(name):
        if log is not None:
            log.append((name, al_objective(state, problem)))

    state.eq_common, state.eq_private = update_equalizers(state, problem)
    mark("equalizers")
    state.wt_common, state.wt_private = update_weights(state, problem)
    mark("weights")

    state.Y = update_Y(state, problem, opts)
    state.anchor = state.Y.copy()
    mark("Y")
    for k in range(state.Z.shape[0]):
        state.Z[k], state.q[k] = update_Z_and_q(state, problem, opts, k)
    mark("Z,q")
    state.digital = update_FD(state, problem)
    if not problem.common:
        state.digital[:, 0] = 0.0
    mark("F_D")

    if problem.common:
        state.common_rates = update_c(state, problem)
    mark("c")
    if not problem.fully_digital:
        state.analog = update_FRF(state, opts)
    mark("F_RF")

    state.X = update_X(state, problem, opts)
    mark("X")


def inner_loop(state: SolverState, problem: Problem, opts: SolverOptions, outer: int = 0,
               block_log: list | None = None) -> int:
    """Block coordinate descent on the augmented Lagrangian.

    Stops once the relative objective change falls below ``opts.inner_tol``
    or after ``opts.max_inner`` sweeps.  Appends ``(block, objective)`` pairs
    to ``block_log`` when one is given.  Returns the number of sweeps.
    """
    prev = al_objective(state, problem)
    if block_log is not None:
        block_log.append(("start", prev))
    t = 0
    while t < opts.max_inner:
        t += 1
        _sweep(state, problem, opts, block_log)
        obj = al_objective(state, problem)
        wsr, scnr = _quick_metrics(state, problem)
        state.trace.append(TraceRecord(outer, t, obj, constraint_violation(state), state.rho, wsr, scnr))
        if abs(prev - obj) <= opts.inner_tol * max(abs(prev), 1.0):
            break
        prev = obj
    return t


def update_multipliers(state: SolverState) -> None:
    rho = state.rho
    state.lam_y = state.lam_y + (state.X - state.Y) / rho
    state.lam_z = state.lam_z + (state.X[None] - state.Z) / rho
    state.lam_f = state.lam_f + (state.X - state.analog @ state.digital) / rho
    state.lam_q = state.lam_q + (state.common_rates[None] - state.q) / rho


def _max_ratio_direction(analog, problem: Problem, power: float):
    """Digital direction maximising the input SCNR inside ``range(analog)``."""
    a_phi = analog.conj().T @ problem.phi @ analog
    a_om = analog.conj().T @ problem.omega @ analog
    gram = analog.conj().T @ analog
    b = a_om + (problem.echo_noise / power) * gram
    b = 0.5 * (b + b.conj().T)
    # repeated analog columns make the Gram matrix singular
    b += 1e-12 * np.real(np.trace(b)) * np.eye(b.shape[0]) / b.shape[0]
    chol = np.linalg.cholesky(b)
    m = np.linalg.solve(chol, np.linalg.solve(chol, a_phi).conj().T).conj().T
    vals, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    d = np.linalg.solve(chol.conj().T, vecs[:, -1])
    d *= np.sqrt(power) / np.linalg.norm(analog @ d)
    return d, float(vals[-1])


def _scnr(p, problem):
    num = np.real(np.vdot(p, problem.phi @ p))
    den = np.real(np.vdot(p, problem.omega @ p)) + problem.echo_noise
    return float(num / den)


def finalize(analog, digital, common_rates, problem: Problem, opts: SolverOptions):
    """Project a PDD iterate onto the feasible set of the original problem.

    1. scale ``F_D`` into the power budget;
    2. if the input SCNR is short of the threshold, blend ``F_D`` towards the
       SCNR-maximising digital direction (the blend never raises the power);
    3. shrink the common rates uniformly until their sum fits under the
       weakest user's common-stream rate.

    Returns ``(digital, common_rates, sensing_ok)``.
    """
    digital = digital.copy()
    if not problem.common:
        digital[:, 0] = 0.0
    power = _fro2(analog @ digital)
    if np.isfinite(problem.power) and power > problem.power:
        digital *= np.sqrt(problem.power / power)
        power = _fro2(analog @ digital)
        # rounding can leave the product a few ulps above the budget
        while power > problem.power:
            digital *= 1.0 - 1e-15
            power = _fro2(analog @ digital)

    sensing_ok = True
    goal = problem.gamma0
    if goal > 0 and power > 0 and _scnr(analog @ digital, problem) < goal:
        d, best = _max_ratio_direction(analog, problem, power)
        if best < goal:
            sensing_ok = False
        else:
            cols = np.zeros(problem.n_users + 1)
            if problem.common:
                cols[0] = 1.0
            else:
                cols[1:] = 1.0 / np.sqrt(problem.n_users)
            # phase-align each target column with the current one so the blend
            # does not pass through a cancellation
            overlap = (analog @ d).conj() @ (analog @ digital)
            phase = np.exp(1j * np.angle(np.where(np.abs(overlap) > 0, overlap, 1.0)))
            target = np.outer(d, cols * phase)
            goal_hi = goal * (1.0 + 1e-9)
            lo, hi = 0.0, 1.0
            for _ in range(200):
                if hi - lo < 1e-14:
                    break
                mid = 0.5 * (lo + hi)
                if _scnr(analog @ ((1 - mid) * digital + mid * target), problem) >= goal_hi:
                    hi = mid
                else:
                    lo = mid
            digital = (1 - hi) * digital + hi * target

    c = np.maximum(np.asarray(common_rates, dtype=float), 0.0)
    if problem.common and c.sum() > 0:
        p = analog @ digital
        g2 = np.abs(_gains(p, problem)) ** 2
        cap = np.min(np.log2(1.0 + g2[:, 0] / (g2[:, 1:].sum(axis=1) + problem.noise)))
        if c.sum() > cap:
            c *= max(cap, 0.0) / c.sum()
            while c.sum() > cap and c.sum() > 0:
                c *= 1.0 - 1e-15
    else:
        c = np.zeros_like(c)
    return digital, c, sensing_ok


def outer_loop(problem: Problem, opts: SolverOptions | None = None, seed: int = 0,
               init: SolverState | None = None) -> SolveResult:
    """Run the WMMSE-PDD double loop and return a projected, feasible solution.

    The multipliers are updated when the constraint violation fell below
    ``violation_shrink`` times the previous one, otherwise the penalty is
    multiplied by ``penalty_shrink``.  The loop stops when the violation is at
    most ``opts.outer_tol`` or after ``opts.max_outer`` iterations.  A sensing
    constraint that cannot be met ends the run with status
    ``InfeasibleSensing``; the best iterate seen so far is still returned.
    """
    opts = opts or SolverOptions()
    inner_total = 0
    message = ""
    try:
        state = init.copy() if init is not None else initialize(problem, opts, make_rng(seed))
    except InfeasibleSensing as err:
        state = _zero_state(problem, *_fallback_start(problem, seed), opts.penalty_init)
        return _result(state, state, problem, opts, Status.INFEASIBLE_SENSING, 0, 0, str(err))

    h_prev = np.inf
    best, best_h = state.copy(), np.inf
    status = Status.NOT_CONVERGED
    m = 0
    while m < opts.max_outer:
        m += 1
        try:
            inner_total += inner_loop(state, problem, opts, outer=m)
        except InfeasibleSensing as err:
            status, message = Status.INFEASIBLE_SENSING, str(err)
            break
        except SolverError as err:
            # a failed bracket or a singular analog stage ends the run; the
            # best iterate so far is still projected and returned
            message = f"{type(err).__name__}: {err}"
            break
        h = constraint_violation(state)
        if h < best_h:
            best, best_h = state.copy(), h
        if h <= opts.outer_tol:
            status = Status.CONVERGED
            break
        if h <= opts.violation_shrink * h_prev:
            update_multipliers(state)
        else:
            state.rho *= opts.penalty_shrink
        h_prev = h

    final = state if status is Status.CONVERGED else best
    return _result(final, state, problem, opts, status, m, inner_total, message)


def _fallback_start(problem, seed):
    rng = make_rng(seed)
    analog = (np.eye(problem.n_tx, dtype=complex) if problem.fully_digital
              else np.exp(2j * np.pi * rng.random((problem.n_tx, problem.n_rf))))
    return analog, np.zeros((problem.n_rf, problem.n_users + 1), dtype=complex)


def _result(final: SolverState, last: SolverState, problem, opts, status, m, inner_total, message):
    digital, c, sensing_ok = finalize(final.analog, final.digital, final.common_rates, problem, opts)
    if not sensing_ok:
        status = Status.INFEASIBLE_SENSING
        message = "projected solution cannot reach the SCNR threshold"
    sol = HbfSolution(final.analog.copy(), digital * problem.scale, c,
                      fully_digital=problem.fully_digital)
    final = replace(final, trace=last.trace)
    return SolveResult(sol, status, final, constraint_violation(final), m, inner_total, message)


def warm_start_from(problem: Problem, opts: SolverOptions, analog, digital,
                    fraction: float | None = None) -> SolverState:
    """Second-stage start built from a first-stage solution.

    Without ``fraction`` the start is the solution itself.  Otherwise the
    private columns keep their directions with power scaled by
    ``1 - fraction`` and the common column takes the remaining power along
    the least-squares fit of the channel centroid.  A zero common column
    would be a fixed point of the equalizer/weight updates, hence the seed.
    """
    digital = np.array(digital, dtype=complex)
    if problem.common and fraction is not None:
        digital[:, 1:] *= np.sqrt(1.0 - fraction)
        col = np.linalg.lstsq(analog, problem.channels.mean(axis=0), rcond=None)[0]
        norm2 = _fro2(analog @ col)
        power = (problem.power if np.isfinite(problem.power)
                 else _fro2(analog @ digital) / (1.0 - fraction))
        digital[:, 0] = col * np.sqrt(fraction * power / norm2) if norm2 > 0 else 0.0
    return start_state(problem, opts, analog, digital)


def solve(channels, scene: RadarScene, cfg: SystemConfig, opts: SolverOptions | None = None,
          seed: int = 0, common: bool = True, fully_digital: bool | None = None) -> SolveResult:
    """Build the normalised problem for one instance and solve it.

    With ``opts.warm_start`` the solve is staged.  Stage one solves the
    private-streams-only problem from the random start and, with
    ``opts.aligned_start``, from :func:`initialize_aligned`.  Stage two
    restarts the requested problem (fresh multipliers and penalty) from every
    converged stage-one solution: once for SDMA, and once per entry of
    ``opts.common_seed_fractions`` for RSMA, see :func:`warm_start_from`.
    Stage-one solutions are feasible for both schemes, so the converged run
    with the largest weighted sum rate is returned.  Iteration counts of all
    runs are summed; a stage-one winner carries the trace of the first
    stage-two run.
    """
    opts = opts or SolverOptions()
    problem = Problem.from_instance(channels, scene, cfg, common=common, fully_digital=fully_digital)
    if not opts.warm_start:
        return outer_loop(problem, opts, seed=seed)
    private = replace(problem, common=False)
    firsts = [outer_loop(private, opts, seed=seed)]
    if firsts[0].status is Status.INFEASIBLE_SENSING:
        return outer_loop(problem, opts, seed=seed)
    if opts.aligned_start:
        try:
            init = initialize_aligned(private, opts, make_rng(seed))
        except InfeasibleSensing:
            pass
        else:
            firsts.append(outer_loop(private, opts, seed=seed, init=init))
    starts = [f for f in firsts if f.status is Status.CONVERGED] or firsts[:1]

    runs = []
    for first in starts:
        start = (first.state.analog, first.solution.digital / problem.scale)
        for fraction in (opts.common_seed_fractions if common else (None,)):
            try:
                init = warm_start_from(problem, opts, *start, fraction=fraction)
            except InfeasibleSensing:
                continue
            runs.append(outer_loop(problem, opts, seed=seed, init=init))
    if not runs:
        return outer_loop(problem, opts, seed=seed)
    outer = sum(r.outer_iters for r in firsts + runs)
    inner = sum(r.inner_iters_total for r in firsts + runs)

    def wsr(r):
        return solution_wsr(r.solution, problem)

    converged = [r for r in runs if r.status is Status.CONVERGED]
    best = max(converged, key=wsr) if converged else runs[0]
    done = [f for f in firsts if f.status is Status.CONVERGED]
    if done:
        first = max(done, key=wsr)
        if not converged or wsr(first) > wsr(best):
            best = replace(first, state=replace(first.state, trace=runs[0].state.trace))
    best.outer_iters, best.inner_iters_total = outer, inner
    return best


def solution_wsr(sol: HbfSolution, problem: Problem) -> float:
    """Weighted sum rate of a physical-unit solution on the (normalised) problem."""
    g2 = np.abs(_gains(sol.precoder / problem.scale, problem)) ** 2
    own = np.diagonal(g2[:, 1:])
    interf = g2[:, 1:].sum(axis=1) - own
    rates = np.log2(1.0 + own / (interf + problem.noise))
    return float(np.sum(problem.weights * (np.asarray(sol.common_rates) + rates)))
