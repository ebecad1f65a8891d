"""Covariance-scaled extended Kalman filter for IMU-only state estimation.

A scalar ``lam`` multiplies the propagated covariance, the innovation
covariance, the gain and the covariance reduction::

    x-  = x+ + f(x+, u) dt
    P-  = lam F P+ F^T + Q,           F = I + df/dx dt
    S   = lam H P- H^T + R
    K   = lam P- H^T S^-1
    x+  = x- + K (y - h(x-, u))
    P+  = P- - lam K H P-

With ``lam = 1`` these are the textbook EKF equations. Values below one
shrink the spread of the propagated covariance.

Jacobians are evaluated by central differences.
"""

from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix, check_positive, check_vector
from .dynamics import SystemParams, measurement, state_derivative
from .errors import NonFinite

DEFAULT_Q_DIAG = (1e-6, 1e-4, 1e-6, 1e-4, 1e-6, 1e-4)
DEFAULT_P0_DIAG = tuple(
    np.radians([1.0, 1.0, 15.0, 10.0, 15.0, 10.0]) ** 2
)


def default_r(sigma_phi_b=np.radians(0.5), sigma_dphi_b=np.radians(0.3), sigma_acc=0.05):
    """Measurement covariance from per-channel noise standard deviations."""
    return np.diag(
        [sigma_phi_b**2, sigma_dphi_b**2, sigma_acc**2, sigma_acc**2]
    )


@dataclass
class EstimatorConfig:
    """Filter tuning.

    ``x0 = None`` means "start at the origin"; scenarios normally replace it
    with an offset from the true initial state.
    """

    lam: float = 0.8
    Q: np.ndarray = field(default_factory=lambda: np.diag(DEFAULT_Q_DIAG))
    R: np.ndarray = field(default_factory=default_r)
    x0: Optional[np.ndarray] = None
    P0: np.ndarray = field(default_factory=lambda: np.diag(DEFAULT_P0_DIAG))
    fd_step: float = 1e-6

    def __post_init__(self):
        check_positive(self.lam, "lam")
        check_positive(self.fd_step, "fd_step")
        self.Q = check_matrix(self.Q, (6, 6), "Q")
        self.R = check_matrix(self.R, (4, 4), "R")
        self.P0 = check_matrix(self.P0, (6, 6), "P0")
        if self.x0 is not None:
            self.x0 = check_vector(self.x0, 6, "x0")
        for name, mat in (("Q", self.Q), ("P0", self.P0)):
            if not np.allclose(mat, mat.T) or np.min(np.linalg.eigvalsh(mat)) < -1e-12:
                raise ValueError(f"{name} must be symmetric positive semidefinite")
        if not np.allclose(self.R, self.R.T) or np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise ValueError("R must be symmetric positive definite")

    def initial_state(self):
        x0 = np.zeros(6) if self.x0 is None else self.x0.copy()
        return EstimatorState(x0, self.P0.copy(), np.zeros(4), self.R.copy())


class EstimatorState(NamedTuple):
    """Filter estimate, covariance and the last innovation statistics."""

    x: np.ndarray
    P: np.ndarray
    innovation: np.ndarray
    S: np.ndarray

    @property
    def nis(self):
        """Normalised innovation squared of the last update."""
        return float(self.innovation @ np.linalg.solve(self.S, self.innovation))


def jacobian_fd(func, point, step=1e-6):
    """Central-difference Jacobian of ``func`` at ``point``.

    Column ``j`` is ``(func(x + step e_j) - func(x - step e_j)) / (2 step)``,
    where the denominator is the step actually realised in floating point,
    ``(x_j + step) - (x_j - step)``. Dividing by the nominal ``2 step``
    would add a relative error of order ``ulp(x_j) / step`` to every entry.
    """
    point = np.asarray(point, dtype=float)
    f0 = np.asarray(func(point), dtype=float)
    jac = np.empty((f0.size, point.size))
    for j in range(point.size):
        up = point.copy()
        down = point.copy()
        up[j] += step
        down[j] -= step
        jac[:, j] = (np.asarray(func(up)) - np.asarray(func(down))) / (up[j] - down[j])
    if not np.all(np.isfinite(jac)):
        raise NonFinite("finite-difference Jacobian is not finite")
    return jac


def _symmetrize(mat):
    return 0.5 * (mat + mat.T)


def _model_functions(p, f_func, h_func):
    if f_func is None:
        f_func = partial(state_derivative, p=p)
    if h_func is None:
        h_func = partial(measurement, p=p)
    return f_func, h_func


def predict(est, u, dt, p, cfg, f_func=None):
    """Forward-Euler prediction with scaled covariance propagation.

    ``f_func(x, u)`` overrides the process model (defaults to the planar
    dynamics with parameters ``p``).
    """
    check_positive(dt, "dt")
    f_func, _ = _model_functions(p, f_func, None)
    u = np.asarray(u, dtype=float)
    x_post = est.x
    x_prior = x_post + f_func(x_post, u) * dt
    jac = jacobian_fd(lambda x: f_func(x, u), x_post, cfg.fd_step)
    F = np.eye(6) + jac * dt
    P_prior = _symmetrize(cfg.lam * F @ est.P @ F.T + cfg.Q)
    if not (np.all(np.isfinite(x_prior)) and np.all(np.isfinite(P_prior))):
        raise NonFinite("prediction diverged")
    return EstimatorState(x_prior, P_prior, est.innovation, est.S)


def update(est, y, u, p, cfg, h_func=None):
    """Measurement update with the scaled gain.

    ``h_func(x, u)`` overrides the measurement model.

    Raises
    ------
    SingularConfiguration
        If the tension (and hence ``h``) is undefined at the prior estimate.
    NonFinite
        On divergence.
    """
    _, h_func = _model_functions(p, None, h_func)
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    x_prior, P_prior = est.x, est.P
    H = jacobian_fd(lambda x: h_func(x, u), x_prior, cfg.fd_step)
    innovation = y - h_func(x_prior, u)
    S = _symmetrize(cfg.lam * H @ P_prior @ H.T + cfg.R)
    # K = lam P H^T S^-1, computed as a solve against the symmetric S
    K = cfg.lam * np.linalg.solve(S, H @ P_prior).T
    x_post = x_prior + K @ innovation
    P_post = _symmetrize(P_prior - cfg.lam * K @ H @ P_prior)
    if not (np.all(np.isfinite(x_post)) and np.all(np.isfinite(P_post))):
        raise NonFinite("update diverged")
    return EstimatorState(x_post, P_post, innovation, S)


class LambdaEKF(BaseEstimator, TransformerMixin):
    """Transformer wrapper: IMU measurements + inputs -> state estimates.

    ``fit`` validates the configuration and resets the filter. ``transform``
    runs predict/update over a measurement sequence ``Y`` (n x 4) paired with
    inputs ``U`` (n x 2), where ``U[k]`` is the input held over the interval
    ending at sample ``k``. The first sample is used for an update only.

    Parameters
    ----------
    params : SystemParams, optional
    lam : float
        Covariance scale.
    Q, R, P0 : ndarray, optional
        Process, measurement and initial covariances (defaults as in
        :class:`EstimatorConfig`).
    x0 : ndarray, optional
        Initial estimate.
    dt : float
        Sample period (s).
    fd_step : float
        Finite-difference step for the Jacobians.
    """

    def __init__(self, params=None, lam=0.8, Q=None, R=None, x0=None, P0=None,
                 dt=1.0 / 200.0, fd_step=1e-6):
        self.params = params
        self.lam = lam
        self.Q = Q
        self.R = R
        self.x0 = x0
        self.P0 = P0
        self.dt = dt
        self.fd_step = fd_step

    def _config(self):
        kwargs = {"lam": self.lam, "x0": self.x0, "fd_step": self.fd_step}
        for name in ("Q", "R", "P0"):
            value = getattr(self, name)
            if value is not None:
                kwargs[name] = value
        return EstimatorConfig(**kwargs)

    def fit(self, Y=None, U=None):
        self.params_ = self.params if self.params is not None else SystemParams()
        self.config_ = self._config()
        check_positive(self.dt, "dt")
        self.state_ = self.config_.initial_state()
        self.n_steps_ = 0
        return self

    def step(self, y, u):
        """Consume one measurement; returns the posterior estimate."""
        check_is_fitted(self, "state_")
        y = check_vector(y, 4, "y")
        u = check_vector(u, 2, "u")
        est = self.state_
        if self.n_steps_ > 0:
            est = predict(est, u, self.dt, self.params_, self.config_)
        est = update(est, y, u, self.params_, self.config_)
        self.state_ = est
        self.n_steps_ += 1
        return est.x.copy()

    def transform(self, Y, U):
        check_is_fitted(self, "state_")
        Y = np.asarray(Y, dtype=float)
        U = np.asarray(U, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != 4:
            raise ValueError(f"Y must have shape (n, 4), got {Y.shape}")
        if U.shape != (Y.shape[0], 2):
            raise ValueError(f"U must have shape ({Y.shape[0]}, 2), got {U.shape}")
        return np.array([self.step(y, u) for y, u in zip(Y, U)])

    def fit_transform(self, Y, U=None, **fit_params):
        return self.fit(Y, U).transform(Y, U)
