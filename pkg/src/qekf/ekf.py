"""Quantum extended Kalman filter in its classical (commutative) form.

Once the estimates live in the commutative measurement algebra, the filter
is an ordinary continuous-time EKF driven by the measurement record:

    dx = f(x) dt + K (dy - h(x) dt)
    K  = (P H^T + S) R^{-1}
    dP/dt = F P + P F^T + Q - (P H^T + S) R^{-1} (P H^T + S)^T

The robust variant for state-dependent noise replaces the Riccati equation by

    dP/dt = F P + P F^T + Qhat + lambda P^2 - K R K^T,
    Qhat  = mu I + S R^{-1} S^T.

Both are integrated with an explicit Euler step, followed by symmetrization
and an eigenvalue floor on P.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

COND_LIMIT = 1e12
P_FLOOR = 1e-9


class SingularCovarianceError(np.linalg.LinAlgError):
    """Measurement covariance R is singular or not positive definite."""


class FilterDivergence(FloatingPointError):
    """The filter produced non-finite values."""


@dataclass(frozen=True)
class FilterModel:
    """Callables defining the classical filter model.

    Each callable takes the estimate ``x`` (shape ``(n,)``). ``f`` and ``h``
    return vectors, ``F`` is ``(n, n)``, ``H`` is ``(m, n)``, ``Q`` is
    ``(n, n)``, ``R`` is ``(m, m)`` and ``S`` is ``(n, m)``.
    """

    n: int
    m: int
    f: Callable
    F: Callable
    h: Callable
    H: Callable
    Q: Callable
    R: Callable
    S: Callable
    name: str = ""

    def evaluate(self, x):
        """Return ``(f, F, h, H, Q, R, S)`` at ``x``."""
        return (
            np.asarray(self.f(x), dtype=float),
            np.asarray(self.F(x), dtype=float),
            np.asarray(self.h(x), dtype=float),
            np.asarray(self.H(x), dtype=float),
            np.asarray(self.Q(x), dtype=float),
            np.asarray(self.R(x), dtype=float),
            np.asarray(self.S(x), dtype=float),
        )


def linearize(model, x_star, name=None):
    """Kalman filter obtained by freezing ``model`` at ``x_star``.

    The drift and output become affine maps with the Jacobians at ``x_star``;
    the noise matrices are held at their values there.
    """
    x_star = np.asarray(x_star, dtype=float)
    f0, F0, h0, H0, Q0, R0, S0 = model.evaluate(x_star)

    def const(v):
        return lambda x: v

    return FilterModel(
        n=model.n,
        m=model.m,
        f=lambda x: f0 + F0 @ (np.asarray(x) - x_star),
        F=const(F0),
        h=lambda x: h0 + H0 @ (np.asarray(x) - x_star),
        H=const(H0),
        Q=const(Q0),
        R=const(R0),
        S=const(S0),
        name=name or f"{model.name}-linearized",
    )


@dataclass(frozen=True)
class RobustParams:
    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and self.lam > 0):
            raise ValueError("robust filter needs mu > 0 and lambda > 0")


@dataclass(frozen=True)
class FilterState:
    """Estimate and Riccati matrix at time ``t``.

    ``gain`` is the Kalman gain used in the step that produced this state
    and ``floored`` tells whether the eigenvalue floor was applied to P.
    """

    t: float
    x_hat: np.ndarray
    P: np.ndarray
    gain: Optional[np.ndarray] = None
    floored: bool = False


def _factor(R):
    """Cholesky factor of R after checking symmetry-based conditioning."""
    R = np.atleast_2d(R)
    R = 0.5 * (R + R.T)
    w = np.linalg.eigvalsh(R)
    if not np.all(np.isfinite(w)) or w[0] <= 0.0:
        raise SingularCovarianceError("measurement covariance is not positive definite")
    if w[-1] > COND_LIMIT * w[0]:
        raise SingularCovarianceError(
            f"measurement covariance is singular (cond {w[-1] / w[0]:.3g})"
        )
    return cho_factor(R, check_finite=False)


def _solve(fac, B):
    # X = B R^{-1} for R = fac
    return cho_solve(fac, B.T, check_finite=False).T


def kalman_gain(P, H, S, R):
    """``K = (P H^T + S) R^{-1}`` via a Cholesky solve."""
    P, H, S, R = map(np.atleast_2d, (P, H, S, R))
    return _solve(_factor(R), P @ H.T + S)


def _sym(M):
    return 0.5 * (M + M.T)


def _riccati(P, F, H, Q, R, S, fac, robust):
    B = P @ H.T + S
    K = _solve(fac, B)
    lyap = F @ P + P @ F.T
    if robust is None:
        # (P H^T + S) R^{-1} (P H^T + S)^T == K B^T
        return _sym(lyap + Q - K @ B.T), K
    Qhat = robust.mu * np.eye(P.shape[0]) + _solve(fac, S) @ S.T
    return _sym(lyap + Qhat + robust.lam * P @ P - K @ R @ K.T), K


def riccati_rhs(P, F, H, Q, R, S):
    P, F, H, Q, R, S = map(np.atleast_2d, (P, F, H, Q, R, S))
    return _riccati(P, F, H, Q, R, S, _factor(R), None)[0]


def robust_riccati_rhs(P, F, H, R, S, params):
    """Shaped Riccati right-hand side with ``Qhat = mu I + S R^{-1} S^T``."""
    P, F, H, R, S = map(np.atleast_2d, (P, F, H, R, S))
    return _riccati(P, F, H, None, R, S, _factor(R), params)[0]


def floor_eigenvalues(P, p_floor=P_FLOOR):
    """Symmetrize ``P`` and lift eigenvalues below ``p_floor``.

    Returns ``(P, floored)``.
    """
    P = _sym(P)
    w, V = np.linalg.eigh(P)
    if w[0] >= p_floor:
        return P, False
    return _sym((V * np.maximum(w, p_floor)) @ V.T), True


def filter_step(state, model, dy, dt, robust=None, p_floor=P_FLOOR):
    """Advance the filter by one Euler step on the increment ``dy``.

    The gain is evaluated at the pre-step ``(x_hat, P)``.
    """
    x, P = state.x_hat, state.P
    # overflow is reported as FilterDivergence below
    with np.errstate(over="ignore", invalid="ignore"):
        f, F, h, H, Q, R, S = model.evaluate(x)
        rhs, K = _riccati(P, F, H, Q, R, S, _factor(R), robust)
        x_new = x + f * dt + K @ (np.asarray(dy, dtype=float) - h * dt)
        P_new = P + rhs * dt
    if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(P_new))):
        raise FilterDivergence(f"non-finite filter update at t={state.t + dt:.6g}")
    P_new, floored = floor_eigenvalues(P_new, p_floor)
    return FilterState(state.t + dt, x_new, P_new, gain=K, floored=floored)


@dataclass
class FilterTrajectory:
    times: np.ndarray
    x_hat: np.ndarray
    P: np.ndarray
    K: np.ndarray
    floored: np.ndarray

    @property
    def floor_fraction(self):
        return float(np.mean(self.floored)) if len(self.floored) else 0.0


def run_filter(model, increments, dt, x0, P0, robust=None, t0=0.0, p_floor=P_FLOOR):
    """Run the filter over an ``(n_steps, m)`` array of increments.

    ``K[k]`` is the gain evaluated at grid point ``k``; the last row is the
    gain at the final state.
    """
    increments = np.asarray(increments, dtype=float).reshape(-1, model.m)
    n_steps = len(increments)
    xs = np.empty((n_steps + 1, model.n))
    Ps = np.empty((n_steps + 1, model.n, model.n))
    Ks = np.empty((n_steps + 1, model.n, model.m))
    floored = np.zeros(n_steps, dtype=bool)
    state = FilterState(t0, np.asarray(x0, dtype=float), _sym(np.atleast_2d(P0).astype(float)))
    xs[0], Ps[0] = state.x_hat, state.P
    for k in range(n_steps):
        state = filter_step(state, model, increments[k], dt, robust, p_floor)
        xs[k + 1], Ps[k + 1], Ks[k] = state.x_hat, state.P, state.gain
        floored[k] = state.floored
    _, _, _, H, _, R, S = model.evaluate(state.x_hat)
    Ks[n_steps] = kalman_gain(state.P, H, S, R)
    return FilterTrajectory(t0 + dt * np.arange(n_steps + 1), xs, Ps, Ks, floored)


def check_noise_inequality(Q, R, S, m):
    """Smallest eigenvalue of ``m Q - S R^{-1} S^T``; passes when >= -1e-10."""
    Q, R, S = map(np.atleast_2d, (Q, R, S))
    M = _sym(m * Q - _solve(_factor(R), S) @ S.T)
    min_eig = float(np.linalg.eigvalsh(M)[0])
    return min_eig, min_eig >= -1e-10


def lyapunov_value(x_err, P):
    """``x^T P^{-1} x`` computed with a linear solve."""
    x_err = np.atleast_1d(np.asarray(x_err, dtype=float))
    P = np.atleast_2d(P)
    if np.linalg.cond(P) > COND_LIMIT:
        raise SingularCovarianceError("P is singular")
    return float(x_err @ np.linalg.solve(P, x_err))
