"""Adaptive integration of planar flows, period detection and cycle quadrature.

The integrator is the Dormand-Prince 5(4) pair with a proportional-integral
step-size controller and Shampine's fourth-order continuous extension.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import (
    AmbiguousReturnError,
    ClosureError,
    IntegrationError,
    NotPeriodicError,
    StepUnderflowError,
)
from .fields import _fmt_point

__all__ = [
    "Trajectory", "Cycle", "BetaProfile", "integrate", "find_cycle",
    "integrate_augmented", "quadrature_along", "beta_along",
    "DEFAULT_RTOL", "DEFAULT_ATOL",
]

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
DEFAULT_T_MAX = 1e4

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and 4th order weights (7 stages, FSAL)
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# dense output: y(t0 + theta h) = y0 + h K^T (P @ [theta, theta^2, theta^3, theta^4])
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

# PI controller (Gustafsson); exponents for an order-4 error estimate
_SAFETY = 0.9
_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_FAC_MIN = 0.2
_FAC_MAX = 10.0


@dataclass
class _Step:
    t: float
    h: float
    y: np.ndarray
    K: np.ndarray  # (7, dim)
    y_new: np.ndarray
    error: float

    def dense(self, t: float) -> np.ndarray:
        theta = (t - self.t) / self.h
        q = _P @ np.array([theta, theta**2, theta**3, theta**4])
        return self.y + self.h * (q @ self.K)


def _initial_step(fun, t0, y0, f0, rtol, atol, direction=1.0) -> float:
    scale = atol + np.abs(y0) * rtol
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    y1 = y0 + h0 * direction * f0
    f1 = fun(t0 + h0 * direction, y1)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def _dopri_steps(fun, t0: float, y0: np.ndarray, t_end: float, rtol: float, atol: float,
                 counter: list) -> Iterator[_Step]:
    """Yield accepted steps from ``t0`` until ``t_end`` is reached exactly."""
    t = t0
    y = np.asarray(y0, dtype=float)
    f = fun(t, y)
    counter[0] += 1
    h = min(_initial_step(fun, t, y, f, rtol, atol), t_end - t)
    counter[0] += 1
    h_min = 1e-14 * max(abs(t_end), 1.0)
    err_prev = 1e-4
    while t < t_end:
        if h < h_min:
            raise StepUnderflowError(
                f"step size {h:.3e} below {h_min:.3e} at t={t:.6g}; "
                "the orbit is probably near a singularity or separatrix")
        last = t + h >= t_end
        if last:
            h = t_end - t
        K = np.empty((7, y.size))
        K[0] = f
        for i in range(1, 6):
            K[i] = fun(t + _C[i] * h, y + h * (np.dot(_A[i], K[:i])))
        y_new = y + h * (_B @ K[:6])
        f_new = fun(t + h, y_new)
        K[6] = f_new
        counter[0] += 6
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            err = float(np.max(np.abs(h * (_E @ K)) / scale))
        if not math.isfinite(err):  # overflowing stage: retry smaller
            h *= _FAC_MIN
            continue
        if err <= 1.0:
            t_new = t_end if last else t + h
            yield _Step(t, t_new - t, y, K, y_new, err)
            if err == 0.0:
                fac = _FAC_MAX
            else:
                fac = _SAFETY * err ** (-_ALPHA) * err_prev ** _BETA
                fac = min(_FAC_MAX, max(_FAC_MIN, fac))
            err_prev = max(err, 1e-4)
            t, y, f = t_new, y_new, f_new
            h *= fac
        else:
            h *= max(_FAC_MIN, _SAFETY * err ** (-1 / 5))


@dataclass
class Trajectory:
    """Accepted integration nodes with one dense-output interpolant per step.

    ``t[i]`` and ``z[i]`` are the nodes; ``t`` is strictly increasing.
    Evaluating the trajectory at a node time returns the stored node.
    """

    t: np.ndarray
    z: np.ndarray
    steps: list = field(repr=False)
    errors: np.ndarray = field(repr=False)
    nfev: int = 0

    def __call__(self, t: float) -> np.ndarray:
        i = bisect.bisect_left(self.t, t)
        if i < len(self.t) and self.t[i] == t:
            return self.z[i].copy()
        if t < self.t[0] or t > self.t[-1]:
            raise ValueError(f"t={t} outside [{self.t[0]}, {self.t[-1]}]")
        return self.steps[i - 1].dense(t)

    def sample(self, n: int) -> np.ndarray:
        """``n`` states equally spaced in time over ``[t0, t_end)``."""
        times = self.t[0] + (self.t[-1] - self.t[0]) * np.arange(n) / n
        return np.array([self(s) for s in times])

    @property
    def end(self) -> np.ndarray:
        return self.z[-1]


def _build_trajectory(t0, y0, steps, counter, t_last=None) -> Trajectory:
    ts = [t0] + [s.t + s.h for s in steps]
    zs = [np.asarray(y0, dtype=float)] + [s.y_new for s in steps]
    if t_last is not None:
        ts[-1] = t_last
        zs[-1] = steps[-1].dense(t_last)
    return Trajectory(np.array(ts), np.array(zs), steps,
                      np.array([s.error for s in steps]), counter[0])


def _field_rhs(V) -> Callable:
    def rhs(t, z):
        return np.array(V((z[0], z[1])))
    return rhs


def integrate(V, z0, t_end: float, tol: tuple[float, float] = (DEFAULT_RTOL, DEFAULT_ATOL)
              ) -> Trajectory:
    """Integrate ``z' = V(z)`` from ``z0`` over ``[0, t_end]``."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    rtol, atol = tol
    counter = [0]
    y0 = np.asarray(z0, dtype=float)
    steps = list(_dopri_steps(_field_rhs(V), 0.0, y0, t_end, rtol, atol, counter))
    return _build_trajectory(0.0, y0, steps, counter)


@dataclass
class Cycle:
    """One closed orbit through ``anchor`` with minimal period ``period``."""

    anchor: np.ndarray
    period: float
    samples: Trajectory
    closure_error: float
    field: object = field(repr=False)
    level: Optional[float] = None
    level_drift: Optional[float] = None
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL

    @property
    def T(self) -> float:
        return self.period


def find_cycle(V, z0, *, rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
               ret_radius: Optional[float] = None, t_max: float = DEFAULT_T_MAX,
               H=None) -> Cycle:
    """Follow the orbit of ``z0`` until it first returns to the section through ``z0``.

    The section is the line through ``z0`` orthogonal to ``V(z0)``; a return
    is an upward crossing of ``g(z) = (z - z0) . V(z0)`` that lands within
    ``ret_radius`` of ``z0``.  Crossings further away are recorded as
    candidates and reported if no return occurs before ``t_max``.
    """
    z0 = np.asarray(z0, dtype=float)
    v0 = np.asarray(V((z0[0], z0[1])), dtype=float)
    speed2 = float(v0 @ v0)
    if speed2 == 0.0:
        raise NotPeriodicError(f"{_fmt_point(z0)} is an equilibrium")
    if ret_radius is None:
        ret_radius = 1e-5 * (1.0 + float(np.linalg.norm(z0)))
    g_tol = 1e-12 * math.sqrt(speed2) * (1.0 + float(np.linalg.norm(z0)))

    def g(z):
        return float((z - z0) @ v0)

    counter = [0]
    steps: list[_Step] = []
    candidates = []
    g_old = 0.0
    period = None
    for step in _dopri_steps(_field_rhs(V), 0.0, z0, t_max, rtol, atol, counter):
        steps.append(step)
        g_new = g(step.y_new)
        if g_old < 0.0 <= g_new:
            t_lo, t_hi = step.t, step.t + step.h
            if g_new == 0.0:
                t_star = t_hi
            else:
                t_star = brentq(lambda s: g(step.dense(s)), t_lo, t_hi,
                                xtol=1e-15 * max(1.0, t_hi), rtol=4 * np.finfo(float).eps,
                                maxiter=200)
            z_star = step.dense(t_star)
            if abs(g(z_star)) > g_tol:
                # secant polish on the interpolant
                t_star = _polish(lambda s: g(step.dense(s)), t_lo, t_hi, t_star, g_tol)
                z_star = step.dense(t_star)
            if float(np.linalg.norm(z_star - z0)) <= ret_radius:
                period = t_star
                break
            candidates.append((t_star, tuple(z_star)))
        g_old = g_new
    if period is None:
        if candidates:
            raise AmbiguousReturnError(
                f"no return to {_fmt_point(z0)} within t_max={t_max}; section crossings far "
                f"from the anchor at t = {[round(c[0], 6) for c in candidates[:5]]}",
                candidates)
        raise NotPeriodicError(f"orbit of {_fmt_point(z0)} did not return within t_max={t_max}")

    traj = _build_trajectory(0.0, z0, steps, counter, t_last=period)
    closure = float(np.linalg.norm(traj.end - z0))
    if closure > 1e-8 * (1.0 + float(np.linalg.norm(z0))):
        raise ClosureError(f"cycle through {_fmt_point(z0)} fails to close: error {closure:.3e}")
    level = drift = None
    if H is not None:
        level = H.value(z0)
        drift = max(abs(H.value(z) - level) for z in traj.z)
    return Cycle(z0, period, traj, closure, V, level, drift, rtol, atol)


def _polish(fn, lo, hi, t, tol, maxiter=50) -> float:
    f_lo, f_hi = fn(lo), fn(hi)
    for _ in range(maxiter):
        ft = fn(t)
        if abs(ft) <= tol:
            break
        if (ft < 0) == (f_lo < 0):
            lo, f_lo = t, ft
        else:
            hi, f_hi = t, ft
        t = 0.5 * (lo + hi)
    return t


def integrate_augmented(cycle: Cycle, rates: Callable[[np.ndarray, np.ndarray], np.ndarray],
                        aux0) -> Trajectory:
    """Re-integrate the cycle with extra states ``a' = rates(z, a)`` over ``[0, T]``.

    The auxiliary components share the step-size control of the orbit.
    """
    V = cycle.field
    aux0 = np.atleast_1d(np.asarray(aux0, dtype=float))

    def rhs(t, s):
        z = s[:2]
        return np.concatenate((V((z[0], z[1])), rates(z, s[2:])))

    y0 = np.concatenate((cycle.anchor, aux0))
    counter = [0]
    steps = list(_dopri_steps(rhs, 0.0, y0, cycle.period, cycle.rtol, cycle.atol, counter))
    return _build_trajectory(0.0, y0, steps, counter)


def quadrature_along(cycle: Cycle, f: Callable, *, guard: Optional[Callable] = None) -> float:
    """``int_0^T f(gamma(t)) dt`` by state augmentation.

    ``guard`` (for example ``NormalizerField.check_path``) is applied to the
    cycle samples first and must raise if ``f`` is undefined somewhere on it.
    """
    if guard is not None:
        guard(cycle.samples.z)
    traj = integrate_augmented(cycle, lambda z, a: np.array([f((z[0], z[1]))]), 0.0)
    return float(traj.end[2])


@dataclass
class BetaProfile:
    t: np.ndarray
    beta: np.ndarray
    holonomy: float


def beta_along(cycle: Cycle, nu: Callable, beta0: float = 1.0, *,
               guard: Optional[Callable] = None) -> BetaProfile:
    """``beta(t) = beta0 exp(-int_0^t nu)`` along the cycle; ``holonomy = beta(T)/beta(0)``."""
    if not beta0 > 0:
        raise IntegrationError("beta0 must be positive")
    if guard is not None:
        guard(cycle.samples.z)
    traj = integrate_augmented(cycle, lambda z, a: np.array([-nu((z[0], z[1]))]), 0.0)
    beta = beta0 * np.exp(traj.z[:, 2])
    return BetaProfile(traj.t, beta, float(beta[-1] / beta0))
