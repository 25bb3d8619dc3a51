"""Period function and its derivative by three independent routes.

* route ``mu``: ``T'(H) = (1/xi(H)) int_0^T mu dt`` for a normalizer with
  ``d_W H = xi(H)``;
* route ``etabeta``: the transversal-field formula with ``eta``, ``nu`` and
  ``beta = exp(-int nu)``, converted with ``d_W H`` at the anchor;
* route ``fd``: central difference of ``T`` between neighbouring levels.
"""

from __future__ import annotations

import logging
import math
import pickle
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional

import numpy as np
from scipy.optimize import brentq

from . import liecalc as lc
from .errors import LevelError, PeriodNormError, ScanError
from .fields import _fmt_point, PerpendicularField, Point, SystemDef, VectorField
from .flow import DEFAULT_ATOL, DEFAULT_RTOL, DEFAULT_T_MAX, Cycle, find_cycle, integrate_augmented, quadrature_along

log = logging.getLogger(__name__)

ROUTES = ("mu", "etabeta", "fd")
_ROUTE_ALIASES = {"a": "mu", "b": "etabeta", "c": "fd", "mu": "mu", "etabeta": "etabeta", "fd": "fd"}
CLASSIFICATIONS = ("increasing", "decreasing", "non-monotone", "isochronous", "undetermined")


def parse_routes(routes: Iterable[str] | str) -> tuple[str, ...]:
    if isinstance(routes, str):
        routes = [r for r in routes.split(",") if r.strip()]
    out = []
    for r in routes:
        key = r.strip().lower()
        if key not in _ROUTE_ALIASES:
            raise ValueError(f"unknown route {r!r}; use a/mu, b/etabeta, c/fd")
        if _ROUTE_ALIASES[key] not in out:
            out.append(_ROUTE_ALIASES[key])
    return tuple(sorted(out, key=ROUTES.index))


@dataclass(frozen=True)
class PeriodOptions:
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL
    ret_radius: Optional[float] = None
    t_max: float = DEFAULT_T_MAX
    consistency_abs: float = 1e-5
    consistency_rel: float = 1e-3
    fd_delta: Optional[float] = None
    normalizer: str = "auto"
    transversal: str = "perp"
    iso_tol: float = 1e-7
    min_gradient: float = 1e-6


# ---------------------------------------------------------------------------
# anchors

def point_on_level(H, origin, direction, level: float, *, s_max: float = 1e6) -> Point:
    """First point ``origin + s d`` (``s > 0``) with ``H = level``.

    Marches outward geometrically until ``H - level`` changes sign, then
    solves on the bracket to ``|H - level| <= 1e-12 (1 + |level|)``.
    """
    ox, oy = float(origin[0]), float(origin[1])
    dx, dy = direction
    n = math.hypot(dx, dy)
    dx, dy = dx / n, dy / n

    def f(s):
        return H.value((ox + s * dx, oy + s * dy)) - level

    s_prev, f_prev = 0.0, f(0.0)
    if f_prev == 0.0:
        return Point(ox, oy)
    s = 1e-6
    while s <= s_max:
        try:
            fs = f(s)
        except (ArithmeticError, ValueError):
            fs = None
        if fs is not None:
            if fs == 0.0:
                return Point(ox + s * dx, oy + s * dy)
            if (fs > 0) != (f_prev > 0):
                root = brentq(f, s_prev, s, xtol=1e-15 * max(1.0, s), rtol=4 * np.finfo(float).eps,
                              maxiter=300)
                pt = Point(ox + root * dx, oy + root * dy)
                if abs(H.value(pt) - level) > 1e-12 * (1.0 + abs(level)):
                    raise LevelError(f"root solve for level {level} did not converge")
                return pt
            s_prev, f_prev = s, fs
        s *= 1.05
    raise LevelError(f"level {level} not reached along ray {direction} from {tuple(origin)}")


def anchor_for_level(sys: SystemDef, level: float, opts: PeriodOptions = PeriodOptions()) -> Point:
    """Anchor on the level set along the system's ray; +y fallback if grad H degenerates."""
    if sys.H is None:
        raise LevelError(f"system {sys.name!r} has no first integral")
    center = sys.center_hint if sys.center_hint is not None else Point(0.0, 0.0)
    rays = [tuple(sys.ray)]
    if rays[0] != (0.0, 1.0):
        rays.append((0.0, 1.0))
    last_error = None
    for ray in rays:
        try:
            p = point_on_level(sys.H, center, ray, level)
        except LevelError as exc:
            last_error = exc
            continue
        if math.hypot(*sys.H.gradient(p)) >= opts.min_gradient:
            return p
        last_error = LevelError(f"|grad H| < {opts.min_gradient} at anchor {_fmt_point(p)} (near the center)")
    raise last_error


# ---------------------------------------------------------------------------
# routes

def default_normalizer(sys: SystemDef, kind: str = "auto") -> lc.NormalizerField:
    kind = kind.strip()
    if kind == "auto":
        kind = "kappa" if sys.kappa is not None else "gradient"
    if kind == "kappa":
        if sys.kappa is None:
            raise PeriodNormError(f"system {sys.name!r} has no reciprocal integrating factor")
        return lc.normalizer_kappa(sys.V, sys.kappa)
    if sys.H is None:
        raise PeriodNormError(f"normalizer {kind!r} needs a first integral")
    V = None if sys.hamiltonian else sys.V
    if kind == "gradient":
        return lc.normalizer_gradient(sys.H, V)
    if kind.startswith("zeta:"):
        return lc.normalizer_zeta(sys.H, kind[5:], V)
    if kind == "separable":
        if sys.separable is None:
            raise PeriodNormError(f"system {sys.name!r} is not declared separable")
        return lc.normalizer_separable(*sys.separable, V=V)
    raise PeriodNormError(f"unknown normalizer {kind!r}")


def _xi(sys: SystemDef, cycle: Cycle, N: lc.NormalizerField) -> float:
    if N.xi is not None and cycle.level is not None:
        xi = N.xi(cycle.level)
    else:
        xi = lc.dot(sys.H.gradient(cycle.anchor), N.W(cycle.anchor))
    if abs(xi) <= lc.GUARD_TOL:
        raise LevelError(f"d_W H vanishes on level {cycle.level}")
    return xi


def tprime_mu_route(sys: SystemDef, cycle: Cycle, N: lc.NormalizerField) -> float:
    """``T'(H)`` as the cycle integral of ``mu`` divided by ``d_W H``."""
    integral = quadrature_along(cycle, N.mu, guard=N.check_path)
    if sys.H is None:
        return integral
    return integral / _xi(sys, cycle, N)


@dataclass
class EtaBetaResult:
    dWT: float
    dWH: float
    holonomy: float

    @property
    def tprime(self) -> float:
        return self.dWT / self.dWH


def etabeta_integrals(sys: SystemDef, cycle: Cycle, W: Optional[VectorField] = None) -> EtaBetaResult:
    """``d_W T`` at the anchor with ``beta(anchor) = 1``, plus the ``beta`` holonomy."""
    V = sys.V
    W = W if W is not None else PerpendicularField(V)
    for z in cycle.samples.z:
        lc._require_transversal(V((z[0], z[1])), W((z[0], z[1])), z)

    def rates(z, a):
        e, n = lc.eta_nu(V, W, (z[0], z[1]))
        return np.array([-n, e * math.exp(a[0])])

    traj = integrate_augmented(cycle, rates, [0.0, 0.0])
    log_beta, dWT = traj.end[2], traj.end[3]
    dWH = lc.dot(sys.H.gradient(cycle.anchor), W(cycle.anchor)) if sys.H is not None else 1.0
    return EtaBetaResult(float(dWT), float(dWH), float(math.exp(log_beta)))


def tprime_etabeta_route(sys: SystemDef, cycle: Cycle, W: Optional[VectorField] = None) -> float:
    return etabeta_integrals(sys, cycle, W).tprime


def _cycle(sys: SystemDef, z, opts: PeriodOptions) -> Cycle:
    return find_cycle(sys.V, z, rtol=opts.rtol, atol=opts.atol, ret_radius=opts.ret_radius,
                      t_max=opts.t_max, H=sys.H)


def _point_on_gradient_line(H, anchor, target: float) -> Point:
    gx, gy = H.gradient(anchor)
    g = math.hypot(gx, gy)
    ux, uy = gx / g, gy / g
    ax, ay = anchor
    h0 = H.value(anchor)

    def f(s):
        return H.value((ax + s * ux, ay + s * uy)) - target

    guess = (target - h0) / g
    lo, hi = 0.0, 2.0 * guess
    for _ in range(60):
        if (f(lo) > 0) != (f(hi) > 0):
            break
        hi *= 2.0
    else:
        raise LevelError(f"level {target} not bracketed from {tuple(anchor)}")
    lo, hi = min(lo, hi), max(lo, hi)
    s = brentq(f, lo, hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=300)
    pt = Point(ax + s * ux, ay + s * uy)
    if abs(H.value(pt) - target) > 1e-12 * (1.0 + abs(target)):
        raise LevelError(f"root solve for level {target} did not converge")
    return pt


def fd_delta(level: float) -> float:
    return max(1e-4 * (1.0 + abs(level)), 1e-6)


def tprime_fd_route(sys: SystemDef, level: float, anchor, delta: Optional[float] = None,
                    opts: PeriodOptions = PeriodOptions()) -> float:
    """``(T(level + delta) - T(level - delta)) / (2 delta)`` along the gradient line."""
    if sys.H is None:
        raise LevelError("finite-difference route needs a first integral")
    delta = delta if delta is not None else (opts.fd_delta or fd_delta(level))
    z_plus = _point_on_gradient_line(sys.H, anchor, level + delta)
    z_minus = _point_on_gradient_line(sys.H, anchor, level - delta)
    return (_cycle(sys, z_plus, opts).period - _cycle(sys, z_minus, opts).period) / (2.0 * delta)


# ---------------------------------------------------------------------------
# reports

@dataclass
class PeriodDerivativeReport:
    level: Optional[float]
    anchor: Optional[tuple[float, float]]
    T: Optional[float] = None
    tprime_mu: Optional[float] = None
    tprime_etabeta: Optional[float] = None
    tprime_fd: Optional[float] = None
    deviations: dict = field(default_factory=dict)
    consistent: bool = True
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.T is not None

    @property
    def preferred(self) -> Optional[float]:
        for v in (self.tprime_mu, self.tprime_fd, self.tprime_etabeta):
            if v is not None:
                return v
        return None

    @property
    def max_deviation(self) -> Optional[float]:
        return max(self.deviations.values()) if self.deviations else None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_deviation"] = self.max_deviation
        return d


def _agree(a: float, b: float, opts: PeriodOptions) -> bool:
    return abs(a - b) <= max(opts.consistency_abs, opts.consistency_rel * abs(b))


def analyze_cycle(sys: SystemDef, anchor, routes=ROUTES, opts: PeriodOptions = PeriodOptions(),
                  cycle: Optional[Cycle] = None) -> PeriodDerivativeReport:
    """Period and ``T'(H)`` by each requested route for the cycle through ``anchor``."""
    routes = parse_routes(routes)
    anchor = Point(float(anchor[0]), float(anchor[1]))
    if cycle is None:
        cycle = _cycle(sys, anchor, opts)
    level = cycle.level
    rep = PeriodDerivativeReport(level=level, anchor=tuple(anchor), T=cycle.period)
    rep.diagnostics.update(closure_error=cycle.closure_error, level_drift=cycle.level_drift,
                           nfev=int(cycle.samples.nfev))

    if "mu" in routes:
        try:
            N = default_normalizer(sys, opts.normalizer)
            rep.diagnostics["normalizer"] = N.construction
            rep.tprime_mu = tprime_mu_route(sys, cycle, N)
        except PeriodNormError as exc:
            rep.flags.append("mu_failed")
            rep.diagnostics["mu_error"] = str(exc)
    if "etabeta" in routes:
        try:
            W = None
            if opts.transversal == "normalizer":
                W = default_normalizer(sys, opts.normalizer).W
            res = etabeta_integrals(sys, cycle, W)
            rep.tprime_etabeta = res.tprime
            rep.diagnostics.update(holonomy=res.holonomy, dWH_anchor=res.dWH, dWT=res.dWT)
        except PeriodNormError as exc:
            rep.flags.append("etabeta_failed")
            rep.diagnostics["etabeta_error"] = str(exc)
    if "fd" in routes:
        try:
            if level is None:
                raise LevelError("finite-difference route needs a first integral")
            rep.tprime_fd = tprime_fd_route(sys, level, anchor, opts=opts)
            rep.diagnostics["fd_delta"] = opts.fd_delta or fd_delta(level)
        except PeriodNormError as exc:
            rep.flags.append("fd_failed")
            rep.diagnostics["fd_error"] = str(exc)

    pairs = (("mu-fd", rep.tprime_mu, rep.tprime_fd),
             ("etabeta-mu", rep.tprime_etabeta, rep.tprime_mu),
             ("etabeta-fd", rep.tprime_etabeta, rep.tprime_fd))
    for name, a, b in pairs:
        if a is not None and b is not None:
            rep.deviations[name] = abs(a - b)
            if not _agree(a, b, opts):
                rep.consistent = False
    if not rep.consistent:
        rep.flags.append("inconsistent")
    return rep


def analyze_level(sys: SystemDef, level: float, routes=ROUTES,
                  opts: PeriodOptions = PeriodOptions()) -> PeriodDerivativeReport:
    anchor = anchor_for_level(sys, level, opts)
    return analyze_cycle(sys, anchor, routes, opts)


def _level_job(args) -> PeriodDerivativeReport:
    sys, level, routes, opts = args
    try:
        return analyze_level(sys, level, routes, opts)
    except PeriodNormError as exc:
        log.info("level %s failed: %s", level, exc)
        return PeriodDerivativeReport(level=level, anchor=None, error=f"{type(exc).__name__}: {exc}",
                                      flags=["failed"])


# ---------------------------------------------------------------------------
# annulus scans

@dataclass
class AnnulusScan:
    system: str
    reports: list
    classification: str
    critical_levels: list = field(default_factory=list)
    routes: tuple = ROUTES
    options: PeriodOptions = field(default_factory=PeriodOptions)
    system_def: Optional[SystemDef] = field(default=None, repr=False, compare=False)

    @property
    def levels(self) -> list:
        return [r.level for r in self.reports]

    @property
    def failed(self) -> list:
        return [r for r in self.reports if not r.ok]


def level_grid(lo: float, hi: float, n: int, spacing: str = "linear") -> np.ndarray:
    if n < 2:
        raise ValueError("need at least two levels")
    if not hi > lo:
        raise ValueError("H range must be increasing")
    if spacing == "geometric":
        if lo <= 0:
            raise ValueError("geometric spacing needs a positive lower level")
        return np.geomspace(lo, hi, n)
    if spacing != "linear":
        raise ValueError(f"unknown spacing {spacing!r}")
    return np.linspace(lo, hi, n)


def classify(reports, iso_tol: float) -> str:
    good = [r for r in reports if r.ok and r.preferred is not None]
    if len(good) < 2:
        raise ScanError(f"only {len(good)} level(s) succeeded; cannot classify")
    tp = np.array([r.preferred for r in good])
    T = np.array([r.T for r in good])
    if np.max(np.abs(tp)) <= iso_tol and (T.max() - T.min()) <= iso_tol * T.mean():
        return "isochronous"
    if np.all(tp > 0):
        return "increasing"
    if np.all(tp < 0):
        return "decreasing"
    if np.any(tp > 0) and np.any(tp < 0):
        return "non-monotone"
    return "undetermined"


def _map(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_level_job(j) for j in jobs]
    try:
        pickle.dumps(jobs[0])
        pool = ProcessPoolExecutor(max_workers=workers)
    except (pickle.PicklingError, TypeError, AttributeError):
        pool = ThreadPoolExecutor(max_workers=workers)
    with pool:
        # map preserves submission order, so the merge is deterministic
        return list(pool.map(_level_job, jobs))


def analyze_levels(sys: SystemDef, levels, routes=ROUTES, opts: PeriodOptions = PeriodOptions(),
                   *, workers: int = 1) -> list[PeriodDerivativeReport]:
    """One report per level, in the given order; failed levels carry ``error``."""
    routes = parse_routes(routes)
    return _map([(sys, float(h), routes, opts) for h in levels], workers)


def scan_annulus(sys: SystemDef, h_range: tuple[float, float], n: int, routes=ROUTES,
                 opts: PeriodOptions = PeriodOptions(), *, spacing: str = "linear",
                 workers: int = 1, find_critical: bool = True) -> AnnulusScan:
    """Analyze ``n`` levels across ``h_range``; failures are recorded per level."""
    routes = parse_routes(routes)
    reports = analyze_levels(sys, level_grid(h_range[0], h_range[1], n, spacing), routes, opts,
                             workers=workers)
    scan = AnnulusScan(sys.name, reports, classify(reports, opts.iso_tol), routes=routes,
                       options=opts, system_def=sys)
    if find_critical:
        scan.critical_levels = critical_cycles(scan)
    return scan


def preferred_tprime(sys: SystemDef, level: float, opts: PeriodOptions = PeriodOptions()) -> float:
    """Route ``mu`` (falling back to ``fd``) at a single level."""
    anchor = anchor_for_level(sys, level, opts)
    cycle = _cycle(sys, anchor, opts)
    try:
        return tprime_mu_route(sys, cycle, default_normalizer(sys, opts.normalizer))
    except PeriodNormError:
        return tprime_fd_route(sys, level, anchor, opts=opts)


def critical_cycles(scan: AnnulusScan) -> list[tuple[float, float]]:
    """Levels where ``T'`` changes sign, refined by bisection.

    Each entry is ``(H*, half bracket width)``; brackets are shrunk to
    ``1e-6 (1 + |H*|)``.
    """
    if scan.classification == "isochronous":
        return []
    if scan.system_def is None:
        raise ScanError("scan carries no system definition for refinement")
    sys, opts = scan.system_def, scan.options
    good = [r for r in scan.reports if r.ok and r.preferred is not None]
    out = []
    for a, b in zip(good, good[1:]):
        fa, fb = a.preferred, b.preferred
        if fa == 0.0 or fb == 0.0 or (fa > 0) == (fb > 0):
            continue
        lo, hi = a.level, b.level
        while hi - lo > 1e-6 * (1.0 + abs(0.5 * (lo + hi))):
            mid = 0.5 * (lo + hi)
            fm = preferred_tprime(sys, mid, opts)
            if fm == 0.0:
                lo = hi = mid
                break
            if (fm > 0) == (fa > 0):
                lo, fa = mid, fm
            else:
                hi = mid
        out.append((0.5 * (lo + hi), 0.5 * (hi - lo)))
    return out


def with_options(opts: PeriodOptions, **changes) -> PeriodOptions:
    return replace(opts, **{k: v for k, v in changes.items() if v is not None})
