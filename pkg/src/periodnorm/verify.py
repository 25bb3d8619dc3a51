"""Numerical oracles for the algebraic identities behind the normalizer constructions.

Every check samples a region with a scrambled Halton sequence (seeded, so
runs are reproducible), evaluates a scale-free residual and compares its
maximum against a declared tolerance.  Samples where a construction is
undefined are skipped and counted.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.stats import qmc

from . import liecalc as lc
from .errors import EmptySampleError, FieldError, LevelError, PeriodNormError
from .fields import FINITE_DIFFERENCE, PerpendicularField, Point, ScalarField, SystemDef, VectorField
from .flow import Cycle

MAX_LISTED_FAILURES = 20

TOLERANCES = {
    # check: (symbolic, finite-difference)
    "first_integral": (1e-10, 1e-5),
    "normalizer": (1e-8, 1e-4),
    "rif": (1e-9, 1e-4),
    "wazewski": (1e-8, 1e-4),
    "eta_perp": (1e-8, 1e-4),
    "lemma1": (1e-8, 1e-4),
}


@dataclass
class VerificationReport:
    check: str
    samples: int
    max_residual: float
    mean_residual: float
    tolerance: float
    scale: str
    passed: bool
    seed: Optional[int] = None
    skipped: int = 0
    failures: list = field(default_factory=list)
    system: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        label = f"{self.system}: {self.check}" if self.system else self.check
        return (f"{status}  {label:<48} max={self.max_residual:.3e} tol={self.tolerance:.0e} "
                f"n={self.samples} skipped={self.skipped}")


# ---------------------------------------------------------------------------
# regions

@dataclass(frozen=True)
class AnnulusRegion:
    """Points on level sets of ``H`` between ``levels``, at quasi-random angles around ``center``."""

    H: ScalarField
    center: Point
    levels: tuple[float, float]


@dataclass(frozen=True)
class BoxRegion:
    x: tuple[float, float]
    y: tuple[float, float]


Region = Union[AnnulusRegion, BoxRegion]


def default_region(sys: SystemDef) -> Region:
    center = sys.center_hint if sys.center_hint is not None else Point(0.0, 0.0)
    if sys.H is not None and sys.annulus_hint is not None:
        return AnnulusRegion(sys.H, center, tuple(sys.annulus_hint))
    return BoxRegion((center[0] - 1.5, center[0] + 1.5), (center[1] - 1.5, center[1] + 1.5))


def sample_region(region: Region, n: int, seed: int = 0) -> list[Point]:
    """``n`` reproducible low-discrepancy points in ``region`` (fewer if levels cannot be located)."""
    from .period import point_on_level

    u = qmc.Halton(d=2, scramble=True, seed=seed).random(n)
    if isinstance(region, BoxRegion):
        xs = region.x[0] + u[:, 0] * (region.x[1] - region.x[0])
        ys = region.y[0] + u[:, 1] * (region.y[1] - region.y[0])
        return [Point(float(a), float(b)) for a, b in zip(xs, ys)]
    lo, hi = region.levels
    out = []
    for a, b in u:
        level = lo + a * (hi - lo)
        angle = 2.0 * math.pi * b
        try:
            out.append(point_on_level(region.H, region.center, (math.cos(angle), math.sin(angle)), level))
        except (LevelError, ArithmeticError, ValueError):
            continue
    return out


# ---------------------------------------------------------------------------
# generic driver

_SKIP = (ArithmeticError, ValueError, FieldError, PeriodNormError)


def _tolerance(check: str, *fields_) -> float:
    symbolic, fd = TOLERANCES[check]
    if any(getattr(f, "provenance", None) == FINITE_DIFFERENCE for f in fields_):
        return fd
    return symbolic


def _run(check: str, points: Sequence, residual: Callable, tol: float, scale: str,
         seed: Optional[int], guard: Optional[Callable] = None) -> VerificationReport:
    values, failures, skipped = [], [], 0
    for p in points:
        if guard is not None and not guard(p):
            skipped += 1
            continue
        try:
            r = residual(p)
        except _SKIP:
            skipped += 1
            continue
        if not math.isfinite(r):
            skipped += 1
            continue
        values.append(r)
        if r > tol and len(failures) < MAX_LISTED_FAILURES:
            failures.append((tuple(float(c) for c in p), r))
    if not values:
        raise EmptySampleError(f"{check}: all {len(points)} samples rejected")
    arr = np.array(values)
    mx = float(arr.max())
    return VerificationReport(check, len(values), mx, float(arr.mean()), tol, scale,
                              mx <= tol, seed, skipped, failures)


def _norm(v) -> float:
    return math.hypot(v[0], v[1])


def _guard_of(W):
    return W.defined_at if isinstance(W, lc.NormalizerField) else None


def _field_of(W) -> VectorField:
    return W.W if isinstance(W, lc.NormalizerField) else W


# ---------------------------------------------------------------------------
# checks

def check_first_integral(V: VectorField, H: ScalarField, region: Region, n: int = 200,
                         seed: int = 0, tol: Optional[float] = None) -> VerificationReport:
    """``|d_V H| / (1 + |grad H| |V|)``."""
    def residual(p):
        v = V(p)
        g = H.gradient(p)
        return abs(lc.dot(g, v)) / (1.0 + _norm(g) * _norm(v))

    tol = tol if tol is not None else _tolerance("first_integral", V, H)
    return _run("first_integral", sample_region(region, n, seed), residual, tol,
                "1 + |grad H||V|", seed)


def check_normalizer(V: VectorField, W, region: Region, n: int = 200, seed: int = 0,
                     tol: Optional[float] = None) -> VerificationReport:
    """``|[V, W] ^ V| / (1 + |V|^2 (1 + |W|))``; ``W`` may be a NormalizerField."""
    Wf = _field_of(W)

    def residual(p):
        v = V(p)
        lc._require_nonequilibrium(v, p)
        return abs(lc.wedge(lc.lie_bracket(V, Wf, p), v)) / (1.0 + lc.dot(v, v) * (1.0 + _norm(Wf(p))))

    tol = tol if tol is not None else _tolerance("normalizer", V, Wf)
    rep = _run("normalizer", sample_region(region, n, seed), residual, tol,
               "1 + |V|^2 (1 + |W|)", seed, _guard_of(W))
    if isinstance(W, lc.NormalizerField):
        rep.details["construction"] = W.construction
    return rep


def check_rif(V: VectorField, kappa: ScalarField, region: Region, n: int = 200, seed: int = 0,
              tol: Optional[float] = None) -> VerificationReport:
    """``|d_V kappa - kappa div V| / (1 + |kappa||V|)``."""
    def residual(p):
        v = V(p)
        k = kappa.value(p)
        return abs(lc.dot(kappa.gradient(p), v) - k * V.divergence(p)) / (1.0 + abs(k) * _norm(v))

    tol = tol if tol is not None else _tolerance("rif", V, kappa)
    return _run("rif", sample_region(region, n, seed), residual, tol, "1 + |kappa||V|", seed)


def check_wazewski(V: VectorField, W, region: Region, n: int = 200, seed: int = 0,
                   tol: Optional[float] = None) -> VerificationReport:
    """``|[V, W] - (a V + b W)|`` over ``1 + |[V, W]| + |a V| + |b W|``; tangent samples are skipped."""
    Wf = _field_of(W)

    def residual(p):
        a, b = lc.wazewski_decompose(V, Wf, p)
        v, w = V(p), Wf(p)
        br = lc.lie_bracket(V, Wf, p)
        diff = (br[0] - a * v[0] - b * w[0], br[1] - a * v[1] - b * w[1])
        return _norm(diff) / (1.0 + _norm(br) + abs(a) * _norm(v) + abs(b) * _norm(w))

    tol = tol if tol is not None else _tolerance("wazewski", V, Wf)
    return _run("wazewski", sample_region(region, n, seed), residual, tol,
                "1 + |[V,W]| + |a V| + |b W|", seed, _guard_of(W))


def check_eta_perp(V: VectorField, H: Optional[ScalarField], kappa: ScalarField, region: Region,
                   n: int = 200, seed: int = 0, tol: Optional[float] = None) -> VerificationReport:
    """``mu_kappa`` against ``eta(V, V^perp) kappa / |V|^2`` (and ``/(|V||grad H|)`` when ``H`` is given)."""
    perp = PerpendicularField(V)

    def residual(p):
        m = lc.mu_kappa(V, kappa, p)
        v = V(p)
        e = lc.eta(V, perp, p)
        r = abs(m - e * kappa.value(p) / lc.dot(v, v))
        if H is not None:
            r = max(r, abs(m - e / (_norm(v) * _norm(H.gradient(p)))))
        return r / (1.0 + abs(m))

    tol = tol if tol is not None else _tolerance("eta_perp", V, kappa)
    return _run("eta_perp", sample_region(region, n, seed), residual, tol, "1 + |mu|", seed)


def check_lemma1(W, H: ScalarField, cycles: Sequence[Cycle], *, points_per_cycle: int = 16,
                 expected_xi: Optional[Callable[[float], float]] = None,
                 tol: Optional[float] = None) -> VerificationReport:
    """``d_W H`` must be constant on every cycle; the constants tabulate ``xi(H)``.

    The residual of a cycle is its spread ``max - min`` over ``1 + |mean|``;
    with ``expected_xi`` the deviation of the mean from ``expected_xi(level)``
    is included.
    """
    if len(cycles) < 2:
        raise ValueError("need cycles on at least two levels")
    if points_per_cycle < 8:
        raise ValueError("need at least 8 points per cycle")
    Wf = _field_of(W)
    tol = tol if tol is not None else _tolerance("lemma1", Wf, H)
    values, table, failures, skipped = [], [], [], 0
    for cyc in cycles:
        pts = cyc.samples.sample(points_per_cycle)
        if isinstance(W, lc.NormalizerField):
            try:
                W.check_path(cyc.samples.z)
            except PeriodNormError:
                skipped += 1
                continue
        d = np.array([lc.dot(H.gradient(p), Wf(p)) for p in pts])
        mean = float(d.mean())
        r = float(d.max() - d.min()) / (1.0 + abs(mean))
        level = cyc.level if cyc.level is not None else H.value(cyc.anchor)
        if expected_xi is not None:
            r = max(r, abs(mean - expected_xi(level)) / (1.0 + abs(mean)))
        values.append(r)
        table.append((float(level), mean))
        if r > tol:
            failures.append((tuple(float(c) for c in cyc.anchor), r))
    if not values:
        raise EmptySampleError("lemma1: every cycle crosses the singular set of W")
    mx = max(values)
    rep = VerificationReport("lemma1", len(values), mx, float(np.mean(values)), tol,
                             "1 + |mean d_W H| per cycle", mx <= tol, None, skipped, failures)
    rep.details["xi_table"] = table
    if isinstance(W, lc.NormalizerField):
        rep.details["construction"] = W.construction
    return rep


# ---------------------------------------------------------------------------
# batch

def _cycles_for(sys: SystemDef, count: int = 3) -> list[Cycle]:
    from .period import PeriodOptions, _cycle, anchor_for_level

    lo, hi = sys.annulus_hint
    opts = PeriodOptions()
    cycles = []
    for level in np.linspace(lo, hi, count):
        cycles.append(_cycle(sys, anchor_for_level(sys, float(level), opts), opts))
    return cycles


def run_checks(sys: SystemDef, n: int = 200, seed: int = 0,
               normalizer: Optional[VectorField] = None) -> list[VerificationReport]:
    """Every applicable check for ``sys``; with ``normalizer`` only the checks of that field."""
    from .period import default_normalizer

    region = default_region(sys)
    reports = []

    def add(rep):
        rep.system = sys.name
        reports.append(rep)
        return rep

    if normalizer is not None:
        add(check_normalizer(sys.V, normalizer, region, n, seed))
        add(check_wazewski(sys.V, normalizer, region, n, seed))
        return reports

    if sys.H is not None:
        add(check_first_integral(sys.V, sys.H, region, n, seed))
    constructions = []
    if sys.H is not None:
        constructions.append(default_normalizer(sys, "gradient"))
    if sys.kappa is not None:
        constructions.append(default_normalizer(sys, "kappa"))
    if sys.separable is not None:
        constructions.append(default_normalizer(sys, "separable"))
    for N in constructions:
        rep = add(check_normalizer(sys.V, N, region, n, seed))
        rep.check = f"normalizer[{N.construction}]"
        rep = add(check_wazewski(sys.V, N, region, n, seed))
        rep.check = f"wazewski[{N.construction}]"
    rep = add(check_wazewski(sys.V, PerpendicularField(sys.V), region, n, seed))
    rep.check = "wazewski[perp]"

    if sys.H is not None and sys.annulus_hint is not None:
        cycles = _cycles_for(sys)
        for N in constructions:
            expected = N.xi
            if N.construction == "kappa" and not sys.hamiltonian:
                expected = None
            try:
                rep = check_lemma1(N, sys.H, cycles, expected_xi=expected)
            except EmptySampleError:
                continue
            rep.check = f"lemma1[{N.construction}]"
            add(rep)
    if sys.kappa is not None:
        add(check_rif(sys.V, sys.kappa, region, n, seed))
        add(check_eta_perp(sys.V, sys.H, sys.kappa, region, n, seed))
    return reports


DEFAULT_BUILTINS = (
    "harmonic",
    "quartic",
    "twowell",
    "eikonal",
    "rotational:2+(x^2+y^2)",
    "rotational:2+sin(x^2+y^2)",
    "harmonic-rif:exp(x)",
)
