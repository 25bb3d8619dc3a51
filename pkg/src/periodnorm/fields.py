"""Scalar and vector field evaluators and the built-in system registry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

from . import expr as ex
from .errors import FieldError

__all__ = [
    "Point", "ScalarField", "ExprScalarField", "FiniteDifferenceScalarField",
    "VectorField", "ExprVectorField", "HamiltonianField", "ReparametrizedField",
    "PerpendicularField", "SystemDef", "scalar_from_expr", "hamiltonian_field",
    "reparametrized_field", "finite_difference_lift", "builtin_system",
    "builtin_names", "BUILTIN_DESCRIPTIONS",
]

SYMBOLIC = "symbolic"
FINITE_DIFFERENCE = "finite-difference"


class Point(NamedTuple):
    x: float
    y: float


def _fmt_point(p) -> str:
    return "(" + ", ".join(f"{float(c):.10g}" for c in p) + ")"


def _xy(p) -> tuple[float, float]:
    return float(p[0]), float(p[1])


# ---------------------------------------------------------------------------
# scalar fields

class ScalarField:
    """Value, gradient and Hessian ``(f_xx, f_xy, f_yy)`` of a function of (x, y)."""

    provenance = SYMBOLIC

    def value(self, p) -> float:
        raise NotImplementedError

    def gradient(self, p) -> tuple[float, float]:
        raise NotImplementedError

    def hessian(self, p) -> tuple[float, float, float]:
        raise NotImplementedError

    def __call__(self, p) -> float:
        return self.value(p)


class ExprScalarField(ScalarField):
    """Scalar field whose derivatives are obtained symbolically.

    Picklable: only the expression is stored, compiled evaluators are rebuilt.
    """

    provenance = SYMBOLIC

    def __init__(self, expression: ex.ExprLike):
        self._setup(ex.as_expr(expression))

    def _setup(self, e: ex.Expr) -> None:
        self.expr = e
        dx = ex.differentiate(e, "x")
        dy = ex.differentiate(e, "y")
        self.derivatives = {
            "x": dx,
            "y": dy,
            "xx": ex.differentiate(dx, "x"),
            "xy": ex.differentiate(dx, "y"),
            "yy": ex.differentiate(dy, "y"),
        }
        self._f = ex.compile_expr(e)
        self._fx = ex.compile_expr(dx)
        self._fy = ex.compile_expr(dy)
        self._fxx = ex.compile_expr(self.derivatives["xx"])
        self._fxy = ex.compile_expr(self.derivatives["xy"])
        self._fyy = ex.compile_expr(self.derivatives["yy"])

    def __getstate__(self):
        return {"expr": self.expr}

    def __setstate__(self, state):
        self._setup(state["expr"])

    def value(self, p):
        return self._f(*_xy(p))

    def gradient(self, p):
        x, y = _xy(p)
        return self._fx(x, y), self._fy(x, y)

    def hessian(self, p):
        x, y = _xy(p)
        return self._fxx(x, y), self._fxy(x, y), self._fyy(x, y)

    def __repr__(self):
        return f"ExprScalarField('{self.expr}')"


class FiniteDifferenceScalarField(ScalarField):
    """Central-difference derivatives of an arbitrary callable ``f(x, y)``."""

    provenance = FINITE_DIFFERENCE
    GRADIENT_STEP = 1e-6
    HESSIAN_STEP = 1e-4

    def __init__(self, f: Callable[[float, float], float]):
        self.f = f

    def value(self, p):
        return float(self.f(*_xy(p)))

    def gradient(self, p):
        x, y = _xy(p)
        f = self.f
        hx = self.GRADIENT_STEP * max(1.0, abs(x))
        hy = self.GRADIENT_STEP * max(1.0, abs(y))
        return ((f(x + hx, y) - f(x - hx, y)) / (2 * hx),
                (f(x, y + hy) - f(x, y - hy)) / (2 * hy))

    def hessian(self, p):
        x, y = _xy(p)
        f = self.f
        hx = self.HESSIAN_STEP * max(1.0, abs(x))
        hy = self.HESSIAN_STEP * max(1.0, abs(y))
        f0 = f(x, y)
        fxx = (f(x + hx, y) - 2 * f0 + f(x - hx, y)) / hx**2
        fyy = (f(x, y + hy) - 2 * f0 + f(x, y - hy)) / hy**2
        fxy = (f(x + hx, y + hy) - f(x + hx, y - hy)
               - f(x - hx, y + hy) + f(x - hx, y - hy)) / (4 * hx * hy)
        return fxx, fxy, fyy


def scalar_from_expr(e: ex.ExprLike) -> ExprScalarField:
    return ExprScalarField(e)


def finite_difference_lift(f: Callable[[float, float], float]) -> FiniteDifferenceScalarField:
    return FiniteDifferenceScalarField(f)


# ---------------------------------------------------------------------------
# vector fields

class VectorField:
    """Planar field: ``V(p) -> (P, Q)``, ``jacobian(p) -> (P_x, P_y, Q_x, Q_y)``."""

    provenance = SYMBOLIC

    def __call__(self, p) -> tuple[float, float]:
        raise NotImplementedError

    def jacobian(self, p) -> tuple[float, float, float, float]:
        raise NotImplementedError

    def divergence(self, p) -> float:
        px, _, _, qy = self.jacobian(p)
        return px + qy


class ExprVectorField(VectorField):
    def __init__(self, P: ex.ExprLike, Q: ex.ExprLike):
        self._setup(ex.as_expr(P), ex.as_expr(Q))

    def _setup(self, P: ex.Expr, Q: ex.Expr) -> None:
        self.P, self.Q = P, Q
        self._p = ex.compile_expr(P)
        self._q = ex.compile_expr(Q)
        self._jac = [ex.compile_expr(ex.differentiate(c, v)) for c in (P, Q) for v in "xy"]

    def __getstate__(self):
        return {"P": self.P, "Q": self.Q}

    def __setstate__(self, state):
        self._setup(state["P"], state["Q"])

    def __call__(self, p):
        x, y = _xy(p)
        return self._p(x, y), self._q(x, y)

    def jacobian(self, p):
        x, y = _xy(p)
        return tuple(f(x, y) for f in self._jac)

    def __repr__(self):
        return f"ExprVectorField('{self.P}', '{self.Q}')"


class HamiltonianField(VectorField):
    """``x' = H_y, y' = -H_x``."""

    def __init__(self, H: ScalarField):
        self.H = H
        self.provenance = H.provenance

    def __call__(self, p):
        hx, hy = self.H.gradient(p)
        return hy, -hx

    def jacobian(self, p):
        hxx, hxy, hyy = self.H.hessian(p)
        return hxy, hyy, -hxx, -hxy


class ReparametrizedField(VectorField):
    """``x' = kappa H_y, y' = -kappa H_x`` with ``kappa > 0``."""

    def __init__(self, H: ScalarField, kappa: ScalarField):
        self.H = H
        self.kappa = kappa
        self.provenance = (SYMBOLIC if H.provenance == kappa.provenance == SYMBOLIC
                           else FINITE_DIFFERENCE)

    def _k(self, p) -> float:
        k = self.kappa.value(p)
        if not k > 0.0:
            raise FieldError(f"reparametrization factor must be positive, got {k!r} at {_fmt_point(p)}")
        return k

    def __call__(self, p):
        k = self._k(p)
        hx, hy = self.H.gradient(p)
        return k * hy, -k * hx

    def jacobian(self, p):
        k = self._k(p)
        kx, ky = self.kappa.gradient(p)
        hx, hy = self.H.gradient(p)
        hxx, hxy, hyy = self.H.hessian(p)
        return (kx * hy + k * hxy,
                ky * hy + k * hyy,
                -(kx * hx + k * hxx),
                -(ky * hx + k * hxy))


class PerpendicularField(VectorField):
    """``V^perp = (-Q, P)``: ``V`` rotated by +90 degrees."""

    def __init__(self, V: VectorField):
        self.V = V
        self.provenance = V.provenance

    def __call__(self, p):
        P, Q = self.V(p)
        return -Q, P

    def jacobian(self, p):
        px, py, qx, qy = self.V.jacobian(p)
        return -qx, -qy, px, py


def hamiltonian_field(H: ScalarField) -> HamiltonianField:
    return HamiltonianField(H)


def reparametrized_field(H: ScalarField, kappa: ScalarField) -> ReparametrizedField:
    return ReparametrizedField(H, kappa)


# ---------------------------------------------------------------------------
# systems

@dataclass(frozen=True)
class SystemDef:
    """A planar system ``z' = V(z)`` together with optional analytic data.

    ``ray`` is the direction used to locate level-set anchors from
    ``center_hint``; ``separable`` holds ``(F(y), G(x))`` when
    ``H = F(y) + G(x)``.
    """

    name: str
    V: VectorField
    H: Optional[ScalarField] = None
    kappa: Optional[ScalarField] = None
    center_hint: Optional[Point] = None
    annulus_hint: Optional[tuple[float, float]] = None
    ray: tuple[float, float] = (1.0, 0.0)
    separable: Optional[tuple[ex.Expr, ex.Expr]] = None
    description: str = ""
    hamiltonian: bool = field(default=False)

    @property
    def provenance(self) -> str:
        parts = [self.V] + [f for f in (self.H, self.kappa) if f is not None]
        if all(f.provenance == SYMBOLIC for f in parts):
            return SYMBOLIC
        return FINITE_DIFFERENCE


BUILTIN_DESCRIPTIONS = {
    "eikonal": "H = sqrt(x^2+y^2), |grad H| = 1; period grows linearly with H",
    "harmonic": "linear center, H = (x^2+y^2)/2; isochronous",
    "harmonic-rif:<kappa>": "harmonic center reparametrized by a positive factor kappa(x,y)",
    "quartic": "H = y^2/2 + x^4/4; period decreasing like H^(-1/4)",
    "rotational:<rho>": "x' = y rho, y' = -x rho with rho a function of x^2+y^2; circular orbits",
    "twowell": "H = y^2 + (x^2-1)^2, x' = 2y, y' = -4x(x^2-1); outer annulus encloses two centers",
}


def builtin_names() -> list[str]:
    return sorted(BUILTIN_DESCRIPTIONS)


def _hamiltonian_system(name, H_text, **kw) -> SystemDef:
    H = ExprScalarField(H_text)
    return SystemDef(name=name, V=HamiltonianField(H), H=H, hamiltonian=True, **kw)


def builtin_system(name: str) -> SystemDef:
    """Assemble a registered system by name (see :data:`BUILTIN_DESCRIPTIONS`)."""
    origin = Point(0.0, 0.0)
    base, _, arg = name.partition(":")
    base = base.strip()
    if base == "harmonic" and not arg:
        return _hamiltonian_system(name, "x^2/2 + y^2/2", center_hint=origin,
                                   annulus_hint=(0.1, 2.0),
                                   description=BUILTIN_DESCRIPTIONS["harmonic"])
    if base == "quartic" and not arg:
        return _hamiltonian_system(name, "y^2/2 + x^4/4", center_hint=origin,
                                   annulus_hint=(0.25, 2.0),
                                   separable=(ex.parse("y^2/2"), ex.parse("x^4/4")),
                                   description=BUILTIN_DESCRIPTIONS["quartic"])
    if base == "twowell" and not arg:
        # the outer annulus surrounds the saddle at the origin; anchors go up the y axis
        return _hamiltonian_system(name, "y^2 + (x^2-1)^2", center_hint=origin,
                                   annulus_hint=(2.0, 5.0), ray=(0.0, 1.0),
                                   separable=(ex.parse("y^2"), ex.parse("(x^2-1)^2")),
                                   description=BUILTIN_DESCRIPTIONS["twowell"])
    if base == "eikonal" and not arg:
        return _hamiltonian_system(name, "sqrt(x^2+y^2)", center_hint=origin,
                                   annulus_hint=(0.5, 2.0),
                                   description=BUILTIN_DESCRIPTIONS["eikonal"])
    if base == "rotational" and arg:
        rho = ex.parse(arg)
        x, y = ex.Var("x"), ex.Var("y")
        V = ExprVectorField(ex.fold(y * rho), ex.fold(-(x * rho)))
        H = ExprScalarField("x^2/2 + y^2/2")
        # V = rho * V_H, so rho is a reciprocal integrating factor wherever rho > 0
        return SystemDef(name=name, V=V, H=H, kappa=ExprScalarField(rho),
                         center_hint=origin, annulus_hint=(0.1, 2.0),
                         description=BUILTIN_DESCRIPTIONS["rotational:<rho>"])
    if base == "harmonic-rif" and arg:
        H = ExprScalarField("x^2/2 + y^2/2")
        kappa = ExprScalarField(arg)
        return SystemDef(name=name, V=ReparametrizedField(H, kappa), H=H, kappa=kappa,
                         center_hint=origin, annulus_hint=(0.1, 1.5),
                         description=BUILTIN_DESCRIPTIONS["harmonic-rif:<kappa>"])
    raise FieldError(f"unknown built-in system {name!r}; known: {', '.join(builtin_names())}")


def norm(v) -> float:
    return math.hypot(v[0], v[1])
