"""Pointwise Lie-bracket calculus and normalizer constructions.

Conventions: ``a ^ b = a1*b2 - a2*b1``; a Jacobian is the tuple
``(P_x, P_y, Q_x, Q_y)``; ``[V, W] = J_W V - J_V W``.

A normalizer of ``V`` is a transversal field ``W`` with ``[V, W] = mu V``.
Every construction here returns a :class:`NormalizerField` bundling ``W``,
its normalizing function ``mu`` and a guard describing where ``W`` exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from . import expr as ex
from .errors import (
    EquilibriumError,
    FieldError,
    GuardViolation,
    SingularGradientError,
    TangencyError,
)
from .fields import (
    _fmt_point,
    ExprScalarField,
    HamiltonianField,
    PerpendicularField,
    ScalarField,
    VectorField,
)

EQUILIBRIUM_TOL = 1e-12
TANGENCY_TOL = 1e-12
GUARD_TOL = 1e-12

Vec = tuple[float, float]


def wedge(a: Sequence[float], b: Sequence[float]) -> float:
    return a[0] * b[1] - a[1] * b[0]


def dot(a: Sequence[float], b: Sequence[float]) -> float:
    return a[0] * b[0] + a[1] * b[1]


def _apply(jac, u) -> Vec:
    px, py, qx, qy = jac
    return px * u[0] + py * u[1], qx * u[0] + qy * u[1]


def _scale(p) -> float:
    return 1.0 + math.hypot(p[0], p[1])


def _require_nonequilibrium(v: Vec, p) -> float:
    n2 = dot(v, v)
    if math.sqrt(n2) <= EQUILIBRIUM_TOL * _scale(p):
        raise EquilibriumError(f"vector field vanishes at {_fmt_point(p)}")
    return n2


def _require_transversal(v: Vec, w: Vec, p) -> float:
    vw = wedge(v, w)
    if abs(vw) <= TANGENCY_TOL * math.hypot(*v) * math.hypot(*w) or vw == 0.0:
        raise TangencyError(f"fields are tangent at {_fmt_point(p)} (V^W = {vw!r})")
    return vw


# ---------------------------------------------------------------------------
# brackets and normalizing functions

def lie_bracket(V: VectorField, W: VectorField, p) -> Vec:
    """``[V, W](p) = (J_W V - J_V W)(p)``."""
    v, w = V(p), W(p)
    a = _apply(W.jacobian(p), v)
    b = _apply(V.jacobian(p), w)
    return a[0] - b[0], a[1] - b[1]


def mu_from_bracket(V: VectorField, W: VectorField, p) -> float:
    """``([V, W] . V) / |V|^2``."""
    v = V(p)
    n2 = _require_nonequilibrium(v, p)
    return dot(lie_bracket(V, W, p), v) / n2


def lambda_H(H: ScalarField, p) -> float:
    """Numerator of the Hamiltonian normalizing function (``mu_H |grad H|^4``)."""
    hx, hy = H.gradient(p)
    hxx, hxy, hyy = H.hessian(p)
    return (hyy - hxx) * hx * hx - 4.0 * hxy * hx * hy + (hxx - hyy) * hy * hy


def mu_hamiltonian(H: ScalarField, p) -> float:
    """Normalizing function of ``W_H = grad H / |grad H|^2`` for ``V_H``; equals ``div W_H``."""
    hx, hy = H.gradient(p)
    g = hx * hx + hy * hy
    if math.sqrt(g) <= EQUILIBRIUM_TOL * _scale(p):
        raise SingularGradientError(f"grad H vanishes at {_fmt_point(p)}")
    return lambda_H(H, p) / (g * g)


def mu_kappa(V: VectorField, kappa: ScalarField, p) -> float:
    """Closed-form ``mu`` of the RIF normalizer ``kappa (-Q, P) / |V|^2``."""
    P, Q = V(p)
    n2 = _require_nonequilibrium((P, Q), p)
    k = kappa.value(p)
    if not k > 0.0:
        raise FieldError(f"RIF must be positive, got {k!r} at {_fmt_point(p)}")
    px, py, qx, qy = V.jacobian(p)
    s = qx + py
    num = -P * P * s + 2.0 * P * Q * (px - qy) + Q * Q * s
    return k * num / (n2 * n2)


def _separable_parts(F, G, p):
    F = _as_scalar(F)
    G = _as_scalar(G)
    _, f1 = F.gradient(p)
    _, _, f2 = F.hessian(p)
    g1, _ = G.gradient(p)
    g2, _, _ = G.hessian(p)
    return F, G, f1, f2, g1, g2


def mu_separable(F, G, p) -> float:
    """``mu_H`` specialised to ``H = F(y) + G(x)``.

    ``(F'' - G'')(G'^2 - F'^2) / (F'^2 + G'^2)^2``; identical to
    :func:`mu_hamiltonian` for that ``H``.
    """
    _, _, f1, f2, g1, g2 = _separable_parts(F, G, p)
    d = f1 * f1 + g1 * g1
    if d == 0.0:
        raise SingularGradientError(f"F' and G' vanish together at {_fmt_point(p)}")
    return (f2 - g2) * (g1 * g1 - f1 * f1) / (d * d)


REMOVABLE_TOL = 1e-10
_MAX_ZERO_ORDER = 8


class SeparableTerm:
    """One summand ``S`` of ``H = F(y) + G(x)`` and the quotient ``S/S'``.

    Where ``S'`` vanishes the quotient has a pole unless ``S`` vanishes too;
    then ``S`` has a zero of some order ``m`` and ``S/S' ~ (t - t*)/m`` is
    smooth, with derivative ``1 - S S''/S'^2 -> 1/m``.
    """

    def __init__(self, S, var: str):
        self.S = _as_scalar(S)
        self.var = var
        self.index = 0 if var == "x" else 1
        self._chain = None

    def d1(self, p) -> float:
        return self.S.gradient(p)[self.index]

    def d2(self, p) -> float:
        h = self.S.hessian(p)
        return h[0] if self.index == 0 else h[2]

    def zero_order(self, p) -> Optional[int]:
        """Order of the zero of ``S`` at ``p``; None when ``S(p) != 0``."""
        if abs(self.S.value(p)) > REMOVABLE_TOL:
            return None
        expr = getattr(self.S, "expr", None)
        if expr is None:
            raise GuardViolation("separable", f"cannot resolve 0/0 of a non-symbolic term at {_fmt_point(p)}")
        if self._chain is None:
            chain = [expr]
            for _ in range(_MAX_ZERO_ORDER):
                chain.append(ex.differentiate(chain[-1], self.var))
            self._chain = chain
        for k in range(1, _MAX_ZERO_ORDER + 1):
            if abs(ex.evaluate(self._chain[k], p)) > REMOVABLE_TOL:
                return k
        raise GuardViolation("separable", f"zero of order > {_MAX_ZERO_ORDER} at {_fmt_point(p)}")

    def singular(self, p) -> bool:
        """True on a pole of ``S/S'``."""
        return abs(self.d1(p)) <= REMOVABLE_TOL and self.zero_order(p) is None

    def _order_or_pole(self, p) -> int:
        m = self.zero_order(p)
        if m is None:
            raise GuardViolation("separable", f"{self.var}-derivative vanishes at {_fmt_point(p)}")
        return m

    def ratio(self, p) -> float:
        s1 = self.d1(p)
        if s1 != 0.0:
            r = self.S.value(p) / s1
            if math.isfinite(r):
                return r
        self._order_or_pole(p)
        return 0.0

    def ratio_derivative(self, p) -> float:
        """``d/dt (S/S') = 1 - S S''/S'^2``."""
        s1 = self.d1(p)
        if s1 != 0.0:
            r = 1.0 - self.S.value(p) * self.d2(p) / (s1 * s1)
            if math.isfinite(r):
                return r
        return 1.0 / self._order_or_pole(p)


def mu_fgg(F, G, p) -> float:
    """``1 - G G''/G'^2 - F F''/F'^2``: ``mu`` of the field ``(G/G', F/F')``.

    Zeros of ``G'`` or ``F'`` are allowed where the quotient is removable.
    """
    return SeparableTerm(G, "x").ratio_derivative(p) + SeparableTerm(F, "y").ratio_derivative(p) - 1.0


def eta(V: VectorField, W: VectorField, p) -> float:
    """``([V, W] ^ W) / (V ^ W)``: the ``V``-component of ``[V, W]`` in the frame (V, W)."""
    vw = _require_transversal(V(p), W(p), p)
    return wedge(lie_bracket(V, W, p), W(p)) / vw


def nu(V: VectorField, W: VectorField, p) -> float:
    """``([V, W] ^ V) / (W ^ V)``: the ``W``-component of ``[V, W]``."""
    vw = _require_transversal(V(p), W(p), p)
    return wedge(lie_bracket(V, W, p), V(p)) / (-vw)


def eta_nu(V: VectorField, W: VectorField, p) -> tuple[float, float]:
    """Both frame coefficients from a single bracket evaluation."""
    v, w = V(p), W(p)
    vw = _require_transversal(v, w, p)
    b = lie_bracket(V, W, p)
    return wedge(b, w) / vw, wedge(b, v) / (-vw)


def wazewski_decompose(V: VectorField, W: VectorField, p) -> tuple[float, float]:
    """Coefficients ``(a, b)`` with ``[V, W] = a V + b W`` from divergences.

    ``a = -d_W ln(V^W) + div W`` and ``b = d_V ln(V^W) - div V``; computed
    without forming the bracket, so it is an independent check of it.
    """
    v, w = V(p), W(p)
    vw = _require_transversal(v, w, p)
    vpx, vpy, vqx, vqy = V.jacobian(p)
    wpx, wpy, wqx, wqy = W.jacobian(p)
    # gradient of V^W = P W2 - Q W1
    gx = vpx * w[1] + v[0] * wqx - vqx * w[0] - v[1] * wpx
    gy = vpy * w[1] + v[0] * wqy - vqy * w[0] - v[1] * wpy
    a = -dot((gx, gy), w) / vw + (wpx + wqy)
    b = dot((gx, gy), v) / vw - (vpx + vqy)
    return a, b


def reparametrize_mu(mu_val: float, W: VectorField, kappa: ScalarField, p) -> float:
    """Normalizing function of ``W`` for ``kappa V``: ``mu - d_W ln kappa``."""
    k = kappa.value(p)
    if not k > 0.0:
        raise FieldError(f"reparametrization factor must be positive, got {k!r}")
    return mu_val - dot(kappa.gradient(p), W(p)) / k


# ---------------------------------------------------------------------------
# field combinators used by the constructions

class LevelFunction:
    """A function of the level value ``h`` (``zeta``, ``psi``), written in ``h``."""

    def __init__(self, expression: ex.ExprLike):
        self._setup(ex.as_expr(expression, variables=("h",)))

    def _setup(self, e):
        self.expr = e
        self._f = ex.compile_expr(e, ("h",))
        self._df = ex.compile_expr(ex.differentiate(e, "h"), ("h",))

    def __getstate__(self):
        return {"expr": self.expr}

    def __setstate__(self, state):
        self._setup(state["expr"])

    def __call__(self, h: float) -> float:
        return self._f(h)

    def derivative(self, h: float) -> float:
        return self._df(h)

    def __repr__(self):
        return f"LevelFunction('{self.expr}')"


def _as_level_function(f) -> LevelFunction:
    return f if isinstance(f, LevelFunction) else LevelFunction(f)


def _as_scalar(f) -> ScalarField:
    return f if isinstance(f, ScalarField) else ExprScalarField(f)


class _Scalar:
    """Value and gradient of a scalar multiplier ``s(p)``."""

    def __init__(self, value, gradient):
        self.value = value
        self.gradient = gradient


class ScaledField(VectorField):
    """``s(p) W(p)`` with Jacobian ``s J_W + W (x) grad s``."""

    def __init__(self, W: VectorField, s: _Scalar):
        self.W = W
        self.s = s
        self.provenance = W.provenance

    def __call__(self, p):
        s = self.s.value(p)
        w = self.W(p)
        return s * w[0], s * w[1]

    def jacobian(self, p):
        s = self.s.value(p)
        sx, sy = self.s.gradient(p)
        w = self.W(p)
        px, py, qx, qy = self.W.jacobian(p)
        return (s * px + w[0] * sx, s * py + w[0] * sy,
                s * qx + w[1] * sx, s * qy + w[1] * sy)


class SumField(VectorField):
    def __init__(self, *terms: VectorField):
        self.terms = terms
        self.provenance = terms[0].provenance

    def __call__(self, p):
        vals = [t(p) for t in self.terms]
        return sum(v[0] for v in vals), sum(v[1] for v in vals)

    def jacobian(self, p):
        jacs = [t.jacobian(p) for t in self.terms]
        return tuple(sum(j[i] for j in jacs) for i in range(4))


class GradientNormalizerField(VectorField):
    """``W_H = grad H / |grad H|^2``."""

    def __init__(self, H: ScalarField):
        self.H = H
        self.provenance = H.provenance

    def __call__(self, p):
        hx, hy = self.H.gradient(p)
        g = hx * hx + hy * hy
        return hx / g, hy / g

    def jacobian(self, p):
        hx, hy = self.H.gradient(p)
        hxx, hxy, hyy = self.H.hessian(p)
        g = hx * hx + hy * hy
        gx = 2.0 * (hx * hxx + hy * hxy)
        gy = 2.0 * (hx * hxy + hy * hyy)
        g2 = g * g
        return (hxx / g - hx * gx / g2, hxy / g - hx * gy / g2,
                hxy / g - hy * gx / g2, hyy / g - hy * gy / g2)


class SeparableNormalizerField(VectorField):
    """``(G(x)/G'(x), F(y)/F'(y))``."""

    def __init__(self, F, G):
        self.F_term = F if isinstance(F, SeparableTerm) else SeparableTerm(F, "y")
        self.G_term = G if isinstance(G, SeparableTerm) else SeparableTerm(G, "x")
        self.provenance = self.F_term.S.provenance

    def __call__(self, p):
        return self.G_term.ratio(p), self.F_term.ratio(p)

    def jacobian(self, p):
        return self.G_term.ratio_derivative(p), 0.0, 0.0, self.F_term.ratio_derivative(p)


# ---------------------------------------------------------------------------
# normalizer bundles

@dataclass
class NormalizerField:
    """A normalizer ``W`` of ``V`` with its normalizing function and guard.

    ``margin(p)`` vanishes exactly on the set where the construction is
    singular; the construction is usable where ``|margin| > GUARD_TOL`` and
    a path is usable only if ``margin`` keeps one sign along it.
    ``xi(h)``, when known in closed form, is ``d_W H`` on the level ``h``.
    """

    W: VectorField
    mu: Callable[[object], float]
    construction: str
    margin: Callable[[object], float]
    V: Optional[VectorField] = None
    xi: Optional[Callable[[float], float]] = None
    removable: Optional[Callable[[object], bool]] = None

    def _is_removable(self, p) -> bool:
        if self.removable is None:
            return False
        try:
            return self.removable(p)
        except (ArithmeticError, ValueError, FieldError):
            return False

    def defined_at(self, p) -> bool:
        try:
            if abs(self.margin(p)) > GUARD_TOL:
                return True
        except (ArithmeticError, ValueError, FieldError):
            return False
        return self._is_removable(p)

    def _crossing(self, a, b, ma: float):
        """Bisect the chord from ``a`` to ``b`` for the sign change of ``margin``."""
        lo, hi = 0.0, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            m = self.margin((a[0] + mid * (b[0] - a[0]), a[1] + mid * (b[1] - a[1])))
            if m == 0.0:
                lo = hi = mid
                break
            if (m > 0) == (ma > 0):
                lo = mid
            else:
                hi = mid
        t = 0.5 * (lo + hi)
        return a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])

    def check_path(self, points) -> None:
        """Raise GuardViolation if the closed path touches or crosses the singular set.

        Zeros of ``margin`` that the construction declares removable are
        allowed, both at samples and between them.
        """
        prev_p, prev_m = None, None
        for p in points:
            p = (float(p[0]), float(p[1]))
            try:
                m = self.margin(p)
            except (ArithmeticError, ValueError, FieldError) as exc:
                raise GuardViolation(self.construction, f"guard undefined at {_fmt_point(p)}: {exc}") from None
            if abs(m) <= GUARD_TOL:
                if not self._is_removable(p):
                    raise GuardViolation(self.construction, f"singular set reached at {_fmt_point(p)}")
                continue
            if prev_m is not None and (m > 0) != (prev_m > 0):
                c = self._crossing(prev_p, p, prev_m)
                if not self._is_removable(c):
                    raise GuardViolation(self.construction, f"singular set crossed near {_fmt_point(c)}")
            prev_p, prev_m = p, m


def _grad_norm(H: ScalarField, p) -> float:
    return math.hypot(*H.gradient(p))


def _is_hamiltonian_of(V, H) -> bool:
    return V is None or (isinstance(V, HamiltonianField) and V.H is H)


def normalizer_gradient(H: ScalarField, V: Optional[VectorField] = None) -> NormalizerField:
    """``W_H = grad H/|grad H|^2``; ``d_W H = 1``.

    For ``V = V_H`` (the default) ``mu`` is :func:`mu_hamiltonian`; for any
    other field with first integral ``H`` it is read off the bracket.
    """
    W = GradientNormalizerField(H)
    if _is_hamiltonian_of(V, H):
        mu = lambda p: mu_hamiltonian(H, p)  # noqa: E731
        V = V or HamiltonianField(H)
    else:
        mu = lambda p: mu_from_bracket(V, W, p)  # noqa: E731
    return NormalizerField(W, mu, "gradient", lambda p: _grad_norm(H, p), V=V,
                           xi=lambda h: 1.0)


def normalizer_zeta(H: ScalarField, zeta, V: Optional[VectorField] = None) -> NormalizerField:
    """``zeta(H) W_H``; ``d_W H = zeta(H)`` and ``mu = zeta(H) mu_gradient``."""
    zeta = _as_level_function(zeta)
    base = normalizer_gradient(H, V)
    s = _Scalar(lambda p: zeta(H.value(p)),
                lambda p: _scaled(zeta.derivative(H.value(p)), H.gradient(p)))
    W = ScaledField(base.W, s)
    return NormalizerField(W, lambda p: zeta(H.value(p)) * base.mu(p), "zeta",
                           lambda p: base.margin(p) * zeta(H.value(p)), V=base.V, xi=zeta)


def _scaled(c: float, v) -> Vec:
    return c * v[0], c * v[1]


def normalizer_kappa(V: VectorField, kappa: ScalarField) -> NormalizerField:
    """``kappa (-Q, P) / (P^2 + Q^2)`` for a reciprocal integrating factor ``kappa``."""

    def s_value(p):
        P, Q = V(p)
        return kappa.value(p) / (P * P + Q * Q)

    def s_grad(p):
        P, Q = V(p)
        n2 = P * P + Q * Q
        px, py, qx, qy = V.jacobian(p)
        k = kappa.value(p)
        kx, ky = kappa.gradient(p)
        nx = 2.0 * (P * px + Q * qx)
        ny = 2.0 * (P * py + Q * qy)
        return kx / n2 - k * nx / (n2 * n2), ky / n2 - k * ny / (n2 * n2)

    W = ScaledField(PerpendicularField(V), _Scalar(s_value, s_grad))
    return NormalizerField(W, lambda p: mu_kappa(V, kappa, p), "kappa",
                           lambda p: min(math.hypot(*V(p)), kappa.value(p)), V=V)


def normalizer_separable(F, G, V: Optional[VectorField] = None) -> NormalizerField:
    """``(G/G', F/F')`` for ``H = F(y) + G(x)``; ``d_W H = H``.

    The field is singular where ``G'`` (or ``F'``) vanishes while ``G`` (or
    ``F``) does not; common zeros are removable and allowed.
    """
    F_term, G_term = SeparableTerm(F, "y"), SeparableTerm(G, "x")
    W = SeparableNormalizerField(F_term, G_term)
    if V is None:
        V = HamiltonianField(ExprScalarField(ex.BinOp("+", F_term.S.expr, G_term.S.expr)))

        def mu(p):
            return G_term.ratio_derivative(p) + F_term.ratio_derivative(p) - 1.0
    else:
        mu = lambda p: mu_from_bracket(V, W, p)  # noqa: E731

    def margin(p):
        return F_term.d1(p) * G_term.d1(p)

    def removable(p):
        return not (F_term.singular(p) or G_term.singular(p))

    return NormalizerField(W, mu, "separable", margin, V=V, xi=lambda h: h, removable=removable)


def combine_normalizer(N: NormalizerField, psi, g, V: VectorField, H: ScalarField) -> NormalizerField:
    """``psi(H) W + g V`` with ``mu* = psi(H) mu + d_V g``."""
    psi = _as_level_function(psi)
    g = _as_scalar(g)
    s = _Scalar(lambda p: psi(H.value(p)),
                lambda p: _scaled(psi.derivative(H.value(p)), H.gradient(p)))
    W = SumField(ScaledField(N.W, s), ScaledField(V, _Scalar(g.value, g.gradient)))

    def mu(p):
        return psi(H.value(p)) * N.mu(p) + dot(g.gradient(p), V(p))

    xi = None if N.xi is None else (lambda h: psi(h) * N.xi(h))
    return NormalizerField(W, mu, "combined", lambda p: N.margin(p) * psi(H.value(p)), V=V, xi=xi,
                           removable=N.removable)


def reparametrized_normalizer(N: NormalizerField, kappa: ScalarField, V: VectorField) -> NormalizerField:
    """The same ``W`` viewed as a normalizer of ``kappa V`` (``V`` here is ``kappa V``)."""
    return NormalizerField(N.W, lambda p: reparametrize_mu(N.mu(p), N.W, kappa, p),
                           "reparametrized",
                           lambda p: N.margin(p) if kappa.value(p) > 0.0 else 0.0,
                           V=V, xi=N.xi, removable=N.removable)


def perpendicular(V: VectorField) -> PerpendicularField:
    return PerpendicularField(V)
