import math
import pickle
import random

import pytest

from periodnorm.errors import FieldError
from periodnorm.fields import (FINITE_DIFFERENCE, SYMBOLIC, ExprScalarField, ExprVectorField, HamiltonianField,
                               builtin_names, builtin_system, finite_difference_lift, hamiltonian_field,
                               reparametrized_field, scalar_from_expr)


def test_scalar_derivatives():
    H = scalar_from_expr("x^2/2 + y^2/2")
    assert H.gradient((1, 2)) == (1.0, 2.0)
    assert H.hessian((1, 2)) == (1.0, 0.0, 1.0)
    assert H.provenance == SYMBOLIC


def test_twowell_equilibrium_and_quartic_curvature():
    assert scalar_from_expr("y^2 + (x^2-1)^2").gradient((1, 0))[0] == 0.0
    assert scalar_from_expr("y^2/2 + x^4/4").hessian((1, 0))[0] == 3.0


def test_hamiltonian_field():
    V = hamiltonian_field(scalar_from_expr("x^2/2 + y^2/2"))
    assert V((1, 0)) == (0.0, -1.0)


def test_twowell_vector_field_matches_closed_form():
    V = hamiltonian_field(scalar_from_expr("y^2 + (x^2-1)^2"))
    rng = random.Random(0)
    for _ in range(20):
        x, y = rng.uniform(-2, 2), rng.uniform(-2, 2)
        P, Q = V((x, y))
        assert P == pytest.approx(2 * y, rel=1e-14)
        assert Q == pytest.approx(-4 * x * (x * x - 1), rel=1e-12, abs=1e-14)


def test_hamiltonian_field_is_divergence_free():
    V = hamiltonian_field(scalar_from_expr("sin(x*y) + x^3*y"))
    rng = random.Random(1)
    for _ in range(20):
        assert V.divergence((rng.uniform(-2, 2), rng.uniform(-2, 2))) == 0.0


def test_reparametrized_field():
    H, k = scalar_from_expr("x^2/2 + y^2/2"), scalar_from_expr("exp(x)")
    V = reparametrized_field(H, k)
    assert V((0, 1)) == pytest.approx((1.0, 0.0))
    p = (0.5, 0.3)
    lhs = sum(g * v for g, v in zip(k.gradient(p), V(p)))
    assert lhs == pytest.approx(k.value(p) * V.divergence(p), abs=1e-12)
    assert lhs == pytest.approx(0.3 * math.exp(1.0), rel=1e-14)


def test_unit_reparametrization_is_hamiltonian():
    H = scalar_from_expr("y^2/2 + x^4/4")
    R = reparametrized_field(H, scalar_from_expr("1"))
    V = hamiltonian_field(H)
    for p in [(0.3, 0.1), (-1.2, 0.7)]:
        assert R(p) == V(p)
        assert R.jacobian(p) == pytest.approx(V.jacobian(p))


def test_reparametrization_must_be_positive():
    V = reparametrized_field(scalar_from_expr("x^2/2 + y^2/2"), scalar_from_expr("x"))
    with pytest.raises(FieldError):
        V((-1.0, 0.0))


def test_vector_jacobian_symbolic():
    V = ExprVectorField("x*y", "sin(x) + y^2")
    assert V.jacobian((1.0, 2.0)) == pytest.approx((2.0, 1.0, math.cos(1.0), 4.0))


def test_finite_difference_lift():
    f = finite_difference_lift(lambda x, y: x * x + y * y)
    assert f.provenance == FINITE_DIFFERENCE
    assert f.gradient((3, 4)) == pytest.approx((6, 8), abs=1e-6)
    assert finite_difference_lift(lambda x, y: math.sin(x)).hessian((0, 0))[0] == pytest.approx(0, abs=1e-5)
    assert finite_difference_lift(lambda x, y: math.exp(x + y)).hessian((0, 0))[1] == pytest.approx(1, abs=1e-4)


def test_fields_pickle():
    H = ExprScalarField("x^2 + sin(y)")
    H2 = pickle.loads(pickle.dumps(H))
    assert H2.hessian((0.2, 0.3)) == H.hessian((0.2, 0.3))
    V = pickle.loads(pickle.dumps(HamiltonianField(H)))
    assert V((0.2, 0.3)) == HamiltonianField(H)((0.2, 0.3))
    sys = pickle.loads(pickle.dumps(builtin_system("harmonic-rif:exp(x)")))
    assert sys.V((0.1, 0.2)) == builtin_system("harmonic-rif:exp(x)").V((0.1, 0.2))


def test_builtin_registry():
    names = builtin_names()
    assert names == sorted(names)
    assert {"harmonic", "twowell", "quartic"} <= set(names)
    assert builtin_system("harmonic").V((0, 1)) == (1.0, 0.0)
    with pytest.raises(FieldError):
        builtin_system("nope")


def test_twowell_critical_points():
    sys = builtin_system("twowell")
    for p in [(1, 0), (-1, 0), (0, 0)]:
        assert sys.H.gradient(p) == (0.0, 0.0)
    assert sys.H.value((1, 0)) == 0.0 and sys.H.value((-1, 0)) == 0.0
    assert sys.H.value((0, 0)) == 1.0


def test_rotational_angular_speed():
    sys = builtin_system("rotational:2+ (x^2+y^2)")
    P, Q = sys.V((1.0, 0.0))
    assert math.hypot(P, Q) == pytest.approx(3.0)
    assert sys.kappa.value((1.0, 0.0)) == 3.0
