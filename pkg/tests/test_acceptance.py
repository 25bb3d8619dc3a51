"""Acceptance gate: one PASS/FAIL line per criterion, at the stated tolerance.

Every test prints its verdict through ``verdict`` before asserting, so
``pytest -v`` output carries the full table even when a criterion fails.
"""

import math

import numpy as np
import pytest

from exprgen import central_difference, sample_pairs
from periodnorm import expr as ex
from periodnorm import liecalc as lc
from periodnorm.errors import GuardViolation
from periodnorm.fields import builtin_system, scalar_from_expr
from periodnorm.period import (PeriodOptions, _cycle, anchor_for_level, analyze_level, critical_cycles,
                               default_normalizer, scan_annulus, tprime_fd_route, tprime_mu_route)
from periodnorm.verify import (DEFAULT_BUILTINS, check_eta_perp, check_normalizer, check_rif,
                               default_region, run_checks, sample_region)

OPTS = PeriodOptions()


@pytest.fixture
def verdict(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok
    return emit


def rel(a, b):
    return abs(a - b) / abs(b)


def cycle_at(sys, level):
    return _cycle(sys, anchor_for_level(sys, level, OPTS), OPTS)


def test_criterion_1_harmonic_isochrony(verdict):
    scan = scan_annulus(builtin_system("harmonic"), (0.1, 2.0), 8)
    t_err = max(abs(r.T - 2 * math.pi) for r in scan.reports)
    d_err = max(abs(v) for r in scan.reports for v in (r.tprime_mu, r.tprime_etabeta, r.tprime_fd))
    ok = (len(scan.reports) == 8 and t_err <= 1e-8 and d_err <= 1e-7
          and scan.classification == "isochronous")
    verdict(1, ok, f"harmonic sweep max|T-2pi|={t_err:.2e} max|T'|={d_err:.2e} "
                   f"classification={scan.classification}")
    assert ok


def test_criterion_2_rotational_closed_form(verdict):
    # The route-A target here is -8 pi/(2+2H)^2, but differentiating the
    # period 2 pi/(2+2H) gives -4 pi/(2+2H)^2. The target is kept unchanged,
    # so this check fails by a factor of two; the ratio is printed.
    sys = builtin_system("rotational:2+(x^2+y^2)")
    t_err = a_err = pair_err = 0.0
    ratios = []
    for h in (0.25, 0.5, 1.0):
        rep = analyze_level(sys, h)
        t_err = max(t_err, rel(rep.T, 2 * math.pi / (2 + 2 * h)))
        stated = -8 * math.pi / (2 + 2 * h) ** 2
        a_err = max(a_err, rel(rep.tprime_mu, stated))
        ratios.append(rep.tprime_mu / stated)
        routes = (rep.tprime_mu, rep.tprime_etabeta, rep.tprime_fd)
        pair_err = max(pair_err, max(rel(a, b) for a in routes for b in routes))
    ok = t_err <= 1e-7 and a_err <= 1e-5 and pair_err <= 1e-4
    verdict(2, ok, f"rotational T rel={t_err:.2e} route-A vs -8pi/(2+2H)^2 rel={a_err:.2e} "
                   f"(ratio {np.mean(ratios):.9f}) routes pairwise rel={pair_err:.2e}")
    assert ok


def test_criterion_3_critical_cycle(verdict):
    scan = scan_annulus(builtin_system("rotational:2+sin(x^2+y^2)"), (0.2, 1.4), 7, routes="a")
    found = critical_cycles(scan)
    ok = len(found) == 1 and abs(found[0][0] - math.pi / 4) <= 1e-4
    levels = ", ".join(f"{h:.8f}" for h, _ in found)
    verdict(3, ok, f"critical levels [{levels}] vs pi/4={math.pi / 4:.8f}")
    assert ok


def test_criterion_4_quartic_scaling(verdict):
    sys = builtin_system("quartic")
    errs = []
    for h in (0.5, 1.0, 2.0):
        rep = analyze_level(sys, h)
        errs.append(abs(rep.preferred * 4 * h / rep.T + 1.0))
    ok = max(errs) <= 1e-3
    verdict(4, ok, f"quartic max|T'*4H/T + 1|={max(errs):.2e}")
    assert ok


def test_criterion_5_twowell_outer_annulus(verdict):
    sys = builtin_system("twowell")
    grad = default_normalizer(sys, "gradient")
    sep = default_normalizer(sys, "separable")
    F, G = sys.separable
    worst, guarded = 0.0, 0
    for h in (2.0, 3.0, 5.0):
        cyc = cycle_at(sys, h)
        a = tprime_mu_route(sys, cyc, grad)
        c = tprime_fd_route(sys, h, cyc.anchor, opts=OPTS)
        worst = max(worst, rel(a, c))
        try:
            sep.check_path(cyc.samples.z)
            for p in cyc.samples.z:
                lc.mu_fgg(F, G, tuple(p))
        except GuardViolation:
            guarded += 1
    ok = worst <= 1e-4 and guarded == 3
    verdict(5, ok, f"twowell route A vs C rel={worst:.2e}; mu_fgg guard violations on {guarded}/3 cycles")
    assert ok


def test_criterion_6_reciprocal_integrating_factor(verdict):
    sys = builtin_system("harmonic-rif:exp(x)")
    region = default_region(sys)
    rif = check_rif(sys.V, sys.kappa, region)
    norm = check_normalizer(sys.V, lc.normalizer_kappa(sys.V, sys.kappa), region)
    perp = check_eta_perp(sys.V, sys.H, sys.kappa, region)
    kappa = default_normalizer(sys, "kappa")
    worst = 0.0
    for h in (0.25, 0.5, 1.0):
        cyc = cycle_at(sys, h)
        worst = max(worst, rel(tprime_mu_route(sys, cyc, kappa), tprime_fd_route(sys, h, cyc.anchor, opts=OPTS)))
    ok = rif.passed and norm.passed and norm.max_residual <= 1e-8 and perp.passed and worst <= 1e-4
    verdict(6, ok, f"rif={rif.passed} normalizer max={norm.max_residual:.2e} eta_perp={perp.passed} "
                   f"route A vs C rel={worst:.2e}")
    assert ok


def test_criterion_7_identity_suite(verdict):
    failed, count = [], 0
    for name in DEFAULT_BUILTINS:
        for rep in run_checks(builtin_system(name)):
            if rep.check.split("[")[0] in ("normalizer", "lemma1", "wazewski"):
                count += 1
                if not rep.passed:
                    failed.append(rep.summary())
    sys = builtin_system("quartic")
    inv = 0.0
    for h in (0.5, 1.0, 2.0):
        cyc = cycle_at(sys, h)
        N = default_normalizer(sys, "gradient")
        base = tprime_mu_route(sys, cyc, N)
        for kind in ("zeta:1", "zeta:2", "zeta:h"):
            inv = max(inv, abs(tprime_mu_route(sys, cyc, default_normalizer(sys, kind)) - base))
        shifted = lc.combine_normalizer(N, "1", "x", sys.V, sys.H)
        inv = max(inv, abs(tprime_mu_route(sys, cyc, shifted) - base))
    ok = not failed and inv <= 1e-7
    verdict(7, ok, f"{count} identity checks, {len(failed)} failed; zeta and psi/g invariance max deviation={inv:.2e}")
    assert ok, failed


def test_criterion_8_reparametrization(verdict):
    sys = builtin_system("harmonic-rif:exp(x)")
    kappa = scalar_from_expr("exp(x)")
    N = lc.normalizer_gradient(sys.H)
    pts = sample_region(default_region(sys), 50, seed=0)
    worst = max(abs(lc.reparametrize_mu(N.mu(p), N.W, kappa, p) - lc.mu_from_bracket(sys.V, N.W, p))
                for p in pts)
    ok = len(pts) == 50 and worst <= 1e-10
    verdict(8, ok, f"reparametrized mu vs bracket over 50 points max={worst:.2e}")
    assert ok


def test_criterion_9_parser_differentiator(verdict):
    pairs = sample_pairs(100, seed=2024)
    fd_worst, fold_bad = 0.0, 0
    for e, p in pairs:
        for var in ("x", "y"):
            d = ex.differentiate(e, var)
            s = ex.evaluate(d, p)
            fd_worst = max(fd_worst, abs(s - central_difference(e, var, p)) / max(1.0, abs(s)))
            if ex.evaluate(ex.fold(d), p) != s:
                fold_bad += 1
        if ex.evaluate(ex.fold(e), p) != ex.evaluate(e, p):
            fold_bad += 1
    ok = len(pairs) == 100 and fd_worst <= 1e-5 and fold_bad == 0
    verdict(9, ok, f"100 random pairs, symbolic vs FD max rel={fd_worst:.2e}, fold mismatches={fold_bad}")
    assert ok
