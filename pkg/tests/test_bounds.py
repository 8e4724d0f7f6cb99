"""Touchdown-time and touchdown-location estimates.

The closed-form blow-up time for the scalar Riccati comparison equation is
verified against an adaptive ODE integration before anything downstream
relies on it; the eigenvalue table for the unit ball is checked against
the square of the first Bessel zero and pi^2.
"""

import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from quenchlab.bounds import (
    DomainError,
    NotApplicable,
    blowup_time_F,
    bound_gg2,
    bound_lower_TL,
    bound_upper_T1,
    bounds_report_to_dict,
    dirichlet_eigenvalue_ball,
    evaluate_all,
    ingredients,
    large_lambda_bounds,
    location_bound_check,
)
from quenchlab.dynamics import QuenchReport, TimeConfig, integrate
from quenchlab.mesh import Field, Slab, build_mesh
from quenchlab.profiles import Constant, SlabSinPiecewise, evaluate
from quenchlab.steady import SteadyBranch, SteadyState

BESSEL_J0_FIRST_ZERO_SQ = 5.783185962946785  # (first zero of J_0)^2


# ---------------------------------------------------------------------------
# the Riccati blow-up clock


def test_blowup_time_exact_angles():
    assert blowup_time_F(1.0, 1.0, 0.0) == pytest.approx(math.pi / 2.0, abs=1e-15)
    assert blowup_time_F(1.0, 4.0, 0.5) == pytest.approx(3.0 * math.pi / 8.0,
                                                         abs=1e-15)


def test_blowup_time_against_adaptive_ode(rng):
    # integrate F' = a + b F^2 from F(0) = -E0 to the 1e8 threshold and add
    # the analytic tail of the pure-quadratic regime
    for _ in range(100):
        a = float(10.0 ** rng.uniform(-1.0, 1.0))
        b = float(10.0 ** rng.uniform(-1.0, 1.0))
        E0 = float(rng.uniform(0.0, 0.99))

        def hit(t, y):
            return y[0] - 1e8

        hit.terminal = True
        hit.direction = 1.0
        sol = solve_ivp(lambda t, y: [a + b * y[0] ** 2], (0.0, 1e3), [-E0],
                        rtol=1e-10, atol=1e-12, events=hit, dense_output=False)
        assert sol.t_events[0].size == 1
        t_num = sol.t_events[0][0] + 1.0 / (b * 1e8)
        assert t_num == pytest.approx(blowup_time_F(a, b, E0), rel=1e-6)


def test_blowup_time_guards():
    with pytest.raises(ValueError):
        blowup_time_F(0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        blowup_time_F(1.0, -1.0, 0.0)
    with pytest.raises(ValueError):
        blowup_time_F(1.0, 1.0, 1.0)


# ---------------------------------------------------------------------------
# ball eigenvalues


def test_ball_eigenvalue_table():
    assert dirichlet_eigenvalue_ball(1) == math.pi**2 / 4.0
    assert dirichlet_eigenvalue_ball(2) == pytest.approx(BESSEL_J0_FIRST_ZERO_SQ,
                                                         abs=1e-5)
    assert dirichlet_eigenvalue_ball(3) == pytest.approx(math.pi**2, abs=1e-5)
    from scipy.special import jn_zeros

    assert BESSEL_J0_FIRST_ZERO_SQ == pytest.approx(jn_zeros(0, 1)[0] ** 2,
                                                    rel=1e-14)


# ---------------------------------------------------------------------------
# early upper estimate


def test_gg2_at_twice_the_fold():
    star = 1.4
    expect = 24.0 / (5.0 * star) * (1.0 + math.sqrt(5.0 / 6.0))
    assert bound_gg2(2.0 * star, star, 1.0) == pytest.approx(expect, rel=1e-12)


def test_gg2_large_load_asymptote():
    star = 1.4
    lam = 1e6 * star
    asymptote = 8.0 / (3.0 * lam) * (1.0 + 2.0**-0.5)
    assert bound_gg2(lam, star, 1.0) == pytest.approx(asymptote, rel=1e-2)


def test_gg2_guards():
    with pytest.raises(NotApplicable):
        bound_gg2(3.0, 1.4, 0.0)
    with pytest.raises(DomainError):
        bound_gg2(1.0, 1.4, 1.0)


# ---------------------------------------------------------------------------
# fold-eigenfunction estimates


def test_TL_inverse_sqrt_scaling(branch_f1_401):
    star = branch_f1_401.lambda_star
    vals = [bound_lower_TL(star + dx, branch_f1_401, Constant(1.0))
            * math.sqrt(dx) for dx in (0.01, 0.1, 0.5, 1.0, 5.0)]
    assert max(vals) - min(vals) < 1e-12 * vals[0]


def test_TL_eigenfunction_scale_invariance(branch_f1_401):
    br = branch_f1_401
    doubled = dataclasses.replace(
        br, phi_star=Field(br.phi_star.mesh, 2.0 * br.phi_star.values))
    lam = br.lambda_star + 0.3
    assert bound_lower_TL(lam, doubled, Constant(1.0)) == pytest.approx(
        bound_lower_TL(lam, br, Constant(1.0)), rel=1e-14)


def synthetic_branch_unit_mass():
    """Branch stub with psi* = 1 and lambda* = 1/3 on the unit slab (0,1)."""
    mesh = build_mesh(Slab(0.0, 1.0), 101)
    ones = Field(mesh, np.ones(mesh.node_count))
    zero = Field(mesh, np.zeros(mesh.node_count))
    st = SteadyState(lam=1.0 / 3.0, w=zero, residual_norm=0.0, mu1=0.0)
    return SteadyBranch(states=(st,), fold_state=st, lambda_star=1.0 / 3.0,
                        w_star=zero, phi_star=ones, psi_star=ones, fold_index=0)


def test_T1_arctan_right_angle_on_synthetic_branch():
    # I1 = J = 1 by construction and I2 = 3 lambda* / J = 1, so at
    # lam - lambda* = 1 the arctan form is exactly pi/4 + pi/4
    br = synthetic_branch_unit_mass()
    val = bound_upper_T1(br.lambda_star + 1.0, br, Constant(1.0), form="arctan")
    assert val == pytest.approx(math.pi / 2.0, abs=1e-12)
    # simplified form: sqrt(3) pi/4 * sqrt(J/(lambda* I1)) = sqrt(3) pi/4 * sqrt(3)
    simp = bound_upper_T1(br.lambda_star + 1.0, br, Constant(1.0),
                          form="simplified")
    assert simp == pytest.approx(3.0 * math.pi / 4.0, abs=1e-12)


def test_T1_simplified_dominates_arctan(branch_f1_401):
    star = branch_f1_401.lambda_star
    for lam in (1.1 * star, 1.5 * star, 3.0 * star, 10.0 * star):
        a = bound_upper_T1(lam, branch_f1_401, Constant(1.0), form="arctan")
        s = bound_upper_T1(lam, branch_f1_401, Constant(1.0), form="simplified")
        assert a <= s
    with pytest.raises(ValueError):
        bound_upper_T1(2.0, branch_f1_401, Constant(1.0), form="exact")
    with pytest.raises(DomainError):
        bound_upper_T1(0.5 * star, branch_f1_401, Constant(1.0))


def test_vanishing_profile_disables_T1(branch_falpha_801):
    f = SlabSinPiecewise()
    with pytest.raises(NotApplicable):
        bound_upper_T1(5.0, branch_falpha_801, f)
    with pytest.raises(NotApplicable):
        bound_gg2(5.0, branch_falpha_801.lambda_star, 0.0)


# ---------------------------------------------------------------------------
# large-load sandwich


def test_sandwich_constant_profile_collapses():
    ll = large_lambda_bounds(1e5, Constant(1.0), 1.0, 1)
    assert ll.lower == pytest.approx(1.0 / 3e5, rel=1e-15)
    assert ll.upper == ll.lower
    assert ll.epsilon == 0.0
    assert ll.delta == math.inf
    assert ll.lambda0_indicator
    assert ll.gap_coefficient == 0.0


def test_sandwich_two_bump_profile_formulas():
    lam = 1e5
    alpha = 1.0
    K = 8.0
    D = math.pi**2 / 4.0
    ll = large_lambda_bounds(lam, SlabSinPiecewise(), alpha, 1, K=K)
    eps = 2.0 * D ** (1.0 / 3.0) * K ** (2.0 / 3.0) / lam ** (1.0 / 3.0)
    assert ll.epsilon == pytest.approx(eps, rel=1e-12)
    assert ll.delta == pytest.approx((eps / 16.0), rel=1e-12)  # (eps/2K)^(1/1)
    assert ll.lower == pytest.approx(1.0 / (3.0 * lam), rel=1e-9)
    assert ll.upper == pytest.approx(1.0 / (3.0 * lam * (1.0 - eps)), rel=1e-9)
    assert ll.lambda0_indicator
    assert ll.gap_exponent == -4.0 / 3.0


def test_sandwich_upper_vanishes_at_moderate_load():
    # at lam = 10 the shrinkage eps exceeds sup f and no upper is produced
    ll = large_lambda_bounds(10.0, SlabSinPiecewise(), 1.0, 1, K=8.0)
    assert ll.upper is None
    assert not ll.lambda0_indicator
    assert ll.lower > 0.0


def test_sandwich_gap_decay_rate():
    # the width obeys gap ~ coefficient * lam^(-4/3) once eps << sup f;
    # three decades deep into that regime the fitted slope settles
    lams = np.array([1e10, 1e12, 1e14])
    gaps = []
    for lam in lams:
        ll = large_lambda_bounds(float(lam), SlabSinPiecewise(), 1.0, 1, K=8.0)
        gaps.append(ll.upper - ll.lower)
    slope = np.polyfit(np.log(lams), np.log(gaps), 1)[0]
    assert slope == pytest.approx(-4.0 / 3.0, abs=0.05)
    ll = large_lambda_bounds(1e12, SlabSinPiecewise(), 1.0, 1, K=8.0)
    predicted = ll.gap_coefficient * 1e12**ll.gap_exponent
    assert (ll.upper - ll.lower) == pytest.approx(predicted, rel=1e-2)


# ---------------------------------------------------------------------------
# touchdown location


def make_report(points):
    return QuenchReport(quenched=True, T=1.0, quench_set=tuple(points),
                        M=1.0, p=1.0 / 3.0, fit_residual=0.0,
                        last_resolved_gap=1e-3)


def test_location_defect_formula():
    f = SlabSinPiecewise()
    rep = make_report((-0.204, 0.204))
    check = location_bound_check(rep, f, 1e5, 1.0)
    assert check.exponent_target == pytest.approx(1.0 / 3.0, abs=1e-15)
    for a, lhs in zip(rep.quench_set, check.lhs):
        assert lhs == pytest.approx(1.0 - evaluate(f, a) ** (1.0 / 3.0),
                                    abs=1e-12)
        assert 0.012 < lhs < 0.016


def test_location_empty_set_raises():
    with pytest.raises(ValueError):
        location_bound_check(make_report(()), SlabSinPiecewise(), 1e5, 1.0)


# ---------------------------------------------------------------------------
# aggregate report


def test_ingredients_energy_window(branch_f1_401):
    ing = ingredients(branch_f1_401, Constant(1.0), 5.0, 1.0, 1)
    assert 0.0 < ing.E0 < 1.0
    assert ing.M == 1.0
    assert ing.K == 0.0
    assert ing.D_N == math.pi**2 / 4.0
    assert ing.I2_26 == pytest.approx(3.0 * branch_f1_401.lambda_star / ing.J_26,
                                      rel=1e-14)
    assert ing.I1_26 > 0.0 and ing.J_26 > 0.0


def test_evaluate_all_near_fold(branch_f1_401):
    mesh = build_mesh(Slab(-0.5, 0.5), 401)
    lam = 1.05 * branch_f1_401.lambda_star
    _, qrep = integrate(lam, Constant(1.0), mesh, TimeConfig())
    assert qrep.quenched
    rep = evaluate_all(lam, branch_f1_401, Constant(1.0), mesh,
                       quench_report=qrep)
    assert rep.flags["bound_1_2"] == "ok"
    assert rep.flags["T_L"] == "ok"
    assert rep.flags["T1"] == "ok"
    assert rep.ordering_lower_pass is True
    assert rep.ordering_upper_pass is True
    assert rep.T_L < rep.T_measured < rep.T1_arctan
    assert rep.flags["large_lambda_sandwich"] == "below lambda0"


def test_evaluate_all_below_fold(branch_f1_401):
    mesh = build_mesh(Slab(-0.5, 0.5), 401)
    rep = evaluate_all(1.0, branch_f1_401, Constant(1.0), mesh)
    assert rep.bound_1_2 is None and rep.T_L is None
    assert rep.T1_arctan is None and rep.T1_simplified is None
    assert rep.ordering_lower_pass is None
    reason = "no finite touchdown below the fold value"
    assert rep.flags["T_L"] == reason
    assert rep.large_lambda_lower > 0.0


def test_evaluate_all_vanishing_profile_flags(branch_falpha_801):
    mesh = branch_falpha_801.w_star.mesh
    rep = evaluate_all(5.0, branch_falpha_801, SlabSinPiecewise(), mesh)
    assert rep.bound_1_2 is None
    assert "inf f" in rep.flags["bound_1_2"]
    assert rep.T1_arctan is None
    assert "vanishes" in rep.flags["T1"]
    assert rep.T_L is not None  # the lower estimate needs no positivity


def test_report_dict_round_trip(branch_f1_401):
    mesh = build_mesh(Slab(-0.5, 0.5), 401)
    rep = evaluate_all(2.0, branch_f1_401, Constant(1.0), mesh)
    d = bounds_report_to_dict(rep)
    assert d["lambda"] == 2.0
    assert d["T_L"] == rep.T_L
    assert isinstance(d["flags"], dict)
    assert set(d) >= {"lambda", "lambda_star", "bound_1_2", "T_L",
                      "T1_simplified", "T1_arctan", "large_lambda_lower",
                      "large_lambda_upper", "epsilon", "delta", "flags"}
