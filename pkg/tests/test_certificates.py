import cmath
import math

import numpy as np
import pytest

from pidcert import (
    ComplexInitialState,
    ConeCL,
    DegenerateTriple,
    EigenTriple,
    InsufficientData,
    NotOnFacet,
    ParameterOutOfRange,
    PidGains,
    SecondOrderLoop,
    SuperlinearLoop,
    ThirdOrderLoop,
    ZeroIntegralGain,
    build_modal_transform,
    catalog_lookup,
    comparison_lower_bound,
    cone_contains,
    cone_facet_flux,
    divergence_plan,
    equilibrium_state,
    error_divergence_constant,
    escape_error_lower_bound,
    escape_time_bound,
    exponential_rate_fit,
    initial_state_from_physical,
    lambda_to_gains,
    lyapunov_derivative_along,
    lyapunov_series,
    lyapunov_value,
    modal_coordinates,
    modal_initial_state,
    multiple_root_candidates,
    physical_to_proof,
    pick_cone_parameter,
    reduced_divergence_plan,
    sample_omega_lambda,
    second_order_field,
    select_feedthrough,
    select_feedthrough_reduced,
    spectral_report,
    third_order_char_poly,
    third_order_field,
    third_order_initial_state,
    two_mode_error,
    vdot_margin,
)
from pidcert.certificates import BeyondBound, companion_core
from pidcert.closed_loop import superlinear_field
from pidcert.errors import ShiftUndefined
from pidcert.integrator import IntegratorConfig, integrate

LAM_123 = EigenTriple(-1.0, -2.0, -3.0)
LAM_12100 = EigenTriple(-1.0, -2.0, -100.0)
PRODUCT_12100 = math.sqrt(29405.0 / 94128804.0) * math.sqrt(8.0001)


# --- modal transform --------------------------------------------------------


def test_modal_transform_displayed_entries():
    tr = build_modal_transform(LAM_123, 1)
    np.testing.assert_allclose(tr.P_core[0], [-1.0, -0.5, 1.0 / 9.0], rtol=1e-15)
    assert tr.P_inv_core[0, 2] == pytest.approx(-0.5, rel=1e-15)
    # last column of the inverse in closed form
    l1, l2, l3 = LAM_123.as_tuple()
    np.testing.assert_allclose(
        tr.P_inv_core[:, 2],
        [
            l1 / ((l3 - l1) * (l2 - l1)),
            l2 / ((l3 - l2) * (l1 - l2)),
            l3 * l3 / ((l3 - l1) * (l3 - l2)),
        ],
        rtol=1e-15,
    )


def test_modal_transform_blocks_scale_with_dimension():
    tr = build_modal_transform(LAM_123, 2)
    assert tr.P.shape == (6, 6)
    np.testing.assert_allclose(tr.P @ tr.P_inverse, np.eye(6), atol=1e-12)


def test_modal_transform_rejects_degenerate():
    with pytest.raises(DegenerateTriple):
        build_modal_transform(EigenTriple(-1, -1, -3), 1)
    with pytest.raises(DegenerateTriple):
        build_modal_transform(EigenTriple(-1, -2, 0), 1)


def test_modal_reconstruction_sampled_members():
    for seed in range(8):
        lam = sample_omega_lambda(1.0, seed=seed)
        gains = lambda_to_gains(lam)
        for n in (1, 2, 3):
            tr = build_modal_transform(lam, n)
            A = np.kron(companion_core(gains), np.eye(n))
            recon = tr.P @ tr.J @ tr.P_inverse
            assert np.linalg.norm(recon - A) <= 1e-9 * np.linalg.norm(A)
            assert tr.p_prime_norm() <= __import__("pidcert").h(lam) * (1 + 1e-12)


# --- Lyapunov certificate ----------------------------------------------------


def test_lyapunov_value_examples():
    assert lyapunov_value(np.zeros(3), LAM_123) == 0.0
    assert lyapunov_value(np.array([1.0, 0, 0]), LAM_123) == pytest.approx(3.0)
    assert lyapunov_value(np.array([1.0, 1, 1]), LAM_123) == pytest.approx(5.5)


def test_vdot_margin_examples():
    assert vdot_margin(LAM_12100, 1.0) == pytest.approx(-200.0 * (1.0 - PRODUCT_12100), rel=1e-12)
    assert vdot_margin(LAM_123, 0.0) == pytest.approx(-6.0)
    assert vdot_margin(LAM_123, 1.0) == pytest.approx(
        -6.0 * (1.0 - math.sqrt(14.0 / 4.0) * math.sqrt(73.0 / 9.0)), rel=1e-12
    )
    assert vdot_margin(LAM_123, 1.0) > 0  # inconclusive certificate


def test_vdot_zero_at_equilibrium():
    loop = SecondOrderLoop(
        plant=catalog_lookup("sine_mix", {"alpha": 0.5, "beta": 0.5}),
        gains=lambda_to_gains(LAM_12100),
        setpoint=np.array([2.0]),
    )
    tr = build_modal_transform(LAM_12100, 1)
    eq = equilibrium_state(loop)
    assert abs(lyapunov_derivative_along(loop, tr, eq)) < 1e-9


def test_vdot_pure_diagonal_decay_for_zero_plant():
    loop = SecondOrderLoop(
        plant=catalog_lookup("zero", {}),
        gains=lambda_to_gains(LAM_123),
        setpoint=np.array([0.0]),
    )
    tr = build_modal_transform(LAM_123, 1)
    rng = np.random.default_rng(2)
    for _ in range(20):
        state = rng.uniform(-10, 10, size=3)
        Z = modal_coordinates(tr, physical_to_proof(loop, state))
        expected = (-1.0) * (-2.0) * (-3.0) * float(Z @ Z)
        assert lyapunov_derivative_along(loop, tr, state) == pytest.approx(
            expected, rel=1e-12, abs=1e-12
        )


def test_vdot_certified_bound_on_random_states():
    lam = LAM_12100
    margin = vdot_margin(lam, 1.0)
    assert margin < 0
    loop = SecondOrderLoop(
        plant=catalog_lookup("sine_mix", {"alpha": 0.6, "beta": 0.8}),
        gains=lambda_to_gains(lam),
        setpoint=np.array([1.5]),
    )
    tr = build_modal_transform(lam, 1)
    rng = np.random.default_rng(3)
    for _ in range(200):
        state = rng.uniform(-30, 30, size=3)
        Z = modal_coordinates(tr, physical_to_proof(loop, state))
        z_sq = float(Z @ Z)
        assert lyapunov_derivative_along(loop, tr, state) <= margin * z_sq + 1e-6 * z_sq


def test_vdot_requires_integral_gain():
    loop = SecondOrderLoop(
        plant=catalog_lookup("zero", {}),
        gains=PidGains(-1.0, 0.0, -1.0),
        setpoint=np.array([0.0]),
    )
    tr = build_modal_transform(LAM_123, 1)
    with pytest.raises(ShiftUndefined):
        lyapunov_derivative_along(loop, tr, np.ones(3))


def test_vdot_matches_finite_difference_along_trajectory():
    lam = EigenTriple(-0.1, -1.1, -10.0)
    gains = lambda_to_gains(lam)
    loop = SecondOrderLoop(
        plant=catalog_lookup("sine_mix", {"alpha": 0.6, "beta": 0.8}),
        gains=gains,
        setpoint=np.array([3.0]),
    )
    tr = build_modal_transform(lam, 1)
    y0 = initial_state_from_physical(np.array([-2.0]), np.array([1.0]), loop.setpoint)
    h_step = 2e-5
    traj = integrate(
        lambda y: second_order_field(loop, y),
        y0,
        IntegratorConfig(method="rk4_fixed", step=h_step, t_max=0.2),
    )
    v = lyapunov_series(loop, tr, traj)
    for k in range(1, len(v) - 1, 200):
        fd = (v[k + 1] - v[k - 1]) / (traj.times[k + 1] - traj.times[k - 1])
        analytic = lyapunov_derivative_along(loop, tr, traj.states[k])
        assert abs(analytic - fd) <= max(1e-6 * abs(analytic), 1e-9) + 3e-6 * abs(v[k])


def test_exponential_rate_fit_examples():
    traj = integrate(lambda y: -y, [1.0], IntegratorConfig(t_max=40.0), equilibrium=[0.0])
    assert exponential_rate_fit(traj, [0.0]) == pytest.approx(-1.0, rel=0.02)

    lam = LAM_12100
    loop = SecondOrderLoop(
        plant=catalog_lookup("zero", {}), gains=lambda_to_gains(lam), setpoint=np.array([1.0])
    )
    eq = equilibrium_state(loop)
    y0 = initial_state_from_physical(np.array([4.0]), np.array([-3.0]), loop.setpoint)
    traj = integrate(
        lambda y: second_order_field(loop, y), y0, IntegratorConfig(t_max=60.0), equilibrium=eq
    )
    # slowest closed-loop pole dominates the decay
    assert exponential_rate_fit(traj, eq) == pytest.approx(-1.0, rel=0.05)

    flat = integrate(lambda y: 0.0 * y, [1.0], IntegratorConfig(t_max=2.0))
    with pytest.raises(InsufficientData):
        exponential_rate_fit(flat, [1.0])


# --- invariant cone ----------------------------------------------------------


def test_cone_contains_examples():
    cone = ConeCL(4.0)
    assert cone_contains(cone, cone.vertex)
    assert not cone_contains(cone, [0.0, 4.0, 4.5])  # velocity gap below 1
    # the third defining inequality y0 + L >= L excludes negative integrals
    assert cone_contains(cone, [-1.0, 6.0, 8.0]) is False
    assert cone_contains(cone, [1.0, 6.0, 8.0]) is True
    assert cone_contains(ConeCL(1.0), [0.5, 3.0, 5.0])


def test_cone_facet_flux_values():
    cone = ConeCL(7.0)
    loop = SuperlinearLoop(epsilon=1.0, gains=PidGains(-1, -1, -1), setpoint=0.0)
    # vertex lies on every facet; the S2 flux is exactly 1 there
    assert cone_facet_flux(loop, cone, cone.vertex, "S2") == 1.0
    assert cone_facet_flux(loop, cone, cone.vertex, "S1") == 7.0
    # S2 edge points shared with S3 keep flux exactly 1; interior S2 points
    # have strictly larger flux
    edge = np.array([2.0, 9.0, 10.0])
    assert cone_facet_flux(loop, cone, edge, "S2") == 1.0
    off_edge = np.array([2.0, 9.0, 12.5])
    assert cone_facet_flux(loop, cone, off_edge, "S2") == pytest.approx(3.5)
    assert cone_facet_flux(loop, cone, off_edge, "S2") >= 1.0


def test_cone_facet_flux_s1_equals_first_error_state():
    cone = ConeCL(3.0)
    loop = SuperlinearLoop(epsilon=0.5, gains=PidGains(0.3, -0.2, 0.1), setpoint=1.0)
    for y1 in (3.0, 5.5, 40.0):
        point = np.array([0.0, y1, y1 + 2.0])
        assert cone_facet_flux(loop, cone, point, "S1") == y1
        assert cone_facet_flux(loop, cone, point, "S1") >= cone.L_cone


def test_cone_facet_flux_s3_positive_with_picked_parameter():
    gains = PidGains(-1.0, -1.0, -1.0)
    L_cone = pick_cone_parameter(gains, 1.0, 0.0)
    cone = ConeCL(L_cone)
    loop = SuperlinearLoop(epsilon=1.0, gains=gains, setpoint=0.0)
    rng = np.random.default_rng(9)
    for _ in range(100):
        y0 = rng.uniform(0.0, 50.0)
        y2 = y0 + L_cone + rng.uniform(0.0, 50.0) + 1.0
        y1 = y2 - 1.0  # facet membership uses exact float identities
        point = np.array([y0, y1, y2])
        assert cone_facet_flux(loop, cone, point, "S3") > 0.0


def test_cone_facet_flux_rejects_off_facet_points():
    cone = ConeCL(2.0)
    loop = SuperlinearLoop(epsilon=1.0, gains=PidGains(0, 0, 0), setpoint=0.0)
    with pytest.raises(NotOnFacet):
        cone_facet_flux(loop, cone, [1.0, 4.0, 6.0], "S1")  # y0 != 0
    with pytest.raises(ValueError):
        cone_facet_flux(loop, cone, cone.vertex, "S9")


def test_pick_cone_parameter_seeds():
    assert pick_cone_parameter(PidGains(0, 0, 0), 1.0, 0.0) == 1.0
    assert pick_cone_parameter(PidGains(-1, -1, -1), 1.0, 0.0) == 7.0
    with pytest.raises(ParameterOutOfRange):
        pick_cone_parameter(PidGains(0, 0, 0), 0.0, 0.0)


def test_pick_cone_parameter_verified_on_independent_samples():
    # independent uniform draw, not the Halton set used by the search
    gains = PidGains(-12.11, -1.1, -11.2)
    eps = 0.5
    y_star = 1.0
    L_cone = pick_cone_parameter(gains, eps, y_star)
    loop = SuperlinearLoop(epsilon=eps, gains=gains, setpoint=y_star)
    rng = np.random.default_rng(17)
    offsets = rng.uniform(0.0, 1e5, size=(3000, 3))
    y0 = offsets[:, 0]
    y1 = y0 + L_cone + offsets[:, 1]
    y2 = y1 + 1.0 + offsets[:, 2]
    power = ((y1 + y_star) ** 2 + y2**2) ** (0.5 * (1 + eps))
    field_y2 = power + gains.ki * y0 + gains.kp * y1 + gains.kd * y2
    assert np.all(field_y2 - (y2 + 0.5 * y2 ** (1 + eps)) >= 0.0)
    assert np.all((3.0 * y2**2) ** (0.5 * (1 + eps)) - field_y2 >= 0.0)


def test_escape_time_bound_values():
    assert escape_time_bound(1.0, 1.0) == 1.0
    assert escape_time_bound(1.0, 7.0) == 0.25
    assert escape_time_bound(0.5, 3.0) == 2.0


def test_comparison_lower_bound_values():
    assert comparison_lower_bound(1.0, 1.0, 0.0) == 2.0  # exactly L + 1 at t = 0
    assert comparison_lower_bound(1.0, 1.0, 0.5) == pytest.approx(4.0)
    with pytest.raises(BeyondBound):
        comparison_lower_bound(1.0, 1.0, 1.0)
    # monotone and unbounded toward the escape bound
    values = [comparison_lower_bound(1.0, 1.0, t) for t in (0.0, 0.3, 0.6, 0.9, 0.999)]
    assert all(b > a for a, b in zip(values, values[1:]))
    assert values[-1] > 1e3


def test_escape_error_lower_bound():
    assert escape_error_lower_bound(7.0, 0.0) == 7.0
    assert escape_error_lower_bound(7.0, 0.25) == 9.0


def test_error_divergence_constant_caps_field():
    # on the cone the upper growth inequality says the error-state slope
    # de/dy2 stays above const / y2^eps
    gains = PidGains(-1, -1, -1)
    for eps in (0.5, 1.0):
        c_eps = error_divergence_constant(eps)
        L_cone = pick_cone_parameter(gains, eps, 0.0)
        loop = SuperlinearLoop(epsilon=eps, gains=gains, setpoint=0.0)
        rng = np.random.default_rng(23)
        for _ in range(50):
            y0 = rng.uniform(0, 100)
            y1 = y0 + L_cone + rng.uniform(0, 100)
            y2 = y1 + 1 + rng.uniform(0, 100)
            field = superlinear_field(loop, np.array([y0, y1, y2]))
            assert field[2] <= y2 ** (1 + eps) / c_eps * (1 + 1e-12)


# --- third-order obstruction -------------------------------------------------


def test_spectral_report_zero_gains():
    rep = spectral_report(PidGains(0, 0, 0), 1.0)
    np.testing.assert_allclose(
        sorted(abs(z) for z in rep.eigenvalues), [0, 0, 0, 1], atol=1e-9
    )
    assert rep.real_part_sum == pytest.approx(1.0, abs=1e-12)
    assert rep.max_real_part == pytest.approx(1.0, abs=1e-9)
    assert not rep.distinct
    assert all(abs(w) < 1e-9 for w in rep.multiple_root_set)


def test_trace_identity_random_gains():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        gains = PidGains(*rng.uniform(-5, 5, size=3))
        c = float(rng.uniform(-3, 3))
        rep = spectral_report(gains, c)
        assert abs(rep.real_part_sum - c) <= 1e-9
        if c > 0:
            assert rep.max_real_part > 0


def test_select_feedthrough_examples():
    gains = PidGains(0.0, -1.0, 0.0)
    c = select_feedthrough(gains, 1.0)
    assert 0.0 < c <= 1.0
    rep = spectral_report(gains, c)
    assert rep.distinct
    for w in rep.multiple_root_set:
        scale = max(1.0, abs(w)) ** 4 + abs(c) * abs(w) ** 3 + abs(w) + 1.0
        assert abs(third_order_char_poly(gains, c, w)) > 1e-9 * scale

    with pytest.raises(ZeroIntegralGain):
        select_feedthrough(PidGains(1.0, 0.0, 1.0), 1.0)


def test_multiple_root_candidates_flag_bad_feedthrough():
    # force a multiple root: quartic (z-1)^2 (z+1) (z+3) has c = sum = -2
    # expand: (z^2-2z+1)(z^2+4z+3) = z^4 +2z^3 -4z^2 -2z +3
    # so z^4 - c z^3 - kd z^2 - kp z - ki with c=-2, kd=4, kp=2, ki=-3.
    # A true double root splits by ~sqrt(eps) under the eigenvalue solver, so
    # the robust detector is the residual at the feedthrough-independent
    # candidate set, not the numeric distinctness flag.
    gains = PidGains(kp=2.0, ki=-3.0, kd=4.0)
    candidates = multiple_root_candidates(gains)
    w_star = min(candidates, key=lambda w: abs(w - 1.0))
    assert abs(w_star - 1.0) < 1e-9
    assert abs(third_order_char_poly(gains, -2.0, w_star)) < 1e-9  # collision: c=-2 is bad
    assert abs(third_order_char_poly(gains, 0.37, w_star)) > 1e-3  # generic c is clean


def test_modal_initial_state_guard_and_vandermonde():
    roots = (-2.0, -1.0, 0.5, 3.0)
    np.testing.assert_array_equal(modal_initial_state(roots, np.zeros(4)), np.zeros(4))
    y0 = modal_initial_state(roots, [0, 0, -1, 1])
    np.testing.assert_allclose(y0.real, [0.0, 2.5, 8.75, 26.875], rtol=1e-14)
    np.testing.assert_allclose(y0.imag, 0.0, atol=1e-14)


def test_third_order_initial_state_real_case():
    # quartic (z+2)(z+1)(z-0.5)(z-3): c=0.5, kd=7, kp=2.5, ki=-3
    gains = PidGains(kp=2.5, ki=-3.0, kd=7.0)
    y0 = third_order_initial_state(gains, 0.5)
    np.testing.assert_allclose(y0, [0.0, 2.5, 8.75, 26.875], rtol=1e-9)
    # dominant-mode difference at t = 0 matches the closed form
    assert two_mode_error(0.5, 3.0, 0.0) == pytest.approx(2.5)


def test_third_order_initial_state_complex_raises():
    gains = PidGains(0.0, -1.0, 0.0)
    c = select_feedthrough(gains, 1.0)
    with pytest.raises(ComplexInitialState):
        third_order_initial_state(gains, c)


def test_two_mode_error_values():
    assert two_mode_error(1.0, 2.0, 0.0) == pytest.approx(1.0)
    assert two_mode_error(1.0, 2.0, 1.0).real == pytest.approx(
        2 * math.e**2 - math.e, rel=1e-14
    )
    # conjugate pair magnitude identity
    l3 = 0.4 + 1.7j
    l2 = l3.conjugate()
    for t in (0.0, 0.7, 2.3):
        direct = abs(two_mode_error(l2, l3, t))
        factored = abs(cmath.exp((0.4 - 1.7j) * t)) * abs(l3 * cmath.exp(2 * 1.7j * t) - l2)
        assert direct == pytest.approx(factored, rel=1e-12)


def test_divergence_plan_real_dominant_matches_two_mode_start():
    gains = PidGains(kp=2.5, ki=-3.0, kd=7.0)
    plan = divergence_plan(gains, 0.5)
    assert not plan.used_fallback
    np.testing.assert_allclose(plan.initial_state, [0.0, 2.5, 8.75, 26.875], rtol=1e-9)
    assert plan.closed_form_error(0.0).real == pytest.approx(2.5)
    # closed form equals the two-mode expression in the real case
    for t in (0.1, 1.0):
        assert plan.closed_form_error(t).real == pytest.approx(
            two_mode_error(0.5, 3.0, t).real, rel=1e-9
        )


def test_divergence_plan_conjugate_fallback_is_real_and_divergent():
    gains = PidGains(0.0, -1.0, 0.0)
    c = select_feedthrough(gains, 1.0)
    plan = divergence_plan(gains, c)
    assert plan.used_fallback
    assert np.all(np.isreal(plan.initial_state))
    loop = ThirdOrderLoop(gains=gains, c=c)
    traj = integrate(
        lambda y: third_order_field(loop, y),
        plan.initial_state,
        IntegratorConfig(t_max=60.0, diverge_norm=1e8),
    )
    closed = plan.closed_form_error_at(traj.times)
    norms = np.linalg.norm(traj.states, axis=1)
    window = norms <= 1e8
    np.testing.assert_allclose(
        traj.states[window, 1],
        np.real(closed[window]),
        atol=1e-6 * np.maximum(norms[window], 1.0).max(),
    )
    assert np.max(np.abs(traj.states[:, 1])) > 1e6


def test_reduced_variant_diverges():
    gains = PidGains(kp=-11.0, ki=0.0, kd=-6.0)
    c = select_feedthrough_reduced(gains, 1.0)
    plan = reduced_divergence_plan(gains, c)
    assert plan.error_row == 0
    t_probe = np.linspace(0.0, 30.0, 50)
    values = np.abs(plan.closed_form_error_at(t_probe))
    assert values[-1] > 1e3
    with pytest.raises(ParameterOutOfRange):
        select_feedthrough_reduced(PidGains(0.0, 0.0, 0.0), 1.0)


def test_lyapunov_series_matches_pointwise_values():
    lam = LAM_12100
    loop = SecondOrderLoop(
        plant=catalog_lookup("sine_mix", {"alpha": 0.3, "beta": 0.4}),
        gains=lambda_to_gains(lam),
        setpoint=np.array([1.0]),
    )
    tr = build_modal_transform(lam, 1)
    y0 = initial_state_from_physical(np.array([5.0]), np.array([0.0]), loop.setpoint)
    traj = integrate(
        lambda y: second_order_field(loop, y),
        y0,
        IntegratorConfig(t_max=5.0),
        equilibrium=equilibrium_state(loop),
    )
    series = lyapunov_series(loop, tr, traj)
    for k in (0, len(series) // 2, len(series) - 1):
        Z = modal_coordinates(tr, physical_to_proof(loop, traj.states[k]))
        assert series[k] == pytest.approx(lyapunov_value(Z, lam), rel=1e-12)


def test_lyapunov_certificate_bundle():
    from pidcert import lyapunov_certificate

    cert = lyapunov_certificate(LAM_12100, 1.0)
    assert cert.conclusive and cert.margin == pytest.approx(vdot_margin(LAM_12100, 1.0))
    blunt = lyapunov_certificate(LAM_123, 1.0)
    assert not blunt.conclusive and blunt.margin > 0
