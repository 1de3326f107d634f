import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracbeam.control import (
    H2,
    QuadratureUnderResolved,
    SpaceSpec,
    TargetOutsideSpan,
    control_moments,
    dual_norm,
    hum_control,
    null_control_report,
    random_symmetric_target,
    solve_moment_problem,
    solve_residual,
    synthesize_control,
    verify_null_control,
    weighted_norm,
)
from fracbeam.model import SystemParams
from fracbeam.observability import assemble_moment_system, gap_report, ingham_threshold, observability_constants
from fracbeam.spectrum import conservative_spectrum

UNIFORM = SystemParams(1.0, 1.0, 1.0, 1.0, gamma=1.0, eta=1.0, alpha=0.5)


@pytest.fixture(scope="module")
def ms():
    modes = conservative_spectrum(UNIFORM, [n for n in range(-20, 21) if n])
    rep = gap_report(modes)
    T0 = ingham_threshold(UNIFORM)
    return assemble_moment_system(modes, rep.chain_keys(), 1.2 * T0, threshold=T0)


def _vec(target, ms):
    out = np.zeros(ms.size, dtype=complex)
    for k, v in target.items():
        out[ms.index_of(k)] = v
    return out


# norms -------------------------------------------------------------------------


def test_weighted_norm_examples():
    assert weighted_norm({(1, 4): 1.0}) == 1.0
    assert weighted_norm({(1, 3): 9.0}, SpaceSpec("D")) == pytest.approx(1.0)
    assert weighted_norm({(1, 3): 3.0, (2, 3): 9.0}, SpaceSpec("D1")) == pytest.approx(math.sqrt(2))
    assert weighted_norm({}, SpaceSpec("D")) == 0.0


def test_log_weight_is_omitted_at_index_one():
    log, plain = SpaceSpec("D1log"), SpaceSpec("D1")
    assert log.weight(1, 1) == plain.weight(1, 1) == 1.0
    assert log.weight(2, -1) == plain.weight(2, -1) == 1.0
    assert log.weight(1, 3) == pytest.approx(3 * math.log(3) ** 2)
    assert log.weight(2, 3) == pytest.approx(9 * math.log(3) ** 2)


def test_space_spec_validation():
    assert SpaceSpec("Vs", 1.5).weight(2, -4) == pytest.approx(8.0)
    for bad in (dict(tag="L2"), dict(tag="Vs"), dict(tag="D", s=1.0)):
        with pytest.raises(ValueError):
            SpaceSpec(**bad)
    with pytest.raises(ValueError):
        H2.weight(1, 0)


@given(st.sampled_from(["H2", "D", "D1", "D1log"]), st.integers(1, 2), st.integers(-500, 500).filter(bool))
def test_weights_positive_and_mirror_even(tag, b, n):
    spec = SpaceSpec(tag)
    assert spec.weight(b, n) > 0
    assert spec.weight(b, n) == spec.weight(b, -n)


# moment solve --------------------------------------------------------------------


def test_zero_target(ms):
    a = solve_moment_problem({}, ms)
    assert not np.any(a)
    ctrl = synthesize_control(a, ms)
    assert not np.any(ctrl.v)
    assert verify_null_control({}, ctrl, ms) == 0.0


def test_single_mode_target(ms):
    target = {(1, 1): 1.0}
    a = solve_moment_problem(target, ms)
    assert solve_residual(a, target, ms) <= 1e-12
    ctrl = synthesize_control(a, ms)
    moments = control_moments(ctrl, ms)
    assert np.linalg.norm(moments - _vec(target, ms)) <= 1e-8
    rep = null_control_report(target, ctrl, ms, T=ms.T)
    assert rep.relative_residual <= 1e-6 and rep.success


def test_duality_bound(ms):
    rng = np.random.default_rng(0)
    ell1 = observability_constants(ms).ell1
    for _ in range(5):
        target = random_symmetric_target(ms, rng)
        res = hum_control(target, ms)
        bound = dual_norm(target) / math.sqrt(ell1)
        assert res.control_l2_norm <= 1.1 * bound


def test_mirrored_target_gives_real_control(ms):
    target = random_symmetric_target(ms, np.random.default_rng(5))
    a = solve_moment_problem(target, ms)
    ctrl = synthesize_control(a, ms)
    assert not np.iscomplexobj(ctrl.v)
    raw = np.exp(np.outer(ctrl.t, ms.lams)) @ (a * ms.weights)
    assert np.abs(raw.imag).max() <= 1e-12 * np.abs(raw).max()


def test_control_energy_matches_gram_form(ms):
    rng = np.random.default_rng(9)
    H = ms.output_form()
    for _ in range(3):
        a = solve_moment_problem(random_symmetric_target(ms, rng), ms)
        ctrl = synthesize_control(a, ms)
        assert ctrl.l2_norm() ** 2 == pytest.approx(np.vdot(a, H @ a).real, rel=1e-8)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_gram_form_positive(ms, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(ms.size) + 1j * rng.standard_normal(ms.size)
    H = ms.output_form()
    q = np.vdot(a, H @ a).real
    assert q > 0
    assert synthesize_control(a, ms).l2_norm() ** 2 == pytest.approx(q, rel=1e-8)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_solve_is_linear(ms, seed):
    rng = np.random.default_rng(seed)
    m1 = rng.standard_normal(ms.size) + 1j * rng.standard_normal(ms.size)
    m2 = rng.standard_normal(ms.size) + 1j * rng.standard_normal(ms.size)
    s = solve_moment_problem(m1 + m2, ms)
    parts = solve_moment_problem(m1, ms) + solve_moment_problem(m2, ms)
    assert np.linalg.norm(s - parts) <= 1e-12 * np.linalg.norm(s)


def test_space_monotonicity(ms):
    target = random_symmetric_target(ms, np.random.default_rng(2))
    ctrl = synthesize_control(solve_moment_problem(target, ms), ms).scaled(1.0 + 1e-3)
    weak = null_control_report(target, ctrl, ms, spec=H2).residual_norm
    strong_spec = SpaceSpec("D")
    strong = null_control_report(target, ctrl, ms, spec=strong_spec).residual_norm
    ratio = strong_spec.weights(ms.modes) / H2.weights(ms.modes)
    assert ratio.min() * weak <= strong * (1 + 1e-12)
    assert strong <= ratio.max() * weak * (1 + 1e-12)


def test_target_outside_span(ms):
    with pytest.raises(TargetOutsideSpan):
        solve_moment_problem({(1, 25): 1.0}, ms)
    with pytest.raises(TargetOutsideSpan):
        solve_moment_problem({(3, 1): 1.0}, ms)


def test_perturbed_control_misses_target(ms):
    target = {(1, 1): 1.0}
    ctrl = synthesize_control(solve_moment_problem(target, ms), ms)
    base = verify_null_control(target, ctrl, ms)
    bumped = verify_null_control(target, ctrl.scaled(1.1), ms)
    assert bumped >= 5 * base
    assert bumped == pytest.approx(0.1 * dual_norm(target), rel=1e-6)


def test_coarse_grid_is_rejected(ms):
    target = random_symmetric_target(ms, np.random.default_rng(4))
    a = solve_moment_problem(target, ms)
    with pytest.raises(QuadratureUnderResolved):
        verify_null_control(target, synthesize_control(a, ms, 2**6 + 1), ms)
    with pytest.raises(ValueError):
        synthesize_control(a, ms, 100)


def test_random_null_control_pipeline(ms):
    t0 = time.perf_counter()
    target = random_symmetric_target(ms, np.random.default_rng(0))
    res = hum_control(target, ms, tol=1e-6)
    assert time.perf_counter() - t0 < 10
    assert res.success and res.relative_residual <= 1e-6
    assert res.solve_residual <= 1e-12
    assert res.quadrature_error <= 0.1 * max(res.residual_norm, 1e-6 * dual_norm(target))
    assert res.gram_condition == pytest.approx(ms.condition)
