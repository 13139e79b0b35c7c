"""Time integration: linear decay oracle, invariants, retry and abort paths."""
import numpy as np
import pytest

from krflow import fields, flow
from krflow.errors import ConfigError, PositivityLostError
from krflow.geometry import BackgroundFamily, background_form
from krflow.grid import PeriodicGrid, ScalarField
from krflow.initial_data import approx_family, gen_ridge_c11, gen_smooth_mode


@pytest.fixture(scope="module")
def g128():
    return PeriodicGrid(1, 128)


@pytest.fixture(scope="module")
def static_bg(g128):
    return BackgroundFamily.static(g128)


def base_cfg(bg, **kw):
    return flow.FlowConfig(background=bg, t_end=0.1, dt_max=0.01, **kw)


def test_config_validation(static_bg):
    with pytest.raises(ConfigError):
        flow.FlowConfig(background=static_bg, t_end=5.0).validate()  # past horizon
    with pytest.raises(ConfigError):
        flow.FlowConfig(background=static_bg, time_grid="adaptive").validate()
    with pytest.raises(ConfigError):
        flow.FlowConfig(background=static_bg, sample_times=(0.5,)).validate()


def test_time_grid_nodes(static_bg):
    cfg = base_cfg(static_bg, sample_times=(0.025, 0.05))
    times, mask = flow.build_time_grid(cfg)
    assert times[0] == 0.0 and times[-1] == cfg.t_end
    assert np.all(np.diff(times) > 0)
    assert set(cfg.sample_times) <= set(times[mask])
    uni = flow.FlowConfig(background=static_bg, t_end=0.1, dt_init=0.02,
                          dt_max=0.02, time_grid="uniform")
    t2, m2 = flow.build_time_grid(uni)
    assert len(t2) == 6 and np.allclose(np.diff(t2), 0.02)
    assert m2.all()


def test_rhs_trivials(g128, static_bg):
    out = flow.rhs(ScalarField.constant(g128, 2.0), 0.0, static_bg)
    assert out.sup_abs() < 1e-14
    # small-amplitude linearization: rhs ~ lap(phi)/4 = -pi^2 phi for mode 1
    eps = 1e-4
    phi = gen_smooth_mode(eps, 1, 1, g128)
    out2 = flow.rhs(phi, 0.0, static_bg)
    lin = -np.pi ** 2 * phi.values
    assert np.abs(out2.values - lin).max() <= 1e-3 * np.abs(lin).max() + 1e-12


def test_rhs_ridge_closed_form(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    out = flow.rhs(phi, 0.0, static_bg)
    lo, hi = np.log(0.5), np.log(1.5)
    frac_near = (np.minimum(np.abs(out.values - lo), np.abs(out.values - hi))
                 < 2e-2).mean()
    assert frac_near >= 0.90


def test_step_stationary_exact(g128, static_bg):
    cfg = base_cfg(static_bg)
    state = flow._make_state(ScalarField.constant(g128, 1.5), 0.0, static_bg)[0]
    new = flow.step(state, 0.01, cfg)
    assert np.abs(new.phi.values - 1.5).max() < 1e-14
    assert new.t == pytest.approx(0.01)


def test_step_linear_mode_matches_implicit_euler(g128, static_bg):
    # kappa=1 damps the whole linearized rhs: one step on the eps-mode is the
    # implicit Euler multiplier 1/(1 + pi^2 dt) up to O(eps^2) + O(dt^2)
    eps, dt = 1e-5, 0.01
    phi = gen_smooth_mode(eps, 1, 1, g128)
    cfg = base_cfg(static_bg, kappa=1.0)
    state = flow._make_state(phi, 0.0, static_bg)[0]
    new = flow.step(state, dt, cfg)
    spec = np.fft.fftn(new.phi.values) / g128.point_count
    mode_ratio = 2.0 * spec[1, 0].real / eps
    implicit = 1.0 / (1.0 + np.pi ** 2 * dt)
    exact = np.exp(-np.pi ** 2 * dt)
    assert abs(mode_ratio - implicit) < 1e-8
    # sup picks up O(eps dt) harmonics on top of the linear mode
    sup_ratio = new.phi.values.max() / eps
    assert abs(sup_ratio - implicit) < eps * dt * np.pi ** 4
    assert abs(sup_ratio - exact) < np.pi ** 4 * dt ** 2


def test_run_zero_data_stationary(g128, static_bg):
    res = flow.run(base_cfg(static_bg), ScalarField.zeros(g128))
    assert not res.aborted
    assert np.abs(res.trace.column("sup_phi")).max() <= 1e-12
    assert np.abs(res.trace.column("k_energy")).max() <= 1e-12


def test_run_linearized_decay_oracle(g128, static_bg):
    eps = 1e-3
    phi = gen_smooth_mode(eps, 1, 1, g128)
    cfg = flow.FlowConfig(background=static_bg, t_end=0.1, time_grid="uniform",
                          dt_init=5e-3, dt_max=5e-3, refine=4)
    res = flow.run(cfg, phi)
    ratio = res.trace.column("sup_phi")[-1] / eps
    assert abs(ratio - np.exp(-np.pi ** 2 * 0.1)) < 0.01 * np.exp(-np.pi ** 2 * 0.1)


def test_run_constant_shift_equivariance(g128, static_bg):
    eps = 1e-3
    phi = gen_smooth_mode(eps, 1, 1, g128)
    cfg = base_cfg(static_bg)
    res_a = flow.run(cfg, phi)
    res_b = flow.run(cfg, phi + 0.25)
    da = res_b.trace.column("sup_phi") - res_a.trace.column("sup_phi")
    assert np.abs(da - 0.25).max() < 1e-12


def test_run_determinism(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    cfg = base_cfg(static_bg)
    r1 = flow.run(cfg, phi)
    r2 = flow.run(cfg, phi)
    for name in r1.trace.columns:
        assert np.array_equal(r1.trace.column(name), r2.trace.column(name)), name


def test_run_ridge_volume_bounds(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    res = flow.run(base_cfg(static_bg), phi)
    t = res.trace.times
    min_f = res.trace.column("min_f")
    max_f = res.trace.column("max_f")
    assert min_f[t > 0].min() > 0.0
    assert max_f.max() <= res.f0.sup() + 1e-9
    assert res.trace.column("mass_defect").max() <= 1e-8


def test_state_cache_coherence(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    cfg = base_cfg(static_bg, sample_times=(0.05, 0.1))
    res = flow.run(cfg, phi)
    state = res.states[-1]
    g_t = background_form(static_bg, state.t)
    recomputed = fields.ma_ratio(state.phi, g_t)
    assert np.abs(recomputed.values - state.ratio.values).max() < 1e-12
    assert np.abs(state.phidot.values - np.log(state.ratio.values)).max() < 1e-12


def test_dt_refinement_first_order(g128, static_bg):
    eps = 1e-3
    phi = gen_smooth_mode(eps, 1, 1, g128)
    sups = []
    for refine in (2, 3, 4):
        cfg = flow.FlowConfig(background=static_bg, t_end=0.1, time_grid="uniform",
                              dt_init=5e-3, dt_max=5e-3, refine=refine)
        sups.append(flow.run(cfg, phi).trace.column("sup_phi")[-1])
    order = np.log2(abs(sups[0] - sups[1]) / abs(sups[1] - sups[2]))
    assert order >= 0.9


def test_rejected_steps_recovered(g128, static_bg):
    # kappa=0 with a coarse step trips positivity; the retry ladder recovers
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    cfg = flow.FlowConfig(background=static_bg, t_end=0.002, time_grid="uniform",
                          dt_init=0.002, dt_max=0.002, kappa=0.0)
    res = flow.run(cfg, phi)
    assert not res.aborted
    assert res.n_rejects > 0
    assert res.trace.column("min_f")[-1] > 0.0


def test_abort_when_retries_exhaust(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    cfg = flow.FlowConfig(background=static_bg, t_end=0.002, time_grid="uniform",
                          dt_init=0.002, dt_max=0.002, kappa=0.0, dt_min=1.5e-3)
    res = flow.run(cfg, phi)
    assert res.aborted
    assert "dt_min" in res.abort_message
    res.trace.validate()  # partial rows are still a valid trace


def test_run_rejects_off_cone_data(g128, static_bg):
    phi = gen_ridge_c11(4.0, 1, 1, g128)  # discrete Gibbs dip leaves the cone
    res = flow.run(base_cfg(static_bg), phi)
    assert res.aborted and "cone" in res.abort_message


def test_comparison_trivials(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    cfg = base_cfg(static_bg)
    same = flow.comparison_run(cfg, phi, phi.copy())
    assert same.gap_max == 0.0 and same.passed
    shifted = flow.comparison_run(cfg, phi, phi + 0.01)
    assert abs(shifted.gap_initial - 0.01) < 1e-15
    assert abs(shifted.gap_max - 0.01) < 1e-12
    assert shifted.passed


def test_comparison_contraction(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    approx = approx_family(phi, 0.25)
    comp = flow.comparison_run(base_cfg(static_bg), phi, approx)
    assert comp.passed
    assert comp.gap_max <= comp.gap_initial * 1.01


def test_sweep_cauchy(g128, static_bg):
    phi = gen_ridge_c11(2.0, 1, 1, g128)
    cfg = base_cfg(static_bg, sample_times=(0.025, 0.05, 0.1))
    sweep = flow.s_sweep(cfg, phi, [2.0 ** -j for j in range(1, 5)])
    assert sweep.cauchy_passed
    assert sweep.gaps_monotone
    assert len(sweep.pairs) == 3
    with pytest.raises(ConfigError):
        flow.s_sweep(cfg, phi, [0.25, 0.5])  # not descending
    single = flow.s_sweep(cfg, phi, [0.5])
    assert single.cauchy_passed and not single.pairs


def test_positivity_error_carries_point(g128, static_bg):
    # built directly: the generator itself would refuse this amplitude
    off_cone = ScalarField(g128, 0.2 * np.cos(2 * np.pi * g128.coordinate(0)))
    with pytest.raises(PositivityLostError) as err:
        flow.rhs(off_cone, 0.0, static_bg)
    assert err.value.point is not None
