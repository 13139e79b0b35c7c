"""Spectral toolbox oracles: analytic single modes, identities, file format."""
import math

import numpy as np
import pytest

from krflow import fields, spectral
from krflow.errors import (
    GeometryDegenerateError,
    IllConditionedMetricError,
    KrflowError,
    PositivityLostError,
)
from krflow.grid import (
    HermitianMatrixField,
    PeriodicGrid,
    ScalarField,
    read_snapshot,
    volume_normalization,
    write_snapshot,
)

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="module")
def g1():
    return PeriodicGrid(1, 64)


@pytest.fixture(scope="module")
def g2():
    return PeriodicGrid(2, 32)


def cos_mode(grid, axis=0, k=1):
    return ScalarField(grid, np.cos(TWO_PI * k * grid.coordinate(axis)))


def test_grid_validation():
    with pytest.raises(KrflowError):
        PeriodicGrid(3, 64)
    with pytest.raises(KrflowError):
        PeriodicGrid(1, 48)  # not a power of two
    with pytest.raises(KrflowError):
        PeriodicGrid(1, 4)  # too small


def test_hessian_constant_is_zero(g1):
    h = fields.complex_hessian(ScalarField.constant(g1, 3.7))
    assert np.abs(h.entries).max() == 0.0


def test_hessian_single_mode_n1(g1):
    x = g1.coordinate(0)
    h = fields.complex_hessian(cos_mode(g1))
    oracle = -np.pi ** 2 * np.cos(TWO_PI * x)
    assert np.abs(h.entries[..., 0, 0] - oracle).max() < 1e-10
    assert h.hermitian_defect() < 1e-12


def test_hessian_mixed_mode_n2(g2):
    x1 = g2.coordinate(0)
    y2 = g2.coordinate(3)
    phi = ScalarField(g2, np.cos(TWO_PI * x1) * np.cos(TWO_PI * y2))
    h = fields.complex_hessian(phi)
    diag = -np.pi ** 2 * np.cos(TWO_PI * x1) * np.cos(TWO_PI * y2)
    off = 1j * np.pi ** 2 * np.sin(TWO_PI * x1) * np.sin(TWO_PI * y2)
    assert np.abs(h.entries[..., 0, 0] - diag).max() < 1e-10
    assert np.abs(h.entries[..., 1, 1] - diag).max() < 1e-10
    assert np.abs(h.entries[..., 0, 1] - off).max() < 1e-10
    assert np.abs(h.entries[..., 1, 0] - np.conj(off)).max() < 1e-10


def test_nyquist_mode_odd_derivative_vanishes(g1):
    n = g1.resolution
    nyq = ScalarField(g1, np.cos(np.pi * n * g1.coordinate(0)))
    d1 = spectral.real_derivative(g1, nyq.values, (1, 0))
    assert np.abs(d1).max() == 0.0


def test_ma_ratio_constant_and_gauge(g1):
    eye = HermitianMatrixField.identity(g1)
    r = fields.ma_ratio(ScalarField.constant(g1, 2.0), eye)
    assert np.abs(r.values - 1.0).max() < 1e-14
    # gauge shift at the scale of the field; the roundoff floor grows like
    # eps * N^2 through the top derivative multipliers, so probe at N=32
    g32 = PeriodicGrid(1, 32)
    phi = 0.01 * cos_mode(g32)
    eye32 = HermitianMatrixField.identity(g32)
    r1 = fields.ma_ratio(phi, eye32)
    r2 = fields.ma_ratio(phi + 0.01, eye32)
    assert np.abs(r1.values - r2.values).max() < 1e-14


def test_ma_ratio_1d_closed_form(g1):
    eye = HermitianMatrixField.identity(g1)
    phi = 0.01 * cos_mode(g1)
    hess = fields.complex_hessian(phi)
    oracle = 1.0 + hess.entries[..., 0, 0].real
    r = fields.ma_ratio(phi, eye)
    assert np.abs(r.values - oracle).max() < 1e-12


def test_ma_ratio_n2_single_axis(g2):
    eye = HermitianMatrixField.identity(g2)
    eps = 0.01
    phi = eps * cos_mode(g2, axis=0)
    r = fields.ma_ratio(phi, eye)
    oracle = 1.0 - eps * np.pi ** 2 * np.cos(TWO_PI * g2.coordinate(0))
    assert np.abs(r.values - oracle).max() < 1e-10


def test_ma_ratio_positivity_error(g1):
    eye = HermitianMatrixField.identity(g1)
    phi = 0.2 * cos_mode(g1)  # metric entry 1 - 0.2 pi^2 cos < 0 somewhere
    with pytest.raises(PositivityLostError) as err:
        fields.ma_ratio(phi, eye)
    assert err.value.value is not None and err.value.value <= 0.0
    vals = fields.ma_ratio(phi, eye, strict=False)
    assert vals.inf() <= 0.0


def test_metric_trace_values(g1, g2):
    eye1 = HermitianMatrixField.identity(g1)
    tr = fields.metric_trace(eye1, ScalarField.constant(g1, 1.0))
    assert np.abs(tr.values - 1.0).max() < 1e-14
    eps = 0.01
    tr2 = fields.metric_trace(eye1, eps * cos_mode(g1))
    oracle = 1.0 - eps * np.pi ** 2 * np.cos(TWO_PI * g1.coordinate(0))
    assert np.abs(tr2.values - oracle).max() < 1e-12
    # n=2: trace equals n + lap(phi)/4 on the flat background
    rng = np.random.default_rng(11)
    rough = ScalarField(g2, rng.standard_normal(g2.shape))
    phi = fields.heat_smooth(rough, 5e-3)
    tr3 = fields.metric_trace(HermitianMatrixField.identity(g2), phi)
    oracle3 = 2.0 + 0.25 * spectral.laplacian(g2, phi.values)
    assert np.abs(tr3.values - oracle3).max() < 1e-12


def test_metric_trace_degenerate_error(g1):
    bad = HermitianMatrixField(g1, np.zeros(g1.shape + (1, 1), dtype=np.complex128))
    with pytest.raises(GeometryDegenerateError):
        fields.metric_trace(bad, ScalarField.zeros(g1))


def test_inverse_metric_property(g2):
    rng = np.random.default_rng(5)
    a = rng.standard_normal(g2.shape + (2, 2)) + 1j * rng.standard_normal(g2.shape + (2, 2))
    entries = np.einsum("...ij,...kj->...ik", a, a.conj()) / 2 + 0.5 * np.eye(2)
    g = HermitianMatrixField(g2, entries)
    inv = fields.inverse_metric(g)
    eye = np.einsum("...ij,...jk->...ik", g.entries, inv.entries)
    assert np.abs(eye - np.eye(2)).max() < 1e-12


def test_inverse_metric_diagonal(g1):
    u = 0.3 * np.cos(TWO_PI * g1.coordinate(0))
    entries = (1.0 + u)[..., None, None].astype(np.complex128)
    inv = fields.inverse_metric(HermitianMatrixField(g1, entries))
    assert np.abs(inv.entries[..., 0, 0] - 1.0 / (1.0 + u)).max() < 1e-13


def test_inverse_metric_condition_error(g1):
    entries = np.full(g1.shape + (1, 1), 1e-14, dtype=np.complex128)
    entries.flat[0] = 1.0  # condition number across... per-point check: make one point near-zero
    entries = np.ones(g1.shape + (1, 1), dtype=np.complex128)
    entries[0, 0, 0, 0] = -1e-20
    with pytest.raises(IllConditionedMetricError):
        fields.inverse_metric(HermitianMatrixField(g1, entries))


def test_gradient_norm_convention(g1):
    eye = HermitianMatrixField.identity(g1)
    f = ScalarField(g1, np.sin(TWO_PI * g1.coordinate(0)))
    gn = fields.gradient_norm_sq(f, eye)
    oracle = 0.5 * TWO_PI ** 2 * np.cos(TWO_PI * g1.coordinate(0)) ** 2
    assert np.abs(gn.values - oracle).max() < 1e-10
    # bilinearity: doubling the field quadruples the norm
    gn2 = fields.gradient_norm_sq(2.0 * f, eye)
    assert np.abs(gn2.values - 4.0 * gn.values).max() < 1e-10
    assert fields.gradient_norm_sq(ScalarField.constant(g1, 4.0), eye).sup() == 0.0


def test_integrate_values(g1):
    one = ScalarField.constant(g1, 1.0)
    assert abs(fields.integrate(one) - 1.0) < 1e-14
    assert abs(fields.integrate(cos_mode(g1))) < 1e-14
    c2 = ScalarField(g1, np.cos(TWO_PI * g1.coordinate(0)) ** 2)
    assert abs(fields.integrate(c2) - 0.5) < 1e-14


def test_lp_norm_values(g1):
    c = ScalarField.constant(g1, 3.0)
    assert abs(fields.lp_norm(c, 2.0) - 3.0) < 1e-14
    assert abs(fields.lp_norm(cos_mode(g1), 2.0) - math.sqrt(0.5)) < 1e-14
    with pytest.raises(ValueError):
        fields.lp_norm(c, 0.5)


def test_lp_norm_monotone_in_p(g1):
    # Jensen: p-norms against a probability weight are nondecreasing in p
    w = ScalarField(g1, 1.0 + 0.5 * np.cos(TWO_PI * g1.coordinate(0)))
    w = ScalarField(g1, w.values / fields.integrate(w))
    f = ScalarField(g1, 1.0 + np.sin(TWO_PI * g1.coordinate(0)))
    norms = [fields.lp_norm(f, p, w) for p in (1.0, 1.5, 2.0, 3.0, 4.0)]
    assert all(b >= a - 1e-12 for a, b in zip(norms, norms[1:]))


def test_heat_smooth_mode_and_mean(g1):
    phi = cos_mode(g1)
    out = fields.heat_smooth(phi, 0.01)
    oracle = math.exp(-0.01 * TWO_PI ** 2) * phi.values
    assert np.abs(out.values - oracle).max() < 1e-13
    assert np.abs(fields.heat_smooth(phi, 0.0).values - phi.values).max() == 0.0
    shifted = phi + 2.5
    sm = fields.heat_smooth(shifted, 0.3)
    assert abs(sm.mean() - shifted.mean()) < 1e-13


def test_heat_smooth_sup_contraction(g1):
    rng = np.random.default_rng(0)
    phi = ScalarField(g1, rng.standard_normal(g1.shape))
    sup0 = phi.sup_abs()
    for tau in (1e-6, 1e-4, 1e-2, 1.0):
        assert fields.heat_smooth(phi, tau).sup_abs() <= sup0 + 1e-12


def test_heat_smooth_preserves_cone(g1):
    # if the ratio is nonnegative on a refined grid, smoothing keeps it so
    from krflow.initial_data import gen_ridge_c11

    fine = PeriodicGrid(1, 256)
    phi = gen_ridge_c11(2.0, 1, 1, fine)
    r0 = fields.ma_ratio(phi, HermitianMatrixField.identity(fine), strict=False)
    assert r0.inf() > 0.0
    for tau in (1e-6, 1e-4, 1e-2):
        sm = fields.heat_smooth(phi, tau)
        r = fields.ma_ratio(sm, HermitianMatrixField.identity(fine), strict=False)
        assert r.inf() >= -1e-10


def test_third_order_constant_and_shift(g1):
    eye = HermitianMatrixField.identity(g1)
    s0 = fields.third_order_s(ScalarField.constant(g1, 1.0), eye)
    assert s0.sup() == 0.0
    eps = 1e-4
    phi = eps * cos_mode(g1)
    s1 = fields.third_order_s(phi, eye)
    s2 = fields.third_order_s(phi + eps, eye)
    assert np.abs(s1.values - s2.values).max() < 1e-14


def test_third_order_small_amplitude_oracle(g1):
    # exact single-mode closed form: S = |phi_zzbarz|^2 / (1 + phi_zzbar)^3
    eye = HermitianMatrixField.identity(g1)
    eps = 1e-4
    x = g1.coordinate(0)
    phi = ScalarField(g1, eps * np.cos(TWO_PI * x))
    s = fields.third_order_s(phi, eye)
    t3 = eps * np.pi ** 3 * np.sin(TWO_PI * x)
    u = -eps * np.pi ** 2 * np.cos(TWO_PI * x)
    oracle = t3 ** 2 / (1.0 + u) ** 3
    assert np.abs(s.values - oracle).max() < 1e-12


def test_third_order_positivity_error(g1):
    eye = HermitianMatrixField.identity(g1)
    with pytest.raises(PositivityLostError):
        fields.third_order_s(0.2 * cos_mode(g1), eye)


def test_ma_mass_conservation(g2):
    # total deformed volume is potential-independent
    rng = np.random.default_rng(9)
    phi = fields.heat_smooth(ScalarField(g2, 0.05 * rng.standard_normal(g2.shape)), 3e-3)
    eye = HermitianMatrixField.identity(g2)
    r = fields.ma_ratio(phi, eye, strict=False)
    assert abs(fields.integrate(r) - 1.0) < 1e-8


def test_volume_weight_and_normalization(g1, g2):
    for g in (g1, g2):
        w = fields.volume_weight(HermitianMatrixField.identity(g))
        vol = fields.integrate(ScalarField.constant(g, 1.0), w)
        assert abs(vol - volume_normalization(g.complex_dim)) < 1e-12


def test_dealias_flag_round_trip():
    g = PeriodicGrid(1, 64, dealias=True)
    eye = HermitianMatrixField.identity(g)
    phi = 0.01 * cos_mode(g)
    r = fields.ma_ratio(phi, eye)
    # mode-1 data survives the 2/3 filter untouched
    oracle = 1.0 - 0.01 * np.pi ** 2 * np.cos(TWO_PI * g.coordinate(0))
    assert np.abs(r.values - oracle).max() < 1e-12
    high = ScalarField(g, np.cos(TWO_PI * 30 * g.coordinate(0)))
    filtered = spectral.dealias_truncate(g, high.values)
    assert np.abs(filtered).max() < 1e-12


def test_snapshot_round_trip(tmp_path, g2):
    rng = np.random.default_rng(1)
    phi = ScalarField(g2, rng.standard_normal(g2.shape))
    path = tmp_path / "field.krf"
    write_snapshot(path, phi, 0.0625)
    back, t = read_snapshot(path)
    assert t == 0.0625
    assert back.grid == g2
    assert np.array_equal(back.values, phi.values)
    raw = path.read_bytes()
    assert len(raw) == 64 + 8 * g2.point_count
    assert raw[:5] == b"KRF1 "
    assert raw[:64].decode("ascii").split()[1:3] == ["n=2", "N=32"]


def test_field_rejects_nan(g1):
    vals = np.zeros(g1.shape)
    vals[0, 0] = np.nan
    with pytest.raises(KrflowError):
        ScalarField(g1, vals)
