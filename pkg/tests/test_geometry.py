"""Background family: forms, curvature potential, validity horizon."""
import numpy as np
import pytest

from krflow import fields
from krflow.errors import GeometryDegenerateError, HorizonExceededError
from krflow.geometry import (
    BackgroundFamily,
    TorusGeometry,
    background_form,
    ricci_potential,
    validity_horizon,
)
from krflow.grid import PeriodicGrid, ScalarField

TWO_PI = 2.0 * np.pi


@pytest.fixture(scope="module")
def grid():
    return PeriodicGrid(1, 128)


def cos_twist(grid, eps, k=1):
    return ScalarField(grid, eps * np.cos(TWO_PI * k * grid.coordinate(0)))


def test_background_volume_closed_form():
    for n, expect in ((1, 2.0), (2, 8.0)):
        g = PeriodicGrid(n, 16)
        geo = TorusGeometry(g)
        assert geo.background_volume() == expect
        w = fields.volume_weight(geo.identity_form())
        vol = fields.integrate(ScalarField.constant(g, 1.0), w)
        assert abs(vol - expect) < 1e-12


def test_static_family_identity(grid):
    fam = BackgroundFamily.static(grid)
    assert fam.is_static
    form = background_form(fam, 0.7)
    assert np.abs(form.entries[..., 0, 0] - 1.0).max() == 0.0
    h, c = ricci_potential(fam, 0.3)
    assert c == 0.0 and h.sup_abs() == 0.0


def test_background_form_single_mode(grid):
    eps, t = 0.4, 0.1
    fam = BackgroundFamily(cos_twist(grid, eps))
    form = background_form(fam, t)
    oracle = 1.0 - t * eps * np.pi ** 2 * np.cos(TWO_PI * grid.coordinate(0))
    assert np.abs(form.entries[..., 0, 0].real - oracle).max() < 1e-12


def test_background_form_horizon_errors(grid):
    eps = 0.4
    fam = BackgroundFamily(cos_twist(grid, eps), margin=0.1)
    with pytest.raises(HorizonExceededError):
        background_form(fam, fam.horizon * 1.5)
    with pytest.raises(HorizonExceededError):
        background_form(fam, -0.01)
    # just past the degeneracy time the form has a nonpositive eigenvalue
    degenerate_t = 1.0 / (eps * np.pi ** 2) * 1.01
    loose = BackgroundFamily(cos_twist(grid, eps), margin=0.1, t_max=5.0)
    loose.horizon = 5.0  # bypass the horizon guard to reach the degenerate form
    with pytest.raises(GeometryDegenerateError):
        background_form(loose, degenerate_t)


def test_validity_horizon_closed_form(grid):
    eps, margin = 0.4, 0.25
    T = validity_horizon(cos_twist(grid, eps), margin, t_max=5.0)
    assert abs(T - (1 - margin) / (eps * np.pi ** 2)) < 1e-8
    # doubling the twist halves the horizon (Hessian is linear in the twist)
    T2 = validity_horizon(cos_twist(grid, 2 * eps), margin, t_max=5.0)
    assert abs(T2 - 0.5 * T) < 1e-8
    assert validity_horizon(ScalarField.zeros(grid), 0.1, t_max=1.0) == 1.0
    with pytest.raises(ValueError):
        validity_horizon(cos_twist(grid, eps), 1.5)


def test_ricci_potential_normalization(grid):
    fam = BackgroundFamily(cos_twist(grid, 0.3), margin=0.1)
    geo = TorusGeometry(grid)
    for t in (0.0, 0.05, min(0.2, fam.horizon)):
        h, _ = ricci_potential(fam, t)
        w = fields.volume_weight(background_form(fam, t))
        resid = fields.integrate(ScalarField(grid, np.exp(h.values) - 1.0), w)
        assert abs(resid) <= 1e-10 * geo.background_volume()


def test_ricci_potential_t0_jensen(grid):
    # flat start: h = twist + c0 with c0 = -log(mean exp(twist)) < 0
    rho = cos_twist(grid, 0.3)
    fam = BackgroundFamily(rho)
    h, c0 = ricci_potential(fam, 0.0)
    assert c0 < 0.0
    assert abs(c0 + np.log(np.exp(rho.values).mean())) < 1e-12
    assert np.abs(h.values - rho.values - c0).max() < 1e-12


def test_ricci_potential_gauge_invariance(grid):
    rho = cos_twist(grid, 0.3)
    fam_a = BackgroundFamily(rho)
    fam_b = BackgroundFamily(rho + 1.234)
    for t in (0.0, 0.1):
        ha, ca = ricci_potential(fam_a, t)
        hb, cb = ricci_potential(fam_b, t)
        assert np.abs(ha.values - hb.values).max() < 1e-12
        ga = background_form(fam_a, t)
        gb = background_form(fam_b, t)
        assert np.abs(ga.entries - gb.entries).max() < 1e-12


def test_twist_mean_normalized(grid):
    fam = BackgroundFamily(cos_twist(grid, 0.2) + 0.77)
    assert abs(fam.twist.mean()) <= 1e-12


def test_min_eig_tracks_margin(grid):
    fam = BackgroundFamily(cos_twist(grid, 0.4), margin=0.25)
    assert fam.min_eig_at(fam.horizon) >= 0.25 - 1e-9
    assert fam.min_eig_at(0.0) == 1.0


def test_lambda_default(grid):
    assert BackgroundFamily.static(grid).lambda_default() == 4.0
    fam = BackgroundFamily(cos_twist(grid, 0.1))
    assert fam.lambda_default() > 4.0
