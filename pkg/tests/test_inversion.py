import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from ibmap import inversion as inv
from ibmap import scattering as sc
from ibmap.domain_model import (PotentialSpec, make_discretization, radial_fourier_transform,
                                sample_potential)
from ibmap.errors import ConfigurationError, DomainError, ValidationError

from conftest import DOMAIN, GAUSS

P_MAX = 10.0
SAMPLING = inv.PolarSampling(48, 24, P_MAX)
GRID = inv.ReconstructionGrid.for_band(DOMAIN, P_MAX)


def gauss_hat(p):
    return complex(radial_fourier_transform(GAUSS, DOMAIN, float(np.linalg.norm(p))))


# ------------------------------------------------------------- sampling

def test_odd_direction_count_rejected():
    with pytest.raises(ConfigurationError):
        inv.PolarSampling(7, 4, 2.0)


def test_radial_quadrature_is_exact_for_polynomials_in_p_squared():
    s = inv.PolarSampling(4, 6, 3.0)
    # ∫_0^3 p^5 dp = 3^6/6
    assert np.sum(s.radial_weights * s.radii ** 4) == pytest.approx(3.0 ** 6 / 6, rel=1e-13)


def test_pair_split_at_unit_energy():
    pairs, s = inv.sample_momentum_set(1.0, 8, 6, 4.0, allow_faddeev=True)
    n_classical = sum(p.path == "classical" for p in pairs)
    assert len(pairs) == 48
    assert n_classical == 8 * int(np.sum(s.radii <= 2.0))
    assert all(p.path == "faddeev" for p in pairs if np.linalg.norm(p.p) > 2.0)


def test_faddeev_pairs_need_permission():
    with pytest.raises(DomainError):
        inv.sample_momentum_set(1.0, 8, 6, 4.0)


def test_band_grid_spacing():
    g = inv.ReconstructionGrid.for_band(DOMAIN, 8.0)
    assert g.spacing == pytest.approx(math.pi / 8.0)
    assert np.all(np.hypot(*g.points.T) <= 1.0 + 1e-12)
    with pytest.raises(ConfigurationError):
        inv.ReconstructionGrid.covering(DOMAIN, 0.0)


# -------------------------------------------------------------- inversion

def test_zero_data_give_zero_field():
    ds = inv.born_dataset(lambda p: 0.0, 1.0, SAMPLING)
    rec = inv.born_invert(ds, GRID)
    assert not np.any(rec.values)


def test_exact_born_data_reproduce_lowpass():
    ds = inv.born_dataset(gauss_hat, 1.0, SAMPLING)
    rec = inv.born_invert(ds, GRID)
    ref = inv.lowpass_reference(GAUSS, P_MAX, GRID, DOMAIN)
    assert np.max(np.abs(rec.values - ref)) < 1e-6
    assert rec.regularization["imag_residue"] <= 1e-6


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_inversion_is_linear(a, b):
    s = inv.PolarSampling(16, 6, 6.0)
    g = inv.ReconstructionGrid.for_band(DOMAIN, 6.0)
    d1 = inv.born_dataset(gauss_hat, 1.0, s)
    d2 = inv.born_dataset(lambda p: np.exp(-0.1 * (p @ p)) * (1 + 0.3j * p[0]), 1.0, s)
    combo = sc.ScatteringDataset(1.0, d1.alpha, sampling=s)
    for e1, e2 in zip(d1.entries, d2.entries):
        combo.add(e1["pair"], a * e1["value"] + b * e2["value"], 1.0)
    lhs = inv.born_invert(combo, g).values
    rhs = a * inv.born_invert(d1, g).values + b * inv.born_invert(d2, g).values
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))


def test_hermitian_symmetrization_fills_missing_half():
    ds = inv.born_dataset(gauss_hat, 1.0, SAMPLING)
    full = inv.born_invert(ds, GRID).values
    # keep only directions with p_y >= 0 (strictly: drop the lower half plane)
    kept = sc.ScatteringDataset(ds.energy, ds.alpha, sampling=SAMPLING)
    for e in ds.entries:
        p = e["pair"].p
        if p[1] > 1e-12 or (abs(p[1]) <= 1e-12 and p[0] > 0):
            kept.add(e["pair"], e["value"], e["condition"])
    half = inv.born_invert(kept, GRID)
    assert np.max(np.abs(half.values - full)) < 1e-12
    assert half.regularization["missing"] == 0


def test_condition_weighting_and_dropping():
    ds = inv.born_dataset(gauss_hat, 1.0, inv.PolarSampling(8, 4, 4.0))
    ds.entries[0]["condition"] = 1e10
    ds.entries[1]["condition"] = 1e13
    rec = inv.born_invert(ds, inv.ReconstructionGrid.for_band(DOMAIN, 4.0))
    assert rec.regularization["dropped"] == 1
    assert rec.regularization["softened"] == 1


def test_no_usable_data_rejected():
    ds = inv.born_dataset(gauss_hat, 1.0, inv.PolarSampling(8, 2, 2.0))
    for e in ds.entries:
        e["condition"] = 1e13
    with pytest.raises(ValidationError):
        inv.born_invert(ds, GRID)


def test_off_grid_momentum_rejected():
    ds = sc.ScatteringDataset(1.0, math.pi / 2, sampling=inv.PolarSampling(8, 2, 2.0))
    ds.add(sc.momentum_pair_real([0.123, 0.0], 1.0), 1e-3, 1.0)
    with pytest.raises(ValidationError):
        inv.born_invert(ds, GRID)


def test_sampling_required():
    ds = sc.ScatteringDataset(1.0, math.pi / 2)
    ds.add(sc.momentum_pair_real([1.0, 0.0], 1.0), 1e-3, 1.0)
    with pytest.raises(ConfigurationError):
        inv.born_invert(ds, GRID)


# ----------------------------------------------------------- references

def test_lowpass_matches_hankel_quadrature():
    spec = PotentialSpec.gaussian(1.0, 0.1)
    ref = inv.lowpass_reference(spec, P_MAX, GRID, DOMAIN)
    s2 = 0.01
    for idx in (0, GRID.size // 3, GRID.size // 2):
        r = float(np.hypot(*GRID.points[idx]))
        f = lambda p: special.j0(p * r) * p * 2 * math.pi * s2 * math.exp(-s2 * p * p / 2)  # noqa: E731
        val, _ = integrate.quad(f, 0.0, P_MAX, epsabs=1e-13, limit=200)
        assert ref[idx] == pytest.approx(val / (2 * math.pi), abs=1e-8)


def test_lowpass_of_shifted_field_is_shifted():
    c = np.array([0.2, -0.1])
    # the support disk is centred at the origin; σ = 0.05 keeps its cut at e^{-29}
    shifted = PotentialSpec.gaussian(1.0, 0.05, tuple(c), support_radius=0.6)
    disc = make_discretization(DOMAIN, 16, 24, 96, shifted)
    v = sample_potential(shifted, disc.volume)
    got = inv.lowpass_reference(v, 6.0, GRID)
    centred = inv.ReconstructionGrid(GRID.points - c, GRID.spacing, GRID.radius + 1)
    want = inv.lowpass_reference(PotentialSpec.gaussian(1.0, 0.05), 6.0, centred, DOMAIN)
    assert np.max(np.abs(got - want)) < 1e-6


def test_error_metrics_examples():
    ref = np.zeros(GRID.size)
    ref[np.hypot(*GRID.points.T) < 0.3] = 1.0
    m = inv.error_metrics(ref, ref, GRID, p_max=P_MAX)
    assert (m["rel_l2"], m["max_abs"], m["support_localization"]) == (0.0, 0.0, 1.0)
    assert inv.error_metrics(2 * ref, ref, GRID, p_max=P_MAX)["rel_l2"] == pytest.approx(1.0)


def test_error_metrics_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        inv.error_metrics(np.ones(3), np.zeros(3))
    with pytest.raises(ValidationError):
        inv.error_metrics(np.ones(3), np.ones(4))
