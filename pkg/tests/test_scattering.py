import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ibmap import boundary_ops as bo
from ibmap import scattering as sc
from ibmap import volume_oracle as vo
from ibmap.boundary_ops import RobinTrace
from ibmap.errors import (ConfigurationError, DomainError, ExceptionalPointError, GridMismatchError,
                          ValidationError)

from conftest import WEAK, case, rel

ALPHA = math.pi / 2
J01 = 2.404825557695773


def rotation(phi):
    return np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])


# -------------------------------------------------------------- momenta

def test_real_pair_examples():
    pr = sc.momentum_pair_real([2.0, 0.0], 1.0)
    assert np.allclose(pr.k.re, [-1.0, 0.0], atol=1e-15)
    assert np.allclose(pr.l.re, [1.0, 0.0], atol=1e-15)
    pr = sc.momentum_pair_real([1.0, 0.0], 1.0)
    assert np.allclose(np.abs(pr.k.re), [0.5, math.sqrt(3) / 2], atol=1e-15)
    assert pr.k.re[0] == pytest.approx(-0.5)


def test_real_pair_outside_ball_rejected():
    with pytest.raises(DomainError):
        sc.momentum_pair_real([3.0, 0.0], 1.0)


def test_complex_pair_examples():
    pr = sc.momentum_pair_complex([4.0, 0.0], 1.0)
    assert np.linalg.norm(pr.k.im) == pytest.approx(math.sqrt(3), rel=1e-15)
    assert np.allclose(pr.k.im, pr.l.im)
    assert sc.momentum_pair_complex([0.5, 0.0], -1.0).path == "faddeev"
    with pytest.raises(DomainError):
        sc.momentum_pair_complex([1.0, 0.0], 1.0)


@settings(max_examples=50)
@given(st.floats(-6, 6), st.floats(-6, 6), st.floats(-3, 5))
def test_pair_invariants(px, py, E):
    p = np.array([px, py])
    pn = np.hypot(px, py)
    if pn < 1e-3:
        return
    if E > 0 and pn <= 2 * math.sqrt(E):
        pr = sc.momentum_pair_real(p, E)
    elif pn * pn / 4 - E > 1e-9:
        pr = sc.momentum_pair_complex(p, E)
    else:
        return
    scale = 1 + pn * pn + abs(E)
    assert abs(pr.k.square - E) < 1e-12 * scale
    assert abs(pr.l.square - E) < 1e-12 * scale
    assert np.allclose(pr.p, p, atol=1e-12 * scale)
    Q = rotation(0.7)
    q = pr.rotated(Q)
    assert np.allclose(q.p, Q @ p, atol=1e-12 * scale)


def test_pair_validation():
    pr = sc.momentum_pair_real([1.0, 0.0], 1.0)
    with pytest.raises(ConfigurationError):
        sc.MomentumPair(pr.k, pr.l, "bogus")
    with pytest.raises(ValidationError):
        sc.MomentumPair(pr.k, pr.l, "faddeev")


# ------------------------------------------------------------- kernels

def test_zero_difference_collapses(gauss_small):
    disc, _, _ = gauss_small
    M = bo.free_impedance_operator(1.0, ALPHA, disc.boundary)
    Md = bo.operator_sub(M, M)
    pr = sc.momentum_pair_real([1.0, 0.0], 1.0)
    r = sc.boundary_datum(Md, pr, ALPHA, disc)
    assert r.value == 0
    assert np.allclose(r.trace.values, sc.plane_trace(pr.k.re, ALPHA, disc.boundary).values, atol=1e-15)


def test_kernel_rejects_delta_part(gauss_small):
    disc, _, _ = gauss_small
    M = bo.free_impedance_operator(1.0, 0.3, disc.boundary)
    with pytest.raises(ValidationError):
        sc.kernel_A_offset(sc.Background(disc, 1.0), M, None, 0.3)


def test_kernel_rejects_other_alpha(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    with pytest.raises(ValidationError):
        sc.kernel_A_offset(sc.Background(disc, 1.0), gauss_mdiff, None, 0.3)


@pytest.mark.parametrize("zeta", [None, "faddeev"])
def test_offset_and_aux_routes_agree(gauss_small, gauss_mdiff, zeta):
    disc, _, _ = gauss_small
    z = sc.momentum_pair_complex([2.5, 0.0], 1.0).k.vector if zeta else None
    bg = sc.Background(disc, 1.0, zeta=z)
    Ao = sc.kernel_A_offset(bg, gauss_mdiff, None, ALPHA).A
    A0 = sc.kernel_A_prop34(bg, gauss_mdiff, 0.0, ALPHA, None).A
    A1 = sc.kernel_A_prop34(bg, gauss_mdiff, 1.0, ALPHA, None).A
    assert rel(Ao, A0) < 1e-4
    assert rel(A1, A0) < 1e-5


def test_aux_route_needs_zero_background(gauss_small, gauss_mdiff):
    disc, v, _ = gauss_small
    bg = sc.Background(disc, 1.0, v0=v)
    with pytest.raises(ConfigurationError):
        sc.kernel_A_prop34(bg, gauss_mdiff, 0.0, ALPHA, None)


def test_aux_field_solves_helmholtz(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    lam = 1.0
    aux = sc.aux_dirichlet_solve(gauss_mdiff, lam, disc)
    f = lambda p: aux.values(p)[:, 3]  # noqa: E731
    scale = np.max(np.abs(aux.values(np.array([[0.3, 0.2]]))))
    assert abs(vo.stencil_residual(f, [0.3, 0.2], lam, h=1e-3)) < 1e-5 * max(scale, 1.0)
    # boundary values reproduce the column
    assert np.allclose(aux.values(disc.boundary.points)[:, 3], gauss_mdiff.kernel[:, 3],
                       atol=1e-10 * np.max(np.abs(gauss_mdiff.kernel)))


def test_aux_field_refuses_dirichlet_eigenvalue(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    with pytest.raises(ConfigurationError):
        sc.aux_dirichlet_solve(gauss_mdiff, J01 ** 2, disc)


def test_unknown_route(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    with pytest.raises(ConfigurationError):
        sc.kernel_A(sc.Background(disc, 1.0), gauss_mdiff, None, ALPHA, route="bogus")


# ------------------------------------------------------------- solving

def test_solve_trace_with_zero_kernel(gauss_small):
    disc, _, _ = gauss_small
    g = disc.boundary
    A = sc.ScatterKernel(np.zeros((g.n, g.n)), "offset_limit", None, ALPHA, g)
    t0 = sc.plane_trace([1.0, 0.0], ALPHA, g)
    t, diag = sc.solve_trace(A, t0)
    assert np.array_equal(t.values, t0.values)
    assert diag.residual == 0.0


def test_solve_trace_flags_exceptional_point(gauss_small):
    disc, _, _ = gauss_small
    g = disc.boundary
    A = sc.ScatterKernel(np.eye(g.n) / g.weight, "offset_limit", None, ALPHA, g)
    with pytest.raises(ExceptionalPointError):
        sc.solve_trace(A, sc.plane_trace([1.0, 0.0], ALPHA, g))


def test_solve_trace_grid_mismatch(gauss_small):
    disc, _, _ = gauss_small
    other, _, _ = case(WEAK, 32)
    A = sc.ScatterKernel(np.zeros((64, 64)), "offset_limit", None, ALPHA, disc.boundary)
    with pytest.raises(GridMismatchError):
        sc.solve_trace(A, sc.plane_trace([1.0, 0.0], ALPHA, other.boundary))


@pytest.mark.parametrize("p", [(1.0, 0.0), (0.0, -1.6)])
def test_classical_datum_matches_volume_amplitude(gauss_small, gauss_mdiff, p):
    disc, v, _ = gauss_small
    pr = sc.momentum_pair_real(p, 1.0)
    r = sc.boundary_datum(gauss_mdiff, pr, ALPHA, disc)
    sol = vo.lippmann_schwinger_classical(v, pr.k.re, disc)
    f = vo.amplitude_volume(v, sol, pr.l)
    assert abs(r.value - f) < 1e-3 * abs(f)
    assert rel(r.trace.values, sol.robin_trace(ALPHA).values) < 1e-4


def test_faddeev_datum_matches_volume_amplitude(gauss_small, gauss_mdiff):
    disc, v, _ = gauss_small
    pr = sc.momentum_pair_complex([2.4, 0.0], 1.0)
    r = sc.boundary_datum(gauss_mdiff, pr, ALPHA, disc)
    h = vo.amplitude_volume(v, vo.faddeev_solve(v, pr.k, disc), pr.l)
    assert abs(r.value - h) < 1e-3 * abs(h)


def test_weak_gaussian_is_born_sized():
    # for a = 0.1 the datum at |p| = 1 is close to (2π)^{-2}v̂(p) = 6.2402e-4
    disc, v, v0 = case(WEAK)
    Md = sc.impedance_difference(v, v0, 4.0, ALPHA, disc)
    r = sc.boundary_datum(Md, sc.momentum_pair_real([1.0, 0.0], 4.0), ALPHA, disc)
    assert abs(r.value - 6.2402e-4) < 0.05 * 6.2402e-4


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=5), st.complex_numbers(max_magnitude=5))
def test_datum_is_linear_in_right_trace(a, b):
    disc, _, _ = case(WEAK, 16, 6, 24)
    g = disc.boundary
    rng = np.random.default_rng(3)
    M = bo.diagonal_operator(lambda am: 1.0 / (1.0 + am), g)
    L = RobinTrace(rng.standard_normal(g.n) + 0j, ALPHA, g)
    u = RobinTrace(rng.standard_normal(g.n) + 0j, ALPHA, g)
    w = RobinTrace(rng.standard_normal(g.n) + 0j, ALPHA, g)
    combo = RobinTrace(a * u.values + b * w.values, ALPHA, g)
    lhs = sc.scattering_datum(M, L, combo)
    rhs = a * sc.scattering_datum(M, L, u) + b * sc.scattering_datum(M, L, w)
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(a) + abs(b)) * 10


def test_datum_rotation_invariance(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    pr = sc.momentum_pair_real([1.2, 0.5], 1.0)
    a = sc.boundary_datum(gauss_mdiff, pr, ALPHA, disc).value
    b = sc.boundary_datum(gauss_mdiff, pr.rotated(rotation(0.7)), ALPHA, disc).value
    assert abs(a - b) < 1e-6 * abs(a)


# --------------------------------------------------------- exterior extension

def test_extension_matches_volume_solution(gauss_small, gauss_mdiff):
    disc, v, _ = gauss_small
    k = np.array([1.0, 0.0])
    targets = np.array([[1.5, 0.0], [0.0, -2.0], [-1.2, 1.3]])
    bg = sc.Background(disc, 1.0)
    B = sc.kernel_B(bg, gauss_mdiff, ALPHA, k, targets)
    A = sc.kernel_A(bg, gauss_mdiff, k, ALPHA)
    t, _ = sc.solve_trace(A, sc.plane_trace(k, ALPHA, disc.boundary))
    inc = lambda x: np.exp(1j * (x @ k))  # noqa: E731
    ext = sc.extend_solution(inc, B, t)
    ref = vo.lippmann_schwinger_classical(v, k, disc).at(targets, inc)
    assert np.max(np.abs(ext - ref)) < 1e-6


def test_b_kernel_decays_away_from_disk(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    bg = sc.Background(disc, -1.0)
    Md = sc.impedance_difference(*gauss_small[1:], -1.0, ALPHA, disc)
    norms = [np.linalg.norm(sc.kernel_B(bg, Md, ALPHA, None, [[r, 0.0]]).B) for r in (1.5, 3.0, 6.0)]
    assert norms[0] > norms[1] > norms[2]


def test_b_kernel_rejects_interior_targets(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    with pytest.raises(DomainError):
        sc.kernel_B(sc.Background(disc, 1.0), gauss_mdiff, ALPHA, None, [[0.5, 0.0]])


# ------------------------------------------------------------- datasets

def test_dataset_array_round_trip():
    ds = sc.ScatteringDataset(1.0, ALPHA)
    ds.add(sc.momentum_pair_real([1.0, 0.0], 1.0), 1e-3 + 2e-4j, 3.0)
    ds.add(sc.momentum_pair_complex([2.5, 0.5], 1.0), -4e-5j, 7.0)
    ds.add(sc.momentum_pair_real([0.0, 1.5], 1.0), None, float("inf"), "refused")
    back = sc.ScatteringDataset.from_array(ds.to_array(), 1.0, ALPHA)
    assert np.array_equal(back.to_array(), ds.to_array(), equal_nan=True)
    assert [e["pair"].path for e in back.entries] == ["classical", "faddeev", "classical"]
    assert back.entries[2]["value"] is None and len(back.usable()) == 2


def test_dataset_rejects_non_finite_values():
    ds = sc.ScatteringDataset(1.0, ALPHA)
    with pytest.raises(ValidationError):
        ds.add(sc.momentum_pair_real([1.0, 0.0], 1.0), complex("nan"), 1.0)


def test_compute_dataset_matches_single_data(gauss_small, gauss_mdiff):
    disc, _, _ = gauss_small
    pairs = [sc.momentum_pair_real([1.0, 0.0], 1.0), sc.momentum_pair_complex([2.5, 0.0], 1.0)]
    ds = sc.compute_dataset(gauss_mdiff, pairs, ALPHA, disc)
    for e, pr in zip(ds.entries, pairs):
        assert e["value"] == pytest.approx(sc.boundary_datum(gauss_mdiff, pr, ALPHA, disc).value, rel=1e-12)
    with pytest.raises(ConfigurationError):
        sc.compute_dataset(gauss_mdiff, [], ALPHA, disc)
