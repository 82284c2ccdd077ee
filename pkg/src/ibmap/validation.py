"""Self-check suites behind `ibmap validate`.

Each suite appends named checks (measured value, tolerance) to a ReportDoc.
Sizes are chosen so that every suite runs in well under a minute.
"""

from __future__ import annotations

import math
import time

import numpy as np

from . import boundary_ops as bo
from . import greens
from . import scattering as sc
from . import volume_oracle as vo
from .domain_model import Domain, PotentialSpec, make_discretization, sample_potential

DOMAIN = Domain(1.0)
GAUSS = PotentialSpec.gaussian(1.0, 0.2)
STEP = PotentialSpec.radial_step(0.5, 2.0)


def _case(spec, n, n_r, n_theta):
    disc = make_discretization(DOMAIN, n, n_r, n_theta, spec)
    return disc, sample_potential(spec, disc.volume), sample_potential(PotentialSpec.zero(), disc.volume)


def _rel(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def identity_run(n, n_r, n_theta, E=1.0, alpha=math.pi / 2):
    """Alessandrini identity for the Gaussian case; returns (residual, sides)."""
    disc, v, v0 = _case(GAUSS, n, n_r, n_theta)
    Md = sc.impedance_difference(v, v0, E, alpha, disc)
    psi0 = vo.plane_wave_solution(np.array([0.6, 0.8]), disc)
    psi = vo.lippmann_schwinger_classical(v, np.array([1.0, 0.0]), disc)
    res = vo.alessandrini_identity_residual(v, v0, psi, psi0, Md, alpha)
    return res, vo.identity_sides(v, v0, psi, psi0, Md, alpha)


def suite_identity(rep):
    t = time.perf_counter()
    r1, s1 = identity_run(64, 12, 48)
    r2, s2 = identity_run(128, 24, 96)
    rt = time.perf_counter() - t
    rep.add("identity_residual_coarse", r1, 1e-6, runtime=rt)
    rep.add("identity_residual_fine", r2, 1e-6)
    floor = 1e-13
    rep.add("identity_residual_halving", r2, max(0.5 * r1, floor))
    rep.add("identity_sides_converged", abs(s2[0] - s1[0]) / abs(s2[0]), 1e-8)


def suite_symmetry(rep):
    t = time.perf_counter()
    disc, v, _ = _case(GAUSS, 64, 12, 48)
    for alpha in (math.pi / 2, math.pi / 4):
        G, _ = greens.domain_green(disc, v, 1.0, alpha)
        rep.add(f"green_symmetry_alpha_{alpha:.4f}", G.symmetry_defect(), 1e-10)
        M = bo.impedance_from_green(G)
        rep.add(f"map_symmetry_alpha_{alpha:.4f}", M.symmetry_defect(), 1e-10)
    x = np.array([0.3, -0.2])
    k = greens.ComplexMomentum(np.array([1.2, 0.0]), np.array([0.0, 0.8]), 1.2 ** 2 - 0.8 ** 2)
    kneg = greens.ComplexMomentum(-k.re, -k.im, k.energy)
    rep.add("faddeev_reflection", abs(complex(greens.faddeev_green(-x, k)) - complex(greens.faddeev_green(x, kneg))),
            1e-10, runtime=time.perf_counter() - t)


def suite_routes(rep):
    t = time.perf_counter()
    disc, v, v0 = _case(STEP, 64, 12, 48)
    for alpha in (math.pi / 2, math.pi / 4, 0.3):
        G, _ = greens.domain_green(disc, v, 1.0, alpha)
        chain = bo.impedance_from_green(G).mode_block(15)
        ode = bo.radial_impedance_oracle(STEP, 1.0, alpha, disc.boundary, DOMAIN).mode_block(15)
        dtn = bo.robin_from_dtn(bo.radial_impedance_oracle(STEP, 1.0, 0.0, disc.boundary, DOMAIN),
                                alpha).mode_block(15)
        nrm = lambda a, b: float(np.linalg.norm(a - b, 2) / np.linalg.norm(b, 2))  # noqa: E731
        rep.add(f"forward_chain_vs_ode_alpha_{alpha:.4f}", nrm(chain, ode), 1e-6)
        rep.add(f"forward_dtn_vs_ode_alpha_{alpha:.4f}", nrm(dtn, ode), 1e-6)
    gdisc, gv, gv0 = _case(GAUSS, 64, 12, 48)
    Md = sc.impedance_difference(gv, gv0, 1.0, math.pi / 2, gdisc)
    for name, bg in (("classical", sc.Background(gdisc, 1.0)),
                     ("faddeev", sc.Background(gdisc, 1.0, zeta=sc.momentum_pair_complex([2.5, 0.0], 1.0).k.vector))):
        A0 = sc.kernel_A_prop34(bg, Md, 0.0, math.pi / 2, None).A
        A1 = sc.kernel_A_prop34(bg, Md, 1.0, math.pi / 2, None).A
        Ao = sc.kernel_A_offset(bg, Md, None, math.pi / 2).A
        rep.add(f"kernel_offset_vs_aux_{name}", _rel(Ao, A0), 1e-4)
        rep.add(f"kernel_lambda_independence_{name}", _rel(A1, A0), 1e-5)


def suite_oracle(rep):
    t = time.perf_counter()
    alpha = math.pi / 2
    for E, pairs in ((25.0, [sc.momentum_pair_real([0.0, 3.0], 25.0), sc.momentum_pair_real([8.0, 6.0], 25.0)]),
                     (1.0, [sc.momentum_pair_complex([2.2, 0.0], 1.0), sc.momentum_pair_complex([0.0, -3.0], 1.0)])):
        disc, v, v0 = _case(GAUSS, 64, 12, 48)
        Md = sc.impedance_difference(v, v0, E, alpha, disc)
        for pr in pairs:
            r = sc.boundary_datum(Md, pr, alpha, disc)
            sol = (vo.lippmann_schwinger_classical(v, pr.k.re, disc) if pr.path == "classical"
                   else vo.faddeev_solve(v, pr.k, disc))
            h = vo.amplitude_volume(v, sol, pr.l)
            p = pr.p
            rep.add(f"datum_{pr.path}_E{E:g}_p({p[0]:.1f},{p[1]:.1f})", abs(r.value - h) / abs(h), 1e-3)
            rep.add(f"trace_{pr.path}_E{E:g}_p({p[0]:.1f},{p[1]:.1f})",
                    _rel(r.trace.values, sol.robin_trace(alpha).values), 1e-4 if pr.path == "classical" else 1e-3)


def suite_remark311(rep):
    disc, v, v0 = _case(STEP, 128, 12, 48)
    E, alpha = 1.0, math.pi / 2
    Md = bo.operator_sub(bo.radial_impedance_oracle(STEP, E, alpha, disc.boundary, DOMAIN),
                         bo.free_impedance_operator(E, alpha, disc.boundary))
    out = bo.remark311_check(vo.boundary_resolvent(v, E, disc), vo.boundary_resolvent(v0, E, disc), alpha,
                             [0.08, 0.04, 0.02], Md)
    rep.add("resolvent_inverse_formula", out.residual, 1e-3)


def suite_exceptional(rep):
    alpha = math.pi / 2
    disc, v, v0 = _case(STEP, 64, 12, 48)
    E_star = bo.locate_impedance_eigenvalue(STEP, alpha, 0, 0.1, 2.0)
    probe = bo.wellposedness_probe(v, E_star, alpha, disc=disc)
    rep.add("planted_eigenvalue_condition", probe.condition, greens.COND_LIMIT, cmp=">")
    rep.add("planted_eigenvalue_detected", float(not probe.passed), 0.5, cmp=">")
    for f in (0.95, 1.05):
        p = bo.wellposedness_probe(v, f * E_star, alpha, disc=disc)
        rep.add(f"perturbed_energy_{f:.2f}_condition", p.condition, greens.COND_LIMIT)
