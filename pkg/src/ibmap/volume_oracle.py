"""Volume-integral solvers used as ground truth for the boundary pipeline.

All solves are restricted to the active disk (where the potential lives) and
extended outward by the integral representation, which is exact because the
potential vanishes outside it.  Volume operators use Fourier product
integration (see greens.volume_operator); fields at or beyond the boundary
are evaluated by exact angular mode sums.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import greens
from .boundary_ops import BoundaryOperator, RobinTrace
from .domain_model import Discretization, PotentialField
from .errors import (AccuracyError, ConfigurationError, DomainError, ExceptionalPointError,
                     GridMismatchError, IbmError, ValidationError, WellPosednessError)
from .greens import ComplexMomentum, Direction

RESIDUAL_LIMIT = 1e-9
TWO_PI = 2.0 * np.pi


# --------------------------------------------------------------- kernels

class FreeKernel:
    """Background kernel on a discretization: outgoing radial part plus, for
    complex ζ, the Faddeev plane-wave correction.

    Exactly one of E (classical outgoing Green function G⁺) or zeta (complex
    2-vector, Faddeev G(·, ζ)) is given.
    """

    def __init__(self, disc: Discretization, E: float | None = None, zeta=None):
        self.disc = disc
        if (E is None) == (zeta is None):
            raise ConfigurationError("give either E or zeta")
        x_max = 2.0 * disc.domain.radius + 1.0
        if zeta is None:
            self.faddeev = None
            self.pair = greens.radial_pair(float(E), outgoing=True)
            self.Z = complex(E)
        else:
            zeta = np.asarray(zeta, dtype=complex)
            self.faddeev = greens.FaddeevKernel(zeta.real, zeta.imag, x_max=x_max)
            self.pair = self.faddeev.pair
            self.Z = self.faddeev.Z
        self._vol = None

    def volume_matrix(self) -> np.ndarray:
        """Integration operator on active nodes (weights included)."""
        if self._vol is None:
            K = greens.volume_operator(self.disc, greens.ModalKernel(self.pair, None, "free"))
            if self.faddeev is not None:
                x = self.disc.active_nodes
                K = K + self.faddeev.smooth_matrix(x, x) * self.disc.active_weights[None, :]
            self._vol = K
        return self._vol

    def exterior(self, points, combo=(1.0, 0.0), normals=None) -> np.ndarray:
        """f ↦ a·u + b·∂_ν u at points outside the active disk, u = ∫Γ f.

        The normal is radial for the mode part; `normals` (default radial)
        is used for the plane-wave part.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        out = greens.exterior_potential_operator(self.pair, self.disc, r, th, combo)
        if self.faddeev is not None:
            nu = pts / r[:, None] if normals is None else np.asarray(normals, dtype=float)
            z = self.disc.active_nodes
            fk = self.faddeev
            ex = np.exp(1j * (pts @ fk.omega.T))
            ez = np.exp(-1j * (z @ fk.omega.T))
            a, b = combo
            fac = a + b * 1j * (nu @ fk.omega.T)
            S = (ex * fac * fk.coef) @ ez.T + a * fk.c0
            out = out + S * self.disc.active_weights[None, :]
        return out

    def pointwise(self, x, y) -> np.ndarray:
        """Γ(x_i - y_j) for separated point sets."""
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        d = x[:, None, :] - y[None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        if np.any(r == 0):
            raise DomainError("coincident points in a pointwise kernel evaluation")
        val = self.pair.fundamental(r)
        if self.faddeev is not None:
            val = val + self.faddeev.smooth_matrix(x, y)
        return val

    def pointwise_grad(self, x, y) -> np.ndarray:
        """∇_x Γ(x_i - y_j), shape (nx, ny, 2)."""
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        d = x[:, None, :] - y[None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        g = (self.pair.fundamental_dr(r) / r)[..., None] * d
        if self.faddeev is not None:
            fk = self.faddeev
            ex = np.exp(1j * (x @ fk.omega.T))
            ey = np.exp(-1j * (y @ fk.omega.T))
            g = g + 1j * np.einsum("iq,jq,qd->ijd", ex * fk.coef, ey, fk.omega)
        return g


def _factor(A, what, exceptional=False):
    factors, cond = greens.factor_with_condition(A)
    if not cond < greens.COND_LIMIT:
        cls = ExceptionalPointError if exceptional else AccuracyError
        raise cls(f"{what} is numerically singular (cond {cond:.3e})", condition=cond)
    return factors, cond


def _check_residual(A, x, b, what):
    res = float(np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-300))
    if not res <= RESIDUAL_LIMIT:
        raise AccuracyError(f"{what}: residual {res:.2e} above {RESIDUAL_LIMIT}", achieved=res)
    return res


# -------------------------------------------------------------- solutions

@dataclass
class FieldSolution:
    """A field on the active nodes with its boundary trace and normal derivative."""

    kind: str
    disc: Discretization
    values: np.ndarray
    trace: np.ndarray
    dtrace: np.ndarray
    k: object = None
    l: object = None
    gamma: Direction | None = None
    residual: float = 0.0
    condition: float = 1.0
    record: object = None
    density: np.ndarray | None = None   # v·ψ on active nodes (for exterior extension)
    kernel: FreeKernel | None = None

    def __post_init__(self):
        if not self.residual <= RESIDUAL_LIMIT:
            raise AccuracyError(f"{self.kind} solution residual {self.residual:.2e} too large",
                                achieved=self.residual)

    @property
    def mu(self) -> np.ndarray:
        if self.k is None:
            raise ValidationError("solution has no momentum")
        kv = self.k.vector if isinstance(self.k, ComplexMomentum) else np.asarray(self.k)
        return self.values * np.exp(-1j * (self.disc.active_nodes @ kv))

    def robin_trace(self, alpha: float) -> RobinTrace:
        return RobinTrace(math.cos(alpha) * self.trace - math.sin(alpha) * self.dtrace, float(alpha),
                          self.disc.boundary, self.kind)

    def at(self, points, incident) -> np.ndarray:
        """ψ at points outside the active disk: incident + ∫Γ vψ."""
        if self.density is None or self.kernel is None:
            raise ConfigurationError("solution carries no density for exterior evaluation")
        pts = np.atleast_2d(points)
        return incident(pts) + self.kernel.exterior(pts) @ self.density


def _plane(kvec):
    kvec = np.asarray(kvec)
    return lambda x: np.exp(1j * (np.atleast_2d(x) @ kvec))


def _plane_dnu(kvec, normals):
    kvec = np.asarray(kvec)
    return lambda x: 1j * (normals @ kvec) * np.exp(1j * (np.atleast_2d(x) @ kvec))


def _solve_ls(disc: Discretization, v: PotentialField, kernel: FreeKernel, inc_vals, inc_b, inc_dn,
              exceptional: bool, what: str):
    dv = disc.restrict(v)
    K = kernel.volume_matrix()
    A = np.eye(K.shape[0]) - K * dv[None, :]
    factors, cond = _factor(A, what, exceptional)
    psi = greens.lu_solve(factors, inc_vals)
    res = _check_residual(A, psi, inc_vals, what)
    dens = dv * psi
    xb = disc.boundary.points
    trace = inc_b + kernel.exterior(xb) @ dens
    dtrace = inc_dn + kernel.exterior(xb, (0.0, 1.0)) @ dens
    return psi, trace, dtrace, res, cond, dens


def lippmann_schwinger_classical(v: PotentialField, k, disc: Discretization) -> FieldSolution:
    """ψ⁺ = e^{ikx} + ∫G⁺(x - y)v(y)ψ⁺(y)dy for real k."""
    k = np.asarray(k.re if isinstance(k, ComplexMomentum) else k, dtype=float)
    E = float(k @ k)
    if E <= 0:
        raise ConfigurationError("classical scattering needs |k| > 0")
    kernel = FreeKernel(disc, E=E)
    x = disc.active_nodes
    xb = disc.boundary.points
    inc = _plane(k)
    try:
        psi, tr, dtr, res, cond, dens = _solve_ls(disc, v, kernel, inc(x), inc(xb),
                                                   _plane_dnu(k, disc.boundary.normals)(xb),
                                                   False, "Lippmann-Schwinger")
    except AccuracyError as exc:
        raise IbmError(f"classical solve failed for a real potential (internal error): {exc}") from exc
    return FieldSolution("classical", disc, psi, tr, dtr, k, None, None, res, cond, None, dens, kernel)


def faddeev_solve(v: PotentialField, k: ComplexMomentum, disc: Discretization) -> FieldSolution:
    """Faddeev solution ψ = e^{ikx}μ of ψ = e^{ikx} + ∫G(x - y, k)v(y)ψ(y)dy.

    The unknown is μ, so the system reads (I - e^{-ikx}K V e^{ikx})μ = 1.
    """
    if k.is_real:
        raise DomainError("Faddeev solve needs Im k ≠ 0")
    kernel = FreeKernel(disc, zeta=k.vector)
    x = disc.active_nodes
    dv = disc.restrict(v)
    ph = np.exp(1j * (x @ k.vector))
    K = kernel.volume_matrix()
    A = np.eye(len(x)) - (K * (dv * ph)[None, :]) / ph[:, None]
    factors, cond = _factor(A, "Faddeev equation", exceptional=True)
    one = np.ones(len(x), dtype=complex)
    mu = greens.lu_solve(factors, one)
    res = _check_residual(A, mu, one, "Faddeev equation")
    psi = ph * mu
    dens = dv * psi
    xb = disc.boundary.points
    inc = _plane(k.vector)
    tr = inc(xb) + kernel.exterior(xb) @ dens
    dtr = _plane_dnu(k.vector, disc.boundary.normals)(xb) + kernel.exterior(xb, (0.0, 1.0)) @ dens
    return FieldSolution("faddeev", disc, psi, tr, dtr, k, None, None, res, cond, None, dens, kernel)


def psi_gamma_two_momentum(v: PotentialField, gamma: Direction, k, l, eps_schedule: Sequence[float],
                           disc: Discretization) -> FieldSolution:
    """ψ_γ(x, k, l) = e^{ilx} + ∫G_γ(x - y, k)v(y)ψ_γ(y)dy, G_γ(·, k) = G(·, k + i0γ).

    Solved at k + iεγ for each ε and extrapolated to ε = 0.
    """
    eps = greens.check_schedule(eps_schedule)
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    if abs(k @ k - l @ l) > 1e-12 * max(1.0, k @ k) or k @ k <= 0:
        raise ConfigurationError("ψ_γ needs k² = l² > 0")
    x = disc.active_nodes
    xb = disc.boundary.points
    inc = _plane(l)
    vals, trs, dtrs, res_all, conds = [], [], [], [], []
    for e in eps:
        kernel = FreeKernel(disc, zeta=k + 1j * e * gamma.gamma)
        psi, tr, dtr, res, cond, _ = _solve_ls(disc, v, kernel, inc(x), inc(xb),
                                                _plane_dnu(l, disc.boundary.normals)(xb),
                                                True, "directional equation")
        vals.append(psi)
        trs.append(tr)
        dtrs.append(dtr)
        res_all.append(res)
        conds.append(cond)
    psi, err = greens.richardson(vals, eps)
    tr, err_t = greens.richardson(trs, eps)
    dtr, err_d = greens.richardson(dtrs, eps)
    rec = greens._directional_record(eps, np.array(trs), tr, max(err_t, err_d))
    scale = max(1.0, float(np.max(np.abs(tr))))
    if not rec.monotone and rec.distances[-1] > 1e-6 * scale:
        raise AccuracyError("ε-extrapolation of ψ_γ does not converge", achieved=float(rec.distances[-1]))
    dens = disc.restrict(v) * psi
    sol = FieldSolution("directional", disc, psi, tr, dtr, k, l, gamma, max(res_all), max(conds), rec, dens)
    return sol


def amplitude_volume(v: PotentialField, sol: FieldSolution, l) -> complex:
    """(2π)^{-2} ∫ e^{-ilx} v(x) ψ(x) dx."""
    disc = sol.disc
    if isinstance(l, ComplexMomentum):
        if sol.kind == "faddeev" and not np.allclose(l.im, sol.k.im, atol=1e-12):
            raise ValidationError("h(k, l) needs Im l = Im k")
        if isinstance(sol.k, ComplexMomentum) and abs(l.energy - sol.k.energy) > 1e-10 * max(1, abs(l.energy)):
            raise ValidationError("momenta have different energies")
        lv = l.vector
    else:
        lv = np.asarray(l, dtype=float)
        kk = sol.k.re if isinstance(sol.k, ComplexMomentum) else np.asarray(sol.k, dtype=float)
        if sol.kind == "classical" and abs(lv @ lv - kk @ kk) > 1e-10 * max(1.0, kk @ kk):
            raise ValidationError("f(k, l) needs |l| = |k|")
    x = disc.active_nodes
    f = disc.restrict(v) * sol.values * np.exp(-1j * (x @ lv))
    return complex(np.sum(disc.active_weights * f) / TWO_PI ** 2)


# ------------------------------------------------------------- resolvents

@dataclass
class ResolventKernel:
    """R(x, y) of Δ + E - v⁰ for x, y outside the active disk."""

    kind: str
    kernel: FreeKernel
    disc: Discretization
    potential_id: str
    dv: np.ndarray
    factors: tuple | None
    condition: float
    k: object = None

    def values(self, x, y, combo_x=(1.0, 0.0), combo_y=(1.0, 0.0), normals_x=None, normals_y=None):
        """a_x a_y R + ... : the (combo_x, combo_y)-trace of R at separated points x, y."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        nx = x / np.hypot(x[:, 0], x[:, 1])[:, None] if normals_x is None else normals_x
        ny = y / np.hypot(y[:, 0], y[:, 1])[:, None] if normals_y is None else normals_y
        ax, bx = combo_x
        ay, by = combo_y
        G = self.kernel.pointwise(x, y)
        out = ax * ay * G
        if bx or by:
            grad = self.kernel.pointwise_grad(x, y)      # ∇_x Γ(x - y) = -∇_y Γ
            if bx:
                out = out + bx * ay * np.einsum("ijd,id->ij", grad, nx)
            if by:
                out = out - ax * by * np.einsum("ijd,jd->ij", grad, ny)
            if bx and by:
                out = out + bx * by * self._mixed(x, y, nx, ny)
        if self.factors is not None:
            z = self.disc.active_nodes
            inc = ay * self.kernel.pointwise(z, y)
            if by:
                inc = inc - by * np.einsum("ijd,jd->ij", self.kernel.pointwise_grad(z, y), ny)
            phi = greens.lu_solve(self.factors, inc)
            out = out + self.kernel.exterior(x, combo_x, nx) @ (self.dv[:, None] * phi)
        return out

    def _mixed(self, x, y, nx, ny):
        # ∂ν_x ∂ν_y Γ(x - y) = -(ν_x · H ν_y), H the Hessian of Γ
        d = x[:, None, :] - y[None, :, :]
        r = np.hypot(d[..., 0], d[..., 1])
        p = self.kernel.pair
        g1 = p.fundamental_dr(r)
        # Γ'' = -Γ'/r - Z Γ for the radial Helmholtz equation
        g2 = -g1 / r - self.kernel.Z * p.fundamental(r)
        e = d / r[..., None]
        a = np.einsum("ijd,id->ij", e, nx)
        b = np.einsum("ijd,jd->ij", e, ny)
        c = nx @ ny.T
        hess = g2 * a * b + (g1 / r) * (c - a * b)
        out = -hess
        if self.kernel.faddeev is not None:
            fk = self.kernel.faddeev
            ex = np.exp(1j * (x @ fk.omega.T)) * (1j * (nx @ fk.omega.T))
            ey = np.exp(-1j * (y @ fk.omega.T)) * (-1j * (ny @ fk.omega.T))
            out = out + (ex * fk.coef) @ ey.T
        return out

    def reduced(self, x, y) -> np.ndarray:
        """r(x, y) = e^{-ik(x - y)} R(x, y)."""
        kv = self.k.vector if isinstance(self.k, ComplexMomentum) else np.asarray(self.k)
        x = np.atleast_2d(x)
        y = np.atleast_2d(y)
        ph = np.exp(-1j * (x @ kv))[:, None] * np.exp(1j * (y @ kv))[None, :]
        return ph * self.values(x, y)


def resolvent_kernel(v0: PotentialField, k, disc: Discretization) -> ResolventKernel:
    """R(x, y, k) = G(x - y, k) + ∫G(x - z, k)v⁰(z)R(z, y, k)dz.

    k: ComplexMomentum with Im k ≠ 0 (Faddeev R), or a real vector / real
    ComplexMomentum (classical R⁺).
    """
    if isinstance(k, ComplexMomentum) and not k.is_real:
        kernel = FreeKernel(disc, zeta=k.vector)
        kind = "faddeev"
    else:
        kr = k.re if isinstance(k, ComplexMomentum) else np.asarray(k, dtype=float)
        kernel = FreeKernel(disc, E=float(kr @ kr))
        kind = "classical"
    dv = disc.restrict(v0)
    factors, cond = None, 1.0
    if np.any(dv):
        K = kernel.volume_matrix()
        A = np.eye(K.shape[0]) - K * dv[None, :]
        factors, cond = _factor(A, "background resolvent", exceptional=(kind == "faddeev"))
    return ResolventKernel(kind, kernel, disc, v0.ident, dv, factors, cond, k)


@dataclass
class BoundaryResolvent:
    """Double α-trace of the outgoing resolvent R⁺ on the boundary grid.

    The free part is diagonal in angular modes and evaluated with the source
    on the circle and the target pushed out to R + ε; the part due to the
    potential is smooth and evaluated directly.
    """

    E: float
    disc: Discretization
    smooth_fn: object
    pair: greens.RadialPair

    @property
    def grid(self):
        return self.disc.boundary

    def free_symbol(self, alpha: float, eps: float) -> np.ndarray:
        R = self.disc.domain.radius
        am = np.abs(self.grid.modes)
        p = self.pair
        ca, sa = math.cos(alpha), math.sin(alpha)
        b1 = p.log_boundary(1, am, R, alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            b2 = np.exp(p.log_u2(am, R + eps)) * (ca - sa * p.dlog_u2(am, R + eps))
        return 2.0 * np.pi * R * p.c(am) * np.exp(b1) * b2

    def double_trace(self, alpha: float, eps_schedule):
        eps = greens.check_schedule(eps_schedule)
        syms = [self.free_symbol(alpha, e * self.grid.spacing) for e in eps]
        sym, err = greens.richardson(syms, eps)
        K = greens.circulant_from_symbol(sym, self.grid) + self.smooth_fn(alpha)
        return K, err


def boundary_resolvent(v0: PotentialField, E: float, disc: Discretization) -> BoundaryResolvent:
    """D_α R⁺ data for background potential v⁰ (classical outgoing resolvent)."""
    kernel = FreeKernel(disc, E=E)
    dv = disc.restrict(v0)
    xb = disc.boundary.points
    nb = disc.boundary.normals
    cache = {}

    def smooth(alpha):
        if alpha in cache:
            return cache[alpha]
        if not np.any(dv):
            out = np.zeros((len(xb), len(xb)), dtype=complex)
        else:
            ca, sa = math.cos(alpha), math.sin(alpha)
            K = kernel.volume_matrix()
            A = np.eye(K.shape[0]) - K * dv[None, :]
            factors, _ = _factor(A, "outgoing resolvent")
            z = disc.active_nodes
            inc = ca * kernel.pointwise(z, xb) + sa * np.einsum("ijd,jd->ij", kernel.pointwise_grad(z, xb), nb)
            phi = greens.lu_solve(factors, inc)
            out = kernel.exterior(xb, (ca, -sa)) @ (dv[:, None] * phi)
        cache[alpha] = out
        return out

    return BoundaryResolvent(float(E), disc, smooth, kernel.pair)


# ------------------------------------------------------------- BVP, identity

def robin_bvp_solve(v: PotentialField | None, E: float, alpha: float, g: RobinTrace, disc: Discretization,
                    G: "greens.GreenKernelMatrix | None" = None) -> FieldSolution:
    """ψ(x) = (1/sin α)∫_{∂D} g(ξ)G_{α,v}(x, ξ)dξ, the solution with [ψ]_α = g."""
    s = math.sin(alpha)
    if abs(s) < 1e-14:
        raise ConfigurationError("the Green representation needs sin α ≠ 0")
    if not g.grid.same_as(disc.boundary):
        raise GridMismatchError("trace lives on another grid")
    if G is None:
        G, _ = greens.domain_green(disc, v, E, alpha)
    elif G.alpha != alpha or G.energy != E:
        raise ConfigurationError("Green function built for another (α, E)")
    wg = disc.boundary.weight * g.values
    psi = G.bv.T @ wg / s
    trace = G.bb @ wg / s
    dtrace = (math.cos(alpha) * trace - g.values) / s
    return FieldSolution("bvp", disc, psi, trace, dtrace, residual=0.0)


def alessandrini_identity_residual(v: PotentialField, v0: PotentialField, psi: FieldSolution,
                                   psi0: FieldSolution, Mdiff: BoundaryOperator, alpha: float | None = None,
                                   floor: float = 1e-30) -> float:
    """|∫(v - v⁰)ψψ⁰ - ∫[ψ]_α (M̂_{α,v} - M̂_{α,v⁰})[ψ⁰]_α| / (|LHS| + |RHS| + floor)."""
    alpha = Mdiff.alpha if alpha is None else alpha
    if alpha is None:
        raise ConfigurationError("α unknown for the identity")
    disc = psi.disc
    if not (psi0.disc is disc or psi0.disc.same_as(disc)):
        raise GridMismatchError("solutions on different discretizations")
    dv = disc.restrict(v) - disc.restrict(v0)
    lhs = np.sum(disc.active_weights * dv * psi.values * psi0.values)
    t = psi.robin_trace(alpha).values
    t0 = psi0.robin_trace(alpha).values
    rhs = np.sum(disc.boundary.weight * t * Mdiff.apply(t0))
    return float(abs(lhs - rhs) / (abs(lhs) + abs(rhs) + floor))


def identity_sides(v, v0, psi, psi0, Mdiff, alpha=None):
    alpha = Mdiff.alpha if alpha is None else alpha
    disc = psi.disc
    dv = disc.restrict(v) - disc.restrict(v0)
    lhs = complex(np.sum(disc.active_weights * dv * psi.values * psi0.values))
    rhs = complex(np.sum(disc.boundary.weight * psi.robin_trace(alpha).values
                         * Mdiff.apply(psi0.robin_trace(alpha).values)))
    return lhs, rhs


def plane_wave_solution(k, disc: Discretization) -> FieldSolution:
    """ψ⁰ = e^{ikx} (v⁰ = 0) as a FieldSolution."""
    kv = k.vector if isinstance(k, ComplexMomentum) else np.asarray(k)
    x = disc.active_nodes
    xb = disc.boundary.points
    return FieldSolution("plane_wave", disc, _plane(kv)(x), _plane(kv)(xb),
                         _plane_dnu(kv, disc.boundary.normals)(xb), k)


def stencil_residual(fn, x, E: float, v: float = 0.0, h: float = 1e-3) -> complex:
    """Five-point (Δ_h + E - v)u at x."""
    x = np.asarray(x, dtype=float)
    pts = np.array([x, x + [h, 0], x - [h, 0], x + [0, h], x - [0, h]])
    u = np.asarray(fn(pts)).ravel()
    return complex((u[1:].sum() - 4 * u[0]) / h ** 2 + (E - v) * u[0])
