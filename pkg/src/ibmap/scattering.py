"""Scattering data from impedance boundary data.

The trace [ψ]_α on the circle solves the second-kind equation

    [ψ]_α = [ψ⁰]_α + ∫ A_α(·, y)[ψ(y)]_α dy,

whose kernel A_α composes the double α-trace of the background resolvent R⁰
with the impedance map difference M̂_{α,v} - M̂_{α,v⁰}.  The datum is then a
boundary pairing,

    h(k, l) - h⁰(k, l) = (2π)^{-2} ∬ [ψ⁰(x, -l)]_α (M_{α,v} - M_{α,v⁰})(x, y) [ψ(y, k)]_α dx dy.

Two independent constructions of A_α are provided.  The offset route pushes
the target off the circle by ε, traces R⁰ in both variables and extrapolates
ε → 0.  The auxiliary-field route extends each column of the map difference
into the disk as a Helmholtz field at a spectral parameter λ and only needs a
single normal derivative of R⁰ plus a volume integral.

The free part of R⁰ is diagonal in angular modes and handled by exact mode
sums; the Faddeev plane-wave correction and any background-potential part
are smooth and evaluated directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import greens
from .boundary_ops import BoundaryOperator, RobinTrace, dtn_free_disk
from .domain_model import Discretization, PotentialField
from .errors import (AccuracyError, ConfigurationError, DomainError, ExceptionalPointError,
                     GridMismatchError, ValidationError, WellPosednessError)
from .greens import ComplexMomentum, Direction
from .volume_oracle import FreeKernel, resolvent_kernel

TWO_PI = 2.0 * np.pi


# -------------------------------------------------------------- momenta

@dataclass(frozen=True)
class MomentumPair:
    k: ComplexMomentum
    l: ComplexMomentum
    path: str
    gamma: Direction | None = None

    def __post_init__(self):
        if self.path not in ("classical", "faddeev", "directional"):
            raise ConfigurationError(f"unknown path {self.path!r}")
        E = self.k.energy
        if abs(self.l.energy - E) > 1e-12 * max(1.0, abs(E)):
            raise ValidationError("k² and l² differ")
        if self.path == "faddeev":
            if not np.allclose(self.k.im, self.l.im, rtol=0, atol=1e-12) or not np.any(self.k.im):
                raise ValidationError("Faddeev pairs need Im k = Im l ≠ 0")
        elif not (self.k.is_real and self.l.is_real):
            raise ValidationError(f"{self.path} pairs need real momenta")
        if self.path == "directional" and self.gamma is None:
            raise ValidationError("directional pairs need γ")

    @property
    def energy(self) -> float:
        return self.k.energy

    @property
    def p(self) -> np.ndarray:
        return self.l.re - self.k.re

    def rotated(self, Q: np.ndarray) -> "MomentumPair":
        rot = lambda c: ComplexMomentum(Q @ c.re, Q @ c.im, c.energy)  # noqa: E731
        g = Direction(Q @ self.gamma.gamma) if self.gamma is not None else None
        return MomentumPair(rot(self.k), rot(self.l), self.path, g)


def _perp(p: np.ndarray) -> np.ndarray:
    return np.array([-p[1], p[0]]) / np.linalg.norm(p)


def momentum_pair_real(p, E: float) -> MomentumPair:
    """k = -p/2 + ê⊥·√(E - |p|²/4), l = k + p."""
    p = np.asarray(p, dtype=float)
    pn = float(np.linalg.norm(p))
    if not (E > 0 and 0 < pn <= 2 * math.sqrt(E) * (1 + 1e-14)):
        raise DomainError(f"|p| = {pn} outside the classical ball 0 < |p| <= 2√E")
    h = math.sqrt(max(0.0, E - 0.25 * pn * pn))
    k = -0.5 * p + h * _perp(p)
    l = k + p
    z = np.zeros(2)
    return MomentumPair(ComplexMomentum(k, z, float(E)), ComplexMomentum(l, z.copy(), float(E)),
                        "classical")


def momentum_pair_complex(p, E: float) -> MomentumPair:
    """k = -p/2 + i ê⊥·√(|p|²/4 - E), l = k + p (Im k = Im l)."""
    p = np.asarray(p, dtype=float)
    pn = float(np.linalg.norm(p))
    q = 0.25 * pn * pn - E
    if pn == 0 or q <= 0:
        raise DomainError(f"|p| = {pn} is not beyond 2√E; use momentum_pair_real")
    kI = math.sqrt(q) * _perp(p)
    k = ComplexMomentum(-0.5 * p, kI, float(E))
    l = ComplexMomentum(0.5 * p, kI.copy(), float(E))
    return MomentumPair(k, l, "faddeev")


def momentum_pair_directional(k, l, gamma) -> MomentumPair:
    k = np.asarray(k, dtype=float)
    l = np.asarray(l, dtype=float)
    g = gamma if isinstance(gamma, Direction) else Direction.of(gamma)
    return MomentumPair(ComplexMomentum.real(k), ComplexMomentum(l, np.zeros(2), float(k @ k)),
                        "directional", g)


# --------------------------------------------------------- background

class Background:
    """Resolvent R⁰ of the background potential seen from the boundary.

    zeta: complex momentum of the Faddeev kernel (None for the classical
    outgoing kernel at energy E).
    """

    def __init__(self, disc: Discretization, E: float, zeta=None, v0: PotentialField | None = None):
        self.disc = disc
        self.E = float(E)
        self.kernel = FreeKernel(disc, zeta=zeta) if zeta is not None else FreeKernel(disc, E=E)
        self.pair = self.kernel.pair
        self.Z = self.kernel.Z
        self.fk = self.kernel.faddeev
        self.v0 = v0
        self.resolvent = None
        if v0 is not None and not v0.is_zero:
            if zeta is None:
                kk = np.array([math.sqrt(E), 0.0]) if E > 0 else None
                if kk is None:
                    raise ConfigurationError("classical background needs E > 0")
                self.resolvent = resolvent_kernel(v0, kk, disc)
            else:
                z = np.asarray(zeta)
                self.resolvent = resolvent_kernel(
                    v0, ComplexMomentum(z.real, z.imag, float((z @ z).real)), disc)

    @property
    def grid(self):
        return self.disc.boundary

    # modal symbols of the free part --------------------------------------
    def _u2_trace(self, am, r, alpha):
        p = self.pair
        ca, sa = math.cos(alpha), math.sin(alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.exp(p.log_u2(am, r)) * (ca - sa * p.dlog_u2(am, r))
        if p.family == "laplace":
            val = np.where(am == 0, ca * math.log(r) - sa / r, val)
        return val

    def double_symbol(self, alpha: float, eps: float) -> np.ndarray:
        """Operator symbol of the free part of D_{α,ε}R⁰ on the circle:
        2πR·c·(cos α u1 - sin α u1')(R)·(cos α u2 - sin α u2')(R + ε)."""
        am = np.abs(self.grid.modes)
        R = self.grid.radius
        b1 = np.exp(self.pair.log_boundary(1, am, R, alpha))
        return TWO_PI * R * self.pair.c(am) * b1 * self._u2_trace(am, R + eps, alpha)

    def single_symbol(self, alpha: float, eps: float) -> np.ndarray:
        """Operator symbol of [R⁰(x + εν, ξ)]_{x,α} for ξ on the circle: 2πR·c·u1(R)·(cos α u2 - sin α u2')(R + ε)."""
        am = np.abs(self.grid.modes)
        R = self.grid.radius
        u1 = np.exp(self.pair.log_u1(am, R))
        return TWO_PI * R * self.pair.c(am) * u1 * self._u2_trace(am, R + eps, alpha)

    # smooth parts on the boundary -----------------------------------------
    def smooth_double(self, alpha: float) -> np.ndarray:
        xb = self.grid.points
        nb = self.grid.normals
        ca, sa = math.cos(alpha), math.sin(alpha)
        out = np.zeros((len(xb), len(xb)), dtype=complex)
        if self.fk is not None:
            om = self.fk.omega
            ex = np.exp(1j * (xb @ om.T)) * (ca - sa * 1j * (nb @ om.T))
            ey = np.exp(-1j * (xb @ om.T)) * (ca + sa * 1j * (nb @ om.T))
            out += (ex * self.fk.coef) @ ey.T + ca * ca * self.fk.c0
        if self.resolvent is not None:
            out += self._correction(xb, xb, (ca, -sa), (ca, -sa))
        return out

    def smooth_single_x(self, alpha: float, targets=None, normals=None, sources=None) -> np.ndarray:
        """[S(x - ξ)]_{x,α} + background part, for x = targets, ξ = sources (defaults: boundary)."""
        xb = self.grid.points if targets is None else np.atleast_2d(targets)
        nx = self.grid.normals if normals is None else normals
        ys = self.grid.points if sources is None else sources
        ca, sa = math.cos(alpha), math.sin(alpha)
        out = np.zeros((len(xb), len(ys)), dtype=complex)
        if self.fk is not None:
            om = self.fk.omega
            ex = np.exp(1j * (xb @ om.T)) * (ca - sa * 1j * (nx @ om.T))
            ey = np.exp(-1j * (ys @ om.T))
            out += (ex * self.fk.coef) @ ey.T + ca * self.fk.c0
        return out

    def smooth_single_xi(self, alpha: float, targets, normals_xi=None) -> np.ndarray:
        """[S(x - ξ)]_{ξ,α} + background part for exterior x and boundary ξ."""
        xt = np.atleast_2d(targets)
        yb = self.grid.points
        nb = self.grid.normals if normals_xi is None else normals_xi
        ca, sa = math.cos(alpha), math.sin(alpha)
        out = np.zeros((len(xt), len(yb)), dtype=complex)
        if self.fk is not None:
            om = self.fk.omega
            ex = np.exp(1j * (xt @ om.T))
            ey = np.exp(-1j * (yb @ om.T)) * (ca + sa * 1j * (nb @ om.T))
            out += (ex * self.fk.coef) @ ey.T + ca * self.fk.c0
        if self.resolvent is not None:
            out += self._correction(xt, yb, (1.0, 0.0), (ca, -sa))
        return out

    def _correction(self, x, y, combo_x, combo_y):
        R = self.resolvent
        nx = x / np.hypot(x[:, 0], x[:, 1])[:, None]
        ny = y / np.hypot(y[:, 0], y[:, 1])[:, None]
        z = self.disc.active_nodes
        ay, by = combo_y
        inc = ay * R.kernel.pointwise(z, y)
        if by:
            # ∂ν_y Γ(z - y) = -∇Γ(z - y)·ν_y
            inc = inc - by * np.einsum("ijd,jd->ij", R.kernel.pointwise_grad(z, y), ny)
        phi = greens.lu_solve(R.factors, inc)
        return R.kernel.exterior(x, combo_x, nx) @ (R.dv[:, None] * phi)


# --------------------------------------------------------------- kernels

@dataclass
class ScatterKernel:
    A: np.ndarray
    route: str
    k: object
    alpha: float
    grid: object
    eps: np.ndarray | None = None
    lam: float | None = None
    error_estimate: float = 0.0
    condition: float | None = None

    def operator(self) -> np.ndarray:
        """Discrete operator t ↦ ∫A(·, y)t(y)dy."""
        return self.A * self.grid.weight


def _check_mdiff(Mdiff: BoundaryOperator, alpha: float):
    if Mdiff.delta_coeff != 0:
        raise ValidationError("map difference must be delta-free (same-α impedance maps)")
    if Mdiff.alpha is not None and abs(Mdiff.alpha - alpha) > 1e-14:
        raise ValidationError("map difference built for another α")


def default_eps(grid) -> np.ndarray:
    return grid.spacing * np.array([0.08, 0.04, 0.02])


def _background_for(disc, E, k, v0=None, zeta=None) -> Background:
    if zeta is not None:
        return Background(disc, E, zeta=zeta, v0=v0)
    if isinstance(k, ComplexMomentum) and not k.is_real:
        return Background(disc, E, zeta=k.vector, v0=v0)
    return Background(disc, E, None, v0=v0)


def kernel_A_offset(bg: Background, Mdiff: BoundaryOperator, k, alpha: float,
                    eps_schedule: Sequence[float] | None = None) -> ScatterKernel:
    """A_α = lim_{ε→0} ∫ D_{α,ε}R⁰(x, ξ)(M_{α,v} - M_{α,v⁰})(ξ, y)dξ."""
    _check_mdiff(Mdiff, alpha)
    grid = bg.grid
    eps = greens.check_schedule(default_eps(grid) if eps_schedule is None else eps_schedule)
    smooth = bg.smooth_double(alpha)
    WM = grid.weight * Mdiff.kernel
    As = []
    for e in eps:
        D = greens.circulant_from_symbol(bg.double_symbol(alpha, e), grid) + smooth
        As.append(D @ WM)
    A, err = greens.richardson(As, eps)
    scale = max(float(np.max(np.abs(A))), 1e-300)
    if not np.isfinite(err) or err > 1e-2 * scale:
        raise AccuracyError("offset extrapolation does not converge", achieved=float(err / scale))
    return ScatterKernel(A, "offset_limit", k, float(alpha), grid, eps, None, float(err))


@dataclass
class AuxDirichletField:
    """Helmholtz extensions φ(·, y) of the columns of the map difference."""

    lam: float
    coeffs: np.ndarray          # (modes FFT order, columns)
    Phi: BoundaryOperator
    disc: Discretization
    boundary_values: np.ndarray
    pair: greens.RadialPair

    def radial_factor(self, radii) -> np.ndarray:
        """Q_m(ρ)/Q_m(R), shape (modes, radii)."""
        am = np.abs(self.disc.boundary.modes)
        R = self.disc.domain.radius
        radii = np.asarray(radii, dtype=float)
        lq = self.pair.log_u1(am[:, None], radii[None, :]) - self.pair.log_u1(am, R)[:, None]
        with np.errstate(under="ignore"):
            return np.exp(lq)

    def values(self, points) -> np.ndarray:
        """φ(x, y_j) at interior points, shape (points, columns)."""
        pts = np.atleast_2d(points)
        r = np.hypot(pts[:, 0], pts[:, 1])
        th = np.arctan2(pts[:, 1], pts[:, 0])
        modes = self.disc.boundary.modes
        Q = self.radial_factor(r)                       # (modes, points)
        E = np.exp(1j * np.outer(th, modes))            # (points, modes)
        return (E * Q.T) @ self.coeffs

    def robin_trace(self, alpha: float) -> np.ndarray:
        """cos α φ - sin α Φ̂(λ)φ on the circle, per column."""
        sym = math.cos(alpha) - math.sin(alpha) * self.Phi.meta["symbol"]
        n = self.disc.boundary.n
        return np.fft.ifft(sym[:, None] * self.coeffs, axis=0) * n


def aux_dirichlet_solve(Mdiff: BoundaryOperator, lam: float, disc: Discretization) -> AuxDirichletField:
    """Solve -Δφ = λφ in the disk with φ = Mdiff(·, y) on the circle, column by column."""
    if Mdiff.delta_coeff != 0:
        raise ValidationError("map difference must be delta-free")
    if not Mdiff.grid.same_as(disc.boundary):
        raise GridMismatchError("map difference on another grid")
    try:
        Phi = dtn_free_disk(lam, disc.boundary)
    except WellPosednessError as exc:
        raise ConfigurationError(f"λ = {lam} is a Dirichlet eigenvalue of the disk; pick another λ") from exc
    coeffs = np.fft.fft(Mdiff.kernel, axis=0) / disc.boundary.n
    return AuxDirichletField(float(lam), coeffs, Phi, disc, Mdiff.kernel, greens.radial_pair(lam))


def default_lambda(E: float) -> float:
    return 0.0 if E > 0 else 1.0


def kernel_A_prop34(bg: Background, Mdiff: BoundaryOperator, lam: float | None, alpha: float, k,
                    eps_schedule: Sequence[float] | None = None) -> ScatterKernel:
    """A_α from the auxiliary Helmholtz field φ at spectral parameter λ:

        A = lim ∫_{∂D}[R⁰(x + εν, ξ)]_{x,α}[φ(ξ, y)]_{ξ,α}dξ
            - sin α ∫_D [R⁰(x, ξ)]_{x,α}(v⁰ - E + λ)φ(ξ, y)dξ.
    """
    _check_mdiff(Mdiff, alpha)
    if bg.resolvent is not None:
        raise ConfigurationError("the auxiliary-field route is implemented for v⁰ = 0; use the offset route")
    lam = default_lambda(bg.E) if lam is None else float(lam)
    disc = bg.disc
    grid = bg.grid
    eps = greens.check_schedule(default_eps(grid) if eps_schedule is None else eps_schedule)
    aux = aux_dirichlet_solve(Mdiff, lam, disc)
    T = aux.robin_trace(alpha)                      # (ξ on circle, y)
    WT = grid.weight * T
    smooth = bg.smooth_single_x(alpha)
    firsts = []
    for e in eps:
        C = greens.circulant_from_symbol(bg.single_symbol(alpha, e), grid) + smooth
        firsts.append(C @ WT)
    first, err = greens.richardson(firsts, eps)

    # volume term, mode by mode with radial Gauss-Legendre over the whole disk
    vol = disc.volume
    R = grid.radius
    am = np.abs(grid.modes)
    coef_scale = -bg.Z + lam
    lu1 = bg.pair.log_u1(am[:, None], vol.radii[None, :])
    Q = aux.radial_factor(vol.radii)
    with np.errstate(under="ignore"):
        I_m = np.sum(np.exp(lu1) * Q * vol.radial_weights[None, :], axis=1)   # ∫u1 Q/Q(R) ρdρ
    outer = bg.pair.c(am) * bg._u2_trace(am, R, alpha) * I_m * TWO_PI
    # Σ_m outer_m e^{imθ_x} m̂_m(y)
    Vmodal = np.fft.ifft(outer[:, None] * aux.coeffs, axis=0) * grid.n
    volume = coef_scale * Vmodal
    if bg.fk is not None and coef_scale != 0.0:
        phi = aux.values(vol.nodes)                                   # (nodes, y)
        S = bg.smooth_single_x(alpha, sources=vol.nodes)              # (x, nodes)
        volume = volume + coef_scale * (S * vol.weights[None, :]) @ phi
    A = first - math.sin(alpha) * volume
    return ScatterKernel(A, "prop34", k, float(alpha), grid, eps, lam, float(err))


def kernel_A(bg: Background, Mdiff: BoundaryOperator, k, alpha: float, route: str | None = None,
             lam: float | None = None, eps_schedule=None) -> ScatterKernel:
    """Default route: auxiliary field when sin α ≠ 0 and v⁰ = 0, offset otherwise."""
    if route is None:
        route = "prop34" if abs(math.sin(alpha)) > 1e-12 and bg.resolvent is None else "offset_limit"
    if route == "prop34":
        return kernel_A_prop34(bg, Mdiff, lam, alpha, k, eps_schedule)
    if route == "offset_limit":
        return kernel_A_offset(bg, Mdiff, k, alpha, eps_schedule)
    raise ConfigurationError(f"unknown kernel route {route!r}")


def kernel_A_directional(disc: Discretization, Mdiff: BoundaryOperator, k, gamma: Direction, alpha: float,
                         reg_schedule: Sequence[float], route: str | None = None, lam=None,
                         eps_schedule=None, v0: PotentialField | None = None) -> ScatterKernel:
    """A_{α,γ} = lim_{ε→0} A_α(k + iεγ), extrapolated over the regularization schedule."""
    reg = greens.check_schedule(reg_schedule)
    k = np.asarray(k, dtype=float)
    E = float(k @ k)
    As = []
    for e in reg:
        bg = Background(disc, E, zeta=k + 1j * e * gamma.gamma, v0=v0)
        As.append(kernel_A(bg, Mdiff, k, alpha, route, lam, eps_schedule).A)
    A, err = greens.richardson(As, reg)
    return ScatterKernel(A, f"directional:{route or 'default'}", k, float(alpha), disc.boundary, reg, lam, err)


# ------------------------------------------------------------- solving

@dataclass
class TraceDiagnostic:
    condition: float
    residual: float


def solve_trace(A: ScatterKernel, psi0_trace: RobinTrace) -> tuple[RobinTrace, TraceDiagnostic]:
    """Solve (I - Â)[ψ]_α = [ψ⁰]_α."""
    if not A.grid.same_as(psi0_trace.grid):
        raise GridMismatchError("kernel and trace on different grids")
    M = np.eye(A.grid.n) - A.operator()
    factors, cond = greens.factor_with_condition(M)
    A.condition = cond
    if not cond < greens.COND_LIMIT:
        raise ExceptionalPointError(
            f"trace equation is numerically singular (cond {cond:.3e}): exceptional momentum", condition=cond)
    t = greens.lu_solve(factors, psi0_trace.values)
    res = float(np.linalg.norm(M @ t - psi0_trace.values) / max(np.linalg.norm(psi0_trace.values), 1e-300))
    return RobinTrace(t, psi0_trace.alpha, psi0_trace.grid, "solved"), TraceDiagnostic(cond, res)


def scattering_datum(Mdiff: BoundaryOperator, left_trace: RobinTrace, right_trace: RobinTrace,
                     baseline: complex = 0.0) -> complex:
    """baseline + (2π)^{-2} Σ w·left·Mdiff(right)."""
    if not (Mdiff.grid.same_as(left_trace.grid) and Mdiff.grid.same_as(right_trace.grid)):
        raise GridMismatchError("traces and operator on different grids")
    val = np.sum(Mdiff.grid.weight * left_trace.values * Mdiff.apply(right_trace.values))
    return complex(baseline + val / TWO_PI ** 2)


@dataclass
class BKernel:
    B: np.ndarray
    targets: np.ndarray
    k: object
    alpha: float
    grid: object

    def operator(self) -> np.ndarray:
        return self.B * self.grid.weight


def kernel_B(bg: Background, Mdiff: BoundaryOperator, alpha: float, k, exterior_targets) -> BKernel:
    """B_α(x, y) = ∫_{∂D}[R⁰(x, ξ)]_{ξ,α}(M_{α,v} - M_{α,v⁰})(ξ, y)dξ for |x| > R."""
    _check_mdiff(Mdiff, alpha)
    x = np.atleast_2d(np.asarray(exterior_targets, dtype=float))
    r = np.hypot(x[:, 0], x[:, 1])
    grid = bg.grid
    R = grid.radius
    if np.any(r <= R * (1 + 1e-12)):
        raise DomainError("B kernel targets must lie outside the closed disk")
    th = np.arctan2(x[:, 1], x[:, 0])
    modes = grid.modes
    am = np.abs(modes)
    b1 = bg.pair.c(am) * np.exp(bg.pair.log_boundary(1, am, R, alpha))
    lu2 = bg.pair.log_u2(am[None, :], r[:, None])
    coef = b1[None, :] * np.exp(lu2)                                    # (targets, modes)
    K = (coef * np.exp(1j * np.outer(th, modes))) @ np.exp(-1j * np.outer(modes, grid.angles))
    K = K + bg.smooth_single_xi(alpha, x)
    B = K @ (grid.weight * Mdiff.kernel)
    return BKernel(B, x, k, float(alpha), grid)


def extend_solution(psi0, B: BKernel, trace: RobinTrace) -> np.ndarray:
    """ψ(x) = ψ⁰(x) + ∫B(x, y)[ψ(y)]_α dy at the kernel's exterior targets."""
    if not B.grid.same_as(trace.grid):
        raise GridMismatchError("kernel and trace on different grids")
    x = B.targets
    base = psi0(x) if callable(psi0) else np.asarray(psi0)
    return base + B.operator() @ trace.values


# ------------------------------------------------------------- pipeline

def plane_trace(kvec, alpha: float, grid) -> RobinTrace:
    kvec = np.asarray(kvec)
    x = grid.points
    e = np.exp(1j * (x @ kvec))
    dn = 1j * (grid.normals @ kvec) * e
    return RobinTrace(math.cos(alpha) * e - math.sin(alpha) * dn, float(alpha), grid)


@dataclass
class DatumResult:
    value: complex
    condition: float
    trace: RobinTrace
    kernel: ScatterKernel
    residual: float


def background_traces(v0: PotentialField | None, pair: MomentumPair, alpha: float, disc: Discretization,
                      reg_schedule=None):
    """([ψ⁰(·, k)]_α, [ψ⁰(·, -l)]_α, baseline h⁰) for the background potential."""
    grid = disc.boundary
    if v0 is None or v0.is_zero:
        return plane_trace(pair.k.vector, alpha, grid), plane_trace(-pair.l.vector, alpha, grid), 0.0
    from . import volume_oracle as vo
    if pair.path == "classical":
        s_k = vo.lippmann_schwinger_classical(v0, pair.k.re, disc)
        s_l = vo.lippmann_schwinger_classical(v0, -pair.l.re, disc)
    elif pair.path == "faddeev":
        s_k = vo.faddeev_solve(v0, pair.k, disc)
        s_l = vo.faddeev_solve(v0, ComplexMomentum(-pair.l.re, -pair.l.im, pair.l.energy), disc)
    else:
        raise ConfigurationError("directional data with v⁰ ≠ 0 are not supported")
    base = vo.amplitude_volume(v0, s_k, pair.l)
    return s_k.robin_trace(alpha), s_l.robin_trace(alpha), base


def boundary_datum(Mdiff: BoundaryOperator, pair: MomentumPair, alpha: float, disc: Discretization,
                   route: str | None = None, lam: float | None = None, eps_schedule=None,
                   reg_schedule=None, kernel: ScatterKernel | None = None,
                   v0: PotentialField | None = None) -> DatumResult:
    """f, h or h_γ from the map difference; baseline from the background potential."""
    E = pair.energy
    if kernel is None:
        if pair.path == "directional":
            reg = reg_schedule if reg_schedule is not None else default_reg_schedule(E)
            kernel = kernel_A_directional(disc, Mdiff, pair.k.re, pair.gamma, alpha, reg, route, lam,
                                          eps_schedule, v0=v0)
        else:
            bg = _background_for(disc, E, pair.k, v0=v0)
            kernel = kernel_A(bg, Mdiff, pair.k, alpha, route, lam, eps_schedule)
    t0, left, base = background_traces(v0, pair, alpha, disc, reg_schedule)
    t, diag = solve_trace(kernel, t0)
    val = scattering_datum(Mdiff, left, t, base)
    return DatumResult(val, diag.condition, t, kernel, diag.residual)


def default_reg_schedule(E: float) -> np.ndarray:
    return math.sqrt(max(E, 1e-12)) * np.array([0.04, 0.02, 0.01])


@dataclass
class ScatteringDataset:
    energy: float
    alpha: float
    entries: list = field(default_factory=list)
    provenance: str = "boundary"
    sampling: object = None

    def add(self, pair: MomentumPair, value: complex | None, condition: float, status: str = "ok",
            oracle: complex | None = None):
        if value is not None and not np.isfinite(value):
            raise ValidationError("dataset values must be finite")
        self.entries.append({"pair": pair, "value": value, "condition": float(condition),
                             "status": status, "oracle": oracle})

    def __len__(self):
        return len(self.entries)

    def usable(self, cond_limit: float = greens.COND_LIMIT) -> list:
        return [e for e in self.entries if e["value"] is not None and e["condition"] < cond_limit]

    def to_array(self) -> np.ndarray:
        """Rows: k_re(2), k_im(2), l_re(2), l_im(2), path code, value re, value im, condition."""
        codes = {"classical": 0.0, "faddeev": 1.0, "directional": 2.0}
        rows = []
        for e in self.entries:
            p = e["pair"]
            v = e["value"] if e["value"] is not None else complex("nan")
            rows.append(np.concatenate([p.k.re, p.k.im, p.l.re, p.l.im,
                                        [codes[p.path], v.real, v.imag, e["condition"]]]))
        return np.array(rows, dtype=float).reshape(-1, 12)

    @classmethod
    def from_array(cls, arr: np.ndarray, energy: float, alpha: float, provenance: str = "boundary",
                   sampling=None):
        names = {0: "classical", 1: "faddeev", 2: "directional"}
        ds = cls(energy, alpha, provenance=provenance, sampling=sampling)
        for row in np.asarray(arr, dtype=float).reshape(-1, 12):
            path = names[int(row[8])]
            k = ComplexMomentum(row[0:2], row[2:4], energy)
            l = ComplexMomentum(row[4:6], row[6:8], energy)
            gamma = Direction.of(k.re) if path == "directional" else None
            val = complex(row[9], row[10])
            ok = np.isfinite(val)
            ds.entries.append({"pair": MomentumPair(k, l, path, gamma), "value": val if ok else None,
                               "condition": float(row[11]), "status": "ok" if ok else "refused",
                               "oracle": None})
        return ds


def impedance_difference(v: PotentialField, v0: PotentialField, E: float, alpha: float,
                         disc: Discretization, probe: bool = True) -> BoundaryOperator:
    """M̂_{α,v} - M̂_{α,v⁰} through the Green chain, refusing ill-posed (E, α)."""
    from .boundary_ops import free_impedance_operator, impedance_from_green, operator_sub, \
        wellposedness_probe

    def one(w):
        if probe:
            wellposedness_probe(w, E, alpha, disc=disc).require()
        if w.is_zero:
            return free_impedance_operator(E, alpha, disc.boundary)
        G, _ = greens.domain_green(disc, w, E, alpha)
        return impedance_from_green(G)

    return operator_sub(one(v), one(v0))


def compute_dataset(Mdiff: BoundaryOperator, pairs: Sequence[MomentumPair], alpha: float,
                    disc: Discretization, route: str | None = None, lam: float | None = None,
                    eps_schedule=None, reg_schedule=None, sampling=None) -> ScatteringDataset:
    """Boundary data for a momentum list (v⁰ = 0).

    The classical kernel depends on E only, so it is assembled once.
    Exceptional momenta are recorded as refused entries, not raised.
    """
    if not pairs:
        raise ConfigurationError("empty momentum list")
    E = pairs[0].energy
    ds = ScatteringDataset(E, float(alpha), sampling=sampling)
    classical = None
    for pr in pairs:
        kern = None
        if pr.path == "classical":
            if classical is None:
                classical = kernel_A(Background(disc, E), Mdiff, None, alpha, route, lam, eps_schedule)
            kern = classical
        try:
            r = boundary_datum(Mdiff, pr, alpha, disc, route, lam, eps_schedule, reg_schedule, kernel=kern)
        except ExceptionalPointError as exc:
            ds.add(pr, None, exc.details.get("condition", float("inf")), "refused")
            continue
        ds.add(pr, r.value, r.condition)
    return ds
