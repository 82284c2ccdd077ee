"""Green functions: free outgoing, Faddeev, directional limits and disk Green
functions under the impedance boundary condition.

Conventions.  Fundamental solutions solve (Δ + E)G = δ.  In two dimensions
every radial fundamental solution used here is expanded in angular modes

    Γ(x - ξ) = Σ_m g_m(r, ρ) e^{im(θ - φ)},   g_m = c_m u1(r_<) u2(r_>),

with (u1, u2) a regular/singular pair of the radial Helmholtz equation.  The
disk Green function adds a regular reflected part fixed by the condition
cos α·G - sin α·∂_ν G = 0 on the circle.  Boundary operators are diagonal in
the angular Fourier basis; volume operators are built by product integration
in radius, mode by mode, so the logarithmic singularity is integrated exactly
up to the resolution of the angular grid.

The Faddeev function G(x, ζ) = -(2π)^{-2} ∫ e^{iξx}/(ξ² + 2ζξ) dξ e^{iζx} is
evaluated as an outgoing Hankel part plus an entire correction,

    G(x, ζ) = -(i/4) H0(√Z |x|) + (i/4π) ∫_{-t_c}^{t_c} exp(i√Z (X sin t + Y cos t)) dt,

Z = ζ·ζ, X = x·u, Y = x·w, w = Im ζ/|Im ζ|, u ⊥ w, where t_c solves
√Z sin t_c = |Re ζ·u| with Im(√Z cos t_c) = |Im ζ|.  The correction is a
finite superposition of plane waves, which makes kernel matrices cheap.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, special

from . import _bessel
from .domain_model import Discretization, PotentialField
from .errors import (AccuracyError, ConfigurationError, DomainError, SingularPointError,
                     ValidationError, WellPosednessError)

COND_LIMIT = 1e12
EULER_GAMMA = 0.5772156649015329


# ------------------------------------------------------------------ helpers

def factor_with_condition(A: np.ndarray):
    """LU factors of A and a 1-norm condition estimate (inf when singular)."""
    with warnings.catch_warnings():
        # singularity is reported through the returned condition number
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(A, check_finite=False)
    anorm = np.linalg.norm(A, 1)
    if A.dtype.kind == "c":
        gecon = linalg.lapack.zgecon
    else:
        gecon = linalg.lapack.dgecon
    if np.any(np.abs(np.diag(lu)) == 0.0):
        return (lu, piv), math.inf
    rcond, info = gecon(lu, anorm, norm="1")
    cond = math.inf if rcond == 0.0 else 1.0 / rcond
    return (lu, piv), cond


def lu_solve(factors, b):
    return linalg.lu_solve(factors, b, check_finite=False)


def _as_points(x) -> np.ndarray:
    return np.atleast_2d(np.asarray(x, dtype=float))


def richardson(values: Sequence, steps: Sequence[float]):
    """Polynomial extrapolation to step 0 through (step_j, value_j) pairs.

    Returns (limit, error estimate).  The error estimate is the change of the
    limit when the coarsest sample is dropped.
    """
    h = np.asarray(steps, dtype=float)
    vals = [np.asarray(v) for v in values]

    def neville(hs, vs):
        p = list(vs)
        n = len(hs)
        for k in range(1, n):
            for i in range(n - k):
                p[i] = (hs[i] * p[i + 1] - hs[i + k] * p[i]) / (hs[i] - hs[i + k])
        return p[0]

    limit = neville(h, vals)
    coarse = neville(h[1:], vals[1:]) if len(h) > 2 else vals[-1]
    err = float(np.max(np.abs(limit - coarse)))
    return limit, err


def check_schedule(eps_schedule: Sequence[float], minimum: int = 3) -> np.ndarray:
    eps = np.asarray(eps_schedule, dtype=float)
    if eps.ndim != 1 or eps.size < minimum:
        raise ConfigurationError(f"ε-schedule needs at least {minimum} entries")
    if np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ConfigurationError("ε-schedule must be strictly decreasing and positive")
    return eps


# ----------------------------------------------------------- radial pairs

@dataclass(frozen=True)
class RadialPair:
    """Regular/singular solutions of u'' + u'/r + (κ² - m²/r²)u = 0.

    family: "bessel" (J, Y), "hankel" (J, H1), "modified" (I, K) or
    "laplace" (r^m, r^-m and 1, ln r).  c(m) normalizes c·u1(r_<)u2(r_>) so
    that the mode sum is a fundamental solution of Δ + E.
    """

    family: str
    kappa: complex = 0.0

    def c(self, m) -> np.ndarray:
        m = np.abs(np.asarray(m))
        if self.family == "bessel":
            return np.full(m.shape, 0.25 + 0j)
        if self.family == "hankel":
            return np.full(m.shape, -0.25j)
        if self.family == "modified":
            return np.full(m.shape, -1.0 / (2.0 * np.pi) + 0j)
        safe = np.where(m == 0, 1, m)
        return np.where(m == 0, 1.0 / (2.0 * np.pi), -1.0 / (4.0 * np.pi * safe)) + 0j

    def log_u1(self, m, r) -> np.ndarray:
        m = np.abs(np.asarray(m))
        r = np.asarray(r, dtype=float)
        if self.family in ("bessel", "hankel"):
            return _bessel.log_jv(m, self.kappa * r)
        if self.family == "modified":
            return _bessel.log_iv(m, self.kappa.real * r)
        m, r = np.broadcast_arrays(m, r)
        return (m * np.log(r)).astype(np.complex128)

    def log_u2(self, m, r) -> np.ndarray:
        m = np.abs(np.asarray(m))
        r = np.asarray(r, dtype=float)
        if self.family == "bessel":
            return _bessel.log_yv(m, self.kappa * r)
        if self.family == "hankel":
            return _bessel.log_h1(m, self.kappa * r)
        if self.family == "modified":
            return _bessel.log_kv(m, self.kappa.real * r)
        m, r = np.broadcast_arrays(m, r)
        with np.errstate(divide="ignore"):
            return np.where(m == 0, np.log(np.log(r) + 0j), -m * np.log(r) + 0j)

    def dlog_u1(self, m, r) -> np.ndarray:
        """u1'(r)/u1(r)."""
        m = np.abs(np.asarray(m))
        r = np.asarray(r, dtype=float)
        k = self.kappa
        if self.family in ("bessel", "hankel"):
            return m / r - k * np.exp(_bessel.log_jv(m + 1, k * r) - _bessel.log_jv(m, k * r))
        if self.family == "modified":
            kr = k.real
            return m / r + kr * np.exp(_bessel.log_iv(m + 1, kr * r) - _bessel.log_iv(m, kr * r))
        return (m / r) + 0j

    def dlog_u2(self, m, r) -> np.ndarray:
        m = np.abs(np.asarray(m))
        r = np.asarray(r, dtype=float)
        k = self.kappa
        if self.family == "bessel":
            return m / r - k * np.exp(_bessel.log_yv(m + 1, k * r) - _bessel.log_yv(m, k * r))
        if self.family == "hankel":
            return m / r - k * np.exp(_bessel.log_h1(m + 1, k * r) - _bessel.log_h1(m, k * r))
        if self.family == "modified":
            kr = k.real
            return m / r - kr * np.exp(_bessel.log_kv(m + 1, kr * r) - _bessel.log_kv(m, kr * r))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(m == 0, 1.0 / (r * np.log(r) + 0j), -m / r + 0j)

    def log_boundary(self, which: int, m, R: float, alpha: float) -> np.ndarray:
        """log(cos α·u(R) - sin α·u'(R)) for u = u1 (which=1) or u2 (which=2)."""
        m = np.abs(np.asarray(m))
        ca, sa = math.cos(alpha), math.sin(alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            if which == 1:
                return self.log_u1(m, R) + np.log(ca - sa * self.dlog_u1(m, R) + 0j)
            out = self.log_u2(m, R) + np.log(ca - sa * self.dlog_u2(m, R) + 0j)
            if self.family == "laplace":
                # u2 = ln r may vanish at R; use the boundary combination directly
                direct = np.log(ca * math.log(R) - sa / R + 0j)
                out = np.where(m == 0, direct, out)
        return out

    # closed forms of Σ_m g_m e^{imΔ}
    def fundamental(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        k = self.kappa
        if self.family == "bessel":
            return 0.25 * special.yv(0, k.real * r) + 0j
        if self.family == "hankel":
            return -0.25j * special.hankel1(0, k * r if k.imag else k.real * r)
        if self.family == "modified":
            return -special.k0(k.real * r) / (2.0 * np.pi) + 0j
        return np.log(r) / (2.0 * np.pi) + 0j

    def fundamental_dr(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        k = self.kappa
        if self.family == "bessel":
            return -0.25 * k.real * special.yv(1, k.real * r) + 0j
        if self.family == "hankel":
            return 0.25j * k * special.hankel1(1, k * r if k.imag else k.real * r)
        if self.family == "modified":
            return k.real * special.k1(k.real * r) / (2.0 * np.pi) + 0j
        return 1.0 / (2.0 * np.pi * r) + 0j


def radial_pair(E: float, outgoing: bool = False) -> RadialPair:
    """Pair for real energy.  outgoing selects the Hankel (radiating) pair when E > 0."""
    if E > 0:
        return RadialPair("hankel" if outgoing else "bessel", complex(math.sqrt(E)))
    if E == 0:
        return RadialPair("laplace", 0.0)
    return RadialPair("modified", complex(math.sqrt(-E)))


def complex_radial_pair(Z: complex) -> RadialPair:
    """Outgoing pair for a complex spectral parameter (branch Im √Z >= 0)."""
    Z = complex(Z)
    if Z.imag == 0.0:
        return radial_pair(Z.real, outgoing=True)
    k = np.sqrt(Z)
    if k.imag < 0:
        k = -k
    return RadialPair("hankel", complex(k))


# ------------------------------------------------------------ free kernels

def free_green_plus(x, kappa: float, d: int | None = None) -> complex:
    """Outgoing fundamental solution of Δ + κ²: -(i/4)H0(κ|x|) in 2-D, -e^{iκr}/(4πr) in 3-D."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1] if d is None else d
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise SingularPointError("free Green function is singular at x = 0")
    if d == 2:
        if not kappa > 0:
            raise DomainError("2-D outgoing Green function needs κ > 0")
        return complex(-0.25j * special.hankel1(0, kappa * r))
    if d == 3:
        if kappa < 0:
            raise DomainError("κ must be non-negative")
        return complex(-np.exp(1j * kappa * r) / (4.0 * np.pi * r))
    raise ConfigurationError(f"dimension {d} not supported")


# ------------------------------------------------------------------ Faddeev

@dataclass(frozen=True)
class ComplexMomentum:
    re: np.ndarray
    im: np.ndarray
    energy: float

    def __post_init__(self):
        re = np.asarray(self.re, dtype=float)
        im = np.asarray(self.im, dtype=float)
        object.__setattr__(self, "re", re)
        object.__setattr__(self, "im", im)
        kk = self.square
        scale = max(1.0, float(re @ re + im @ im))
        if abs(kk - self.energy) > 1e-12 * scale:
            raise ValidationError(f"k·k = {kk} differs from E = {self.energy}")

    @classmethod
    def real(cls, k) -> "ComplexMomentum":
        k = np.asarray(k, dtype=float)
        return cls(k, np.zeros_like(k), float(k @ k))

    @property
    def square(self) -> complex:
        return complex(self.re @ self.re - self.im @ self.im, 2.0 * (self.re @ self.im))

    @property
    def vector(self) -> np.ndarray:
        return self.re + 1j * self.im

    @property
    def is_real(self) -> bool:
        return not np.any(self.im)

    def __neg__(self) -> "ComplexMomentum":
        return ComplexMomentum(-self.re, -self.im, self.energy)

    def plane_wave(self, x) -> np.ndarray:
        return np.exp(1j * (_as_points(x) @ self.vector))


@dataclass(frozen=True)
class Direction:
    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float)
        if abs(np.linalg.norm(g) - 1.0) > 1e-14:
            raise ValidationError("direction must be a unit vector")
        object.__setattr__(self, "gamma", g)

    @classmethod
    def of(cls, v) -> "Direction":
        v = np.asarray(v, dtype=float)
        return cls(v / np.linalg.norm(v))


class FaddeevKernel:
    """G(x, ζ) for a complex vector ζ (Im ζ ≠ 0) in two dimensions.

    Split into the outgoing radial part `pair` (Hankel at √(ζ·ζ)) and an
    entire correction S(x) = c0 + Σ_q c_q exp(iω_q·x).  The plane-wave
    quadrature is sized for |x| <= x_max and checked against a refined rule.
    """

    def __init__(self, zeta_re, zeta_im, x_max: float = 2.0, tol: float = 1e-13):
        a = np.asarray(zeta_re, dtype=float)
        b = np.asarray(zeta_im, dtype=float)
        bn = float(np.linalg.norm(b))
        if bn == 0.0:
            raise DomainError("Faddeev Green function needs Im ζ ≠ 0; use the directional limit")
        self.zeta = a + 1j * b
        self.Z = complex(a @ a - b @ b, 2.0 * (a @ b))
        self.w = b / bn
        self.u = np.array([-self.w[1], self.w[0]])
        self.alpha_c = abs(float(a @ self.u))
        self.b_norm = bn
        self.x_max = float(x_max)
        self.pair = complex_radial_pair(self.Z)
        self.c0, self.omega, self.coef = self._build(tol)

    def _rule(self, q: int):
        t, wt = np.polynomial.legendre.leggauss(q)
        if abs(self.Z) < 1e-14:
            ac = self.alpha_c
            al = 0.5 * ac * (t + 1.0)
            wa = 0.5 * ac * wt
            omega = np.concatenate([np.outer(al, self.u) + 1j * np.outer(al, self.w),
                                    np.outer(-al, self.u) + 1j * np.outer(al, self.w)])
            coef = np.concatenate([wa, wa]) / (4.0 * np.pi * np.concatenate([al, al])) + 0j
            c0 = (math.log(ac) + EULER_GAMMA) / (2.0 * np.pi) - np.sum(wa / al) / (2.0 * np.pi)
            return complex(c0), omega, coef
        k = np.sqrt(self.Z + 0j)
        if k.imag < 0:
            k = -k
        tc = np.arcsin(self.alpha_c / k + 0j)
        if (k * np.cos(tc)).imag < 0:
            tc = np.pi - tc
        ts = tc * t
        omega = k * (np.outer(np.sin(ts), self.u) + np.outer(np.cos(ts), self.w))
        coef = (1j / (4.0 * np.pi)) * tc * wt
        return 0j, omega, coef.astype(np.complex128)

    def _nodes_needed(self) -> int:
        if abs(self.Z) < 1e-14:
            scale = self.alpha_c * self.x_max
        else:
            k = np.sqrt(self.Z + 0j)
            tc = np.arcsin(self.alpha_c / k + 0j)
            scale = abs(k) * self.x_max * (abs(tc) + 1.0)
        return int(24 + 2 * math.ceil(scale))

    def _build(self, tol):
        if self.alpha_c == 0.0:
            return 0j, np.zeros((0, 2), complex), np.zeros(0, complex)
        q = self._nodes_needed()
        probe = self.x_max * np.array([[1.0, 0.0], [0.0, 1.0], [-0.7071, -0.7071],
                                       [0.3, -0.95], [-1.0, 0.0], [0.0, -1.0]])
        prev = None
        for _ in range(6):
            rule = self._rule(q)
            val = self._smooth_with(rule, probe)
            if prev is not None:
                err = np.max(np.abs(val - prev)) / max(1.0, np.max(np.abs(val)))
                if err < tol:
                    return rule
            prev = val
            q = int(q * 1.5) + 8
        raise AccuracyError("Faddeev correction quadrature did not converge", achieved=float(err))

    @staticmethod
    def _smooth_with(rule, x):
        c0, omega, coef = rule
        x = _as_points(x)
        return c0 + np.exp(1j * (x @ omega.T)) @ coef

    # evaluation ---------------------------------------------------------
    def smooth(self, x) -> np.ndarray:
        return self._smooth_with((self.c0, self.omega, self.coef), x)

    def smooth_grad(self, x) -> np.ndarray:
        x = _as_points(x)
        e = np.exp(1j * (x @ self.omega.T)) * self.coef
        return 1j * (e @ self.omega)

    def radial(self, r) -> np.ndarray:
        return self.pair.fundamental(r)

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x)
        r = np.hypot(x[:, 0], x[:, 1])
        if np.any(r == 0.0):
            raise SingularPointError("Faddeev Green function is singular at x = 0")
        return self.radial(r) + self.smooth(x)

    def grad(self, x) -> np.ndarray:
        x = _as_points(x)
        r = np.hypot(x[:, 0], x[:, 1])
        return (self.pair.fundamental_dr(r) / r)[:, None] * x + self.smooth_grad(x)

    def plane_wave_factors(self, x) -> tuple[np.ndarray, np.ndarray]:
        """(E, c) with S(x_i - y_j) = c0 + Σ_q E_iq c_q conj-free E'_jq; E = exp(iω·x)."""
        return np.exp(1j * (_as_points(x) @ self.omega.T)), self.coef

    def smooth_matrix(self, x, y) -> np.ndarray:
        """S(x_i - y_j) for point sets x, y (separable evaluation)."""
        ex = np.exp(1j * (_as_points(x) @ self.omega.T))
        ey = np.exp(-1j * (_as_points(y) @ self.omega.T))
        return self.c0 + (ex * self.coef) @ ey.T


def faddeev_green(x, k: ComplexMomentum) -> complex:
    """Faddeev Green function G(x, k) in two dimensions."""
    if len(k.re) != 2:
        raise ConfigurationError("Faddeev Green function implemented for d = 2")
    if not np.any(k.im):
        raise DomainError("Faddeev Green function needs Im k ≠ 0; use faddeev_green_directional")
    x = np.asarray(x, dtype=float)
    ker = FaddeevKernel(k.re, k.im, x_max=max(1.0, float(np.linalg.norm(x))))
    return complex(ker(x)[0])


def faddeev_green_e0_closed(x, s_abs: float, w, u=None) -> float:
    """E = 0, ζ·ζ = 0 closed form: -(1/2π) Re E1(|b|(Y - iX))."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    u = np.array([-w[1], w[0]]) if u is None else np.asarray(u, dtype=float)
    z = s_abs * (x @ w - 1j * (x @ u))
    return float(-special.exp1(z).real / (2.0 * np.pi))


@dataclass
class ConvergenceRecord:
    eps: np.ndarray
    values: np.ndarray
    limit: complex | np.ndarray
    error_estimate: float
    monotone: bool
    distances: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _directional_record(eps, values, limit, err):
    vals = np.asarray(values)
    if vals.ndim == 1:
        dist = np.abs(vals - limit)
    else:
        dist = np.array([np.max(np.abs(v - limit)) for v in vals])
    monotone = bool(np.all(np.diff(dist) <= 1e-15 * max(1.0, float(np.max(np.abs(vals))))))
    return ConvergenceRecord(np.asarray(eps), vals, limit, err, monotone, dist)


def faddeev_green_directional(x, k, gamma: Direction, eps_schedule: Sequence[float]):
    """Limit G(x, k + i0γ) by Richardson extrapolation over the ε-schedule.

    Returns (limit, ConvergenceRecord).  Raises AccuracyError when the
    ε-sequence shows no convergence toward the extrapolated value.
    """
    eps = check_schedule(eps_schedule)
    k = np.asarray(k, dtype=float)
    if not np.any(k):
        raise DomainError("directional limit needs k ≠ 0")
    x = np.asarray(x, dtype=float)
    vals = []
    for e in eps:
        ker = FaddeevKernel(k, e * gamma.gamma, x_max=max(1.0, float(np.linalg.norm(x))))
        vals.append(complex(ker(x)[0]))
    vals = np.array(vals)
    limit, err = richardson(vals, eps)
    rec = _directional_record(eps, vals, complex(limit), err)
    if not rec.monotone and rec.distances[-1] > 1e-8 * max(1.0, abs(limit)):
        raise AccuracyError("directional ε-sequence shows no convergence trend",
                            achieved=float(rec.distances[-1]))
    return complex(limit), rec


# ------------------------------------------------------- disk Robin modes

def free_dtn_symbol(E: float, m, R: float) -> np.ndarray:
    """u1'(R)/u1(R): eigenvalues of the free-disk Dirichlet-to-Neumann map."""
    return radial_pair(E).dlog_u1(np.asarray(m), R)


def impedance_denominator_measure(alpha: float, ell) -> np.ndarray:
    """|cos α - sin α ℓ| / sqrt(1 + |ℓ|²): scale-free distance to an eigenvalue."""
    ell = np.asarray(ell)
    with np.errstate(invalid="ignore", over="ignore"):
        big = ~np.isfinite(ell)
        num = np.abs(math.cos(alpha) - math.sin(alpha) * np.where(big, 0, ell))
        den = np.sqrt(1.0 + np.abs(np.where(big, 0, ell)) ** 2)
        meas = np.where(big, abs(math.sin(alpha)), num / den)
    return meas


@dataclass(frozen=True)
class DiskModes:
    """Mode data of the free disk Green function G_{α,0} at real E."""

    E: float
    alpha: float
    R: float
    pair: RadialPair

    def symbol(self, m) -> np.ndarray:
        """Eigenvalues σ_m of the boundary operator u ↦ ∫ G(·,ξ)u(ξ)dξ: sin α/(cos α - sin α ℓ_m)."""
        ell = self.pair.dlog_u1(np.asarray(m), self.R)
        sa, ca = math.sin(self.alpha), math.cos(self.alpha)
        with np.errstate(divide="ignore", invalid="ignore"):
            sym = sa / (ca - sa * ell)
        return np.where(np.isfinite(ell), sym, 0.0 * ell)

    def conditioning(self, m) -> np.ndarray:
        return 1.0 / impedance_denominator_measure(self.alpha, self.pair.dlog_u1(np.asarray(m), self.R))

    def log_reflection(self, m) -> np.ndarray:
        """log ρ_m, where the reflected part is c_m ρ_m u1(r) u1(ρ)."""
        m = np.asarray(m)
        lr = (np.log(-1.0 + 0j) + self.pair.log_boundary(2, m, self.R, self.alpha)
              - self.pair.log_boundary(1, m, self.R, self.alpha))
        # a vanishing reflection (e.g. ln R = 0 under Dirichlet) gives log 0
        return np.where(np.isfinite(lr), lr, -1e4 + 0j)


def disk_modes(E: float, alpha: float, R: float = 1.0, n_modes: int = 64) -> DiskModes:
    modes = DiskModes(float(E), float(alpha), float(R), radial_pair(E))
    cond = modes.conditioning(np.arange(n_modes + 1))
    worst = int(np.argmax(cond))
    if not cond[worst] < COND_LIMIT:
        raise WellPosednessError(
            f"E={E} is an α-impedance eigenvalue of the free disk (α={alpha}, mode {worst})",
            condition=float(cond[worst]), mode=worst)
    return modes


def disk_robin_green_series(x, y, E: float, alpha: float, n_modes: int = 64, R: float = 1.0):
    """G_{α,0}(x, y) for the disk and the magnitude of the first omitted term."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.allclose(x, y, rtol=0, atol=1e-15):
        raise SingularPointError("disk Green function is singular at x = y")
    for p in (x, y):
        if np.hypot(*p) > R * (1 + 1e-14):
            raise DomainError("points must lie in the closed disk")
    modes = disk_modes(E, alpha, R, n_modes)
    free = modes.pair.fundamental(np.linalg.norm(x - y))
    r, rho = np.hypot(*x), np.hypot(*y)
    delta = math.atan2(x[1], x[0]) - math.atan2(y[1], y[0])
    m = np.arange(n_modes + 2)
    if r == 0.0 or rho == 0.0:
        # only the m = 0 reflected term survives at the centre
        m0 = np.array([0])
        lu = modes.pair.log_u1(m0, r) + modes.pair.log_u1(m0, rho)
        term0 = modes.pair.c(m0) * np.exp(modes.log_reflection(m0) + lu)
        val = free + term0[0]
        return complex(val).real, 0.0
    terms = modes.pair.c(m) * np.exp(modes.log_reflection(m) + modes.pair.log_u1(m, r)
                                     + modes.pair.log_u1(m, rho))
    weights = np.where(m == 0, 1.0, 2.0 * np.cos(m * delta))
    series = np.sum((terms * weights)[: n_modes + 1])
    tail = float(2.0 * abs(terms[n_modes + 1]))
    return complex(free + series).real, tail


def disk_robin_green_free(x, y, E: float, alpha: float, n_modes: int = 64, radius: float = 1.0) -> float:
    """Green function of Δ + E on the disk with cos α·G - sin α·∂_ν G = 0 (real data)."""
    return disk_robin_green_series(x, y, E, alpha, n_modes, radius)[0]


# --------------------------------------------------- product integration

def _barycentric_weights(nodes: np.ndarray) -> np.ndarray:
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    return 1.0 / np.prod(diff, axis=1)


def _lagrange_matrix(nodes: np.ndarray, bw: np.ndarray, x: np.ndarray) -> np.ndarray:
    d = x[:, None] - nodes[None, :]
    exact = d == 0.0
    d = np.where(exact, 1.0, d)
    t = bw[None, :] / d
    L = t / np.sum(t, axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    if np.any(rows):
        L[rows] = exact[rows].astype(float)
    return L


def radial_product_weights(pair: RadialPair, log_refl: np.ndarray | None,
                           targets: np.ndarray, panels: Sequence[tuple[float, float]],
                           n_r: int, n_modes: int) -> np.ndarray:
    """P[m, i, j] = ∫ g_m(r_i, ρ) ℓ_j(ρ) ρ dρ for m = 0..n_modes.

    g_m = c_m (u1(r_<) u2(r_>) + ρ_m u1(r) u1(ρ)); ℓ_j are the Lagrange
    polynomials of the Gauss-Legendre nodes of each panel.  The integral is
    split at the target radius and graded geometrically toward the origin
    side, so both the kink at ρ = r and the singular growth of u2 are
    integrated to high accuracy.
    """
    m = np.arange(n_modes + 1)
    cm = pair.c(m)
    xg, _ = np.polynomial.legendre.leggauss(n_r)
    q = n_r + 12 + n_modes // 2
    tq, wq = np.polynomial.legendre.leggauss(q)
    n_src = len(panels) * n_r
    P = np.zeros((n_modes + 1, len(targets), n_src), dtype=np.complex128)
    panel_nodes = []
    for a, b in panels:
        nodes = 0.5 * (b - a) * xg + 0.5 * (b + a)
        panel_nodes.append((nodes, _barycentric_weights(nodes)))
    for it, r in enumerate(targets):
        lu1_r = pair.log_u1(m, r)
        lu2_r = pair.log_u2(m, r)
        for ip, (a, b) in enumerate(panels):
            pieces_lo, pieces_hi = [], []
            if b <= r:
                pieces_lo.append((a, b))
            elif a >= r:
                pieces_hi.extend(_graded(a, b, a))
            else:
                pieces_lo.append((a, r))
                pieces_hi.extend(_graded(r, b, r))
            pts, wts, side = [], [], []
            for (lo, hi), flag in [(p, 0) for p in pieces_lo] + [(p, 1) for p in pieces_hi]:
                pts.append(0.5 * (hi - lo) * tq + 0.5 * (hi + lo))
                wts.append(0.5 * (hi - lo) * wq)
                side.append(np.full(q, flag))
            rho = np.concatenate(pts)
            w = np.concatenate(wts) * rho
            hi_side = np.concatenate(side).astype(bool)
            lu1 = pair.log_u1(m[:, None], rho[None, :])
            logg = np.empty_like(lu1)
            logg[:, ~hi_side] = lu1[:, ~hi_side] + lu2_r[:, None]
            if np.any(hi_side):
                logg[:, hi_side] = lu1_r[:, None] + pair.log_u2(m[:, None], rho[None, hi_side])
            g = np.exp(logg)
            if log_refl is not None:
                g = g + np.exp(log_refl[:, None] + lu1_r[:, None] + lu1)
            g *= cm[:, None]
            nodes, bw = panel_nodes[ip]
            L = _lagrange_matrix(nodes, bw, rho)
            P[:, it, ip * n_r:(ip + 1) * n_r] = (g * w[None, :]) @ L
    return P


def _graded(lo: float, hi: float, start: float) -> list[tuple[float, float]]:
    """Intervals [lo, 2lo], [2lo, 4lo], ... covering [lo, hi] (lo > 0)."""
    if lo <= 0.0:
        return [(lo, hi)]
    out = []
    a = lo
    while a < hi:
        b = min(hi, 2.0 * a)
        if hi - b < 0.5 * (b - a):
            b = hi
        out.append((a, b))
        a = b
    return out


def assemble_modal_operator(P: np.ndarray, n_theta: int) -> np.ndarray:
    """Dense operator on a polar tensor grid from radial product weights.

    K[(i,a),(j,b)] = (2π/n_θ) Σ_m P^{|m|}_{ij} e^{im(θ_a - θ_b)}, |m| <= n_θ/2,
    Nyquist mode counted once.
    """
    M = n_theta // 2
    if P.shape[0] < M + 1:
        raise ConfigurationError("not enough modes for the angular grid")
    order = np.concatenate([np.arange(M + 1), np.arange(M - 1, 0, -1)])
    C = 2.0 * np.pi * np.fft.ifft(P[order], axis=0)  # (n_theta, n_t, n_s), index = angle offset
    idx = (np.arange(n_theta)[:, None] - np.arange(n_theta)[None, :]) % n_theta
    n_t, n_s = P.shape[1], P.shape[2]
    K = C[idx]  # (a, b, t, s)
    return np.ascontiguousarray(K.transpose(2, 0, 3, 1)).reshape(n_t * n_theta, n_s * n_theta)


@dataclass(frozen=True)
class ModalKernel:
    """A rotation-invariant kernel given by its radial pair and optional reflection."""

    pair: RadialPair
    log_reflection: Callable | None = None
    tag: str = ""

    def key(self):
        return (self.pair.family, complex(self.pair.kappa), self.tag)


def volume_operator(disc: Discretization, kernel: ModalKernel, targets: str = "active",
                    real: bool = False) -> np.ndarray:
    """Integration operator f ↦ ∫_{active} K(x_i, ξ) f(ξ) dξ on the active nodes.

    targets: "active" (rows = active nodes) or "all" (rows = every volume node).
    Cached on the discretization object.
    """
    cache = disc.__dict__.setdefault("_operator_cache", {})
    key = kernel.key() + (targets, real)
    if key in cache:
        return cache[key]
    vol = disc.volume
    M = vol.n_theta // 2
    t_radii = disc.active_radii if targets == "active" else vol.radii
    refl = kernel.log_reflection(np.arange(M + 1)) if kernel.log_reflection is not None else None
    P = radial_product_weights(kernel.pair, refl, t_radii, disc.active_panels, vol.n_r, M)
    K = assemble_modal_operator(P, vol.n_theta)
    if real:
        K = np.ascontiguousarray(K.real)
    cache[key] = K
    return K


def disk_modal_kernel(modes: DiskModes) -> ModalKernel:
    return ModalKernel(modes.pair, modes.log_reflection, tag=f"disk:{modes.alpha!r}:{modes.R!r}")


def free_modal_kernel(E: float) -> ModalKernel:
    return ModalKernel(radial_pair(E, outgoing=True), None, tag="free")


# ------------------------------------------------------- boundary symbols

def circulant_from_symbol(symbol: np.ndarray, grid) -> np.ndarray:
    """Kernel K with Σ_b K_ab w u_b = σ_m e^{imθ_a} for u = e^{imθ}; symbol in FFT order."""
    n = grid.n
    row = n * np.fft.ifft(symbol) / (2.0 * np.pi * grid.radius)
    idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
    return row[idx]


def symbol_of(kernel: np.ndarray, grid, delta: complex = 0.0) -> np.ndarray:
    """Fourier multipliers (FFT order) of a rotation-invariant operator δI + K·w."""
    col = kernel[:, 0] * grid.weight
    return np.fft.fft(col) + delta


# --------------------------------------------------- Green kernel matrices

@dataclass(eq=False)
class GreenKernelMatrix:
    """Restrictions of a Green function to boundary and active volume nodes.

    bb: boundary × boundary (band-limited operator kernel)
    bv: boundary × active volume (pointwise values, smooth)
    vv: active × active integration operator (includes weights), optional
    vv_values: active × active pointwise values (diagonal undefined), optional
    """

    kind: str
    alpha: float | None
    energy: float
    potential_id: str
    disc: Discretization
    bb: np.ndarray
    bv: np.ndarray
    vv: np.ndarray | None = None
    vv_values: np.ndarray | None = None
    potential: PotentialField | None = None
    modes: DiskModes | None = None
    diagonal_treatment: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.bb

    @property
    def boundary(self):
        return self.disc.boundary

    def symmetry_defect(self) -> float:
        K = self.bb
        off = ~np.eye(K.shape[0], dtype=bool)
        scale = float(np.max(np.abs(K)))
        return float(np.max(np.abs(K - K.T)[off]) / scale) if scale > 0 else 0.0

    def meta(self) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "energy": self.energy,
                "potential": self.potential_id, "diagonal_treatment": self.diagonal_treatment}


@dataclass
class GreenCorrection:
    W: np.ndarray
    W0: np.ndarray | None
    K_hat: np.ndarray
    n_tail: int
    residual: float
    condition: float


_BOUNDARY_TREATMENT = {
    "boundary": "spectral circulant: kernel rebuilt from its angular Fourier multipliers "
                "(trigonometric product quadrature, exact for band-limited densities)",
}
_VOLUME_TREATMENT = {
    "volume": "Fourier product integration: per angular mode, radial integral against the "
              "Lagrange basis of each Gauss-Legendre panel, split at the target radius and "
              "geometrically graded",
}


def _bv_free(disc: Discretization, modes: DiskModes, radii_mask=None) -> np.ndarray:
    """G_{α,0}(x_bdry, ξ) for active volume nodes ξ (pointwise, full mode sum)."""
    R = disc.domain.radius
    radii = disc.active_radii
    rmax = float(np.max(radii)) if radii.size else 0.0
    M = int(min(4000, max(disc.boundary.n, math.ceil(40.0 / max(1e-3, -math.log(rmax / R))))))
    m = np.arange(-M, M + 1)
    am = np.abs(m)
    sym = modes.symbol(np.arange(M + 1))[am] / (2.0 * np.pi * R)
    ratio = np.exp(modes.pair.log_u1(am[None, :], radii[:, None]) - modes.pair.log_u1(am, R)[None, :])
    coef = (sym[None, :] * ratio)  # (n_radii, modes)
    eb = np.exp(1j * np.outer(disc.boundary.angles, m))
    ev = np.exp(-1j * np.outer(disc.volume.angles, m))
    out = np.einsum("am,im,bm->aib", eb, coef, ev, optimize=True)
    return out.reshape(disc.boundary.n, -1).real


def _vv_values_free(disc: Discretization, modes: DiskModes) -> np.ndarray:
    x = disc.active_nodes
    n = x.shape[0]
    d = np.hypot(x[:, None, 0] - x[None, :, 0], x[:, None, 1] - x[None, :, 1])
    np.fill_diagonal(d, 1.0)
    vals = modes.pair.fundamental(d).real
    r = np.hypot(x[:, 0], x[:, 1])
    th = np.arctan2(x[:, 1], x[:, 0])
    R = disc.domain.radius
    rmax = float(r.max())
    M = int(min(4000, math.ceil(40.0 / max(1e-3, -2.0 * math.log(rmax / R)))))
    mm = np.arange(M + 1)
    lu = modes.pair.log_u1(mm[:, None], r[None, :])  # (M+1, n)
    lr = modes.log_reflection(mm)
    cm = modes.pair.c(mm)
    # Σ_m c_m ρ_m u1(r_i) u1(r_j) e^{im(θ_i-θ_j)} with the reflection split symmetrically
    half = 0.5 * lr
    A = np.exp(lu + half[:, None]) * np.sqrt(cm)[:, None]
    wts = np.where(mm == 0, 1.0, 2.0)
    refl = np.zeros((n, n))
    for k in range(M + 1):
        a = A[k]
        outer = np.outer(a, a)
        if k == 0:
            refl += outer.real
        else:
            refl += wts[k] * (outer * np.cos(k * (th[:, None] - th[None, :]))).real
    vals = vals + refl
    np.fill_diagonal(vals, np.nan)
    return vals


def free_disk_green(disc: Discretization, E: float, alpha: float, with_volume: bool = True,
                    with_values: bool = False) -> GreenKernelMatrix:
    """G_{α,0} restricted to the discretization (analytic mode data)."""
    R = disc.domain.radius
    n = disc.boundary.n
    modes = disk_modes(E, alpha, R, n_modes=max(n, disc.volume.n_theta))
    bmodes = np.abs(disc.boundary.modes)
    sym = modes.symbol(bmodes).real
    bb = circulant_from_symbol(sym, disc.boundary).real
    kind = "dirichlet_domain" if math.sin(alpha) == 0.0 else "robin_domain"
    bv = _bv_free(disc, modes) if disc.n_active else np.zeros((n, 0))
    vv = None
    if with_volume and disc.n_active:
        vv = volume_operator(disc, disk_modal_kernel(modes), real=True)
    vals = _vv_values_free(disc, modes) if with_values else None
    treatment = dict(_BOUNDARY_TREATMENT)
    treatment.update(_VOLUME_TREATMENT)
    return GreenKernelMatrix(kind, float(alpha), float(E), "zero", disc, bb, bv, vv, vals, None,
                             modes, treatment)


def green_change_potential(G1: GreenKernelMatrix, v2: PotentialField,
                           with_volume: bool = False, n_tail: int = 0):
    """Move G_{α,v1} to G_{α,v2} by the volume Fredholm equation (I - K̂₂)G₂ = G₁.

    K̂₂u = ∫ (v2 - v1) G₁(·, ξ) u(ξ) dξ.  Returns (G₂, GreenCorrection).
    """
    disc = G1.disc
    if G1.vv is None:
        raise ConfigurationError("G1 lacks its volume operator; build it with with_volume=True")
    dv = disc.restrict(v2)
    if G1.potential is not None:
        dv = dv - disc.restrict(G1.potential)
    if not np.any(dv):
        G2 = GreenKernelMatrix(G1.kind, G1.alpha, G1.energy, v2.ident, disc, G1.bb, G1.bv,
                               G1.vv, G1.vv_values, v2, None, dict(G1.diagonal_treatment))
        return G2, GreenCorrection(np.zeros_like(G1.bb), None, np.zeros((0, 0)), n_tail, 0.0, 1.0)
    K_hat = G1.vv * dv[None, :]
    A = np.eye(K_hat.shape[0]) - K_hat
    factors, cond = factor_with_condition(A)
    if not cond < COND_LIMIT:
        raise WellPosednessError(
            f"volume Fredholm matrix is singular (cond {cond:.3e}): E={G1.energy} is numerically "
            f"an impedance eigenvalue for the new potential", condition=cond)
    rhs = G1.bv.T
    U = lu_solve(factors, rhs)
    residual = float(np.linalg.norm(A @ U - rhs) / np.linalg.norm(rhs))
    wdv = disc.active_weights * dv
    W_bb = (G1.bv * wdv[None, :]) @ U
    bb2 = G1.bb + W_bb
    bv2 = U.T
    vv2 = lu_solve(factors, G1.vv) if with_volume else None
    vals2 = None
    if G1.vv_values is not None and vv2 is not None:
        vals2 = G1.vv_values + (vv2 - G1.vv) / disc.active_weights[None, :]
    if n_tail:
        # δ_n G = G₂ - Σ_{j<n} K̂^j G₁ on the boundary/volume block
        term = rhs.copy()
        acc = np.zeros_like(rhs)
        for _ in range(n_tail):
            acc += term
            term = K_hat @ term
    treatment = dict(G1.diagonal_treatment)
    G2 = GreenKernelMatrix(G1.kind, G1.alpha, G1.energy, v2.ident, disc, bb2, bv2, vv2, vals2,
                           v2, None, treatment)
    return G2, GreenCorrection(W_bb, None, K_hat, n_tail, residual, cond)


def green_change_alpha(G1: GreenKernelMatrix, alpha2: float, with_volume: bool = True):
    """Move G_{α1,v} to G_{α2,v} by the boundary Fredholm equation W = W₀ + K̂₁W.

    Requires sin α1 ≠ 0 and sin α2 ≠ 0.  Returns (G₂, GreenCorrection).
    """
    a1 = G1.alpha
    s1, s2 = math.sin(a1), math.sin(alpha2)
    if abs(s1) < 1e-14 or abs(s2) < 1e-14:
        raise ConfigurationError("α-change needs sin α ≠ 0 on both sides; use the DtN route")
    disc = G1.disc
    n = disc.boundary.n
    w = disc.boundary.weight
    s21 = math.sin(alpha2 - a1)
    c0 = s21 / s2
    c1 = s21 / (s1 * s2)
    if s21 == 0.0:
        G2 = GreenKernelMatrix(G1.kind, float(alpha2), G1.energy, G1.potential_id, disc, G1.bb,
                               G1.bv, G1.vv, G1.vv_values, G1.potential, G1.modes,
                               dict(G1.diagonal_treatment))
        return G2, GreenCorrection(np.zeros((n, n)), np.zeros((n, n)), np.zeros((n, n)), 0, 0.0, 1.0)
    K_hat = c1 * w * G1.bb
    cols = np.hstack([G1.bb, G1.bv])
    W0 = c0 * w * (G1.bb @ cols)
    A = np.eye(n) - K_hat
    factors, cond = factor_with_condition(A)
    if not cond < COND_LIMIT:
        raise WellPosednessError(f"α-change boundary equation is singular (cond {cond:.3e})",
                                 condition=cond)
    W = lu_solve(factors, W0)
    residual = float(np.linalg.norm(A @ W - W0) / max(np.linalg.norm(W0), 1e-300))
    W_bb, W_bv = W[:, :n], W[:, n:]
    bb2 = G1.bb + W_bb
    bv2 = G1.bv + W_bv
    vv2 = None
    vals2 = None
    if G1.bv.shape[1]:
        ca1 = math.cos(a1)
        cot2 = math.cos(alpha2) / s2
        trace = ca1 * W_bv - s1 * (cot2 * W_bv - c1 * G1.bv)
        W_vv = (G1.bv.T * w) @ trace / s1
        if G1.vv is not None and with_volume:
            vv2 = G1.vv + W_vv * disc.active_weights[None, :]
        if G1.vv_values is not None:
            vals2 = G1.vv_values + W_vv
    kind = "robin_domain"
    modes = None
    if G1.modes is not None and G1.potential is None:
        modes = disk_modes(G1.energy, alpha2, disc.domain.radius, n_modes=max(n, disc.volume.n_theta))
    G2 = GreenKernelMatrix(kind, float(alpha2), G1.energy, G1.potential_id, disc, bb2, bv2, vv2,
                           vals2, G1.potential, modes, dict(G1.diagonal_treatment))
    return G2, GreenCorrection(W_bb, W0[:, :n], K_hat, 0, residual, cond)


@dataclass
class BoundCheckReport:
    constant: float
    max_ratio: float
    pass_: bool
    sweep: list = field(default_factory=list)
    refined_constant: float | None = None

    @property
    def passed(self) -> bool:
        return self.pass_


def _bound_sweep(dist: np.ndarray, vals: np.ndarray):
    ratio = np.abs(vals) / np.maximum(1.0, np.abs(np.log(dist)))
    finite = np.isfinite(ratio)
    dist, ratio = dist[finite], ratio[finite]
    dmin = float(dist.min())
    thresholds = dmin * 2.0 ** np.arange(5, -1, -1)
    sweep = [(float(t), float(ratio[dist >= t].max())) for t in thresholds if np.any(dist >= t)]
    return sweep, float(ratio.max())


def green_bound_check(G: GreenKernelMatrix | tuple, refined: GreenKernelMatrix | tuple | None = None,
                      stability: float = 0.10) -> BoundCheckReport:
    """Fit a = sup |G(x,y)| / max(1, |ln|x-y||) over off-diagonal samples.

    G is a GreenKernelMatrix (uses its pointwise blocks) or a tuple
    (distances, values).  Pass iff a is finite, a does not keep growing as
    closer pairs are admitted, and (when a refined kernel is given) the two
    constants agree to `stability`.
    """
    def samples(obj):
        if isinstance(obj, tuple):
            d, v = obj
            return np.asarray(d, float).ravel(), np.asarray(v).ravel()
        xb = obj.disc.boundary.points
        xv = obj.disc.active_nodes
        d = [np.hypot(xb[:, None, 0] - xv[None, :, 0], xb[:, None, 1] - xv[None, :, 1]).ravel()]
        v = [obj.bv.ravel()]
        if obj.vv_values is not None:
            dv = np.hypot(xv[:, None, 0] - xv[None, :, 0], xv[:, None, 1] - xv[None, :, 1])
            off = ~np.eye(len(xv), dtype=bool)
            d.append(dv[off])
            v.append(obj.vv_values[off])
        return np.concatenate(d), np.concatenate(v)

    d, v = samples(G)
    sweep, a = _bound_sweep(d, v)
    finite = math.isfinite(a)
    growth = sweep[-1][1] / sweep[0][1] if sweep and sweep[0][1] > 0 else 1.0
    stable = growth <= 1.0 + stability
    ref_a = None
    if refined is not None:
        _, ref_a = _bound_sweep(*samples(refined))
        stable = stable and abs(ref_a - a) <= stability * max(a, ref_a)
    return BoundCheckReport(a, a, bool(finite and stable), sweep, ref_a)


def pick_seed_alpha(E: float, alpha: float, R: float = 1.0, n_modes: int = 64,
                    limit: float = 1e8) -> float:
    """A well-conditioned α₁ (sin α₁ ≠ 0) for the analytic free-disk seed."""
    candidates = [alpha, math.pi / 2, math.pi / 4, 3 * math.pi / 4, math.pi / 3, 2 * math.pi / 3]
    m = np.arange(n_modes + 1)
    pair = radial_pair(E)
    for a in candidates:
        if abs(math.sin(a)) < 1e-3:
            continue
        cond = np.max(1.0 / impedance_denominator_measure(a, pair.dlog_u1(m, R)))
        if cond < limit:
            return float(a)
    raise WellPosednessError(f"no well-conditioned free-disk seed at E={E}")


def domain_green(disc: Discretization, v: PotentialField | None, E: float, alpha: float,
                 seed_alpha: float | None = None, order: str = "potential_first",
                 with_volume: bool = False, with_values: bool = False):
    """G_{α,v} by the constructive chain: analytic G_{α₁,0}, then the potential
    change and the α change (in the requested order).

    Returns (GreenKernelMatrix, info) with info["condition"] the largest
    Fredholm condition number met along the chain.
    """
    if abs(math.sin(alpha)) < 1e-14:
        raise ConfigurationError("the Green chain targets sin α ≠ 0; Dirichlet goes through the DtN route")
    if order not in ("potential_first", "alpha_first"):
        raise ConfigurationError(f"unknown chain order {order!r}")
    a1 = pick_seed_alpha(E, alpha, disc.domain.radius) if seed_alpha is None else float(seed_alpha)
    has_v = v is not None and not v.is_zero
    need_vv = has_v
    G = free_disk_green(disc, E, a1, with_volume=need_vv or with_volume, with_values=with_values)
    info = {"seed_alpha": a1, "order": order, "condition": 1.0, "steps": []}

    def step_v(G):
        G2, corr = green_change_potential(G, v, with_volume=with_volume)
        info["steps"].append(("potential", corr.condition, corr.residual))
        info["condition"] = max(info["condition"], corr.condition)
        return G2

    def step_a(G, keep):
        G2, corr = green_change_alpha(G, alpha, with_volume=keep)
        info["steps"].append(("alpha", corr.condition, corr.residual))
        info["condition"] = max(info["condition"], corr.condition)
        return G2

    if order == "potential_first":
        if has_v:
            G = step_v(G)
        if alpha != a1:
            G = step_a(G, with_volume)
    else:
        if alpha != a1:
            G = step_a(G, need_vv or with_volume)
        if has_v:
            G = step_v(G)
    return G, info


def exterior_potential_operator(pair: RadialPair, disc: Discretization, r_targets, theta_targets,
                                combo: tuple[float, float] = (1.0, 0.0)) -> np.ndarray:
    """Matrix of f ↦ a·u + b·∂_r u, u = ∫_{active} Γ(x - ξ) f(ξ) dξ, at targets outside the active disk.

    combo = (a, b); (cos α, -sin α) gives the α-trace on a centred circle.
    Γ is the radial fundamental solution of `pair`.  The angular integral is
    exact for angularly band-limited densities (|m| <= n_θ/2, Nyquist once).
    """
    r_t = np.atleast_1d(np.asarray(r_targets, dtype=float))
    th_t = np.atleast_1d(np.asarray(theta_targets, dtype=float))
    if np.any(r_t < disc.active_radius - 1e-14):
        raise DomainError("exterior potential targets must lie outside the active disk")
    vol = disc.volume
    M = vol.n_theta // 2
    m = np.arange(-M + 1, M + 1)
    am = np.abs(m)
    ca, cb = combo
    rho = disc.active_radii
    lu1 = pair.log_u1(am[:, None], rho[None, :])                 # (modes, radii)
    cm = pair.c(am)
    uniq, inv = np.unique(r_t, return_inverse=True)
    out = np.empty((len(r_t), len(rho) * vol.n_theta), dtype=np.complex128)
    rw = vol.radial_weights[disc.active_radial]
    ang_w = 2.0 * np.pi / vol.n_theta
    for iu, r in enumerate(uniq):
        with np.errstate(divide="ignore", invalid="ignore"):
            trace = ca + cb * pair.dlog_u2(am, r)
            coef = cm[:, None] * trace[:, None] * np.exp(lu1 + pair.log_u2(am, r)[:, None])
        if pair.family == "laplace":
            # u2 = ln r can vanish on the target circle
            zero = am == 0
            coef[zero] = cm[zero, None] * (ca * math.log(r) + cb / r) * np.exp(lu1[zero])
        coef = coef * rw[None, :] * ang_w
        rows = np.nonzero(inv == iu)[0]
        et = np.exp(1j * np.outer(th_t[rows], m))                       # (targets, modes)
        es = np.exp(-1j * np.outer(m, vol.angles))                      # (modes, angles)
        blk = np.einsum("tm,mi,ma->tia", et, coef, es, optimize=True)
        out[rows] = blk.reshape(len(rows), -1)
    return out
