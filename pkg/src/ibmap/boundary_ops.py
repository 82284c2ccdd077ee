"""Operators on the boundary circle: impedance maps, DtN maps and their algebra.

A BoundaryOperator acts as u ↦ c·u + Σ_j K_ij w_j u_j with a scalar delta
coefficient c and a kernel K on a BoundaryGrid.  Keeping c separate lets the
difference of two impedance maps at the same α cancel the delta part exactly.

The impedance map sends [ψ]_α = cos α·ψ - sin α·∂_ν ψ to [ψ]_{α-π/2}.  In terms
of the DtN map Λ,

    M̂_α = (sin α + cos α Λ)(cos α - sin α Λ)^{-1},

so M̂_0 = Λ and M̂_{π/2} = -Λ^{-1}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, special

from . import greens
from .domain_model import (BoundaryGrid, Domain, PotentialField, PotentialSpec,
                           build_boundary_grid)
from .errors import (AccuracyError, ConfigurationError, DomainError, GridMismatchError,
                     ValidationError, WellPosednessError)

COND_LIMIT = greens.COND_LIMIT


# ----------------------------------------------------------------- types

@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    delta_coeff: complex
    kernel: np.ndarray
    grid: BoundaryGrid
    kind: str = "impedance_map"
    alpha: float | None = None
    energy: float | None = None
    potential_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.n

    def matrix(self) -> np.ndarray:
        """Discrete action matrix c·I + K·diag(w)."""
        A = self.kernel * self.grid.weight
        return A + self.delta_coeff * np.eye(self.n)

    def apply(self, u) -> np.ndarray:
        u = np.asarray(u)
        return self.delta_coeff * u + self.kernel @ (self.grid.weight * u)

    def fourier_matrix(self) -> np.ndarray:
        """Matrix of the operator in the e^{imθ} basis (FFT order)."""
        E = np.exp(1j * np.outer(self.grid.angles, self.grid.modes))
        return E.conj().T @ self.matrix() @ E / self.n

    def mode_values(self, modes) -> np.ndarray:
        """Diagonal entries ⟨e_m, A e_m⟩ for the requested angular modes."""
        n = self.n
        theta = self.grid.angles
        out = []
        A = self.matrix()
        for m in np.atleast_1d(modes):
            e = np.exp(1j * m * theta)
            out.append(np.vdot(e, A @ e) / n)
        return np.array(out)

    def mode_block(self, max_mode: int) -> np.ndarray:
        """Fourier matrix restricted to |m| <= max_mode (ordered -max..max)."""
        m = np.arange(-max_mode, max_mode + 1)
        E = np.exp(1j * np.outer(self.grid.angles, m))
        return E.conj().T @ self.matrix() @ E / self.n

    def symmetry_defect(self) -> float:
        K = self.kernel
        scale = float(np.max(np.abs(K)))
        return float(np.max(np.abs(K - K.T)) / scale) if scale > 0 else 0.0

    def with_kernel(self, kernel, delta_coeff=None, **changes) -> "BoundaryOperator":
        c = self.delta_coeff if delta_coeff is None else delta_coeff
        return replace(self, kernel=kernel, delta_coeff=c, **changes)


@dataclass(frozen=True)
class RobinTrace:
    values: np.ndarray
    alpha: float
    grid: BoundaryGrid
    tag: str = ""

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.n,):
            raise GridMismatchError("trace length does not match the grid")
        if not np.all(np.isfinite(v)):
            raise ValidationError("trace has non-finite entries")
        object.__setattr__(self, "values", v)


@dataclass
class WellPosednessProbe:
    energy: float
    alpha: float
    conditions: dict
    verdict: str
    nearest: dict | None = None
    threshold: float = COND_LIMIT

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def condition(self) -> float:
        return max(self.conditions.values()) if self.conditions else 1.0

    def to_dict(self) -> dict:
        return {"energy": self.energy, "alpha": self.alpha,
                "conditions": {k: float(v) for k, v in sorted(self.conditions.items())},
                "verdict": self.verdict, "nearest": self.nearest, "threshold": self.threshold}

    def require(self):
        if not self.passed:
            raise WellPosednessError(
                f"(α={self.alpha}, E={self.energy}) fails the well-posedness probe "
                f"(condition {self.condition:.3e})", probe=self)
        return self


# ------------------------------------------------------------- basic ops

def _same_grid(a: BoundaryGrid, b: BoundaryGrid):
    if not a.same_as(b):
        raise GridMismatchError("operands live on different boundary grids")


def trace_alpha(psi, dpsi_dnu, alpha: float, grid: BoundaryGrid | None = None, tag: str = "") -> RobinTrace:
    """[ψ]_α = cos α·ψ - sin α·∂_ν ψ."""
    psi = np.asarray(psi)
    dpsi = np.asarray(dpsi_dnu)
    if psi.shape != dpsi.shape:
        raise GridMismatchError("ψ and ∂ψ/∂ν have different lengths")
    if grid is None:
        grid = build_boundary_grid(Domain(), psi.shape[0])
    return RobinTrace(math.cos(alpha) * psi - math.sin(alpha) * dpsi, float(alpha), grid, tag)


def impedance_from_green(G: "greens.GreenKernelMatrix | np.ndarray", alpha: float | None = None,
                         grid: BoundaryGrid | None = None) -> BoundaryOperator:
    """M = G/sin²α - cot α·δ from the boundary restriction of G_{α,v}."""
    if isinstance(G, greens.GreenKernelMatrix):
        alpha = G.alpha if alpha is None else alpha
        grid = G.boundary
        bb, meta = G.bb, {"energy": G.energy, "potential_id": G.potential_id}
    else:
        bb, meta = np.asarray(G), {}
        if grid is None or alpha is None:
            raise ConfigurationError("raw kernels need α and a grid")
    s = math.sin(alpha)
    if abs(s) < 1e-14:
        raise ConfigurationError("impedance_from_green needs sin α ≠ 0; use robin_from_dtn")
    return BoundaryOperator(_delta_for(alpha), bb / s ** 2, grid, "impedance_map", float(alpha),
                            meta.get("energy"), meta.get("potential_id", ""))


def _delta_for(alpha: float, fallback: complex = 0.0) -> complex:
    """-cot α; exactly 0 at α = ±π/2, where cos(π/2) rounds to 6e-17."""
    s, c = math.sin(alpha), math.cos(alpha)
    if abs(s) <= 1e-14:
        return fallback
    return 0.0 if abs(c) < 1e-15 else -c / s


def operator_from_matrix(A: np.ndarray, grid: BoundaryGrid, delta_coeff: complex = 0.0,
                         **meta) -> BoundaryOperator:
    """Inverse of BoundaryOperator.matrix: K = (A - cI)/w."""
    K = (A - delta_coeff * np.eye(grid.n)) / grid.weight
    return BoundaryOperator(delta_coeff, K, grid, **meta)


def _cond_inverse(A: np.ndarray, what: str):
    factors, cond = greens.factor_with_condition(A)
    if not cond < COND_LIMIT:
        raise WellPosednessError(f"{what} is numerically singular (cond {cond:.3e})", condition=cond)
    return factors, cond


def robin_from_dtn(Lam: BoundaryOperator, alpha: float) -> BoundaryOperator:
    """M̂_α = (sin α + cos α Λ)(cos α - sin α Λ)^{-1}."""
    s, c = math.sin(alpha), math.cos(alpha)
    if s == 0.0 and c > 0:
        return replace(Lam, kind="impedance_map", alpha=float(alpha))
    L = Lam.matrix()
    I = np.eye(Lam.n)
    factors, cond = _cond_inverse((c * I - s * L).T, "cos α - sin α Λ")
    M = greens.lu_solve(factors, (s * I + c * L).T).T
    out = operator_from_matrix(M, Lam.grid, _delta_for(alpha), kind="impedance_map",
                               alpha=float(alpha), energy=Lam.energy, potential_id=Lam.potential_id)
    out.meta["condition"] = cond
    return out


def dtn_from_robin(M: BoundaryOperator) -> BoundaryOperator:
    """Λ = (sin α M + cos α)^{-1}(cos α M - sin α): inverse of robin_from_dtn."""
    alpha = M.alpha
    s, c = math.sin(alpha), math.cos(alpha)
    A = M.matrix()
    I = np.eye(M.n)
    factors, cond = _cond_inverse(s * A + c * I, "sin α M + cos α")
    L = greens.lu_solve(factors, c * A - s * I)
    out = operator_from_matrix(L, M.grid, 0.0, kind="dtn", alpha=0.0, energy=M.energy,
                               potential_id=M.potential_id)
    out.meta["condition"] = cond
    return out


def operator_apply(op: BoundaryOperator, u) -> np.ndarray:
    if isinstance(u, RobinTrace):
        _same_grid(op.grid, u.grid)
        u = u.values
    return op.apply(u)


def operator_sub(a: BoundaryOperator, b: BoundaryOperator) -> BoundaryOperator:
    """a - b.  Equal delta coefficients cancel exactly."""
    _same_grid(a.grid, b.grid)
    kind = a.kind if a.kind == b.kind else "difference"
    c = 0.0 if a.delta_coeff == b.delta_coeff else a.delta_coeff - b.delta_coeff
    alpha = a.alpha if a.alpha == b.alpha else None
    return BoundaryOperator(c, a.kernel - b.kernel, a.grid, kind, alpha, a.energy,
                            f"{a.potential_id}-{b.potential_id}")


def operator_inverse(op: BoundaryOperator) -> BoundaryOperator:
    """Inverse in the same c·I + K·w form (c → 1/c when c ≠ 0)."""
    factors, cond = _cond_inverse(op.matrix(), "operator")
    Ainv = greens.lu_solve(factors, np.eye(op.n))
    c = 1.0 / op.delta_coeff if op.delta_coeff != 0 else 0.0
    out = operator_from_matrix(Ainv, op.grid, c, kind=op.kind, alpha=op.alpha, energy=op.energy,
                               potential_id=op.potential_id)
    out.meta["condition"] = cond
    return out


def diagonal_operator(symbol_fn, grid: BoundaryGrid, delta_coeff: complex = 0.0, **meta) -> BoundaryOperator:
    """Rotation-invariant operator with eigenvalue symbol_fn(|m|) on e^{imθ}."""
    sym = np.asarray(symbol_fn(np.abs(grid.modes)), dtype=complex)
    K = greens.circulant_from_symbol(sym - delta_coeff, grid)
    if np.all(np.abs(K.imag) <= 1e-15 * max(1.0, np.max(np.abs(K)))):
        K = K.real
    op = BoundaryOperator(delta_coeff, K, grid, **meta)
    op.meta["symbol"] = sym
    return op


# ------------------------------------------------------ analytic operators

def dtn_free_disk(E: float, n_modes: int | BoundaryGrid = 64, radius: float = 1.0) -> BoundaryOperator:
    """DtN map of Δ + E on the disk, diagonal in the angular Fourier basis."""
    grid = n_modes if isinstance(n_modes, BoundaryGrid) else build_boundary_grid(Domain(radius), int(n_modes))
    R = grid.radius
    m = np.arange(grid.n // 2 + 1)
    pair = greens.radial_pair(E)
    if E > 0:
        vals = special.jv(m, math.sqrt(E) * R)
        meas = greens.impedance_denominator_measure(0.0, pair.dlog_u1(m, R))
        bad = np.nonzero(~(1.0 / meas < COND_LIMIT))[0]
        if bad.size or np.any(vals == 0):
            raise WellPosednessError(
                f"E={E} is a Dirichlet eigenvalue of the disk (mode {int(bad[0]) if bad.size else 0})",
                condition=float(np.max(1.0 / meas)))
    ell = pair.dlog_u1(m, R).real

    def symbol(am):
        return ell[am]

    op = diagonal_operator(symbol, grid, 0.0, kind="dtn", alpha=0.0, energy=float(E), potential_id="zero")
    return op


def free_impedance_operator(E: float, alpha: float, grid: BoundaryGrid) -> BoundaryOperator:
    """M̂_α for v = 0 from the analytic mode data."""
    R = grid.radius
    m = np.arange(grid.n // 2 + 1)
    ell = greens.radial_pair(E).dlog_u1(m, R).real
    s, c = math.sin(alpha), math.cos(alpha)
    meas = greens.impedance_denominator_measure(alpha, ell)
    if not np.max(1.0 / meas) < COND_LIMIT:
        raise WellPosednessError(f"(α={alpha}, E={E}) is an impedance eigenvalue of the free disk",
                                 condition=float(np.max(1.0 / meas)))
    vals = (s + c * ell) / (c - s * ell)
    return diagonal_operator(lambda am: vals[am], grid, _delta_for(alpha), kind="impedance_map",
                             alpha=float(alpha), energy=float(E), potential_id="zero")


# ------------------------------------------------------ radial ODE oracle

def radial_log_derivative(spec: PotentialSpec, E: float, n: int, domain: Domain = Domain(),
                          rtol: float = 1e-12) -> tuple[float, float, float]:
    """Regular solution of u'' + u'/r - n²u/r² + (E - v)u = 0 at r = R.

    Integrates w = u/r^{|n|}, which solves w'' + (2|n|+1)w'/r + (E - v)w = 0
    with w(0) = 1, w'(0) = 0.  Returns (w(R), w'(R), u'(R)/u(R)).
    """
    n = abs(int(n))
    R = domain.radius
    knots = sorted({k for k in spec.breakpoints(domain) if 0 < k < R})
    q = E - float(spec.radial_profile(np.array([0.0]), domain)[0])
    r0 = 1e-6 * R
    # series start: w = 1 - q r²/(4(n+1)) + O(r⁴)
    y = np.array([1.0 - q * r0 ** 2 / (4 * (n + 1)), -q * r0 / (2 * (n + 1))])

    edges = [r0] + knots + [R]
    for a, b in zip(edges[:-1], edges[1:]):
        mid = 0.5 * (a + b)
        vmid = float(spec.radial_profile(np.array([mid]), domain)[0])

        def rhs_panel(r, y, vmid=vmid, a=a, b=b):
            # piecewise-constant profiles use the panel value so knots are never straddled
            if spec.kind == "radial_profile":
                vr = vmid
            else:
                vr = float(spec.radial_profile(np.array([min(max(r, a), b)]), domain)[0])
            return [y[1], -(2 * n + 1) / r * y[1] - (E - vr) * y[0]]

        sol = integrate.solve_ivp(rhs_panel, (a, b), y, method="DOP853", rtol=rtol, atol=1e-14 * max(1.0, abs(y[0])))
        if not sol.success:
            raise AccuracyError(f"radial ODE failed for mode {n}: {sol.message}")
        y = sol.y[:, -1]
    w, dw = float(y[0]), float(y[1])
    ell = n / R + dw / w if w != 0 else math.inf
    return w, dw, ell


def radial_impedance_oracle(spec: PotentialSpec, E: float, alpha: float, n_modes: int | BoundaryGrid = 64,
                            domain: Domain = Domain(), rtol: float = 1e-12) -> BoundaryOperator:
    """M̂_α for a radial potential from per-mode ODE solves.

    Mode value m_n = (sin α·u(R) + cos α·u'(R)) / (cos α·u(R) - sin α·u'(R)).
    """
    if not spec.is_radial:
        raise ConfigurationError("radial oracle needs a radially symmetric potential")
    grid = n_modes if isinstance(n_modes, BoundaryGrid) else build_boundary_grid(domain, int(n_modes))
    R = grid.radius
    s, c = math.sin(alpha), math.cos(alpha)
    M = grid.n // 2
    vals = np.empty(M + 1)
    worst = (math.inf, 0)
    for n in range(M + 1):
        w, dw, _ = radial_log_derivative(spec, E, n, grid.domain, rtol)
        u = R ** n * w
        du = n * R ** (n - 1) * w + R ** n * dw if n else dw
        den = c * u - s * du
        scale = math.hypot(u, du)
        meas = abs(den) / scale
        if meas < worst[0]:
            worst = (meas, n)
        if meas < 1e-10:
            raise WellPosednessError(f"impedance denominator vanishes for mode {n} (α={alpha}, E={E})",
                                     condition=1.0 / max(meas, 1e-300), mode=n)
        vals[n] = (s * u + c * du) / den
    op = diagonal_operator(lambda am: vals[am], grid, _delta_for(alpha), kind="impedance_map",
                           alpha=float(alpha), energy=float(E), potential_id=spec.ident)
    op.meta["mode_values"] = vals
    op.meta["condition"] = 1.0 / worst[0]
    return op


def radial_denominator(spec: PotentialSpec, E: float, alpha: float, n: int,
                       domain: Domain = Domain()) -> float:
    """Scale-free impedance denominator (cos α u - sin α u')/|(u, u')| for mode n."""
    R = domain.radius
    w, dw, _ = radial_log_derivative(spec, E, n, domain)
    u = R ** n * w
    du = n * R ** (n - 1) * w + R ** n * dw if n else dw
    return (math.cos(alpha) * u - math.sin(alpha) * du) / math.hypot(u, du)


# -------------------------------------------------------------- probes

def wellposedness_probe(v: PotentialField | PotentialSpec, E: float, alpha: float,
                        disc=None, n_modes: int = 32, domain: Domain | None = None) -> WellPosednessProbe:
    """Condition data for the α-impedance problem at energy E.

    Sources: free-disk modal denominators (v = 0), radial ODE denominators
    (radial v) and the volume Fredholm matrix of the Green-function chain
    (when a discretization is supplied and v is not radial).
    """
    spec = v.spec if isinstance(v, PotentialField) else v
    domain = domain or (v.grid.domain if isinstance(v, PotentialField) else Domain())
    R = domain.radius
    conds: dict = {}
    nearest = None
    m = np.arange(n_modes + 1)
    if spec.kind == "zero":
        ell = greens.radial_pair(E).dlog_u1(m, R)
        cm = 1.0 / greens.impedance_denominator_measure(alpha, ell)
        conds["free_modes"] = float(np.max(cm))
        if not conds["free_modes"] < COND_LIMIT:
            nearest = {"alpha": float(alpha), "energy": float(E), "mode": int(np.argmax(cm))}
    elif spec.is_radial:
        worst, mode = 0.0, 0
        for n in range(n_modes + 1):
            d = abs(radial_denominator(spec, E, alpha, n, domain))
            c = math.inf if d == 0 else 1.0 / d
            if c > worst:
                worst, mode = c, n
        conds["radial_ode"] = worst
        if not worst < COND_LIMIT:
            nearest = {"alpha": float(alpha), "energy": float(E), "mode": mode}
    if disc is not None and spec.kind != "zero" and not spec.is_radial:
        field_v = v if isinstance(v, PotentialField) else None
        if field_v is None:
            from .domain_model import sample_potential
            field_v = sample_potential(spec, disc.volume)
        try:
            _, chain = greens.domain_green(disc, field_v, E, alpha, with_volume=False)
            conds["green_chain"] = chain["condition"]
        except WellPosednessError as exc:
            conds["green_chain"] = float(exc.details.get("condition", math.inf))
            nearest = {"alpha": float(alpha), "energy": float(E)}
    verdict = "pass" if all(c < COND_LIMIT for c in conds.values()) else "fail"
    return WellPosednessProbe(float(E), float(alpha), conds, verdict, nearest)


def locate_impedance_eigenvalue(spec: PotentialSpec, alpha: float, mode: int, E_lo: float, E_hi: float,
                                domain: Domain = Domain()) -> float:
    """Energy in [E_lo, E_hi] where the mode's impedance denominator changes sign."""
    from scipy.optimize import brentq

    f = lambda E: radial_denominator(spec, E, alpha, mode, domain)  # noqa: E731
    if f(E_lo) * f(E_hi) > 0:
        raise ConfigurationError("no sign change of the impedance denominator in the bracket")
    return float(brentq(f, E_lo, E_hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


# ------------------------------------------------- resolvent inverse formula

@dataclass
class ResidualReport:
    residual: float
    lhs_norm: float
    rhs_norm: float
    extrapolation_error: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.details.get("tolerance", math.inf) >= self.residual


def remark311_check(Rv, Rv0, alpha: float, eps_schedule, Mdiff: BoundaryOperator | None = None,
                    tolerance: float = 1e-3) -> ResidualReport:
    """Compare M̂_{α,v} - M̂_{α,v⁰} with (D_α R^{+,0})^{-1} - (D_α R^{+})^{-1}.

    Rv, Rv0 are BoundaryResolvent objects (volume_oracle.boundary_resolvent):
    they carry the ε-dependent double trace D_{α,ε}R⁺ on the boundary grid.
    Mdiff, when given, is the left-hand side; otherwise Rv.meta supplies it.
    """
    eps = greens.check_schedule(eps_schedule)
    if not Rv.grid.same_as(Rv0.grid):
        raise GridMismatchError("resolvents on different grids")
    D1, err1 = Rv.double_trace(alpha, eps)
    D0, err0 = Rv0.double_trace(alpha, eps)
    A1, A0 = D1 * Rv.grid.weight, D0 * Rv0.grid.weight
    f1, c1 = greens.factor_with_condition(A1)
    f0, c0 = greens.factor_with_condition(A0)
    if not (c1 < COND_LIMIT and c0 < COND_LIMIT):
        raise WellPosednessError("double-trace operator is singular", condition=max(c0, c1))
    I = np.eye(Rv.grid.n)
    rhs = greens.lu_solve(f0, I) - greens.lu_solve(f1, I)
    if Mdiff is None:
        lhs = np.zeros_like(rhs)
    else:
        lhs = Mdiff.matrix()
    denom = max(np.linalg.norm(lhs, 2), np.linalg.norm(rhs, 2))
    if denom == 0.0:
        res = 0.0
    else:
        res = float(np.linalg.norm(lhs - rhs, 2) / denom)
    return ResidualReport(res, float(np.linalg.norm(lhs, 2)), float(np.linalg.norm(rhs, 2)),
                          max(err0, err1), {"tolerance": tolerance, "cond_v": c1, "cond_v0": c0})
