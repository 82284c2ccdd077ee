"""Born-approximation reconstruction of the potential from scattering data.

Linearizing f(k, l) ≈ (2π)^{-2} v̂(l - k) gives v̂(p) = (2π)²·datum at
p = l - k.  Samples live on a polar p-grid: Gauss-Legendre in u = |p|² and
equispaced directions.  Synthesis integrates the trigonometric interpolant
in angle exactly (Jacobi-Anger), so radial data are reconstructed with the
radial rule's accuracy alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .domain_model import Domain, PotentialField, PotentialSpec, fourier_transform_potential, \
    radial_fourier_transform
from .errors import ConfigurationError, DomainError, ValidationError
from .greens import COND_LIMIT
from .scattering import MomentumPair, ScatteringDataset, momentum_pair_complex, momentum_pair_real

TWO_PI = 2.0 * np.pi
SOFT_COND = 1e8


@dataclass(frozen=True)
class PolarSampling:
    n_dirs: int
    n_radii: int
    p_max: float

    def __post_init__(self):
        if self.n_dirs < 2 or self.n_dirs % 2:
            raise ConfigurationError("n_dirs must be even so that p and -p are both sampled")
        if self.n_radii < 1 or not self.p_max > 0:
            raise ConfigurationError("need n_radii >= 1 and p_max > 0")

    @property
    def radii(self) -> np.ndarray:
        x, _ = np.polynomial.legendre.leggauss(self.n_radii)
        return np.sqrt(0.5 * (x + 1.0) * self.p_max ** 2)

    @property
    def radial_weights(self) -> np.ndarray:
        """Weights for ∫_0^{p_max} g(p) p dp = ½∫_0^{p_max²} g(√u) du."""
        _, w = np.polynomial.legendre.leggauss(self.n_radii)
        return 0.25 * self.p_max ** 2 * w

    @property
    def angles(self) -> np.ndarray:
        return TWO_PI * np.arange(self.n_dirs) / self.n_dirs

    def points(self) -> np.ndarray:
        """p-vectors, radius-major, shape (n_radii, n_dirs, 2)."""
        r = self.radii[:, None]
        a = self.angles[None, :]
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)

    def to_dict(self) -> dict:
        return {"n_dirs": self.n_dirs, "n_radii": self.n_radii, "p_max": self.p_max}


def sample_momentum_set(E: float, n_dirs: int, n_radii: int, p_max: float,
                        allow_faddeev: bool = False) -> tuple[list[MomentumPair], PolarSampling]:
    """Momentum pairs with l - k on the polar grid; classical inside |p| <= 2√E, Faddeev outside."""
    sampling = PolarSampling(int(n_dirs), int(n_radii), float(p_max))
    edge = 2.0 * math.sqrt(E) if E > 0 else 0.0
    if p_max > edge * (1 + 1e-14) and not allow_faddeev:
        raise DomainError(f"p_max = {p_max} exceeds 2√E = {edge}; enable the Faddeev path")
    pairs = []
    for p in sampling.points().reshape(-1, 2):
        if np.linalg.norm(p) <= edge * (1 + 1e-14):
            pairs.append(momentum_pair_real(p, E))
        else:
            pairs.append(momentum_pair_complex(p, E))
    return pairs, sampling


@dataclass(frozen=True)
class ReconstructionGrid:
    """Cartesian points covering the disk, with spacing."""

    points: np.ndarray
    spacing: float
    radius: float

    @classmethod
    def covering(cls, domain: Domain, spacing: float) -> "ReconstructionGrid":
        if not spacing > 0:
            raise ConfigurationError("grid spacing must be positive")
        R = domain.radius
        g = np.arange(-R, R + 0.5 * spacing, spacing)
        X, Y = np.meshgrid(g, g)
        keep = X ** 2 + Y ** 2 <= R * R * (1 + 1e-12)
        return cls(np.column_stack([X[keep], Y[keep]]), float(spacing), R)

    @classmethod
    def for_band(cls, domain: Domain, p_max: float, spacing: float | None = None) -> "ReconstructionGrid":
        nyq = math.pi / p_max
        return cls.covering(domain, min(nyq, spacing) if spacing else nyq)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def descriptor(self) -> dict:
        return {"kind": "cartesian_disk", "spacing": self.spacing, "radius": self.radius,
                "size": self.size}


@dataclass
class ReconstructedPotential:
    values: np.ndarray
    grid: ReconstructionGrid
    p_max: float
    provenance: str
    regularization: dict = field(default_factory=dict)


def _synthesize(vhat: np.ndarray, sampling: PolarSampling, grid: ReconstructionGrid) -> np.ndarray:
    """(2π)^{-2}∫_{|p|<=p_max} v̂(p)e^{ip·x}dp with v̂ on the polar grid (n_radii, n_dirs)."""
    nd = sampling.n_dirs
    x = grid.points
    r = np.hypot(x[:, 0], x[:, 1])
    th = np.arctan2(x[:, 1], x[:, 0])
    c = np.fft.fft(vhat, axis=1) / nd            # angular coefficients, FFT order
    m = np.fft.fftfreq(nd, 1.0 / nd).astype(int)
    half = nd // 2
    # split the Nyquist term evenly between ±nd/2 so real data stay real
    m_all = np.concatenate([m, [half]])
    c_all = np.concatenate([c, c[:, [half]]], axis=1)
    c_all[:, half] *= 0.5
    c_all[:, -1] *= 0.5
    m_all[half] = -half
    out = np.zeros(x.shape[0], dtype=complex)
    for pr, wr, cr in zip(sampling.radii, sampling.radial_weights, c_all):
        # ∫ e^{imφ} e^{ipr cos(φ-θ)} dφ = 2π i^m J_m(pr) e^{imθ}
        J = special.jv(m_all[None, :], pr * r[:, None])
        out += wr * TWO_PI * ((1j ** m_all) * cr * J * np.exp(1j * np.outer(th, m_all))).sum(axis=1)
    return out / TWO_PI ** 2


def _entry_indices(p: np.ndarray, sampling: PolarSampling) -> tuple[int, int]:
    pr = np.linalg.norm(p)
    i = int(np.argmin(np.abs(sampling.radii - pr)))
    j = int(round(math.atan2(p[1], p[0]) / (TWO_PI / sampling.n_dirs))) % sampling.n_dirs
    if abs(sampling.radii[i] - pr) > 1e-8 * max(1.0, pr):
        raise ValidationError(f"momentum transfer |p| = {pr} is not on the sampling grid")
    return i, j


def born_invert(data: ScatteringDataset, grid: ReconstructionGrid,
                sampling: PolarSampling | None = None) -> ReconstructedPotential:
    """v̂(p) := (2π)²·datum, weighted by min(1, 1e8/cond), entries above 1e12 dropped."""
    sampling = sampling or data.sampling
    if sampling is None:
        raise ConfigurationError("dataset carries no polar sampling description")
    vhat = np.zeros((sampling.n_radii, sampling.n_dirs), dtype=complex)
    have = np.zeros(vhat.shape, dtype=bool)
    dropped = 0
    softened = 0
    for e in data.entries:
        if e["value"] is None or not e["condition"] < COND_LIMIT:
            dropped += 1
            continue
        i, j = _entry_indices(e["pair"].p, sampling)
        w = min(1.0, SOFT_COND / e["condition"])
        softened += w < 1.0
        vhat[i, j] = TWO_PI ** 2 * e["value"] * w
        have[i, j] = True
    if not have.any():
        raise ValidationError("no usable data after condition filtering")
    # Hermitian symmetrization: v real ⇒ v̂(-p) = conj v̂(p)
    half = sampling.n_dirs // 2
    flip = np.roll(vhat, -half, axis=1)
    flip_have = np.roll(have, -half, axis=1)
    both = have & flip_have
    sym = np.where(both, 0.5 * (vhat + np.conj(flip)), np.where(have, vhat, np.conj(flip)))
    vals = _synthesize(sym, sampling, grid)
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    imag = float(np.max(np.abs(vals.imag)))
    reg = {"dropped": dropped, "softened": int(softened), "missing": int((~(have | flip_have)).sum()),
           "imag_residue": imag / scale, "weighting": "min(1, 1e8/cond)", "sampling": sampling.to_dict()}
    return ReconstructedPotential(vals.real.copy(), grid, sampling.p_max, data.provenance, reg)


def born_dataset(vhat_fn, E: float, sampling: PolarSampling, alpha: float = math.pi / 2) -> ScatteringDataset:
    """Synthetic dataset whose values are the exact Born data v̂(p)/(2π)²."""
    pairs, _ = sample_momentum_set(E, sampling.n_dirs, sampling.n_radii, sampling.p_max, allow_faddeev=True)
    ds = ScatteringDataset(E, alpha, provenance="born_synthetic", sampling=sampling)
    for pr in pairs:
        ds.add(pr, complex(vhat_fn(pr.p)) / TWO_PI ** 2, 1.0)
    return ds


def lowpass_reference(v: PotentialField | PotentialSpec, p_max: float, grid: ReconstructionGrid,
                      domain: Domain | None = None, n_quad: int = 200) -> np.ndarray:
    """v filtered to |p| <= p_max: (2π)^{-2}∫_{|p|<=p_max} v̂(p)e^{ip·x}dp."""
    spec = v.spec if isinstance(v, PotentialField) else v
    dom = domain or (v.grid.domain if isinstance(v, PotentialField) else Domain(grid.radius))
    r = np.hypot(grid.points[:, 0], grid.points[:, 1])
    # Gauss-Legendre in p; p J0(pr) and v̂ are smooth on [0, p_max]
    x, w = np.polynomial.legendre.leggauss(n_quad)
    p = 0.5 * p_max * (x + 1.0)
    wp = 0.5 * p_max * w
    if spec.is_radial and spec.kind != "grid_samples":
        vh = radial_fourier_transform(spec, dom, p)
        return (special.j0(np.outer(r, p)) @ (wp * p * vh)) / TWO_PI
    if not isinstance(v, PotentialField):
        raise ValidationError("non-radial low-pass reference needs a sampled field")
    nd = 2 * int(math.ceil(p_max * (grid.radius + 1.0))) + 32
    samp = PolarSampling(nd, n_quad, p_max)
    vh = fourier_transform_potential(v, samp.points())
    return _synthesize(vh, samp, grid).real


def error_metrics(recon, reference: np.ndarray, grid: ReconstructionGrid | None = None,
                  support_radius: float | None = None, p_max: float | None = None,
                  center=(0.0, 0.0)) -> dict:
    """rel_l2, max_abs and the fraction of |recon| mass inside the dilated true support.

    The support is the disk of support_radius about center when given,
    otherwise the set where the reference is nonzero; it is dilated by the
    correlation length π/p_max.
    """
    rv = recon.values if isinstance(recon, ReconstructedPotential) else np.asarray(recon, dtype=float)
    grid = grid or (recon.grid if isinstance(recon, ReconstructedPotential) else None)
    p_max = p_max or (recon.p_max if isinstance(recon, ReconstructedPotential) else None)
    ref = np.asarray(reference, dtype=float)
    if rv.shape != ref.shape:
        raise ValidationError("reconstruction and reference have different shapes")
    nref = float(np.linalg.norm(ref))
    if nref == 0.0:
        raise ValidationError("reference field has zero norm")
    diff = rv - ref
    out = {"rel_l2": float(np.linalg.norm(diff) / nref), "max_abs": float(np.max(np.abs(diff)))}
    mass = float(np.sum(np.abs(rv)))
    if grid is None or mass == 0.0:
        out["support_localization"] = 1.0 if mass == 0.0 else float("nan")
        return out
    corr = math.pi / p_max if p_max else grid.spacing
    pts = grid.points
    if support_radius is not None:
        inside = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1]) <= support_radius + corr
    else:
        core = pts[ref != 0.0]
        d2 = ((pts[:, None, :] - core[None, :, :]) ** 2).sum(-1).min(axis=1) if len(core) else np.inf
        inside = d2 <= corr * corr
    out["support_localization"] = float(np.sum(np.abs(rv[inside])) / mass)
    return out
