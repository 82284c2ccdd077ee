"""Domains, Nyström grids, potentials and the Fourier transform of potentials.

The domain is a disk centred at the origin.  Boundary integrals use the
trapezoid rule in the polar angle; volume integrals use a polar tensor rule
(composite Gauss-Legendre in radius times trapezoid in angle).  The radial
panels break at every radius where a potential is discontinuous, so the
piecewise-smooth integrands seen downstream are integrated spectrally.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy import special

from .errors import ConfigurationError, ValidationError

DEFAULT_SUPPORT_FRACTION = 0.9


@dataclass(frozen=True)
class Domain:
    radius: float = 1.0
    shape: str = "disk"

    def __post_init__(self):
        if self.shape != "disk":
            raise ConfigurationError(f"unsupported domain shape {self.shape!r}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ConfigurationError("domain radius must be positive and finite")

    @property
    def center(self) -> tuple[float, float]:
        return (0.0, 0.0)

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2

    @property
    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius

    def descriptor(self) -> dict:
        return {"type": self.shape, "radius": self.radius}


@dataclass(frozen=True, eq=False)
class BoundaryGrid:
    domain: Domain
    n: int
    angles: np.ndarray
    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray

    @property
    def radius(self) -> float:
        return self.domain.radius

    @property
    def spacing(self) -> float:
        return self.domain.perimeter / self.n

    @property
    def weight(self) -> float:
        """Common trapezoid weight (all weights are equal)."""
        return float(self.weights[0])

    @cached_property
    def modes(self) -> np.ndarray:
        """Angular wavenumbers in FFT order."""
        return np.rint(np.fft.fftfreq(self.n, 1.0 / self.n)).astype(int)

    def descriptor(self) -> dict:
        return {"kind": "boundary", "n": self.n, "radius": self.radius}

    def same_as(self, other: "BoundaryGrid") -> bool:
        return other is self or (other.n == self.n and other.radius == self.radius)


def build_boundary_grid(domain: Domain, n: int) -> BoundaryGrid:
    if not isinstance(n, (int, np.integer)) or n < 8 or n % 2:
        raise ConfigurationError(f"boundary grid needs an even n >= 8, got {n}")
    n = int(n)
    theta = 2.0 * np.pi * np.arange(n) / n
    normals = np.column_stack([np.cos(theta), np.sin(theta)])
    points = domain.radius * normals
    weights = np.full(n, domain.perimeter / n)
    for arr in (theta, normals, points, weights):
        arr.setflags(write=False)
    return BoundaryGrid(domain, n, theta, points, normals, weights)


def _gauss_panel(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


@dataclass(frozen=True, eq=False)
class VolumeGrid:
    """Polar tensor grid.  Node index = i_radius * n_theta + i_angle."""

    domain: Domain
    n_r: int
    n_theta: int
    breakpoints: tuple[float, ...]
    radii: np.ndarray
    radial_weights: np.ndarray
    angles: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def panels(self) -> list[tuple[float, float]]:
        edges = (0.0,) + self.breakpoints + (self.domain.radius,)
        return list(zip(edges[:-1], edges[1:]))

    @property
    def n_radii(self) -> int:
        return self.radii.size

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @cached_property
    def panel_index(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.panels)), self.n_r)

    def radial_mask(self, radius: float) -> np.ndarray:
        """Radial nodes lying inside the closed disk of the given radius."""
        return self.radii < radius

    def active_mask(self, radius: float) -> np.ndarray:
        return np.repeat(self.radial_mask(radius), self.n_theta)

    def descriptor(self) -> dict:
        return {"kind": "volume", "n_r": self.n_r, "n_theta": self.n_theta,
                "breakpoints": list(self.breakpoints), "radius": self.domain.radius}

    def same_as(self, other: "VolumeGrid") -> bool:
        return other is self or other.descriptor() == self.descriptor()

    def integrate(self, values: np.ndarray) -> complex:
        return np.sum(self.weights * values)


def build_volume_grid(domain: Domain, n_r: int, n_theta: int,
                      breakpoints: Sequence[float] = ()) -> VolumeGrid:
    """Composite Gauss-Legendre panels in r (n_r nodes each) × trapezoid in θ."""
    if n_r < 4 or n_theta < 8:
        raise ConfigurationError(f"volume grid needs n_r >= 4 and n_theta >= 8, got {n_r}, {n_theta}")
    if n_theta % 2:
        raise ConfigurationError("n_theta must be even")
    R = domain.radius
    bps = tuple(sorted({round(float(b), 15) for b in breakpoints if 0.0 < b < R * (1 - 1e-12)}))
    edges = (0.0,) + bps + (R,)
    r_parts, w_parts = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        r, w = _gauss_panel(a, b, n_r)
        r_parts.append(r)
        w_parts.append(w)
    radii = np.concatenate(r_parts)
    rw = np.concatenate(w_parts) * radii
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    rr, tt = np.meshgrid(radii, theta, indexing="ij")
    nodes = np.column_stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()])
    weights = np.repeat(rw, n_theta) * (2.0 * np.pi / n_theta)
    for arr in (radii, rw, theta, nodes, weights):
        arr.setflags(write=False)
    return VolumeGrid(domain, int(n_r), int(n_theta), bps, radii, rw, theta, nodes, weights)


# ---------------------------------------------------------------- potentials

_KINDS = ("zero", "radial_profile", "gaussian_mixture", "grid_samples")


@dataclass(frozen=True)
class PotentialSpec:
    """Serializable description of a potential.

    kinds and their parameters:
      zero:             none
      radial_profile:   knots r_1 < ... < r_K, levels c_1..c_K; v = c_i on
                        r_{i-1} <= r < r_i (r_0 = 0), zero beyond r_K
      gaussian_mixture: amplitudes, centers, widths, support_radius (None means
                        0.9·domain radius); v = Σ a·exp(-|x-c|²/(2σ²)) truncated
                        to |x| < support_radius
      grid_samples:     values on the grid described by `grid`, support_radius
    """

    kind: str = "zero"
    amplitudes: tuple[float, ...] = ()
    centers: tuple[tuple[float, float], ...] = ()
    widths: tuple[float, ...] = ()
    knots: tuple[float, ...] = ()
    levels: tuple[float, ...] = ()
    support_radius: float | None = None
    samples: tuple[float, ...] = ()
    grid: dict | None = field(default=None, hash=False, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        if self.kind == "gaussian_mixture":
            n = len(self.amplitudes)
            if n == 0 or len(self.centers) != n or len(self.widths) != n:
                raise ConfigurationError("gaussian_mixture needs matching amplitudes/centers/widths")
            if any(w <= 0 for w in self.widths):
                raise ConfigurationError("gaussian widths must be positive")
        if self.kind == "radial_profile":
            if len(self.knots) == 0 or len(self.knots) != len(self.levels):
                raise ConfigurationError("radial_profile needs matching knots and levels")
            if any(b <= a for a, b in zip((0.0,) + tuple(self.knots), self.knots)):
                raise ConfigurationError("radial knots must be positive and increasing")
        if self.kind == "grid_samples" and (self.grid is None or self.support_radius is None):
            raise ConfigurationError("grid_samples needs a grid descriptor and a support radius")

    # constructors -------------------------------------------------------
    @classmethod
    def zero(cls) -> "PotentialSpec":
        return cls("zero")

    @classmethod
    def gaussian(cls, amplitude: float, width: float, center=(0.0, 0.0),
                 support_radius: float | None = None) -> "PotentialSpec":
        return cls("gaussian_mixture", amplitudes=(float(amplitude),),
                   centers=((float(center[0]), float(center[1])),), widths=(float(width),),
                   support_radius=support_radius)

    @classmethod
    def radial_step(cls, radius: float, height: float) -> "PotentialSpec":
        return cls("radial_profile", knots=(float(radius),), levels=(float(height),))

    @classmethod
    def constant(cls, value: float, radius: float) -> "PotentialSpec":
        return cls.radial_step(radius, value)

    # queries ------------------------------------------------------------
    def resolved_support(self, domain: Domain) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "radial_profile":
            return float(self.knots[-1])
        if self.support_radius is not None:
            return float(self.support_radius)
        return DEFAULT_SUPPORT_FRACTION * domain.radius

    def breakpoints(self, domain: Domain) -> tuple[float, ...]:
        """Radii where the potential is discontinuous."""
        if self.kind == "zero":
            return ()
        if self.kind == "radial_profile":
            return tuple(float(k) for k in self.knots)
        if self.kind == "grid_samples":
            return tuple(self.grid.get("breakpoints", ()))
        return (self.resolved_support(domain),)

    @property
    def is_radial(self) -> bool:
        if self.kind in ("zero", "radial_profile"):
            return True
        if self.kind == "gaussian_mixture":
            return all(c[0] == 0.0 and c[1] == 0.0 for c in self.centers)
        return False

    def radial_profile(self, r: np.ndarray, domain: Domain) -> np.ndarray:
        """v as a function of radius, for radial specs."""
        if not self.is_radial:
            raise ValidationError("potential is not radial")
        r = np.asarray(r, dtype=float)
        pts = np.column_stack([r.ravel(), np.zeros(r.size)])
        return self.evaluate(pts, domain).reshape(r.shape)

    def evaluate(self, points: np.ndarray, domain: Domain) -> np.ndarray:
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        r = np.hypot(points[:, 0], points[:, 1])
        if self.kind == "zero":
            return np.zeros(len(points))
        if self.kind == "radial_profile":
            idx = np.searchsorted(np.asarray(self.knots), r, side="right")
            levels = np.append(np.asarray(self.levels, dtype=float), 0.0)
            return levels[idx]
        if self.kind == "gaussian_mixture":
            out = np.zeros(len(points))
            for a, c, s in zip(self.amplitudes, self.centers, self.widths):
                d2 = (points[:, 0] - c[0]) ** 2 + (points[:, 1] - c[1]) ** 2
                out += a * np.exp(-d2 / (2.0 * s * s))
            out[r >= self.resolved_support(domain)] = 0.0
            return out
        raise ValidationError("grid_samples potentials can only be read on their own grid")

    def to_json(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "gaussian_mixture":
            d["amplitudes"] = list(self.amplitudes)
            d["centers"] = [list(c) for c in self.centers]
            d["widths"] = list(self.widths)
            d["support_radius"] = self.support_radius
        elif self.kind == "radial_profile":
            d["knots"] = list(self.knots)
            d["levels"] = list(self.levels)
        elif self.kind == "grid_samples":
            d["samples"] = list(self.samples)
            d["grid"] = self.grid
            d["support_radius"] = self.support_radius
        return d

    @classmethod
    def from_json(cls, d: dict) -> "PotentialSpec":
        allowed = {"kind", "amplitudes", "centers", "widths", "knots", "levels",
                   "support_radius", "samples", "grid"}
        extra = set(d) - allowed
        if extra:
            raise ConfigurationError(f"unknown potential keys: {sorted(extra)}")
        kind = d.get("kind", "zero")
        return cls(kind,
                   amplitudes=tuple(float(a) for a in d.get("amplitudes", ())),
                   centers=tuple((float(c[0]), float(c[1])) for c in d.get("centers", ())),
                   widths=tuple(float(w) for w in d.get("widths", ())),
                   knots=tuple(float(k) for k in d.get("knots", ())),
                   levels=tuple(float(v) for v in d.get("levels", ())),
                   support_radius=d.get("support_radius"),
                   samples=tuple(float(v) for v in d.get("samples", ())),
                   grid=d.get("grid"))

    @property
    def ident(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return f"{self.kind}:{hashlib.sha1(blob).hexdigest()[:12]}"


@dataclass(frozen=True, eq=False)
class PotentialField:
    values: np.ndarray
    support_radius: float
    spec: PotentialSpec
    grid: VolumeGrid

    @property
    def is_zero(self) -> bool:
        return not np.any(self.values)

    @property
    def is_radial(self) -> bool:
        return self.spec.is_radial

    @property
    def ident(self) -> str:
        return self.spec.ident

    def active_mask(self) -> np.ndarray:
        return self.grid.active_mask(self.support_radius)

    def radial_profile(self, r):
        return self.spec.radial_profile(r, self.grid.domain)


def sample_potential(spec: PotentialSpec, grid: VolumeGrid) -> PotentialField:
    domain = grid.domain
    support = spec.resolved_support(domain)
    if support >= domain.radius:
        raise ValidationError(
            f"potential support radius {support} touches the boundary (radius {domain.radius})")
    missing = [b for b in spec.breakpoints(domain) if not any(abs(b - e) < 1e-12 for e in grid.breakpoints)]
    if missing:
        raise ValidationError(f"volume grid lacks radial breakpoints {missing} needed by the potential")
    if spec.kind == "grid_samples":
        if spec.grid != grid.descriptor():
            raise ValidationError("grid_samples potential was recorded on a different grid")
        values = np.asarray(spec.samples, dtype=float)
        if values.shape != (grid.size,):
            raise ValidationError("grid_samples length does not match the grid")
        values = np.where(np.repeat(grid.radii < support, grid.n_theta), values, 0.0)
    else:
        values = spec.evaluate(grid.nodes, domain)
    if not np.all(np.isfinite(values)):
        raise ValidationError("potential has non-finite samples")
    values = np.array(values, dtype=float)
    values.setflags(write=False)
    return PotentialField(values, support, spec, grid)


def grid_for_potentials(domain: Domain, n_r: int, n_theta: int,
                        *specs: PotentialSpec) -> VolumeGrid:
    """Volume grid whose panels break at every discontinuity of the given potentials."""
    bps: list[float] = []
    for s in specs:
        bps.extend(s.breakpoints(domain))
    return build_volume_grid(domain, n_r, n_theta, bps)


def fourier_transform_potential(v: PotentialField, p) -> complex | np.ndarray:
    """v̂(p) = ∫ e^{-ip·x} v(x) dx by volume quadrature.  p may be (2,) or (..., 2)."""
    p = np.asarray(p, dtype=float)
    flat = p.reshape(-1, 2)
    keep = v.values != 0
    nodes = v.grid.nodes[keep]
    wv = (v.grid.weights * v.values)[keep]
    out = np.zeros(len(flat), dtype=complex)
    # blocks of about 2^21 phase entries keep memory bounded for large p sets
    step = max(1, (1 << 21) // max(len(wv), 1))
    for i in range(0, len(flat), step):
        phase = flat[i:i + step] @ nodes.T
        out[i:i + step] = np.cos(phase) @ wv - 1j * (np.sin(phase) @ wv)
    return complex(out[0]) if p.ndim == 1 else out.reshape(p.shape[:-1])


def radial_fourier_transform(spec: PotentialSpec, domain: Domain, p_abs,
                             nodes_per_panel: int = 96) -> np.ndarray:
    """Hankel-transform route for radial specs: v̂(|p|) = 2π ∫ v(r) J0(|p|r) r dr.

    Integrates panel-wise between discontinuities, so truncation of the
    Gaussian at its support radius is included exactly.
    """
    if not spec.is_radial:
        raise ValidationError("radial transform needs a radial potential")
    p_abs = np.asarray(p_abs, dtype=float)
    if spec.kind == "zero":
        return np.zeros(p_abs.shape)
    support = spec.resolved_support(domain)
    edges = (0.0,) + tuple(b for b in spec.breakpoints(domain) if b < support) + (support,)
    total = np.zeros(p_abs.size)
    for a, b in zip(edges[:-1], edges[1:]):
        r, w = _gauss_panel(a, b, nodes_per_panel)
        vr = spec.radial_profile(r, domain)
        total += special.j0(np.outer(p_abs.ravel(), r)) @ (w * r * vr)
    return 2.0 * np.pi * total.reshape(p_abs.shape)


def gaussian_transform(amplitude: float, width: float, p_abs) -> np.ndarray:
    """Closed-form transform of an untruncated centred Gaussian: a·2πσ²·exp(-σ²|p|²/2)."""
    p_abs = np.asarray(p_abs, dtype=float)
    return amplitude * 2.0 * np.pi * width ** 2 * np.exp(-0.5 * (width * p_abs) ** 2)


@dataclass(frozen=True, eq=False)
class Discretization:
    """Boundary grid, volume grid and the radius inside which potentials live.

    Volume unknowns of every Fredholm system are restricted to the "active"
    nodes (radius < active_radius).  Keeping active_radius below the domain
    radius makes every boundary-to-active kernel smooth.
    """

    boundary: BoundaryGrid
    volume: VolumeGrid
    active_radius: float

    def __post_init__(self):
        if not (0.0 < self.active_radius < self.volume.domain.radius):
            raise ValidationError("active radius must lie strictly inside the domain")
        if not self.boundary.domain == self.volume.domain:
            raise ValidationError("boundary and volume grids live on different domains")

    @property
    def domain(self) -> Domain:
        return self.volume.domain

    @cached_property
    def active_radial(self) -> np.ndarray:
        return self.volume.radial_mask(self.active_radius)

    @cached_property
    def active(self) -> np.ndarray:
        return self.volume.active_mask(self.active_radius)

    @cached_property
    def active_radii(self) -> np.ndarray:
        return self.volume.radii[self.active_radial]

    @cached_property
    def active_nodes(self) -> np.ndarray:
        return self.volume.nodes[self.active]

    @cached_property
    def active_weights(self) -> np.ndarray:
        return self.volume.weights[self.active]

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    @cached_property
    def active_panels(self) -> list[tuple[float, float]]:
        return [p for p in self.volume.panels if p[1] <= self.active_radius + 1e-14]

    def restrict(self, field: PotentialField) -> np.ndarray:
        if not field.grid.same_as(self.volume):
            raise ValidationError("potential sampled on a different volume grid")
        if field.support_radius > self.active_radius + 1e-14:
            raise ValidationError(
                f"potential support {field.support_radius} exceeds active radius {self.active_radius}")
        return np.asarray(field.values)[self.active]

    def descriptor(self) -> dict:
        return {"boundary": self.boundary.descriptor(), "volume": self.volume.descriptor(),
                "active_radius": self.active_radius}

    def same_as(self, other: "Discretization") -> bool:
        return other is self or other.descriptor() == self.descriptor()


def make_discretization(domain: Domain, n: int, n_r: int, n_theta: int,
                        *specs: PotentialSpec, active_radius: float | None = None) -> Discretization:
    """Grids sized for the given potentials; active radius = largest support."""
    supports = [s.resolved_support(domain) for s in specs if s.kind != "zero"]
    if active_radius is None:
        active_radius = max(supports) if supports else DEFAULT_SUPPORT_FRACTION * domain.radius
    bps = [active_radius]
    for s in specs:
        bps.extend(s.breakpoints(domain))
    volume = build_volume_grid(domain, n_r, n_theta, bps)
    return Discretization(build_boundary_grid(domain, n), volume, float(active_radius))
