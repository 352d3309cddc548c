"""Potential models, gradients, effective supports and moment integrals.

Conventions: ``H = -Laplacian + V`` in units where hbar^2/2m = 1, so energies
and squared wavenumbers share units.  Wells are negative: ``V0 > 0`` is the
depth.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import NotDifferentiable, QuadratureNotConverged

SUPPORT_CUTOFF = 1e-10
KINDS = ("gaussian-well", "polynomial-bump", "square-well", "grid-sampled")

GRID_MAGIC = b"DSCP"
GRID_VERSION = 1
_HEADER = struct.Struct("<4sI3I3d3d")


@dataclass(frozen=True)
class GridData:
    """Samples on a regular grid; ``values[ix, iy, iz]``."""

    values: np.ndarray
    origin: tuple
    spacing: tuple

    @property
    def shape(self):
        return self.values.shape

    def axes(self):
        return [self.origin[d] + self.spacing[d] * np.arange(self.shape[d]) for d in range(3)]


@dataclass(frozen=True, eq=False)
class Potential:
    """A real potential on R^3.

    ``width`` is sigma for the Gaussian well and the radius ``a`` for the
    bump and the square well.
    """

    kind: str
    depth: float = 0.0
    width: float = 1.0
    center: tuple = (0.0, 0.0, 0.0)
    grid: Optional[GridData] = None
    support_cutoff: float = SUPPORT_CUTOFF

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind == "grid-sampled" and self.grid is None:
            raise ValueError("grid-sampled potential needs grid data")
        if self.kind != "grid-sampled" and self.width <= 0:
            raise ValueError("width must be positive")

    # -- metadata ---------------------------------------------------------
    @property
    def smooth(self) -> bool:
        """C^2 flag; the square well is the declared exception."""
        return self.kind != "square-well"

    @property
    def radial(self) -> bool:
        return self.kind != "grid-sampled"

    @property
    def is_zero(self) -> bool:
        if self.kind == "grid-sampled":
            return not np.any(self.grid.values)
        return self.depth == 0.0

    @property
    def r_eff(self) -> float:
        """Radius beyond which |V| <= support_cutoff * max|V| (about ``center``)."""
        if self.kind == "gaussian-well":
            return self.width * float(np.sqrt(np.log(1.0 / self.support_cutoff)))
        if self.kind in ("polynomial-bump", "square-well"):
            return self.width
        g = self.grid
        vmax = np.max(np.abs(g.values))
        if vmax == 0:
            return float(np.max(np.abs(g.spacing)))
        mask = np.abs(g.values) > self.support_cutoff * vmax
        X, Y, Z = np.meshgrid(*g.axes(), indexing="ij")
        c = np.asarray(self.center)
        dist = np.sqrt((X - c[0]) ** 2 + (Y - c[1]) ** 2 + (Z - c[2]) ** 2)
        return float(dist[mask].max() + np.linalg.norm(g.spacing))

    @property
    def core_radius(self) -> float:
        """Radius holding |V| >= 1e-6 max|V|; sets partial-wave counts."""
        if self.kind == "gaussian-well":
            return self.width * float(np.sqrt(np.log(1e6)))
        return self.r_eff

    def spec(self) -> dict:
        """JSON-compatible description (used for cache keys and configs)."""
        if self.kind == "grid-sampled":
            g = self.grid
            digest = __import__("hashlib").sha256(
                np.ascontiguousarray(g.values, dtype="<f8").tobytes()
            ).hexdigest()
            return {"kind": self.kind, "origin": list(g.origin), "spacing": list(g.spacing),
                    "shape": list(g.shape), "sha256": digest, "center": list(self.center)}
        return {"kind": self.kind, "depth": self.depth, "width": self.width,
                "center": list(self.center)}

    # -- evaluation -------------------------------------------------------
    def radial_value(self, r):
        r = np.asarray(r, dtype=float)
        V0, w = self.depth, self.width
        if self.kind == "gaussian-well":
            return -V0 * np.exp(-((r / w) ** 2))
        if self.kind == "polynomial-bump":
            u = np.clip(1.0 - (r / w) ** 2, 0.0, None)
            return -V0 * u**3
        if self.kind == "square-well":
            return np.where(r <= w, -V0, 0.0)
        raise TypeError("grid-sampled potentials are not radial")

    def radial_derivative(self, r):
        """dV/dr for the smooth radial models."""
        if not self.smooth:
            raise NotDifferentiable(f"{self.kind} is not C^2")
        r = np.asarray(r, dtype=float)
        V0, w = self.depth, self.width
        if self.kind == "gaussian-well":
            return 2.0 * V0 * r / w**2 * np.exp(-((r / w) ** 2))
        if self.kind == "polynomial-bump":
            u = np.clip(1.0 - (r / w) ** 2, 0.0, None)
            return 6.0 * V0 * r / w**2 * u**2
        raise TypeError("grid-sampled potentials are not radial")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "grid-sampled":
            return _trilinear(self.grid, x)
        r = np.linalg.norm(x - np.asarray(self.center), axis=-1)
        return self.radial_value(r)


def gaussian_well(depth: float, sigma: float = 1.0, center=(0.0, 0.0, 0.0)) -> Potential:
    return Potential("gaussian-well", float(depth), float(sigma), tuple(center))


def polynomial_bump(depth: float, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> Potential:
    return Potential("polynomial-bump", float(depth), float(radius), tuple(center))


def square_well(depth: float, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> Potential:
    return Potential("square-well", float(depth), float(radius), tuple(center))


def zero_potential() -> Potential:
    return gaussian_well(0.0, 1.0)


def from_spec(spec: dict, base_dir: Path | None = None) -> Potential:
    """Build a potential from a config mapping (see the CLI config format)."""
    kind = spec["kind"]
    center = tuple(spec.get("center", (0.0, 0.0, 0.0)))
    if kind == "zero":
        return zero_potential()
    if kind == "grid-sampled":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return read_grid_file(path, center=center)
    return Potential(kind, float(spec["depth"]), float(spec.get("width", 1.0)), center)


# -- spec-level operations -----------------------------------------------------
def evaluate(potential: Potential, x) -> float:
    return float(potential(np.asarray(x, dtype=float)))


def gradient(potential: Potential, x) -> np.ndarray:
    """Closed-form gradient; central differences with h = spacing/2 on grids."""
    if not potential.smooth:
        raise NotDifferentiable(f"{potential.kind} is not C^2")
    x = np.asarray(x, dtype=float)
    if potential.kind == "grid-sampled":
        out = np.empty(x.shape)
        for d in range(3):
            h = 0.5 * potential.grid.spacing[d]
            e = np.zeros(3)
            e[d] = h
            out[..., d] = (potential(x + e) - potential(x - e)) / (2 * h)
        return out
    rel = x - np.asarray(potential.center)
    r = np.linalg.norm(rel, axis=-1)
    dvdr = potential.radial_derivative(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0, dvdr / np.where(r > 0, r, 1.0), 0.0)
    return rel * np.asarray(scale)[..., None]


def split_weights(potential_or_value, x=None):
    """Return ``(|V|^{1/2}, V/|V|^{1/2})`` with both zero where V = 0.

    Accepts either a potential and a position or raw potential values.
    """
    if x is None:
        v = np.asarray(potential_or_value, dtype=float)
    else:
        v = np.asarray(potential_or_value(np.asarray(x, dtype=float)), dtype=float)
    mag = np.sqrt(np.abs(v))
    return mag, np.sign(v) * mag


@dataclass(frozen=True)
class Moments:
    """Coefficients of the large-k expansion of log D.

    ``alpha_m1 = (1/4 pi) int V``, ``alpha_0 = (1/16 pi) int V^2`` and
    ``alpha_1 = (1/192 pi) int (|grad V|^2 + 2 V^3)``.  These are the
    normalizations for which ``-i log D(k) = -alpha_0/k - alpha_1/k^3 + ...``
    holds with the free kernel ``e^{ik|x-y|} / (4 pi |x-y|)``; ``int V^2``
    enters through ``Tr Q0(k)^2 ~ i int V^2 / (8 pi k)``.
    """

    alpha_m1: float
    alpha_0: float
    alpha_1: float
    errors: tuple = field(default=(0.0, 0.0, 0.0))

    def as_dict(self):
        return {"alpha_m1": self.alpha_m1, "alpha_0": self.alpha_0, "alpha_1": self.alpha_1,
                "errors": list(self.errors)}


def _radial_moments(p: Potential, n: int, with_alpha1: bool):
    x, w = np.polynomial.legendre.leggauss(n)
    R = p.r_eff
    r = 0.5 * R * (x + 1.0)
    w = 0.5 * R * w
    v = p.radial_value(r)
    am1 = np.sum(w * r**2 * v)
    a0 = np.sum(w * r**2 * v**2) / 4.0
    a1 = np.nan
    if with_alpha1:
        dv = p.radial_derivative(r)
        a1 = np.sum(w * r**2 * (dv**2 + 2 * v**3)) / 48.0
    return np.array([am1, a0, a1])


def _grid_moments(p: Potential, refine: int, with_alpha1: bool):
    g = p.grid
    if refine == 1:
        vals = g.values
        spacing = np.asarray(g.spacing, dtype=float)
    else:
        axes = [np.linspace(a[0], a[-1], refine * (len(a) - 1) + 1) for a in g.axes()]
        X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = _trilinear(g, X)
        spacing = np.asarray(g.spacing, dtype=float) / refine
    cell = float(np.prod(spacing))
    wts = np.ones(vals.shape)
    for d in range(3):
        sl = [slice(None)] * 3
        sl[d] = 0
        wts[tuple(sl)] *= 0.5
        sl[d] = -1
        wts[tuple(sl)] *= 0.5
    wts *= cell
    am1 = np.sum(wts * vals) / (4 * np.pi)
    a0 = np.sum(wts * vals**2) / (16 * np.pi)
    a1 = np.nan
    if with_alpha1:
        grads = np.gradient(vals, *spacing)
        g2 = sum(gi**2 for gi in grads)
        a1 = np.sum(wts * (g2 + 2 * vals**3)) / (192 * np.pi)
    return np.array([am1, a0, a1])


def moments(potential: Potential, n: int = 96, rtol: float = 1e-7,
            include_alpha1: Optional[bool] = None) -> Moments:
    """alpha_{-1}, alpha_0, alpha_1 with an error estimate from one refinement.

    ``include_alpha1=None`` computes alpha_1 only for C^2 potentials (NaN
    otherwise); ``True`` on a non-smooth potential raises NotDifferentiable.
    """
    if include_alpha1 is None:
        include_alpha1 = potential.smooth
    elif include_alpha1 and not potential.smooth:
        raise NotDifferentiable("alpha_1 needs a C^2 potential")
    if potential.is_zero:
        return Moments(0.0, 0.0, 0.0 if include_alpha1 else np.nan)
    if potential.radial:
        coarse = _radial_moments(potential, n, include_alpha1)
        fine = _radial_moments(potential, 2 * n, include_alpha1)
        err = np.abs(fine - coarse)
        scale = np.abs(fine)
        bad = np.nan_to_num(err) > rtol * np.maximum(np.nan_to_num(scale), 1e-300)
        if np.any(bad):
            raise QuadratureNotConverged(f"moment refinement changed values by {err}")
    else:
        # grid data carry their own discretization error; report it, don't gate on it
        coarse = _grid_moments(potential, 1, include_alpha1)
        fine = _grid_moments(potential, 2, include_alpha1)
        err = np.abs(fine - coarse)
        fine = coarse
    return Moments(float(fine[0]), float(fine[1]), float(fine[2]),
                   tuple(float(e) for e in np.nan_to_num(err)))


# -- grid-sampled potentials ---------------------------------------------------
def _trilinear(g: GridData, x: np.ndarray):
    x = np.asarray(x, dtype=float)
    shape = np.asarray(g.shape)
    u = (x - np.asarray(g.origin)) / np.asarray(g.spacing)
    inside = np.all((u >= 0) & (u <= shape - 1), axis=-1)
    i0 = np.clip(np.floor(u).astype(int), 0, np.maximum(shape - 2, 0))
    f = np.clip(u - i0, 0.0, 1.0)
    out = np.zeros(x.shape[:-1])
    vals = g.values
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                ix = np.minimum(i0[..., 0] + dx, shape[0] - 1)
                iy = np.minimum(i0[..., 1] + dy, shape[1] - 1)
                iz = np.minimum(i0[..., 2] + dz, shape[2] - 1)
                wgt = ((f[..., 0] if dx else 1 - f[..., 0])
                       * (f[..., 1] if dy else 1 - f[..., 1])
                       * (f[..., 2] if dz else 1 - f[..., 2]))
                out = out + wgt * vals[ix, iy, iz]
    return np.where(inside, out, 0.0)


def sample_to_grid(potential: Potential, n: int, half_width: Optional[float] = None) -> Potential:
    """Sample an analytic potential on an n^3 grid covering its support."""
    L = potential.r_eff if half_width is None else half_width
    c = np.asarray(potential.center)
    axes = [np.linspace(c[d] - L, c[d] + L, n) for d in range(3)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    h = 2 * L / (n - 1)
    data = GridData(potential(X), tuple(c - L), (h, h, h))
    return Potential("grid-sampled", grid=data, center=tuple(c))


def write_grid_file(path, potential: Potential) -> None:
    g = potential.grid
    nx, ny, nz = g.shape
    header = _HEADER.pack(GRID_MAGIC, GRID_VERSION, nx, ny, nz, *g.origin, *g.spacing)
    # x-fastest order == Fortran order of values[ix, iy, iz]
    body = np.asarray(g.values, dtype="<f8").ravel(order="F").tobytes()
    Path(path).write_bytes(header + body)


def read_grid_file(path, center=(0.0, 0.0, 0.0)) -> Potential:
    raw = Path(path).read_bytes()
    magic, version, nx, ny, nz, *rest = _HEADER.unpack_from(raw)
    if magic != GRID_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    if version != GRID_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    origin, spacing = tuple(rest[:3]), tuple(rest[3:])
    count = nx * ny * nz
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size)
    if data.size != count:
        raise ValueError(f"{path}: truncated payload")
    values = data.reshape((nx, ny, nz), order="F").astype(float)
    return Potential("grid-sampled", grid=GridData(values, origin, spacing), center=tuple(center))
