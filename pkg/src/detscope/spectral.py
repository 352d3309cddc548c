"""Bound states, resonances and the Hadamard factorization of D.

For radial potentials ``D(k) = e^{h(k)} prod_l d_l(k)^(2l+1)`` where
``d_l = det(I + Q0_l)`` is the Fredholm determinant of wave ``l`` and ``h``
is entire without zeros.  Zeros are therefore counted and refined wave by
wave: the argument-principle integral is a vector over waves, and every zero
carries the multiplicity ``2l + 1``.  Tensor-scheme grids have a single
"wave" of multiplicity one.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad_vec
from scipy.optimize import brentq

from .determinant import DetEngine
from .discretize import QuadratureGrid, assemble_pair, assemble_q0, kappa_max
from .errors import BoundaryNearZero, DepthLimitExceeded, ZeroAtOrigin
from .potential import Potential

ZERO_RESIDUAL_TOL = 1e-8
NEWTON_MAX_ITER = 50
EXTRA_LEVELS = 3
MAX_DEPTH = 14
MAX_NUDGES = 5
NUDGE_FRACTION = 0.03
BOUNDARY_SAFETY = 1e-6
INTEGER_TOL = 0.1
# off-centre split points keep cell edges away from the symmetry axis
SPLIT_X = 0.4871
SPLIT_Y = 0.5123


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Region:
    """Closed rectangle ``[re_min, re_max] x [im_min, im_max]``."""

    re_min: float
    re_max: float
    im_min: float
    im_max: float

    def __post_init__(self):
        if not (self.re_min < self.re_max and self.im_min < self.im_max):
            raise ValueError(f"degenerate region {self}")

    @property
    def corners(self) -> Tuple[complex, complex, complex, complex]:
        return (complex(self.re_min, self.im_min), complex(self.re_max, self.im_min),
                complex(self.re_max, self.im_max), complex(self.re_min, self.im_max))

    @property
    def size(self) -> float:
        return max(self.re_max - self.re_min, self.im_max - self.im_min)

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_min + self.re_max), 0.5 * (self.im_min + self.im_max))

    def contains(self, k: complex, pad: float = 0.0) -> bool:
        return (self.re_min - pad <= k.real <= self.re_max + pad
                and self.im_min - pad <= k.imag <= self.im_max + pad)

    def split(self) -> List["Region"]:
        xm = self.re_min + SPLIT_X * (self.re_max - self.re_min)
        ym = self.im_min + SPLIT_Y * (self.im_max - self.im_min)
        return [Region(self.re_min, xm, self.im_min, ym), Region(xm, self.re_max, self.im_min, ym),
                Region(self.re_min, xm, ym, self.im_max), Region(xm, self.re_max, ym, self.im_max)]

    def mirrored(self) -> "Region":
        return Region(-self.re_max, -self.re_min, self.im_min, self.im_max)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BoundState:
    sqrt_lambda: float
    multiplicity: int
    residual: float
    ell: Optional[int] = None
    bs_crossing: Optional[float] = None

    @property
    def energy(self) -> float:
        return -self.sqrt_lambda**2

    @property
    def k(self) -> complex:
        return 1j * self.sqrt_lambda


@dataclass
class Resonance:
    k: complex
    multiplicity: int
    residual: float
    ell: Optional[int] = None

    def to_dict(self) -> dict:
        return {"re": self.k.real, "im": self.k.imag, "multiplicity": self.multiplicity,
                "residual": self.residual, "ell": self.ell}


@dataclass
class SpectralCatalog:
    bound_states: List[BoundState]
    resonances: List[Resonance]
    search_region: Optional[Region]
    completeness_count: int

    @property
    def N(self) -> int:
        return int(sum(b.multiplicity for b in self.bound_states))

    def bound_state_momenta(self) -> List[float]:
        """sqrt(lambda_j) repeated by multiplicity."""
        out = []
        for b in self.bound_states:
            out.extend([b.sqrt_lambda] * b.multiplicity)
        return out

    def zeros(self, radius: Optional[float] = None) -> List[Tuple[complex, int]]:
        """All zeros of D (bound states and resonances) with |k| <= radius."""
        z = [(b.k, b.multiplicity) for b in self.bound_states]
        z += [(r.k, r.multiplicity) for r in self.resonances]
        if radius is not None:
            z = [(k, m) for k, m in z if abs(k) <= radius]
        return z

    def mirror_defect(self) -> float:
        """Largest distance from a resonance's mirror -conj(k) to the catalog."""
        ks = np.array([r.k for r in self.resonances])
        if ks.size == 0:
            return 0.0
        mirror = -np.conj(ks)
        return float(max(np.min(np.abs(ks - m)) for m in mirror))

    def to_dict(self) -> dict:
        return {
            "bound_states": [asdict(b) for b in self.bound_states],
            "resonances": [r.to_dict() for r in self.resonances],
            "search_region": None if self.search_region is None else self.search_region.to_dict(),
            "completeness_count": self.completeness_count,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralCatalog":
        bs = [BoundState(**b) for b in d["bound_states"]]
        rs = [Resonance(complex(r["re"], r["im"]), r["multiplicity"], r["residual"], r.get("ell"))
              for r in d["resonances"]]
        reg = None if d["search_region"] is None else Region(**d["search_region"])
        return cls(bs, rs, reg, d["completeness_count"])


# ---------------------------------------------------------------------------
# per-wave determinants
# ---------------------------------------------------------------------------
@dataclass
class WaveValues:
    k: complex
    logdet: np.ndarray  # log d_l(k), principal per wave
    dlog: np.ndarray  # d_l'(k) / d_l(k)
    multiplicity: np.ndarray


class WaveEngine:
    """Per-wave Fredholm determinants ``d_l(k) = det(I + Q0_l(k))`` on one grid.

    The number of waves is fixed at construction so that counts from
    different contours refer to the same set of functions.
    """

    def __init__(self, grid: QuadratureGrid, lmax: Optional[int] = None):
        self.grid = grid
        self.lmax = grid.lmax_for(0.0) if lmax is None else lmax
        self._cache: Dict[complex, WaveValues] = {}

    def __call__(self, k: complex) -> WaveValues:
        k = complex(k)
        hit = self._cache.get(k)
        if hit is not None:
            return hit
        q0, dq0 = assemble_pair(self.grid, k, lmax=self.lmax)
        n = q0.size
        A = np.eye(n)[None] + q0.blocks
        sign, logabs = np.linalg.slogdet(A)
        with np.errstate(divide="ignore"):
            logdet = np.log(sign.astype(complex)) + logabs
        try:
            X = np.linalg.solve(A, dq0.blocks)
            dlog = np.trace(X, axis1=1, axis2=2)
        except np.linalg.LinAlgError:
            dlog = np.full(A.shape[0], np.inf + 0j)
        wv = WaveValues(k, logdet, dlog, q0.multiplicity.astype(int))
        self._cache[k] = wv
        return wv

    def eigenvalues(self, k: complex) -> np.ndarray:
        return np.linalg.eigvals(assemble_q0(self.grid, k=k, lmax=self.lmax).blocks)

    @property
    def nwaves(self) -> int:
        return 1 if self.grid.scheme == "tensor" else self.lmax + 1


def _wave_engine(grid, potential, lmax) -> WaveEngine:
    if isinstance(grid, WaveEngine):
        return grid
    if potential is not None and potential.spec() != grid.potential.spec():
        raise ValueError("grid was built for a different potential")
    return WaveEngine(grid, lmax)


# ---------------------------------------------------------------------------
# argument principle
# ---------------------------------------------------------------------------
def _edge_integral(engine: WaveEngine, a: complex, b: complex, epsabs: float) -> np.ndarray:
    """int_a^b d_l'/d_l dk for every wave, canonical orientation."""
    flip = (a.real, a.imag) > (b.real, b.imag)
    if flip:
        a, b = b, a
    d = b - a
    nw = engine.nwaves

    def f(s):
        v = engine(a + d * s).dlog * d
        return np.concatenate([v.real, v.imag])

    val, _ = quad_vec(f, 0.0, 1.0, epsabs=epsabs, epsrel=1e-6, norm="max", limit=200)
    out = val[:nw] + 1j * val[nw:]
    return -out if flip else out


def _boundary_min_ratio(engine: WaveEngine, region: Region, per_unit: float = 8.0) -> float:
    """min over waves of min_boundary |d_l| / max_boundary |d_l| on a coarse sample."""
    c = region.corners
    pts = []
    for a, b in zip(c, c[1:] + c[:1]):
        n = max(4, int(np.ceil(abs(b - a) * per_unit)))
        pts.extend(a + (b - a) * np.arange(n) / n)
    logs = np.array([engine(k).logdet.real for k in pts])
    spread = logs.min(axis=0) - logs.max(axis=0)
    active = np.isfinite(spread)
    if not np.all(active):
        return 0.0
    return float(np.exp(spread.min()))


def _nudge(region: Region, step: float) -> Region:
    """Move every edge outwards by ``step`` (the top edge moves inwards when it
    sits on or above the real axis, so bound states never enter)."""
    top = region.im_max - step if region.im_max >= 0 else region.im_max + step
    return Region(region.re_min - step, region.re_max + step, region.im_min - step, top)


@dataclass
class ZeroCount:
    total: int
    per_wave: np.ndarray
    region: Region
    raw: np.ndarray
    nudges: int = 0


def count_zeros_detail(region: Region, grid, potential: Optional[Potential] = None,
                       lmax: Optional[int] = None, epsabs: float = 0.05,
                       check_depth: bool = True) -> ZeroCount:
    """Argument-principle zero count of every wave determinant inside ``region``."""
    engine = _wave_engine(grid, potential, lmax)
    if engine.grid.potential.is_zero:
        return ZeroCount(0, np.zeros(engine.nwaves, dtype=int), region, np.zeros(engine.nwaves))
    if check_depth and region.im_min < -kappa_max(engine.grid):
        raise DepthLimitExceeded(
            f"region depth {-region.im_min:.3g} exceeds kappa_max {kappa_max(engine.grid):.3g}")
    current = region
    for nudge in range(MAX_NUDGES + 1):
        if _boundary_min_ratio(engine, current) > BOUNDARY_SAFETY:
            c = current.corners
            total = sum(_edge_integral(engine, a, b, epsabs) for a, b in zip(c, c[1:] + c[:1]))
            raw = (total / (2j * np.pi)).real
            counts = np.rint(raw)
            if np.all(np.abs(raw - counts) < INTEGER_TOL):
                counts = counts.astype(int)
                mult = engine(c[0]).multiplicity
                return ZeroCount(int(np.sum(mult * counts)), counts, current, raw, nudge)
        current = _nudge(current, NUDGE_FRACTION * region.size)
    raise BoundaryNearZero(f"could not find a clean boundary near {region}")


def count_zeros(region: Region, grid, potential: Optional[Potential] = None,
                lmax: Optional[int] = None) -> int:
    """Number of zeros of D (with multiplicity) inside ``region``."""
    return count_zeros_detail(region, grid, potential, lmax).total


# ---------------------------------------------------------------------------
# resonances
# ---------------------------------------------------------------------------
def _newton(engine: WaveEngine, wave: int, k0: complex, mult: int = 1,
            tol: float = 1e-13) -> Tuple[complex, bool]:
    k = complex(k0)
    for _ in range(NEWTON_MAX_ITER):
        d = engine(k).dlog[wave]
        if not np.isfinite(d) or d == 0:
            return k, True
        step = mult / d
        k = k - step
        if abs(step) < tol * max(1.0, abs(k)):
            return k, True
    return k, False


def _residual(engine: WaveEngine, wave: int, k: complex, region: Region) -> float:
    """|d_l(k)| relative to the largest |d_l| at the cell's corners and edge midpoints."""
    c = region.corners
    probes = list(c) + [0.5 * (a + b) for a, b in zip(c, c[1:] + c[:1])]
    ref = max(engine(p).logdet[wave].real for p in probes)
    val = engine(k).logdet[wave].real
    if not np.isfinite(val):
        return 0.0
    return float(np.exp(val - ref))


def find_resonances(region: Region, grid, potential: Optional[Potential] = None,
                    lmax: Optional[int] = None, bound_states: Sequence[BoundState] = (),
                    newton_tol: float = 1e-13, zero_residual: float = ZERO_RESIDUAL_TOL,
                    epsabs: float = 0.05) -> SpectralCatalog:
    """Zeros of D in ``region`` (must lie in Im k < 0) by subdivision and Newton.

    A Newton limit counts as a zero when its relative step is below
    ``newton_tol`` and ``|d_l(k)|`` relative to the cell corners is below
    ``zero_residual``; ``epsabs`` is the absolute tolerance of the
    argument-principle edge integrals.
    """
    if region.im_max > 0:
        raise ValueError("resonance regions must lie in the closed lower half-plane")
    if lmax is None and isinstance(grid, QuadratureGrid):
        lmax = grid.lmax_for(max(abs(c) for c in region.corners))
    engine = _wave_engine(grid, potential, lmax)
    top = count_zeros_detail(region, engine, epsabs=epsabs)
    active = np.nonzero(top.per_wave)[0]
    if engine.grid.scheme != "tensor" and len(active) and active[-1] < engine.lmax:
        # waves without zeros in the region play no further part, and the
        # blocks of the remaining waves do not depend on the truncation
        engine = WaveEngine(engine.grid, int(active[-1]))
        top = ZeroCount(top.total, top.per_wave[:engine.nwaves], top.region,
                        top.raw[:engine.nwaves], top.nudges)
    found: List[Resonance] = []
    queue = [(top.region, top.per_wave, 0, None)]
    while queue:
        cell, counts, depth, multi_since = queue.pop()
        if not np.any(counts):
            continue
        if np.any(counts > 1) and depth < MAX_DEPTH:
            since = depth if multi_since is None else multi_since
            if depth - since < EXTRA_LEVELS or cell.size > 1e-3:
                _push_children(engine, cell, counts, depth, since, queue, epsabs)
                continue
        ok = True
        for wave in np.nonzero(counts)[0]:
            m = int(counts[wave])
            k, conv = _newton(engine, wave, cell.center, m, tol=newton_tol)
            if not conv or not cell.contains(k, pad=0.25 * cell.size):
                ok = False
                break
            res = _residual(engine, wave, k, cell)
            if res > zero_residual:
                ok = False
                break
            mult = int(engine(k).multiplicity[wave]) * m
            ell = None if engine.grid.scheme == "tensor" else int(wave)
            found.append(Resonance(k, mult, res, ell))
        if not ok:
            if depth >= MAX_DEPTH:
                raise BoundaryNearZero(f"Newton failed in the smallest cell {cell}")
            _push_children(engine, cell, counts, depth, multi_since, queue, epsabs)
    found = _dedupe(found)
    found.sort(key=lambda r: (abs(r.k), r.k.real))
    return SpectralCatalog(list(bound_states), found, top.region, top.total)


def _push_children(engine, cell, counts, depth, since, queue, epsabs):
    children = cell.split()
    child_counts = [count_zeros_detail(c, engine, epsabs=epsabs, check_depth=False).per_wave for c in children]
    # subdivision must preserve the count; a mismatch means a zero sits on a
    # shared edge, so nudge the split by recounting the parent's own split
    if not np.array_equal(np.sum(child_counts, axis=0), counts):
        shifted = Region(cell.re_min, cell.re_max, cell.im_min, cell.im_max)
        children = [Region(c.re_min, c.re_max, c.im_min, c.im_max) for c in _offset_split(shifted)]
        child_counts = [count_zeros_detail(c, engine, epsabs=epsabs, check_depth=False).per_wave for c in children]
    for c, n in zip(children, child_counts):
        queue.append((c, n, depth + 1, since))


def _offset_split(cell: Region) -> List[Region]:
    xm = cell.re_min + 0.4613 * (cell.re_max - cell.re_min)
    ym = cell.im_min + 0.5377 * (cell.im_max - cell.im_min)
    return [Region(cell.re_min, xm, cell.im_min, ym), Region(xm, cell.re_max, cell.im_min, ym),
            Region(cell.re_min, xm, ym, cell.im_max), Region(xm, cell.re_max, ym, cell.im_max)]


def _dedupe(found: List[Resonance], tol: float = 1e-8) -> List[Resonance]:
    out: List[Resonance] = []
    for r in found:
        if any(abs(r.k - o.k) < tol * max(1.0, abs(r.k)) and r.ell == o.ell for o in out):
            continue
        out.append(r)
    return out


# ---------------------------------------------------------------------------
# bound states
# ---------------------------------------------------------------------------
def _sorted_real_eigs(engine: WaveEngine, tau: float) -> np.ndarray:
    mu = engine.eigenvalues(1j * tau)
    return np.sort(mu.real, axis=-1)


def _tau_top(engine: WaveEngine, start: float) -> float:
    tau = start
    while np.min(_sorted_real_eigs(engine, tau)[:, 0]) <= -1.0:
        tau *= 2.0
        if tau > 1e6:
            raise ValueError("no upper bound for bound-state momenta found")
    return tau


def find_bound_states(grid, potential: Optional[Potential] = None,
                      tau_range: Optional[Tuple[float, float]] = None, n_scan: int = 48,
                      lmax: Optional[int] = None) -> List[BoundState]:
    """Zeros of D on the positive imaginary axis, i.e. sqrt(lambda_j).

    Eigenvalues of Q0(i tau) below -1 are counted per wave on a scan of
    ``tau``.  Every change of the count brackets a zero, which is located
    twice: as the crossing of a Birman-Schwinger eigenvalue through -1
    (``bs_crossing``) and as a zero of the wave determinant by Newton's
    method with the logarithmic derivative (``sqrt_lambda``).
    """
    engine = _wave_engine(grid, potential, lmax)
    if engine.grid.potential.is_zero:
        return []
    scale = 1.0 / engine.grid.potential.width if engine.grid.potential.radial else 1.0
    if tau_range is None:
        hi = _tau_top(engine, scale)
        tau_range = (1e-3 * hi, hi)
    lo, hi = tau_range
    if not 0 < lo < hi:
        raise ValueError("tau-range must satisfy 0 < lo < hi")
    taus = np.geomspace(lo, hi, n_scan)
    eigs = [_sorted_real_eigs(engine, t) for t in taus]
    counts = np.array([(e < -1.0).sum(axis=1) for e in eigs])
    out: List[BoundState] = []
    for wave in range(counts.shape[1]):
        for i in range(len(taus) - 1):
            c_lo, c_hi = counts[i, wave], counts[i + 1, wave]
            for j in range(c_hi, c_lo):
                out.append(_refine_bound_state(engine, wave, j, taus[i], taus[i + 1]))
    out.sort(key=lambda b: -b.sqrt_lambda)
    return out


def _refine_bound_state(engine: WaveEngine, wave: int, j: int, t_lo: float, t_hi: float) -> BoundState:
    def h(t):
        return _sorted_real_eigs(engine, t)[wave, j] + 1.0

    tau_bs = brentq(h, t_lo, t_hi, xtol=1e-14, rtol=1e-13)
    k, _ = _newton(engine, wave, 1j * tau_bs)
    kappa = float(k.imag)
    if not (t_lo * 0.5 < kappa < t_hi * 2.0) or abs(k.real) > 1e-6 * kappa:
        kappa = tau_bs  # Newton wandered off the axis; keep the eigenvalue crossing
    probes = [engine(1j * t).logdet[wave].real for t in (t_lo, t_hi)]
    val = engine(1j * kappa).logdet[wave].real
    residual = float(np.exp(val - max(probes))) if np.isfinite(val) else 0.0
    mult = int(engine(1j * kappa).multiplicity[wave])
    ell = None if engine.grid.scheme == "tensor" else wave
    return BoundState(kappa, mult, residual, ell, float(tau_bs))


# ---------------------------------------------------------------------------
# Hadamard factorization
# ---------------------------------------------------------------------------
@dataclass
class HadamardData:
    """``D(k) = D(0) e^{P(k)} prod E_3(k/k_n)`` with ``P = c1 k + c2 k^2 + c3 k^3``."""

    c1: complex
    c2: complex
    c3: complex
    D0: complex
    zeros: List[Tuple[complex, int]] = field(default_factory=list)
    errors: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def P(self, k):
        return self.c1 * k + self.c2 * k**2 + self.c3 * k**3

    def dP(self, k):
        return self.c1 + 2 * self.c2 * k + 3 * self.c3 * k**2

    def _selected(self, radius):
        return [(z, m) for z, m in self.zeros if radius is None or abs(z) <= radius]

    def log_product(self, k: complex, radius: Optional[float] = None) -> complex:
        """sum_n m_n [log(1 - k/k_n) + k/k_n + k^2/(2 k_n^2) + k^3/(3 k_n^3)]."""
        s = 0j
        for z, m in self._selected(radius):
            u = k / z
            s += m * (np.log(1 - u) + u + u**2 / 2 + u**3 / 3)
        return s

    def reconstruct(self, k: complex, radius: Optional[float] = None) -> complex:
        return self.D0 * np.exp(self.P(k) + self.log_product(k, radius))

    def log_derivative(self, k: complex, radius: Optional[float] = None) -> complex:
        """P'(k) + sum_n m_n k^3 / (k_n^3 (k - k_n))."""
        s = self.dP(k)
        for z, m in self._selected(radius):
            s += m * k**3 / (z**3 * (k - z))
        return s

    def to_dict(self) -> dict:
        pair = lambda z: [complex(z).real, complex(z).imag]  # noqa: E731
        return {"c1": pair(self.c1), "c2": pair(self.c2), "c3": pair(self.c3), "D0": pair(self.D0),
                "zeros": [pair(z) + [int(m)] for z, m in self.zeros],
                "errors": [float(e) for e in self.errors]}

    @classmethod
    def from_dict(cls, d: dict) -> "HadamardData":
        c = lambda p: complex(p[0], p[1])  # noqa: E731
        return cls(c(d["c1"]), c(d["c2"]), c(d["c3"]), c(d["D0"]),
                   [(complex(z[0], z[1]), int(z[2])) for z in d["zeros"]], tuple(d["errors"]))


def _stencils(f, h):
    fm2, fm1, f0, fp1, fp2 = (f(-2 * h), f(-h), f(0.0), f(h), f(2 * h))
    d1 = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h)
    d2 = (-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h)
    d3 = (-fm2 + 2 * fm1 - 2 * fp1 + fp2) / (2 * h**3)
    return np.array([d1, d2, d3])


def _richardson(values: Sequence[np.ndarray], orders: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Richardson table for steps halving each level; leading error orders per entry.

    The error estimate is the change made by the last extrapolation level.
    """
    table = [np.asarray(v) for v in values]
    orders = np.asarray(orders)
    err = np.abs(table[-1] - table[-2])
    level = 0
    while len(table) > 1:
        p = orders + 2 * level
        fac = 2.0**p
        previous = table[-1]
        table = [(fac * b - a) / (fac - 1) for a, b in zip(table, table[1:])]
        err = np.abs(table[-1] - previous)
        level += 1
    return table[0], err


def hadamard_fit(engine, catalog: Optional[SpectralCatalog] = None, scale: float = 1.0,
                 steps: Sequence[float] = (0.02, 0.01, 0.005)) -> HadamardData:
    """P-coefficients from Richardson-extrapolated stencils of log D at the origin.

    ``engine`` is a :class:`DetEngine` (or a grid); its ``lmax`` is pinned for
    the stencil so that all samples use the same set of waves.
    """
    if isinstance(engine, QuadratureGrid):
        engine = DetEngine(engine)
    pinned = DetEngine(engine.grid, lmax=engine.lmax or engine.grid.lmax_for(0.1 * scale))
    zeros = catalog.zeros() if catalog is not None else []
    if pinned.potential.is_zero:
        return HadamardData(0j, 0j, 0j, 1 + 0j, zeros)
    d0 = pinned.value(0.0)
    if d0.D == 0 or abs(d0.D) < 1e-12:
        raise ZeroAtOrigin("D(0) vanishes; the Hadamard normalization needs D(0) != 0")

    def f(t):
        v = pinned.value(t).logD - d0.logD
        return v - 2j * np.pi * np.round(v.imag / (2 * np.pi))

    est = [_stencils(f, h * scale) for h in steps]
    vals, err = _richardson(est, orders=(4, 4, 2))
    c1 = 1j * vals[0].imag
    c2 = vals[1].real / 2
    c3 = 1j * vals[2].imag / 6
    # the discarded parts (Re f', Im f'', Re f''') vanish by symmetry; keep
    # them in the error estimate
    errs = (float(max(err[0], abs(vals[0].real))), float(max(err[1], abs(vals[1].imag))) / 2,
            float(max(err[2], abs(vals[2].real))) / 6)
    return HadamardData(c1, c2, c3, complex(d0.D), zeros, errs)


def breit_wigner_phi_prime(t: float, hadamard: HadamardData,
                           catalog: Optional[SpectralCatalog] = None,
                           radius: Optional[float] = None) -> float:
    """phi'(t) = Im P'(t) + Im sum_n m_n t^3 / (k_n^3 (t - k_n)) over zeros with |k_n| <= radius."""
    if catalog is not None:
        hadamard = HadamardData(hadamard.c1, hadamard.c2, hadamard.c3, hadamard.D0,
                                catalog.zeros(), hadamard.errors)
    return float(hadamard.log_derivative(complex(t), radius).imag)


@dataclass
class BreitWignerStep:
    radius: float
    n_zeros: int
    deviation: float
    relative: float


def breit_wigner_convergence(engine, hadamard: HadamardData, catalog: SpectralCatalog,
                             radii: Sequence[float], t_range: Tuple[float, float] = (0.5, 3.0),
                             n_t: int = 26) -> List[BreitWignerStep]:
    """max over ``t_range`` of |phi'(t) - Breit-Wigner sum| as the catalog radius grows.

    ``phi'`` is the imaginary part of the directly computed log derivative;
    ``relative`` divides by max |phi'| on the same points.
    """
    if isinstance(engine, QuadratureGrid):
        engine = DetEngine(engine)
    ts = np.linspace(t_range[0], t_range[1], n_t)
    direct = np.array([engine.log_derivative(t).imag for t in ts])
    scale = float(np.max(np.abs(direct)))
    out = []
    for r in radii:
        bw = np.array([breit_wigner_phi_prime(t, hadamard, catalog, r) for t in ts])
        dev = float(np.max(np.abs(bw - direct)))
        out.append(BreitWignerStep(float(r), len(catalog.zeros(r)), dev,
                                   dev / scale if scale > 0 else 0.0))
    return out
