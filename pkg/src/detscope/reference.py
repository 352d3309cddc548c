"""Independent oracles for the determinant engine.

Nothing here touches the Birman-Schwinger matrices except the order checks
in :func:`lemma41_expansion_check`; the oracles solve the radial
Schrodinger equation, the square-well matching condition, or the
autocorrelation integral for ``Tr Q0^2`` directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from scipy.linalg import eigh, eigvalsh_tridiagonal

from .errors import BoxTooSmall, FitUnstable, QuadratureNotConverged
from .potential import Potential, moments

ORACLE_LMAX = 4
STEPS_PER_WIDTH = 2000


# ---------------------------------------------------------------------------
# radial shooting
# ---------------------------------------------------------------------------
@dataclass
class RadialProblem:
    """One partial wave of ``-u'' + [l(l+1)/r^2 + v(r)] u = E u``.

    ``v`` is taken to vanish beyond ``r_max``.
    """

    v: Callable[[np.ndarray], np.ndarray]
    ell: int = 0
    r_max: float = 1.0
    ode_step: float = 1.0 / STEPS_PER_WIDTH

    def __post_init__(self):
        if self.ell < 0:
            raise ValueError("angular momentum must be nonnegative")
        if self.r_max <= 0 or self.ode_step <= 0:
            raise ValueError("r_max and ode_step must be positive")

    @classmethod
    def from_potential(cls, p: Potential, ell: int = 0, steps: int = STEPS_PER_WIDTH):
        if not p.radial:
            raise TypeError("the radial oracle needs a radial potential")
        r_max = p.r_eff
        return cls(p.radial_value, ell, r_max, p.width / steps)


def _shoot(problem: RadialProblem, lam: float, h: float) -> Tuple[float, float, int]:
    """RK4 from the origin to ``r_max`` at energy ``-lam``.

    Returns ``u(r_max)``, ``u'(r_max)`` and the number of sign changes of
    ``u`` on ``(0, r_max)``.
    """
    ell = problem.ell
    cent = ell * (ell + 1)
    n = max(2, int(np.ceil(problem.r_max / h)))
    h = problem.r_max / n
    r0 = 1e-3 * h
    v0 = float(problem.v(np.array(0.0)))
    # Frobenius start u = r^{l+1} (1 + c r^2)
    c = (v0 + lam) / (2.0 * (2 * ell + 3))
    u = r0 ** (ell + 1) * (1 + c * r0**2)
    du = (ell + 1) * r0**ell + (ell + 3) * c * r0 ** (ell + 2)
    grid = np.linspace(r0, problem.r_max, n + 1)
    mids = 0.5 * (grid[1:] + grid[:-1])
    vg = problem.v(grid) + lam
    vm = problem.v(mids) + lam
    q = cent / grid**2 + vg
    qm = cent / mids**2 + vm
    step = grid[1] - grid[0]
    nodes = 0
    for i in range(n):
        k1u, k1d = du, q[i] * u
        k2u, k2d = du + 0.5 * step * k1d, qm[i] * (u + 0.5 * step * k1u)
        k3u, k3d = du + 0.5 * step * k2d, qm[i] * (u + 0.5 * step * k2u)
        k4u, k4d = du + step * k3d, q[i + 1] * (u + step * k3u)
        un = u + step / 6 * (k1u + 2 * k2u + 2 * k3u + k4u)
        dun = du + step / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)
        if un * u < 0:
            nodes += 1
        u, du = un, dun
        m = abs(u) + abs(du)
        if m > 1e100:
            u, du = u / m, du / m
    return u, du, nodes


def _tail_functions(ell: int, kappa: float, r: float):
    """Rising and decaying modified Riccati-Bessel functions and derivatives at ``r``."""
    x = kappa * r
    i_, di = special.spherical_in(ell, x), special.spherical_in(ell, x, derivative=True)
    k_, dk = special.spherical_kn(ell, x), special.spherical_kn(ell, x, derivative=True)
    grow = (x * i_, kappa * (i_ + x * di))
    decay = (x * k_, kappa * (k_ + x * dk))
    return grow, decay


def _count_below(problem: RadialProblem, lam: float, h: float) -> int:
    """Number of eigenvalues ``-lam_j < -lam`` (Sturm oscillation count)."""
    u, du, nodes = _shoot(problem, lam, h)
    (g, dg), (d, dd) = _tail_functions(problem.ell, np.sqrt(lam), problem.r_max)
    # u = A g + B d beyond r_max with g, d > 0 and g/d increasing to
    # infinity: u has at most one more zero, and it has one iff its sign at
    # r_max differs from the sign of A, which wins at infinity
    w = g * dd - dg * d
    A = (u * dd - du * d) / w
    extra = 1 if A * u < 0 else 0
    return nodes + extra


def _bisect(problem, lo, hi, target, h, tol=1e-13):
    """Largest lam in (lo, hi) where the count drops below ``target``."""
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if _count_below(problem, mid, h) >= target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _wave_bound_states(problem: RadialProblem, lam_lo: float, lam_hi: float, h: float) -> List[float]:
    n_lo = _count_below(problem, lam_lo, h)
    n_hi = _count_below(problem, lam_hi, h)
    return [_bisect(problem, lam_lo, lam_hi, j, h) for j in range(n_hi + 1, n_lo + 1)]


@dataclass
class RadialBoundState:
    lam: float
    ell: int
    multiplicity: int
    error: float

    @property
    def sqrt_lambda(self) -> float:
        return float(np.sqrt(self.lam))


def radial_bound_states(problem, energy_range: Optional[Tuple[float, float]] = None,
                        lmax: int = ORACLE_LMAX) -> List[RadialBoundState]:
    """Bound states ``-lam_j`` of every wave ``l <= lmax`` by shooting.

    ``problem`` is a :class:`RadialProblem` (only its wave is searched) or a
    radial :class:`Potential` (all waves up to ``lmax``).  The energy range
    ``(E_lo, E_hi)`` must lie in the negative half-line; by default it
    reaches from the bottom of the potential to ``-1e-8``.  Each eigenvalue is
    computed at two step sizes and Richardson-extrapolated; ``error`` is the
    difference of the two.
    """
    if isinstance(problem, Potential):
        if problem.is_zero:
            return []
        problems = [RadialProblem.from_potential(problem, ell) for ell in range(lmax + 1)]
        floor = float(problem.depth)
    else:
        problems = [problem]
        r = np.linspace(0, problem.r_max, 2001)
        floor = float(max(0.0, -np.min(problem.v(r))))
        if floor == 0.0:
            return []
    if energy_range is None:
        energy_range = (-floor - 1e-9, -1e-8)
    e_lo, e_hi = energy_range
    if not e_lo < e_hi < 0:
        raise ValueError("energy range must lie in (-inf, 0)")
    out = []
    for prob in problems:
        coarse = _wave_bound_states(prob, -e_hi, -e_lo, 2 * prob.ode_step)
        fine = _wave_bound_states(prob, -e_hi, -e_lo, prob.ode_step)
        if len(coarse) != len(fine):
            coarse = fine
        for lc, lf in zip(coarse, fine):
            lam = (16 * lf - lc) / 15
            out.append(RadialBoundState(lam, prob.ell, 2 * prob.ell + 1, abs(lf - lc) / 15))
    out.sort(key=lambda b: -b.lam)
    return out


def square_well_bound_state_equation(V0: float, a: float, lam: float) -> float:
    """``sqrt(V0 - lam) cot(sqrt(V0 - lam) a) + sqrt(lam)``; zero at an s-wave bound state."""
    q = np.sqrt(V0 - lam)
    return q / np.tan(q * a) + np.sqrt(lam)


# ---------------------------------------------------------------------------
# square-well resonances
# ---------------------------------------------------------------------------
def _sw_function(k, V0, a):
    """``cos(q a) - i k sin(q a)/q`` with ``q^2 = k^2 + V0`` and its k-derivative.

    This is ``q cot(q a) - i k`` times ``sin(q a)/q``; unlike the cotangent form
    it is entire in ``k`` and has no spurious roots at ``q = 0``.
    """
    q = np.sqrt(k * k + V0 + 0j)
    if abs(q) < 1e-8:
        S, dS_dw, C = a, -a**3 / 6, 1.0
    else:
        S = np.sin(q * a) / q
        C = np.cos(q * a)
        dS_dw = (a * C - S) / (2 * q * q)
    f = C - 1j * k * S
    # dC/dw = -a S / 2 with w = q^2, dw/dk = 2k
    df = -a * S * k - 1j * S - 1j * k * dS_dw * 2 * k
    return f, df


def square_well_resonances(V0: float, a: float = 1.0, ell: int = 0,
                           region: Tuple[float, float, float, float] = (-6.0, 6.0, -1.2, 0.0),
                           seeds_per_unit: float = 4.0, tol: float = 1e-14) -> List[complex]:
    """s-wave poles of the square-well S-matrix in ``region`` by complex Newton.

    ``region`` is ``(re_min, re_max, im_min, im_max)``.  Newton is started from
    a lattice of seeds covering the region and a margin around it.
    """
    if ell != 0:
        raise NotImplementedError("only the s-wave oracle is available")
    re_min, re_max, im_min, im_max = region
    if V0 == 0:
        return []
    pad = 1.0
    nx = int(np.ceil((re_max - re_min + 2 * pad) * seeds_per_unit)) + 1
    ny = int(np.ceil((im_max - im_min + 2 * pad) * seeds_per_unit)) + 1
    xs = np.linspace(re_min - pad, re_max + pad, nx)
    ys = np.linspace(im_min - pad, im_max + pad, ny)
    roots: List[complex] = []
    for x in xs:
        for y in ys:
            k = complex(x, y)
            for _ in range(60):
                f, df = _sw_function(k, V0, a)
                if df == 0:
                    break
                step = f / df
                k -= step
                if abs(step) < tol * max(1.0, abs(k)):
                    break
            else:
                continue
            f, _ = _sw_function(k, V0, a)
            if abs(f) > 1e-10 * max(1.0, abs(k)):
                continue
            if not (re_min <= k.real <= re_max and im_min <= k.imag < im_max):
                continue
            if k.imag >= 0 and abs(k.real) < 1e-9 and im_max > 0:
                # bound states lie on the positive imaginary axis; keep them
                # out of a resonance list
                continue
            if all(abs(k - r) > 1e-9 * max(1.0, abs(k)) for r in roots):
                roots.append(k)
    roots.sort(key=lambda z: (abs(z), z.real))
    return roots


# ---------------------------------------------------------------------------
# Tr Q0^2 from the autocorrelation
# ---------------------------------------------------------------------------
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _cumulative_sv(p: Potential, s: np.ndarray) -> np.ndarray:
    """C(s) = int_0^s u V(u) du, vectorized."""
    s = np.asarray(s, dtype=float)
    x = 0.5 * (_GL_X + 1.0)
    w = 0.5 * _GL_W
    u = s[..., None] * x
    return s**2 * np.sum(w * x * p.radial_value(u), axis=-1)


def autocorrelation(p: Potential, t, n_r: int = 200) -> np.ndarray:
    """g(t) = (4 pi)^-2 int dw int V(x + t w) V(x) dx for a radial potential.

    The angular integral of a radial function reduces to
    ``g(t) = 1/(2t) int_0^R r V(r) [C(r + t) - C(|r - t|)] dr``.  The ``r``
    integral is split at ``r = t``, ``r = R - t`` and ``r = t - R`` where the
    integrand has kinks (square well) and done with Gauss-Legendre on each
    piece.
    """
    if not p.radial:
        raise TypeError("the autocorrelation oracle needs a radial potential")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    R = p.r_eff
    if p.is_zero:
        return np.zeros_like(t)
    xg, wg = np.polynomial.legendre.leggauss(n_r)
    out = np.empty_like(t)
    for i, ti in enumerate(t):
        if ti < 1e-12:
            rr = 0.5 * R * (xg + 1)
            out[i] = np.sum(0.5 * R * wg * rr**2 * p.radial_value(rr) ** 2)
            continue
        breaks = sorted({0.0, R, *[b for b in (ti, R - ti, ti - R) if 0 < b < R]})
        total = 0.0
        for lo, hi in zip(breaks, breaks[1:]):
            rr = lo + 0.5 * (hi - lo) * (xg + 1)
            inner = (_cumulative_sv(p, np.minimum(rr + ti, R))
                     - _cumulative_sv(p, np.minimum(np.abs(rr - ti), R)))
            total += 0.5 * (hi - lo) * np.sum(wg * rr * p.radial_value(rr) * inner)
        out[i] = total / (2.0 * ti)
    return out


def _unit_moments(theta: complex, m_max: int = 2) -> np.ndarray:
    """int_{-1}^{1} x^m e^{i theta x} dx for m = 0..m_max."""
    if abs(theta) < 1.0:
        out = np.zeros(m_max + 1, dtype=complex)
        term = 1.0 + 0j
        for n in range(40):
            for m in range(m_max + 1):
                if (m + n) % 2 == 0:
                    out[m] += term * 2.0 / (m + n + 1)
            term *= 1j * theta / (n + 1)
        return out
    e_p, e_m = np.exp(1j * theta), np.exp(-1j * theta)
    mu = [(e_p - e_m) / (1j * theta)]
    for m in range(1, m_max + 1):
        # integration by parts: I_m = [x^m e^{i theta x}/(i theta)] - m/(i theta) I_{m-1}
        boundary = (e_p - (-1) ** m * e_m) / (1j * theta)
        mu.append(boundary - m / (1j * theta) * mu[-1])
    return np.array(mu)


def filon_exp(values: np.ndarray, t: np.ndarray, omega: complex) -> complex:
    """Composite Filon-Simpson rule for int g(t) e^{i omega t} dt on an even panel grid."""
    n = len(t) - 1
    if n % 2:
        raise ValueError("Filon-Simpson needs an even number of intervals")
    h = t[1] - t[0]
    if not np.allclose(np.diff(t), h, rtol=1e-10, atol=0.0):
        raise ValueError("Filon-Simpson needs a uniform grid")
    mu = _unit_moments(omega * h)
    # quadratic through (-1, 0, 1) in the local variable x, times h^{m+1}
    # p(x) = f0 + (f1 - f-1)/2 x + (f1 - 2 f0 + f-1)/2 x^2
    fm, f0, fp = values[0:-1:2], values[1::2], values[2::2]
    c0, c1, c2 = f0, (fp - fm) / 2, (fp - 2 * f0 + fm) / 2
    centres = t[1::2]
    phase = np.exp(1j * omega * centres)
    return complex(h * np.sum(phase * (c0 * mu[0] + c1 * mu[1] + c2 * mu[2])))


def trq0_squared_direct(p: Potential, k: complex, n_t: int = 800) -> complex:
    """Tr Q0(k)^2 = int_0^inf e^{2ikt} g(t) dt, Im k >= 0.

    ``g`` is sampled on ``[0, 2R]`` (it vanishes beyond) with ``n_t``
    intervals and the oscillatory integral is done by Filon-Simpson.  The
    result is compared with a half-resolution run; a relative difference
    above 1e-6 raises :class:`QuadratureNotConverged`.
    """
    k = complex(k)
    if k.imag < 0:
        raise ValueError("the autocorrelation form needs Im k >= 0")
    if p.is_zero:
        return 0j
    n_t += n_t % 2
    t = np.linspace(0.0, 2 * p.r_eff, n_t + 1)
    g = autocorrelation(p, t)
    fine = filon_exp(g, t, 2 * k)
    if n_t % 4 == 0:
        coarse = filon_exp(g[::2], t[::2], 2 * k)
        if abs(fine - coarse) > 1e-6 * max(abs(fine), 1e-300) * 15 and abs(fine - coarse) > 1e-12:
            raise QuadratureNotConverged(
                f"Filon estimate changed by {abs(fine - coarse):.3g} under halving")
    return fine


# ---------------------------------------------------------------------------
# large-k expansion of Tr Q0^2 and orders of higher traces
# ---------------------------------------------------------------------------
@dataclass
class ExpansionCheck:
    c1: complex
    c3: complex
    c1_expected: float
    c3_expected: float
    slopes: dict = field(default_factory=dict)

    @property
    def c1_rel_error(self) -> float:
        if self.c1_expected == 0:
            return float(abs(self.c1))
        return float(abs(self.c1 - self.c1_expected) / abs(self.c1_expected))

    @property
    def c3_rel_error(self) -> float:
        if self.c3_expected == 0:
            return float(abs(self.c3))
        return float(abs(self.c3 - self.c3_expected) / abs(self.c3_expected))


def lemma41_expansion_check(p: Potential, ray: Sequence[complex] = (),
                            order_grid=None, order_ts: Sequence[float] = (10.0, 20.0, 40.0),
                            powers: Sequence[int] = (4, 5)) -> ExpansionCheck:
    """Fit ``c1/k + c3/k^3 + c5/k^5`` to ``(i/2) Tr Q0(k)^2`` along ``ray``.

    The expected coefficients are ``-(1/16pi) int V^2`` and
    ``-(1/192pi) int |grad V|^2``.  When ``order_grid`` (a
    :class:`~detscope.discretize.QuadratureGrid`) is given, the log-log
    slopes of ``|Tr Q0^n(i t)|`` over ``order_ts`` are recorded for each
    ``n`` in ``powers``.
    """
    m = moments(p)
    int_v2 = 16 * np.pi * m.alpha_0
    if p.radial and not p.is_zero:
        xg, wg = np.polynomial.legendre.leggauss(200)
        R = p.r_eff
        r = 0.5 * R * (xg + 1)
        grad2 = 4 * np.pi * np.sum(0.5 * R * wg * r**2 * p.radial_derivative(r) ** 2)
    else:
        grad2 = 0.0
    c1_exp = -int_v2 / (16 * np.pi)
    c3_exp = -grad2 / (192 * np.pi)
    if p.is_zero:
        return ExpansionCheck(0j, 0j, 0.0, 0.0, {n: 0.0 for n in powers})
    if not len(ray):
        ray = 1j * np.linspace(10.0, 40.0, 13)
    ks = np.asarray(ray, dtype=complex)
    f = np.array([0.5j * trq0_squared_direct(p, k, n_t=1600) for k in ks])
    A = np.stack([1 / ks, 1 / ks**3, 1 / ks**5], axis=1)
    scale = np.abs(A).max(axis=0)
    cond = np.linalg.cond(A / scale)
    if not np.isfinite(cond) or cond > 1e10:
        raise FitUnstable(f"ray fit is ill-conditioned (cond {cond:.3g})")
    coef, *_ = np.linalg.lstsq(A / scale, f, rcond=None)
    coef = coef / scale
    slopes = {}
    if order_grid is not None:
        from .discretize import assemble_q0
        ts = np.asarray(order_ts, dtype=float)
        for n in powers:
            vals = [abs(assemble_q0(order_grid, k=1j * t).trace_power(n)) for t in ts]
            slopes[n] = float(np.polyfit(np.log(ts), np.log(vals), 1)[0])
    return ExpansionCheck(complex(coef[0]), complex(coef[1]), c1_exp, c3_exp, slopes)


# ---------------------------------------------------------------------------
# lattice Hamiltonian (experimental)
# ---------------------------------------------------------------------------
def lattice_trace(p: Potential, f: Callable[[np.ndarray], np.ndarray], box_size: float,
                  spacing: float, min_levels: int = 8, geometry: Optional[str] = None) -> float:
    """EXPERIMENTAL: Tr(f(H) - f(H0)) from a finite-difference lattice.

    ``geometry="radial"`` (the default for radial potentials) puts each
    partial wave on the lattice ``r_i = i h`` in a ball of radius
    ``box_size`` with Dirichlet walls; every wave is a tridiagonal matrix and
    waves are summed with weight ``2l + 1`` until they stop contributing.
    ``geometry="cube"`` uses the periodic cube of side ``box_size`` and dense
    diagonalization, which only fits small lattices.  Raises
    :class:`BoxTooSmall` when fewer than ``min_levels`` free levels fall
    inside the support of ``f``.
    """
    if geometry is None:
        geometry = "radial" if p.radial else "cube"
    if geometry == "radial":
        return _radial_lattice_trace(p, f, box_size, spacing, min_levels)
    if geometry != "cube":
        raise ValueError(f"unknown lattice geometry {geometry!r}")
    return _cube_lattice_trace(p, f, box_size, spacing, min_levels)


RADIAL_LATTICE_LMAX = 80


def _radial_lattice_trace(p, f, box_radius, spacing, min_levels):
    if not p.radial:
        raise TypeError("the radial lattice needs a radial potential")
    n = int(round(box_radius / spacing))
    if box_radius <= p.r_eff or n < 8:
        raise BoxTooSmall("the ball must contain the support of V and at least 8 points")
    h = box_radius / n
    r = h * np.arange(1, n)
    off = np.full(n - 2, -1.0 / h**2)
    v = np.zeros_like(r) if p.is_zero else p.radial_value(r)
    # only levels inside the support of f matter when it is known
    support = getattr(f, "support", None)
    kw = {} if support is None else {"select": "v", "select_range": tuple(support)}

    def levels(diag):
        return eigvalsh_tridiagonal(diag, off, **kw)

    free_s = f(levels(np.full(n - 1, 2.0 / h**2)))
    if np.count_nonzero(free_s) < min_levels:
        raise BoxTooSmall(f"only {np.count_nonzero(free_s)} free s-wave levels inside the support of f")
    if p.is_zero:
        return 0.0
    total = 0.0
    quiet = 0
    for ell in range(RADIAL_LATTICE_LMAX + 1):
        diag0 = 2.0 / h**2 + ell * (ell + 1) / r**2
        e = levels(diag0 + v)
        e0 = levels(diag0)
        term = (2 * ell + 1) * (float(np.sum(f(e))) - float(np.sum(f(e0))))
        total += term
        quiet = quiet + 1 if abs(term) < 1e-12 * max(1.0, abs(total)) else 0
        if quiet == 2:
            break
    return total


def _cube_lattice_trace(p, f, box_size, spacing, min_levels):
    n = int(round(box_size / spacing))
    if n < 4:
        raise BoxTooSmall("the lattice needs at least 4 points per side")
    h = box_size / n
    m = np.arange(n)
    lam1 = (2 - 2 * np.cos(2 * np.pi * m / n)) / h**2
    free = (lam1[:, None, None] + lam1[None, :, None] + lam1[None, None, :]).ravel()
    fv = f(free)
    if np.count_nonzero(fv) < min_levels:
        raise BoxTooSmall(f"only {np.count_nonzero(fv)} free levels inside the support of f")
    if p.is_zero:
        return 0.0
    x = (m - n // 2) * h
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    pts = np.stack([X, Y, Z], axis=-1) + np.asarray(p.center)
    V = p(pts).ravel()
    N = n**3
    H = np.zeros((N, N))
    idx = np.arange(N).reshape(n, n, n)
    H[np.arange(N), np.arange(N)] = 6.0 / h**2 + V
    for axis in range(3):
        nb = np.roll(idx, -1, axis=axis).ravel()
        H[idx.ravel(), nb] -= 1.0 / h**2
        H[nb, idx.ravel()] -= 1.0 / h**2
    e = eigh(H, eigvals_only=True)
    return float(np.sum(f(e)) - np.sum(fv))
