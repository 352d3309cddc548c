"""Quadrature grids and Nystrom matrices for the Birman-Schwinger operator.

Two schemes are provided.

``tensor``
    Tensor-product Gauss-Legendre nodes on the cube ``[-R_eff, R_eff]^3``.
    Works for any potential (including sampled grids).  The 1/|x-y| diagonal
    is replaced by the exact integral of the kernel over the ball whose
    volume equals the node weight.  Accuracy is modest; node counts above a
    few thousand are impractical.

``radial``
    For radial potentials the operator splits into partial waves; wave ``l``
    carries multiplicity ``2l+1`` and acts on ``L^2((0, R), dr)`` with kernel
    ``(i/k) jhat_l(k r_<) hhat_l(k r_>)``.  Each wave is discretized by
    product integration: the unknown is interpolated from Gauss-Legendre
    nodes and every row integral is split at the collocation point, so the
    kink of the kernel is integrated exactly.  Waves above ``lmax`` are
    represented by an asymptotic tail fit of the per-wave contributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import exp1, zeta

from . import _riccati as rb
from .errors import ResolutionTooLarge, SingularAtEigenvalue
from .potential import Potential, split_weights

MAX_TENSOR_NODES = 4096
MAX_RADIAL_NODES = 400
GRADING = 6
EPS_MACHINE = np.finfo(float).eps
CONDITION_C_THRESHOLD = 1e-6


# ---------------------------------------------------------------------------
# tail extrapolation over partial waves
# ---------------------------------------------------------------------------
TAIL_WINDOW = 10
TAIL_POWERS = (2, 3, 4, 5, 6)
CUBIC_TAIL_POWERS = (4, 5, 6, 7)


def wave_sum(ells: np.ndarray, terms: np.ndarray, tail: bool = True, powers=TAIL_POWERS):
    """Sum per-wave contributions (already weighted by 2l+1) plus a fitted tail.

    The tail assumes ``terms ~ sum_p A_p (l + 1/2)^-p``; the fitted series is
    summed in closed form with Hurwitz zeta values.  Returns ``(total,
    tail, tail_error)``.
    """
    terms = np.asarray(terms)
    head = terms.sum(axis=0)
    if not tail or len(ells) < TAIL_WINDOW + 4 or not np.any(terms):
        return head, 0.0 * head, 0.0
    lam = ells[-TAIL_WINDOW:] + 0.5
    y = terms[-TAIL_WINDOW:]
    lfirst = ells[-1] + 1.5

    def fit(powers):
        A = np.stack([lam ** (-p) for p in powers], axis=1)
        # column scaling keeps the least-squares problem well conditioned
        sc = np.abs(A).max(axis=0)
        coef, *_ = np.linalg.lstsq(A / sc, y.reshape(len(lam), -1), rcond=None)
        coef = coef / sc[:, None]
        z = np.array([zeta(p, lfirst) for p in powers])
        return (z @ coef).reshape(y.shape[1:])

    tail_val = fit(powers)
    tail_alt = fit(powers[:-1])
    return head + tail_val, tail_val, float(np.max(np.abs(tail_val - tail_alt)))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class QuadratureGrid:
    """Nodes and weights for either scheme.

    For ``radial`` grids ``nodes`` are radii in ``(0, R)``; the product
    integration tables live in ``sub_nodes``/``sub_weights``/``interp``.
    """

    scheme: str
    nodes: np.ndarray
    weights: np.ndarray
    resolution: int
    radius: float
    cell_diameter: float
    potential: Potential
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sub_nodes: Optional[np.ndarray] = None
    sub_weights: Optional[np.ndarray] = None
    interp: Optional[np.ndarray] = None
    lmin: int = 16
    wave_factor: float = 1.4
    graded_nodes: Optional[np.ndarray] = None
    graded_weights: Optional[np.ndarray] = None
    graded_dist: Optional[np.ndarray] = None

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def volume(self) -> float:
        if self.scheme == "tensor":
            return (2 * self.radius) ** 3
        return self.radius

    def lmax_for(self, k: complex) -> int:
        if self.potential.is_zero:
            return 0
        return int(self.lmin + np.ceil(self.wave_factor * abs(k) * self.potential.core_radius))


def _barycentric_matrix(x: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Lagrange basis of nodes ``x`` evaluated at points ``xi`` (any shape)."""
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    scale = 2.0 / (x.max() - x.min())
    bw = 1.0 / np.prod(diff * scale, axis=1)
    d = xi[..., None] - x
    exact = d == 0
    d = np.where(exact, 1.0, d)
    tmp = bw / d
    out = tmp / tmp.sum(axis=-1, keepdims=True)
    hit = exact.any(axis=-1)
    if np.any(hit):
        out[hit] = exact[hit].astype(float)
    return out


def _graded_rule(r: np.ndarray, R: float, q: int):
    """Row rules on [0, r_i] and [r_i, R] graded towards the diagonal.

    Built for the log-singular diagonal of the 3D Tr Q0^2 integrand:
    |r - r'| = (distance to the end) * s^GRADING. Returns nodes, weights
    and the distances |r - r'|.
    """
    xq, wq = np.polynomial.legendre.leggauss(q)
    uq = 0.5 * (xq + 1.0)
    s = uq**GRADING
    ds = GRADING * uq ** (GRADING - 1) * 0.5 * wq
    glo = r[:, None] * (1.0 - s[None, :])
    ghi = r[:, None] + (R - r)[:, None] * s[None, :]
    nodes = np.concatenate([glo, ghi], axis=1)
    dist = np.concatenate([r[:, None] * s[None, :], (R - r)[:, None] * s[None, :]], axis=1)
    weights = np.concatenate([r[:, None] * ds[None, :], (R - r)[:, None] * ds[None, :]], axis=1)
    return nodes, weights, dist


def build_grid(potential: Potential, resolution: int, scheme: str = "tensor",
               max_nodes: Optional[int] = None, sub_order: Optional[int] = None,
               lmin: int = 16, wave_factor: float = 1.4) -> QuadratureGrid:
    """Quadrature grid on the potential's effective support.

    ``tensor``: ``resolution`` Gauss-Legendre points per axis.
    ``radial``: ``resolution`` radial nodes; ``sub_order`` points per half of
    each row integral (defaults to ``resolution``).
    """
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    R = potential.r_eff
    c = np.asarray(potential.center, dtype=float)
    if scheme == "tensor":
        budget = MAX_TENSOR_NODES if max_nodes is None else max_nodes
        if resolution**3 > budget:
            raise ResolutionTooLarge(f"{resolution}^3 nodes exceeds budget {budget}")
        x, w = np.polynomial.legendre.leggauss(resolution)
        x, w = R * x, R * w
        X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
        nodes = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1) + c
        weights = np.einsum("i,j,k->ijk", w, w, w).ravel()
        return QuadratureGrid("tensor", nodes, weights, resolution, R,
                              float(np.sqrt(3) * 2 * R / resolution), potential, c)
    if scheme != "radial":
        raise ValueError(f"unknown scheme {scheme!r}")
    if not potential.radial:
        raise ValueError("radial scheme needs a radial potential")
    budget = MAX_RADIAL_NODES if max_nodes is None else max_nodes
    if resolution > budget:
        raise ResolutionTooLarge(f"{resolution} radial nodes exceeds budget {budget}")
    q = resolution if sub_order is None else sub_order
    x, w = np.polynomial.legendre.leggauss(resolution)
    r = 0.5 * R * (x + 1.0)
    wr = 0.5 * R * w
    xq, wq = np.polynomial.legendre.leggauss(q)
    uq = 0.5 * (xq + 1.0)
    lo = r[:, None] * uq[None, :]
    hi = r[:, None] + (R - r)[:, None] * uq[None, :]
    wlo = r[:, None] * 0.5 * wq[None, :]
    whi = (R - r)[:, None] * 0.5 * wq[None, :]
    sub = np.concatenate([lo, hi], axis=1)
    subw = np.concatenate([wlo, whi], axis=1)
    interp = _barycentric_matrix(r, sub)
    gnodes, gweights, gdist = _graded_rule(r, R, q)
    return QuadratureGrid("radial", r, wr, resolution, R, float(R / resolution), potential, c,
                          sub_nodes=sub, sub_weights=subw, interp=interp,
                          lmin=lmin, wave_factor=wave_factor,
                          graded_nodes=gnodes, graded_weights=gweights, graded_dist=gdist)


# ---------------------------------------------------------------------------
# operator matrices
# ---------------------------------------------------------------------------
@dataclass(eq=False)
class OperatorMatrix:
    """Discretized Q0(k), Q0'(k) or Q(k).

    ``blocks`` has shape ``(nblocks, n, n)``: one block for the tensor scheme,
    one per partial wave for the radial scheme (wave ``l`` has multiplicity
    ``2l + 1``).
    """

    k: complex
    kind: str
    blocks: np.ndarray
    scheme: str
    ells: np.ndarray
    condition_estimate: float = 0.0
    # radial scheme: per-wave Tr Q0^2 (kind Q0) or Tr Q0 Q0' (kind Q0prime)
    # from split row integrals; more accurate than the matrix traces
    exact_trace: Optional[np.ndarray] = None
    # radial scheme: per-wave quadrature of the kernel diagonal
    diag_trace: Optional[np.ndarray] = None
    # radial scheme: all-wave Tr Q0^2 (Q0) or Tr Q0 Q0' (Q0prime)
    quadratic: Optional[complex] = None

    @property
    def size(self) -> int:
        return self.blocks.shape[-1]

    @property
    def multiplicity(self) -> np.ndarray:
        if self.scheme == "tensor":
            return np.ones(1)
        return 2.0 * self.ells + 1.0

    @property
    def has_tail(self) -> bool:
        return self.scheme == "radial"

    def combine(self, per_block, tail: bool = True, powers=TAIL_POWERS):
        """Multiplicity-weighted sum of a per-block quantity (plus wave tail)."""
        terms = self.multiplicity.reshape((-1,) + (1,) * (np.ndim(per_block) - 1)) * per_block
        if self.scheme == "tensor":
            return terms.sum(axis=0)
        return wave_sum(self.ells, terms, tail=tail, powers=powers)[0]

    def dense(self) -> np.ndarray:
        if self.scheme != "tensor":
            raise TypeError("dense() is only defined for tensor-scheme matrices")
        return self.blocks[0]

    def trace(self, tail: bool = True):
        """Operator trace.

        Radial matrices use the quadrature of the kernel diagonal (the plain
        matrix trace of a product-integration matrix is only first-order
        accurate).  For the radial Q0 the wave sum diverges, so no tail.
        """
        if self.diag_trace is not None:
            per = self.diag_trace
        else:
            per = np.trace(self.blocks, axis1=1, axis2=2)
        if self.kind == "Q0" and self.scheme == "radial":
            tail = False
        return self.combine(per, tail=tail)

    def trace_power(self, n: int):
        if n < 2 and self.kind == "Q0":
            return self.trace()
        if n == 2 and self.kind == "Q0" and self.quadratic is not None:
            return self.quadratic
        P = np.linalg.matrix_power(self.blocks, n)
        return self.combine(np.trace(P, axis1=1, axis2=2))

    def operator_norm(self) -> float:
        if not np.any(self.blocks):
            return 0.0
        return float(max(np.linalg.norm(b, 2) for b in self.blocks))

    def hs_norm(self) -> float:
        per = np.sum(np.abs(self.blocks) ** 2, axis=(1, 2))
        return float(np.sqrt(max(np.real(self.combine(per)), 0.0)))

    def eigenvalues(self):
        """Eigenvalues per block and their multiplicities (no tail)."""
        vals = np.linalg.eigvals(self.blocks)
        return vals, self.multiplicity


def _condition(blocks) -> float:
    return float(np.max(np.abs(blocks), initial=0.0) * blocks.shape[-1])


def kappa_max(grid: QuadratureGrid, tol: float = 1e-6) -> float:
    """Deepest admissible |Im k| below the real axis: e^{2 kappa R} eps = tol."""
    return float(np.log(tol / EPS_MACHINE) / (2.0 * grid.radius))


# -- tensor scheme -------------------------------------------------------------
def _self_cell(k: complex, rho: np.ndarray) -> np.ndarray:
    """Integral of e^{ik r}/(4 pi r) over a ball of radius rho about the node."""
    z = k * rho
    small = np.abs(z) < 1e-3
    zs = np.where(small, 1.0, z)
    kk = k if k != 0 else 1.0
    exact = (np.exp(1j * zs) * (1 - 1j * zs) - 1.0) / (-(kk**2))
    series = rho**2 * (0.5 + 1j * z / 3 - z**2 / 8 - 1j * z**3 / 30)
    return np.where(small, series, exact)


def _tensor_q0(grid: QuadratureGrid, k: complex, derivative: bool = False) -> np.ndarray:
    v = grid.potential(grid.nodes)
    mag, sgn = split_weights(v)
    x = grid.nodes
    d = np.sqrt(np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1))
    w = grid.weights
    if derivative:
        K = 1j * np.exp(1j * k * d) / (4 * np.pi)
        M = K * w[None, :]
    else:
        np.fill_diagonal(d, 1.0)
        K = np.exp(1j * k * d) / (4 * np.pi * d)
        M = K * w[None, :]
        rho = (3 * w / (4 * np.pi)) ** (1.0 / 3.0)
        np.fill_diagonal(M, _self_cell(k, rho))
    return mag[:, None] * M * sgn[None, :]


# -- radial scheme -------------------------------------------------------------
def _radial_blocks(grid: QuadratureGrid, k: complex, derivative: bool = False,
                   lmax: Optional[int] = None, both: bool = False):
    """Per-wave matrices plus an exactly split-integrated trace per wave.

    The auxiliary trace is ``Tr Q0_l^2`` (for Q0) or ``Tr Q0_l Q0_l'`` (for
    Q0'), computed as ``sum_i w_i V(r_i) sum_q w_iq V(rho_iq) G G`` with the
    row integrals split at the diagonal.
    """
    p = grid.potential
    r = grid.nodes
    n = len(r)
    if lmax is None:
        lmax = grid.lmax_for(k)
    ells = np.arange(lmax + 1)
    if p.is_zero:
        zero = np.zeros(lmax + 1, dtype=complex)
        blocks = np.zeros((lmax + 1, n, n), dtype=complex)
        return (blocks, blocks, ells, zero, zero) if both else (blocks, ells, zero, zero)
    v_nodes = p.radial_value(r)
    v_sub = p.radial_value(grid.sub_nodes)
    mag, _ = split_weights(v_nodes)
    _, sgn_sub = split_weights(v_sub)
    sub = grid.sub_nodes
    nq2 = sub.shape[1]
    half = nq2 // 2
    lower = np.zeros(sub.shape, dtype=bool)
    lower[:, :half] = True
    rr = np.broadcast_to(r[:, None], sub.shape)
    r_lo = np.where(lower, sub, rr)
    r_hi = np.where(lower, rr, sub)
    G = np.empty((lmax + 1, n, nq2), dtype=complex)
    dG = np.empty_like(G) if derivative else None
    diag = np.empty((lmax + 1, n), dtype=complex)
    if abs(k) * p.core_radius < 1e-12:
        # rounding residue of a contour through the origin; the O(k) error
        # of the static kernel is below double precision here
        k = 0.0
    if k == 0:
        for ell in ells:
            G[ell] = r_lo * (r_lo / r_hi) ** ell / (2 * ell + 1)
            if derivative:
                dG[ell] = 1j * r_lo * r_hi if ell == 0 else 0.0
                diag[ell] = 1j * r * r if ell == 0 else 0.0
            else:
                diag[ell] = r / (2 * ell + 1)
    else:
        pts = np.concatenate([r, sub.ravel()])
        tab = rb.riccati_table(lmax, k * pts)
        node_idx = np.broadcast_to(np.arange(n)[:, None], sub.shape)
        sub_idx = n + np.arange(sub.size).reshape(sub.shape)
        idx_lo = np.where(lower, sub_idx, node_idx)
        idx_hi = np.where(lower, node_idx, sub_idx)
        idx_d = np.arange(n)
        for ell in ells:
            P = rb.jh_product(tab, tab, idx_lo, idx_hi, ell)
            G[ell] = (1j / k) * P
            Pd = rb.jh_product(tab, tab, idx_d, idx_d, ell)
            if derivative:
                dlo = rb.jprime_h_product(tab, tab, idx_lo, idx_hi, ell)
                dhi = P * rb.log_hprime_ratio(tab, idx_hi, ell)
                dG[ell] = -G[ell] / k + (1j / k) * (r_lo * dlo + r_hi * dhi)
                dd = rb.jprime_h_product(tab, tab, idx_d, idx_d, ell)
                dd = dd + Pd * rb.log_hprime_ratio(tab, idx_d, ell)
                diag[ell] = -(1j / k) * Pd / k + (1j / k) * r * dd
            else:
                diag[ell] = (1j / k) * Pd
    outer = grid.weights * v_nodes
    inner = grid.sub_weights * v_sub
    kern = dG if derivative else G
    aux = np.einsum("i,iq,liq->l", outer, inner, G * kern)
    diag_trace = diag @ outer
    scale = (grid.sub_weights * sgn_sub)[None]

    def to_matrix(kernel):
        # M[l, i, j] = sum_q K[l, i, q] interp[i, q, j]
        Kt = np.ascontiguousarray((kernel * scale).transpose(1, 0, 2))
        M = np.matmul(Kt.real, grid.interp) + 1j * np.matmul(Kt.imag, grid.interp)
        return M.transpose(1, 0, 2) * mag[None, :, None]

    M = to_matrix(kern)
    if both:
        return to_matrix(G), M, ells, aux, diag_trace
    return M, ells, aux, diag_trace


def radial_quadratic_trace(grid: QuadratureGrid, k: complex, derivative: bool = False) -> complex:
    """Tr Q0(k)^2 (or Tr Q0 Q0' with ``derivative``) for a radial potential, all waves.

    Integrating the angles of ``V(x) V(y) e^{2ik|x-y|} / (4 pi |x-y|)^2`` gives

        Tr Q0^2 = 1/2 int int r r' V(r) V(r') [E1(-2ik|r-r'|) - E1(-2ik(r+r'))] dr dr'

    and ``d/dk`` of the bracket is ``(e^{2ik(r+r')} - e^{2ik|r-r'|}) / k``.
    The log singularity on the diagonal is handled by the graded inner rule.
    """
    p = grid.potential
    if p.is_zero:
        return 0j
    k = complex(k)
    r = grid.nodes
    rp, gw, a = grid.graded_nodes, grid.graded_weights, grid.graded_dist
    # the inner rule must resolve e^{2ik r'} across the support
    q = int(np.ceil(2 * abs(k) * grid.radius)) + 16
    if q > rp.shape[1] // 2:
        rp, gw, a = _graded_rule(r, grid.radius, q)
    b = r[:, None] + rp
    if derivative:
        if k == 0:
            F = 2j * (b - a)
        else:
            F = (np.exp(2j * k * b) - np.exp(2j * k * a)) / k
    elif k == 0:
        F = np.log(b / a)
    else:
        z = -2j * k
        F = exp1(z * a) - exp1(z * b)
    inner = np.sum(gw * rp * p.radial_value(rp) * F, axis=1)
    total = 0.5 * np.sum(grid.weights * r * p.radial_value(r) * inner)
    return complex(0.5 * total if derivative else total)


def assemble_q0(grid: QuadratureGrid, potential: Optional[Potential] = None, k: complex = 0.0,
                lmax: Optional[int] = None) -> OperatorMatrix:
    """Discretized Q0(k) = |V|^{1/2} R0(k^2) V~^{1/2}, any complex k."""
    _check_potential(grid, potential)
    k = complex(k)
    if grid.scheme == "tensor":
        blocks = _tensor_q0(grid, k)[None]
        ells = np.zeros(1, dtype=int)
    else:
        blocks, ells, aux, dtr = _radial_blocks(grid, k, lmax=lmax)
        return OperatorMatrix(k, "Q0", blocks, grid.scheme, ells, _condition(blocks), aux, dtr,
                              radial_quadratic_trace(grid, k))
    return OperatorMatrix(k, "Q0", blocks, grid.scheme, ells, _condition(blocks))


def assemble_q0_prime(grid: QuadratureGrid, potential: Optional[Potential] = None,
                      k: complex = 0.0, lmax: Optional[int] = None) -> OperatorMatrix:
    """Discretized dQ0/dk; kernel i e^{ik|x-y|}/(4 pi), bounded on the diagonal."""
    _check_potential(grid, potential)
    k = complex(k)
    if grid.scheme == "tensor":
        blocks = _tensor_q0(grid, k, derivative=True)[None]
        ells = np.zeros(1, dtype=int)
    else:
        blocks, ells, aux, dtr = _radial_blocks(grid, k, derivative=True, lmax=lmax)
        return OperatorMatrix(k, "Q0prime", blocks, grid.scheme, ells, _condition(blocks), aux, dtr,
                              radial_quadratic_trace(grid, k, derivative=True))
    return OperatorMatrix(k, "Q0prime", blocks, grid.scheme, ells, _condition(blocks))


def assemble_pair(grid: QuadratureGrid, k: complex = 0.0, lmax: Optional[int] = None):
    """Q0(k) and Q0'(k) from one evaluation of the special functions.

    The returned matrices carry the per-wave data (``blocks``) only; use
    :func:`assemble_q0` when the all-wave traces are needed.
    """
    k = complex(k)
    if grid.scheme == "tensor":
        a = _tensor_q0(grid, k)[None]
        b = _tensor_q0(grid, k, derivative=True)[None]
        ells = np.zeros(1, dtype=int)
        return (OperatorMatrix(k, "Q0", a, "tensor", ells, _condition(a)),
                OperatorMatrix(k, "Q0prime", b, "tensor", ells, _condition(b)))
    M, dM, ells, _, _ = _radial_blocks(grid, k, derivative=True, lmax=lmax, both=True)
    return (OperatorMatrix(k, "Q0", M, "radial", ells, _condition(M)),
            OperatorMatrix(k, "Q0prime", dM, "radial", ells, _condition(dM)))


SINGULAR_INVERSE_NORM = 1e12


def q_from_q0(q0: OperatorMatrix) -> OperatorMatrix:
    """Q = I - (I + Q0)^{-1}; raises SingularAtEigenvalue on a zero of D."""
    n = q0.size
    eye = np.eye(n)
    A = eye[None] + q0.blocks
    try:
        inv = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        raise SingularAtEigenvalue(f"I + Q0({q0.k}) is singular") from exc
    if not np.all(np.isfinite(inv)) or np.max(np.abs(inv)) > SINGULAR_INVERSE_NORM:
        raise SingularAtEigenvalue(f"I + Q0({q0.k}) is numerically singular")
    Q = eye[None] - inv
    return OperatorMatrix(q0.k, "Q", Q, q0.scheme, q0.ells, _condition(Q))


def assemble_q(grid: QuadratureGrid, potential: Optional[Potential] = None, k: complex = 0.0,
               lmax: Optional[int] = None) -> OperatorMatrix:
    return q_from_q0(assemble_q0(grid, potential, k, lmax=lmax))


def symmetrized_spectrum(grid: QuadratureGrid, k: complex) -> np.ndarray:
    """Eigenvalues of W^{1/2} K W^{1/2} (tensor scheme, V of one sign)."""
    if grid.scheme != "tensor":
        raise TypeError("symmetrization is defined for the tensor scheme")
    v = grid.potential(grid.nodes)
    x = grid.nodes
    d = np.sqrt(np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1))
    np.fill_diagonal(d, 1.0)
    K = np.exp(1j * k * d) / (4 * np.pi * d)
    w = grid.weights
    rho = (3 * w / (4 * np.pi)) ** (1.0 / 3.0)
    np.fill_diagonal(K, _self_cell(complex(k), rho) / w)
    s = np.sqrt(w * np.abs(v))
    S = s[:, None] * K * s[None, :] * np.sign(v[0] if np.any(v) else 1.0)
    return np.linalg.eigvals(S)


@dataclass
class ConditionReport:
    min_distance: float
    passed: bool
    threshold: float = CONDITION_C_THRESHOLD


def check_condition_c(grid: QuadratureGrid, potential: Optional[Potential] = None,
                      threshold: float = CONDITION_C_THRESHOLD) -> ConditionReport:
    """min_j |1 + mu_j| over the spectrum of the discretized Q0(0)."""
    q0 = assemble_q0(grid, potential, 0.0)
    vals, _ = q0.eigenvalues()
    dist = float(np.min(np.abs(1.0 + vals))) if vals.size else 1.0
    return ConditionReport(dist, dist > threshold, threshold)


def _check_potential(grid: QuadratureGrid, potential: Optional[Potential]) -> None:
    if potential is not None and potential is not grid.potential:
        if potential.spec() != grid.potential.spec():
            raise ValueError("grid was built for a different potential")
