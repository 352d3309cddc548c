"""The modified Fredholm determinant D(k) = det2(I + Q0(k)) and its logarithm.

``log D`` is multivalued; :func:`continue_log` fixes the branch with
``log D(k) -> 0`` as ``Im k -> +inf`` by seeding high on the imaginary axis
with the convergent trace series and walking a path with nearest-``2 pi i``
matching.  The Blaschke product ``B`` removes the bound-state zeros from the
upper half-plane; ``D_B = D / B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, MutableMapping, Optional, Sequence

import numpy as np

from .discretize import (
    OperatorMatrix,
    QuadratureGrid,
    assemble_q0,
    assemble_q0_prime,
    CUBIC_TAIL_POWERS,
)
from .errors import BranchJumpDetected, EigenSolveFailed, PoleHit, SingularAtEigenvalue
from .potential import Moments, Potential

ZERO_CLAMP = 1e-14
SEED_NORM = 0.4
SERIES_TOL = 1e-12
MIN_STEP = 1e-6
MAX_JUMP = np.pi / 2


@dataclass(frozen=True, eq=False)
class DetValue:
    """D(k) together with a branch of its logarithm.

    ``eigenvalues`` are the eigenvalues of the discretized Q0(k) with their
    ``multiplicities``.  ``correction`` collects everything in ``log D`` that
    is not ``sum m_j [log(1 + mu_j) - mu_j]``: for partial-wave matrices this
    is the replacement of the truncated quadratic term by the all-wave
    ``Tr Q0^2`` plus the fitted high-wave tail; for the tensor scheme it is
    zero.
    """

    k: complex
    D: complex
    logD: complex
    eigenvalues: np.ndarray = field(repr=False)
    multiplicities: np.ndarray = field(repr=False)
    correction: complex = 0.0
    branch_path_id: str = "principal"

    @property
    def rho(self) -> float:
        return float(self.logD.real)

    @property
    def phi(self) -> float:
        return float(self.logD.imag)

    @property
    def psi(self) -> complex:
        """Psi(k) = -i log D(k)."""
        return -1j * self.logD

    def with_branch(self, logD: complex, path_id: str) -> "DetValue":
        return replace(self, logD=complex(logD), branch_path_id=path_id)

    def to_dict(self, eigenvalues: bool = True) -> dict:
        """JSON-compatible record; ``eigenvalues=False`` drops the spectrum."""
        out = {
            "k": [self.k.real, self.k.imag],
            "D": [self.D.real, self.D.imag],
            "logD": [self.logD.real, self.logD.imag],
            "correction": [complex(self.correction).real, complex(self.correction).imag],
            "branch_path_id": self.branch_path_id,
        }
        if eigenvalues:
            out["eigenvalues_re"] = np.real(self.eigenvalues).tolist()
            out["eigenvalues_im"] = np.imag(self.eigenvalues).tolist()
            out["multiplicities"] = np.asarray(self.multiplicities).tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "DetValue":
        c = lambda pair: complex(pair[0], pair[1])  # noqa: E731
        mu = np.asarray(d.get("eigenvalues_re", [])) + 1j * np.asarray(d.get("eigenvalues_im", []))
        return cls(c(d["k"]), c(d["D"]), c(d["logD"]), mu,
                   np.asarray(d.get("multiplicities", []), dtype=float),
                   c(d["correction"]), d["branch_path_id"])


def _principal_terms(mu: np.ndarray) -> np.ndarray:
    return np.log(1.0 + mu) - mu


def det2(matrix: OperatorMatrix) -> DetValue:
    """det2(I + Q0) from the eigenvalues of the discretized operator.

    Each eigenvalue contributes ``log(1 + mu) - mu`` on the principal branch.
    For partial-wave matrices the quadratic part is taken from the all-wave
    ``Tr Q0^2`` integral instead of the eigenvalues: it carries the slowly
    converging ``l^-2`` wave tail and the unresolved part of each wave's
    spectrum.  Only the remainder ``log(1 + mu) - mu + mu^2/2`` is summed
    over waves, with a fitted tail that decays like ``l^-4``.
    """
    if matrix.kind != "Q0":
        raise ValueError("det2 needs a Q0 matrix")
    blocks = matrix.blocks
    if not np.all(np.isfinite(blocks)):
        raise EigenSolveFailed(f"non-finite entries in Q0({matrix.k})")
    try:
        mu = np.linalg.eigvals(blocks)
    except np.linalg.LinAlgError as exc:
        raise EigenSolveFailed(str(exc)) from exc
    mult = matrix.multiplicity
    flat_mult = np.repeat(mult, mu.shape[1])
    if np.any(np.abs(1.0 + mu) < ZERO_CLAMP):
        return DetValue(matrix.k, 0j, complex(-np.inf, 0.0), mu.ravel(), flat_mult)
    terms = _principal_terms(mu)
    plain = complex(np.sum(mult[:, None] * terms))
    if matrix.scheme == "radial" and matrix.quadratic is not None:
        cubic = np.sum(terms + 0.5 * mu**2, axis=1)
        logD = complex(matrix.combine(cubic, powers=CUBIC_TAIL_POWERS)) - 0.5 * matrix.quadratic
    else:
        logD = plain
    return DetValue(matrix.k, complex(np.exp(logD)), logD, mu.ravel(), flat_mult, logD - plain)


def series_log(matrix: OperatorMatrix, tol: float = SERIES_TOL, max_terms: int = 400):
    """log det2 from -sum_{n>=2} Tr(-Q0)^n / n, truncated by the remainder bound.

    The remainder after ``n`` terms is bounded by
    ``||Q0||^(n+1) ||Q0||_2^2 / (n + 3)``.  Returns ``(value, terms_used)``.
    Requires ``||Q0|| < 1/2``.
    """
    norm = matrix.operator_norm()
    if norm >= 0.5:
        raise ValueError(f"series seed needs ||Q0|| < 1/2, got {norm:.3f}")
    hs2 = matrix.hs_norm() ** 2
    blocks = matrix.blocks
    power = blocks @ blocks
    per_wave = np.zeros(blocks.shape[0], dtype=complex)
    n = 2
    while norm ** (n + 1) * hs2 / (n + 3) > tol and n < max_terms:
        n += 1
        power = power @ blocks
        per_wave -= (-1) ** n * np.trace(power, axis1=1, axis2=2) / n
    quad = -0.5 * matrix.trace_power(2)
    if matrix.quadratic is None:
        return complex(matrix.combine(per_wave)) + quad, n
    return complex(matrix.combine(per_wave, powers=CUBIC_TAIL_POWERS)) + quad, n


# ---------------------------------------------------------------------------
# evaluation engine
# ---------------------------------------------------------------------------
class DetEngine:
    """Evaluates and memoizes D(k) on one grid.

    ``cache`` may be any mutable mapping keyed by complex ``k`` (the CLI
    passes a disk-backed one).  ``lmax`` pins the number of partial waves;
    by default it grows with ``|k|``.
    """

    def __init__(self, grid: QuadratureGrid, lmax: Optional[int] = None,
                 cache: Optional[MutableMapping] = None):
        self.grid = grid
        self.lmax = lmax
        self.cache = {} if cache is None else cache
        self.assemblies = 0

    @property
    def potential(self) -> Potential:
        return self.grid.potential

    def q0(self, k: complex) -> OperatorMatrix:
        self.assemblies += 1
        return assemble_q0(self.grid, k=k, lmax=self.lmax)

    def value(self, k: complex) -> DetValue:
        k = complex(k)
        hit = self.cache.get(k)
        if hit is not None:
            return hit
        if self.potential.is_zero:
            dv = DetValue(k, 1 + 0j, 0j, np.zeros(0, complex), np.zeros(0))
        else:
            dv = det2(self.q0(k))
        self.cache[k] = dv
        return dv

    def operator_norm(self, k: complex) -> float:
        """||Q0(k)||, memoized under the key ``("norm", k)``."""
        key = ("norm", complex(k))
        hit = self.cache.get(key)
        if hit is None:
            hit = float(self.q0(k).operator_norm())
            self.cache[key] = hit
        return hit

    def series_log(self, k: complex) -> complex:
        """Trace-series value of log det2, memoized under ``("series", k)``."""
        key = ("series", complex(k))
        hit = self.cache.get(key)
        if hit is None:
            hit = complex(series_log(self.q0(k))[0])
            self.cache[key] = hit
        return hit

    def log_derivative(self, k: complex) -> complex:
        return log_derivative(self.grid, k=k, lmax=self.lmax)


def log_derivative(grid: QuadratureGrid, potential: Optional[Potential] = None,
                   k: complex = 0.0, lmax: Optional[int] = None) -> complex:
    """D'(k)/D(k) = -Tr[Q(k) Q0'(k)] with Q = I - (I + Q0)^{-1}.

    Partial-wave matrices are split as in :func:`det2`: the wave sum of
    ``-Tr[(I+M)^{-1} M M'] + Tr[M M']`` plus the all-wave ``-Tr[Q0 Q0']``.
    """
    k = complex(k)
    if (potential or grid.potential).is_zero:
        return 0j
    if lmax is None:
        lmax = grid.lmax_for(k)
    q0 = assemble_q0(grid, potential, k, lmax=lmax)
    dq0 = assemble_q0_prime(grid, potential, k, lmax=lmax)
    n = q0.size
    A = np.eye(n)[None] + q0.blocks
    try:
        X = np.linalg.solve(A, q0.blocks)
    except np.linalg.LinAlgError as exc:
        raise SingularAtEigenvalue(f"I + Q0({k}) is singular") from exc
    if not np.all(np.isfinite(X)) or np.max(np.abs(X)) > 1e12:
        raise SingularAtEigenvalue(f"I + Q0({k}) is numerically singular")
    # (I + Q0)^{-1} Q0 = Q; -Tr[Q Q0']
    per = -np.einsum("lij,lji->l", X, dq0.blocks)
    if q0.scheme == "radial" and dq0.quadratic is not None:
        per = per + np.einsum("lij,lji->l", q0.blocks, dq0.blocks)
        return complex(q0.combine(per, powers=CUBIC_TAIL_POWERS)) - dq0.quadratic
    return complex(q0.combine(per))


# ---------------------------------------------------------------------------
# branch continuation
# ---------------------------------------------------------------------------
def seed_height(engine: DetEngine, tau0: float = 1.0, target: float = SEED_NORM) -> float:
    """Smallest tau (to 5 %) with ||Q0(i tau)|| < target."""

    def norm(t):
        return engine.operator_norm(1j * t)

    lo, hi = 0.0, tau0
    while norm(hi) >= target:
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            raise ValueError("||Q0(i tau)|| does not fall below the seed threshold")
    while hi - lo > 0.05 * hi:
        mid = 0.5 * (lo + hi)
        if norm(mid) < target:
            hi = mid
        else:
            lo = mid
    return hi


def seed_value(engine: DetEngine, k0: complex, path_id: str = "seed") -> DetValue:
    """DetValue at ``k0`` on the branch fixed by the trace series."""
    dv = engine.value(k0)
    if engine.potential.is_zero:
        return dv.with_branch(0j, path_id)
    s = engine.series_log(k0)
    shift = 2j * np.pi * np.round((s - dv.logD).imag / (2 * np.pi))
    return dv.with_branch(dv.logD + shift, path_id)


def _match(prev: complex, new: complex) -> complex:
    return new + 2j * np.pi * np.round((prev - new).imag / (2 * np.pi))


def continue_log(path: Sequence[complex], grid_or_engine, potential: Optional[Potential] = None,
                 seed: Optional[DetValue] = None, path_id: str = "path",
                 min_step: float = MIN_STEP) -> List[DetValue]:
    """Continue log D along ``path`` (returns one DetValue per path point).

    ``path[0]`` must satisfy ``||Q0|| < 1/2`` unless ``seed`` supplies the
    branch there.  Steps whose log D changes by more than pi/2 are halved
    until the change is resolved; a step shorter than ``min_step`` that still
    jumps raises :class:`BranchJumpDetected` (a zero of D lies on or near the
    path).
    """
    engine = grid_or_engine if isinstance(grid_or_engine, DetEngine) else DetEngine(grid_or_engine)
    if potential is not None and potential.spec() != engine.potential.spec():
        raise ValueError("grid was built for a different potential")
    path = [complex(k) for k in path]
    if not path:
        return []
    if seed is None:
        current = seed_value(engine, path[0], path_id)
    else:
        current = seed.with_branch(seed.logD, path_id)
    out = [current]
    for target in path[1:]:
        current = _walk(engine, current, target, path_id, min_step)
        out.append(current)
    return out


def _walk(engine: DetEngine, start: DetValue, target: complex, path_id: str,
          min_step: float) -> DetValue:
    stack = [target]
    current = start
    while stack:
        k = stack[-1]
        dv = engine.value(k)
        if dv.D == 0:
            raise BranchJumpDetected(f"D vanishes at k = {k}", k=k)
        logD = _match(current.logD, dv.logD)
        if abs(logD - current.logD) > MAX_JUMP:
            if abs(k - current.k) < min_step:
                raise BranchJumpDetected(
                    f"unresolved jump of log D between {current.k} and {k}", k=k)
            stack.append(0.5 * (current.k + k))
            continue
        current = dv.with_branch(logD, path_id)
        stack.pop()
    return current


def real_axis_path(tau_seed: float, t_nodes: Sequence[float], step: float = 0.25) -> np.ndarray:
    """i*tau_seed -> t_max + i*tau_seed -> t_max -> decreasing positive t nodes.

    The path stays in Re k > 0, where D has no zeros in the closed upper
    half-plane.  Returns the full path; the last ``len(t_nodes)`` points are
    the requested nodes in decreasing order.
    """
    t = np.sort(np.asarray(t_nodes, dtype=float))[::-1]
    if np.any(t <= 0):
        raise ValueError("t nodes must be positive")
    tmax = t[0]
    n1 = max(2, int(np.ceil(tmax / step)) + 1)
    n2 = max(2, int(np.ceil(tau_seed / step)) + 1)
    top = np.linspace(0.0, tmax, n1) + 1j * tau_seed
    down = tmax + 1j * np.linspace(tau_seed, 0.0, n2)[1:-1]
    return np.concatenate([top, down, t.astype(complex)])


# ---------------------------------------------------------------------------
# Blaschke product and coefficients
# ---------------------------------------------------------------------------
def _kappas(bound_states) -> np.ndarray:
    kap = np.asarray(list(bound_states), dtype=float)
    if np.any(kap <= 0):
        raise ValueError("bound-state momenta must be positive")
    return kap


def blaschke(bound_states: Sequence[float], k: complex) -> complex:
    """B(k) = prod_j (k - i kappa_j)/(k + i kappa_j)."""
    kap = _kappas(bound_states)
    k = complex(k)
    den = k + 1j * kap
    if np.any(np.abs(den) <= 1e-14 * np.maximum(1.0, kap)):
        raise PoleHit(f"k = {k} is a pole of B")
    return complex(np.prod((k - 1j * kap) / den))


def log_blaschke(bound_states: Sequence[float], k: complex) -> complex:
    """Branch of log B analytic off the segments i[-kappa_j, kappa_j].

    Built from principal logarithms of ``1 -+ i kappa/k``, so that
    ``i log B(k) = beta_0/k - beta_2/k^3 + ...`` for large ``|k|``.
    """
    kap = _kappas(bound_states)
    k = complex(k)
    if kap.size == 0:
        return 0j
    if np.any(np.abs(k + 1j * kap) <= 1e-14 * np.maximum(1.0, kap)):
        raise PoleHit(f"k = {k} is a pole of B")
    if k == 0:
        raise PoleHit("log B is not defined at k = 0")
    z = 1j * kap / k
    return complex(np.sum(np.log(1.0 - z) - np.log(1.0 + z)))


def log_blaschke_derivative(bound_states: Sequence[float], k: complex) -> complex:
    """d/dk log B(k) = sum 2 i kappa / (k^2 + kappa^2)."""
    kap = _kappas(bound_states)
    k = complex(k)
    return complex(np.sum(2j * kap / (k * k + kap * kap)))


@dataclass
class BlaschkeData:
    """Bound-state momenta (repeated by multiplicity) and the beta/gamma families."""

    bound_state_momenta: List[float]
    N: int
    beta: Dict[int, float]
    gamma: Dict[int, float]

    def to_dict(self) -> dict:
        return {"bound_state_momenta": list(self.bound_state_momenta), "N": self.N,
                "beta": {str(n): v for n, v in self.beta.items()},
                "gamma": {str(n): v for n, v in self.gamma.items()}}


def beta_n(bound_states: Sequence[float], n: int) -> float:
    """beta_n = 2/(n+1) sum kappa_j^(n+1), n != -1."""
    if n == -1:
        raise ValueError("beta_{-1} is undefined")
    kap = _kappas(bound_states)
    return float(2.0 / (n + 1) * np.sum(kap ** (n + 1)))


def beta_gamma(bound_states: Sequence[float], moments: Moments) -> BlaschkeData:
    """beta_0..beta_4, beta_{-2} and gamma_n = alpha_n - (-1)^n beta_{2n}, n = -1, 0, 1."""
    kap = _kappas(bound_states)
    beta = {n: beta_n(kap, n) for n in (-2, 0, 1, 2, 3, 4)}
    alpha = {-1: moments.alpha_m1, 0: moments.alpha_0, 1: moments.alpha_1}
    gamma = {}
    for n in (-1, 0, 1):
        if alpha[n] is None or np.isnan(alpha[n]):
            continue
        gamma[n] = float(alpha[n] - (-1) ** n * beta[2 * n])
    return BlaschkeData(sorted(kap.tolist()), int(kap.size), beta, gamma)


def db_quotient(detvalue: DetValue, blaschke_data: BlaschkeData) -> DetValue:
    """D_B = D / B with log D_B = log D - log B (branch of :func:`log_blaschke`)."""
    kap = blaschke_data.bound_state_momenta
    if not kap:
        return detvalue
    logB = log_blaschke(kap, detvalue.k)
    logDB = detvalue.logD - logB
    return replace(detvalue, D=detvalue.D / np.exp(logB), logD=complex(logDB))
