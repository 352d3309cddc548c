"""Scattering phase, trace formulas and the identities built on them.

Everything here works from a :class:`RealAxisScan`: values of ``log D`` on
Gauss-Legendre panels of the positive real axis, obtained by branch
continuation from a seed high on the imaginary axis.  Every integrand of
the real-line formulas is even in ``t``, so ``int_R = 2 int_0^inf``; the
principal values at the origin disappear in this symmetric pairing and the
panel nodes never touch ``t = 0``.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre as L

from .determinant import (DetEngine, DetValue, continue_log, log_blaschke,
                          real_axis_path, seed_height)
from .discretize import QuadratureGrid
from .errors import TailNotConverged
from .potential import Moments

PANEL_WIDTH = 1.0
PANEL_ORDER = 8
UNITARITY_TOL = 1e-6
SMALL_D0 = 1e-4
TAIL_TOL = 2e-3
KREIN_NODES = 400
THRESHOLD_POWERS = (0, 1, 3, 5, 7)


# ---------------------------------------------------------------------------
# scattering determinant
# ---------------------------------------------------------------------------
def scattering_det(detvalue: DetValue, alpha_m1: float) -> complex:
    """det S(t) = conj(D(t)) / D(t) * exp(-2 i t alpha_{-1}) for real ``t``."""
    k = complex(detvalue.k)
    if abs(k.imag) > 1e-12 * max(1.0, abs(k)):
        raise ValueError("the scattering determinant is evaluated on the real axis")
    t = k.real
    return complex(np.exp(-2j * detvalue.phi - 2j * t * alpha_m1))


def scattering_phase(detvalue: DetValue, alpha_m1: float) -> float:
    """phi_sc(t) = t alpha_{-1} + arg D(t) on the continued branch."""
    return float(detvalue.k.real * alpha_m1 + detvalue.phi)


# ---------------------------------------------------------------------------
# panel quadrature on (0, T]
# ---------------------------------------------------------------------------
@dataclass
class PanelRule:
    """Composite Gauss-Legendre rule with ``order`` nodes per panel."""

    edges: np.ndarray
    order: int = PANEL_ORDER

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        x, w = L.leggauss(self.order)
        a, b = self.edges[:-1, None], self.edges[1:, None]
        self._x = x
        self.nodes = (0.5 * (a + b) + 0.5 * (b - a) * x).ravel()
        self.weights = (0.5 * (b - a) * w).ravel()

    @property
    def t_max(self) -> float:
        return float(self.edges[-1])

    def _panels(self, values):
        return np.asarray(values).reshape(len(self.edges) - 1, self.order)

    def _coefs(self, values):
        # Legendre interpolant per panel in the local variable x in [-1, 1]
        V = L.legvander(self._x, self.order - 1)
        return np.linalg.solve(V, self._panels(values).T).T

    def derivative(self, values) -> np.ndarray:
        """Derivative of the panel interpolants at the nodes."""
        c = self._coefs(values)
        half = 0.5 * np.diff(self.edges)
        out = [L.legval(self._x, L.legder(ci)) / h for ci, h in zip(c, half)]
        return np.concatenate(out)

    def interpolate(self, values, t, derivative: bool = False) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.edges[0] - 1e-12) or np.any(t > self.edges[-1] + 1e-12):
            raise ValueError("interpolation point outside the scan")
        c = self._coefs(values)
        j = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.edges) - 2)
        a, b = self.edges[j], self.edges[j + 1]
        x = (2 * t - a - b) / (b - a)
        out = np.empty_like(t)
        for i, (ji, xi) in enumerate(zip(j, x)):
            ci = L.legder(c[ji]) * 2 / (b[i] - a[i]) if derivative else c[ji]
            out[i] = L.legval(xi, ci)
        return out

    def dense(self, per_panel: int = 64):
        """Fine sample points (for minima of interpolants)."""
        x = np.linspace(-1, 1, per_panel)
        a, b = self.edges[:-1, None], self.edges[1:, None]
        return (0.5 * (a + b) + 0.5 * (b - a) * x).ravel()


def panel_rule(t_max: float, width: float = PANEL_WIDTH, order: int = PANEL_ORDER) -> PanelRule:
    n = max(1, int(np.ceil(t_max / width - 1e-9)))
    return PanelRule(np.linspace(0.0, t_max, n + 1), order)


# ---------------------------------------------------------------------------
# real-axis scan
# ---------------------------------------------------------------------------
@dataclass
class RealAxisScan:
    """Continued log D on a symmetric grid of the real axis.

    ``values`` holds one :class:`DetValue` per entry of ``t`` (ascending,
    negative half first).  ``threshold`` holds values at ``delta/2, delta,
    3 delta/2, 2 delta, 3 delta`` with ``delta`` the first positive node, for
    the one-sided derivative at ``+0``.
    """

    t: np.ndarray
    values: List[DetValue]
    rule: PanelRule
    alpha_m1: float
    bound_state_momenta: List[float] = field(default_factory=list)
    threshold: List[DetValue] = field(default_factory=list)
    origin: Optional[DetValue] = None
    mirror: str = "reflect"

    # -- basic series ------------------------------------------------------
    @property
    def t_max(self) -> float:
        return self.rule.t_max

    @property
    def N(self) -> int:
        return len(self.bound_state_momenta)

    @property
    def positive(self) -> np.ndarray:
        return self.t > 0

    @property
    def logD(self) -> np.ndarray:
        return np.array([v.logD for v in self.values])

    @property
    def D(self) -> np.ndarray:
        return np.array([v.D for v in self.values])

    @property
    def phi(self) -> np.ndarray:
        return self.logD.imag

    @property
    def rho(self) -> np.ndarray:
        return self.logD.real

    @property
    def phi_sc(self) -> np.ndarray:
        return self.t * self.alpha_m1 + self.phi

    def arg_blaschke(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not self.bound_state_momenta:
            return np.zeros_like(t)
        return np.array([log_blaschke(self.bound_state_momenta, ti).imag for ti in t])

    def darg_blaschke(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        kap = np.asarray(self.bound_state_momenta, dtype=float)
        return np.sum(2 * kap[None, :] / (t[:, None] ** 2 + kap[None, :] ** 2), axis=1)

    @property
    def phi_B(self) -> np.ndarray:
        return self.phi - self.arg_blaschke(self.t)

    @property
    def rho_B(self) -> np.ndarray:
        return self.rho

    # -- positive half -----------------------------------------------------
    def half(self, series) -> np.ndarray:
        """Restriction of a full-grid series to the positive panel nodes."""
        return np.asarray(series)[self.positive]

    @property
    def dphi(self) -> np.ndarray:
        """phi'(t) on the full grid from the panel interpolants (phi' is even)."""
        d = self.rule.derivative(self.half(self.phi))
        return np.concatenate([d[::-1], d])

    @property
    def dphi_B(self) -> np.ndarray:
        return self.dphi - self.darg_blaschke(self.t)

    def phi_B_prime_at(self, t) -> np.ndarray:
        t = np.abs(np.atleast_1d(np.asarray(t, dtype=float)))
        return self.rule.interpolate(self.half(self.phi), t, derivative=True) - self.darg_blaschke(t)

    def phi_sc_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.alpha_m1 * t + self.rule.interpolate(self.half(self.phi), t)

    # -- invariants --------------------------------------------------------
    def scattering_dets(self) -> np.ndarray:
        return np.array([scattering_det(v, self.alpha_m1) for v in self.values])

    def unitarity_defect(self) -> float:
        S = self.scattering_dets()
        return float(np.max(np.abs(np.abs(S) - 1.0), initial=0.0))

    def oddness_defect(self) -> float:
        """max |phi(t) + phi(-t)| and |rho(t) - rho(-t)| over mirrored nodes."""
        n = len(self.t) // 2
        lo, hi = self.logD[:n][::-1], self.logD[n:]
        return float(np.max(np.abs(np.concatenate([lo.imag + hi.imag, lo.real - hi.real])),
                            initial=0.0))

    # -- threshold ---------------------------------------------------------
    @property
    def delta(self) -> float:
        return float(self.rule.nodes[0])

    def _threshold_phi(self):
        return np.array([v.phi for v in self.threshold])

    def _threshold_fit(self) -> np.ndarray:
        """Coefficients of ``phi(t) = c0 + c1 t + c3 t^3 + c5 t^5 + c7 t^7`` near +0.

        ``phi - phi(+0)`` is odd in ``t`` because ``D(-t) = conj D(t)``, so
        the five threshold values determine an odd interpolant exactly.
        """
        x = np.array([v.k.real for v in self.threshold])
        A = np.stack([x**p for p in THRESHOLD_POWERS], axis=1)
        return np.linalg.solve(A, self._threshold_phi())

    def phi_sc_prime_at_zero(self) -> float:
        """One-sided derivative of phi_sc at +0 from the odd threshold fit."""
        if not self.threshold:
            return float(self.alpha_m1)
        return float(self.alpha_m1 + self._threshold_fit()[1])

    def phi_sc_at_zero(self) -> float:
        """phi_sc(+0), the constant of the odd threshold fit."""
        if not self.threshold:
            return 0.0
        return float(self._threshold_fit()[0])

    # -- export ------------------------------------------------------------
    def rows(self) -> List[dict]:
        dphiB = self.dphi_B
        out = []
        for i, v in enumerate(self.values):
            out.append({"t": float(self.t[i]), "ReD": v.D.real, "ImD": v.D.imag, "rho": v.rho,
                        "phi": v.phi, "phi_sc": float(self.phi_sc[i]),
                        "phi_B": float(self.phi_B[i]), "rho_B": float(self.rho_B[i]),
                        "dphiB_dt": float(dphiB[i])})
        return out

    def to_dict(self) -> dict:
        return {
            "t": self.t.tolist(),
            "values": [v.to_dict(eigenvalues=False) for v in self.values],
            "edges": self.rule.edges.tolist(),
            "order": self.rule.order,
            "alpha_m1": self.alpha_m1,
            "bound_state_momenta": list(self.bound_state_momenta),
            "threshold": [v.to_dict(eigenvalues=False) for v in self.threshold],
            "origin": None if self.origin is None else self.origin.to_dict(eigenvalues=False),
            "mirror": self.mirror,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RealAxisScan":
        return cls(np.asarray(d["t"]), [DetValue.from_dict(v) for v in d["values"]],
                   PanelRule(np.asarray(d["edges"]), d["order"]), d["alpha_m1"],
                   list(d["bound_state_momenta"]),
                   [DetValue.from_dict(v) for v in d["threshold"]],
                   None if d["origin"] is None else DetValue.from_dict(d["origin"]),
                   d["mirror"])


def _det_worker(args):
    grid, lmax, k = args
    return DetEngine(grid, lmax=lmax).value(k)


def prefetch(engine: DetEngine, ks: Sequence[complex], workers: int = 1) -> None:
    """Fill ``engine.cache`` for ``ks`` using a process pool of ``workers``."""
    todo = [complex(k) for k in ks if complex(k) not in engine.cache]
    if workers <= 1 or len(todo) < 2:
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for k, dv in zip(todo, ex.map(_det_worker, [(engine.grid, engine.lmax, k) for k in todo],
                                      chunksize=max(1, len(todo) // (4 * workers)))):
            engine.cache[k] = dv


def _reflect(dv: DetValue) -> DetValue:
    """Value at -conj(k) from D(-conj k) = conj D(k)."""
    return DetValue(-np.conj(dv.k), np.conj(dv.D), np.conj(dv.logD), np.conj(dv.eigenvalues),
                    dv.multiplicities, np.conj(dv.correction), dv.branch_path_id + ":reflected")


def build_scan(grid_or_engine, t_max: float, alpha_m1: float,
               bound_state_momenta: Sequence[float] = (), panel_width: float = PANEL_WIDTH,
               order: int = PANEL_ORDER, mirror: str = "reflect", workers: int = 1) -> RealAxisScan:
    """Continue log D from ``i tau_seed`` to the scan nodes on ``(0, t_max]``.

    The negative half comes from the conjugation symmetry (``mirror="reflect"``)
    or from an independent continuation along the mirrored path
    (``mirror="continue"``), which is what the oddness invariant checks.
    """
    if mirror not in ("reflect", "continue"):
        raise ValueError("mirror must be 'reflect' or 'continue'")
    engine = grid_or_engine if isinstance(grid_or_engine, DetEngine) else DetEngine(grid_or_engine)
    rule = panel_rule(t_max, panel_width, order)
    nodes = rule.nodes
    d = nodes[0]
    thresh_t = d * np.array([0.5, 1.0, 1.5, 2.0, 3.0])
    targets = np.unique(np.concatenate([nodes, thresh_t]))
    p = engine.potential
    if p.is_zero:
        dv = lambda k: DetValue(complex(k), 1 + 0j, 0j, np.zeros(0, complex), np.zeros(0))  # noqa: E731
        pos = [dv(t) for t in nodes]
        thr = [dv(t) for t in thresh_t]
        origin = dv(0.0)
    else:
        scale = 1.0 / p.width if p.radial else 1.0
        tau = seed_height(engine, tau0=scale)
        path = real_axis_path(tau, targets)
        prefetch(engine, path, workers)
        walked = continue_log(path, engine, path_id="scan+")
        by_t = {float(v.k.real): v for v in walked[-len(targets):]}
        pos = [by_t[float(t)] for t in nodes]
        thr = [by_t[float(t)] for t in thresh_t]
        origin = engine.value(0.0)
    if mirror == "continue" and not p.is_zero:
        path = -np.conj(real_axis_path(tau, nodes))
        prefetch(engine, path, workers)
        walked = continue_log(path, engine, path_id="scan-")
        neg = walked[-len(nodes):]
    else:
        neg = [_reflect(v) for v in pos]
    # ascending order: -t_max ... -delta, delta ... t_max
    neg_sorted = sorted(neg, key=lambda v: v.k.real)
    t = np.concatenate([-nodes[::-1], nodes])
    return RealAxisScan(t, neg_sorted + pos, rule, float(alpha_m1),
                        sorted(float(x) for x in bound_state_momenta), thr, origin, mirror)


# ---------------------------------------------------------------------------
# trace formulas
# ---------------------------------------------------------------------------
@dataclass
class FormulaRecord:
    """One identity: ``lhs`` against ``rhs``.

    ``rel_err`` is ``abs_err / max(|rhs|, scale)`` where ``scale`` is the
    L1 size of the terms on the left; this keeps the figure meaningful when
    the right-hand side vanishes (no bound states).
    """

    name: str
    lhs: float
    rhs: float
    abs_err: float
    rel_err: float
    tail_estimate: float
    scale: float = 0.0
    note: str = ""


def _record(name, lhs, rhs, tail, scale, note="") -> FormulaRecord:
    err = abs(lhs - rhs)
    den = max(abs(rhs), scale)
    rel = 0.0 if err == 0 else (err / den if den > 0 else float("inf"))
    return FormulaRecord(name, float(lhs), float(rhs), float(err), float(rel), float(tail),
                         float(scale), note)


@dataclass
class TraceReport:
    records: Dict[str, FormulaRecord] = field(default_factory=dict)
    levinson: Optional[dict] = None
    extra: Dict[str, dict] = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)

    def add(self, rec: FormulaRecord):
        self.records[rec.name] = rec

    def to_dict(self) -> dict:
        return {"records": {k: asdict(v) for k, v in self.records.items()},
                "levinson": self.levinson, "extra": self.extra, "warnings": list(self.warnings)}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "lhs", "rhs", "abs_err", "rel_err", "tail_estimate"])
        for r in self.records.values():
            w.writerow([r.name] + [f"{float(x):.17g}" for x in
                                   (r.lhs, r.rhs, r.abs_err, r.rel_err, r.tail_estimate)])
        return buf.getvalue()


def _fit(t, y, powers):
    A = np.stack([t ** (-float(p)) for p in powers], axis=1)
    s = np.abs(A).max(axis=0)
    c, *_ = np.linalg.lstsq(A / s, y, rcond=None)
    return c / s


def _tail(coefs, powers, T, weight=0):
    """int_T^inf t^weight sum_p c_p t^-p dt."""
    return float(sum(c * T ** (weight - p + 1) / (p - weight - 1) for c, p in zip(coefs, powers)))


class _TailModel:
    """Fitted inverse-power remainder of a scan series, on two windows.

    ``floor=True`` adds a constant to the fit. It absorbs the discretization
    offset of log|D| (the collocation error of the cubic wave remainder,
    which decays like N^-5 but does not decay in t) and is left out of the
    analytic tail.
    """

    def __init__(self, t, y, powers, floor=False):
        T = t.max()
        self.T = T
        self.powers = powers
        fit_powers = ((0,) if floor else ()) + tuple(powers)
        self.skip = 1 if floor else 0
        wide = t >= 0.5 * T
        narrow = t >= 0.75 * T
        self.c = _fit(t[wide], y[wide], fit_powers)[self.skip:]
        if narrow.sum() > len(fit_powers):
            self.c_alt = _fit(t[narrow], y[narrow], fit_powers)[self.skip:]
        else:
            self.c_alt = self.c

    def integral(self, weight=0):
        a = _tail(self.c, self.powers, self.T, weight)
        b = _tail(self.c_alt, self.powers, self.T, weight)
        return a, abs(a - b)


def trace_formula_suite(scan: RealAxisScan, blaschke_data, moments: Moments,
                        tail_tol: float = TAIL_TOL) -> TraceReport:
    """The five real-line trace formulas, with Levinson's theorem.

    Raises :class:`TailNotConverged` (with the partial report attached) when
    the two fitted tails of some integrand differ by more than ``tail_tol``
    relative to the formula's scale.
    """
    rep = TraceReport()
    t = scan.half(scan.t)
    w = scan.rule.weights
    phi = scan.half(scan.phi)
    rho = scan.half(scan.rho)
    T = scan.t_max
    a0, a1 = moments.alpha_0, moments.alpha_1
    beta, gamma = blaschke_data.beta, blaschke_data.gamma
    unstable = []

    def integral(y, tail, spread, name):
        val = 2 / np.pi * (np.dot(w, y) + tail)
        scale = 2 / np.pi * (np.dot(w, np.abs(y)) + abs(tail))
        if spread * 2 / np.pi > tail_tol * max(scale, 1e-300) and spread > 1e-14:
            unstable.append(name)
        return val, scale, 2 / np.pi * tail

    zero = scan.values and all(v.logD == 0 for v in scan.values)
    # phi = -a0/t - a1/t^3 + r,  r ~ c5/t^5 + c7/t^7
    if a1 is not None:
        rem = phi + a0 / t + a1 / t**3
        phi_model = _TailModel(t, rem, (5, 7))
    else:
        rem = phi + a0 / t
        phi_model = _TailModel(t, rem, (3, 5))
    rho_model = _TailModel(t, rho, (4, 6), floor=True)

    # (1.22)  (1/pi) int t [arg D + a0/t] dt = beta_1
    tr, sp = phi_model.integral(weight=1)
    tail = tr - (a1 / T if a1 is not None else 0.0)
    lhs, scale, te = integral(t * phi + a0, tail, sp, "1.22")
    rep.add(_record("1.22", lhs, beta[1], te, scale))

    # (1.23)  (1/pi) int t^3 [arg D + a0/t + a1/t^3] dt = -beta_3
    if a1 is not None:
        tr, sp = phi_model.integral(weight=3)
        lhs, scale, te = integral(t**3 * rem, tr, sp, "1.23")
        rep.add(_record("1.23", lhs, -beta[3], te, scale))

    # (1.24)  (1/pi) int log|D| dt = -gamma_0
    tr, sp = rho_model.integral(weight=0)
    lhs, scale, te = integral(rho, tr, sp, "1.24")
    rep.add(_record("1.24", lhs, -gamma[0], te, scale))

    # (1.25)  (1/pi) int t^2 log|D| dt = -gamma_1
    if 1 in gamma:
        tr, sp = rho_model.integral(weight=2)
        lhs, scale, te = integral(t**2 * rho, tr, sp, "1.25")
        rep.add(_record("1.25", lhs, -gamma[1], te, scale))

    # (1.26)  (1/pi) int (log|D| - log|D(0)|)/t^2 dt + phi_sc'(+0) = gamma_{-1}
    rho0 = scan.origin.rho if scan.origin is not None else 0.0
    if scan.origin is not None and abs(scan.origin.D) < SMALL_D0:
        msg = f"|D(0)| = {abs(scan.origin.D):.3g} is small; the threshold formula is unreliable"
        warnings.warn(msg)
        rep.warnings.append(msg)
    tr, sp = rho_model.integral(weight=-2)
    tail = tr - rho0 / T
    lhs, scale, te = integral((rho - rho0) / t**2, tail, sp, "1.26")
    dphi0 = scan.phi_sc_prime_at_zero()
    # the threshold identity holds with alpha_{-1} + 2 sum 1/kappa_j; the
    # general gamma_n rule at n = -1 flips the sign of the bound-state part
    kap = np.asarray(blaschke_data.bound_state_momenta, dtype=float)
    rhs = moments.alpha_m1 + 2 * float(np.sum(1 / kap)) if kap.size else gamma[-1]
    note = f"gamma_-1 by the general rule: {gamma[-1]!r}" if kap.size else ""
    rep.add(_record("1.26", lhs + dphi0, rhs, te, scale + abs(dphi0), note))

    lev = scan.phi_sc_at_zero()
    rep.levinson = {"phi_sc_at_zero": lev, "minus_pi_N": -np.pi * scan.N,
                    "abs_err": abs(lev + np.pi * scan.N)}
    if zero:
        for r in rep.records.values():
            r.tail_estimate = 0.0
    if unstable:
        raise TailNotConverged(f"tail fits disagree for {', '.join(unstable)}", partial=rep)
    return rep


# ---------------------------------------------------------------------------
# Hilbert transform and Dirichlet integral
# ---------------------------------------------------------------------------
def hilbert_identity(scan: RealAxisScan, blaschke_data=None) -> FormulaRecord:
    """(1/pi) int arg D_B(t) / t dt against log|D(0)|.

    The tail uses ``arg D_B = -gamma_0/t - gamma_1/t^3 + c/t^5`` with the
    gammas from ``blaschke_data`` when given (else they are fitted).
    """
    t = scan.half(scan.t)
    w = scan.rule.weights
    phiB = scan.half(scan.phi_B)
    T = scan.t_max
    rhs = scan.origin.rho if scan.origin is not None else 0.0
    if np.all(phiB == 0):
        return _record("hilbert", 0.0, rhs, 0.0, 0.0)
    if blaschke_data is not None and 1 in blaschke_data.gamma:
        g0, g1 = blaschke_data.gamma[0], blaschke_data.gamma[1]
        model = _TailModel(t, phiB + g0 / t + g1 / t**3, (5, 7))
        tr, _ = model.integral(weight=-1)
        tail = -g0 / T - g1 / (3 * T**3) + tr
    else:
        model = _TailModel(t, phiB, (1, 3, 5))
        tail, _ = model.integral(weight=-1)
    y = phiB / t
    lhs = 2 / np.pi * (np.dot(w, y) + tail)
    scale = 2 / np.pi * (np.dot(w, np.abs(y)) + abs(tail))
    rec = _record("hilbert", lhs, rhs, 2 / np.pi * tail, max(scale, 0.0))
    # the documented criterion is relative to |log|D(0)||
    rec.rel_err = float(rec.abs_err / abs(rhs)) if rhs != 0 else rec.rel_err
    return rec


@dataclass
class DirichletRecord:
    lhs_dirichlet: float
    m_B: float
    S0: float
    rhs: float
    tail_estimate: float
    lhs: float = 0.0
    abs_err: float = 0.0
    rel_err: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _geometric_edges(R: float, first: float = 0.5) -> np.ndarray:
    edges = [0.0, first]
    while edges[-1] * 2 < R:
        edges.append(edges[-1] * 2)
    edges.append(R)
    return np.array(edges)


def dirichlet_identity(scan: RealAxisScan, engine, blaschke_data, moments: Moments,
                       radius: Optional[float] = None, r_order: int = 6, theta_nodes: int = 8,
                       workers: int = 1) -> DirichletRecord:
    """(1/pi) iint_{C+} |d/dk log D_B|^2 + S_0 against m_B gamma_0.

    The half-disc ``|k| <= radius`` (default ``scan.t_max``) is covered by a
    polar Gauss-Legendre grid, using the symmetry ``theta -> pi - theta``.
    Beyond it ``|d/dk log D_B| ~ gamma_0 / |k|^2`` contributes
    ``gamma_0^2 / (2 R^2)``.
    """
    if isinstance(engine, QuadratureGrid):
        engine = DetEngine(engine)
    g0 = blaschke_data.gamma[0]
    R = scan.t_max if radius is None else float(radius)
    # m_B from the dense interpolant of phi_B' (phi_B' -> 0+ at infinity)
    dense = scan.rule.dense()
    dense = dense[dense > 0]
    dpb = scan.phi_B_prime_at(dense)
    grid_min = float(np.min(scan.half(scan.dphi_B)))
    m_B = -min(float(np.min(dpb)), grid_min, 0.0)
    # S0 = -(1/pi) int_R rho (m_B + phi_B') dt
    t = scan.half(scan.t)
    rho = scan.half(scan.rho)
    y = rho * (m_B + scan.half(scan.dphi_B))
    rho_model = _TailModel(t, rho, (4, 6), floor=True)
    tail_s0 = m_B * rho_model.integral(weight=0)[0]
    S0 = -2 / np.pi * (np.dot(scan.rule.weights, y) + tail_s0)
    if engine.potential.is_zero:
        return DirichletRecord(0.0, m_B, S0, 0.0, 0.0, 0.0, 0.0, 0.0)
    # polar grid
    edges = _geometric_edges(R)
    xr, wr = L.leggauss(r_order)
    a, b = edges[:-1, None], edges[1:, None]
    rn = (0.5 * (a + b) + 0.5 * (b - a) * xr).ravel()
    rw = (0.5 * (b - a) * wr).ravel()
    xt, wt = L.leggauss(theta_nodes)
    th = np.pi / 4 * (xt + 1)  # (0, pi/2)
    tw = np.pi / 4 * wt
    kap = np.asarray(blaschke_data.bound_state_momenta, dtype=float)
    ks = (rn[:, None] * np.exp(1j * th[None, :])).ravel()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            ld = np.array(list(ex.map(_logder_worker, [(engine.grid, engine.lmax, k) for k in ks])))
    else:
        ld = np.array([engine.log_derivative(k) for k in ks])
    if kap.size:
        ld = ld - np.array([np.sum(2j * kap / (k * k + kap * kap)) for k in ks])
    vals = np.abs(ld.reshape(len(rn), len(th))) ** 2
    area = 2 * np.sum(rw[:, None] * rn[:, None] * tw[None, :] * vals)
    tail = np.pi * g0**2 / (2 * R**2)
    lhs_d = (area + tail) / np.pi
    rhs = m_B * g0
    lhs = lhs_d + S0
    err = abs(lhs - rhs)
    den = max(abs(rhs), abs(lhs_d) + abs(S0))
    return DirichletRecord(float(lhs_d), float(m_B), float(S0), float(rhs), float(tail / np.pi),
                           float(lhs), float(err), float(err / den if den else 0.0))


def _logder_worker(args):
    grid, lmax, k = args
    return DetEngine(grid, lmax=lmax).log_derivative(k)


# ---------------------------------------------------------------------------
# Krein trace formula
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class BumpFunction:
    """f(E) = exp(1 - 1/(1 - u^2)), u = (E - center)/half_width, zero for |u| >= 1."""

    center: float
    half_width: float

    @classmethod
    def on_interval(cls, lo: float, hi: float) -> "BumpFunction":
        return cls(0.5 * (lo + hi), 0.5 * (hi - lo))

    @property
    def support(self):
        return self.center - self.half_width, self.center + self.half_width

    def __call__(self, E):
        u = (np.asarray(E, dtype=float) - self.center) / self.half_width
        out = np.zeros_like(u)
        m = np.abs(u) < 1
        out[m] = np.exp(1.0 - 1.0 / (1.0 - u[m] ** 2))
        return out

    def derivative(self, E):
        u = (np.asarray(E, dtype=float) - self.center) / self.half_width
        out = np.zeros_like(u)
        m = np.abs(u) < 1
        q = 1.0 - u[m] ** 2
        out[m] = np.exp(1.0 - 1.0 / q) * (-2 * u[m] / q**2) / self.half_width
        return out


@dataclass
class KreinRecord:
    ssf_side: float
    resonance_side: float
    lattice_side: Optional[float] = None
    abs_err: float = 0.0
    rel_err: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def _positive_t_rule(f: BumpFunction, n: int = KREIN_NODES):
    lo, hi = f.support
    t_lo = np.sqrt(max(lo, 0.0))
    t_hi = np.sqrt(max(hi, 0.0))
    if t_hi <= t_lo:
        return np.zeros(0), np.zeros(0)
    x, w = L.leggauss(n)
    return 0.5 * (t_lo + t_hi) + 0.5 * (t_hi - t_lo) * x, 0.5 * (t_hi - t_lo) * w


def krein_trace(f: BumpFunction, scan: RealAxisScan, catalog, hadamard, moments: Moments,
                radius: Optional[float] = None, lattice: Optional[float] = None) -> KreinRecord:
    """Tr(f(H) - f(H0)) from the spectral shift function and from the resonances.

    ``ssf_side``: ``sum f(-lam_j) - N f(0) + (1/pi) int_0^inf phi_sc(sqrt E) f'(E) dE``.
    ``resonance_side``: ``sum f(-lam_j) - (alpha_{-1}/pi) int_0^inf f(t^2) dt
    - (1/pi) int_0^inf f(t^2) phi'(t) dt`` with the Breit-Wigner phi'.
    """
    from .spectral import breit_wigner_phi_prime

    kap = np.asarray(scan.bound_state_momenta, dtype=float)
    bound = float(np.sum(f(-kap**2))) if kap.size else 0.0
    t, w = _positive_t_rule(f)
    if t.size and t.max() > scan.t_max:
        raise ValueError("the support of f reaches beyond the scan")
    ssf = bound - kap.size * float(f(np.array([0.0]))[0])
    if t.size:
        ssf += float(np.dot(w, scan.phi_sc_at(t) * f.derivative(t**2) * 2 * t)) / np.pi
    res = bound
    if t.size:
        fv = f(t**2)
        res -= moments.alpha_m1 / np.pi * float(np.dot(w, fv))
        if catalog is not None or hadamard is not None:
            dphi = np.array([breit_wigner_phi_prime(ti, hadamard, catalog, radius) for ti in t])
        else:
            dphi = scan.phi_B_prime_at(t) + scan.darg_blaschke(t)
        res -= float(np.dot(w, fv * dphi)) / np.pi
    err = abs(ssf - res)
    den = abs(ssf)
    return KreinRecord(ssf, res, lattice, err, err / den if den else (0.0 if err == 0 else np.inf))
