"""Command-line driver: ``detscope moments|scan|spectrum|trace-check|report``.

Every command reads a JSON run configuration, evaluates what it needs through
a content-addressed on-disk cache of determinant values, and writes its
outputs into the output directory.  Floating-point output uses 17
significant digits so that every file round-trips losslessly.

Exit codes: 0 success, 1 unexpected failure, 2 configuration error,
3 non-differentiable potential, 4 branch jump on a continuation path,
5 search region deeper than the grid supports, 6 trace-formula tails did not
converge (partial results are still written).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
import tempfile
from collections.abc import MutableMapping
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, List, Optional

import numpy as np

from . import __version__
from .determinant import DetEngine, DetValue, beta_gamma
from .discretize import MAX_RADIAL_NODES, MAX_TENSOR_NODES, build_grid
from .errors import (BranchJumpDetected, DepthLimitExceeded, NotDifferentiable,
                     TailNotConverged)
from .potential import KINDS, from_spec, moments
from .reference import lattice_trace
from .spectral import (BoundState, HadamardData, Region, SpectralCatalog,
                       breit_wigner_convergence, find_bound_states, find_resonances,
                       hadamard_fit)
from .traceform import (PANEL_ORDER, PANEL_WIDTH, TAIL_TOL, BumpFunction, TraceReport,
                        build_scan, dirichlet_identity, hilbert_identity, krein_trace,
                        trace_formula_suite)

log = logging.getLogger("detscope")

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NOT_DIFFERENTIABLE = 3
EXIT_BRANCH_JUMP = 4
EXIT_DEPTH_LIMIT = 5
EXIT_TAIL = 6
CACHE_ENV = "DETSCOPE_CACHE"


class ConfigError(ValueError):
    """The run configuration is malformed or out of range."""


# ---------------------------------------------------------------------------
# lossless text output
# ---------------------------------------------------------------------------
def fmt(x) -> str:
    """A number with 17 significant digits (``nan``/``inf`` spelled out)."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float printed to 17 significant digits.

    Non-finite floats become ``null`` so that the output stays valid JSON.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, complex):
        return dumps([obj.real, obj.imag], indent, _level)
    if obj is None:
        return "null"
    return json.dumps(obj)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=path.suffix)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header: List[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
@dataclass
class Tolerances:
    quadrature: float = 1e-7
    newton: float = 1e-13
    zero_residual: float = 1e-8
    contour: float = 0.05
    tail: float = TAIL_TOL


@dataclass
class RunConfig:
    """Everything a command needs; JSON keys use hyphens (``t-max``)."""

    potential: dict
    resolution: int = 48
    scheme: str = "radial"
    lmax: Optional[int] = None
    t_max: float = 8.0
    scan_step: float = PANEL_WIDTH
    panel_order: int = PANEL_ORDER
    region: List[float] = field(default_factory=lambda: [-4.0, 4.0, -1.0, 0.0])
    tolerances: Tolerances = field(default_factory=Tolerances)
    workers: int = 1
    cache: Optional[str] = None
    out: str = "out"
    include_alpha1: Optional[bool] = None
    catalog_radii: List[float] = field(default_factory=lambda: [3.0, 4.0, 5.0, 6.0])
    krein_support: List[float] = field(default_factory=lambda: [0.25, 4.0])
    krein_lattice: Optional[List[float]] = None  # [box radius, spacing]
    refinement: List[List[float]] = field(
        default_factory=lambda: [[32, 6.0, 1.0], [48, 8.0, 0.75], [64, 10.0, 0.5]])
    base_dir: Optional[str] = None

    def __post_init__(self):
        if isinstance(self.tolerances, dict):
            known = {f.name for f in fields(Tolerances)}
            tol = {_py(k): v for k, v in self.tolerances.items()}
            unknown = set(tol) - known
            if unknown:
                raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
            self.tolerances = Tolerances(**tol)
        self.validate()

    def validate(self) -> None:
        kind = self.potential.get("kind") if isinstance(self.potential, dict) else None
        if kind not in KINDS + ("zero",):
            raise ConfigError(f"unknown potential kind {kind!r}")
        if kind not in ("zero", "grid-sampled") and "depth" not in self.potential:
            raise ConfigError("potential needs a depth")
        if self.scheme not in ("radial", "tensor"):
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if int(self.resolution) != self.resolution or self.resolution < 2:
            raise ConfigError("resolution must be an integer >= 2")
        budget = MAX_RADIAL_NODES if self.scheme == "radial" else MAX_TENSOR_NODES
        size = self.resolution if self.scheme == "radial" else self.resolution**3
        if size > budget:
            raise ConfigError(f"resolution {self.resolution} exceeds the node budget {budget}")
        for name, value in asdict(self.tolerances).items():
            if not value > 0:
                raise ConfigError(f"tolerance {name} must be > 0")
        for name in ("t_max", "scan_step"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{_json(name)} must be > 0")
        if len(self.region) != 4:
            raise ConfigError("region is [re-min, re-max, im-min, im-max]")
        a, b, c, d = self.region
        if not (a < b and c < d):
            raise ConfigError("region must have re-min < re-max and im-min < im-max")
        if d > 0:
            raise ConfigError("resonance regions lie in Im k <= 0")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        lo, hi = self.krein_support
        if not 0 <= lo < hi:
            raise ConfigError("krein-support must satisfy 0 <= lo < hi")
        if self.krein_lattice is not None and (len(self.krein_lattice) != 2
                                               or min(self.krein_lattice) <= 0):
            raise ConfigError("krein-lattice is [box radius, spacing] or null")
        for level in self.refinement:
            if len(level) != 3 or min(level) <= 0:
                raise ConfigError("refinement levels are [resolution, t-max, scan-step]")

    # -- JSON ----------------------------------------------------------------
    def to_dict(self) -> dict:
        out = {"schema-version": SCHEMA_VERSION}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            value = getattr(self, f.name)
            if f.name == "tolerances":
                value = {_json(k): v for k, v in asdict(value).items()}
            out[_json(f.name)] = value
        return out

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[str] = None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("the configuration must be a JSON object")
        version = d.get("schema-version")
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema-version must be {SCHEMA_VERSION}, got {version!r}")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        kw = {_py(k): v for k, v in d.items() if k != "schema-version"}
        unknown = set(kw) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(_json(k) for k in unknown)}")
        if "potential" not in kw:
            raise ConfigError("the configuration needs a potential")
        try:
            return cls(base_dir=base_dir, **kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
        return cls.from_dict(data, base_dir=str(path.parent))

    # -- derived objects -------------------------------------------------------
    def build_potential(self):
        try:
            return from_spec(self.potential, Path(self.base_dir) if self.base_dir else None)
        except (KeyError, ValueError, OSError) as exc:
            raise ConfigError(f"bad potential: {exc}") from exc


def _json(name: str) -> str:
    return name.replace("_", "-")


def _py(name: str) -> str:
    return name.replace("-", "_")


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------
def _key_text(key) -> Any:
    if isinstance(key, (complex, float, int)) and not isinstance(key, bool):
        z = complex(key)
        return ["k", z.real.hex(), z.imag.hex()]
    if isinstance(key, tuple):
        return [_key_text(part) for part in key]
    return key


def _encode(value) -> dict:
    if isinstance(value, DetValue):
        return {"type": "DetValue", "value": value.to_dict()}
    if isinstance(value, complex):
        return {"type": "complex", "value": [value.real, value.imag]}
    if isinstance(value, float):
        return {"type": "float", "value": value}
    return {"type": "json", "value": value}


def _decode(record: dict):
    kind, value = record["type"], record["value"]
    if kind == "DetValue":
        return DetValue.from_dict(value)
    if kind == "complex":
        return complex(value[0], value[1])
    if kind == "float":
        return float(value)
    return value


class ScanCache(MutableMapping):
    """Content-addressed disk cache, one JSON file per key.

    The file name is the SHA-256 of the namespace (potential spec, grid
    resolution, scheme, wave count) together with the key, so entries of
    different runs collide only when their inputs agree.  Values written are
    read back bit-exactly.  ``hits`` counts keys served from disk.
    """

    def __init__(self, directory, namespace: dict):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.namespace = json.loads(json.dumps(namespace, sort_keys=True))
        self.hits = 0
        self.stores = 0
        self._memory = {}

    def path(self, key) -> Path:
        text = json.dumps({"namespace": self.namespace, "key": _key_text(key)}, sort_keys=True)
        return self.directory / (hashlib.sha256(text.encode()).hexdigest() + ".json")

    def __getitem__(self, key):
        if key in self._memory:
            return self._memory[key]
        path = self.path(key)
        try:
            text = path.read_text(encoding="utf-8")
        except FileNotFoundError:
            raise KeyError(key) from None
        value = _decode(json.loads(text))
        self._memory[key] = value
        self.hits += 1
        return value

    def __setitem__(self, key, value):
        self._memory[key] = value
        _atomic_write(self.path(key), dumps(_encode(value)))
        self.stores += 1

    def __delitem__(self, key):
        self._memory.pop(key, None)
        try:
            self.path(key).unlink()
        except FileNotFoundError:
            raise KeyError(key) from None

    def __contains__(self, key):
        return key in self._memory or self.path(key).exists()

    def __iter__(self):
        return iter(self._memory)

    def __len__(self):
        return len(self._memory)

    def memo(self, key, compute: Callable[[], Any], encode=lambda v: v, decode=lambda v: v):
        """``decode(cache[key])`` if present, else compute, store ``encode(value)``."""
        try:
            return decode(self[key])
        except KeyError:
            value = compute()
            self[key] = encode(value)
            return value


class _MemoryCache(ScanCache):
    """Same interface without a directory (no ``cache`` configured)."""

    def __init__(self):
        self.hits = 0
        self.stores = 0
        self._memory = {}

    def __getitem__(self, key):
        return self._memory[key]

    def __setitem__(self, key, value):
        self._memory[key] = value
        self.stores += 1

    def __delitem__(self, key):
        del self._memory[key]

    def __contains__(self, key):
        return key in self._memory


# ---------------------------------------------------------------------------
# run context
# ---------------------------------------------------------------------------
class Run:
    """Lazily built objects shared by the commands of one invocation."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.potential = config.build_potential()
        self.out = Path(config.out)
        self._grid = None
        self._engine = None
        self._cache = None
        self._memo = {}

    def cache_for(self, resolution: int):
        ns = {"version": __version__, "potential": self.potential.spec(),
              "resolution": int(resolution), "scheme": self.config.scheme,
              "lmax": self.config.lmax}
        if self.config.cache:
            return ScanCache(self.config.cache, ns)
        return _MemoryCache()

    def grid_for(self, resolution: int):
        return build_grid(self.potential, int(resolution), self.config.scheme)

    @property
    def grid(self):
        if self._grid is None:
            self._grid = self.grid_for(self.config.resolution)
        return self._grid

    @property
    def cache(self):
        if self._cache is None:
            self._cache = self.cache_for(self.config.resolution)
        return self._cache

    @property
    def engine(self) -> DetEngine:
        if self._engine is None:
            self._engine = DetEngine(self.grid, lmax=self.config.lmax, cache=self.cache)
        return self._engine

    def _once(self, name, compute):
        if name not in self._memo:
            self._memo[name] = compute()
        return self._memo[name]

    def moments(self, include_alpha1=None):
        return moments(self.potential, rtol=self.config.tolerances.quadrature,
                       include_alpha1=include_alpha1)

    def bound_states(self) -> List[BoundState]:
        def compute():
            return self.cache.memo(("bound-states",),
                                   lambda: find_bound_states(self.grid, lmax=self.config.lmax),
                                   encode=lambda bs: [asdict(b) for b in bs],
                                   decode=lambda d: [BoundState(**b) for b in d])
        return self._once("bound_states", compute)

    def scan(self, engine=None, t_max=None, step=None):
        cfg = self.config
        engine = engine or self.engine
        m = self.moments()
        momenta = [b.sqrt_lambda for b in self.bound_states()]
        return build_scan(engine, cfg.t_max if t_max is None else t_max, m.alpha_m1, momenta,
                          panel_width=cfg.scan_step if step is None else step,
                          order=cfg.panel_order, workers=cfg.workers)

    def catalog(self) -> SpectralCatalog:
        cfg = self.config
        tol = cfg.tolerances
        region = Region(*cfg.region)

        def search():
            return find_resonances(region, self.grid, lmax=cfg.lmax,
                                   bound_states=self.bound_states(), newton_tol=tol.newton,
                                   zero_residual=tol.zero_residual, epsabs=tol.contour)

        key = ("catalog", tuple(fmt(x) for x in cfg.region), fmt(tol.newton),
               fmt(tol.zero_residual), fmt(tol.contour))
        return self._once("catalog", lambda: self.cache.memo(
            key, search, encode=lambda c: c.to_dict(), decode=SpectralCatalog.from_dict))

    def hadamard(self) -> HadamardData:
        return self._once("hadamard", lambda: self.cache.memo(
            ("hadamard",), lambda: hadamard_fit(self.engine, self.catalog()),
            encode=lambda h: h.to_dict(), decode=HadamardData.from_dict))

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        _atomic_write(path, text)
        return path

    def log_cache(self):
        log.info("cache: %d hits, %d stores, %d matrix assemblies",
                 self.cache.hits, self.cache.stores,
                 0 if self._engine is None else self._engine.assemblies)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
SCAN_COLUMNS = ["t", "ReD", "ImD", "rho", "phi", "phi_sc", "phi_B", "rho_B", "dphiB_dt"]


def cmd_moments(config: RunConfig) -> int:
    run = Run(config)
    m = run.moments(config.include_alpha1)
    err = dict(zip(("alpha_m1", "alpha_0", "alpha_1"), m.errors))
    doc = {"potential": run.potential.spec(), "alpha_m1": m.alpha_m1, "alpha_0": m.alpha_0,
           "alpha_1": m.alpha_1, "errors": err}
    run.write("moments.json", dumps(doc) + "\n")
    return EXIT_OK


def cmd_scan(config: RunConfig) -> int:
    run = Run(config)
    scan = run.scan()
    rows = [[r[c] for c in SCAN_COLUMNS] for r in scan.rows()]
    run.write("scan.csv", _csv_text(SCAN_COLUMNS, rows))
    run.log_cache()
    return EXIT_OK


def cmd_spectrum(config: RunConfig) -> int:
    run = Run(config)
    run.write("catalog.json", dumps(run.catalog().to_dict()) + "\n")
    return EXIT_OK


def _trace_report(run: Run):
    """Full report and the exit code (6 when some tail fit did not converge)."""
    cfg = run.config
    scan = run.scan()
    m = run.moments()
    catalog = run.catalog()
    bd = beta_gamma(scan.bound_state_momenta, m)
    code = EXIT_OK
    try:
        report = trace_formula_suite(scan, bd, m, tail_tol=cfg.tolerances.tail)
    except TailNotConverged as exc:
        report = exc.partial if exc.partial is not None else TraceReport()
        report.warnings.append(str(exc))
        code = EXIT_TAIL
    report.add(hilbert_identity(scan, bd))
    if not run.potential.is_zero:
        dirichlet = dirichlet_identity(scan, run.engine, bd, m, workers=cfg.workers)
        report.extra["dirichlet"] = dirichlet.to_dict()
        bump = BumpFunction.on_interval(*cfg.krein_support)
        lattice = None
        if cfg.krein_lattice is not None:
            lattice = lattice_trace(run.potential, bump, *cfg.krein_lattice)
        krein = krein_trace(bump, scan, catalog, run.hadamard(), m,
                            radius=max(cfg.catalog_radii), lattice=lattice)
        report.extra["krein"] = krein.to_dict()
    report.extra["origin"] = {"log_abs_D0": scan.origin.rho if scan.origin is not None else 0.0}
    return report, code


def cmd_trace_check(config: RunConfig) -> int:
    run = Run(config)
    report, code = _trace_report(run)
    run.write("trace_report.json", dumps(report.to_dict()) + "\n")
    run.write("trace_report.csv", report.to_csv())
    run.log_cache()
    return code


def cmd_report(config: RunConfig) -> int:
    run = Run(config)
    cfg = run.config
    scan = run.scan()
    run.write("plotdata/scan.csv", _csv_text(
        ["t", "rho", "phi"], [[r["t"], r["rho"], r["phi"]] for r in scan.rows()]))

    catalog = run.catalog()
    run.write("plotdata/resonances.csv", _csv_text(
        ["re", "im", "multiplicity", "ell"],
        [[r.k.real, r.k.imag, r.multiplicity, "" if r.ell is None else r.ell]
         for r in catalog.resonances]))

    steps = [] if run.potential.is_zero else breit_wigner_convergence(
        run.engine, run.hadamard(), catalog, cfg.catalog_radii)
    run.write("plotdata/breit_wigner.csv", _csv_text(
        ["radius", "n_zeros", "deviation", "relative"],
        [[s.radius, s.n_zeros, s.deviation, s.relative] for s in steps]))

    code = EXIT_OK
    m = run.moments()
    bd = beta_gamma(scan.bound_state_momenta, m)
    rows = []
    for level, (res, t_max, step) in enumerate(cfg.refinement):
        engine = DetEngine(run.grid_for(res), lmax=cfg.lmax, cache=run.cache_for(res))
        level_scan = run.scan(engine, t_max=t_max, step=step)
        try:
            rep = trace_formula_suite(level_scan, bd, m, tail_tol=cfg.tolerances.tail)
        except TailNotConverged as exc:
            rep = exc.partial if exc.partial is not None else TraceReport()
            code = EXIT_TAIL
        for r in rep.records.values():
            rows.append([level, int(res), float(t_max), float(step), r.name, r.rel_err, r.abs_err])
    run.write("plotdata/trace_residuals.csv", _csv_text(
        ["level", "resolution", "t_max", "scan_step", "formula", "rel_err", "abs_err"], rows))
    run.log_cache()
    return code


COMMANDS = {
    "moments": cmd_moments,
    "scan": cmd_scan,
    "spectrum": cmd_spectrum,
    "trace-check": cmd_trace_check,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detscope", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--workers", type=int, help="worker processes (overrides the config)")
    parser.add_argument("--cache", help=f"cache directory (overrides ${CACHE_ENV} and the config)")
    parser.add_argument("--out", help="output directory (overrides the config)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    return parser


def resolve_config(args) -> RunConfig:
    config = RunConfig.load(args.config)
    if os.environ.get(CACHE_ENV):
        config.cache = os.environ[CACHE_ENV]
    if args.cache:
        config.cache = args.cache
    if args.workers is not None:
        config.workers = args.workers
    if args.out:
        config.out = args.out
    config.validate()
    return config


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        config = resolve_config(args)
        Path(config.out).mkdir(parents=True, exist_ok=True)
        _atomic_write(Path(config.out) / "config.json", dumps(config.to_dict()) + "\n")
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"detscope: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NotDifferentiable as exc:
        print(f"detscope: {exc}", file=sys.stderr)
        return EXIT_NOT_DIFFERENTIABLE
    except BranchJumpDetected as exc:
        print(f"detscope: branch jump at k = {exc.k}: {exc}", file=sys.stderr)
        return EXIT_BRANCH_JUMP
    except DepthLimitExceeded as exc:
        print(f"detscope: {exc}", file=sys.stderr)
        return EXIT_DEPTH_LIMIT
    except TailNotConverged as exc:
        print(f"detscope: {exc}", file=sys.stderr)
        return EXIT_TAIL


if __name__ == "__main__":
    sys.exit(main())
