"""Monte Carlo comparison of the SME and the quantum EKF family, plus the
one-step cost benchmark.

A trial simulates the scenario SME to produce a measurement record, replays
that record through a reference SME on a larger basis, and feeds the same
record to every configured filter. Errors are taken against the reference
conditional means.
"""

import hashlib
import json
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as qio
from . import scenarios as sc
from .ekf import (
    FilterDivergence,
    FilterState,
    RobustParams,
    SingularCovarianceError,
    filter_step,
    run_filter,
)
from .sme import Propagator, SimConfig, SimulationError, replay, simulate

FILTER_KINDS = ("qekf", "robust-qekf", "qkf-linearized", "sme")


class ConfigError(ValueError):
    """Invalid or unreadable run configuration."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _complex_from_json(v):
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    if isinstance(v, dict):
        return complex(v.get("re", 0.0), v.get("im", 0.0))
    if isinstance(v, (list, tuple)):
        return [_complex_from_json(u) for u in v]
    return v


def _to_json(v):
    if isinstance(v, complex):
        return str(v) if v.imag else v.real
    if isinstance(v, (list, tuple)):
        return [_to_json(u) for u in v]
    if isinstance(v, dict):
        return {k: _to_json(u) for k, u in v.items()}
    if isinstance(v, np.generic):
        return v.item()
    return v


_COMPLEX_FIELDS = {"alpha0", "alpha", "eta"}


@dataclass(frozen=True)
class FilterSpec:
    """One filter to run on each record.

    ``kind`` is ``qekf``, ``robust-qekf``, ``qkf-linearized`` or ``sme``.
    ``mu`` and ``lam`` configure the robust Riccati equation, ``zeta``
    overrides the scenario's initial-estimate offset and ``basis`` sets the
    truncation of an ``sme`` filter. ``p0`` sets the initial covariance:
    ``None`` keeps the scenario default, a number gives ``p0 * I`` and
    ``"state"`` uses the covariance of the initial state.
    """

    kind: str
    name: str = None
    mu: float = 0.1
    lam: float = 0.1
    zeta: float = None
    basis: int = None
    p0: object = None

    def __post_init__(self):
        if self.kind not in FILTER_KINDS:
            raise ConfigError(f"unknown filter kind {self.kind!r}; choose from {FILTER_KINDS}")
        if self.kind == "sme" and self.basis is None:
            raise ConfigError("an sme filter needs a basis")
        if self.kind == "robust-qekf" and not (self.mu > 0 and self.lam > 0):
            raise ConfigError("robust-qekf needs mu > 0 and lam > 0")
        if self.p0 is not None and self.p0 != "state":
            if isinstance(self.p0, bool) or not isinstance(self.p0, (int, float)) or not self.p0 > 0:
                raise ConfigError(f"p0 must be a positive number or 'state', got {self.p0!r}")
        if self.name is None:
            name = f"sme({self.basis})" if self.kind == "sme" else self.kind
            object.__setattr__(self, "name", name)

    @property
    def robust(self):
        return RobustParams(self.mu, self.lam) if self.kind == "robust-qekf" else None


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "kerr"
    params: dict = field(default_factory=dict)
    dt: float = 1e-4
    T: float = 1.0
    filters: tuple = ()
    trials: int = 1
    master_seed: int = 0
    reference_basis: int = None
    output_dir: str = "out"
    save_trajectories: bool = True
    workers: int = 1
    bench: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario not in sc.BUILDERS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {sorted(sc.BUILDERS)}")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if int(self.workers) < 1:
            raise ConfigError("workers must be >= 1")
        try:
            SimConfig(dt=self.dt, T=self.T, seed=self.master_seed)
            p = self.scenario_params()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.reference_basis is not None and self.reference_basis < p.basis:
            raise ConfigError(
                f"reference_basis {self.reference_basis} is below the scenario basis {p.basis}"
            )
        filters = tuple(f if isinstance(f, FilterSpec) else FilterSpec(**f) for f in self.filters)
        if not filters:
            default = ["robust-qekf"] if self.scenario == "counting" else ["qekf", "qkf-linearized"]
            filters = tuple(FilterSpec(k) for k in default)
        names = [f.name for f in filters]
        if len(set(names)) != len(names):
            raise ConfigError(f"filter names must be unique, got {names}")
        object.__setattr__(self, "filters", filters)
        object.__setattr__(self, "trials", int(self.trials))

    # -- construction ----------------------------------------------------
    @classmethod
    def from_dict(cls, doc):
        """Build from a JSON document; a manifest (with a ``config`` key) also works."""
        if not isinstance(doc, dict):
            raise ConfigError("configuration must be a JSON object")
        if "config" in doc and "config_hash" in doc:
            doc = doc["config"]
        doc = dict(doc)
        sim = doc.pop("sim", {})
        if not isinstance(sim, dict):
            raise ConfigError("sim must be an object")
        for key in ("dt", "T"):
            if key in sim:
                doc[key] = sim.pop(key)
        if "seed" in sim:
            doc.setdefault("master_seed", sim.pop("seed"))
        if sim:
            raise ConfigError(f"unknown sim fields {sorted(sim)}")
        params = {
            k: _complex_from_json(v) if k in _COMPLEX_FIELDS else v
            for k, v in dict(doc.pop("params", {}) or {}).items()
        }
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        try:
            filters = [f if isinstance(f, dict) else {"kind": f} for f in doc.pop("filters", [])]
            return cls(params=params, filters=tuple(FilterSpec(**f) for f in filters), **doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(doc)

    def to_dict(self):
        d = {
            "scenario": self.scenario,
            "params": _to_json(dict(self.params)),
            "sim": {"dt": self.dt, "T": self.T},
            "filters": [_to_json(asdict(f)) for f in self.filters],
            "trials": self.trials,
            "master_seed": self.master_seed,
            "reference_basis": self.reference_basis,
            "output_dir": str(self.output_dir),
            "save_trajectories": self.save_trajectories,
            "workers": self.workers,
            "bench": _to_json(dict(self.bench)),
            "sweep": _to_json(dict(self.sweep)),
        }
        return d

    def config_hash(self):
        # output location and parallelism do not change results
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    # -- helpers ---------------------------------------------------------
    def scenario_params(self):
        return sc.PARAMS[self.scenario](**self.params)

    def sim_config(self):
        return SimConfig(dt=self.dt, T=self.T, seed=self.master_seed)

    def with_overrides(self, **kw):
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def mise(est, ref, T):
    """``(1/T) sqrt(sum_k |est_k - ref_k|^2 dt)`` over the left endpoints.

    ``est`` and ``ref`` hold ``N + 1`` samples on a uniform grid over
    ``[0, T]``; the last sample is not used.
    """
    est = np.asarray(est, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"length mismatch: {est.shape} vs {ref.shape}")
    if not T > 0:
        raise ValueError("T must be positive")
    if len(est) < 2:
        raise ValueError("need at least two samples")
    err = (est - ref).reshape(len(est), -1)[:-1]
    dt = T / (len(est) - 1)
    return math.sqrt(float(np.sum(err * err)) * dt) / T


@dataclass
class FilterResult:
    name: str
    estimates: np.ndarray
    errors: np.ndarray
    mise: float
    final_error: float
    max_error: float
    diverged: bool = False
    floor_fraction: float = 0.0
    trajectory: object = None
    message: str = ""


@dataclass
class TrialOutput:
    trial: int
    record: object
    reference: np.ndarray
    results: dict


@dataclass
class TimingRow:
    basis: int
    modes: int
    t_sme: float
    t_qekf: float

    @property
    def ratio(self):
        return self.t_sme / self.t_qekf


@dataclass
class TimingTable:
    rows: list
    repeats: int

    def slope(self, modes=1):
        """Least-squares slope of ``log t_SME`` against ``log N_s``."""
        pts = [(r.basis, r.t_sme) for r in self.rows if r.modes == modes]
        if len(pts) < 2:
            raise ValueError(f"need two or more bases at {modes} mode(s)")
        x, y = np.log(np.array(pts, dtype=float)).T
        return float(np.polyfit(x, y, 1)[0])

    def row(self, basis, modes):
        for r in self.rows:
            if (r.basis, r.modes) == (basis, modes):
                return r
        raise KeyError((basis, modes))


@dataclass
class MetricReport:
    config: RunConfig
    times: np.ndarray
    component_names: tuple
    filter_names: tuple
    trials: list = field(default_factory=list)
    timing: TimingTable = None

    def results(self, name):
        return [t.results[name] for t in self.trials]

    def divergences(self, name):
        return sum(r.diverged for r in self.results(name))

    def mise(self, name):
        vals = [r.mise for r in self.results(name) if not r.diverged]
        return float(np.mean(vals)) if vals else math.nan

    def bands(self, name):
        """Mean and standard deviation of the error over finite trials, ``(N, n)`` each."""
        errs = [r.errors[:-1] for r in self.results(name) if not r.diverged]
        if not errs:
            n = len(self.component_names)
            nan = np.full((max(len(self.times) - 1, 0), n), math.nan)
            return nan, nan
        stack = np.stack(errs)
        return stack.mean(axis=0), stack.std(axis=0)


# ---------------------------------------------------------------------------
# Running trials
# ---------------------------------------------------------------------------

class _Scenarios:
    """Scenario builds shared by all trials of one configuration."""

    def __init__(self, config):
        self.config = config
        self.main = sc.build(config.scenario, config.scenario_params())
        ref_basis = config.reference_basis or self.main.basis
        self.reference = self.main.rebuild(ref_basis)
        self._by_basis = {self.main.basis: self.main, ref_basis: self.reference}
        self.names = tuple(self.main.observables)

    def at_basis(self, basis):
        if basis not in self._by_basis:
            self._by_basis[basis] = self.main.rebuild(basis)
        return self._by_basis[basis]


def _run_filter_spec(spec, scen_set, record, reference, T):
    main = scen_set.main
    names = scen_set.names
    try:
        if spec.kind == "sme":
            s = scen_set.at_basis(spec.basis)
            out = replay(s.slh, record, s.rho0, s.observables)
            est, traj, floor = out.expectations, out, 0.0
        else:
            model = main.filter_model(spec.kind)
            traj = run_filter(
                model, record.increments(), record.dt, main.initial_estimate(spec.zeta),
                main.initial_filter_covariance(spec.p0), robust=spec.robust,
            )
            est, floor = traj.x_hat, traj.floor_fraction
        if not np.all(np.isfinite(est)):
            raise FilterDivergence("non-finite estimate")
    except (FilterDivergence, SingularCovarianceError, SimulationError, FloatingPointError) as exc:
        nan = np.full((len(record.times), len(names)), math.nan)
        return FilterResult(spec.name, nan, nan, math.nan, math.nan, math.nan,
                            diverged=True, message=str(exc))
    err = est - reference
    norms = np.linalg.norm(err, axis=1)
    return FilterResult(
        spec.name, est, err, mise(est, reference, T), float(norms[-1]), float(norms.max()),
        floor_fraction=floor, trajectory=traj,
    )


def run_trial(config, trial, scen_set=None):
    """Simulate one record and run every configured filter on it."""
    scen_set = scen_set or _Scenarios(config)
    main, ref = scen_set.main, scen_set.reference
    sim = SimConfig(config.dt, config.T, config.master_seed, main.observables)
    record = simulate(main.slh, main.channels, sim, main.rho0, trial=trial)
    if ref is main:
        reference = record.expectations
    else:
        reference = replay(ref.slh, record, ref.rho0, ref.observables).expectations
    T = config.T
    results = {
        spec.name: _run_filter_spec(spec, scen_set, record, reference, T) for spec in config.filters
    }
    if not config.save_trajectories:
        record.final_state = None
        for r in results.values():
            r.trajectory = None
    return TrialOutput(trial, record, reference, results)


@lru_cache(maxsize=4)
def _worker_scenarios(config_json):
    return _Scenarios(RunConfig.from_dict(json.loads(config_json)))


def _trial_worker(config_json, trial):
    scen_set = _worker_scenarios(config_json)
    return run_trial(scen_set.config, trial, scen_set)


def run_compare(config, trials=None):
    """Run the Monte Carlo comparison and collect a :class:`MetricReport`.

    Filter failures are counted as divergences, never raised.
    """
    trial_ids = list(range(config.trials)) if trials is None else list(trials)
    scen_set = _Scenarios(config)
    if config.workers > 1 and len(trial_ids) > 1:
        blob = json.dumps(config.to_dict())
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outputs = list(pool.map(_trial_worker, [blob] * len(trial_ids), trial_ids))
    else:
        outputs = [run_trial(config, k, scen_set) for k in trial_ids]
    n_steps = config.sim_config().n_steps
    return MetricReport(
        config=config,
        times=np.arange(n_steps + 1) * config.dt,
        component_names=scen_set.names,
        filter_names=tuple(f.name for f in config.filters),
        trials=outputs,
    )


def run_sweep(config):
    """Repeat :func:`run_compare` over ``config.sweep = {"param": ..., "values": [...]}``.

    Returns a list of ``(value, report)`` pairs.
    """
    param = config.sweep.get("param")
    values = config.sweep.get("values")
    if not param or not isinstance(values, list) or not values:
        raise ConfigError("sweep needs a 'param' name and a non-empty 'values' list")
    out = []
    for value in values:
        if param in ("reference_basis", "trials", "dt", "T"):
            cfg = replace(config, **{param: value})
        else:
            v = _complex_from_json(value) if param in _COMPLEX_FIELDS else value
            cfg = replace(config, params={**config.params, param: v})
        out.append((value, run_compare(cfg)))
    return out


# ---------------------------------------------------------------------------
# Cost benchmark
# ---------------------------------------------------------------------------

def _median_time(fn, repeats, min_time=0.02):
    fn()
    t0 = time.perf_counter()
    fn()
    once = max(time.perf_counter() - t0, 1e-7)
    inner = max(1, int(min_time / once))
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner)
    return statistics.median(samples)


def bench_point(basis, modes, repeats=7, params=None):
    """Median single-step wall time of the SME and of the qEKF."""
    kw = dict(params or {})
    kw.update(n_modes=modes, basis=basis)
    kw.setdefault("alpha0", 0.5)
    scen = sc.build_kerr(sc.KerrParams(**kw))
    dt = 1e-4
    prop = Propagator(scen.slh, scen.channels, dt)
    rng = np.random.default_rng(0)
    dW = rng.standard_normal(modes) * math.sqrt(dt)
    rho = scen.rho0
    t_sme = _median_time(lambda: prop.step(rho, dW, ()), repeats)
    state = FilterState(0.0, scen.x0, scen.P0)
    dy = scen.model.h(scen.x0) * dt + dW
    t_qekf = _median_time(lambda: filter_step(state, scen.model, dy, dt), repeats)
    return TimingRow(basis, modes, t_sme, t_qekf)


def bench_step(bases=(8, 16, 32, 64), modes=(1,), repeats=7, points=(), params=None):
    """Timing table over ``bases x modes`` plus any extra ``(basis, modes)`` points.

    All timings run single-threaded.
    """
    if repeats < 5:
        raise ValueError("repeats must be >= 5")
    grid = [(b, m) for m in modes for b in bases] + [tuple(p) for p in points]
    rows = []
    with threadpool_limits(limits=1):
        for b, m in dict.fromkeys(grid):
            rows.append(bench_point(b, m, repeats, params))
    return TimingTable(rows, repeats)


def bench_from_config(config):
    b = dict(config.bench)
    kerr = config.params if config.scenario == "kerr" else {}
    kerr = {k: v for k, v in kerr.items() if k not in ("n_modes", "basis")}
    return bench_step(
        bases=tuple(b.get("bases", (8, 16, 32, 64))),
        modes=tuple(b.get("modes", (1,))),
        repeats=int(b.get("repeats", 7)),
        points=tuple(tuple(p) for p in b.get("points", ())),
        params=kerr,
    )


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------

def _safe(name):
    return "".join(c if c.isalnum() or c in "-_." else "-" for c in name).strip("-")


def write_manifest(config, directory, trials=None):
    directory = Path(directory)
    trials = list(range(config.trials)) if trials is None else list(trials)
    doc = {
        "config": config.to_dict(),
        "config_hash": config.config_hash(),
        "seeds": {"master_seed": config.master_seed, "trials": trials,
                  "stream": "philox(seed, trial)"},
    }
    path = directory / "manifest.json"
    try:
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_timing(table, path):
    rows = [] if table is None else [
        (r.basis, r.modes, r.t_sme, r.t_qekf, r.ratio) for r in table.rows
    ]
    return qio.write_table(path, ["N_s", "modes", "t_sme_step", "t_qekf_step", "ratio"], rows)


def emit_outputs(report, directory):
    """Write metrics, per-trial summaries, bands, timing, trajectories and a manifest."""
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {directory}: {exc.strerror or exc}") from exc
    names = report.filter_names
    qio.write_table(
        directory / "metrics.csv",
        ["filter_name", "mise", "divergences", "trials"],
        [(n, report.mise(n), report.divergences(n), len(report.trials)) for n in names],
    )
    qio.write_table(
        directory / "trials.csv",
        ["filter_name", "trial", "mise", "final_error", "max_error", "diverged", "floor_fraction"],
        [
            (n, t.trial, r.mise, r.final_error, r.max_error, r.diverged, r.floor_fraction)
            for n in names
            for t in report.trials
            for r in [t.results[n]]
        ],
    )
    header = ["filter_name", "t"]
    for c in report.component_names:
        header += [f"err_{c}_mean", f"err_{c}_lo", f"err_{c}_hi"]
    band_rows = []
    if report.trials:
        for n in names:
            mean, std = report.bands(n)
            for k in range(len(mean)):
                row = [n, report.times[k]]
                for i in range(mean.shape[1]):
                    row += [mean[k, i], mean[k, i] - std[k, i], mean[k, i] + std[k, i]]
                band_rows.append(row)
    qio.write_table(directory / "bands.csv", header, band_rows)
    write_timing(report.timing, directory / "timing.csv")
    if report.config.save_trajectories and report.trials:
        tdir = directory / "trajectories"
        tdir.mkdir(exist_ok=True)
        for t in report.trials:
            qio.write_record_csv(tdir / f"record_{t.trial:04d}.csv", t.record)
            for n, r in t.results.items():
                if r.trajectory is None:
                    continue
                path = tdir / f"{_safe(n)}_{t.trial:04d}.csv"
                if hasattr(r.trajectory, "P"):
                    qio.write_filter_csv(path, r.trajectory)
                else:
                    qio.write_record_csv(path, r.trajectory)
    write_manifest(report.config, directory, [t.trial for t in report.trials])
    return directory
