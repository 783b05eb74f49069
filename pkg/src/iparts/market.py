"""Tasks, workers and seeded market instances.

Synthetic scenarios draw every entity from its own keyed stream, so growing
the worker pool keeps the first workers (and all tasks) unchanged.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .quality import EconParams
from .rng import stream

Range = tuple[float, float]


class ConfigError(ValueError):
    """Invalid configuration value."""


class TraceError(ValueError):
    """Malformed or empty trace file."""


@dataclass(frozen=True)
class Task:
    id: int
    location: tuple[float, float]
    budget: float
    quality_demand: float
    redundancy_factor: float
    reference_variance: float

    def __post_init__(self):
        if not 0 <= self.redundancy_factor < 1:
            raise ValueError(f"task {self.id}: zeta must lie in [0, 1)")
        if self.budget < 0:
            raise ValueError(f"task {self.id}: budget must be non-negative")
        if not self.quality_demand > 0:
            raise ValueError(f"task {self.id}: quality demand must be positive")
        if not self.reference_variance > 0:
            raise ValueError(f"task {self.id}: reference variance must be positive")


@dataclass(frozen=True)
class Worker:
    id: int
    location: tuple[float, float]
    eps_range: tuple[float, float]
    capability: float
    arrival_prob: float
    travel_cost_coeff: float
    privacy_cost_coeff: float
    data_variance: tuple[float, ...] = ()

    def __post_init__(self):
        lo, hi = self.eps_range
        if not (0 < lo <= hi):
            raise ValueError(f"worker {self.id}: invalid privacy budget range {self.eps_range}")
        if not 0 <= self.arrival_prob <= 1:
            raise ValueError(f"worker {self.id}: arrival probability outside [0, 1]")
        if not self.capability > 0:
            raise ValueError(f"worker {self.id}: capability must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    n_tasks: int = 20
    n_workers: int = 120
    arrival_prob: Range = (0.56, 0.96)
    capability: Range = (45.0, 55.0)
    payment: Range = (40.0, 55.0)
    budget: Range = (200.0, 250.0)
    quality_demand: Range = (20.0, 28.0)
    redundancy: Range = (0.05, 0.40)
    travel_cost: Range = (0.2, 0.8)
    privacy_cost: Range = (1.0, 5.0)
    eps_min: Range = (0.1, 0.1)
    eps_max: Range = (5.0, 5.0)
    reference_variance: Range = (3.0, 4.0)
    data_variance: float = 0.0
    intent_prior: float = 0.5
    price_resolution: float = 1.0
    omega3: float = 7.0
    rho1: float = 0.2
    rho2: float = 0.2

    RANGE_FIELDS = (
        "arrival_prob", "capability", "payment", "budget", "quality_demand",
        "redundancy", "travel_cost", "privacy_cost", "eps_min", "eps_max",
        "reference_variance",
    )

    @property
    def econ(self) -> EconParams:
        return EconParams(self.omega3, self.rho1, self.rho2)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        kw = {k: tuple(v) if k in cls.RANGE_FIELDS else v for k, v in d.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def validate(self) -> None:
        if self.n_tasks < 1 or self.n_workers < 1:
            raise ConfigError("scenario needs at least one task and one worker")
        domains = {
            "arrival_prob": (0.0, 1.0),
            "capability": (0.0, math.inf),
            "payment": (0.0, math.inf),
            "budget": (0.0, math.inf),
            "quality_demand": (0.0, math.inf),
            "redundancy": (0.0, 1.0),
            "travel_cost": (0.0, math.inf),
            "privacy_cost": (0.0, math.inf),
            "eps_min": (0.0, math.inf),
            "eps_max": (0.0, math.inf),
            "reference_variance": (0.0, math.inf),
        }
        for name in self.RANGE_FIELDS:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: min {lo} exceeds max {hi}")
            dlo, dhi = domains[name]
            if lo < dlo or hi > dhi:
                raise ConfigError(f"{name}: range {lo, hi} outside domain {dlo, dhi}")
        strict_pos = ("capability", "quality_demand", "eps_min", "eps_max", "reference_variance")
        for name in strict_pos:
            if getattr(self, name)[0] <= 0:
                raise ConfigError(f"{name}: values must be strictly positive")
        if self.redundancy[1] >= 1:
            raise ConfigError("redundancy: values must be below 1")
        if not 0 <= self.intent_prior <= 1:
            raise ConfigError("intent_prior must lie in [0, 1]")
        if self.data_variance < 0:
            raise ConfigError("data_variance must be non-negative")
        if self.price_resolution < 0:
            raise ConfigError("price_resolution must be non-negative")
        try:
            self.econ
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class Scenario:
    """Immutable market instance; matrices are indexed ``[task, worker]``."""

    tasks: tuple[Task, ...]
    workers: tuple[Worker, ...]
    payments: np.ndarray
    exe_cost: np.ndarray
    quality: np.ndarray
    true_intents: np.ndarray
    intent_prior: np.ndarray
    rng_seed: int
    econ: EconParams = field(default_factory=EconParams)
    quality_source: str = "model"

    def __post_init__(self):
        shape = (len(self.tasks), len(self.workers))
        for name in ("payments", "exe_cost", "quality", "true_intents", "intent_prior"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def n_workers(self) -> int:
        return len(self.workers)

    @property
    def arrival_probs(self) -> np.ndarray:
        return np.array([w.arrival_prob for w in self.workers])

    @property
    def zetas(self) -> np.ndarray:
        return np.array([t.redundancy_factor for t in self.tasks])

    @property
    def budgets(self) -> np.ndarray:
        return np.array([t.budget for t in self.tasks])

    @property
    def demands(self) -> np.ndarray:
        return np.array([t.quality_demand for t in self.tasks])

    @property
    def privacy_cost_coeffs(self) -> np.ndarray:
        return np.array([w.privacy_cost_coeff for w in self.workers])

    def with_redundancy(self, zeta: float) -> "Scenario":
        tasks = tuple(replace(t, redundancy_factor=zeta) for t in self.tasks)
        return replace(self, tasks=tasks)

    # serialisation -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "tasks": [_plain(asdict(t)) for t in self.tasks],
            "workers": [_plain(asdict(w)) for w in self.workers],
            "payments": self.payments.tolist(),
            "exe_cost": self.exe_cost.tolist(),
            "quality": self.quality.tolist(),
            "true_intents": self.true_intents.astype(int).tolist(),
            "intent_prior": self.intent_prior.tolist(),
            "rng_seed": self.rng_seed,
            "econ": asdict(self.econ),
            "quality_source": self.quality_source,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        tasks = tuple(
            Task(**{**t, "location": tuple(t["location"])}) for t in d["tasks"]
        )
        workers = tuple(
            Worker(**{
                **w,
                "location": tuple(w["location"]),
                "eps_range": tuple(w["eps_range"]),
                "data_variance": tuple(w["data_variance"]),
            })
            for w in d["workers"]
        )
        return cls(
            tasks=tasks,
            workers=workers,
            payments=np.array(d["payments"], dtype=float),
            exe_cost=np.array(d["exe_cost"], dtype=float),
            quality=np.array(d["quality"], dtype=float),
            true_intents=np.array(d["true_intents"], dtype=np.int8),
            intent_prior=np.array(d["intent_prior"], dtype=float),
            rng_seed=int(d["rng_seed"]),
            econ=EconParams(**d["econ"]),
            quality_source=d["quality_source"],
        )

    @classmethod
    def from_json(cls, text: str) -> "Scenario":
        return cls.from_dict(json.loads(text))


def _plain(d: dict) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def precision(reference_variance: float, capability: float, data_variance: float = 0.0) -> float:
    """Single-shot quality: inverse of ``sigma0^2 / theta + data variance``."""
    return 1.0 / (reference_variance / capability + data_variance)


@dataclass(frozen=True)
class ArrivalVector:
    alpha: np.ndarray

    def __post_init__(self):
        self.alpha.setflags(write=False)


def _uniform(rng: np.random.Generator, rng_range: Range) -> float:
    lo, hi = rng_range
    return float(rng.uniform(lo, hi))


def _quantise(x: np.ndarray, resolution: float) -> np.ndarray:
    if resolution <= 0:
        return x
    return np.round(x / resolution) * resolution


def _draw_task(cfg: ScenarioConfig, seed: int, i: int) -> Task:
    rng = stream(seed, "task", i)
    loc = rng.random(2)
    return Task(
        id=i,
        location=(float(loc[0]), float(loc[1])),
        budget=_uniform(rng, cfg.budget),
        quality_demand=_uniform(rng, cfg.quality_demand),
        redundancy_factor=_uniform(rng, cfg.redundancy),
        reference_variance=_uniform(rng, cfg.reference_variance),
    )


def _draw_worker(cfg: ScenarioConfig, seed: int, j: int, n_tasks: int) -> Worker:
    rng = stream(seed, "worker", j)
    loc = rng.random(2)
    e_lo, e_hi = sorted((_uniform(rng, cfg.eps_min), _uniform(rng, cfg.eps_max)))
    return Worker(
        id=j,
        location=(float(loc[0]), float(loc[1])),
        arrival_prob=_uniform(rng, cfg.arrival_prob),
        capability=_uniform(rng, cfg.capability),
        travel_cost_coeff=_uniform(rng, cfg.travel_cost),
        privacy_cost_coeff=_uniform(rng, cfg.privacy_cost),
        eps_range=(e_lo, e_hi),
        data_variance=(float(cfg.data_variance),) * n_tasks,
    )


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    config.validate()
    n, m = config.n_tasks, config.n_workers
    tasks = tuple(_draw_task(config, seed, i) for i in range(n))
    workers = tuple(_draw_worker(config, seed, j, n) for j in range(m))

    payments = np.empty((n, m))
    intents = np.empty((n, m), dtype=np.int8)
    prior = np.full((n, m), float(config.intent_prior))
    for j in range(m):
        lo, hi = config.payment
        payments[:, j] = _quantise(stream(seed, "payment", j).uniform(lo, hi, size=n),
                                   config.price_resolution)
        intents[:, j] = stream(seed, "intent", j).random(n) < prior[:, j]

    t_loc = np.array([t.location for t in tasks])
    w_loc = np.array([w.location for w in workers])
    dist = np.linalg.norm(t_loc[:, None, :] - w_loc[None, :, :], axis=2)
    mu = np.array([w.travel_cost_coeff for w in workers])
    exe_cost = mu[None, :] * dist

    sigma0 = np.array([t.reference_variance for t in tasks])
    theta = np.array([w.capability for w in workers])
    dv = np.array([w.data_variance for w in workers]).T
    quality = 1.0 / (sigma0[:, None] / theta[None, :] + dv)

    return Scenario(
        tasks=tasks,
        workers=workers,
        payments=payments,
        exe_cost=exe_cost,
        quality=quality,
        true_intents=intents,
        intent_prior=prior,
        rng_seed=int(seed),
        econ=config.econ,
    )


def sample_arrivals(scenario: Scenario, epoch_seed: int) -> ArrivalVector:
    u = stream(scenario.rng_seed, "arrival", epoch_seed).random(scenario.n_workers)
    return ArrivalVector((u < scenario.arrival_probs).astype(np.int8))


TRACE_HEADER = ["worker_id", "day", "trip_distance", "cur_x", "cur_y", "post_x", "post_y"]


@dataclass
class _TraceWorker:
    days: set = field(default_factory=set)
    trips: list = field(default_factory=list)
    cur: list = field(default_factory=list)
    post: list = field(default_factory=list)


def read_trace(path) -> dict:
    """Parse a trace CSV into per-worker records keyed by worker id."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise TraceError(f"{path}: empty trace file")
        if [h.strip() for h in header] != TRACE_HEADER:
            raise TraceError(f"{path}: line 1: expected header {','.join(TRACE_HEADER)}")
        out: dict[int, _TraceWorker] = {}
        all_days = set()
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(TRACE_HEADER):
                raise TraceError(f"{path}: line {lineno}: expected 7 fields, got {len(row)}")
            try:
                wid = int(row[0])
                day = row[1].strip()
                trip, cx, cy, px, py = (float(c) for c in row[2:])
            except ValueError as exc:
                raise TraceError(f"{path}: line {lineno}: {exc}") from None
            if not day:
                raise TraceError(f"{path}: line {lineno}: empty day")
            if trip < 0:
                raise TraceError(f"{path}: line {lineno}: negative trip distance")
            rec = out.setdefault(wid, _TraceWorker())
            rec.days.add(day)
            rec.trips.append(trip)
            rec.cur.append((cx, cy))
            rec.post.append((px, py))
            all_days.add(day)
    if not out:
        raise TraceError(f"{path}: trace has no data rows")
    return {"workers": out, "days": all_days}


def ingest_trace(
    path,
    config: ScenarioConfig | None = None,
    seed: int = 0,
    weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    kappa: float = 1.0,
    eps_guard: float = 0.01,
    task_locations=None,
) -> Scenario:
    """Build a scenario whose costs, qualities and arrival rates come from a trace.

    Tasks are drawn from ``config`` (locations uniform over the trace bounding
    box unless ``task_locations`` is given).  Per worker, distance factors are
    averaged over its trace rows.
    """
    if any(w < 0 for w in weights):
        raise ConfigError("distance weights must be non-negative")
    if kappa <= 0 or eps_guard <= 0:
        raise ConfigError("kappa and eps_guard must be positive")
    config = config or ScenarioConfig()
    parsed = read_trace(path)
    recs: dict = parsed["workers"]
    n_days = len(parsed["days"])
    ids = sorted(recs)
    m = len(ids)
    base = generate_scenario(replace(config, n_workers=m), seed)
    n = base.n_tasks

    cur = {wid: np.array(recs[wid].cur) for wid in ids}
    post = {wid: np.array(recs[wid].post) for wid in ids}
    if task_locations is None:
        pts = np.vstack([np.vstack([cur[w], post[w]]) for w in ids])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        u = np.array([t.location for t in base.tasks])
        t_loc = lo + u * (hi - lo)
    else:
        t_loc = np.asarray(task_locations, dtype=float)
        if t_loc.shape != (n, 2):
            raise ConfigError(f"task_locations must have shape ({n}, 2)")

    w1, w2, w3 = weights
    exe = np.empty((n, m))
    qual = np.empty((n, m))
    workers = []
    for j, wid in enumerate(ids):
        rec = recs[wid]
        d_trip = float(np.mean(rec.trips))
        d_cur = np.linalg.norm(cur[wid][None, :, :] - t_loc[:, None, :], axis=2).mean(axis=1)
        d_post = np.linalg.norm(post[wid][None, :, :] - t_loc[:, None, :], axis=2).mean(axis=1)
        bw = base.workers[j]
        exe[:, j] = bw.travel_cost_coeff * (w1 * d_trip + w2 * d_cur + w3 * d_post)
        qual[:, j] = kappa / (d_cur + d_post + eps_guard)
        pi = min(max(len(rec.days) / n_days, 0.0), 1.0)
        loc = cur[wid].mean(axis=0)
        workers.append(replace(bw, id=j, arrival_prob=pi,
                               location=(float(loc[0]), float(loc[1]))))
    tasks = tuple(replace(t, location=(float(x), float(y)))
                  for t, (x, y) in zip(base.tasks, t_loc))
    return replace(
        base,
        tasks=tasks,
        workers=tuple(workers),
        exe_cost=exe,
        quality=qual,
        payments=np.array(base.payments),
        true_intents=np.array(base.true_intents),
        intent_prior=np.array(base.intent_prior),
        quality_source="trace",
    )
