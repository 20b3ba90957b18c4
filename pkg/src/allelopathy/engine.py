"""Graphical representation: event generation, event application, simulation.

Events come from one aggregate Poisson stream of rate L^d * (1 + beta1 + beta2 + gamma);
each event is attributed uniformly to a tail site, a kind (with probability
proportional to its rate) and, for arrows, a uniformly chosen neighbor offset.
By superposition this has the law of independent per-edge clocks at rates
gamma/N, beta1/N, beta2/N and per-vertex crosses at rate 1.

The stream is produced in chunks; within a chunk the event count is Poisson
and the times are sorted uniforms, so the chunking does not change the law.

Randomness: every run is driven by a :class:`numpy.random.SeedSequence` built
from ``(seed, row, replicate)``; the event stream, the thinning marks and the
initial configuration each use their own child of that sequence, so adding
marks to a run never perturbs its events.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from .lattice import ConfigError, ModelParams, SpatialConfig, build_neighborhood

KILL, BIRTH1, BIRTH2, CROSS = 0, 1, 2, 3
KIND_NAMES = ("kill", "birth1", "birth2", "cross")

DEFAULT_CHUNK_EVENTS = 1 << 20
DEFAULT_EVENT_CAP = 20_000_000


class ResourceCapError(RuntimeError):
    """Recorded mode would exceed the configured event cap."""


class InvariantViolation(AssertionError):
    """An exact invariant (ordering, closure, duality) failed."""


def seed_sequence(seed, *key: int) -> np.random.SeedSequence:
    """Stream for ``key`` under ``seed``; an existing SeedSequence is used as-is."""
    if isinstance(seed, np.random.SeedSequence):
        if key:
            return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
        return seed
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))


def _children(ss: np.random.SeedSequence) -> tuple[np.random.SeedSequence, ...]:
    # events, marks, initial configuration; rebuilt on each call so spawn() state never leaks
    base = tuple(ss.spawn_key)
    return tuple(np.random.SeedSequence(ss.entropy, spawn_key=base + (i,)) for i in range(3))


def generator(ss: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GraphEvent:
    time: float
    kind: int
    tail: int
    head: int


@dataclass
class EventLog:
    """Time-ordered graphical representation on (start, start + horizon]."""

    params: ModelParams
    horizon: float
    seed: object
    times: np.ndarray
    kinds: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    marks: np.ndarray | None = None
    start: float = 0.0

    def __len__(self):
        return self.times.size

    @property
    def end(self) -> float:
        return self.start + self.horizon

    def __iter__(self) -> Iterator[GraphEvent]:
        for t, k, a, b in zip(self.times, self.kinds, self.tails, self.heads):
            yield GraphEvent(float(t), int(k), int(a), int(b))

    def event(self, i: int) -> GraphEvent:
        return GraphEvent(float(self.times[i]), int(self.kinds[i]),
                          int(self.tails[i]), int(self.heads[i]))

    def window(self, lo: float, hi: float) -> slice:
        """Index range of events with lo < time <= hi."""
        return slice(int(np.searchsorted(self.times, lo, "right")),
                     int(np.searchsorted(self.times, hi, "right")))

    def swap_labels(self) -> "EventLog":
        """Exchange Birth1 and Birth2 labels (and beta1/beta2)."""
        kinds = self.kinds.copy()
        kinds[self.kinds == BIRTH1] = BIRTH2
        kinds[self.kinds == BIRTH2] = BIRTH1
        params = self.params.replace(beta1=self.params.beta2, beta2=self.params.beta1)
        return EventLog(params, self.horizon, self.seed, self.times, kinds,
                        self.tails, self.heads, self.marks, self.start)

    def counts_by_kind(self) -> np.ndarray:
        return np.bincount(self.kinds, minlength=4)

    def to_text(self, path) -> None:
        """Line-oriented export: ``time kind tail head`` with comma-joined coordinates."""
        shape = self.params.shape
        with open(path, "w") as fh:
            for e in self:
                tail = ",".join(str(c) for c in np.unravel_index(e.tail, shape))
                head = ",".join(str(c) for c in np.unravel_index(e.head, shape))
                fh.write(f"{e.time:.17g} {KIND_NAMES[e.kind]} {tail} {head}\n")


@dataclass
class EventChunk:
    times: np.ndarray
    kinds: np.ndarray
    tails: np.ndarray
    heads: np.ndarray
    marks: np.ndarray | None


def iter_event_chunks(params: ModelParams, start: float, stop: float, seed,
                      with_marks: bool = False,
                      chunk_events: int = DEFAULT_CHUNK_EVENTS) -> Iterator[EventChunk]:
    """Yield the events of (start, stop] in consecutive chunks."""
    ss = seed_sequence(seed)
    ev_ss, mark_ss, _ = _children(ss)
    rng = generator(ev_ss)
    mrng = generator(mark_ss) if with_marks else None
    nbr = build_neighborhood(params.d, params.M, params.L).table()
    n_sites, n_nbr = nbr.shape
    rates = np.array([params.gamma, params.beta1, params.beta2, 1.0])
    total = float(rates.sum())
    cum = np.cumsum(rates)[:-1]
    rate = n_sites * total
    span = chunk_events / rate
    n_chunks = max(1, math.ceil((stop - start) / span))
    prev = start
    for c in range(n_chunks):
        a = start + c * span
        b = stop if c == n_chunks - 1 else start + (c + 1) * span
        while True:
            k = int(rng.poisson(rate * (b - a)))
            times = a + np.sort(rng.random(k)) * (b - a)
            # resample the (measure-zero) floating-point collisions
            if k == 0 or (times[0] > prev and times[-1] <= b and np.all(np.diff(times) > 0)):
                break
        tails = rng.integers(0, n_sites, k, dtype=np.int32)
        slots = rng.integers(0, n_nbr, k, dtype=np.int32)
        kinds, heads = _attribute(rng.random(k) * total, cum, tails, slots, nbr)
        marks = mrng.random(k) if mrng is not None else None
        if k:
            prev = times[-1]
        yield EventChunk(times, kinds, tails, heads, marks)


@njit(cache=True)
def _attribute(u, cum, tails, slots, nbr):
    n = u.size
    kinds = np.empty(n, np.int8)
    heads = np.empty(n, np.int32)
    for i in range(n):
        k = 0
        while k < cum.size and u[i] >= cum[k]:
            k += 1
        kinds[i] = k
        heads[i] = tails[i] if k == 3 else nbr[tails[i], slots[i]]
    return kinds, heads


def generate_events(params: ModelParams, horizon: float, seed, start: float = 0.0,
                    with_marks: bool = False, event_cap: int | None = DEFAULT_EVENT_CAP,
                    chunk_events: int = DEFAULT_CHUNK_EVENTS) -> EventLog:
    if not horizon > 0:
        raise ConfigError(f"horizon must be > 0, got {horizon!r}")
    chunks = []
    total = 0
    for ch in iter_event_chunks(params, start, start + horizon, seed, with_marks, chunk_events):
        total += ch.times.size
        if event_cap is not None and total > event_cap:
            raise ResourceCapError(
                f"recorded log exceeds event cap {event_cap} (expected "
                f"{params.n_sites * params.total_rate_per_site * horizon:.3g} events)")
        chunks.append(ch)

    def cat(attr, dtype):
        parts = [getattr(c, attr) for c in chunks]
        return np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype)

    return EventLog(
        params=params, horizon=float(horizon), seed=seed,
        times=cat("times", np.float64), kinds=cat("kinds", np.int8),
        tails=cat("tails", np.int32), heads=cat("heads", np.int32),
        marks=cat("marks", np.float64) if with_marks else None, start=float(start),
    )


def log_from_events(params: ModelParams, events: Sequence, horizon: float,
                    start: float = 0.0) -> EventLog:
    """Hand-built log from (time, kind, tail, head) tuples; sites are flat indices."""
    events = sorted(events, key=lambda e: e[0])
    times = np.array([e[0] for e in events], dtype=np.float64)
    if times.size and (np.any(np.diff(times) <= 0) or times[0] <= start
                       or times[-1] > start + horizon):
        raise ConfigError("event times must be distinct and inside (start, start + horizon]")
    return EventLog(
        params=params, horizon=float(horizon), seed=None, times=times,
        kinds=np.array([e[1] for e in events], dtype=np.int8),
        tails=np.array([e[2] for e in events], dtype=np.int32),
        heads=np.array([e[3] for e in events], dtype=np.int32), start=float(start),
    )


def _new_state(old: int, kind: int, tail_state: int, symmetric: bool = False) -> int:
    if kind == CROSS:
        return 0
    if kind == KILL:
        return 0 if (old == 2 and tail_state == 1) else old
    if old == 0 and tail_state != 0 and (symmetric or tail_state == kind):
        return tail_state
    return old


def apply_event(config: SpatialConfig, e: GraphEvent, symmetric: bool = False) -> SpatialConfig:
    """Apply one event in place and return the config.

    ``symmetric`` lets either birth label transmit the tail's type (the
    unlabeled-arrow construction of the symmetric multitype contact process).
    """
    old = int(config.states[e.head])
    new = _new_state(old, e.kind, int(config.states[e.tail]), symmetric)
    if new != old:
        config.states[e.head] = new
        config.counts[old] -= 1
        config.counts[new] += 1
    return config


@njit(cache=True)
def _advance(states, counts, ext, times, kinds, tails, heads, marks, thresh,
             use_marks, symmetric, lo, hi, check, viol, offset):
    n_proc = states.shape[0]
    for e in range(lo, hi):
        kd = kinds[e]
        h = heads[e]
        tl = tails[e]
        for k in range(n_proc):
            if use_marks and kd != 3 and marks[e] >= thresh[k, kd]:
                continue
            old = states[k, h]
            new = old
            if kd == 3:
                new = 0
            elif kd == 0:
                if old == 2 and states[k, tl] == 1:
                    new = 0
            elif old == 0:
                ts = states[k, tl]
                if ts != 0 and (symmetric or ts == kd):
                    new = ts
            if new != old:
                states[k, h] = new
                counts[k, old] -= 1
                counts[k, new] += 1
                if old != 0 and counts[k, old] == 0 and ext[k, old] == np.inf:
                    ext[k, old] = times[e]
        if check:
            a = states[0, h]
            b = states[1, h]
            if (a == 1 and b != 1) or (b == 2 and a != 2):
                viol[0] += 1
                if viol[1] < 0:
                    viol[1] = offset + e


class Outcome(str, Enum):
    SPECIES1_WINS = "Species1Wins"
    SPECIES2_WINS = "Species2Wins"
    BOTH_EXTINCT = "BothExtinct"
    COEXIST = "CoexistAtHorizon"


@dataclass
class ObservableSeries:
    times: np.ndarray
    counts: np.ndarray  # (n_samples, 3)
    n_sites: int
    final: SpatialConfig
    extinction_times: np.ndarray  # first time count1 / count2 reached 0 (inf if never)
    n_events: int = 0
    snapshots: dict = field(default_factory=dict)
    log: EventLog | None = None

    @property
    def rho(self) -> np.ndarray:
        return self.counts / self.n_sites

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "rho0", "rho1", "rho2", "count1", "count2"])
            for t, c in zip(self.times, self.counts):
                r = c / self.n_sites
                w.writerow([repr(float(t)), repr(float(r[0])), repr(float(r[1])),
                            repr(float(r[2])), int(c[1]), int(c[2])])


def _sample_grid(horizon: float, sample_times, snapshot_times) -> np.ndarray:
    ts = {0.0, float(horizon)}
    if sample_times is not None:
        ts.update(float(t) for t in sample_times)
    ts.update(float(t) for t in snapshot_times)
    grid = np.array(sorted(ts))
    if grid[0] < 0 or grid[-1] > horizon:
        raise ConfigError("sample times must lie in [0, horizon]")
    return grid


class _Runner:
    """Drives K processes through a stream of chunks, sampling at fixed times."""

    def __init__(self, initials, start, sample_times, snapshot_times=(), thresholds=None,
                 symmetric=False, check_order=False):
        self.L, self.d = initials[0].L, initials[0].d
        self.states = np.stack([c.states for c in initials]).astype(np.int8)
        self.counts = np.stack([c.counts for c in initials]).astype(np.int64)
        self.ext = np.full((len(initials), 3), np.inf)
        for k in range(len(initials)):
            for i in (1, 2):
                if self.counts[k, i] == 0:
                    self.ext[k, i] = start
        self.start = start
        self.grid = sample_times
        self.snap_times = set(float(t) for t in snapshot_times)
        self.samples = [[] for _ in initials]
        self.snapshots = [dict() for _ in initials]
        self.next = 0
        self.thresh = (np.ones((len(initials), 4)) if thresholds is None
                       else np.ascontiguousarray(thresholds, dtype=np.float64))
        self.use_marks = thresholds is not None
        self.symmetric = symmetric
        self.check = check_order
        self.viol = np.array([0, -1], dtype=np.int64)
        self.n_events = 0
        self.sample_hooks = []

    def _record(self):
        t = float(self.grid[self.next])
        for k in range(self.states.shape[0]):
            self.samples[k].append(self.counts[k].copy())
            if t in self.snap_times:
                self.snapshots[k][t] = SpatialConfig(self.L, self.d, self.states[k].copy())
        for hook in self.sample_hooks:
            hook(t, self.states)
        self.next += 1

    def feed(self, times, kinds, tails, heads, marks):
        marks = marks if marks is not None else np.empty(0)
        if self.use_marks and marks.size != times.size:
            raise ConfigError("thinned runs need a log with marks")
        pos = 0
        n = times.size
        while pos < n:
            if self.next < self.grid.size:
                bound = self.start + self.grid[self.next]
                stop = int(np.searchsorted(times, bound, "right"))
            else:
                stop = n
            if stop > pos:
                _advance(self.states, self.counts, self.ext, times, kinds, tails, heads,
                         marks, self.thresh, self.use_marks, self.symmetric, pos, stop,
                         self.check, self.viol, self.n_events + pos)
                pos = stop
            if pos < n and self.next < self.grid.size:
                self._record()
        self.n_events += n

    def finish(self):
        while self.next < self.grid.size:
            self._record()
        out = []
        for k in range(self.states.shape[0]):
            out.append(ObservableSeries(
                times=self.grid.copy(), counts=np.array(self.samples[k]),
                n_sites=self.states.shape[1],
                final=SpatialConfig(self.L, self.d, self.states[k].copy(), self.counts[k].copy()),
                extinction_times=self.ext[k, 1:].copy(), n_events=self.n_events,
                snapshots=self.snapshots[k],
            ))
        return out


def _check_initial(initial: SpatialConfig, params: ModelParams):
    if initial.L != params.L or initial.d != params.d:
        raise ConfigError(f"initial config is {initial.L}^{initial.d}, params say {params.L}^{params.d}")
    if not initial.counts_consistent():
        raise ConfigError("initial config counts out of sync with states")


def simulate(initial: SpatialConfig, params: ModelParams, horizon: float, seed,
             sample_times=None, snapshot_times=(), record: bool = False,
             event_cap: int | None = DEFAULT_EVENT_CAP, symmetric: bool = False,
             chunk_events: int = DEFAULT_CHUNK_EVENTS) -> ObservableSeries:
    """Run the process from ``initial`` on [0, horizon].

    Streaming by default; ``record=True`` keeps the EventLog on the returned
    series (subject to ``event_cap``). Identical arguments give identical output;
    ``chunk_events`` and ``horizon`` fix how time is cut into chunks, so they are
    part of the stream definition.
    """
    _check_initial(initial, params)
    if not horizon > 0:
        raise ConfigError(f"horizon must be > 0, got {horizon!r}")
    grid = _sample_grid(horizon, sample_times, snapshot_times)
    if record:
        log = generate_events(params, horizon, seed, event_cap=event_cap, chunk_events=chunk_events)
        series = replay(initial, log, sample_times=grid, snapshot_times=snapshot_times,
                        symmetric=symmetric)
        series.log = log
        return series
    runner = _Runner([initial], 0.0, grid, snapshot_times, symmetric=symmetric)
    for ch in iter_event_chunks(params, 0.0, horizon, seed, chunk_events=chunk_events):
        runner.feed(ch.times, ch.kinds, ch.tails, ch.heads, None)
    return runner.finish()[0]


def replay(initial: SpatialConfig, log: EventLog, sample_times=None, snapshot_times=(),
           until: float | None = None, symmetric: bool = False) -> ObservableSeries:
    """Apply a recorded log to ``initial`` (taken at log.start) up to ``until``."""
    _check_initial(initial, log.params)
    horizon = log.horizon if until is None else until - log.start
    grid = _sample_grid(horizon, sample_times, snapshot_times)
    runner = _Runner([initial], log.start, grid, snapshot_times, symmetric=symmetric)
    sl = log.window(log.start, log.start + horizon)
    runner.feed(log.times[sl], log.kinds[sl], log.tails[sl], log.heads[sl], None)
    return runner.finish()[0]


def max_params(params_list: Sequence[ModelParams]) -> ModelParams:
    geo = {(p.M, p.d, p.L) for p in params_list}
    if len(geo) != 1:
        raise ConfigError("coupled processes must share M, d and L")
    p0 = params_list[0]
    return p0.replace(beta1=max(p.beta1 for p in params_list),
                      beta2=max(p.beta2 for p in params_list),
                      gamma=max(p.gamma for p in params_list))


def thinning_thresholds(params_list: Sequence[ModelParams], top: ModelParams) -> np.ndarray:
    """Per-process acceptance probability of each event kind (kill, birth1, birth2, cross)."""
    def ratio(a, b):
        return 1.0 if b == 0 else a / b
    return np.array([[ratio(p.gamma, top.gamma), ratio(p.beta1, top.beta1),
                      ratio(p.beta2, top.beta2), 1.0] for p in params_list])


def simulate_coupled(initials: Sequence[SpatialConfig], params_list: Sequence[ModelParams],
                     horizon: float, seed, sample_times=None, check_order: bool = False,
                     sample_hook=None, chunk_events: int = DEFAULT_CHUNK_EVENTS):
    """Run several processes off one graphical representation.

    The log is drawn at the largest rate of each kind; process k keeps an
    event of kind j iff its mark is below rate_kj / max_j. The kept events of
    each process are Poisson at that process's own rates, and a process with
    a larger rate keeps a superset of the events of a smaller one.

    With ``check_order`` (two processes), every event verifies at its head site
    that 1s of process 0 are 1s of process 1 and 2s of process 1 are 2s of
    process 0; returns ``(series_list, (violations, first_event_index))``.
    """
    for c, p in zip(initials, params_list):
        _check_initial(c, p)
    if check_order and len(initials) != 2:
        raise ConfigError("order checking needs exactly two processes")
    top = max_params(params_list)
    grid = _sample_grid(horizon, sample_times, ())
    runner = _Runner(initials, 0.0, grid, thresholds=thinning_thresholds(params_list, top),
                     check_order=check_order)
    if sample_hook is not None:
        runner.sample_hooks.append(sample_hook)
    for ch in iter_event_chunks(top, 0.0, horizon, seed, with_marks=True, chunk_events=chunk_events):
        runner.feed(ch.times, ch.kinds, ch.tails, ch.heads, ch.marks)
    series = runner.finish()
    if check_order:
        return series, (int(runner.viol[0]), int(runner.viol[1]))
    return series


def sample_initial(L: int, d: int, p1: float, p2: float, seed) -> SpatialConfig:
    """Product measure: each site is 1 w.p. p1, 2 w.p. p2, else 0."""
    if not (0 <= p1 <= 1 and 0 <= p2 <= 1 and p1 + p2 <= 1 + 1e-12):
        raise ConfigError(f"densities must satisfy p1, p2 >= 0 and p1 + p2 <= 1, got {p1}, {p2}")
    ss = seed_sequence(seed)
    u = generator(_children(ss)[2]).random(L ** d)
    states = np.where(u < p1, 1, np.where(u < p1 + p2, 2, 0)).astype(np.int8)
    return SpatialConfig(L, d, states)


def classify_outcome(series: ObservableSeries) -> Outcome:
    counts = series.counts
    gone1 = bool(np.any(counts[:, 1] == 0)) or math.isfinite(series.extinction_times[0])
    gone2 = bool(np.any(counts[:, 2] == 0)) or math.isfinite(series.extinction_times[1])
    if gone1 and gone2:
        return Outcome.BOTH_EXTINCT
    if gone2:
        return Outcome.SPECIES1_WINS
    if gone1:
        return Outcome.SPECIES2_WINS
    return Outcome.COEXIST


PPM_COLORS = np.array([[255, 255, 255], [0, 0, 0], [128, 128, 128]], dtype=np.uint8)


def write_ppm(config: SpatialConfig, path) -> None:
    """Binary P6 pixmap: empty white, species 1 black, species 2 gray."""
    if config.d != 2:
        raise ConfigError(f"pixmaps need d = 2, got d = {config.d}")
    rgb = PPM_COLORS[config.grid()]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{config.L} {config.L}\n255\n".encode())
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if parts[0] != b"P6":
        raise ValueError("not a P6 pixmap")
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)
