"""Continuous-wave time-tag Monte Carlo and coincidence search.

Times are integer picoseconds from the start of a run. Streams are generated
in fixed-length shards, each drawing from its own seed derived from the
master seed, so a stream is bit-identical whatever the number of workers.

Detector channels used by the protocols: 0 = D1 (photon 1), 1 = D2
(photon 2), 2 = D3 (photon 3, the attenuated laser).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qcore
from .counts import CountTable
from .optics import SourceKind, SourceSpec
from .qcore import DensityMatrix
from .seeding import derive_seed, rng_for

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        return (lambda f: f) if not args or not callable(args[0]) else args[0]

PS_PER_S = 10**12
SPEED_OF_LIGHT = 2.99792458e8
SHARD_SECONDS = 1.0

D1, D2, D3 = 0, 1, 2
_MARKER = 3

# emitter ids: source tag in the top byte, shard and index below
_PAIR_SOURCE = 1
_LASER_SOURCE = 2


def to_ps(seconds: float) -> int:
    return int(round(seconds * PS_PER_S))


def _emitter_ids(source: int, shard: int, n: int) -> np.ndarray:
    return (np.int64(source) << 56) | (np.int64(shard) << 32) | np.arange(n, dtype=np.int64)


def emitter_source(emitters: np.ndarray) -> np.ndarray:
    return emitters >> 56


@dataclass(frozen=True, eq=False)
class EventStream:
    """Time-ordered detection tags (ties broken by channel).

    ``emitters`` records which emission event produced each tag. It is
    simulation bookkeeping only and is not written to time-tag files; read
    streams carry ``-1``.
    """

    times: np.ndarray
    channels: np.ndarray
    duration: int
    emitters: np.ndarray = field(default=None)

    def __post_init__(self):
        t = np.ascontiguousarray(self.times, dtype=np.int64)
        c = np.ascontiguousarray(self.channels, dtype=np.int64)
        e = np.full(t.size, -1, dtype=np.int64) if self.emitters is None \
            else np.ascontiguousarray(self.emitters, dtype=np.int64)
        if not (t.shape == c.shape == e.shape) or t.ndim != 1:
            raise ValueError("times, channels and emitters must be equal-length vectors")
        d = int(self.duration)
        if t.size:
            if t[0] < 0 or t[-1] > d:
                raise ValueError("tag times must lie in [0, duration]")
            dt = np.diff(t)
            if np.any(dt < 0) or np.any((dt == 0) & (np.diff(c) < 0)):
                raise ValueError("tags are not sorted by (time, channel)")
            if c.min() < 0:
                raise ValueError("channels must be non-negative")
        for a in (t, c, e):
            a.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "channels", c)
        object.__setattr__(self, "emitters", e)
        object.__setattr__(self, "duration", d)

    def __len__(self) -> int:
        return int(self.times.size)

    @classmethod
    def empty(cls, duration: int) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z, duration, z)

    @classmethod
    def from_unsorted(cls, times, channels, duration: int, emitters=None) -> "EventStream":
        times = np.asarray(times, dtype=np.int64)
        channels = np.asarray(channels, dtype=np.int64)
        order = np.lexsort((channels, times))
        em = None if emitters is None else np.asarray(emitters, dtype=np.int64)[order]
        return cls(times[order], channels[order], duration, em)

    def select(self, channels: Sequence[int]) -> "EventStream":
        m = np.isin(self.channels, list(channels))
        return EventStream(self.times[m], self.channels[m], self.duration, self.emitters[m])

    def count(self, channel: int) -> int:
        return int(np.count_nonzero(self.channels == channel))


@dataclass(frozen=True)
class WindowConfig:
    """Coincidence windows in seconds: pair two-fold, BSM two-fold, three-fold."""

    pair: float
    bsm: float
    threefold: float

    def __post_init__(self):
        if not (self.pair > 0 and self.bsm > 0 and self.threefold > 0):
            raise ValueError("all coincidence windows must be > 0")


@dataclass(frozen=True)
class RunConfig:
    duration: float
    seed: int
    pair: SourceSpec
    laser: SourceSpec
    windows: WindowConfig
    detector_efficiency: tuple[float, float, float] = (1.0, 1.0, 1.0)
    jitter: float = 0.0  # Gaussian sigma per tag, seconds

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be > 0")
        if any(not 0 < e <= 1 for e in self.detector_efficiency):
            raise ValueError("detector efficiencies must be in (0, 1]")
        if self.jitter < 0:
            raise ValueError("jitter must be >= 0")


# -- stream generation -----------------------------------------------------

def _shards(duration_ps: int, shard_ps: int) -> list[tuple[int, int, int]]:
    n = max(1, -(-duration_ps // shard_ps))
    return [(i, i * shard_ps, min((i + 1) * shard_ps, duration_ps)) for i in range(n)]


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def gen_pair_stream(pair: SourceSpec, duration: float, seed: int, channels: tuple[int, int] = (D1, D2),
                    workers: int = 1, shard_seconds: float = SHARD_SECONDS) -> EventStream:
    """Poissonian pair emissions; the partner is delayed by a Laplace(0, tau) draw.

    Tags falling outside ``[0, duration]`` are dropped.
    """
    if pair.kind is not SourceKind.PAIR:
        raise ValueError("gen_pair_stream needs an EntangledPair source")
    d_ps = to_ps(duration)
    if d_ps <= 0:
        return EventStream.empty(max(d_ps, 0))
    tau_ps = pair.correlation_time * PS_PER_S
    a, b = channels

    def shard(spec):
        i, lo, hi = spec
        rng = rng_for(seed, "pair", i)
        n = rng.poisson(pair.rate * (hi - lo) / PS_PER_S)
        t0 = rng.integers(lo, hi, size=n, dtype=np.int64) if hi > lo else np.zeros(0, np.int64)
        delay = np.rint(rng.laplace(0.0, tau_ps, size=n)).astype(np.int64)
        em = _emitter_ids(_PAIR_SOURCE, i, n)
        return t0, t0 + delay, em

    parts = _map(shard, _shards(d_ps, to_ps(shard_seconds)), workers)
    t_a = np.concatenate([p[0] for p in parts])
    t_b = np.concatenate([p[1] for p in parts])
    em = np.concatenate([p[2] for p in parts])
    times = np.concatenate([t_a, t_b])
    chans = np.concatenate([np.full(t_a.size, a), np.full(t_b.size, b)])
    ems = np.concatenate([em, em])
    keep = (times >= 0) & (times <= d_ps)
    return EventStream.from_unsorted(times[keep], chans[keep], d_ps, ems[keep])


def merge_intervals(starts: np.ndarray, ends: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Union of half-open intervals [start, end); input sorted by start."""
    if starts.size == 0:
        return starts, ends
    run_end = np.maximum.accumulate(ends)
    new = np.empty(starts.size, dtype=bool)
    new[0] = True
    new[1:] = starts[1:] > run_end[:-1]
    idx = np.flatnonzero(new)
    last = np.append(idx[1:] - 1, starts.size - 1)
    return starts[idx], run_end[last]


def gen_poisson_stream(source: SourceSpec, duration: float, seed: int, channel: int = D3,
                       gates: tuple[np.ndarray, np.ndarray] | None = None,
                       workers: int = 1, shard_seconds: float = SHARD_SECONDS) -> EventStream:
    """Homogeneous Poisson arrivals on one channel.

    With ``gates`` (disjoint, sorted half-open ps intervals) photons are only
    generated inside the gates; restricted to the gates the process is the
    same Poisson process, which is all a coincidence search ever sees when
    every possible partner lies within a gate.
    """
    d_ps = to_ps(duration)
    if d_ps <= 0:
        return EventStream.empty(max(d_ps, 0))
    shard_ps = to_ps(shard_seconds)
    label = "laser" if gates is None else "laser-gated"

    if gates is None:
        def shard(spec):
            i, lo, hi = spec
            rng = rng_for(seed, label, channel, i)
            n = rng.poisson(source.rate * (hi - lo) / PS_PER_S)
            return rng.integers(lo, hi, size=n, dtype=np.int64), _emitter_ids(_LASER_SOURCE, i, n)
        parts = _map(shard, _shards(d_ps, shard_ps), workers)
    else:
        g_lo = np.clip(np.asarray(gates[0], dtype=np.int64), 0, d_ps + 1)
        g_hi = np.clip(np.asarray(gates[1], dtype=np.int64), 0, d_ps + 1)
        shard_of = g_lo // shard_ps
        bounds = np.searchsorted(shard_of, np.arange(shard_of.max() + 2 if g_lo.size else 1))

        def shard(i):
            lo, hi = g_lo[bounds[i]:bounds[i + 1]], g_hi[bounds[i]:bounds[i + 1]]
            rng = rng_for(seed, label, channel, i)
            lens = hi - lo
            k = rng.poisson(source.rate * lens / PS_PER_S)
            which = np.repeat(np.arange(lo.size), k)
            t = lo[which] + np.floor(rng.random(which.size) * lens[which]).astype(np.int64)
            return t, _emitter_ids(_LASER_SOURCE, i, t.size)
        parts = _map(shard, list(range(bounds.size - 1)), workers)

    times = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, np.int64)
    em = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, np.int64)
    keep = times <= d_ps
    return EventStream.from_unsorted(times[keep], np.full(int(keep.sum()), channel), d_ps, em[keep])


def merge_streams(streams: Sequence[EventStream]) -> EventStream:
    if not streams:
        raise ValueError("nothing to merge")
    durations = {s.duration for s in streams}
    if len(durations) != 1:
        raise ValueError(f"cannot merge streams of different durations {sorted(durations)}")
    return EventStream.from_unsorted(
        np.concatenate([s.times for s in streams]),
        np.concatenate([s.channels for s in streams]),
        durations.pop(),
        np.concatenate([s.emitters for s in streams]),
    )


def thin(stream: EventStream, efficiency: Sequence[float], seed: int) -> EventStream:
    """Independent Bernoulli detection per tag with per-channel efficiency."""
    eff = np.asarray(efficiency, dtype=float)
    if np.all(eff >= 1):
        return stream
    rng = rng_for(seed, "thin")
    per_channel = np.ones(max(eff.size, int(stream.channels.max(initial=0)) + 1))
    per_channel[:eff.size] = eff
    p = per_channel[stream.channels]
    keep = rng.random(len(stream)) < p
    return EventStream(stream.times[keep], stream.channels[keep], stream.duration, stream.emitters[keep])


def add_jitter(stream: EventStream, sigma: float, seed: int) -> EventStream:
    if sigma <= 0 or len(stream) == 0:
        return stream
    rng = rng_for(seed, "jitter")
    t = stream.times + np.rint(rng.normal(0.0, sigma * PS_PER_S, len(stream))).astype(np.int64)
    t = np.clip(t, 0, stream.duration)
    return EventStream.from_unsorted(t, stream.channels, stream.duration, stream.emitters)


# -- coincidence search ----------------------------------------------------

@njit(cache=True)
def _sweep(times, slot, k, window, offsets, buf, out):
    head = offsets[:-1].copy()
    tail = offsets[:-1].copy()
    ng = 0
    for p in range(times.size):
        c = slot[p]
        if c < 0:
            continue
        lo = times[p] - window
        ok = True
        for j in range(k):
            while head[j] < tail[j] and times[buf[head[j]]] < lo:
                head[j] += 1
            if j != c and head[j] == tail[j]:
                ok = False
        if ok:
            for j in range(k):
                if j == c:
                    out[ng, j] = p
                else:
                    out[ng, j] = buf[head[j]]
                    head[j] += 1
            ng += 1
        else:
            buf[tail[c]] = p
            tail[c] += 1
    return ng


def find_coincidences(stream: EventStream, channels: Sequence[int], window: float) -> np.ndarray:
    """Greedy one-tag-per-channel coincidence groups.

    Sweeping tags in stream order, each tag tries to complete a group using,
    for every other channel, the earliest unused tag no more than ``window``
    older than itself. On success all members are consumed; otherwise the tag
    waits for a later completion. Returns an ``(n_groups, len(channels))``
    array of stream indices, columns in the order of ``channels``.
    ``window`` is in seconds; the group span (latest minus earliest tag) may
    not exceed it.
    """
    if not window > 0:
        raise ValueError("window must be > 0")
    return find_coincidences_ps(stream, channels, to_ps(window))


def find_coincidences_ps(stream: EventStream, channels: Sequence[int], window_ps: int) -> np.ndarray:
    channels = [int(c) for c in channels]
    if len(channels) < 2 or len(set(channels)) != len(channels):
        raise ValueError("need at least two distinct channels")
    w = int(window_ps)
    if w <= 0:
        raise ValueError("window must be > 0")
    k = len(channels)
    lut = np.full(max(channels + [int(stream.channels.max()) if len(stream) else 0]) + 1, -1, dtype=np.int64)
    for j, c in enumerate(channels):
        lut[c] = j
    slot = lut[stream.channels] if len(stream) else np.zeros(0, dtype=np.int64)
    sizes = np.bincount(slot[slot >= 0], minlength=k)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    buf = np.empty(max(int(offsets[-1]), 1), dtype=np.int64)
    out = np.empty((int(sizes.min()) if sizes.size else 0, k), dtype=np.int64)
    ng = _sweep(stream.times, slot, k, np.int64(w), offsets, buf, out)
    return out[:ng].copy()


def accidental_rate_analytic(r1: float, r2: float, window: float) -> float:
    """Uncorrelated two-fold rate r1 * r2 * window, ``window`` the total
    coincidence width. ``find_coincidences`` accepts |dt| <= w, a total width
    of 2w."""
    if r1 < 0 or r2 < 0 or window < 0:
        raise ValueError("rates and window must be non-negative")
    return r1 * r2 * window


def coherence_time_from_linewidth(linewidth: float, shape: str = "Lorentzian") -> float:
    if shape != "Lorentzian":
        raise ValueError(f"unsupported line shape {shape!r}")
    if not linewidth > 0:
        raise ValueError("linewidth must be > 0")
    return 1.0 / (2 * math.pi * linewidth)


def coherence_length(linewidth: float, shape: str = "Lorentzian") -> float:
    return SPEED_OF_LIGHT * coherence_time_from_linewidth(linewidth, shape)


# -- three-fold pipeline ---------------------------------------------------

def find_threefolds(stream: EventStream, windows: WindowConfig) -> np.ndarray:
    """D2/D3 BSM coincidences heralded by D1.

    First pairs D2 with D3 within the BSM window; each BSM event is then
    timed at its D2 tag and paired with D1 within the three-fold window.
    Returns ``(n, 3)`` stream indices (D1, D2, D3).
    """
    bsm = find_coincidences(stream, [D2, D3], windows.bsm)
    d1 = np.flatnonzero(stream.channels == D1)
    t = np.concatenate([stream.times[d1], stream.times[bsm[:, 0]]])
    ch = np.concatenate([np.full(d1.size, D1), np.full(bsm.shape[0], _MARKER)])
    ref = np.concatenate([d1, np.arange(bsm.shape[0])])
    order = np.lexsort((ch, t))
    herald = EventStream(t[order], ch[order], stream.duration)
    ref = ref[order]
    groups = find_coincidences(herald, [D1, _MARKER], windows.threefold)
    out = np.empty((groups.shape[0], 3), dtype=np.int64)
    out[:, 0] = ref[groups[:, 0]]
    out[:, 1:] = bsm[ref[groups[:, 1]]]
    return out


def classify_threefolds(stream: EventStream, groups: np.ndarray) -> np.ndarray:
    """True where D1 and D2 share a pair emission and D3 is a laser photon."""
    if groups.size == 0:
        return np.zeros(0, dtype=bool)
    em = stream.emitters
    same_pair = (em[groups[:, 0]] == em[groups[:, 1]]) & (emitter_source(em[groups[:, 0]]) == _PAIR_SOURCE)
    laser = emitter_source(em[groups[:, 2]]) == _LASER_SOURCE
    return same_pair & laser


def simulate_stream(run: RunConfig, label: str = "", workers: int = 1, gated: bool = True) -> EventStream:
    """Detector stream of one run: pairs on D1/D2 and the laser on D3."""
    seed = derive_seed(run.seed, "stream", label)
    pairs = gen_pair_stream(run.pair, run.duration, derive_seed(seed, "pair"), workers=workers)
    gates = None
    if gated:
        t2 = pairs.times[pairs.channels == D2]
        w = to_ps(run.windows.bsm) + (to_ps(4 * run.jitter) if run.jitter else 0)
        gates = merge_intervals(t2 - w, t2 + w + 1)
    laser = gen_poisson_stream(run.laser, run.duration, derive_seed(seed, "laser"), D3, gates=gates,
                               workers=workers)
    stream = merge_streams([pairs, laser])
    stream = thin(stream, run.detector_efficiency, derive_seed(seed, "efficiency"))
    return add_jitter(stream, run.jitter, derive_seed(seed, "jitter"))


@dataclass(frozen=True)
class QuantumModel:
    """What a coincidence looks like to the analyzers.

    ``true_state`` is the conditional state of the measured photons for a
    genuine three-fold, ``accidental_state`` the product of single-photon
    marginals used for accidentals, ``success_probability`` the chance a
    candidate three-fold survives PBS post-selection (and analyzers).
    """

    true_state: DensityMatrix
    accidental_state: DensityMatrix
    success_probability: float
    accidental_fraction: float | None = None

    def __post_init__(self):
        if self.true_state.nqubits != self.accidental_state.nqubits:
            raise ValueError("true and accidental states must have the same size")
        if not 0 < self.success_probability <= 1:
            raise ValueError("success probability must be in (0, 1]")
        f = self.accidental_fraction
        if f is not None and not 0 <= f < 1:
            raise ValueError("accidental fraction must be in [0, 1)")


@dataclass(frozen=True)
class CountSimulation:
    true: CountTable
    accidental: CountTable
    candidates: dict[str, int]
    streams: dict[str, EventStream] = field(default_factory=dict)

    @property
    def total(self) -> CountTable:
        return self.true + self.accidental


PROTOCOL_QUBITS = {"teleport": 1, "ghz": 3}


def _sample(state: DensityMatrix, setting: str, n: int, rng) -> dict[tuple[str, str], int]:
    labels = qcore.outcome_labels(setting)
    if n == 0:
        return {(setting, lab): 0 for lab in labels}
    draws = rng.multinomial(n, qcore.born_probabilities(state, setting))
    return {(setting, lab): int(c) for lab, c in zip(labels, draws)}


def simulate_counts_detailed(run: RunConfig, protocol: str, settings: Sequence[str], quantum: QuantumModel,
                             seed: int | None = None, workers: int = 1, keep_streams: bool = False,
                             ) -> CountSimulation:
    """Full timing pipeline, one independent run of ``run.duration`` per setting."""
    if protocol not in PROTOCOL_QUBITS:
        raise ValueError(f"unknown protocol {protocol!r}")
    if not settings:
        raise ValueError("no measurement settings")
    nq = PROTOCOL_QUBITS[protocol]
    if quantum.true_state.nqubits != nq:
        raise ValueError(f"{protocol} expects a {nq}-qubit conditional state")
    for s in settings:
        if len(s) != nq or any(b not in qcore.BASES for b in s):
            raise ValueError(f"bad setting {s!r} for {protocol}")
    seed = run.seed if seed is None else seed

    def one(setting):
        stream = simulate_stream(run, label=setting, workers=workers)
        groups = find_threefolds(stream, run.windows)
        genuine = classify_threefolds(stream, groups)
        rng = rng_for(seed, "outcomes", setting)
        keep = rng.random(groups.shape[0]) < quantum.success_probability
        n_true = int(np.count_nonzero(keep & genuine))
        n_acc = int(np.count_nonzero(keep & ~genuine))
        f = quantum.accidental_fraction
        if f is not None:
            extra = max(f / (1 - f) * n_true - n_acc, 0.0)
            n_acc += int(rng.poisson(extra))
        t = _sample(quantum.true_state, setting, n_true, rng)
        a = _sample(quantum.accidental_state, setting, n_acc, rng)
        return t, a, int(groups.shape[0]), stream if keep_streams else None

    results = _map(one, list(settings), workers)
    true, acc, cand, streams = {}, {}, {}, {}
    for setting, (t, a, n, s) in zip(settings, results):
        true.update(t)
        acc.update(a)
        cand[setting] = n
        if s is not None:
            streams[setting] = s
    return CountSimulation(CountTable(true), CountTable(acc), cand, streams)


def simulate_counts(run: RunConfig, protocol: str, settings: Sequence[str], quantum: QuantumModel,
                    seed: int | None = None, workers: int = 1) -> CountTable:
    return simulate_counts_detailed(run, protocol, settings, quantum, seed, workers).total


def sample_counts_direct(quantum: QuantumModel, settings: Sequence[str], shots: int, seed: int) -> CountSimulation:
    """Shots mode: Born sampling without the timing layer.

    Each shot is an accidental with probability ``quantum.accidental_fraction``
    (zero if unset).
    """
    f = quantum.accidental_fraction or 0.0
    true, acc = {}, {}
    for setting in settings:
        rng = rng_for(seed, "shots", setting)
        n_acc = int(rng.binomial(shots, f)) if f > 0 else 0
        true.update(_sample(quantum.true_state, setting, shots - n_acc, rng))
        acc.update(_sample(quantum.accidental_state, setting, n_acc, rng))
    return CountSimulation(CountTable(true), CountTable(acc), {s: shots for s in settings})
