"""End-to-end pipelines behind ``photon-bench run``.

``shots`` configs sample the post-selected states directly; ``duration``
configs go through the full time-tag simulation. All randomness derives from
the config seed (see :mod:`photon_bench.seeding`), and independent states or
settings may be evaluated concurrently without changing any output byte.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis, optics, qcore, timesim
from .config import ExperimentConfig, parse_state, serialize_config
from .counts import CountTable
from .qcore import DensityMatrix, PureState
from .seeding import derive_seed
from .tagio import atomic_write_bytes, encode_ptag

log = logging.getLogger(__name__)

WORKERS_ENV = "PHOTON_BENCH_WORKERS"
RESULTS_FORMAT = "photon-bench/results"
CLASSICAL_TRIALS = 200_000


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pmap(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Estimate:
    name: str
    value: float | bool
    stderr: float | None = None
    inputs_digest: str | None = None

    def as_dict(self) -> dict:
        v = self.value
        if isinstance(v, float) and not math.isfinite(v):
            v = "inf" if v > 0 else "-inf"
        return {"name": self.name, "value": v, "stderr": self.stderr, "inputs_digest": self.inputs_digest}


@dataclass
class TeleportStateResult:
    state: str
    visibility: float
    accidental_fraction: float | None
    bsm_probability: float
    counts: CountTable
    accidental_counts: CountTable
    tomography: analysis.TomographyResult
    fidelity: float
    fidelity_stderr: float


@dataclass
class GhzRepeatResult:
    seed: int
    counts: CountTable
    accidental_counts: CountTable
    snr: analysis.SnrResult
    mermin: analysis.MerminResult
    witness: analysis.FidelityWitnessResult


@dataclass
class RunResult:
    config: ExperimentConfig
    estimates: list[Estimate] = field(default_factory=list)
    teleport: list[TeleportStateResult] = field(default_factory=list)
    ghz: list[GhzRepeatResult] = field(default_factory=list)
    streams: dict[str, timesim.EventStream] = field(default_factory=dict)

    def estimate(self, name: str) -> Estimate:
        for e in self.estimates:
            if e.name == name:
                return e
        raise KeyError(name)

    def value(self, name: str):
        return self.estimate(name).value


# -- quantum models --------------------------------------------------------

def run_config_of(cfg: ExperimentConfig, seed: int) -> timesim.RunConfig:
    return timesim.RunConfig(cfg.duration, seed, cfg.pair, cfg.laser, cfg.windows,
                             tuple(cfg.detector_efficiency), cfg.jitter)


def _visibility(cfg: ExperimentConfig, state: str | None = None) -> float:
    if state is not None:
        v = cfg.noise_for(state).visibility
        if v is not None:
            return v
    if cfg.visibility_override is not None:
        return cfg.visibility_override
    return optics.visibility_factor(cfg.visibility_model)


def _accidental(cfg: ExperimentConfig, state: str | None = None) -> float | None:
    if state is not None:
        f = cfg.noise_for(state).accidental_fraction
        if f is not None:
            return f
    return cfg.accidental_fraction_override


def teleport_model(input_state: PureState, visibility: float, accidental_fraction: float | None,
                   ) -> timesim.QuantumModel:
    pair = qcore.bell_state("PhiMinus").dm()
    p, out = optics.teleport(input_state, pair, visibility, apply_correction=True)
    return timesim.QuantumModel(out, DensityMatrix.maximally_mixed(1), p, accidental_fraction)


def ghz_model(visibility: float, accidental_fraction: float | None) -> timesim.QuantumModel:
    pair = qcore.bell_state("PhiMinus")
    third = PureState.from_label("+")
    p, rho = optics.build_ghz(pair.dm(), third, visibility)
    marginals = DensityMatrix.maximally_mixed(2).tensor(third.dm())
    return timesim.QuantumModel(rho, marginals, p, accidental_fraction)


def _counts(cfg: ExperimentConfig, protocol: str, model: timesim.QuantumModel, settings, seed: int,
            workers: int, label: str) -> timesim.CountSimulation:
    if cfg.shots is not None:
        return timesim.sample_counts_direct(model, settings, cfg.shots, derive_seed(seed, label))
    run = run_config_of(cfg, derive_seed(seed, label))
    return timesim.simulate_counts_detailed(run, protocol, settings, model, workers=workers,
                                            keep_streams="timetags" in cfg.outputs)


# -- protocols -------------------------------------------------------------

def _teleport_one(cfg: ExperimentConfig, name: str, workers: int):
    psi = parse_state(name)
    v = _visibility(cfg, name)
    f = _accidental(cfg, name)
    model = teleport_model(psi, v, f)
    sim = _counts(cfg, "teleport", model, cfg.effective_settings(), cfg.seed, workers, f"teleport/{name}")
    total = sim.total
    tomo = analysis.tomography_1q(total)
    fid = analysis.state_fidelity(tomo.rho, psi)
    bloch = [qcore.expectation(psi.dm(), qcore.PAULI[a]) for a in (qcore.PauliAxis.X, qcore.PauliAxis.Y,
                                                                    qcore.PauliAxis.Z)]
    var = [analysis.parity_expectation(total, b)[1] ** 2 for b in "XYZ"]
    se = 0.5 * math.sqrt(sum(t * t * s for t, s in zip(bloch, var)))
    res = TeleportStateResult(name, v, f, model.success_probability, total, sim.accidental, tomo, fid, se)
    return res, sim.streams


def _run_teleport(cfg: ExperimentConfig, result: RunResult, workers: int) -> None:
    inner = max(1, workers // max(1, len(cfg.input_states)))
    outs = _pmap(lambda s: _teleport_one(cfg, s, inner), cfg.input_states, workers)
    classical = analysis.classical_limit_check(CLASSICAL_TRIALS, derive_seed(cfg.seed, "classical"))
    est = result.estimates
    for res, streams in outs:
        result.teleport.append(res)
        d = res.counts.digest()
        p = f"teleport.{res.state}"
        est.append(Estimate(f"{p}.fidelity", res.fidelity, res.fidelity_stderr, d))
        est.append(Estimate(f"{p}.above_classical_limit", bool(res.fidelity > analysis.CLASSICAL_LIMIT), None, d))
        est.append(Estimate(f"{p}.visibility", res.visibility))
        if res.accidental_fraction is not None:
            est.append(Estimate(f"{p}.accidental_fraction", res.accidental_fraction))
        est.append(Estimate(f"{p}.bsm_probability", res.bsm_probability))
        for i, s in enumerate("xyz"):
            est.append(Estimate(f"{p}.stokes_{s}", res.tomography.stokes[i], None, d))
        est.append(Estimate(f"{p}.total_counts", res.counts.total(), None, d))
        for setting, stream in streams.items():
            result.streams[f"teleport_{_safe(res.state)}_{setting}"] = stream
    est.append(Estimate("teleport.classical_limit_mc", classical, None, None))
    est.append(Estimate("teleport.classical_limit", analysis.CLASSICAL_LIMIT))


def ghz_repeat_seeds(cfg: ExperimentConfig) -> list[int]:
    if cfg.repeats == 1:
        return [cfg.seed]
    return [derive_seed(cfg.seed, "repeat", r) for r in range(cfg.repeats)]


def _ghz_one(cfg: ExperimentConfig, seed: int, workers: int):
    v = _visibility(cfg)
    f = _accidental(cfg)
    model = ghz_model(v, f)
    sim = _counts(cfg, "ghz", model, cfg.effective_settings(), seed, workers, "ghz")
    total = sim.total
    snr = analysis.snr_threefold(total)
    mer = analysis.mermin_value(total)
    wit = analysis.ghz_fidelity(total, mer)
    return GhzRepeatResult(seed, total, sim.accidental, snr, mer, wit), sim.streams


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return float(values[0]), None
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def _run_ghz(cfg: ExperimentConfig, result: RunResult, workers: int) -> None:
    seeds = ghz_repeat_seeds(cfg)
    inner = max(1, workers // len(seeds))
    outs = _pmap(lambda s: _ghz_one(cfg, s, inner), seeds, workers)
    est = result.estimates
    for r, (rep, streams) in enumerate(outs):
        result.ghz.append(rep)
        for setting, stream in streams.items():
            tag = f"ghz_{setting}" if len(seeds) == 1 else f"ghz_r{r}_{setting}"
            result.streams[tag] = stream
    reps = result.ghz
    digest = hashlib.sha256("".join(r.counts.digest() for r in reps).encode()).hexdigest()[:16]
    single = len(reps) == 1
    est.append(Estimate("ghz.visibility", _visibility(cfg)))
    af = _accidental(cfg)
    if af is not None:
        est.append(Estimate("ghz.accidental_fraction", af))
    est.append(Estimate("ghz.success_probability", ghz_model(_visibility(cfg), af).success_probability))
    est.append(Estimate("ghz.repeats", len(reps)))

    def add(name, values, stderrs=None):
        m, se = _mean_se(values)
        if single and stderrs is not None:
            se = stderrs[0]
        est.append(Estimate(name, m, se, digest))

    snrs = [r.snr.snr for r in reps]
    if any(math.isinf(s) for s in snrs):
        est.append(Estimate("ghz.snr", math.inf, None, digest))
    else:
        add("ghz.snr", snrs)
    cons = [r.snr.conservative for r in reps]
    if not any(math.isinf(c) for c in cons):
        add("ghz.snr_conservative", cons)
    labels = qcore.outcome_labels(analysis.ZZZ)
    for i, lab in enumerate(labels):
        add(f"ghz.component.{lab}", [r.snr.per_outcome[i] for r in reps],
            [r.snr.per_outcome_stderr[i] for r in reps])
    for i, s in enumerate(analysis.MERMIN_SETTINGS):
        add(f"ghz.mermin.{s}", [r.mermin.terms[i] for r in reps], [r.mermin.term_stderr[i] for r in reps])
    add("ghz.mermin.value", [r.mermin.value for r in reps], [r.mermin.stderr for r in reps])
    add("ghz.mermin.abs", [abs(r.mermin.value) for r in reps], [r.mermin.stderr for r in reps])
    est.append(Estimate("ghz.mermin.stderr_per_repeat", float(np.mean([r.mermin.stderr for r in reps]))))
    add("ghz.mermin.violation_sigma", [r.mermin.violation_sigma for r in reps])
    est.append(Estimate("ghz.mermin.min_violation_sigma", float(min(r.mermin.violation_sigma for r in reps))))
    add("ghz.population_term", [r.witness.population_term for r in reps])
    add("ghz.coherence_term", [r.witness.coherence_term for r in reps])
    add("ghz.fidelity", [r.witness.fidelity for r in reps], [r.witness.stderr for r in reps])
    mean_a = float(np.mean([abs(r.mermin.value) for r in reps]))
    mean_f = float(np.mean([r.witness.fidelity for r in reps]))
    est.append(Estimate("ghz.mermin_violated", bool(mean_a > analysis.MERMIN_LOCAL_BOUND)))
    est.append(Estimate("ghz.genuine_tripartite", bool(mean_f > analysis.GHZ_WITNESS_BOUND)))


def _run_timetag(cfg: ExperimentConfig, result: RunResult, workers: int) -> None:
    run = run_config_of(cfg, derive_seed(cfg.seed, "timetag"))
    stream = timesim.simulate_stream(run, "timetag", workers=workers, gated=False)
    result.streams["timetags"] = stream
    result.estimates.extend(coincidence_summary(stream, cfg.windows))


def coincidence_summary(stream: timesim.EventStream, windows: timesim.WindowConfig) -> list[Estimate]:
    """Singles, two-fold and three-fold statistics of a D1/D2/D3 stream."""
    seconds = stream.duration / timesim.PS_PER_S
    digest = hashlib.sha256(encode_ptag(stream)).hexdigest()[:16]
    est = [Estimate("timetag.duration_s", seconds, None, digest), Estimate("timetag.tags", len(stream), None, digest)]
    rates = {}
    for ch in (timesim.D1, timesim.D2, timesim.D3):
        n = stream.count(ch)
        rates[ch] = n / seconds if seconds > 0 else 0.0
        est.append(Estimate(f"timetag.singles.ch{ch}", n, analysis.poisson_stderr(n).stderr, digest))

    def twofold(name, a, b, w):
        n = timesim.find_coincidences(stream, [a, b], w).shape[0]
        expect = timesim.accidental_rate_analytic(rates[a], rates[b], 2 * w) * seconds
        est.append(Estimate(f"timetag.{name}.coincidences", n, analysis.poisson_stderr(n).stderr, digest))
        est.append(Estimate(f"timetag.{name}.accidentals_expected", expect, None, digest))

    twofold("pair", timesim.D1, timesim.D2, windows.pair)
    twofold("bsm", timesim.D2, timesim.D3, windows.bsm)
    n3 = timesim.find_threefolds(stream, windows).shape[0]
    est.append(Estimate("timetag.threefold.coincidences", n3, analysis.poisson_stderr(n3).stderr, digest))
    return est


def _safe(name: str) -> str:
    return name.replace("+", "plus").replace("-", "minus").replace("(", "_").replace(")", "") \
        .replace(",", "_").replace(" ", "")


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunResult:
    """Execute the configured pipeline in memory."""
    workers = default_workers() if workers is None else max(1, int(workers))
    result = RunResult(cfg)
    if cfg.protocol == "teleport":
        _run_teleport(cfg, result, workers)
    elif cfg.protocol == "ghz":
        _run_ghz(cfg, result, workers)
    else:
        _run_timetag(cfg, result, workers)
    return result


# -- documents -------------------------------------------------------------

def results_document(result: RunResult) -> str:
    cfg = result.config
    doc = {
        "format": RESULTS_FORMAT,
        "version": 1,
        "protocol": cfg.protocol,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config_digest": hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:16],
        "estimators": [e.as_dict() for e in result.estimates],
    }
    return json.dumps(doc, indent=2) + "\n"


def emit_plot_data(result: RunResult, which: str) -> str:
    """CSV tables for the tomography bar charts or the Z-basis component chart.

    ``tomo_bars``: state, element_row, element_col, real, imag (one row per
    density-matrix element). ``component_bars``: outcome, fraction, stderr
    for the eight Z-basis outcomes (the first repeat when there are several).
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if which == "tomo_bars":
        if not result.teleport:
            raise ValueError("no tomography results to plot")
        w.writerow(["state", "element_row", "element_col", "real", "imag"])
        for res in result.teleport:
            m = res.tomography.rho.mat
            for i in range(2):
                for j in range(2):
                    w.writerow([res.state, i, j, repr(float(m[i, j].real)), repr(float(m[i, j].imag))])
    elif which == "component_bars":
        if not result.ghz:
            raise ValueError("no three-fold component results to plot")
        w.writerow(["outcome", "fraction", "stderr"])
        rep = result.ghz[0]
        for lab, fr, se in zip(qcore.outcome_labels(analysis.ZZZ), rep.snr.per_outcome, rep.snr.per_outcome_stderr):
            w.writerow([lab, repr(fr), repr(se)])
    else:
        raise ValueError(f"unknown plot table {which!r}")
    return buf.getvalue()


def write_outputs(result: RunResult, out_dir: str | os.PathLike) -> list[Path]:
    """Write every declared output atomically; returns the paths written."""
    out = Path(out_dir)
    cfg = result.config
    written = []

    def put(name, data: bytes):
        path = out / name
        atomic_write_bytes(path, data)
        written.append(path)

    if "results" in cfg.outputs:
        put("results.json", results_document(result).encode())
    if "plot_data" in cfg.outputs:
        if result.teleport:
            put("tomo_bars.csv", emit_plot_data(result, "tomo_bars").encode())
        if result.ghz:
            put("component_bars.csv", emit_plot_data(result, "component_bars").encode())
    if "timetags" in cfg.outputs:
        for tag, stream in sorted(result.streams.items()):
            put(f"{tag}.ptag", encode_ptag(stream, 3))
    return written


def run(cfg: ExperimentConfig, out_dir: str | os.PathLike, workers: int | None = None) -> list[Path]:
    result = run_experiment(cfg, workers)
    return write_outputs(result, out_dir)
