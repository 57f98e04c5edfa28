"""Estimators: single-qubit tomography, fidelities, the Mermin observable,
the GHZ fidelity witness and the three-fold signal-to-noise ratio.

Error bars are statistical only: multinomial (binomial per setting) first
order propagation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import qcore
from .counts import CountTable
from .qcore import PAULI, DensityMatrix, PauliAxis, PureState

CLASSICAL_LIMIT = 2 / 3
MERMIN_LOCAL_BOUND = 2.0
GHZ_WITNESS_BOUND = 0.5

MERMIN_SETTINGS = ("YYX", "YXY", "XYY", "XXX")
MERMIN_SIGNS = (1, 1, 1, -1)
ZZZ = "ZZZ"
DESIRED = ("HHH", "VVV")


class EstimatorError(ValueError):
    pass


def _require(counts: CountTable, setting: str, minimum: int = 1) -> int:
    n = counts.total(setting)
    if not counts.setting_counts(setting):
        raise EstimatorError(f"setting {setting!r} missing from count table")
    if n < minimum:
        raise EstimatorError(f"setting {setting!r} has {n} counts, need >= {minimum}")
    return n


def parity_expectation(counts: CountTable, setting: str) -> tuple[float, float]:
    """Mean Pauli-eigenvalue product of a setting and its binomial stderr."""
    n = _require(counts, setting)
    s = sum(qcore.outcome_parity(setting, o) * c for o, c in counts.setting_counts(setting).items()) / n
    return s, math.sqrt(max(1 - s * s, 0.0) / n)


# -- tomography ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TomographyResult:
    rho: DensityMatrix
    stderr_per_element: np.ndarray
    stokes: tuple[float, float, float]
    raw_stokes: tuple[float, float, float]

    @property
    def projected(self) -> bool:
        return self.stokes != self.raw_stokes


TOMO_MIN_COUNTS = 100


def tomography_1q(counts: CountTable, min_counts: int = TOMO_MIN_COUNTS) -> TomographyResult:
    """Linear-inversion tomography from X, Y, Z counts.

    A non-physical linear estimate is replaced by its eigenvalue-clipped,
    renormalized projection.
    """
    raw, var = [], []
    for b in "XYZ":
        n = _require(counts, b, min_counts)
        s, se = parity_expectation(counts, b)
        raw.append(s)
        var.append(se * se)
    sx, sy, sz = raw
    mat = 0.5 * (PAULI[PauliAxis.I] + sx * PAULI[PauliAxis.X] + sy * PAULI[PauliAxis.Y] + sz * PAULI[PauliAxis.Z])
    if np.linalg.eigvalsh(mat).min() < 0:
        mat = qcore.physical_projection(mat)
    rho = DensityMatrix(mat)
    stokes = tuple(float(np.real(np.trace(rho.mat @ PAULI[a]))) for a in (PauliAxis.X, PauliAxis.Y, PauliAxis.Z))
    if np.allclose(stokes, raw, atol=1e-12):
        stokes = tuple(raw)
    vx, vy, vz = var
    diag = math.sqrt(vz) / 2
    off = math.sqrt(vx + vy) / 2
    err = np.array([[diag, off], [off, diag]])
    return TomographyResult(rho, err, stokes, tuple(raw))


def state_fidelity(rho: DensityMatrix, target: PureState) -> float:
    if rho.nqubits != target.nqubits:
        raise ValueError("state and target have different numbers of qubits")
    a = target.amplitudes
    f = np.vdot(a, rho.mat @ a)
    if abs(f.imag) > 1e-9:
        raise ArithmeticError("fidelity has an imaginary part")
    return float(min(max(f.real, 0.0), 1.0))


def classical_limit_check(n_trials: int, seed: int, min_trials: int = 10_000) -> float:
    """Mean fidelity of measure-and-prepare teleportation on Haar-random inputs.

    Each input is measured along a uniformly random axis and the observed
    eigenstate is re-prepared. Converges to 2/3.
    """
    if n_trials < min_trials:
        raise ValueError(f"n_trials must be >= {min_trials}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_trials, 2)) + 1j * rng.standard_normal((n_trials, 2))
    psi = z / np.linalg.norm(z, axis=1, keepdims=True)
    # random measurement basis: Haar-random unit vector and its orthogonal complement
    w = rng.standard_normal((n_trials, 2)) + 1j * rng.standard_normal((n_trials, 2))
    e0 = w / np.linalg.norm(w, axis=1, keepdims=True)
    e1 = np.stack([-e0[:, 1].conj(), e0[:, 0].conj()], axis=1)
    p0 = np.abs(np.sum(e0.conj() * psi, axis=1)) ** 2
    p1 = np.abs(np.sum(e1.conj() * psi, axis=1)) ** 2
    got0 = rng.random(n_trials) < p0
    fid = np.where(got0, p0, p1)
    return float(fid.mean())


# -- GHZ -------------------------------------------------------------------

@dataclass(frozen=True)
class MerminResult:
    terms: tuple[float, float, float, float]
    term_stderr: tuple[float, float, float, float]
    value: float
    stderr: float

    @property
    def violation_sigma(self) -> float:
        """How many stderr |<A>| sits above the local-realistic bound 2."""
        if self.stderr == 0:
            return math.inf if abs(self.value) > MERMIN_LOCAL_BOUND else 0.0
        return (abs(self.value) - MERMIN_LOCAL_BOUND) / self.stderr


def mermin_from_terms(terms, term_stderr=(0.0, 0.0, 0.0, 0.0)) -> MerminResult:
    terms = tuple(float(t) for t in terms)
    term_stderr = tuple(float(e) for e in term_stderr)
    value = sum(s * t for s, t in zip(MERMIN_SIGNS, terms))
    return MerminResult(terms, term_stderr, value, math.sqrt(sum(e * e for e in term_stderr)))


def mermin_value(counts: CountTable) -> MerminResult:
    """<A> = <YYX> + <YXY> + <XYY> - <XXX> from the four settings."""
    est = [parity_expectation(counts, s) for s in MERMIN_SETTINGS]
    return mermin_from_terms([e[0] for e in est], [e[1] for e in est])


@dataclass(frozen=True)
class FidelityWitnessResult:
    population_term: float
    coherence_term: float
    fidelity: float
    stderr: float

    @property
    def genuine_tripartite(self) -> bool:
        return self.fidelity > GHZ_WITNESS_BOUND


def ghz_fidelity(zzz_counts: CountTable, mermin: MerminResult) -> FidelityWitnessResult:
    """F = (P_HHH + P_VVV)/2 + |<A>|/8."""
    n = _require(zzz_counts, ZZZ)
    q = sum(zzz_counts.get_count(ZZZ, o) for o in DESIRED) / n
    pop = q / 2
    coh = abs(mermin.value) / 8
    se = math.sqrt((q * (1 - q) / n) / 4 + (mermin.stderr / 8) ** 2)
    return FidelityWitnessResult(pop, coh, pop + coh, se)


@dataclass(frozen=True)
class SnrResult:
    snr: float  # math.inf when no undesired counts were seen
    conservative: float  # min(desired) / max(undesired)
    per_outcome: tuple[float, ...]  # fractions in canonical Z-basis order
    per_outcome_stderr: tuple[float, ...]

    @property
    def infinite(self) -> bool:
        return math.isinf(self.snr)


def snr_threefold(zzz_counts: CountTable) -> SnrResult:
    """Mean(HHH, VVV) over mean of the six other Z-basis outcomes."""
    n = _require(zzz_counts, ZZZ)
    labels = qcore.outcome_labels(ZZZ)
    c = np.array([zzz_counts.get_count(ZZZ, o) for o in labels], dtype=float)
    desired = np.array([lab in DESIRED for lab in labels])
    good, bad = c[desired], c[~desired]
    snr = math.inf if bad.sum() == 0 else float(good.mean() / bad.mean())
    conservative = math.inf if bad.max() == 0 else float(good.min() / bad.max())
    frac = c / n
    err = np.array([poisson_stderr(int(k)).stderr for k in c]) / n
    return SnrResult(snr, conservative, tuple(frac.tolist()), tuple(err.tolist()))


class PoissonError(NamedTuple):
    stderr: float
    zero_count: bool


def poisson_stderr(count: int) -> PoissonError:
    """sqrt(count), with 1 substituted (and flagged) for an empty bin."""
    if count < 0:
        raise ValueError("count must be >= 0")
    if count == 0:
        return PoissonError(1.0, True)
    return PoissonError(math.sqrt(count), False)
