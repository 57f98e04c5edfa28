"""The optical table as state maps: waveplates, PBS post-selection, the
partial Bell-state measurement, and the teleportation / GHZ protocols.

Partial distinguishability of photons from independent sources enters as a
single visibility ``v`` that scales the coherence between the two PBS
coincidence branches (HH and VV of the interfering pair).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import qcore
from .qcore import DensityMatrix, ImpossibleOutcome, PureState


class WaveplateKind(str, enum.Enum):
    HALF = "HalfWave"
    QUARTER = "QuarterWave"


@dataclass(frozen=True)
class WaveplateSpec:
    kind: WaveplateKind
    angle: float  # fast-axis angle from H, radians

    def __post_init__(self):
        object.__setattr__(self, "kind", WaveplateKind(self.kind))
        object.__setattr__(self, "angle", float(self.angle) % math.pi)


def _rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def waveplate_unitary(spec: WaveplateSpec) -> np.ndarray:
    """Jones matrix of a half- or quarter-wave plate."""
    t = spec.angle
    if spec.kind is WaveplateKind.HALF:
        c, s = math.cos(2 * t), math.sin(2 * t)
        return np.array([[c, s], [s, -c]], dtype=complex)
    u = _rotation(t) @ np.diag([1, 1j]) @ _rotation(-t)
    if u[0, 0].real < 0:
        u = -u
    return u


class SourceKind(str, enum.Enum):
    PAIR = "EntangledPair"
    LASER = "AttenuatedLaser"


@dataclass(frozen=True)
class SourceSpec:
    """Abstract photon source: emission rate, pair correlation time, linewidth."""

    kind: SourceKind
    rate: float
    linewidth: float
    correlation_time: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if not self.rate > 0:
            raise ValueError("source rate must be > 0")
        if not self.linewidth > 0:
            raise ValueError("source linewidth must be > 0")
        if self.kind is SourceKind.PAIR and not (self.correlation_time or 0) > 0:
            raise ValueError("entangled-pair source needs correlation_time > 0")

    def with_rate(self, rate: float) -> "SourceSpec":
        return SourceSpec(self.kind, rate, self.linewidth, self.correlation_time)


class VisibilityKind(str, enum.Enum):
    UNIT = "Unit"
    EXPONENTIAL = "Exponential"
    GAUSSIAN = "Gaussian"


@dataclass(frozen=True)
class VisibilityModel:
    kind: VisibilityKind
    window: float = 1.0
    coherence_time: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", VisibilityKind(self.kind))
        if self.kind is not VisibilityKind.UNIT and not (self.window > 0 and self.coherence_time > 0):
            raise ValueError("visibility model needs window > 0 and coherence_time > 0")


def visibility_factor(model: VisibilityModel) -> float:
    """Coherence exp(-|dt|/tau) (or its Gaussian analogue) averaged over a
    detection-time difference uniform in [-w/2, w/2]."""
    if model.kind is VisibilityKind.UNIT:
        return 1.0
    x = model.window / (2 * model.coherence_time)
    if x < 1e-8:
        return 1.0
    if model.kind is VisibilityKind.EXPONENTIAL:
        return -math.expm1(-x) / x
    # (1/w) * integral of exp(-t^2 / 2 tau^2) over [-w/2, w/2]
    y = x / math.sqrt(2)
    return math.sqrt(math.pi) * math.erf(y) / (2 * y)


def pbs_postselect_projector() -> np.ndarray:
    """Projector onto span{|HH>, |VV>}: one photon leaves each PBS port."""
    return np.diag([1, 0, 0, 1]).astype(complex)


def _pair_branch(nqubits: int, q_a: int, q_b: int) -> np.ndarray:
    """Per basis index: 0 for HH on (a, b), 1 for VV, -1 otherwise."""
    idx = np.arange(1 << nqubits)
    bit_a = (idx >> (nqubits - 1 - q_a)) & 1
    bit_b = (idx >> (nqubits - 1 - q_b)) & 1
    return np.where(bit_a == bit_b, bit_a, -1)


def apply_pairwise_dephasing(state: DensityMatrix, q_a: int, q_b: int, v: float) -> DensityMatrix:
    """Scale HH<->VV coherence of qubits (a, b) by ``v``.

    Implemented as the channel
    ``(1+v)/2 rho + (1-v)/2 (Z_c rho Z_c + P_b rho P_b)`` with
    ``Z_c = P_HH - P_VV`` and ``P_b`` the projector on HV/VH. Populations and
    everything inside either branch are untouched; the HH<->VV coherence is
    multiplied by ``v`` and coherence between the coincidence and bunching
    subspaces by ``(1+v)/2``. On states inside the coincidence subspace this is
    exactly the plain element-wise rescaling.
    """
    if not 0 <= v <= 1:
        raise ValueError("visibility must be in [0, 1]")
    n = state.nqubits
    if q_a == q_b:
        raise ValueError("dephasing needs two distinct qubits")
    qcore._check_targets([q_a, q_b], n)
    br = _pair_branch(n, q_a, q_b)
    coinc = br >= 0
    factor = np.ones((1 << n, 1 << n))
    cross = (br[:, None] >= 0) & (br[None, :] >= 0) & (br[:, None] != br[None, :])
    factor[cross] = v
    mixed = coinc[:, None] != coinc[None, :]
    factor[mixed] = (1 + v) / 2
    return DensityMatrix(state.mat * factor)


@dataclass(frozen=True)
class BsmOutcome:
    success: bool
    probability: float
    conditional: DensityMatrix | None


PLUS_PLUS = np.kron(qcore.KETS["+"], qcore.KETS["+"])


def pbs_coincidence(state: DensityMatrix, q_a: int, q_b: int, visibility: float) -> tuple[float, np.ndarray]:
    """Unnormalized PBS-coincidence post-selection with visibility dephasing.

    Returns (probability, P rho P / probability) as a raw matrix.
    """
    n = state.nqubits
    proj = qcore.embed_operator(pbs_postselect_projector(), [q_a, q_b], n)
    kept = proj @ state.mat @ proj
    p = float(np.real(np.trace(kept)))
    if p < qcore.IMPOSSIBLE_PROB:
        raise ImpossibleOutcome(p)
    rho = apply_pairwise_dephasing(DensityMatrix(kept / p), q_a, q_b, visibility)
    return p, rho.mat


def partial_bsm(state: DensityMatrix, q_a: int, q_b: int, visibility: float = 1.0) -> BsmOutcome:
    """PBS coincidence on (a, b) followed by |+>|+> analyzers on both photons.

    The returned probability is that of the full ``++`` click pattern; the
    conditional state covers the remaining qubits in their original order.
    """
    n = state.nqubits
    if n < 2:
        raise ValueError("partial BSM needs at least two qubits")
    if q_a == q_b:
        raise ValueError("partial BSM needs two distinct qubits")
    if not 0 <= visibility <= 1:
        raise ValueError("visibility must be in [0, 1]")
    qcore._check_targets([q_a, q_b], n)
    p_pbs, rho = pbs_coincidence(state, q_a, q_b, visibility)
    analyzer = qcore.embed_operator(np.outer(PLUS_PLUS, PLUS_PLUS.conj()), [q_a, q_b], n)
    p_ana, cond = qcore.project(DensityMatrix(rho), analyzer)
    rest = [q for q in range(n) if q not in (q_a, q_b)]
    reduced = cond.ptrace(rest) if rest else None
    return BsmOutcome(True, p_pbs * p_ana, reduced)


def teleport(input_state: PureState, pair: DensityMatrix, visibility: float = 1.0,
             apply_correction: bool = True) -> tuple[float, DensityMatrix]:
    """Teleport photon 3 onto photon 1 of ``pair`` (photons 1, 2).

    Register order is (photon 3, photon 1, photon 2); the BSM acts on photons
    2 and 3 and sigma_z on photon 1 completes the protocol.
    """
    if input_state.nqubits != 1 or pair.nqubits != 2:
        raise ValueError("teleport needs a 1-qubit input and a 2-qubit pair")
    full = input_state.dm().tensor(pair)
    out = partial_bsm(full, 2, 0, visibility)
    rho = out.conditional
    if apply_correction:
        rho = qcore.apply_unitary(rho, qcore.PAULI[qcore.PauliAxis.Z], [0])
    return out.probability, rho


def build_ghz(pair: DensityMatrix, third: PureState, visibility: float = 1.0) -> tuple[float, DensityMatrix]:
    """Interfere photon 2 of ``pair`` with ``third`` on a PBS; keep coincidences.

    Register order is (photon 1, photon 2, photon 3). With |Phi->, |+> and
    full visibility this yields (|HHH> - |VVV>)/sqrt2 with probability 1/2.
    """
    if pair.nqubits != 2 or third.nqubits != 1:
        raise ValueError("build_ghz needs a 2-qubit pair and a 1-qubit third photon")
    if not 0 <= visibility <= 1:
        raise ValueError("visibility must be in [0, 1]")
    full = pair.tensor(third.dm())
    p, rho = pbs_coincidence(full, 1, 2, visibility)
    return p, DensityMatrix(rho)


@dataclass(frozen=True)
class EmissionProbabilities:
    p0: float
    p1: float
    p2plus: float


def multiphoton_emission_probs(source: SourceSpec, window: float) -> EmissionProbabilities:
    """Poisson probabilities of 0, 1 and >= 2 photons in ``window`` seconds."""
    if not window > 0:
        raise ValueError("window must be > 0")
    mu = source.rate * window
    p0 = math.exp(-mu)
    p1 = mu * p0
    # 1 - e^-mu (1 + mu), accurate for small mu
    p2 = -math.expm1(-mu) - p1
    return EmissionProbabilities(p0, p1, max(p2, 0.0))


def visibility_from_fidelity(fidelity: float) -> float:
    """Invert F = (1 + v)/2 for an equatorial input."""
    return 2 * fidelity - 1


def accidental_fraction_from_fidelity(fidelity: float) -> float:
    """Invert F = 1 - f/2: white-noise fraction for a state insensitive to dephasing."""
    return 2 * (1 - fidelity)
