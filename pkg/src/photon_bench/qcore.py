"""Dense state and operator algebra for one to three polarization qubits.

Basis labels follow the usual lab convention: ``H`` is bit 0 and ``V`` is
bit 1, and qubit 0 is the most significant bit of the basis index, so
``|HVH>`` lives at index ``0b010 == 2``.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .counts import CountTable

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
EIGEN_FLOOR = -1e-9
UNITARY_TOL = 1e-10
IMPOSSIBLE_PROB = 1e-12
MAX_QUBITS = 3


class ImpossibleOutcome(ValueError):
    """Raised when a post-selection has (numerically) zero probability."""

    def __init__(self, probability: float):
        super().__init__(f"outcome probability {probability:.3e} is below {IMPOSSIBLE_PROB:g}")
        self.probability = probability


class PauliAxis(str, enum.Enum):
    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"


PAULI = {
    PauliAxis.I: np.eye(2, dtype=complex),
    PauliAxis.X: np.array([[0, 1], [1, 0]], dtype=complex),
    PauliAxis.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    PauliAxis.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

_S = 1 / np.sqrt(2)

#: Single-photon kets by name. ``L`` is (H - iV)/sqrt2, ``R`` is (H + iV)/sqrt2.
KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "+": np.array([_S, _S], dtype=complex),
    "-": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, 1j * _S], dtype=complex),
    "L": np.array([_S, -1j * _S], dtype=complex),
}

#: Measurement bases: (outcome label, Pauli eigenvalue) pairs, +1 eigenvector first.
#: The Y-basis sign refers to sigma_y, whose +1 eigenvector is R.
BASES = {
    "Z": (("H", +1), ("V", -1)),
    "X": (("+", +1), ("-", -1)),
    "Y": (("R", +1), ("L", -1)),
}


def _as_matrix(m) -> np.ndarray:
    return np.asarray(m, dtype=complex)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


def _nqubits_for(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    if n > MAX_QUBITS:
        raise ValueError(f"{n} qubits requested; at most {MAX_QUBITS} are supported")
    return n


def is_unitary(u, tol: float = UNITARY_TOL) -> bool:
    u = _as_matrix(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and \
        np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol


def is_hermitian(m, tol: float = HERMITIAN_TOL) -> bool:
    m = _as_matrix(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.max(np.abs(m - m.conj().T)) <= tol


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized state vector of ``nqubits`` polarization qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        _nqubits_for(amp.size)
        norm = np.vdot(amp, amp).real
        if abs(norm - 1) > 1e-10:
            raise ValueError(f"state norm^2 is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen(amp))

    @classmethod
    def normalized(cls, amplitudes) -> "PureState":
        amp = np.asarray(amplitudes, dtype=complex).reshape(-1)
        return cls(amp / np.linalg.norm(amp))

    @classmethod
    def from_label(cls, label: str) -> "PureState":
        """Product state from a ket string such as ``"H+L"``."""
        try:
            kets = [KETS[c] for c in label]
        except KeyError as exc:
            raise ValueError(f"unknown polarization label {exc.args[0]!r}") from None
        return cls(functools.reduce(np.kron, kets))

    @classmethod
    def from_bloch_angles(cls, theta: float, phi: float) -> "PureState":
        """cos(theta/2)|H> + e^{i phi} sin(theta/2)|V>."""
        return cls(np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)]))

    @property
    def nqubits(self) -> int:
        return _nqubits_for(self.amplitudes.size)

    def dm(self) -> "DensityMatrix":
        a = self.amplitudes
        return DensityMatrix(np.outer(a, a.conj()))

    def tensor(self, other: "PureState") -> "PureState":
        return PureState(np.kron(self.amplitudes, other.amplitudes))


class DensityMatrix:
    """Immutable, validated density matrix.

    Construction checks Hermiticity, unit trace and positivity. Eigenvalues in
    ``[EIGEN_FLOOR, 0)`` are tolerated; :meth:`repaired` clips them.
    """

    __slots__ = ("mat",)

    def __init__(self, mat, *, check: bool = True):
        m = _as_matrix(mat)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {m.shape}")
        _nqubits_for(m.shape[0])
        if check:
            _check_density(m)
        object.__setattr__(self, "mat", _frozen(m))

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def __repr__(self) -> str:
        return f"DensityMatrix(nqubits={self.nqubits})"

    @property
    def nqubits(self) -> int:
        return _nqubits_for(self.mat.shape[0])

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    @classmethod
    def maximally_mixed(cls, nqubits: int) -> "DensityMatrix":
        d = 1 << nqubits
        return cls(np.eye(d) / d)

    @classmethod
    def from_label(cls, label: str) -> "DensityMatrix":
        return PureState.from_label(label).dm()

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.mat)

    def purity(self) -> float:
        return float(np.real(np.trace(self.mat @ self.mat)))

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        return DensityMatrix(np.kron(self.mat, other.mat))

    def ptrace(self, keep: Sequence[int]) -> "DensityMatrix":
        """Reduced state on the qubits in ``keep`` (in the order given)."""
        n = self.nqubits
        keep = list(keep)
        _check_targets(keep, n)
        drop = [q for q in range(n) if q not in keep]
        t = self.mat.reshape([2] * (2 * n))
        # bring kept ket axes, then kept bra axes, with traced axes paired at the end
        perm = keep + [n + q for q in keep] + drop + [n + q for q in drop]
        t = np.transpose(t, perm)
        k, d = 1 << len(keep), 1 << len(drop)
        t = t.reshape(k, k, d, d)
        return DensityMatrix(np.einsum("abii->ab", t))

    def repaired(self) -> "DensityMatrix":
        """Hermitize, clip negative eigenvalues to zero and renormalize."""
        return DensityMatrix(physical_projection(self.mat))


def _check_density(m: np.ndarray) -> None:
    dev = np.max(np.abs(m - m.conj().T))
    if dev > HERMITIAN_TOL:
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    tr = np.trace(m)
    if abs(tr - 1) > TRACE_TOL:
        raise ValueError(f"trace is {tr!r}, expected 1")
    lo = np.linalg.eigvalsh((m + m.conj().T) / 2).min()
    if lo < EIGEN_FLOOR:
        raise ValueError(f"matrix has negative eigenvalue {lo:.3e}")


def physical_projection(m) -> np.ndarray:
    """Closest physical state by eigenvalue clipping then trace renormalization."""
    m = _as_matrix(m)
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0, None)
    if w.sum() <= 0:
        raise ValueError("matrix has no positive spectrum to renormalize")
    w = w / w.sum()
    out = (v * w) @ v.conj().T
    return (out + out.conj().T) / 2


def _check_targets(targets: Sequence[int], n: int) -> None:
    if len(set(targets)) != len(targets):
        raise ValueError(f"target qubits {list(targets)} are not distinct")
    for q in targets:
        if not 0 <= q < n:
            raise IndexError(f"qubit index {q} out of range for {n} qubits")


# -- state catalog ---------------------------------------------------------

BELL_KINDS = ("PhiPlus", "PhiMinus", "PsiPlus", "PsiMinus")


def bell_state(kind: str) -> PureState:
    if kind == "PhiPlus":
        amp = [_S, 0, 0, _S]
    elif kind == "PhiMinus":
        amp = [_S, 0, 0, -_S]
    elif kind == "PsiPlus":
        amp = [0, _S, _S, 0]
    elif kind == "PsiMinus":
        amp = [0, _S, -_S, 0]
    else:
        raise ValueError(f"unknown Bell state {kind!r}; expected one of {BELL_KINDS}")
    return PureState(np.array(amp, dtype=complex))


def ghz_state(sign: int = -1) -> PureState:
    """(|HHH> + sign |VVV>)/sqrt2."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    amp = np.zeros(8, dtype=complex)
    amp[0] = _S
    amp[7] = sign * _S
    return PureState(amp)


def haar_random_state(rng: np.random.Generator, nqubits: int = 1) -> PureState:
    d = 1 << nqubits
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return PureState.normalized(z)


# -- operators -------------------------------------------------------------

def pauli_string(axes: Iterable[PauliAxis | str]) -> np.ndarray:
    """Tensor product of Pauli matrices, qubit 0 first."""
    axes = [PauliAxis(a) for a in axes]
    if not axes:
        raise ValueError("pauli_string needs at least one axis")
    if len(axes) > MAX_QUBITS:
        raise ValueError(f"at most {MAX_QUBITS} axes supported")
    return functools.reduce(np.kron, (PAULI[a] for a in axes))


def embed_operator(u, targets: Sequence[int], nqubits: int) -> np.ndarray:
    """Lift ``u`` acting on ``targets`` (in that order) to the full register."""
    u = _as_matrix(u)
    targets = list(targets)
    k = len(targets)
    if u.shape != (1 << k, 1 << k):
        raise ValueError(f"operator shape {u.shape} does not match {k} target qubit(s)")
    _check_targets(targets, nqubits)
    rest = [q for q in range(nqubits) if q not in targets]
    full = np.kron(u, np.eye(1 << len(rest)))
    # full acts on qubit order targets+rest; permute back to 0..n-1
    order = targets + rest
    inv = np.argsort(order)
    t = full.reshape([2] * (2 * nqubits))
    t = np.transpose(t, list(inv) + [nqubits + i for i in inv])
    return t.reshape(1 << nqubits, 1 << nqubits)


def apply_unitary(state: DensityMatrix, u, targets: Sequence[int]) -> DensityMatrix:
    if not is_unitary(u):
        raise ValueError("operator is not unitary within tolerance")
    full = embed_operator(u, targets, state.nqubits)
    return DensityMatrix(full @ state.mat @ full.conj().T)


def project(state: DensityMatrix, m) -> tuple[float, DensityMatrix]:
    """Apply measurement operator ``m`` and return (probability, conditional state).

    ``m`` must be a full-register operator with ``m^dagger m <= 1``.
    """
    m = _as_matrix(m)
    if m.shape != state.mat.shape:
        raise ValueError(f"operator shape {m.shape} does not match state {state.mat.shape}")
    top = np.linalg.eigvalsh(m.conj().T @ m).max()
    if top > 1 + 1e-9:
        raise ValueError(f"not a valid measurement operator (largest eigenvalue of m^dag m {top:.6f})")
    out = m @ state.mat @ m.conj().T
    p = float(np.real(np.trace(out)))
    if p < IMPOSSIBLE_PROB:
        raise ImpossibleOutcome(p)
    out = out / p
    return p, DensityMatrix((out + out.conj().T) / 2)


def expectation(state: DensityMatrix, obs) -> float:
    obs = _as_matrix(obs)
    if not is_hermitian(obs):
        raise ValueError("observable is not Hermitian within tolerance")
    val = np.trace(state.mat @ obs)
    if abs(val.imag) > 1e-9:
        raise ArithmeticError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


# -- measurement -----------------------------------------------------------

def basis_unitary(basis: str) -> np.ndarray:
    """Matrix whose columns are the basis eigenvectors, +1 outcome first."""
    try:
        (a, _), (b, _) = BASES[basis]
    except KeyError:
        raise ValueError(f"unknown basis {basis!r}; expected one of {sorted(BASES)}") from None
    return np.column_stack([KETS[a], KETS[b]])


def outcome_labels(setting: str) -> list[str]:
    """Outcome strings of a setting in canonical order (all +1 outcomes first)."""
    labels = [""]
    for b in setting:
        pair = [lab for lab, _ in BASES[b]]
        labels = [s + c for s in labels for c in pair]
    return labels


def outcome_parity(setting: str, outcome: str) -> int:
    """Product of the Pauli eigenvalues encoded in ``outcome``."""
    sign = 1
    for b, c in zip(setting, outcome, strict=True):
        sign *= dict(BASES[b])[c]
    return sign


def born_probabilities(state: DensityMatrix, setting: Sequence[str]) -> np.ndarray:
    setting = "".join(setting)
    if len(setting) != state.nqubits:
        raise ValueError(f"setting {setting!r} does not match {state.nqubits} qubit(s)")
    u = functools.reduce(np.kron, (basis_unitary(b) for b in setting))
    p = np.real(np.diag(u.conj().T @ state.mat @ u))
    p = np.clip(p, 0, None)
    return p / p.sum()


def sample_outcomes(state: DensityMatrix, settings: Sequence[str], n: int,
                    seed: int | np.random.Generator) -> CountTable:
    """Multinomial sample of ``n`` outcomes in the given per-qubit bases."""
    if n < 1:
        raise ValueError("n must be >= 1")
    setting = "".join(settings)
    probs = born_probabilities(state, setting)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    draws = rng.multinomial(n, probs)
    return CountTable({(setting, lab): int(c) for lab, c in zip(outcome_labels(setting), draws)})
