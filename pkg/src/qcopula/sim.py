"""Dense statevector simulator for the H / RX / RZ / RZZ / CNOT gate set.

Qubit 0 is the most significant bit of a basis-state index, so the state
``|q0 q1 ... q_{k-1}>`` sits at index ``sum(q_i << (k - 1 - i))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import IndexOutOfRange, TooManyQubits

MAX_QUBITS = 24
GATE_KINDS = ("H", "RX", "RZ", "RZZ", "CNOT")
_TWO_QUBIT = ("RZZ", "CNOT")
_PARAMETRIC = ("RX", "RZ", "RZZ")
_INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class GateOp:
    kind: str
    targets: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        width = 2 if self.kind in _TWO_QUBIT else 1
        if len(targets) != width:
            raise ValueError(f"{self.kind} acts on {width} qubit(s), got {targets}")
        if len(set(targets)) != len(targets):
            raise IndexOutOfRange(f"{self.kind} targets must be distinct, got {targets}")
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "angle", float(self.angle))

    def inverse(self) -> "GateOp":
        if self.kind in _PARAMETRIC:
            return GateOp(self.kind, self.targets, -self.angle)
        return self


def H(q: int) -> GateOp:
    return GateOp("H", (q,))


def RX(q: int, angle: float) -> GateOp:
    return GateOp("RX", (q,), angle)


def RZ(q: int, angle: float) -> GateOp:
    return GateOp("RZ", (q,), angle)


def RZZ(q1: int, q2: int, angle: float) -> GateOp:
    return GateOp("RZZ", (q1, q2), angle)


def CNOT(control: int, target: int) -> GateOp:
    return GateOp("CNOT", (control, target))


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if not 0 < self.num_qubits <= MAX_QUBITS:
            raise TooManyQubits(f"{self.num_qubits} qubits outside 1..{MAX_QUBITS}")
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.num_qubits,):
            raise ValueError(f"expected {1 << self.num_qubits} amplitudes, got {amps.shape}")
        self.amplitudes = amps

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        if not 0 < num_qubits <= MAX_QUBITS:
            raise TooManyQubits(f"{num_qubits} qubits outside 1..{MAX_QUBITS}")
        amps = np.zeros(1 << num_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(num_qubits, amps)

    @classmethod
    def basis(cls, num_qubits: int, index: int) -> "StateVector":
        state = cls.zero(num_qubits)
        state.amplitudes[0] = 0.0
        state.amplitudes[index] = 1.0
        return state

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())


@dataclass(frozen=True)
class DiscreteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a non-empty vector")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def num_outcomes(self) -> int:
        return self.probs.size

    @classmethod
    def from_weights(cls, weights) -> "DiscreteDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(w / w.sum())

    @classmethod
    def uniform(cls, num_outcomes: int) -> "DiscreteDistribution":
        return cls(np.full(num_outcomes, 1.0 / num_outcomes))


def _check_targets(targets: Sequence[int], num_qubits: int) -> None:
    for t in targets:
        if not 0 <= t < num_qubits:
            raise IndexOutOfRange(f"qubit {t} out of range for {num_qubits} qubits")


def _apply_inplace(psi: np.ndarray, num_qubits: int, gate: GateOp) -> np.ndarray:
    """Apply one gate to a flat amplitude array; may return a new array."""
    kind = gate.kind
    if kind in _TWO_QUBIT:
        a, b = gate.targets
        lo, hi = min(a, b), max(a, b)
        v = psi.reshape(1 << lo, 2, 1 << (hi - lo - 1), 2, 1 << (num_qubits - hi - 1))
        if kind == "RZZ":
            # exp(-i theta Z Z): phase e^{-i theta} on even parity, e^{+i theta} on odd
            same, diff = np.exp(-1j * gate.angle), np.exp(1j * gate.angle)
            v[:, 0, :, 0, :] *= same
            v[:, 1, :, 1, :] *= same
            v[:, 0, :, 1, :] *= diff
            v[:, 1, :, 0, :] *= diff
        else:
            if a < b:
                tmp = v[:, 1, :, 0, :].copy()
                v[:, 1, :, 0, :] = v[:, 1, :, 1, :]
                v[:, 1, :, 1, :] = tmp
            else:
                tmp = v[:, 0, :, 1, :].copy()
                v[:, 0, :, 1, :] = v[:, 1, :, 1, :]
                v[:, 1, :, 1, :] = tmp
        return psi

    (q,) = gate.targets
    v = psi.reshape(1 << q, 2, 1 << (num_qubits - q - 1))
    if kind == "RZ":
        v[:, 0, :] *= np.exp(-0.5j * gate.angle)
        v[:, 1, :] *= np.exp(0.5j * gate.angle)
        return psi
    x0 = v[:, 0, :].copy()
    x1 = v[:, 1, :]
    if kind == "H":
        v[:, 0, :] = (x0 + x1) * _INV_SQRT2
        v[:, 1, :] = (x0 - x1) * _INV_SQRT2
    else:  # RX
        c, s = np.cos(0.5 * gate.angle), -1j * np.sin(0.5 * gate.angle)
        v[:, 0, :] = c * x0 + s * x1
        v[:, 1, :] = s * x0 + c * x1
    return psi


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    """Return a new state with ``gate`` applied; the input is left untouched."""
    _check_targets(gate.targets, state.num_qubits)
    psi = state.amplitudes.copy()
    return StateVector(state.num_qubits, _apply_inplace(psi, state.num_qubits, gate))


def run_circuit(gates: Iterable[GateOp], num_qubits: int, initial: StateVector | None = None) -> StateVector:
    """Apply a gate list starting from ``initial`` (default ``|0...0>``)."""
    state = StateVector.zero(num_qubits) if initial is None else initial.copy()
    psi = state.amplitudes
    for gate in gates:
        _check_targets(gate.targets, num_qubits)
        psi = _apply_inplace(psi, num_qubits, gate)
    return StateVector(num_qubits, psi)


def compile_rzz(angle: float, q1: int, q2: int) -> list[GateOp]:
    """RZZ as CNOT . RZ(2*angle) . CNOT, exact including global phase."""
    if q1 == q2:
        raise IndexOutOfRange("RZZ needs two distinct qubits")
    return [CNOT(q1, q2), RZ(q2, 2.0 * angle), CNOT(q1, q2)]


def prepare_ghz_registers(n: int, m: int) -> list[GateOp]:
    """Gates that put qubit j of every register into a shared GHZ state.

    Registers are contiguous blocks of ``m`` qubits; register ``r`` holds
    qubits ``r*m .. r*m + m - 1``.
    """
    if n < 2 or m < 1:
        raise ValueError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
    if n * m > MAX_QUBITS:
        raise TooManyQubits(f"{n}x{m} = {n * m} qubits exceeds {MAX_QUBITS}")
    gates = []
    for j in range(m):
        gates.append(H(j))
        gates.extend(CNOT(j, r * m + j) for r in range(1, n))
    return gates


def exact_probabilities(state: StateVector) -> DiscreteDistribution:
    p = state.amplitudes.real ** 2 + state.amplitudes.imag ** 2
    # renormalize away the last-ulp drift so the distribution invariant holds
    return DiscreteDistribution(p / p.sum())


def sample_shots(dist: DiscreteDistribution, shots: int, seed: int) -> np.ndarray:
    """Multinomial measurement counts, one entry per basis state."""
    if shots < 1:
        raise ValueError(f"shots must be positive, got {shots}")
    rng = np.random.default_rng(seed)
    return rng.multinomial(shots, dist.probs)


def fidelity(a: StateVector, b: StateVector) -> float:
    """``|<a|b>|``, insensitive to global phase."""
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)))
