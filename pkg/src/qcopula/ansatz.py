"""The n-register copula ansatz: GHZ entanglement, then per-register layers.

Parameter layout is register-major, then layer, then within a layer the
``(RZ, RX)`` pair of every qubit followed by the register's entanglers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from . import sim
from .errors import ParamLengthMismatch, TooManyQubits
from .sim import DiscreteDistribution, GateOp

TOPOLOGIES = ("chain", "all")


@dataclass(frozen=True)
class AnsatzConfig:
    num_vars: int
    qubits_per_var: int
    layers: int
    topology: str = "chain"

    def __post_init__(self):
        if self.num_vars < 2:
            raise ValueError(f"need at least 2 variables, got {self.num_vars}")
        if self.qubits_per_var < 1 or self.layers < 1:
            raise ValueError("qubits_per_var and layers must be positive")
        if self.num_qubits > sim.MAX_QUBITS:
            raise TooManyQubits(f"{self.num_qubits} qubits exceeds {sim.MAX_QUBITS}")
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"topology must be one of {TOPOLOGIES}")

    @property
    def num_qubits(self) -> int:
        return self.num_vars * self.qubits_per_var

    @property
    def num_outcomes(self) -> int:
        return 1 << self.num_qubits

    def entangler_pairs(self) -> list[tuple[int, int]]:
        """Intra-register qubit pairs (local indices) coupled in every layer."""
        m = self.qubits_per_var
        if self.topology == "chain":
            return [(k, k + 1) for k in range(m - 1)]
        return list(combinations(range(m), 2))


def param_count(config: AnsatzConfig) -> int:
    per_layer = 2 * config.qubits_per_var + len(config.entangler_pairs())
    return config.num_vars * config.layers * per_layer


def init_params(config: AnsatzConfig, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-np.pi, np.pi, size=param_count(config))


def build_circuit(config: AnsatzConfig, params, compile_entanglers: bool = False) -> list[GateOp]:
    """GHZ preparation followed by the parameterized register unitaries.

    With ``compile_entanglers`` each RZZ is expanded into CNOT-RZ-CNOT.
    """
    params = np.asarray(params, dtype=float)
    expected = param_count(config)
    if params.shape != (expected,):
        raise ParamLengthMismatch(f"expected {expected} parameters, got {params.shape}")
    n, m = config.num_vars, config.qubits_per_var
    pairs = config.entangler_pairs()
    gates = sim.prepare_ghz_registers(n, m)
    it = iter(params.tolist())
    for r in range(n):
        base = r * m
        for _ in range(config.layers):
            for k in range(m):
                gates.append(sim.RZ(base + k, next(it)))
                gates.append(sim.RX(base + k, next(it)))
            for a, b in pairs:
                angle = next(it)
                if compile_entanglers:
                    gates.extend(sim.compile_rzz(angle, base + a, base + b))
                else:
                    gates.append(sim.RZZ(base + a, base + b, angle))
    return gates


def generate_distribution(config: AnsatzConfig, params, shots: int | None = None,
                          seed: int | None = None) -> DiscreteDistribution:
    """Output distribution of the ansatz.

    Exact Born probabilities by default; with ``shots`` the distribution is
    the normalized histogram of a seeded multinomial draw.
    """
    state = sim.run_circuit(build_circuit(config, params), config.num_qubits)
    dist = sim.exact_probabilities(state)
    if shots is None:
        return dist
    counts = sim.sample_shots(dist, shots, 0 if seed is None else seed)
    return DiscreteDistribution(counts / shots)


def register_marginal(probs: np.ndarray, config: AnsatzConfig, register: int) -> np.ndarray:
    """Sum a joint distribution over every register except ``register``."""
    shape = (1 << config.qubits_per_var,) * config.num_vars
    axes = tuple(i for i in range(config.num_vars) if i != register)
    return np.asarray(probs).reshape(shape).sum(axis=axes)


@dataclass
class QCBMModel:
    """A trained ansatz: structure, angles and the seed that produced them."""

    config: AnsatzConfig
    params: np.ndarray
    seed: int | None = None

    def to_json(self) -> str:
        c = self.config
        return json.dumps(
            {
                "n": c.num_vars,
                "m": c.qubits_per_var,
                "L": c.layers,
                "topology": c.topology,
                "params": [float(p) for p in self.params],
                "seed": self.seed,
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "QCBMModel":
        doc = json.loads(text)
        config = AnsatzConfig(doc["n"], doc["m"], doc["L"], doc.get("topology", "chain"))
        params = np.array(doc["params"], dtype=float)
        if params.size != param_count(config):
            raise ParamLengthMismatch(f"checkpoint has {params.size} params for {config}")
        return cls(config, params, doc.get("seed"))

    @classmethod
    def load(cls, path) -> "QCBMModel":
        return cls.from_json(Path(path).read_text())
