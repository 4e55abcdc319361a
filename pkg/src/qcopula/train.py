"""QCBM training: clipped KL cost, SPSA, and annealing toward the target.

Both :func:`train_qcbm` and :func:`anneal_train` run on one loop over a list
of ``(eta, iterations)`` cycles. All loop state, including the generator
state, lives in :class:`TrainState`, so a run can be checkpointed and
resumed with results identical to an unbroken run.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .ansatz import AnsatzConfig, generate_distribution, init_params, param_count
from .errors import EtaOutOfRange, NonFiniteObjective, NonPositiveEps, SizeMismatch
from .sim import DiscreteDistribution

KL_EPS = 1e-8
DEFAULT_SHOTS = 4096


def clipped_kl(p: DiscreteDistribution, q: DiscreteDistribution, eps: float = KL_EPS) -> float:
    """``sum_x P(x) log(P(x) / max(Q(x), eps))`` with ``0 log 0 = 0``.

    ``p`` is the model distribution and ``q`` the target.
    """
    pp = p.probs if isinstance(p, DiscreteDistribution) else np.asarray(p, dtype=float)
    qq = q.probs if isinstance(q, DiscreteDistribution) else np.asarray(q, dtype=float)
    if pp.shape != qq.shape:
        raise SizeMismatch(f"distribution sizes differ: {pp.shape} vs {qq.shape}")
    if not eps > 0:
        raise NonPositiveEps(f"eps must be positive, got {eps}")
    mask = pp > 0
    return float(np.sum(pp[mask] * np.log(pp[mask] / np.maximum(qq[mask], eps))))


def mix_with_uniform(target: DiscreteDistribution, eta: float) -> DiscreteDistribution:
    """The fuzzy target ``eta * uniform + (1 - eta) * target``."""
    if not 0.0 <= eta <= 1.0:
        raise EtaOutOfRange(f"eta must lie in [0, 1], got {eta}")
    if eta == 0.0:
        return target
    k = target.num_outcomes
    mixed = eta / k + (1.0 - eta) * target.probs
    return DiscreteDistribution(mixed / mixed.sum())


@dataclass(frozen=True)
class SpsaConfig:
    a: float = 0.3
    c: float = 0.3
    decay_exponent_a: float = 0.602
    decay_exponent_c: float = 0.101
    stability_A: float | None = 0.0
    iterations: int = 500

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ValueError("SPSA gains a and c must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")

    def stability(self, iterations: int | None = None) -> float:
        if self.stability_A is not None:
            return self.stability_A
        return 0.1 * (self.iterations if iterations is None else iterations)

    def gains(self, k: int, iterations: int | None = None) -> tuple[float, float]:
        a_k = self.a / (k + 1 + self.stability(iterations)) ** self.decay_exponent_a
        c_k = self.c / (k + 1) ** self.decay_exponent_c
        return a_k, c_k


@dataclass(frozen=True)
class AnnealSchedule:
    eta0: float = 0.8
    delta_eta: float = 0.02
    iters_per_cycle: int = 200

    def __post_init__(self):
        if not 0.0 <= self.eta0 <= 1.0:
            raise EtaOutOfRange(f"eta0 must lie in [0, 1], got {self.eta0}")
        if not self.delta_eta > 0:
            raise ValueError("delta_eta must be positive")
        if self.iters_per_cycle < 0:
            raise ValueError("iters_per_cycle must be non-negative")

    def etas(self) -> list[float]:
        """Noise level of every cycle: eta0, eta0 - delta, ..., 0."""
        steps = math.ceil(self.eta0 / self.delta_eta - 1e-9)
        levels = [max(self.eta0 - i * self.delta_eta, 0.0) for i in range(steps)]
        levels = [round(e, 12) for e in levels]
        return levels + [0.0]


@dataclass(frozen=True)
class TraceRecord:
    iteration: int
    eta: float
    cost: float
    cycle: int = 0


@dataclass
class TrainingTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: TraceRecord) -> None:
        if self.records and record.iteration <= self.records[-1].iteration:
            raise ValueError("trace iterations must be strictly increasing")
        self.records.append(record)

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def etas(self) -> np.ndarray:
        return np.array([r.eta for r in self.records])

    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(self.costs)

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "eta", "cost", "cycle"])
            for r in self.records:
                w.writerow([r.iteration, repr(r.eta), repr(r.cost), r.cycle])

    @classmethod
    def from_csv(cls, path) -> "TrainingTrace":
        trace = cls()
        with Path(path).open(newline="") as fh:
            for row in csv.DictReader(fh):
                trace.append(TraceRecord(int(row["iteration"]), float(row["eta"]),
                                         float(row["cost"]), int(row.get("cycle") or 0)))
        return trace


def spsa_step(objective: Callable[[np.ndarray], float], params, k: int, cfg: SpsaConfig,
              rng: np.random.Generator, iterations: int | None = None):
    """One SPSA update from exactly two objective evaluations.

    Returns ``(new_params, probe)`` where ``probe`` holds both evaluations,
    the perturbed points and the gradient estimate.
    """
    theta = np.asarray(params, dtype=float)
    if not np.all(np.isfinite(theta)):
        raise NonFiniteObjective("parameters are not finite")
    a_k, c_k = cfg.gains(k, iterations)
    delta = rng.choice((-1.0, 1.0), size=theta.size)
    plus, minus = theta + c_k * delta, theta - c_k * delta
    f_plus, f_minus = float(objective(plus)), float(objective(minus))
    if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
        raise NonFiniteObjective(f"objective returned {f_plus}, {f_minus} at step {k}")
    grad = (f_plus - f_minus) / (2.0 * c_k * delta)
    probe = SpsaProbe(f_plus, f_minus, plus, minus, grad)
    return theta - a_k * grad, probe


@dataclass(frozen=True)
class SpsaProbe:
    f_plus: float
    f_minus: float
    plus: np.ndarray
    minus: np.ndarray
    grad: np.ndarray

    @property
    def cost(self) -> float:
        return min(self.f_plus, self.f_minus)

    @property
    def best_point(self) -> np.ndarray:
        return self.plus if self.f_plus <= self.f_minus else self.minus


def spsa_minimize(objective, x0, cfg: SpsaConfig, seed: int = 0):
    """Plain SPSA descent for ``cfg.iterations`` steps; returns the last iterate."""
    rng = np.random.default_rng(seed)
    x = np.asarray(x0, dtype=float)
    for k in range(cfg.iterations):
        x, _ = spsa_step(objective, x, k, cfg, rng)
    return x


@dataclass
class TrainState:
    """Everything needed to continue a training run bit-for-bit."""

    params: np.ndarray
    best_params: np.ndarray
    best_cost: float
    step: int
    rng_state: dict
    initial_params: np.ndarray

    def to_dict(self) -> dict:
        return {
            "params": self.params.tolist(),
            "best_params": self.best_params.tolist(),
            "best_cost": self.best_cost,
            "step": self.step,
            "rng_state": self.rng_state,
            "initial_params": self.initial_params.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainState":
        return cls(
            params=np.array(doc["params"], dtype=float),
            best_params=np.array(doc["best_params"], dtype=float),
            best_cost=float(doc["best_cost"]),
            step=int(doc["step"]),
            rng_state=doc["rng_state"],
            initial_params=np.array(doc["initial_params"], dtype=float),
        )


@dataclass
class TrainResult:
    params: np.ndarray
    trace: TrainingTrace
    state: TrainState
    final_cost: float

    def __iter__(self):
        # allows ``params, trace = train_qcbm(...)``
        return iter((self.params, self.trace))


def _make_objective(config: AnsatzConfig, target: DiscreteDistribution, shots, rng):
    if shots is None:
        return lambda theta: clipped_kl(generate_distribution(config, theta), target)

    def shot_objective(theta):
        seed = int(rng.integers(2**63))
        return clipped_kl(generate_distribution(config, theta, shots=shots, seed=seed), target)

    return shot_objective


def _run_cycles(config: AnsatzConfig, target: DiscreteDistribution, cycles, spsa: SpsaConfig,
                seed: int, shots=None, restart_gains: bool = True, warm_start: str = "best",
                state: TrainState | None = None,
                trace: TrainingTrace | None = None, stop_after: int | None = None) -> TrainResult:
    if target.num_outcomes != config.num_outcomes:
        raise SizeMismatch(f"target has {target.num_outcomes} outcomes, ansatz {config.num_outcomes}")
    rng = np.random.default_rng(seed)
    trace = TrainingTrace() if trace is None else trace
    if state is None:
        theta0 = init_params(config, rng)
        state = TrainState(theta0.copy(), theta0.copy(), math.inf, 0, rng.bit_generator.state, theta0)
    else:
        rng.bit_generator.state = state.rng_state
        if state.params.size != param_count(config):
            raise SizeMismatch("checkpoint parameter count does not match the ansatz")

    total = sum(iters for _, iters in cycles)
    end = total if stop_after is None else min(total, stop_after)
    starts = np.cumsum([0] + [iters for _, iters in cycles])
    objective_cache = {}

    while state.step < end:
        c = int(np.searchsorted(starts, state.step, side="right") - 1)
        eta, iters = cycles[c]
        k = state.step - starts[c]
        if k == 0 and c > 0:
            # warm start from the best point of the previous cycle
            if warm_start == "best":
                state.params = state.best_params.copy()
            state.best_cost = math.inf
        if eta not in objective_cache:
            objective_cache[eta] = _make_objective(config, mix_with_uniform(target, eta), shots, rng)
        if restart_gains:
            state.params, probe = spsa_step(objective_cache[eta], state.params, k, spsa, rng, iters)
        else:
            state.params, probe = spsa_step(objective_cache[eta], state.params, state.step, spsa, rng, total)
        if probe.cost < state.best_cost:
            state.best_cost = probe.cost
            state.best_params = probe.best_point.copy()
        state.step += 1
        trace.append(TraceRecord(state.step - 1, eta, probe.cost, c))
        state.rng_state = rng.bit_generator.state

    if total == 0 and not trace.records:
        cost = clipped_kl(generate_distribution(config, state.params), target)
        state.best_cost = cost
        trace.append(TraceRecord(0, cycles[0][0] if cycles else 0.0, cost, 0))
    final_eta = cycles[-1][0] if cycles else 0.0
    final = clipped_kl(generate_distribution(config, state.best_params),
                       mix_with_uniform(target, final_eta))
    return TrainResult(state.best_params.copy(), trace, state, final)


def train_qcbm(config: AnsatzConfig, target: DiscreteDistribution, spsa: SpsaConfig | None = None,
               shots: int | None = None, seed: int = 0, **resume) -> TrainResult:
    """Standard QCBM training from a seeded uniform initialization in [-pi, pi).

    Returns the lowest-cost point probed during the run. ``shots=None`` uses
    exact probabilities; otherwise every evaluation draws that many shots.
    """
    spsa = spsa or SpsaConfig()
    return _run_cycles(config, target, [(0.0, spsa.iterations)], spsa, seed, shots, **resume)


def anneal_train(config: AnsatzConfig, target: DiscreteDistribution, schedule: AnnealSchedule,
                 spsa: SpsaConfig | None = None, shots: int | None = None, seed: int = 0,
                 restart_gains: bool = True, warm_start: str = "best", **resume) -> TrainResult:
    """Train against ``mix_with_uniform(target, eta)`` while ramping eta to 0.

    Each cycle restarts the SPSA gain sequence and warm-starts from the best
    point of the previous cycle; the result is the best point of the final
    (eta = 0) cycle.
    """
    spsa = spsa or SpsaConfig(iterations=schedule.iters_per_cycle)
    cycles = [(eta, schedule.iters_per_cycle) for eta in schedule.etas()]
    return _run_cycles(config, target, cycles, spsa, seed, shots, restart_gains, warm_start,
                       **resume)


def save_checkpoint(path, config: AnsatzConfig, result: TrainResult, seed: int, extra=None) -> None:
    """Ansatz JSON (``n, m, L, topology, params, seed``) plus the resume state."""
    doc = {
        "n": config.num_vars,
        "m": config.qubits_per_var,
        "L": config.layers,
        "topology": config.topology,
        "params": [float(p) for p in result.params],
        "seed": seed,
        "final_cost": result.final_cost,
        "state": result.state.to_dict(),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2))
