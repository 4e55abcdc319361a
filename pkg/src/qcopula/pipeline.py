"""End-to-end workflow steps behind the CLI: ingest, fit, train, sample, evaluate.

Every step reads and writes artifacts in one run directory and records them
in ``manifest.json`` with a SHA-256 checksum and a provenance tag
(``full``, ``train``, ``test`` or ``model``).
"""

from __future__ import annotations

import copy
import csv
import datetime as dt
import hashlib
import json
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .ansatz import AnsatzConfig, generate_distribution
from .codec import CodecConfig, decode_indices, encode_dataset
from .data import (
    PriceSeries,
    ReturnMatrix,
    align_and_log_returns,
    load_price_csv,
    read_return_csv,
    split_train_test,
    standardize,
    summary_stats,
    unstandardize,
    write_return_csv,
)
from .datasets import ASSETS as BUNDLED_ASSETS
from .datasets import bundled_paths
from .errors import ConfigError, FitDiverged, MissingModel, TooFewObservations
from .marginals import (
    PseudoSampleMatrix,
    fit_student_t,
    inverse_pit,
    load_marginals,
    marginals_to_json,
    pit,
)
from .risk import backtest, copula_losses, correlators, portfolio_losses, write_risk_csv
from .tcopula import TCopulaModel, fit_t_copula, sample_t_copula
from .train import (
    AnnealSchedule,
    SpsaConfig,
    TrainingTrace,
    TrainState,
    anneal_train,
    save_checkpoint,
    train_qcbm,
)

log = logging.getLogger(__name__)

CONFIG_VERSION = 1
MODEL_KINDS = ("classical_t", "qcbm", "empirical")

DEFAULTS = {
    "version": CONFIG_VERSION,
    "data": {"paths": None, "start": None, "end": None},
    "split": {"ratio": 0.8, "seed": 0},
    "model": {"kind": "classical_t"},
    "ansatz": {"n": None, "m": 2, "L": 2, "topology": "chain"},
    "training": {
        "seed": 0,
        "shots": None,
        "spsa": {"a": 0.3, "c": 0.3, "iterations": 500},
        "annealing": {"enabled": False, "eta0": 0.8, "delta_eta": 0.02, "iters_per_cycle": 200},
    },
    "evaluation": {"alpha": 0.95, "q": 0.95, "samples": None, "bootstrap": 1000, "seed": 0},
    "output": "run",
    "grid": None,
}

# generated trial counts for model VaR/ES
SIM_SAMPLES = 100_000
SHOT_SAMPLES = 5_000


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def set_key(doc: dict, dotted: str, value) -> None:
    """Apply a ``section.key=value`` override in place."""
    parts = dotted.split(".")
    node = doc
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted!r}: {p!r} is not a section")
    node[parts[-1]] = value


@dataclass
class RunConfig:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, doc: dict, base_dir=None) -> "RunConfig":
        if doc.get("version", CONFIG_VERSION) != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {doc.get('version')!r}")
        cfg = cls(_merge(DEFAULTS, doc), Path(base_dir) if base_dir else Path.cwd())
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides=()) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        for key, value in overrides:
            set_key(doc, key, value)
        return cls.from_dict(doc, path.parent)

    def validate(self) -> None:
        r = self.raw
        if r["model"]["kind"] not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
        if not 0 < r["split"]["ratio"] < 1:
            raise ConfigError("split.ratio must lie in (0, 1)")
        n = r["ansatz"]["n"]
        if n is not None and n != len(self.assets):
            raise ConfigError(f"ansatz.n={n} but {len(self.assets)} assets configured")
        if len(self.assets) * int(r["ansatz"]["m"]) > 24:
            raise ConfigError("n * m exceeds the 24-qubit limit")

    @property
    def assets(self) -> list[str]:
        paths = self.raw["data"]["paths"]
        return list(paths) if paths else list(BUNDLED_ASSETS)

    def asset_paths(self) -> dict[str, Path]:
        paths = self.raw["data"]["paths"]
        if not paths:
            return bundled_paths()
        return {a: (self.base_dir / p) for a, p in paths.items()}

    @property
    def output(self) -> Path:
        return self.base_dir / self.raw["output"]

    @property
    def kind(self) -> str:
        return self.raw["model"]["kind"]

    def ansatz(self) -> AnsatzConfig:
        a = self.raw["ansatz"]
        return AnsatzConfig(len(self.assets), int(a["m"]), int(a["L"]), a.get("topology", "chain"))

    def spsa(self) -> SpsaConfig:
        return SpsaConfig(**self.raw["training"]["spsa"])

    def schedule(self) -> AnnealSchedule | None:
        ann = dict(self.raw["training"]["annealing"])
        if not ann.pop("enabled", False):
            return None
        return AnnealSchedule(**ann)

    def sample_count(self) -> int:
        ev = self.raw["evaluation"]
        if ev["samples"] is not None:
            return int(ev["samples"])
        shots = self.raw["training"]["shots"]
        return SHOT_SAMPLES if (self.kind == "qcbm" and shots) else SIM_SAMPLES


# artifact plumbing ----------------------------------------------------------

def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def atomic_write(path: Path, writer) -> Path:
    """Call ``writer(tmp_path)`` and rename the result onto ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_text(path: Path, text: str) -> Path:
    return atomic_write(path, lambda p: p.write_text(text))


class Manifest:
    NAME = "manifest.json"

    def __init__(self, root: Path):
        self.root = Path(root)
        path = self.root / self.NAME
        self.doc = json.loads(path.read_text()) if path.exists() else {
            "toolkit_version": __version__,
            "artifacts": {},
            "steps": {},
        }

    def record(self, step: str, config: RunConfig, artifacts: dict[str, str], seconds: float,
               seeds: dict) -> None:
        for name, tag in artifacts.items():
            path = self.root / name
            self.doc["artifacts"][name] = {"sha256": sha256(path), "provenance": tag, "step": step}
        self.doc["steps"][step] = {"artifacts": sorted(artifacts), "seconds": round(seconds, 3),
                                   "seeds": seeds}
        self.doc["config"] = config.raw
        self.doc["toolkit_version"] = __version__
        write_text(self.root / self.NAME, json.dumps(self.doc, indent=2, sort_keys=True))

    def provenance(self, name: str) -> str | None:
        entry = self.doc["artifacts"].get(name)
        return entry["provenance"] if entry else None


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingModel(f"missing {what}: {path} (run the earlier step first)")
    return path


# steps ----------------------------------------------------------------------

STATS_HEADER = ["m", "Assets", "mu(%)", "sigma(%)", "s", "kappa", "Min(%)", "Max(%)",
                "P5(%)", "P25(%)", "P50(%)", "P75(%)", "P95(%)"]


def _restrict(series: PriceSeries, start, end) -> PriceSeries:
    if start is None and end is None:
        return series
    lo = dt.date.fromisoformat(start) if start else dt.date.min
    hi = dt.date.fromisoformat(end) if end else dt.date.max
    keep = [i for i, d in enumerate(series.dates) if lo <= d <= hi]
    return PriceSeries(series.asset_id, tuple(series.dates[i] for i in keep), series.closes[keep])


def stats_rows(raw: ReturnMatrix) -> list[list]:
    rows = []
    for j, asset in enumerate(raw.asset_ids):
        s = summary_stats(raw.rows[:, j])
        pct = [s.percentiles[k] * 100 for k in (5, 25, 50, 75, 95)]
        rows.append([s.count, asset, s.mean * 100, s.std * 100, s.skewness, s.kurtosis,
                     s.min * 100, s.max * 100, *pct])
    return rows


def cmd_ingest(cfg: RunConfig) -> dict[str, str]:
    out = cfg.output
    paths = cfg.asset_paths()
    d = cfg.raw["data"]
    series = []
    for asset in cfg.assets:
        path = paths[asset]
        if not path.exists():
            raise ConfigError(f"price file for {asset} not found: {path}")
        series.append(_restrict(load_price_csv(path, asset), d["start"], d["end"]))
    raw = align_and_log_returns(series)
    z, params = standardize(raw)
    split = split_train_test(z, cfg.raw["split"]["ratio"], cfg.raw["split"]["seed"])

    atomic_write(out / "returns_raw.csv", lambda p: write_return_csv(raw, p))
    atomic_write(out / "returns_std.csv", lambda p: write_return_csv(z, p))
    atomic_write(out / "train.csv", lambda p: write_return_csv(split.train, p))
    atomic_write(out / "test.csv", lambda p: write_return_csv(split.test, p))
    write_text(out / "standardization.json", json.dumps(
        [{"asset": a, "mean": m, "std": s} for a, (m, s) in zip(raw.asset_ids, params)], indent=2))
    write_text(out / "split.json", json.dumps({
        "ratio": split.ratio, "seed": split.seed,
        "train_index": split.train_index.tolist(), "test_index": split.test_index.tolist(),
    }))

    def write_stats(p):
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(STATS_HEADER)
            for row in stats_rows(raw):
                w.writerow([row[0], row[1], *(f"{v:.6g}" for v in row[2:])])

    atomic_write(out / "stats.csv", write_stats)
    return {"returns_raw.csv": "full", "returns_std.csv": "full", "train.csv": "train",
            "test.csv": "test", "standardization.json": "full", "split.json": "full",
            "stats.csv": "full"}


def _load_standardization(out: Path) -> list[tuple[float, float]]:
    doc = json.loads(_require(out / "standardization.json", "standardization").read_text())
    return [(e["mean"], e["std"]) for e in doc]


def _write_pseudo(path: Path, pseudo: PseudoSampleMatrix) -> None:
    atomic_write(path, lambda p: write_return_csv(ReturnMatrix(pseudo.asset_ids, pseudo.rows), p))


def _read_pseudo(path: Path) -> PseudoSampleMatrix:
    m = read_return_csv(path)
    return PseudoSampleMatrix(m.asset_ids, m.rows)


def cmd_fit_classical(cfg: RunConfig) -> dict[str, str]:
    out = cfg.output
    train = read_return_csv(_require(out / "train.csv", "training split"))
    test = read_return_csv(_require(out / "test.csv", "test split"))
    if train.shape[1] < 2:
        raise ConfigError("a copula needs at least two assets")
    models = []
    for j, asset in enumerate(train.asset_ids):
        try:
            models.append(fit_student_t(train.rows[:, j]))
        except FitDiverged as exc:
            raise FitDiverged(f"{asset}: {exc}") from exc
    u_train = pit(train, models)
    u_test = pit(test, models)
    copula = fit_t_copula(u_train)
    write_text(out / "marginals.json", marginals_to_json(train.asset_ids, models))
    write_text(out / "copula.json", copula.to_json())
    _write_pseudo(out / "pseudo_train.csv", u_train)
    _write_pseudo(out / "pseudo_test.csv", u_test)
    return {"marginals.json": "train", "copula.json": "train", "pseudo_train.csv": "train",
            "pseudo_test.csv": "test"}


def cmd_train(cfg: RunConfig, resume: bool = False, stop_after: int | None = None) -> dict[str, str]:
    out = cfg.output
    pseudo = _read_pseudo(_require(out / "pseudo_train.csv", "training pseudo-samples"))
    ansatz = cfg.ansatz()
    target = encode_dataset(pseudo, CodecConfig(ansatz.num_vars, ansatz.qubits_per_var))
    tr = cfg.raw["training"]
    seed, shots = int(tr["seed"]), tr["shots"]
    kwargs = {}
    if resume:
        ckpt = json.loads(_require(out / "model.json", "checkpoint").read_text())
        kwargs["state"] = TrainState.from_dict(ckpt["state"])
        kwargs["trace"] = TrainingTrace.from_csv(_require(out / "trace.csv", "trace"))
    schedule = cfg.schedule()
    if schedule is None:
        result = train_qcbm(ansatz, target, cfg.spsa(), shots=shots, seed=seed,
                            stop_after=stop_after, **kwargs)
    else:
        spsa = SpsaConfig(**{**tr["spsa"], "iterations": schedule.iters_per_cycle})
        result = anneal_train(ansatz, target, schedule, spsa, shots=shots, seed=seed,
                              stop_after=stop_after, **kwargs)
    atomic_write(out / "model.json", lambda p: save_checkpoint(p, ansatz, result, seed))
    atomic_write(out / "trace.csv", lambda p: result.trace.to_csv(p))
    return {"model.json": "model", "trace.csv": "model"}


def _model_pseudo_samples(cfg: RunConfig, count: int, seed: int) -> PseudoSampleMatrix:
    out = cfg.output
    ids = read_return_csv(_require(out / "train.csv", "training split")).asset_ids
    if cfg.kind == "classical_t":
        model = TCopulaModel.load(_require(out / "copula.json", "copula model"))
        return sample_t_copula(model, count, seed, ids)
    if cfg.kind == "empirical":
        pseudo = _read_pseudo(_require(out / "pseudo_train.csv", "training pseudo-samples"))
        rng = np.random.default_rng(seed)
        return PseudoSampleMatrix(ids, pseudo.rows[rng.integers(0, pseudo.shape[0], count)])
    ckpt = json.loads(_require(out / "model.json", "QCBM checkpoint").read_text())
    ansatz = AnsatzConfig(ckpt["n"], ckpt["m"], ckpt["L"], ckpt.get("topology", "chain"))
    if count == 0:
        return PseudoSampleMatrix(ids, np.empty((0, ansatz.num_vars)))
    dist = generate_distribution(ansatz, np.array(ckpt["params"]))
    rng = np.random.default_rng(seed)
    # one shot per generated trial
    idx = rng.choice(dist.num_outcomes, size=count, p=dist.probs)
    rows = decode_indices(idx, CodecConfig(ansatz.num_vars, ansatz.qubits_per_var), seed + 1)
    return PseudoSampleMatrix(ids, rows)


def cmd_sample(cfg: RunConfig, count: int | None = None, seed: int | None = None) -> dict[str, str]:
    out = cfg.output
    count = cfg.sample_count() if count is None else int(count)
    if count < 0:
        raise ConfigError("sample count must be non-negative")
    seed = int(cfg.raw["evaluation"]["seed"]) if seed is None else int(seed)
    ids, models = load_marginals(_require(out / "marginals.json", "marginal models"))
    pseudo = _model_pseudo_samples(cfg, count, seed)
    std = _load_standardization(out)
    if count:
        z = inverse_pit(pseudo, models)
        returns = unstandardize(z, std)
    else:
        returns = ReturnMatrix(pseudo.asset_ids, np.empty((0, pseudo.shape[1])))
    _write_pseudo(out / "samples_copula.csv", pseudo)
    atomic_write(out / "samples_return.csv", lambda p: write_return_csv(returns, p))
    return {"samples_copula.csv": "model", "samples_return.csv": "model"}


def cmd_evaluate(cfg: RunConfig) -> dict[str, str]:
    out = cfg.output
    manifest = Manifest(out)
    for name, tag in (("pseudo_test.csv", "test"), ("test.csv", "test")):
        if manifest.provenance(name) not in (None, tag):
            raise ConfigError(f"{name} is tagged {manifest.provenance(name)!r}, expected {tag!r}")
    ev = cfg.raw["evaluation"]
    alpha, q, B, seed = ev["alpha"], ev["q"], int(ev["bootstrap"]), int(ev["seed"])
    model_u = _read_pseudo(_require(out / "samples_copula.csv", "model samples"))
    model_r = read_return_csv(_require(out / "samples_return.csv", "model samples"))
    if model_u.shape[0] == 0:
        raise TooFewObservations("model sample files are empty")
    train_u = _read_pseudo(_require(out / "pseudo_train.csv", "training pseudo-samples"))
    test_u = _read_pseudo(_require(out / "pseudo_test.csv", "test pseudo-samples"))
    test_r = unstandardize(read_return_csv(_require(out / "test.csv", "test split")),
                           _load_standardization(out))

    ids = list(train_u.asset_ids)
    corr = {
        "model": correlators(model_u.rows, ids, q).to_dict(),
        "ground_truth": correlators(train_u.rows, ids, q).to_dict(),
    }
    reports = {
        "copula": backtest(copula_losses(model_u.rows), copula_losses(test_u.rows), alpha,
                           "copula", B, seed),
        "return": backtest(portfolio_losses(model_r.rows), portfolio_losses(test_r.rows), alpha,
                           "return", B, seed),
    }
    write_text(out / "correlators.json", json.dumps(corr, indent=2, sort_keys=True))
    write_text(out / "risk.json", json.dumps({k: r.to_dict() for k, r in reports.items()},
                                             indent=2, sort_keys=True))
    rows = [row for r in reports.values() for row in r.rows(cfg.kind)]
    atomic_write(out / "risk.csv", lambda p: write_risk_csv(p, rows))
    return {"correlators.json": "model", "risk.json": "test", "risk.csv": "test"}


def cmd_report(cfg: RunConfig) -> str:
    """Human-readable summary of whatever the run directory contains."""
    out = cfg.output
    lines = [f"run: {out}", f"model: {cfg.kind}"]
    stats = out / "stats.csv"
    if stats.exists():
        lines.append("")
        lines.append("return statistics before standardization")
        lines.extend(stats.read_text().strip().splitlines())
    risk = out / "risk.json"
    if risk.exists():
        lines.append("")
        for space, rep in json.loads(risk.read_text()).items():
            ci = rep["ci"]
            lines.append(
                f"{space:>7}: VaR={rep['var']:.4g} ES={rep['es']:.4g} "
                f"failure={rep['failure_ratio']:.3f} [{ci['failure_ratio'][0]:.3f}, "
                f"{ci['failure_ratio'][1]:.3f}] severity={rep['severity_ratio']:.3f} "
                f"[{ci['severity_ratio'][0]:.3f}, {ci['severity_ratio'][1]:.3f}]"
            )
    grid = out / "grid.csv"
    if grid.exists():
        lines.append("")
        lines.extend(grid.read_text().strip().splitlines())
    return "\n".join(lines)


STEPS = {
    "ingest": cmd_ingest,
    "fit-classical": cmd_fit_classical,
    "train": cmd_train,
    "sample": cmd_sample,
    "evaluate": cmd_evaluate,
}


def run_step(name: str, cfg: RunConfig, **kwargs) -> dict[str, str]:
    """Run one step and record its artifacts in the manifest."""
    cfg.output.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    artifacts = STEPS[name](cfg, **kwargs)
    seeds = {
        "split": cfg.raw["split"]["seed"],
        "training": cfg.raw["training"]["seed"],
        "evaluation": cfg.raw["evaluation"]["seed"],
    }
    seeds.update({k: v for k, v in kwargs.items() if k == "seed" and v is not None})
    Manifest(cfg.output).record(name, cfg, artifacts, time.perf_counter() - t0, seeds)
    log.info("%s wrote %s", name, ", ".join(sorted(artifacts)))
    return artifacts


def derived_seed(base: int, *parts) -> int:
    digest = hashlib.sha256(json.dumps([base, *parts]).encode()).digest()
    return int.from_bytes(digest[:4], "little")


def expand_grid(cfg: RunConfig) -> list[tuple[dict, RunConfig]]:
    """One sub-configuration per ``(m, L)`` combination of the grid section."""
    grid = cfg.raw.get("grid") or {}
    ms = grid.get("m", [cfg.raw["ansatz"]["m"]])
    ls = grid.get("L", [cfg.raw["ansatz"]["L"]])
    subs = []
    for m in ms:
        for L in ls:
            raw = copy.deepcopy(cfg.raw)
            raw["grid"] = None
            raw["ansatz"]["m"], raw["ansatz"]["L"] = m, L
            raw["training"]["seed"] = derived_seed(cfg.raw["training"]["seed"], m, L)
            raw["output"] = str(Path(cfg.raw["output"]) / "grid" / f"m{m}_L{L}")
            subs.append(({"m": m, "L": L}, RunConfig.from_dict(raw, cfg.base_dir)))
    return subs


def run_all(cfg: RunConfig) -> None:
    """Ingest and fit once, then train/sample/evaluate every grid entry."""
    run_step("ingest", cfg)
    run_step("fit-classical", cfg)
    if not cfg.raw.get("grid"):
        if cfg.kind == "qcbm":
            run_step("train", cfg)
        run_step("sample", cfg)
        run_step("evaluate", cfg)
        return
    shared = ["returns_raw.csv", "returns_std.csv", "train.csv", "test.csv",
              "standardization.json", "split.json", "marginals.json", "copula.json",
              "pseudo_train.csv", "pseudo_test.csv"]
    rows = []
    for combo, sub in expand_grid(cfg):
        sub.output.mkdir(parents=True, exist_ok=True)
        for name in shared:
            src = (cfg.output / name).read_bytes()
            write_text(sub.output / name, src.decode())
        if sub.kind == "qcbm":
            run_step("train", sub)
        run_step("sample", sub)
        run_step("evaluate", sub)
        risk = json.loads((sub.output / "risk.json").read_text())
        for space, rep in risk.items():
            rows.append([combo["m"], combo["L"], space, rep["failure_ratio"],
                         *rep["ci"]["failure_ratio"], rep["severity_ratio"],
                         *rep["ci"]["severity_ratio"]])

    def write_grid(p):
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["m", "L", "space", "failure", "failure_lo", "failure_hi",
                        "severity", "severity_lo", "severity_hi"])
            for row in rows:
                w.writerow([row[0], row[1], row[2], *(f"{v:.6g}" for v in row[3:])])

    atomic_write(cfg.output / "grid.csv", write_grid)
    Manifest(cfg.output).record("grid", cfg, {"grid.csv": "test"}, 0.0,
                                {"training": cfg.raw["training"]["seed"]})
