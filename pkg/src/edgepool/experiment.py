"""End-to-end runs and sweeps: configuration, run records, and summary tables.

A run is fully determined by (config, k, lambda_max, seed).  The single user
seed is expanded into per-stage seeds with PCG64's SeedSequence:

    topo, rates, shards, pooling, sim = SeedSequence([seed]).generate_state(5)

so two runs that share a seed also share the topology, workload, and data
placement no matter which policy they evaluate.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import struct
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import datasets, fedsim, pooling, resources, surrogate, topology

FORMAT_VERSION = 1

SUMMARY_COLUMNS = (
    "k",
    "lambda_max",
    "seed",
    "final_accuracy",
    "final_loss",
    "comm_ru_avg",
    "comp_ru_avg",
    "total_ru_avg",
    "overage_ru",
)

CURVE_COLUMNS = ("k", "lambda_max", "seed", "t", "accuracy", "loss")


class ConfigError(ValueError):
    """Raised for unknown keys, missing keys, or unparseable config values."""


class SummaryFormatError(ValueError):
    """Raised when a summary CSV does not match the column contract."""


@dataclass
class ExperimentConfig:
    lambda_max: list[float]
    k: list[int]
    horizon_s: int
    seeds: list[int]
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    n_aps: int = 32
    area_side: float = 1000.0
    shards_per_ap: int = 2
    local_period_s: int = 1
    agg_period_s: int = 10
    lr: float = 0.01
    eval_period_s: int = 10
    deterministic_arrivals: bool = False
    ru_per_unit_migrated: float = 1.0
    ru_per_unit_processed: float = 0.5
    ru_per_model_exchange: float = 0.1
    ru_per_training_event: float = 10.0
    overage_multiplier: float = 2.0
    out_dir: str = "runs"
    workers: int = 1

    def cost_model(self) -> resources.CostModel:
        return resources.CostModel(
            ru_per_unit_migrated=self.ru_per_unit_migrated,
            ru_per_unit_processed=self.ru_per_unit_processed,
            ru_per_model_exchange=self.ru_per_model_exchange,
            ru_per_training_event=self.ru_per_training_event,
            overage_multiplier=self.overage_multiplier,
        )

    def sim_config(self, sim_seed: int) -> fedsim.SimConfig:
        return fedsim.SimConfig(
            horizon_s=self.horizon_s,
            local_period_s=self.local_period_s,
            agg_period_s=self.agg_period_s,
            lr=self.lr,
            eval_period_s=self.eval_period_s,
            seed=sim_seed,
            deterministic_arrivals=self.deterministic_arrivals,
        )

    def validate(self):
        if not self.lambda_max or not self.k or not self.seeds:
            raise ConfigError("lambda_max, k, and seeds lists must be non-empty")
        if any(lam <= 0 for lam in self.lambda_max):
            raise ConfigError("lambda_max values must be > 0")
        if any(not (1 <= kk <= self.n_aps) for kk in self.k):
            raise ConfigError(f"k values must lie in [1, n_aps={self.n_aps}]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.sim_config(sim_seed=0)  # checks periods and horizon
        self.cost_model()
        for name, magic in (
            ("train_images", datasets.IMAGE_MAGIC),
            ("train_labels", datasets.LABEL_MAGIC),
            ("test_images", datasets.IMAGE_MAGIC),
            ("test_labels", datasets.LABEL_MAGIC),
        ):
            path = Path(getattr(self, name))
            if not path.is_file():
                raise ConfigError(f"{name}: no such file {path}")
            _probe_idx(path, magic)


def _probe_idx(path: Path, magic: int):
    """Validate an IDX header and size without reading the payload."""
    size = path.stat().st_size
    header_len = 16 if magic == datasets.IMAGE_MAGIC else 8
    with open(path, "rb") as fh:
        header = fh.read(header_len)
    if len(header) < header_len:
        raise datasets.IdxFormatError(f"{path}: truncated header")
    if magic == datasets.IMAGE_MAGIC:
        got, count, rows, cols = struct.unpack(">IIII", header)
        expected = 16 + count * rows * cols
    else:
        got, count = struct.unpack(">II", header)
        expected = 8 + count
    if got != magic:
        raise datasets.IdxFormatError(
            f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}"
        )
    if size != expected:
        raise datasets.IdxFormatError(f"{path}: expected {expected} bytes, found {size}")


# field annotations are strings under `from __future__ import annotations`
_PARSERS = {
    "int": lambda s: int(s),
    "float": lambda s: float(s),
    "str": lambda s: s,
    "bool": lambda s: {"true": True, "false": False}[s.lower()],
    "list[int]": lambda s: [int(v) for v in s.split(",") if v.strip() != ""],
    "list[float]": lambda s: [float(v) for v in s.split(",") if v.strip() != ""],
}


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse a `key = value` config document.

    Lines are `key = value`; '#' starts a comment; lists are comma-separated.
    Unknown keys are errors, as are missing required keys.  Relative dataset
    paths resolve against ``base_dir``.
    """
    spec = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in spec:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[spec[key].type](value)
        except (KeyError, ValueError) as exc:
            raise ConfigError(
                f"line {lineno}: cannot parse {key} = {value!r}: {exc}"
            ) from None

    missing = [
        f.name
        for f in fields(ExperimentConfig)
        if f.default is dataclasses.MISSING and f.name not in values
    ]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    config = ExperimentConfig(**values)
    if base_dir is not None:
        for name in ("train_images", "train_labels", "test_images", "test_labels"):
            p = Path(getattr(config, name))
            if not p.is_absolute():
                setattr(config, name, str(base_dir / p))
        out = Path(config.out_dir)
        if not out.is_absolute():
            config.out_dir = str(base_dir / out)
    return config


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    config = parse_config(path.read_text(), base_dir=path.parent)
    config.validate()
    return config


def derive_run_seeds(seed: int) -> dict[str, int]:
    """Expand one run seed into the five per-stage seeds."""
    words = np.random.SeedSequence([seed]).generate_state(5)
    names = ("topology", "rates", "shards", "pooling", "sim")
    return {name: int(w) for name, w in zip(names, words)}


@dataclass
class RunRecord:
    """Self-contained result of one run; re-runnable from config + seed."""

    format_version: int
    k: int
    lambda_max: float
    seed: int
    config: dict
    policy: dict
    accuracy_curve: tuple[tuple[int, float], ...]
    loss_curve: tuple[tuple[int, float], ...]
    cost_summary: dict
    wall_clock_s: float

    @property
    def final_accuracy(self) -> float:
        return self.accuracy_curve[-1][1]

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1][1]

    def summary_row(self) -> dict:
        return {
            "k": self.k,
            "lambda_max": self.lambda_max,
            "seed": self.seed,
            "final_accuracy": self.final_accuracy,
            "final_loss": self.final_loss,
            "comm_ru_avg": self.cost_summary["communication_ru"] / self.config["horizon_s"],
            "comp_ru_avg": self.cost_summary["computing_ru"] / self.config["horizon_s"],
            "total_ru_avg": self.cost_summary["average_ru_per_s"],
            "overage_ru": self.cost_summary["overage_ru"],
        }

    def to_json(self) -> str:
        doc = {
            "format_version": self.format_version,
            "k": self.k,
            "lambda_max": self.lambda_max,
            "seed": self.seed,
            "config": self.config,
            "policy": self.policy,
            "accuracy_curve": [list(p) for p in self.accuracy_curve],
            "loss_curve": [list(p) for p in self.loss_curve],
            "cost_summary": self.cost_summary,
            "wall_clock_s": self.wall_clock_s,
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        doc = json.loads(text)
        version = doc.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported record format version {version!r}")
        return cls(
            format_version=version,
            k=doc["k"],
            lambda_max=doc["lambda_max"],
            seed=doc["seed"],
            config=doc["config"],
            policy=doc["policy"],
            accuracy_curve=tuple((int(t), float(v)) for t, v in doc["accuracy_curve"]),
            loss_curve=tuple((int(t), float(v)) for t, v in doc["loss_curve"]),
            cost_summary=doc["cost_summary"],
            wall_clock_s=doc["wall_clock_s"],
        )


_DATASET_CACHE: dict[tuple, datasets.LabeledDataset] = {}


def _load_cached(images_path: str, labels_path: str) -> datasets.LabeledDataset:
    key = (images_path, labels_path)
    if key not in _DATASET_CACHE:
        _DATASET_CACHE[key] = datasets.load_dataset(images_path, labels_path)
    return _DATASET_CACHE[key]


def run_single(
    config: ExperimentConfig, k: int, lambda_max: float, seed: int
) -> RunRecord:
    """Execute one full run: topology, rates, shards, pooling, training, costs."""
    start = time.perf_counter()
    seeds = derive_run_seeds(seed)
    topo = topology.generate_topology(config.n_aps, config.area_side, seeds["topology"])
    topo = topology.sample_arrival_rates(topo, lambda_max, seeds["rates"])
    train = _load_cached(config.train_images, config.train_labels)
    test = _load_cached(config.test_images, config.test_labels)
    shards = topology.partition_noniid(
        train, config.n_aps, config.shards_per_ap, seeds["shards"]
    )
    policy = pooling.form_subpools(topo, k, seeds["pooling"])
    sim = config.sim_config(sim_seed=seeds["sim"])
    result = fedsim.simulate(topo, policy, shards, train, sim, test)
    plan = resources.reserve(topo, policy, config.cost_model(), sim)
    ledger = resources.account(result.trace, plan, config.cost_model())
    summary = resources.summarize(ledger)
    summary.update(
        {
            "migration_ru": ledger.migration_ru,
            "processing_ru": ledger.processing_ru,
            "exchange_ru": ledger.exchange_ru,
            "training_ru": ledger.training_ru,
            "overage_ru": ledger.overage_ru,
        }
    )
    snapshot = {
        "n_aps": config.n_aps,
        "area_side": config.area_side,
        "shards_per_ap": config.shards_per_ap,
        "horizon_s": config.horizon_s,
        "local_period_s": config.local_period_s,
        "agg_period_s": config.agg_period_s,
        "lr": config.lr,
        "eval_period_s": config.eval_period_s,
        "deterministic_arrivals": config.deterministic_arrivals,
        "ru_per_unit_migrated": config.ru_per_unit_migrated,
        "ru_per_unit_processed": config.ru_per_unit_processed,
        "ru_per_model_exchange": config.ru_per_model_exchange,
        "ru_per_training_event": config.ru_per_training_event,
        "overage_multiplier": config.overage_multiplier,
        "train_images": config.train_images,
        "train_labels": config.train_labels,
        "test_images": config.test_images,
        "test_labels": config.test_labels,
    }
    return RunRecord(
        format_version=FORMAT_VERSION,
        k=k,
        lambda_max=lambda_max,
        seed=seed,
        config=snapshot,
        policy={
            "k": policy.k,
            "assignment": list(policy.assignment),
            "aggregators": list(policy.aggregators),
        },
        accuracy_curve=result.accuracy_curve,
        loss_curve=result.loss_curve,
        cost_summary=summary,
        wall_clock_s=time.perf_counter() - start,
    )


def _format_value(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary_csv(path, rows: list[dict]):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([_format_value(row[c]) for c in SUMMARY_COLUMNS])


def read_summary_csv(path) -> list[dict]:
    """Read a summary CSV, enforcing the exact column contract."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SummaryFormatError(f"{path}: empty file, expected a header row")
        if tuple(header) != SUMMARY_COLUMNS:
            raise SummaryFormatError(
                f"{path}: header {header} != expected {list(SUMMARY_COLUMNS)}"
            )
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(SUMMARY_COLUMNS):
                raise SummaryFormatError(
                    f"{path}: line {lineno}: {len(rec)} fields, "
                    f"expected {len(SUMMARY_COLUMNS)}"
                )
            row = {}
            for col, value in zip(SUMMARY_COLUMNS, rec):
                try:
                    row[col] = int(value) if col in ("k", "seed") else float(value)
                except ValueError:
                    raise SummaryFormatError(
                        f"{path}: line {lineno}: column {col!r}: "
                        f"cannot parse {value!r}"
                    ) from None
            rows.append(row)
    return rows


def record_filename(k: int, lambda_max: float, seed: int) -> str:
    return f"run_k{k}_lam{lambda_max:g}_seed{seed}.json"


def _run_job(args):
    config, k, lam, seed = args
    try:
        return (k, lam, seed), run_single(config, k, lam, seed), None
    except Exception as exc:  # noqa: BLE001 - sweep must continue past failures
        return (k, lam, seed), None, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepResult:
    rows: list[dict]
    records: list[RunRecord]
    failures: list[tuple[tuple, str]] = field(default_factory=list)


def run_sweep(config: ExperimentConfig, out_dir=None) -> SweepResult:
    """Run the cartesian product k x lambda_max x seeds and write the outputs.

    Emits ``summary.csv`` plus one record file per run under
    ``out_dir/records/``.  Individual run failures are collected into
    ``failures.txt`` and the sweep continues.
    """
    config.validate()
    out = Path(out_dir if out_dir is not None else config.out_dir)
    records_dir = out / "records"
    records_dir.mkdir(parents=True, exist_ok=True)

    jobs = [
        (config, k, lam, seed)
        for k in sorted(config.k)
        for lam in sorted(config.lambda_max)
        for seed in sorted(config.seeds)
    ]
    results = {}
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for key, record, error in pool.map(_run_job, jobs):
                results[key] = (record, error)
    else:
        for job in jobs:
            key, record, error = _run_job(job)
            results[key] = (record, error)

    rows, records, failures = [], [], []
    for key in sorted(results):  # deterministic merge order: (k, lambda, seed)
        record, error = results[key]
        if error is not None:
            failures.append((key, error))
            continue
        records.append(record)
        rows.append(record.summary_row())
        (records_dir / record_filename(*key)).write_text(record.to_json())

    write_summary_csv(out / "summary.csv", rows)
    if failures:
        with open(out / "failures.txt", "w") as fh:
            for key, error in failures:
                fh.write(f"k={key[0]} lambda_max={key[1]} seed={key[2]}: {error}\n")
    return SweepResult(rows=rows, records=records, failures=failures)


def write_curves_csv(records: list[RunRecord], path):
    """Flatten record curves into the plot-ready long-format CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for rec in sorted(records, key=lambda r: (r.k, r.lambda_max, r.seed)):
            loss_by_t = dict(rec.loss_curve)
            for t, acc in rec.accuracy_curve:
                writer.writerow(
                    [
                        _format_value(rec.k),
                        _format_value(rec.lambda_max),
                        _format_value(rec.seed),
                        _format_value(t),
                        _format_value(acc),
                        _format_value(loss_by_t[t]),
                    ]
                )


def load_records(records_dir) -> list[RunRecord]:
    paths = sorted(Path(records_dir).glob("run_*.json"))
    if not paths:
        raise FileNotFoundError(f"no run_*.json records under {records_dir}")
    return [RunRecord.from_json(p.read_text()) for p in paths]


def observations_from_rows(
    rows: list[dict], config: ExperimentConfig
) -> list[surrogate.PolicyObservation]:
    """Turn summary rows into surrogate observations.

    The per-AP rate statistics are not part of the CSV contract; they are
    recomputed from each row's seed through the documented seed derivation,
    which reproduces the exact rates the run used.
    """
    obs = []
    for row in rows:
        seeds = derive_run_seeds(row["seed"])
        topo = topology.generate_topology(
            config.n_aps, config.area_side, seeds["topology"]
        )
        topo = topology.sample_arrival_rates(topo, row["lambda_max"], seeds["rates"])
        rates = topo.rates()
        obs.append(
            surrogate.PolicyObservation(
                k=int(row["k"]),
                lambda_max=float(row["lambda_max"]),
                rate_mean=float(rates.mean()),
                rate_std=float(rates.std()),
                accuracy=float(row["final_accuracy"]),
                avg_ru_per_s=float(row["total_ru_avg"]),
            )
        )
    return obs


@dataclass
class SelectionReport:
    required_accuracy: float
    lambda_max: float
    candidate_ks: list[int]
    candidates: list[surrogate.PolicyCandidate]
    loo_accuracy_mae: float | None
    loo_cost_mae: float | None
    accuracy_report: str
    cost_report: str

    def to_text(self) -> str:
        lines = [
            "Pooling policy selection report",
            f"  accuracy requirement: {self.required_accuracy}",
            f"  workload lambda_max: {self.lambda_max}",
            f"  candidate pool counts: {self.candidate_ks}",
            "",
            self.accuracy_report,
            "",
            self.cost_report,
            "",
        ]
        if not self.candidates:
            lines.append("No candidate meets the accuracy requirement.")
        else:
            lines.append("Ranked candidates (cheapest first):")
            for i, c in enumerate(self.candidates, start=1):
                lines.append(
                    f"  {i}. k={c.k}: predicted accuracy {c.predicted_accuracy:.4f}"
                    f" (var {c.accuracy_variance:.2e}),"
                    f" predicted cost {c.predicted_cost:.4f} RU/s"
                    f" (var {c.cost_variance:.2e})"
                )
        return "\n".join(lines)


def fit_and_select(
    config: ExperimentConfig,
    results_csv,
    required_accuracy: float,
    lambda_max: float | None = None,
    hyper: surrogate.GprHyperparams = surrogate.GprHyperparams(),
) -> SelectionReport:
    """Fit accuracy and cost surrogates to a sweep CSV and rank candidates."""
    rows = read_summary_csv(results_csv)
    if not rows:
        raise SummaryFormatError(f"{results_csv}: no data rows")
    lams = sorted({row["lambda_max"] for row in rows})
    if lambda_max is None:
        if len(lams) > 1:
            raise ValueError(
                f"CSV contains several lambda_max values {lams}; pass one explicitly"
            )
        lambda_max = lams[0]

    obs = observations_from_rows(rows, config)
    acc_model = surrogate.gpr_fit(obs, target="accuracy", hyper=hyper)
    cost_model = surrogate.gpr_fit(obs, target="cost", hyper=hyper)
    loo_acc = loo_cost = None
    if len(obs) >= 2:
        loo_acc = surrogate.loo_mean_absolute_error(obs, "accuracy", hyper)
        loo_cost = surrogate.loo_mean_absolute_error(obs, "cost", hyper)

    at_lam = [o for o in obs if o.lambda_max == lambda_max]
    if not at_lam:
        raise ValueError(f"no rows with lambda_max={lambda_max} in {results_csv}")
    workload = (
        lambda_max,
        float(np.mean([o.rate_mean for o in at_lam])),
        float(np.mean([o.rate_std for o in at_lam])),
    )
    candidate_ks = sorted({o.k for o in obs})
    candidates = surrogate.select_policy(
        acc_model, cost_model, candidate_ks, workload, required_accuracy
    )
    return SelectionReport(
        required_accuracy=required_accuracy,
        lambda_max=lambda_max,
        candidate_ks=candidate_ks,
        candidates=candidates,
        loo_accuracy_mae=loo_acc,
        loo_cost_mae=loo_cost,
        accuracy_report=acc_model.report(loo_acc),
        cost_report=cost_model.report(loo_cost),
    )
