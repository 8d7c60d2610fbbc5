"""Experiment configuration, multi-round comparisons, sweeps and CSV output."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._seeding import hash64
from .data import DEFAULT_CLASS_SEP, DatasetSplit, gen_synthetic, load_idx, shard, split, subsample
from .errors import ConfigError, SmoothSwitchError
from .metrics import MetricsRecord, MetricsSeries
from .model import ModelSpec, init_params
from .server import AggregationPolicy
from .sim import SimConfig, make_worker_profiles, run_simulation
from .threshold import ThresholdSchedule

log = logging.getLogger(__name__)

SERIES_COLUMNS = ("policy", "round", "time", "train_loss", "test_loss",
                  "test_accuracy", "update_count", "current_k")
SUMMARY_COLUMNS = ("ours", "baseline", "d_accuracy", "d_test_loss", "d_train_loss", "points")
SWEEP_AXES = ("batch_size", "step_size", "delay_std")
DEFAULT_POLICIES = ("synchronous", "asynchronous", "hybrid")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; mirrors the JSON config file key for key."""

    # dataset
    dataset: str = "synthetic"
    n_samples: int = 10_000
    input_dim: int = 20
    num_classes: int = 10
    class_sep: float = DEFAULT_CLASS_SEP
    train_fraction: float = 0.8
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    train_subsample: int | None = 4000
    test_subsample: int | None = 1000
    # model
    hidden_dims: tuple[int, ...] = ()
    # workers and timing
    worker_count: int = 25
    delayed_fraction: float = 0.5
    delay_mean: float = 0.0
    delay_std: float = 0.25
    compute_per_sample: float = 0.001
    time_budget: float = 100.0
    eval_interval: float | None = None
    # optimisation and aggregation
    lr: float = 0.01
    batch_size: int = 32
    step_size: int = 500
    k_initial: int = 1
    policies: tuple[str, ...] = DEFAULT_POLICIES
    baseline: str = "asynchronous"
    # experiment
    rounds: int = 5
    seed: int = 0
    sweep_axis: str | None = None
    sweep_values: tuple[float, ...] = ()
    resample_dataset: bool = False
    output_dir: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "policies", tuple(self.policies))
        object.__setattr__(self, "sweep_values", tuple(self.sweep_values))
        if self.dataset not in ("synthetic", "idx"):
            raise ConfigError(f"dataset must be 'synthetic' or 'idx', got {self.dataset!r}")
        if self.dataset == "idx":
            for key in ("train_images", "train_labels"):
                if not getattr(self, key):
                    raise ConfigError(f"idx dataset requires {key}")
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                path = getattr(self, key)
                if path and not Path(path).exists():
                    raise ConfigError(f"{key}: file {path} does not exist")
            if bool(self.test_images) != bool(self.test_labels):
                raise ConfigError("test_images and test_labels must be given together")
        positive = ("n_samples", "input_dim", "worker_count", "time_budget", "lr",
                    "batch_size", "step_size", "k_initial", "rounds", "compute_per_sample")
        for key in positive:
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.delay_std < 0:
            raise ConfigError("delay_std must be non-negative")
        if not 0 <= self.delayed_fraction <= 1:
            raise ConfigError("delayed_fraction must lie in [0, 1]")
        if self.k_initial > self.worker_count:
            raise ConfigError("k_initial cannot exceed worker_count")
        if self.eval_interval is not None and not 0 < self.eval_interval <= self.time_budget:
            raise ConfigError("eval_interval must lie in (0, time_budget]")
        if not self.policies:
            raise ConfigError("at least one policy is required")
        for token in (*self.policies, self.baseline):
            parse_policy(token, self)
        if self.sweep_axis is not None:
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"sweep_axis must be one of {SWEEP_AXES}, got {self.sweep_axis!r}")
            if not self.sweep_values:
                raise ConfigError("sweep_axis given without sweep_values")
            for v in self.sweep_values:
                _check_axis_value(self.sweep_axis, v)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("hidden_dims", "policies", "sweep_values"):
            d[key] = list(d[key])
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def fingerprint(self) -> str:
        """Hash of every field that can influence results."""
        d = self.to_dict()
        d.pop("output_dir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check_axis_value(axis: str, value):
    if axis in ("batch_size", "step_size"):
        if value != int(value) or value < 1:
            raise ConfigError(f"{axis} values must be positive integers, got {value}")
    elif value < 0:
        raise ConfigError(f"{axis} values must be non-negative, got {value}")


def parse_policy(token: str, config: ExperimentConfig) -> AggregationPolicy:
    """Turn a policy token into an AggregationPolicy labelled with that token.

    Accepted: ``synchronous``/``sync``, ``asynchronous``/``async``, ``hybrid``
    (schedule from the config), ``hybrid:S=<int>`` (custom step size) and
    ``hybrid:K=<int|W>`` (threshold pinned to a constant).
    """
    name, _, arg = token.strip().partition(":")
    w = config.worker_count
    if name in ("sync", "synchronous") and not arg:
        return AggregationPolicy.synchronous(label="synchronous")
    if name in ("async", "asynchronous") and not arg:
        return AggregationPolicy.asynchronous(label="asynchronous")
    if name == "hybrid":
        if not arg:
            sched = ThresholdSchedule(config.step_size, w, config.k_initial)
            return AggregationPolicy.hybrid(sched, label="hybrid")
        key, _, val = arg.partition("=")
        try:
            if key.upper() == "S":
                sched = ThresholdSchedule(int(val), w, config.k_initial)
                return AggregationPolicy.hybrid(sched, label=f"hybrid:S={int(val)}")
            if key.upper() == "K":
                k = w if val.upper() == "W" else int(val)
                if k > w:
                    raise ConfigError(f"bad policy {token!r}: K={k} exceeds worker_count={w}")
                return AggregationPolicy.hybrid(ThresholdSchedule.constant(k),
                                                label=f"hybrid:K={val.upper()}")
        except ValueError as exc:
            raise ConfigError(f"bad policy {token!r}: {exc}") from exc
    raise ConfigError(f"unknown policy {token!r}")


def build_split(config: ExperimentConfig, dataset_seed: int) -> DatasetSplit:
    if config.dataset == "synthetic":
        ds = gen_synthetic(dataset_seed, config.n_samples, config.input_dim,
                           config.num_classes, config.class_sep)
        return split(ds, config.train_fraction, dataset_seed)
    train = load_idx(config.train_images, config.train_labels, config.num_classes)
    if config.test_images:
        test = load_idx(config.test_images, config.test_labels, config.num_classes)
        sp = DatasetSplit(train, test)
    else:
        sp = split(train, config.train_fraction, dataset_seed)
    return DatasetSplit(subsample(sp.train, config.train_subsample, dataset_seed),
                        subsample(sp.test, config.test_subsample, dataset_seed + 1))


def dataset_seed(config: ExperimentConfig) -> int:
    if config.resample_dataset:
        return int(config.fingerprint()[:15], 16)
    return config.seed


def round_seed(master_seed: int, round_index: int) -> int:
    return hash64(master_seed, round_index)


def _run_one_round(config: ExperimentConfig, r: int, split_: DatasetSplit,
                   tokens: tuple[str, ...]) -> list[MetricsSeries]:
    seed = round_seed(config.seed, r)
    spec = ModelSpec(split_.train.input_dim, config.num_classes, config.hidden_dims)
    theta0 = init_params(spec, seed)
    profiles = make_worker_profiles(
        shard(split_.train, config.worker_count), config.batch_size,
        compute_per_sample=config.compute_per_sample, delayed_fraction=config.delayed_fraction,
        delay_mean=config.delay_mean, delay_std=config.delay_std,
    )
    fp = config.fingerprint()
    out = []
    for token in tokens:
        policy = parse_policy(token, config)
        sim = SimConfig(config.worker_count, config.time_budget, policy, config.lr,
                        config.batch_size, seed, config.eval_interval)
        try:
            series = run_simulation(sim, spec, split_, profiles, theta0)
        except SmoothSwitchError as exc:
            raise type(exc)(f"round {r}, policy {policy.label}: {exc}") from exc
        series.round = r
        series.fingerprint = fp
        log.info("round %d %-14s updates=%d acc=%.4f", r, policy.label,
                 series.final.update_count, series.final.test_accuracy)
        out.append(series)
    return out


def run_rounds(config: ExperimentConfig, policies=None, jobs: int = 1) -> list[MetricsSeries]:
    """Every policy for every round; round ``r`` seeds from ``hash64(seed, r)``.

    Returned in round-major order.  Within a round all policies start from the
    same parameters and share shards, worker profiles and random streams.
    """
    tokens = tuple(policies) if policies is not None else config.policies
    for t in tokens:
        parse_policy(t, config)
    split_ = build_split(config, dataset_seed(config))
    if jobs > 1 and config.rounds > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_one_round, config, r, split_, tokens)
                       for r in range(config.rounds)]
            per_round = [f.result() for f in futures]
    else:
        per_round = [_run_one_round(config, r, split_, tokens) for r in range(config.rounds)]
    return [s for rnd in per_round for s in rnd]


def select(series: list[MetricsSeries], policy: str) -> list[MetricsSeries]:
    return [s for s in series if s.policy == policy]


@dataclass(frozen=True)
class ComparisonSummary:
    """Mean of (ours - baseline) over every round and evaluation time.

    ``d_accuracy`` is in percentage points.
    """

    ours: str
    baseline: str
    d_accuracy: float
    d_test_loss: float
    d_train_loss: float
    points: int


def summarize(ours: list[MetricsSeries], baseline: list[MetricsSeries]) -> ComparisonSummary:
    if not ours or len(ours) != len(baseline):
        raise RuntimeError(f"cannot pair {len(ours)} series with {len(baseline)} baseline series")
    by_round = {s.round: s for s in baseline}
    if len(by_round) != len(baseline):
        raise RuntimeError("baseline has duplicate round indices")
    diffs = {"test_accuracy": [], "test_loss": [], "train_loss": []}
    for a in ours:
        b = by_round.get(a.round)
        if b is None:
            raise RuntimeError(f"baseline has no round {a.round}")
        if a.times != b.times:
            raise RuntimeError(f"evaluation grids differ in round {a.round}")
        for key, acc in diffs.items():
            acc.append(np.subtract(a.column(key), b.column(key)))
    mean = {k: float(np.mean(np.concatenate(v))) for k, v in diffs.items()}
    points = sum(len(s) for s in ours)
    return ComparisonSummary(ours[0].policy, baseline[0].policy, 100.0 * mean["test_accuracy"],
                             mean["test_loss"], mean["train_loss"], points)


@dataclass
class SweepCell:
    value: float
    summary: ComparisonSummary
    fingerprint: str
    series: list[MetricsSeries] = field(default_factory=list, repr=False)


def _run_key(config: ExperimentConfig, token: str) -> str:
    """Fingerprint of one run, ignoring fields its policy does not read."""
    cfg = config.replace(sweep_axis=None, sweep_values=(), policies=(token,))
    if parse_policy(token, config).schedule is None:
        cfg = cfg.replace(step_size=1, k_initial=1)
    # resampled datasets are keyed by the full cell config, so they cannot be shared
    return f"{cfg.fingerprint()}:{dataset_seed(config)}"


def sweep(config: ExperimentConfig, ours: str = "hybrid", jobs: int = 1) -> list[SweepCell]:
    """``run_rounds`` + ``summarize`` once per swept value, all else held fixed.

    Runs that cannot depend on the swept value (e.g. the asynchronous
    baseline across step sizes) are computed once and reused.
    """
    if config.sweep_axis is None:
        raise ConfigError("sweep requires sweep_axis and sweep_values")
    axis = config.sweep_axis
    cache: dict[str, list[MetricsSeries]] = {}
    cells = []
    for value in config.sweep_values:
        cast = int(value) if axis in ("batch_size", "step_size") else float(value)
        cell_cfg = config.replace(**{axis: cast}, sweep_axis=None, sweep_values=())
        todo = [t for t in (ours, config.baseline) if _run_key(cell_cfg, t) not in cache]
        try:
            if todo:
                fresh = run_rounds(cell_cfg, todo, jobs=jobs)
                for t in todo:
                    cache[_run_key(cell_cfg, t)] = select(fresh, parse_policy(t, config).label)
            a = cache[_run_key(cell_cfg, ours)]
            b = cache[_run_key(cell_cfg, config.baseline)]
            summary = summarize(a, b)
        except SmoothSwitchError as exc:
            raise type(exc)(f"{axis}={cast}: {exc}") from exc
        log.info("%s=%s d_acc=%+.3f d_test=%+.4f d_train=%+.4f", axis, cast,
                 summary.d_accuracy, summary.d_test_loss, summary.d_train_loss)
        cells.append(SweepCell(cast, summary, cell_cfg.fingerprint(), a + b))
    return cells


# CSV output: fixed column order, floats to 9 significant digits, "\n" line ends.

def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    return str(x)


def _write(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def emit_csv(obj, path) -> Path:
    """Write series, summaries or sweep cells as CSV.

    ``obj`` may be a MetricsSeries, a list of them, a ComparisonSummary, a list
    of summaries, or a list of SweepCell (written in table layout).
    """
    items = obj if isinstance(obj, (list, tuple)) else [obj]
    if not items or isinstance(items[0], MetricsSeries):
        rows = ((s.policy, s.round, *rec) for s in items for rec in s.records)
        return _write(path, SERIES_COLUMNS, rows)
    if isinstance(items[0], ComparisonSummary):
        rows = ((s.ours, s.baseline, s.d_accuracy, s.d_test_loss, s.d_train_loss, s.points)
                for s in items)
        return _write(path, SUMMARY_COLUMNS, rows)
    if isinstance(items[0], SweepCell):
        header = ["metric", *(_fmt(c.value) for c in items)]
        rows = [
            ["test_accuracy", *(c.summary.d_accuracy for c in items)],
            ["test_loss", *(c.summary.d_test_loss for c in items)],
            ["train_loss", *(c.summary.d_train_loss for c in items)],
        ]
        return _write(path, header, rows)
    raise TypeError(f"don't know how to write {type(items[0]).__name__} as CSV")


def read_series_csv(path) -> list[MetricsSeries]:
    """Inverse of ``emit_csv`` for series files; one series per (policy, round)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if tuple(header or ()) != SERIES_COLUMNS:
            raise ConfigError(f"{path}: expected columns {','.join(SERIES_COLUMNS)}")
        grouped: dict[tuple[str, int], MetricsSeries] = {}
        for line in reader:
            policy, rnd = line[0], int(line[1])
            rec = MetricsRecord(float(line[2]), float(line[3]), float(line[4]),
                                float(line[5]), int(line[6]), int(line[7]))
            s = grouped.setdefault((policy, rnd), MetricsSeries(policy=policy, round=rnd))
            s.records.append(rec)
    return list(grouped.values())


def quantize(series: MetricsSeries) -> MetricsSeries:
    """The series as it reads back from CSV (floats rounded to 9 significant digits)."""
    def q(x):
        return float(format(x, ".9g"))
    recs = [MetricsRecord(q(r.time), q(r.train_loss), q(r.test_loss), q(r.test_accuracy),
                          r.update_count, r.current_k) for r in series.records]
    return MetricsSeries(recs, series.policy, series.round, series.fingerprint)


def safe_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


def write_run_outputs(config: ExperimentConfig, series: list[MetricsSeries], out_dir) -> list[Path]:
    """Per-policy series CSVs, a summary CSV and the resolved config."""
    out_dir = Path(out_dir)
    paths = []
    labels = list(dict.fromkeys(s.policy for s in series))
    for label in labels:
        paths.append(emit_csv(select(series, label), out_dir / f"series_{safe_name(label)}.csv"))
    hybrids = [l for l in labels if l.startswith("hybrid")]
    if hybrids:
        ours = hybrids[0]
        summaries = [summarize(select(series, ours), select(series, other))
                     for other in labels if other != ours]
        if summaries:
            paths.append(emit_csv(summaries, out_dir / "summary.csv"))
    resolved = config.to_dict()
    resolved.pop("output_dir")
    manifest = {"fingerprint": config.fingerprint(), "config": resolved}
    manifest_path = out_dir / "config.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    paths.append(manifest_path)
    return paths
