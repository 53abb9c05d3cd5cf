"""Experiment harness: the four training configurations, run orchestration,
paired comparisons, and report emission.

Configurations
--------------
``S+No-FT``   train on the source corpus only, evaluate on the target test set
``S+FT``      source pretraining, then supervised fine-tuning on the label budget
``SSDL``      semi-supervised training on the target from a fresh init
``SSDL+FT``   source pretraining, then semi-supervised training on the target

Each subset index derives its split/validation/budget/init seeds from the
master seed and the subset index alone, never from the configuration, so runs
of different configurations are paired subset-by-subset.
"""

from __future__ import annotations

import copy
import csv
import io
import json
from dataclasses import dataclass, field, fields

import numpy as np

from pathlib import Path

from .data import (
    ManifestRecord,
    binary_subset,
    derived_seed,
    load_manifest,
    patient_disjoint_split,
    sample_label_budget,
)
from .errors import ConfigurationError, ContractError, DataError
from .metrics import METRIC_NAMES, MetricReport, aggregate, metric_records
from .mixmatch import MixMatchConfig
from .model import ClassifierConfig, OptimState, init_model
from .preprocess import augment, read_image
from .stats import wilcoxon_signed_rank
from .training import evaluate_params, train_ssdl, train_supervised

CONFIGURATIONS = ("S+No-FT", "S+FT", "SSDL", "SSDL+FT")

SIGNIFICANCE_LEVEL = 0.1

# seed-derivation roles; split/val/budget/init must not depend on configuration
_R_SPLIT = 1
_R_VAL = 2
_R_BUDGET = 3
_R_INIT = 4
_R_PRETRAIN = 5
_R_TUNE = 6
_R_SOURCE_VAL = 7

REPORT_FORMAT = "mammossl-report"
REPORT_VERSION = 1


@dataclass
class ImageDataset:
    """Manifest records plus in-memory images keyed by image_path."""

    records: list[ManifestRecord]
    images: dict[str, np.ndarray]


def load_image_dataset(manifest_path, images_dir=None) -> ImageDataset:
    """Load a manifest and its images.

    Relative image paths resolve against ``images_dir`` when given, else
    against the manifest's own directory.
    """
    records = load_manifest(manifest_path)
    base = Path(images_dir) if images_dir is not None else Path(manifest_path).parent
    images = {}
    for rec in records:
        p = Path(rec.image_path)
        if not p.is_absolute():
            p = base / p
        images[rec.image_path] = read_image(p)
    return ImageDataset(records=records, images=images)


@dataclass
class ExperimentConfig:
    configuration: str
    n_labeled: int = 20
    negative_fraction: float = 0.95
    n_subsets: int = 10
    train_fraction: float = 0.7
    val_fraction: float = 0.15
    val_on_test: bool = False
    epochs: int = 50
    pretrain_epochs: int = 50
    master_seed: int = 0
    learning_rate: float = 0.00002
    weight_decay: float = 0.001
    input_height: int = 24
    input_width: int = 24
    hidden_sizes: tuple[int, ...] = (32,)
    num_classes: int = 2
    init_scale: float = 0.05
    k: int = 2
    temperature: float = 0.25
    alpha: float = 0.75
    gamma: float = 200.0
    rampup_denominator: float = 3000.0
    pbc_enabled: bool = True
    augment_max_rotation_deg: float = 10.0
    augment_flip_probability: float = 0.5
    target_manifest: str | None = None
    target_images: str | None = None
    source_manifest: str | None = None
    source_images: str | None = None

    def __post_init__(self):
        if self.configuration not in CONFIGURATIONS:
            raise ConfigurationError(f"configuration must be one of {CONFIGURATIONS}, got {self.configuration!r}")
        if self.n_subsets < 1:
            raise ConfigurationError("n_subsets must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigurationError("val_fraction must be in (0, 1)")
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)

    @property
    def needs_source(self) -> bool:
        return self.configuration != "SSDL"

    def classifier_config(self, seed: int) -> ClassifierConfig:
        return ClassifierConfig(
            input_height=self.input_height,
            input_width=self.input_width,
            hidden_sizes=self.hidden_sizes,
            num_classes=self.num_classes,
            init_scale=self.init_scale,
            seed=seed,
        )

    def mixmatch_config(self) -> MixMatchConfig:
        return MixMatchConfig(
            k=self.k,
            temperature=self.temperature,
            alpha=self.alpha,
            gamma=self.gamma,
            rampup_denominator=self.rampup_denominator,
            pbc_enabled=self.pbc_enabled,
        )

    def fresh_optim(self) -> OptimState:
        return OptimState(learning_rate=self.learning_rate, weight_decay=self.weight_decay)

    def augment_fn(self):
        rot = self.augment_max_rotation_deg
        flip = self.augment_flip_probability
        return lambda img, rng: augment(img, rng, max_rotation_deg=rot, flip_probability=flip)


_CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def load_experiment_config(path) -> ExperimentConfig:
    """Parse the flat key-value (JSON object) experiment config file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{path}: config must be a flat JSON object")
    unknown = sorted(set(doc) - _CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(f"{path}: unknown config keys {unknown}")
    if "configuration" not in doc:
        raise ConfigurationError(f"{path}: missing required key 'configuration'")
    return ExperimentConfig(**doc)


@dataclass
class RunResult:
    configuration: str
    source: str
    n_labeled: int
    master_seed: int
    reports: list[MetricReport]
    best_epochs: list[int]

    def metric_values(self, metric: str) -> list[float]:
        if metric not in METRIC_NAMES:
            raise ContractError(f"unknown metric {metric!r}")
        return [getattr(r, metric) for r in self.reports]

    def aggregate(self) -> dict[str, tuple[float, float]]:
        return aggregate(self.reports)

    def to_dict(self) -> dict:
        return {
            "configuration": self.configuration,
            "source": self.source,
            "n_labeled": self.n_labeled,
            "master_seed": self.master_seed,
            "best_epochs": list(self.best_epochs),
            "reports": [
                {**r.as_dict(), "degenerate": sorted(r.degenerate)} for r in self.reports
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunResult":
        reports = [
            MetricReport(
                **{name: entry[name] for name in METRIC_NAMES},
                degenerate=frozenset(entry.get("degenerate", ())),
            )
            for entry in doc["reports"]
        ]
        return cls(
            configuration=doc["configuration"],
            source=doc.get("source", "none"),
            n_labeled=int(doc["n_labeled"]),
            master_seed=int(doc.get("master_seed", 0)),
            reports=reports,
            best_epochs=[int(e) for e in doc.get("best_epochs", [])],
        )


def _stack(dataset: ImageDataset, paths: list[str], labels_by_path: dict[str, int]):
    try:
        images = np.stack([np.asarray(dataset.images[p], dtype=np.float64) for p in paths])
    except KeyError as exc:
        raise DataError(f"manifest references missing image {exc.args[0]!r}") from exc
    labels = np.asarray([labels_by_path[p] for p in paths])
    return images, labels


def _stratified_holdout(paths: list[str], labels_by_path: dict[str, int], fraction: float, seed: int):
    """Split paths into (rest, held) keeping >= 1 image per class in held."""
    rng = np.random.default_rng(seed)
    held: set[str] = set()
    for cls in (0, 1):
        pool = [p for p in paths if labels_by_path[p] == cls]
        if not pool:
            raise DataError(f"training side has no class-{cls} images to hold out")
        n_take = min(len(pool) - 0, max(1, round(fraction * len(pool))))
        if n_take >= len(pool):
            raise DataError(f"holdout would consume every class-{cls} training image")
        held.update(pool[i] for i in rng.choice(len(pool), size=n_take, replace=False))
    rest = [p for p in paths if p not in held]
    return rest, [p for p in paths if p in held]


def _source_phase(config: ExperimentConfig, source: ImageDataset, subset: int, log_fn):
    pairs = binary_subset(source.records)
    labels_by_path = {r.image_path: lbl for r, lbl in pairs}
    paths = [r.image_path for r, _ in pairs]
    train_paths, val_paths = _stratified_holdout(paths, labels_by_path, config.val_fraction, derived_seed(config.master_seed, subset, _R_SOURCE_VAL))
    train_images, train_labels = _stack(source, train_paths, labels_by_path)
    val_images, val_labels = _stack(source, val_paths, labels_by_path)
    params = init_model(config.classifier_config(derived_seed(config.master_seed, subset, _R_INIT) % (2**31)))
    outcome = train_supervised(
        params,
        train_images,
        train_labels,
        config.fresh_optim(),
        config.pretrain_epochs,
        val_images,
        val_labels,
        seed=derived_seed(config.master_seed, subset, _R_PRETRAIN),
        augment_fn=config.augment_fn(),
        log_fn=log_fn,
    )
    return outcome


def run_configuration(config: ExperimentConfig, target: ImageDataset, source: ImageDataset | None = None, log_fn=None, params_sink=None) -> RunResult:
    """Run one configuration over ``n_subsets`` paired subset indices.

    ``target``/``source`` are manifest records plus in-memory images. The
    split, validation holdout, and label budget of subset ``i`` depend only on
    (master_seed, i); the S+No-FT configuration ignores the label budget
    entirely, so its results are identical across ``n_labeled`` values.
    """
    if config.needs_source and source is None:
        raise ConfigurationError(f"configuration {config.configuration} requires a source dataset")

    target_pairs = binary_subset(target.records)
    labels_by_path = {r.image_path: lbl for r, lbl in target_pairs}

    reports: list[MetricReport] = []
    best_epochs: list[int] = []
    for subset in range(config.n_subsets):
        split = patient_disjoint_split(
            target_pairs,
            train_fraction=config.train_fraction,
            seed=derived_seed(config.master_seed, subset, _R_SPLIT),
        )
        test_images, test_labels = _stack(target, split.test_paths, labels_by_path)

        if config.val_on_test:
            pool_paths = list(split.train_paths)
            val_images, val_labels = test_images, test_labels
        else:
            pool_paths, val_paths = _stratified_holdout(
                split.train_paths, labels_by_path, config.val_fraction, derived_seed(config.master_seed, subset, _R_VAL)
            )
            val_images, val_labels = _stack(target, val_paths, labels_by_path)

        if config.configuration == "S+No-FT":
            outcome = _source_phase(config, source, subset, log_fn)
        else:
            pool_pairs = [(r, labels_by_path[r.image_path]) for r in (rec for rec, _ in target_pairs) if r.image_path in set(pool_paths)]
            budget = sample_label_budget(
                pool_pairs,
                config.n_labeled,
                negative_fraction=config.negative_fraction,
                seed=derived_seed(config.master_seed, subset, _R_BUDGET),
            )
            labeled_images, labeled_labels = _stack(target, budget.labeled_paths, labels_by_path)
            tune_seed = derived_seed(config.master_seed, subset, _R_TUNE)

            if config.configuration == "S+FT":
                pre = _source_phase(config, source, subset, log_fn)
                outcome = train_supervised(
                    copy.deepcopy(pre.params),
                    labeled_images,
                    labeled_labels,
                    config.fresh_optim(),
                    config.epochs,
                    val_images,
                    val_labels,
                    seed=tune_seed,
                    augment_fn=config.augment_fn(),
                    log_fn=log_fn,
                )
            else:
                unlabeled_images = np.stack([np.asarray(target.images[p], dtype=np.float64) for p in budget.unlabeled_paths])
                if config.configuration == "SSDL":
                    start_params = init_model(config.classifier_config(derived_seed(config.master_seed, subset, _R_INIT) % (2**31)))
                else:  # SSDL+FT
                    start_params = copy.deepcopy(_source_phase(config, source, subset, log_fn).params)
                outcome = train_ssdl(
                    start_params,
                    labeled_images,
                    labeled_labels,
                    unlabeled_images,
                    config.fresh_optim(),
                    config.mixmatch_config(),
                    config.epochs,
                    val_images,
                    val_labels,
                    seed=tune_seed,
                    augment_fn=config.augment_fn(),
                    log_fn=log_fn,
                )

        reports.append(evaluate_params(outcome.params, test_images, test_labels))
        best_epochs.append(outcome.best_epoch)
        if params_sink is not None:
            params_sink(subset, outcome.params)

    return RunResult(
        configuration=config.configuration,
        source="none" if source is None else "source",
        n_labeled=config.n_labeled,
        master_seed=config.master_seed,
        reports=reports,
        best_epochs=best_epochs,
    )


@dataclass
class ComparisonRecord:
    config_a: str
    config_b: str
    metric: str
    n_labeled: int
    alternative: str
    w_statistic: float
    p_value: float
    n_effective: int
    method: str

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL

    def to_dict(self) -> dict:
        return {
            "config_a": self.config_a,
            "config_b": self.config_b,
            "metric": self.metric,
            "n_labeled": self.n_labeled,
            "alternative": self.alternative,
            "w_statistic": self.w_statistic,
            "p_value": self.p_value,
            "n_effective": self.n_effective,
            "method": self.method,
            "significant": self.significant,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ComparisonRecord":
        return cls(
            config_a=doc["config_a"],
            config_b=doc["config_b"],
            metric=doc["metric"],
            n_labeled=int(doc["n_labeled"]),
            alternative=doc["alternative"],
            w_statistic=float(doc["w_statistic"]),
            p_value=float(doc["p_value"]),
            n_effective=int(doc["n_effective"]),
            method=doc["method"],
        )


def compare_runs(a: RunResult, b: RunResult, metric: str = "g_mean", alternative: str = "greater") -> ComparisonRecord:
    """Paired signed-rank comparison of two runs' per-subset metric values."""
    if len(a.reports) != len(b.reports):
        raise ContractError("runs must cover the same number of subsets")
    if a.n_labeled != b.n_labeled and "S+No-FT" not in (a.configuration, b.configuration):
        raise ContractError("paired runs must share n_labeled")
    result = wilcoxon_signed_rank(a.metric_values(metric), b.metric_values(metric), alternative=alternative)
    return ComparisonRecord(
        config_a=a.configuration,
        config_b=b.configuration,
        metric=metric,
        n_labeled=a.n_labeled,
        alternative=alternative,
        w_statistic=result.w_statistic,
        p_value=result.p_value,
        n_effective=result.n_effective,
        method=result.method,
    )


def _comparison_mark(c: ComparisonRecord) -> str:
    symbol = {"greater": ">", "less": "<", "two-sided": "!="}[c.alternative]
    return f"{c.config_a}{symbol}{c.config_b} (p={format(c.p_value, '.6g')})"


def render_report_csv(runs: list[RunResult], comparisons: list[ComparisonRecord]) -> str:
    """Wide CSV: one row per (n_labels, metric), per-config mean/std columns."""
    configs = [c for c in CONFIGURATIONS if any(r.configuration == c for r in runs)]
    n_values = sorted({r.n_labeled for r in runs})
    by_key = {(r.configuration, r.n_labeled): r.aggregate() for r in runs}

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["n_labels", "metric"]
    for c in configs:
        header.extend([f"{c} mean", f"{c} std"])
    header.append("significant")
    writer.writerow(header)
    for n in n_values:
        for metric in METRIC_NAMES:
            row = [str(n), metric]
            for c in configs:
                agg = by_key.get((c, n))
                if agg is None:
                    row.extend(["", ""])
                else:
                    row.extend([repr(agg[metric][0]), repr(agg[metric][1])])
            marks = [
                _comparison_mark(cmp)
                for cmp in comparisons
                if cmp.metric == metric and cmp.n_labeled == n and cmp.significant
            ]
            row.append("; ".join(marks))
            writer.writerow(row)
    return buf.getvalue()


def emit_report(runs: list[RunResult], comparisons: list[ComparisonRecord], path_prefix: str) -> tuple[str, str]:
    """Write ``<prefix>.json`` and ``<prefix>.csv``; returns both paths.

    Emission is deterministic: re-emitting from the saved JSON reproduces the
    CSV byte for byte.
    """
    records = []
    for r in runs:
        records.extend(metric_records(r.configuration, r.source, r.n_labeled, r.aggregate()))
    doc = {
        "format": REPORT_FORMAT,
        "version": REPORT_VERSION,
        "runs": [r.to_dict() for r in runs],
        "comparisons": [c.to_dict() for c in comparisons],
        "records": records,
    }
    json_path = f"{path_prefix}.json"
    csv_path = f"{path_prefix}.csv"
    with open(json_path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(csv_path, "w") as fh:
        fh.write(render_report_csv(runs, comparisons))
    return csv_path, json_path


def load_report(path) -> tuple[list[RunResult], list[ComparisonRecord]]:
    """Read back a report JSON for re-emission or further comparison."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {path}: {exc}") from exc
    if doc.get("format") != REPORT_FORMAT:
        raise DataError(f"{path} is not a report file")
    runs = [RunResult.from_dict(d) for d in doc.get("runs", [])]
    comparisons = [ComparisonRecord.from_dict(d) for d in doc.get("comparisons", [])]
    return runs, comparisons
