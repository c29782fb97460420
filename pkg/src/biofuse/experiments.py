"""Experiment controller: single runs, the three sweeps, and report files.

A JSON config describes one experiment (dataset recipe, modality set, task
mode, noise protocol, training hyperparameters, seed list, output folder).
Each seed gets its own dataset, built once and shared by every cell of a
sweep so cells are paired; every random stream is derived from config
numbers, which makes reports byte-identical across repeated runs.

Reports carry two reference columns (`paper_ref_id`, `paper_ref_gender`)
holding the accuracies published for the corresponding full-scale experiment
cell, in percent. They are context only — nothing asserts against them.
"""

import csv
import io
import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    NoiseProtocol,
    SynthConfig,
    apply_noise,
    assemble_dataset,
    build_dataset,
    ingest_sources,
)
from .errors import ConfigError, EmptyInputError, FormatError
from .fusion import (
    MODALITIES,
    TASK_MODES,
    FusedModel,
    ModelConfig,
    TrainConfig,
    evaluate,
    restrict_modalities,
    train,
    validate_modalities,
)

OUT_ENV_VAR = "BIOFUSE_OUT"
REPORT_COLUMNS = (
    "modalities",
    "task",
    "noise",
    "seed",
    "id_acc",
    "gender_acc",
    "paper_ref_id",
    "paper_ref_gender",
)
REPORT_MAGIC = "# biofuse-results v1"

# Published reference accuracies (percent) for each experiment cell; report
# context only, never asserted.
_REF_MODALITY = {
    ("ecg",): (77.49, 91.95),
    ("face",): (76.44, 88.51),
    ("finger",): (83.91, 90.80),
    ("ecg", "face"): (95.98, 93.68),
    ("ecg", "finger"): (94.83, 95.40),
    ("face", "finger"): (96.55, 94.83),
    ("ecg", "face", "finger"): (98.28, 97.70),
}
_REF_TASK = {
    "id_only": (98.28, None),
    "gender_only": (None, 97.70),
    "multitask": (98.97, 96.55),
}
_REF_NOISE = {
    (("ecg", "face"), True): (94.83, 95.02),
    (("ecg", "finger"), True): (93.68, 95.21),
    (("face", "finger"), True): (95.21, 92.91),
    (("ecg", "face", "finger"), True): (98.97, 96.55),
    (("ecg", "face"), False): (100.0, 100.0),
    (("ecg", "finger"), False): (98.85, 96.55),
    (("face", "finger"), False): (100.0, 98.85),
    (("ecg", "face", "finger"), False): (100.0, 99.43),
}

SWEEP_KINDS = ("run", "modalities", "tasks", "noise")

MODALITY_CELLS = (
    ("ecg",),
    ("face",),
    ("finger",),
    ("ecg", "face"),
    ("ecg", "finger"),
    ("face", "finger"),
    ("ecg", "face", "finger"),
)
NOISE_CELLS = (
    ("ecg", "face"),
    ("ecg", "finger"),
    ("face", "finger"),
    ("ecg", "face", "finger"),
)


def reference_for(kind, modalities, task, noisy):
    """(id, gender) reference percentages for a report row, or (None, None)."""
    if kind == "tasks":
        return _REF_TASK.get(task, (None, None))
    if kind == "modalities":
        return _REF_MODALITY.get(modalities, (None, None))
    if kind == "noise":
        return _REF_NOISE.get((modalities, noisy), (None, None))
    # standalone run: most specific grid that matches the cell
    if task != "multitask":
        return _REF_TASK[task] if modalities == MODALITIES else (None, None)
    if noisy:
        return _REF_MODALITY.get(modalities, (None, None))
    return _REF_NOISE.get((modalities, False), (None, None))


# ------------------------------------------------------------ configuration


@dataclass
class DatasetSpec:
    type: str = "synthetic"  # synthetic | ingested
    subjects: int | None = 8
    samples_per_subject: int = 24
    image_size: int = 24
    images_per_source: int = 6  # synthetic only
    seconds: float = 40.0  # synthetic only: raw recording length
    split_ratio: float = 0.8
    seed: int = 0
    root: str | None = None  # ingested only

    def validate(self):
        if self.type not in ("synthetic", "ingested"):
            raise ConfigError(f"dataset.type: expected 'synthetic' or 'ingested', got {self.type!r}")
        if self.type == "synthetic" and self.subjects is None:
            raise ConfigError("dataset.subjects: required for synthetic datasets")
        if self.subjects is not None and self.subjects < 2:
            raise ConfigError(f"dataset.subjects: need at least 2, got {self.subjects}")
        if self.samples_per_subject < 2:
            raise ConfigError(
                f"dataset.samples_per_subject: need at least 2, got {self.samples_per_subject}"
            )
        if self.image_size < 4:
            raise ConfigError(f"dataset.image_size: need at least 4, got {self.image_size}")
        if self.type == "synthetic" and self.images_per_source < 1:
            raise ConfigError(
                f"dataset.images_per_source: need at least 1, got {self.images_per_source}"
            )
        if self.type == "synthetic" and self.seconds < 10.0:
            raise ConfigError(f"dataset.seconds: need at least 10, got {self.seconds}")
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"dataset.split_ratio: must be in (0, 1), got {self.split_ratio}")
        if self.type == "ingested" and not self.root:
            raise ConfigError("dataset.root: required when dataset.type is 'ingested'")
        return self


@dataclass
class NoiseSpec:
    enabled: bool = False
    ecg_sigma: float = 0.1
    finger_fraction: float = 0.05
    face_fraction: float = 0.97

    def protocol(self):
        return NoiseProtocol(
            ecg_sigma=self.ecg_sigma,
            finger_fraction=self.finger_fraction,
            face_fraction=self.face_fraction,
        ).validate()

    def validate(self):
        try:
            self.protocol()
        except Exception as exc:
            raise ConfigError(f"noise: {exc}") from exc
        return self


@dataclass
class TrainSpec:
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    stop_id_accuracy: float | None = None

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"train.epochs: must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size: must be positive, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"train.learning_rate: must be positive, got {self.learning_rate}")
        if self.stop_id_accuracy is not None and not 0.0 < self.stop_id_accuracy <= 1.0:
            raise ConfigError(
                f"train.stop_id_accuracy: must be in (0, 1], got {self.stop_id_accuracy}"
            )
        return self


@dataclass
class ModelSpec:
    face_widths: tuple = (24, 16, 32)
    finger_widths: tuple = (8, 16, 32)
    conv_kernel: int = 3
    ecg_kernel: int = 7
    trunk_width: int = 256

    def validate(self):
        if not self.face_widths:
            raise ConfigError("model.face_widths: must be nonempty")
        if not self.finger_widths:
            raise ConfigError("model.finger_widths: must be nonempty")
        for k, label in ((self.conv_kernel, "conv_kernel"), (self.ecg_kernel, "ecg_kernel")):
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"model.{label}: must be odd and positive, got {k}")
        if self.trunk_width < 1:
            raise ConfigError(f"model.trunk_width: must be positive, got {self.trunk_width}")
        return self


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    modalities: tuple = MODALITIES
    task_mode: str = "multitask"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    train: TrainSpec = field(default_factory=TrainSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    seeds: tuple = (1, 2, 3)
    out_dir: str = "results"

    def validate(self):
        self.dataset.validate()
        try:
            self.modalities = validate_modalities(self.modalities)
        except Exception as exc:
            raise ConfigError(f"modalities: {exc}") from exc
        if self.task_mode not in TASK_MODES:
            raise ConfigError(f"task_mode: expected one of {TASK_MODES}, got {self.task_mode!r}")
        self.noise.validate()
        self.train.validate()
        self.model.validate()
        if not self.seeds:
            raise ConfigError("seeds: must be nonempty")
        if any(not isinstance(s, int) or isinstance(s, bool) or s < 0 for s in self.seeds):
            raise ConfigError(f"seeds: must be non-negative integers, got {list(self.seeds)}")
        if not self.out_dir:
            raise ConfigError("out_dir: must be nonempty")
        return self


def _build_section(cls, doc, path):
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: expected an object, got {type(doc).__name__}")
    known = {f for f in cls.__dataclass_fields__}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}: unknown field")
    kwargs = {}
    for key, value in doc.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(doc):
    """Build and validate an ExperimentConfig, naming any offending field."""
    if not isinstance(doc, dict):
        raise ConfigError(f"config: expected a JSON object, got {type(doc).__name__}")
    known = {f for f in ExperimentConfig.__dataclass_fields__}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown field")
    kwargs = {}
    for section, cls in (
        ("dataset", DatasetSpec),
        ("noise", NoiseSpec),
        ("train", TrainSpec),
        ("model", ModelSpec),
    ):
        if section in doc:
            kwargs[section] = _build_section(cls, doc[section], section)
    for key in ("modalities", "task_mode", "seeds", "out_dir"):
        if key in doc:
            value = doc[key]
            if isinstance(value, list):
                value = tuple(value)
            kwargs[key] = value
    return ExperimentConfig(**kwargs).validate()


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(doc)


def resolve_out_dir(config):
    """Output folder, honoring the BIOFUSE_OUT root override."""
    root = os.environ.get(OUT_ENV_VAR)
    if root:
        return Path(root) / config.out_dir
    return Path(config.out_dir)


# ------------------------------------------------------------------ results


@dataclass
class ResultRow:
    modalities: tuple
    task: str
    noisy: bool
    seed: int
    id_accuracy: float | None
    gender_accuracy: float | None
    train_time: float | None = None
    paper_ref_id: float | None = None
    paper_ref_gender: float | None = None

    def validate(self):
        for label, acc in (("id", self.id_accuracy), ("gender", self.gender_accuracy)):
            if acc is not None and not 0.0 <= acc <= 1.0:
                raise ConfigError(f"{label} accuracy out of [0, 1]: {acc}")
        return self

    def cell(self):
        return (self.modalities, self.task, self.noisy)

    def reported(self):
        """The serialized field values, as written to report files."""
        return (
            "+".join(self.modalities),
            self.task,
            "noisy" if self.noisy else "clean",
            str(self.seed),
            _fmt_acc(self.id_accuracy),
            _fmt_acc(self.gender_accuracy),
            _fmt_ref(self.paper_ref_id),
            _fmt_ref(self.paper_ref_gender),
        )


@dataclass
class ResultsTable:
    kind: str
    rows: list

    def validate(self):
        if self.kind not in SWEEP_KINDS:
            raise ConfigError(f"unknown results kind {self.kind!r}")
        if not self.rows:
            raise EmptyInputError("results table has no rows")
        seen = set()
        for row in self.rows:
            row.validate()
            key = row.cell() + (row.seed,)
            if key in seen:
                raise ConfigError(f"duplicate row for cell {key}")
            seen.add(key)
        return self

    def rows_for(self, modalities=None, task=None, noisy=None, seed=None):
        out = []
        for row in self.rows:
            if modalities is not None and row.modalities != tuple(modalities):
                continue
            if task is not None and row.task != task:
                continue
            if noisy is not None and row.noisy != noisy:
                continue
            if seed is not None and row.seed != seed:
                continue
            out.append(row)
        return out

    def mean_accuracy(self, which="id", **filters):
        """Seed-averaged accuracy for one cell; `which` is 'id' or 'gender'."""
        rows = self.rows_for(**filters)
        values = [
            row.id_accuracy if which == "id" else row.gender_accuracy for row in rows
        ]
        values = [v for v in values if v is not None]
        if not values:
            raise EmptyInputError(f"no rows match {filters}")
        return float(np.mean(values))


def _fmt_acc(value):
    return "" if value is None else f"{value:.4f}"


def _fmt_ref(value):
    return "" if value is None else f"{value:.2f}"


# ------------------------------------------------------------------ running


def _build_split(config, seed):
    """One dataset per (config, seed); every cell of a sweep shares it."""
    ds = config.dataset
    rng = np.random.default_rng([ds.seed, seed, 0])
    if ds.type == "synthetic":
        synth = SynthConfig(
            n_subjects=ds.subjects,
            samples_per_subject=ds.samples_per_subject,
            image_size=ds.image_size,
            images_per_source=ds.images_per_source,
            seconds=ds.seconds,
            split_ratio=ds.split_ratio,
        )
        return build_dataset(synth, rng)
    faces, ecgs, fingers = ingest_sources(ds.root)
    return assemble_dataset(
        faces,
        ecgs,
        fingers,
        ds.subjects,
        ds.samples_per_subject,
        ds.image_size,
        ds.split_ratio,
        rng,
    )


def _noisy_samples(split, config, seed):
    protocol = config.noise.protocol()
    rng = np.random.default_rng([config.dataset.seed, seed, 1])
    return (
        apply_noise(split.train, protocol, rng),
        apply_noise(split.test, protocol, rng),
    )


def _run_cell(config, kind, split_samples, n_subjects, modalities, task, noisy, seed):
    train_samples = restrict_modalities(split_samples[0], modalities)
    test_samples = restrict_modalities(split_samples[1], modalities)
    model = FusedModel(
        ModelConfig(
            n_subjects=n_subjects,
            image_size=config.dataset.image_size,
            face_widths=tuple(config.model.face_widths),
            finger_widths=tuple(config.model.finger_widths),
            conv_kernel=config.model.conv_kernel,
            ecg_kernel=config.model.ecg_kernel,
            trunk_width=config.model.trunk_width,
            task_mode=task,
            seed=seed,
        )
    )
    spec = config.train
    started = time.perf_counter()
    train(
        model,
        train_samples,
        TrainConfig(
            epochs=spec.epochs,
            batch_size=spec.batch_size,
            learning_rate=spec.learning_rate,
            seed=seed,
            stop_id_accuracy=spec.stop_id_accuracy,
        ),
    )
    elapsed = time.perf_counter() - started
    scores = evaluate(model, test_samples)
    ref_id, ref_gender = reference_for(kind, modalities, task, noisy)
    return ResultRow(
        modalities=modalities,
        task=task,
        noisy=noisy,
        seed=seed,
        id_accuracy=scores["id_accuracy"] if task != "gender_only" else None,
        gender_accuracy=scores["gender_accuracy"] if task != "id_only" else None,
        train_time=elapsed,
        paper_ref_id=ref_id,
        paper_ref_gender=ref_gender,
    ).validate()


def _run_grid(config, kind, cells):
    """cells: ordered (modalities, task, noisy) triples; seeds vary fastest
    in the dataset loop but rows come out cell-major for stable reports."""
    config.validate()
    by_key = {}
    for seed in config.seeds:
        split = _build_split(config, seed)
        n_subjects = len(split.subjects)
        clean = (split.train, split.test)
        noisy_pair = None
        for modalities, task, noisy in cells:
            if noisy:
                if noisy_pair is None:
                    noisy_pair = _noisy_samples(split, config, seed)
                samples = noisy_pair
            else:
                samples = clean
            by_key[(modalities, task, noisy, seed)] = _run_cell(
                config, kind, samples, n_subjects, modalities, task, noisy, seed
            )
    rows = [
        by_key[(modalities, task, noisy, seed)]
        for modalities, task, noisy in cells
        for seed in config.seeds
    ]
    return ResultsTable(kind=kind, rows=rows).validate()


def run(config):
    """Train/evaluate the single configured cell, one row per seed."""
    cells = [(config.modalities, config.task_mode, config.noise.enabled)]
    table = _run_grid(config, "run", cells)
    write_reports(table, resolve_out_dir(config))
    return table


def sweep_modalities(config):
    """All 7 modality subsets, multitask, with the noise protocol applied."""
    cells = [(m, "multitask", True) for m in MODALITY_CELLS]
    table = _run_grid(config, "modalities", cells)
    write_reports(table, resolve_out_dir(config))
    return table


def sweep_tasks(config):
    """id_only / gender_only / multitask on the full three-modality set."""
    order = ("id_only", "gender_only", "multitask")
    cells = [(MODALITIES, t, config.noise.enabled) for t in order]
    table = _run_grid(config, "tasks", cells)
    write_reports(table, resolve_out_dir(config))
    return table


def sweep_noise(config):
    """The four >=2-modality combinations, noisy then clean, multitask."""
    cells = [(m, "multitask", True) for m in NOISE_CELLS] + [
        (m, "multitask", False) for m in NOISE_CELLS
    ]
    table = _run_grid(config, "noise", cells)
    write_reports(table, resolve_out_dir(config))
    return table


# ------------------------------------------------------------------ reports


def render_report(table, fmt="csv"):
    """Serialize a table; `fmt` is 'csv' or 'text' (aligned columns)."""
    table.validate()
    header = f"{REPORT_MAGIC} kind={table.kind}\n"
    cells = [list(REPORT_COLUMNS)] + [list(row.reported()) for row in table.rows]
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows(cells)
        return header + buf.getvalue()
    if fmt == "text":
        for line in cells[1:]:  # empty-marked cells
            for i, value in enumerate(line):
                line[i] = value or "-"
        widths = [max(len(line[i]) for line in cells) for i in range(len(REPORT_COLUMNS))]
        out = [header.rstrip("\n")]
        for line in cells:
            out.append("  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip())
        return "\n".join(out) + "\n"
    raise ConfigError(f"unknown report format {fmt!r}")


def write_report(table, path, fmt=None):
    path = Path(path)
    if fmt is None:
        fmt = "text" if path.suffix == ".txt" else "csv"
    rendered = render_report(table, fmt)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rendered)
    return path


def write_reports(table, out_dir):
    """CSV + aligned-text reports named after the sweep kind."""
    out_dir = Path(out_dir)
    return (
        write_report(table, out_dir / f"{table.kind}.csv", "csv"),
        write_report(table, out_dir / f"{table.kind}.txt", "text"),
    )


def _parse_value(raw):
    if raw in ("", "-"):
        return None
    return float(raw)


def parse_report(path):
    """Read back a report file (either format) into a ResultsTable."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read report ({exc})") from exc
    if not lines or not lines[0].startswith(REPORT_MAGIC):
        raise FormatError(f"{path}:1: not a results report (missing `{REPORT_MAGIC}`)")
    kind = None
    for token in lines[0].split():
        if token.startswith("kind="):
            kind = token[len("kind="):]
    if kind not in SWEEP_KINDS:
        raise FormatError(f"{path}:1: unknown or missing kind")
    body = [line for line in lines[1:] if line.strip()]
    if not body:
        raise FormatError(f"{path}: report has no rows")
    is_csv = "," in body[0]
    records = list(csv.reader(body)) if is_csv else [line.split() for line in body]
    if tuple(records[0]) != REPORT_COLUMNS:
        raise FormatError(f"{path}:2: unexpected column header {records[0]}")
    rows = []
    for lineno, rec in enumerate(records[1:], start=3):
        if len(rec) != len(REPORT_COLUMNS):
            raise FormatError(f"{path}:{lineno}: expected {len(REPORT_COLUMNS)} fields")
        if not is_csv:
            rec = ["" if v == "-" else v for v in rec]
        try:
            rows.append(
                ResultRow(
                    modalities=validate_modalities(rec[0].split("+")),
                    task=rec[1],
                    noisy={"noisy": True, "clean": False}[rec[2]],
                    seed=int(rec[3]),
                    id_accuracy=_parse_value(rec[4]),
                    gender_accuracy=_parse_value(rec[5]),
                    paper_ref_id=_parse_value(rec[6]),
                    paper_ref_gender=_parse_value(rec[7]),
                )
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}:{lineno}: bad field ({exc})") from exc
    return ResultsTable(kind=kind, rows=rows).validate()
