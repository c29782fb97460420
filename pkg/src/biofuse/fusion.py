"""Masked feature-level fusion model, training loop, evaluation, score fusion.

One network owns an extractor per modality (heartbeat filter bank for ECG,
conv stacks for face and fingerprint), L2-normalizes each 300-wide feature,
batch-normalizes it with absent samples masked out, concatenates, and feeds
a shared trunk with a person-ID head and a gender head. Absent modalities
enter the trunk as exact zeros and contribute exactly zero gradient to
their extractors.
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    EmptyInputError,
    FormatError,
    MaskExhaustionError,
    ParameterError,
    TrainingDivergedError,
)
from .numcore import (
    Adam,
    Conv1d,
    Dense,
    MaskedBatchNorm,
    MaxPoolTime,
    Relu,
    binary_cross_entropy,
    joint_loss,
    load_arrays,
    require_some_modality,
    save_arrays,
    softmax_cross_entropy,
)
from .vision import ConvStack

MODALITIES = ("ecg", "face", "finger")
TASK_MODES = ("multitask", "id_only", "gender_only")
FEATURE_DIM = 300  # pooled heartbeat width; every modality projects to this
ECG_GROUP = 3      # heartbeats per ECG input


@dataclass
class MultimodalSample:
    """One training/eval sample; a None modality is absent (masked)."""

    subject_index: int
    gender_label: int
    ecg: np.ndarray | None = None     # [3, 300]
    face: np.ndarray | None = None    # [h, w]
    finger: np.ndarray | None = None  # [h, w]

    def present(self):
        """The ModalityMask: tuple of modality names carrying data."""
        return tuple(m for m in MODALITIES if getattr(self, m) is not None)


def restrict_modalities(samples, keep):
    """Copies of ``samples`` with every modality outside ``keep`` masked out."""
    keep = validate_modalities(keep)
    out = []
    for s in samples:
        out.append(
            MultimodalSample(
                subject_index=s.subject_index,
                gender_label=s.gender_label,
                ecg=s.ecg if "ecg" in keep else None,
                face=s.face if "face" in keep else None,
                finger=s.finger if "finger" in keep else None,
            )
        )
    return out


def validate_modalities(names):
    names = tuple(names)
    if not names:
        raise ParameterError("need at least one modality")
    for n in names:
        if n not in MODALITIES:
            raise ParameterError(f"unknown modality {n!r}, expected subset of {MODALITIES}")
    if len(set(names)) != len(names):
        raise ParameterError(f"duplicate modality in {names}")
    return tuple(m for m in MODALITIES if m in names)  # canonical order


def normalize_feature(values):
    """L2-normalize a feature vector; the zero vector passes through unchanged."""
    v = np.asarray(values, dtype=np.float64)
    n = np.linalg.norm(v)
    return v.copy() if n == 0.0 else v / n


def _l2norm_rows(x):
    norms = np.sqrt((x * x).sum(axis=1, keepdims=True))
    safe = np.where(norms > 0.0, norms, 1.0)
    y = x / safe
    return y, (y, safe)


def _l2norm_rows_backward(g, cache):
    y, safe = cache
    dot = (g * y).sum(axis=1, keepdims=True)
    return (g - y * dot) / safe


@dataclass
class ModelConfig:
    """Architecture + task switches; everything needed to rebuild a model."""

    n_subjects: int
    image_size: int = 64
    # the face extractor leans on its pointwise tonal bank, so it gets a
    # wide first block; the fingerprint extractor reads ridge geometry and
    # only picks up noise from extra tonal channels
    face_widths: tuple = (24, 16, 32)
    finger_widths: tuple = (8, 16, 32)
    conv_kernel: int = 3
    ecg_kernel: int = 7
    trunk_width: int = 256
    task_mode: str = "multitask"
    seed: int = 0

    def validate(self):
        if self.n_subjects < 2:
            raise ConfigError(f"need at least 2 subjects, got {self.n_subjects}")
        if self.image_size < 4:
            raise ConfigError(f"image_size {self.image_size} too small")
        if self.task_mode not in TASK_MODES:
            raise ConfigError(f"task_mode must be one of {TASK_MODES}, got {self.task_mode!r}")
        if self.trunk_width < 1:
            raise ConfigError(f"trunk_width must be positive, got {self.trunk_width}")
        if not self.face_widths or not self.finger_widths:
            raise ConfigError("conv widths must be non-empty")
        return self


@dataclass
class Batch:
    ecg: np.ndarray
    face: np.ndarray
    finger: np.ndarray
    present: dict
    id_labels: np.ndarray
    gender_labels: np.ndarray

    @property
    def size(self):
        return self.id_labels.shape[0]


def collate(samples, image_size):
    """Stack samples into dense arrays with zero placeholders for absences."""
    if not samples:
        raise EmptyInputError("empty batch")
    n = len(samples)
    ecg = np.zeros((n, ECG_GROUP, FEATURE_DIM))
    face = np.zeros((n, image_size, image_size))
    finger = np.zeros((n, image_size, image_size))
    present = {m: np.zeros(n, dtype=bool) for m in MODALITIES}
    for i, s in enumerate(samples):
        if s.ecg is not None:
            if s.ecg.shape != (ECG_GROUP, FEATURE_DIM):
                raise DimensionError(
                    f"sample {i}: ecg shape {s.ecg.shape}, expected {(ECG_GROUP, FEATURE_DIM)}"
                )
            ecg[i] = s.ecg
            present["ecg"][i] = True
        for name, store in (("face", face), ("finger", finger)):
            img = getattr(s, name)
            if img is not None:
                if img.shape != (image_size, image_size):
                    raise DimensionError(
                        f"sample {i}: {name} shape {img.shape}, expected "
                        f"{(image_size, image_size)}"
                    )
                store[i] = img
                present[name][i] = True
    ids = np.array([s.subject_index for s in samples], dtype=np.int64)
    genders = np.array([s.gender_label for s in samples], dtype=np.int64)
    return Batch(ecg, face, finger, present, ids, genders)


class FusedModel:
    """The three-extractor fusion network with ID and gender heads."""

    def __init__(self, config):
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)

        self.ecg_conv = Conv1d(FEATURE_DIM, config.ecg_kernel, rng, name="ecg.conv")
        self.ecg_relu = Relu()
        self.ecg_pool = MaxPoolTime()

        self.face_stack = ConvStack(rng, config.face_widths, config.conv_kernel, name="face.conv")
        self.face_proj = Dense(self.face_stack.out_dim, FEATURE_DIM, rng, name="face.proj")
        self.finger_stack = ConvStack(
            rng, config.finger_widths, config.conv_kernel, name="finger.conv"
        )
        self.finger_proj = Dense(self.finger_stack.out_dim, FEATURE_DIM, rng, name="finger.proj")

        self.norms = {m: MaskedBatchNorm(FEATURE_DIM, name=f"{m}.bn") for m in MODALITIES}

        fused = FEATURE_DIM * len(MODALITIES)
        self.trunk1 = Dense(fused, config.trunk_width, rng, name="trunk1")
        self.trunk_relu1 = Relu()
        self.trunk2 = Dense(config.trunk_width, config.trunk_width, rng, name="trunk2")
        self.trunk_relu2 = Relu()
        self.id_head = Dense(config.trunk_width, config.n_subjects, rng, name="id_head")
        self.gender_head = Dense(config.trunk_width, 1, rng, name="gender_head")

        self._cache = None

    # ------------------------------------------------------------- plumbing

    def _extractors(self):
        return {
            "ecg": [self.ecg_conv],
            "face": [self.face_stack, self.face_proj],
            "finger": [self.finger_stack, self.finger_proj],
        }

    def parameters(self):
        out = list(self.ecg_conv.params())
        out += self.face_stack.params() + self.face_proj.params()
        out += self.finger_stack.params() + self.finger_proj.params()
        for m in MODALITIES:
            out += self.norms[m].params()
        out += self.trunk1.params() + self.trunk2.params()
        out += self.id_head.params() + self.gender_head.params()
        return out

    # -------------------------------------------------------------- forward

    def _extract(self, batch, modality):
        pres = batch.present[modality]
        feat = np.zeros((batch.size, FEATURE_DIM))
        if pres.any():
            if modality == "ecg":
                h = self.ecg_conv.forward(batch.ecg[pres])
                h = self.ecg_relu.forward(h)
                feat[pres] = self.ecg_pool.forward(h)
            elif modality == "face":
                emb = self.face_stack.forward(batch.face[pres])
                feat[pres] = self.face_proj.forward(emb)
            else:
                emb = self.finger_stack.forward(batch.finger[pres])
                feat[pres] = self.finger_proj.forward(emb)
        return feat

    def forward(self, batch, train):
        require_some_modality(batch.present.values())
        caches = {}
        blocks = []
        for m in MODALITIES:
            feat = self._extract(batch, m)
            normed, cache = _l2norm_rows(feat)
            caches[m] = cache
            blocks.append(self.norms[m].forward(normed, batch.present[m], train))
        fused = np.concatenate(blocks, axis=1)
        h = self.trunk_relu1.forward(self.trunk1.forward(fused))
        h = self.trunk_relu2.forward(self.trunk2.forward(h))
        self._cache = (batch, caches)
        return self.id_head.forward(h), self.gender_head.forward(h)

    # ------------------------------------------------------------- backward

    def backward(self, id_grad, gender_grad):
        if self._cache is None:
            raise RuntimeError("backward before forward")
        batch, caches = self._cache
        g = self.id_head.backward(id_grad) + self.gender_head.backward(gender_grad)
        g = self.trunk2.backward(self.trunk_relu2.backward(g))
        g = self.trunk1.backward(self.trunk_relu1.backward(g))
        for i, m in enumerate(MODALITIES):
            block = g[:, i * FEATURE_DIM : (i + 1) * FEATURE_DIM]
            gb = self.norms[m].backward(block)
            gb = _l2norm_rows_backward(gb, caches[m])
            pres = batch.present[m]
            if pres.any():
                sub = gb[pres]
                if m == "ecg":
                    h = self.ecg_pool.backward(sub)
                    self.ecg_conv.backward(self.ecg_relu.backward(h))
                elif m == "face":
                    self.face_stack.backward(self.face_proj.backward(sub))
                else:
                    self.finger_stack.backward(self.finger_proj.backward(sub))
            else:
                # modality absent from the whole batch: its extractor took no
                # part, but the optimizer still expects a (zero) fresh gradient
                for part in self._extractors()[m]:
                    for p in part.params():
                        p.accumulate(0.0)


def model_state(model):
    """All learned arrays, including batch-norm running statistics."""
    out = {p.name: p.value for p in model.parameters()}
    for m in MODALITIES:
        out[f"{m}.bn.running_mean"] = model.norms[m].running_mean
        out[f"{m}.bn.running_var"] = model.norms[m].running_var
    return out


def save_model(model, prefix):
    """Write ``<prefix>.params`` (arrays) and ``<prefix>.json`` (architecture)."""
    prefix = str(prefix)
    save_arrays(prefix + ".params", model_state(model))
    manifest = {
        "format": "biofuse-model",
        "version": 1,
        "config": asdict(model.config),
    }
    with open(prefix + ".json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(prefix):
    """Rebuild a model from a checkpoint prefix; shapes are verified."""
    prefix = str(prefix)
    manifest_path = prefix + ".json"
    if not os.path.exists(manifest_path):
        raise FormatError(f"{manifest_path}: model manifest missing")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"{manifest_path}: invalid JSON: {e.msg}") from None
    if manifest.get("format") != "biofuse-model":
        raise FormatError(f"{manifest_path}: not a model manifest")
    cfg_dict = dict(manifest["config"])
    for key in ("face_widths", "finger_widths"):
        cfg_dict[key] = tuple(cfg_dict[key])
    model = FusedModel(ModelConfig(**cfg_dict))
    arrays = load_arrays(prefix + ".params")
    state = model_state(model)
    if set(arrays) != set(state):
        missing = sorted(set(state) - set(arrays))
        extra = sorted(set(arrays) - set(state))
        raise FormatError(
            f"{prefix}.params: array names do not match model "
            f"(missing {missing[:3]}, extra {extra[:3]})"
        )
    for p in model.parameters():
        if arrays[p.name].shape != p.value.shape:
            raise FormatError(
                f"{prefix}.params: {p.name} has shape {arrays[p.name].shape}, "
                f"expected {p.value.shape}"
            )
        p.value[...] = arrays[p.name]
    for m in MODALITIES:
        model.norms[m].running_mean[...] = arrays[f"{m}.bn.running_mean"]
        model.norms[m].running_var[...] = arrays[f"{m}.bn.running_var"]
    return model


# -------------------------------------------------------------- train / eval

@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    stop_id_accuracy: float | None = None  # early exit once train ID acc reaches this

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        return self


@dataclass
class EpochStats:
    epoch: int
    id_loss: float
    gender_loss: float
    id_accuracy: float
    gender_accuracy: float

    @property
    def total_loss(self):
        return self.id_loss + self.gender_loss


def _task_losses(model, batch, id_logits, gender_logits):
    mode = model.config.task_mode
    zero_id = np.zeros_like(id_logits)
    zero_g = np.zeros_like(gender_logits)
    if mode == "id_only":
        id_loss, id_grad = softmax_cross_entropy(id_logits, batch.id_labels)
        return id_loss, 0.0, id_grad, zero_g
    if mode == "gender_only":
        g_loss, g_grad = binary_cross_entropy(gender_logits, batch.gender_labels)
        return 0.0, g_loss, zero_id, g_grad
    id_loss, id_grad = softmax_cross_entropy(id_logits, batch.id_labels)
    g_loss, g_grad = binary_cross_entropy(gender_logits, batch.gender_labels)
    joint_loss(id_loss, g_loss)  # validates both terms
    return id_loss, g_loss, id_grad, g_grad


def train(model, samples, config):
    """Mini-batch Adam training; returns the per-epoch log.

    Shuffling, and nothing else, consumes the config seed, so a fixed seed
    reproduces the run exactly. Raises TrainingDivergedError if any loss
    stops being finite.
    """
    config.validate()
    samples = list(samples)
    if not samples:
        raise EmptyInputError("no training samples")
    for i, s in enumerate(samples):
        if not 0 <= s.subject_index < model.config.n_subjects:
            raise ConfigError(
                f"sample {i} has subject index {s.subject_index}, "
                f"model expects [0, {model.config.n_subjects})"
            )
    rng = np.random.default_rng(config.seed)
    opt = Adam(model.parameters(), lr=config.learning_rate)
    log = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        id_loss_sum = g_loss_sum = 0.0
        id_hits = g_hits = seen = 0
        for start in range(0, len(samples), config.batch_size):
            chunk = order[start : start + config.batch_size]
            batch = collate([samples[i] for i in chunk], model.config.image_size)
            id_logits, g_logits = model.forward(batch, train=True)
            id_loss, g_loss, id_grad, g_grad = _task_losses(model, batch, id_logits, g_logits)
            if not (np.isfinite(id_loss) and np.isfinite(g_loss)):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} (id={id_loss}, gender={g_loss})"
                )
            opt.zero_grad()
            model.backward(id_grad, g_grad)
            opt.step()
            b = batch.size
            id_loss_sum += id_loss * b
            g_loss_sum += g_loss * b
            id_hits += int((id_logits.argmax(axis=1) == batch.id_labels).sum())
            g_hits += int(((g_logits.reshape(-1) > 0) == batch.gender_labels).sum())
            seen += b
        stats = EpochStats(
            epoch=epoch,
            id_loss=id_loss_sum / seen,
            gender_loss=g_loss_sum / seen,
            id_accuracy=id_hits / seen,
            gender_accuracy=g_hits / seen,
        )
        log.append(stats)
        if config.stop_id_accuracy is not None and stats.id_accuracy >= config.stop_id_accuracy:
            break
    return log


def evaluate(model, samples, modalities=None, batch_size=128):
    """Accuracy on held-out samples, optionally restricted to a modality subset."""
    samples = list(samples)
    if not samples:
        raise EmptyInputError("no evaluation samples")
    if modalities is not None:
        samples = restrict_modalities(samples, modalities)
    id_hits = g_hits = 0
    for start in range(0, len(samples), batch_size):
        batch = collate(samples[start : start + batch_size], model.config.image_size)
        id_logits, g_logits = model.forward(batch, train=False)
        id_hits += int((id_logits.argmax(axis=1) == batch.id_labels).sum())
        g_hits += int(((g_logits.reshape(-1) > 0) == batch.gender_labels).sum())
    return {
        "id_accuracy": id_hits / len(samples),
        "gender_accuracy": g_hits / len(samples),
    }


def predict(model, sample, modalities=None):
    """(subject_index, gender_label) for one sample; needs >= 1 present modality."""
    if modalities is not None:
        if not tuple(modalities):
            raise MaskExhaustionError("no modalities requested")
        sample = restrict_modalities([sample], modalities)[0]
    if not sample.present():
        raise MaskExhaustionError("sample has no present modality")
    batch = collate([sample], model.config.image_size)
    id_logits, g_logits = model.forward(batch, train=False)
    return int(id_logits[0].argmax()), int(g_logits[0, 0] > 0)


# ------------------------------------------------------------- score fusion

FUSION_RULES = ("sum", "product", "max")


def score_fusion(score_vectors, rule="sum"):
    """Combine per-modality score vectors into one normalized distribution.

    Rules: elementwise sum, product, or max, then renormalize to sum 1.
    If every fused entry is zero (possible under the product rule), the
    result is the uniform distribution.
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in score_vectors]
    if not vectors:
        raise EmptyInputError("no score vectors")
    k = vectors[0].shape
    if len(k) != 1 or k[0] == 0:
        raise DimensionError(f"score vectors must be non-empty 1-D, got shape {k}")
    for v in vectors:
        if v.shape != k:
            raise DimensionError(f"score vector shapes differ: {v.shape} vs {k}")
        if (v < 0).any():
            raise ParameterError("scores must be non-negative")
    if rule == "sum":
        fused = np.sum(vectors, axis=0)
    elif rule == "product":
        fused = np.prod(np.stack(vectors), axis=0)
    elif rule == "max":
        fused = np.max(np.stack(vectors), axis=0)
    else:
        raise ParameterError(f"rule must be one of {FUSION_RULES}, got {rule!r}")
    total = fused.sum()
    if total == 0.0:
        return np.full(k[0], 1.0 / k[0])
    return fused / total
