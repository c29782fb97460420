"""Dataset assembly: chimeric subjects, sample expansion, splits, noise, ingestion.

A *virtual subject* stitches together three sources that never met: a face
identity (which contributes the subject's gender and age), an ECG recording
from a different person matched on gender and age band, and an unrelated
fingerprint identity. No source is reused across virtual subjects.

Everything random takes an explicit generator, and every derived sample is
reproducible from the dataset manifest: expansion records the seed of each
augmentation and of the heartbeat grouping draw.
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from .ecg import (
    SignalRecord,
    gender_to_label,
    read_signal_csv,
    segment_record,
)
from .ecg import add_noise as add_ecg_noise
from .errors import ConstructionError, FormatError, ParameterError
from .fusion import MultimodalSample
from .vision import (
    AugmentConfig,
    Image,
    augment,
    load_image,
    pepper_noise,
    standardize,
    write_pgm,
)

AGE_BANDS = ((0, 12), (13, 39), (40, 64), (65, 150))


def age_band(age):
    """Index of the age band an age falls into."""
    for i, (lo, hi) in enumerate(AGE_BANDS):
        if lo <= age <= hi:
            return i
    raise ParameterError(f"age {age} outside every band")


# ------------------------------------------------------------------- sources

@dataclass
class FaceSource:
    """One face identity: images plus the attributes used for matching."""

    source_id: str
    gender: str
    age: int
    images: list


@dataclass
class FingerSource:
    """One fingerprint identity; carries no demographic attributes."""

    source_id: str
    images: list


@dataclass
class VirtualSubject:
    """A chimeric identity assembled from three unrelated sources."""

    subject_id: str
    index: int
    gender: str
    face: FaceSource
    ecg: SignalRecord
    finger: FingerSource


def build_virtual_subjects(faces, ecgs, fingers, rng, n=None):
    """Match faces to gender/age-band compatible ECGs and unused fingerprints.

    Faces drive identity: each virtual subject inherits the face's gender.
    The ECG source must share the face's gender and age band. Every source
    is consumed at most once. With ``n`` given, exactly n subjects are built
    or ConstructionError is raised; otherwise as many as the pools allow
    (at least one).
    """
    if n is not None and n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    face_order = list(rng.permutation(len(faces)))
    ecg_pool = {}
    for i, rec in enumerate(ecgs):
        ecg_pool.setdefault((rec.gender, age_band(rec.age)), []).append(i)
    finger_free = list(range(len(fingers)))
    ecg_used = set()

    subjects = []
    for fi in face_order:
        if n is not None and len(subjects) == n:
            break
        face = faces[fi]
        key = (face.gender, age_band(face.age))
        candidates = [i for i in ecg_pool.get(key, []) if i not in ecg_used]
        if not candidates or not finger_free:
            continue
        ei = candidates[rng.integers(0, len(candidates))]
        ecg_used.add(ei)
        fj = finger_free.pop(rng.integers(0, len(finger_free)))
        idx = len(subjects)
        subjects.append(
            VirtualSubject(
                subject_id=f"v{idx:03d}",
                index=idx,
                gender=face.gender,
                face=face,
                ecg=ecgs[ei],
                finger=fingers[fj],
            )
        )
    if n is not None and len(subjects) < n:
        raise ConstructionError(
            f"could only assemble {len(subjects)} of {n} virtual subjects: "
            "no unused gender/age-band-matched ECG (or fingerprint) left"
        )
    if not subjects:
        raise ConstructionError("no virtual subject could be assembled")
    return subjects


# ----------------------------------------------------------------- expansion

@dataclass
class ExpansionPlan:
    """Reproducible recipe for one subject's sample pools."""

    target: int
    ecg_group_seed: int
    face_steps: list  # (source image index, augmentation seed or None)
    finger_steps: list


@dataclass
class ExpandedSubject:
    subject: VirtualSubject
    plan: ExpansionPlan
    ecg_sequences: list  # [3, 300] arrays
    face_images: list    # [size, size] pixel arrays
    finger_images: list


def _image_steps(n_sources, target, rng):
    # originals first, then seeded augmentations cycling over the sources
    steps = []
    for i in range(target):
        src = i % n_sources
        seed = None if i < n_sources else int(rng.integers(0, 2**63 - 1))
        steps.append((src, seed))
    return steps


def plan_expansion(subject, target, rng):
    if target < 1:
        raise ParameterError(f"target must be positive, got {target}")
    return ExpansionPlan(
        target=target,
        ecg_group_seed=int(rng.integers(0, 2**63 - 1)),
        face_steps=_image_steps(len(subject.face.images), target, rng),
        finger_steps=_image_steps(len(subject.finger.images), target, rng),
    )


def _run_image_steps(images, steps, image_size, augment_config):
    out = []
    for src, seed in steps:
        img = images[src]
        if seed is not None:
            img = augment(img, np.random.default_rng(seed), augment_config)
        out.append(standardize(img, image_size).pixels)
    return out


def run_expansion(subject, plan, image_size, augment_config=None):
    """Materialize a plan into aligned ECG/face/finger sample pools."""
    cfg = augment_config or AugmentConfig()
    seqs = segment_record(
        subject.ecg,
        k=3,
        rng=np.random.default_rng(plan.ecg_group_seed),
        max_groups=plan.target,
    )
    return ExpandedSubject(
        subject=subject,
        plan=plan,
        ecg_sequences=seqs,
        face_images=_run_image_steps(subject.face.images, plan.face_steps, image_size, cfg),
        finger_images=_run_image_steps(subject.finger.images, plan.finger_steps, image_size, cfg),
    )


def expand_subject(subject, target, image_size, rng, augment_config=None):
    plan = plan_expansion(subject, target, rng)
    return run_expansion(subject, plan, image_size, augment_config)


# --------------------------------------------------------------------- split

@dataclass
class DatasetSplit:
    train: list
    test: list
    subjects: list
    expanded: list
    membership: dict  # {"train"/"test": [(subject index, sample index), ...]}
    image_size: int
    ratio: float


def _subject_samples(expanded):
    n = min(len(expanded.ecg_sequences), len(expanded.face_images), len(expanded.finger_images))
    subject = expanded.subject
    label = gender_to_label(subject.gender)
    return [
        MultimodalSample(
            subject_index=subject.index,
            gender_label=label,
            ecg=expanded.ecg_sequences[i],
            face=expanded.face_images[i],
            finger=expanded.finger_images[i],
        )
        for i in range(n)
    ]


def make_split(expanded_subjects, ratio, rng, image_size):
    """Per-subject stratified split: every identity lands in both halves.

    The test set therefore stays closed-set — identification is an
    S-way choice among known subjects.
    """
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"ratio must lie in (0, 1), got {ratio}")
    train, test = [], []
    membership = {"train": [], "test": []}
    for exp in expanded_subjects:
        samples = _subject_samples(exp)
        n = len(samples)
        if n < 2:
            raise ConstructionError(
                f"subject {exp.subject.subject_id} has {n} samples; need >= 2 to split"
            )
        cut = min(n - 1, max(1, int(round(ratio * n))))
        perm = rng.permutation(n)
        tr = sorted(int(i) for i in perm[:cut])
        te = sorted(int(i) for i in perm[cut:])
        train.extend(samples[i] for i in tr)
        test.extend(samples[i] for i in te)
        membership["train"].extend((exp.subject.index, i) for i in tr)
        membership["test"].extend((exp.subject.index, i) for i in te)
    return DatasetSplit(
        train=train,
        test=test,
        subjects=[e.subject for e in expanded_subjects],
        expanded=list(expanded_subjects),
        membership=membership,
        image_size=image_size,
        ratio=ratio,
    )


# --------------------------------------------------------------------- noise

@dataclass
class NoiseProtocol:
    """Degradation applied to every sample, train and test alike."""

    ecg_sigma: float = 0.1
    finger_fraction: float = 0.05
    face_fraction: float = 0.97

    def validate(self):
        if self.ecg_sigma < 0:
            raise ParameterError(f"ecg_sigma must be non-negative, got {self.ecg_sigma}")
        for name, frac in (("finger", self.finger_fraction), ("face", self.face_fraction)):
            if not 0.0 <= frac <= 1.0:
                raise ParameterError(f"{name}_fraction must lie in [0, 1], got {frac}")
        return self


def apply_noise(samples, protocol, rng):
    """Noisy copies of ``samples``; the originals are never touched."""
    protocol.validate()
    out = []
    for s in samples:
        ecg = None if s.ecg is None else add_ecg_noise(s.ecg, protocol.ecg_sigma, rng)
        face = None
        if s.face is not None:
            face = pepper_noise(Image(s.face), protocol.face_fraction, rng).pixels
        finger = None
        if s.finger is not None:
            finger = pepper_noise(Image(s.finger), protocol.finger_fraction, rng).pixels
        out.append(
            MultimodalSample(
                subject_index=s.subject_index,
                gender_label=s.gender_label,
                ecg=ecg,
                face=face,
                finger=finger,
            )
        )
    return out


def noisy_split(split, protocol, rng):
    """Apply the protocol to both halves of a split."""
    return DatasetSplit(
        train=apply_noise(split.train, protocol, rng),
        test=apply_noise(split.test, protocol, rng),
        subjects=split.subjects,
        expanded=split.expanded,
        membership=split.membership,
        image_size=split.image_size,
        ratio=split.ratio,
    )


# ----------------------------------------------------------------- synthesis

@dataclass
class SynthConfig:
    """Knobs for the synthetic source generator."""

    n_subjects: int
    samples_per_subject: int = 40
    image_size: int = 32
    images_per_source: int = 6
    seconds: float = 40.0
    pixel_jitter: float = 0.015
    ecg_noise: float = 0.01
    split_ratio: float = 0.8

    def validate(self):
        if self.n_subjects < 2:
            raise ParameterError(f"need at least 2 subjects, got {self.n_subjects}")
        if self.samples_per_subject < 2:
            raise ParameterError("need at least 2 samples per subject for a split")
        if self.image_size < 4:
            raise ParameterError(f"image_size {self.image_size} too small")
        if self.images_per_source < 1:
            raise ParameterError("need at least one image per source")
        if self.seconds < 10.0:
            raise ParameterError("recordings shorter than 10 s give too few heartbeats")
        return self


def _jit(rng, spread):
    return 1.0 + spread * rng.standard_normal()


def synth_ecg_record(rng, subject_id, gender, age, seconds=40.0, rate=500.0, noise=0.01):
    """One synthetic single-lead recording with subject- and gender-coded shape.

    Morphology is drawn per subject; gender widens the QRS and shallows the
    S-wave, so the cue survives per-beat min-max normalization. Returns the
    record and the true R-peak sample indices.
    """
    wide = 1.3 if gender == "female" else 1.0
    r_w = rng.uniform(0.009, 0.014) * wide
    q_amp = -rng.uniform(0.08, 0.30)
    q_off = -rng.uniform(0.030, 0.045)
    q_w = rng.uniform(0.007, 0.012)
    s_amp = -rng.uniform(0.10, 0.35) * (0.6 if gender == "female" else 1.0)
    s_off = rng.uniform(0.030, 0.045)
    s_w = rng.uniform(0.008, 0.013)
    t_amp = rng.uniform(0.20, 0.40)
    t_off = rng.uniform(0.18, 0.26)
    t_w = rng.uniform(0.040, 0.060)
    bpm = rng.uniform(55.0, 95.0)

    n = int(seconds * rate)
    t = np.arange(n) / rate
    signal = np.zeros(n)
    peaks = []
    c = 0.5
    period = 60.0 / bpm
    while c < seconds - 0.5:
        peaks.append(int(round(c * rate)))
        amp = 1.0 + 0.1 * rng.standard_normal()
        signal += amp * np.exp(-((t - c) ** 2) / (2 * (r_w * _jit(rng, 0.15)) ** 2))
        # beat-to-beat morphology jitter keeps single-lead identity imperfect
        signal += q_amp * _jit(rng, 0.55) * np.exp(
            -((t - c - q_off) ** 2) / (2 * (q_w * _jit(rng, 0.35)) ** 2)
        )
        signal += s_amp * _jit(rng, 0.55) * np.exp(
            -((t - c - s_off) ** 2) / (2 * (s_w * _jit(rng, 0.35)) ** 2)
        )
        signal += t_amp * _jit(rng, 0.55) * np.exp(
            -((t - c - t_off) ** 2) / (2 * (t_w * _jit(rng, 0.35)) ** 2)
        )
        c += period * (1.0 + 0.04 * rng.standard_normal())
    signal += 0.08 * np.sin(2 * np.pi * rng.uniform(0.2, 0.4) * t + rng.uniform(0, 2 * np.pi))
    if noise:
        signal += rng.normal(0.0, noise, size=n)
    record = SignalRecord(signal, rate, subject_id, gender, age)
    return record, np.asarray(peaks)


def _face_pattern(rng, size, gender):
    """Smooth random pattern posterized onto a subject-specific tonal palette.

    The palette — three tonal levels plus the proportions they cover — is
    the identity cue. It lives in pixel values alone, so it survives heavy
    pixel dropout, pose jitter, rescaling, and average pooling, none of
    which move tonal levels.
    """
    y, x = np.mgrid[0:size, 0:size] / float(size)
    base = np.zeros((size, size))
    for _ in range(4):
        # low frequencies keep the posterized regions coarse, so few pixels
        # sit on region borders where interpolation blends the levels
        fx, fy = rng.uniform(0.5, 2.0, size=2)
        base += rng.uniform(0.4, 1.0) * np.cos(
            2 * np.pi * (fx * x + fy * y) + rng.uniform(0, 2 * np.pi)
        )
    edges = np.quantile(base, [rng.uniform(0.2, 0.45), rng.uniform(0.55, 0.8)])
    levels = np.array(
        [rng.uniform(0.08, 0.32), rng.uniform(0.42, 0.58), rng.uniform(0.68, 0.92)]
    )
    img = np.select([base <= edges[0], base <= edges[1]], list(levels[:2]), default=levels[2])
    # gender is frequency-coded: mean filter energy survives average pooling
    f_g = 1.5 if gender == "male" else 3.2
    theta = rng.uniform(0, np.pi)
    img = img + 0.04 * np.cos(
        2 * np.pi * f_g * (np.cos(theta) * x + np.sin(theta) * y) + rng.uniform(0, 2 * np.pi)
    )
    return np.clip(img, 0.0, 1.0)


def _finger_identity(rng):
    """Ridge geometry owned by one finger; phases are left to each capture."""
    return {
        "f": rng.uniform(3.5, 5.5),
        "theta": rng.uniform(0, np.pi),
        "wx": rng.uniform(0.5, 1.5),
        "wy": rng.uniform(0.5, 1.5),
        "warp_amp": rng.uniform(0.5, 2.0),
        "f2": rng.uniform(1.0, 3.0),
    }


def _finger_pattern(ident, rng, size):
    y, x = np.mgrid[0:size, 0:size] / float(size)
    warp = ident["warp_amp"] * np.sin(
        2 * np.pi * (ident["wx"] * x + ident["wy"] * y) + rng.uniform(0, 2 * np.pi)
    )
    # capture-to-capture wobble in placement and ridge pitch, on top of the
    # fully random phases: two captures of one finger never align exactly
    f = ident["f"] * _jit(rng, 0.12)
    theta = ident["theta"] + 0.15 * rng.standard_normal()
    carrier = f * (np.cos(theta) * x + np.sin(theta) * y)
    img = np.cos(2 * np.pi * carrier + warp + rng.uniform(0, 2 * np.pi))
    img += 0.3 * np.cos(2 * np.pi * ident["f2"] * (x - y) + rng.uniform(0, 2 * np.pi))
    return img


def _to_range(img, lo, hi):
    mn, mx = img.min(), img.max()
    if mx == mn:
        return np.full_like(img, 0.5 * (lo + hi))
    return lo + (hi - lo) * (img - mn) / (mx - mn)


def _to_unit(img):
    return _to_range(img, 0.05, 0.95)


def _source_images(rng, base, count, jitter):
    out = []
    for _ in range(count):
        # exposure wobble stays small: tonal values are an identity cue
        shifted = base + rng.uniform(-0.02, 0.02)
        noisy = shifted + jitter * rng.standard_normal(base.shape)
        out.append(Image(np.clip(noisy, 0.0, 1.0)))
    return out


def synth_sources(config, rng):
    """Generate matched face/ECG/fingerprint source pools.

    Face and ECG attribute lists are permutations of the same draws, so a
    gender/age-band match always exists for every face.
    """
    config.validate()
    n = config.n_subjects
    genders = [("male", "female")[int(rng.integers(0, 2))] for _ in range(n)]
    ages = [int(rng.integers(13, 40)) for _ in range(n)]  # one band: always matchable

    faces = []
    for i in range(n):
        base = _face_pattern(rng, config.image_size, genders[i])
        faces.append(
            FaceSource(
                source_id=f"face{i:03d}",
                gender=genders[i],
                age=ages[i],
                images=_source_images(rng, base, config.images_per_source, config.pixel_jitter),
            )
        )

    ecg_order = rng.permutation(n)
    ecgs = []
    for j, src in enumerate(ecg_order):
        rec, _ = synth_ecg_record(
            rng,
            f"ecg{j:03d}",
            genders[src],
            ages[src],
            seconds=config.seconds,
            noise=config.ecg_noise,
        )
        ecgs.append(rec)

    fingers = []
    for i in range(n):
        ident = _finger_identity(rng)
        images = []
        for _ in range(config.images_per_source):
            base = _to_unit(_finger_pattern(ident, rng, config.image_size))
            images.extend(_source_images(rng, base, 1, config.pixel_jitter))
        fingers.append(FingerSource(source_id=f"fp{i:03d}", images=images))
    return faces, ecgs, fingers


def assemble_dataset(faces, ecgs, fingers, n_subjects, samples_per_subject,
                     image_size, ratio, rng, augment_config=None):
    """Sources -> virtual subjects -> expanded pools -> stratified split."""
    subjects = build_virtual_subjects(faces, ecgs, fingers, rng, n=n_subjects)
    expanded = [
        expand_subject(s, samples_per_subject, image_size, rng, augment_config)
        for s in subjects
    ]
    return make_split(expanded, ratio, rng, image_size)


def build_dataset(config, rng, augment_config=None):
    """Synthetic end-to-end dataset build under one generator."""
    faces, ecgs, fingers = synth_sources(config, rng)
    return assemble_dataset(
        faces,
        ecgs,
        fingers,
        config.n_subjects,
        config.samples_per_subject,
        config.image_size,
        config.split_ratio,
        rng,
        augment_config,
    )


# ----------------------------------------------------------------- manifests

MANIFEST_FORMAT = "biofuse-dataset"


def write_manifest(split, path):
    """Record sources, expansion seeds, and split membership as JSON."""
    doc = {
        "format": MANIFEST_FORMAT,
        "version": 1,
        "image_size": split.image_size,
        "ratio": split.ratio,
        "subjects": [
            {
                "subject_id": e.subject.subject_id,
                "index": e.subject.index,
                "gender": e.subject.gender,
                "age": e.subject.face.age,
                "face_source": e.subject.face.source_id,
                "ecg_source": e.subject.ecg.subject_id,
                "finger_source": e.subject.finger.source_id,
                "plan": asdict(e.plan),
            }
            for e in split.expanded
        ],
        "membership": {
            side: [[int(a), int(b)] for a, b in pairs]
            for side, pairs in split.membership.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON at byte {e.pos}: {e.msg}") from None
    if doc.get("format") != MANIFEST_FORMAT:
        raise FormatError(f"{path}: not a dataset manifest")
    return doc


def rebuild_from_manifest(doc, faces, ecgs, fingers, augment_config=None):
    """Reconstruct the exact split a manifest describes from its sources."""
    face_by_id = {f.source_id: f for f in faces}
    ecg_by_id = {r.subject_id: r for r in ecgs}
    finger_by_id = {f.source_id: f for f in fingers}
    expanded = []
    for entry in doc["subjects"]:
        try:
            face = face_by_id[entry["face_source"]]
            ecg = ecg_by_id[entry["ecg_source"]]
            finger = finger_by_id[entry["finger_source"]]
        except KeyError as e:
            raise ConstructionError(f"manifest names unknown source {e}") from None
        subject = VirtualSubject(
            subject_id=entry["subject_id"],
            index=entry["index"],
            gender=entry["gender"],
            face=face,
            ecg=ecg,
            finger=finger,
        )
        p = entry["plan"]
        plan = ExpansionPlan(
            target=p["target"],
            ecg_group_seed=p["ecg_group_seed"],
            face_steps=[(s[0], s[1]) for s in p["face_steps"]],
            finger_steps=[(s[0], s[1]) for s in p["finger_steps"]],
        )
        expanded.append(run_expansion(subject, plan, doc["image_size"], augment_config))

    samples_by_subject = {e.subject.index: _subject_samples(e) for e in expanded}
    train, test = [], []
    membership = {"train": [], "test": []}
    for side, sink in (("train", train), ("test", test)):
        for subj_idx, sample_idx in doc["membership"][side]:
            sink.append(samples_by_subject[subj_idx][sample_idx])
            membership[side].append((subj_idx, sample_idx))
    return DatasetSplit(
        train=train,
        test=test,
        subjects=[e.subject for e in expanded],
        expanded=expanded,
        membership=membership,
        image_size=doc["image_size"],
        ratio=doc["ratio"],
    )


# ----------------------------------------------------------------- ingestion

ANNOTATIONS_NAME = "annotations.csv"


def export_sources(faces, ecgs, fingers, root):
    """Write sources to the on-disk ingestion layout.

    ``<root>/<source_id>/<modality>/``: faces and fingerprints as binary
    PGM, recordings as CSV plus JSON sidecar, and face attributes in
    ``annotations.csv`` at the root.
    """
    os.makedirs(root, exist_ok=True)
    for face in faces:
        d = os.path.join(root, face.source_id, "face")
        os.makedirs(d, exist_ok=True)
        for i, img in enumerate(face.images):
            write_pgm(os.path.join(d, f"img{i:03d}.pgm"), img)
    for rec in ecgs:
        d = os.path.join(root, rec.subject_id, "ecg")
        os.makedirs(d, exist_ok=True)
        base = os.path.join(d, "rec000")
        with open(base + ".csv", "w", encoding="utf-8") as fh:
            for v in rec.samples:
                fh.write(format(v, ".17g") + "\n")
        with open(base + ".json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "subject_id": rec.subject_id,
                    "gender": rec.gender,
                    "age": rec.age,
                    "rate": rec.rate,
                },
                fh,
                indent=2,
                sort_keys=True,
            )
            fh.write("\n")
    for finger in fingers:
        d = os.path.join(root, finger.source_id, "finger")
        os.makedirs(d, exist_ok=True)
        for i, img in enumerate(finger.images):
            write_pgm(os.path.join(d, f"img{i:03d}.pgm"), img)
    with open(os.path.join(root, ANNOTATIONS_NAME), "w", encoding="utf-8") as fh:
        fh.write("source_id,gender,age\n")
        for face in faces:
            fh.write(f"{face.source_id},{face.gender},{face.age}\n")


def _read_annotations(path):
    table = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "source_id,gender,age":
        raise FormatError(f"{path}: first line must be 'source_id,gender,age'")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
        sid, gender, age = parts
        try:
            table[sid] = (gender, int(age))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: age is not an integer: {age!r}") from None
    return table


def ingest_sources(root, annotations=None):
    """Read the on-disk layout back into face/ECG/fingerprint pools.

    Every ``<root>/<dir>/face`` directory becomes a FaceSource (attributes
    from the annotations file), every ``ecg`` directory contributes its
    recordings, and every ``finger`` directory a FingerSource. Files are
    taken in sorted order so ingestion is deterministic.
    """
    if not os.path.isdir(root):
        raise FormatError(f"{root}: dataset root is not a directory")
    annotations = annotations or os.path.join(root, ANNOTATIONS_NAME)
    attrs = _read_annotations(annotations) if os.path.exists(annotations) else {}

    faces, ecgs, fingers = [], [], []
    for sid in sorted(os.listdir(root)):
        subject_dir = os.path.join(root, sid)
        if not os.path.isdir(subject_dir):
            continue
        face_dir = os.path.join(subject_dir, "face")
        if os.path.isdir(face_dir):
            if sid not in attrs:
                raise FormatError(f"{annotations}: no annotation row for face source {sid!r}")
            gender, age = attrs[sid]
            images = [
                load_image(os.path.join(face_dir, f)) for f in sorted(os.listdir(face_dir))
            ]
            if not images:
                raise FormatError(f"{face_dir}: no images")
            faces.append(FaceSource(sid, gender, age, images))
        ecg_dir = os.path.join(subject_dir, "ecg")
        if os.path.isdir(ecg_dir):
            for f in sorted(os.listdir(ecg_dir)):
                if f.endswith(".csv"):
                    ecgs.append(read_signal_csv(os.path.join(ecg_dir, f)))
        finger_dir = os.path.join(subject_dir, "finger")
        if os.path.isdir(finger_dir):
            images = [
                load_image(os.path.join(finger_dir, f)) for f in sorted(os.listdir(finger_dir))
            ]
            if not images:
                raise FormatError(f"{finger_dir}: no images")
            fingers.append(FingerSource(sid, images))
    if not (faces or ecgs or fingers):
        raise FormatError(f"{root}: no sources found")
    return faces, ecgs, fingers
