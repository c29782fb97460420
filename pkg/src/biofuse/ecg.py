"""ECG preprocessing: resampling, R-peak detection, heartbeat extraction and grouping.

The working representation is a raw 1-D voltage trace at a known sampling
rate. Everything downstream of detection operates at 500 Hz, where one
heartbeat window is exactly 300 samples centered on the R peak (150 before,
150 after).
"""

import itertools
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundaryError,
    FormatError,
    InsufficientComplexesError,
    InsufficientSignalError,
    ParameterError,
)

WORK_RATE = 500.0
QRS_LEN = 300
QRS_BEFORE = 150  # samples kept before the R peak; the rest follow it

GENDERS = ("male", "female")


def gender_to_label(gender):
    """'male' -> 0, 'female' -> 1."""
    if gender not in GENDERS:
        raise ParameterError(f"gender must be one of {GENDERS}, got {gender!r}")
    return GENDERS.index(gender)


@dataclass
class SignalRecord:
    """One continuous single-lead recording plus its subject metadata."""

    samples: np.ndarray
    rate: float
    subject_id: str
    gender: str
    age: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ParameterError(f"samples must be 1-D, got shape {self.samples.shape}")
        if self.rate <= 0:
            raise ParameterError(f"rate must be positive, got {self.rate}")
        if self.gender not in GENDERS:
            raise ParameterError(f"gender must be one of {GENDERS}, got {self.gender!r}")
        if not 0 <= int(self.age) <= 150:
            raise ParameterError(f"age {self.age} outside [0, 150]")


def resample(samples, src_rate, dst_rate=WORK_RATE):
    """Linear-interpolation resampling; equal rates return the input unchanged.

    Output length is round(n * dst / src); sample j sits at time j / dst,
    clamped to the source extent at the right edge.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ParameterError(f"samples must be 1-D, got shape {samples.shape}")
    if src_rate <= 0 or dst_rate <= 0:
        raise ParameterError(f"rates must be positive, got {src_rate} -> {dst_rate}")
    if src_rate == dst_rate:
        return samples.copy()
    if samples.size < 2:
        raise InsufficientSignalError("need at least 2 samples to resample")
    n_out = int(round(samples.size * dst_rate / src_rate))
    t_src = np.arange(samples.size) / src_rate
    t_dst = np.arange(n_out) / dst_rate
    return np.interp(t_dst, t_src, samples)


def _moving_average(x, width):
    # centered, zero-phase; edges renormalized by the actual overlap
    kernel = np.ones(width)
    num = np.convolve(x, kernel, mode="same")
    den = np.convolve(np.ones_like(x), kernel, mode="same")
    return num / den


def _rolling_max(x, width):
    """Centered rolling maximum, O(n) block prefix/suffix scan."""
    n = x.size
    half = width // 2
    pad = (-n) % width
    xp = np.concatenate([x, np.full(pad, -np.inf)]) if pad else x
    blocks = xp.reshape(-1, width)
    prefix = np.maximum.accumulate(blocks, axis=1).reshape(-1)
    suffix = np.maximum.accumulate(blocks[:, ::-1], axis=1)[:, ::-1].reshape(-1)
    lo = np.clip(np.arange(n) - half, 0, xp.size - 1)
    hi = np.clip(np.arange(n) + half, 0, xp.size - 1)
    return np.maximum(suffix[lo], prefix[hi])


def _odd(n):
    n = max(1, int(n))
    return n if n % 2 == 1 else n + 1


def detect_r_peaks(samples, rate, threshold_ratio=0.5, refractory_s=0.2):
    """Locate R peaks in a raw trace; returns sorted sample indices.

    Derivative-energy detector with every stage zero-phase so the energy
    envelope stays centered on the QRS complex:

      detrend (centered moving average) -> central difference -> square
      -> 150 ms moving-average envelope -> threshold at ``threshold_ratio``
      of the local (2 s) envelope maximum -> peak picking with a refractory
      period -> refinement to the signal maximum near each envelope apex.

    The returned indices are guaranteed at least ``refractory_s`` apart.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1:
        raise ParameterError(f"samples must be 1-D, got shape {samples.shape}")
    if rate <= 0:
        raise ParameterError(f"rate must be positive, got {rate}")
    if not np.isfinite(samples).all():
        raise ParameterError("signal contains NaN or infinity")
    if not 0.0 < threshold_ratio < 1.0:
        raise ParameterError(f"threshold_ratio must lie in (0, 1), got {threshold_ratio}")
    if samples.size < int(2.0 * rate):
        raise InsufficientSignalError(
            f"need at least 2 s of signal ({int(2.0 * rate)} samples), got {samples.size}"
        )

    detrended = samples - _moving_average(samples, _odd(0.6 * rate))
    deriv = np.zeros_like(detrended)
    deriv[1:-1] = (detrended[2:] - detrended[:-2]) * 0.5
    energy = deriv * deriv
    envelope = _moving_average(energy, _odd(0.15 * rate))

    local_max = _rolling_max(envelope, _odd(2.0 * rate))
    threshold = threshold_ratio * local_max

    above = envelope > np.maximum(threshold, 1e-12)
    rising = (envelope[1:-1] >= envelope[:-2]) & (envelope[1:-1] > envelope[2:])
    candidates = np.flatnonzero(above[1:-1] & rising) + 1

    refractory = max(1, int(round(refractory_s * rate)))
    refine = max(1, int(round(0.08 * rate)))

    # greedy pick by envelope height, suppress neighbors inside the refractory
    order = candidates[np.argsort(envelope[candidates])[::-1]]
    taken = []
    for c in order:
        if all(abs(c - t) >= refractory for t in taken):
            taken.append(c)

    peaks = []
    for c in taken:
        lo = max(0, c - refine)
        hi = min(samples.size, c + refine + 1)
        peaks.append(lo + int(np.argmax(detrended[lo:hi])))
    peaks = sorted(set(peaks))

    # refinement can only move a peak by < refine < refractory, but be exact:
    # drop the weaker of any pair the refinement pushed together
    out = []
    for p in peaks:
        if out and p - out[-1] < refractory:
            if envelope[p] > envelope[out[-1]]:
                out[-1] = p
        else:
            out.append(p)
    return np.asarray(out, dtype=np.int64)


def extract_qrs(samples, r_index):
    """Cut the 300-sample window [r-150, r+150) around an R peak at 500 Hz."""
    samples = np.asarray(samples, dtype=np.float64)
    r_index = int(r_index)
    lo = r_index - QRS_BEFORE
    hi = lo + QRS_LEN
    if lo < 0 or hi > samples.size:
        raise BoundaryError(
            f"window [{lo}, {hi}) around peak {r_index} exceeds record of {samples.size}"
        )
    return samples[lo:hi].copy()


def minmax_normalize(window):
    """Scale a heartbeat window to [0, 1]; a constant window maps to all zeros."""
    window = np.asarray(window, dtype=np.float64)
    lo = window.min()
    hi = window.max()
    if hi == lo:
        return np.zeros_like(window)
    return (window - lo) / (hi - lo)


def group_complexes(complexes, k=3, rng=None, max_groups=None):
    """All k-element combinations of heartbeats, temporal order preserved.

    Combinations are drawn without replacement and enumerated in
    lexicographic index order; ``max_groups`` keeps a random subset
    (requires ``rng``) without disturbing each group's internal order.
    Returns a list of [k, 300] arrays.
    """
    complexes = [np.asarray(c, dtype=np.float64) for c in complexes]
    if k < 1:
        raise ParameterError(f"group size must be positive, got {k}")
    if len(complexes) < k:
        raise InsufficientComplexesError(
            f"need at least {k} heartbeats, got {len(complexes)}"
        )
    for c in complexes:
        if c.shape != (QRS_LEN,):
            raise ParameterError(f"every heartbeat must have shape ({QRS_LEN},), got {c.shape}")
    combos = list(itertools.combinations(range(len(complexes)), k))
    if max_groups is not None and max_groups < len(combos):
        if max_groups < 0:
            raise ParameterError(f"max_groups must be non-negative, got {max_groups}")
        if rng is None:
            raise ParameterError("max_groups sampling needs an rng")
        picked = rng.choice(len(combos), size=max_groups, replace=False)
        combos = [combos[i] for i in sorted(picked)]
    return [np.stack([complexes[i] for i in combo]) for combo in combos]


def add_noise(sequence, sigma, rng):
    """Additive Gaussian noise; sigma 0 returns an identical copy."""
    sequence = np.asarray(sequence, dtype=np.float64)
    if sigma < 0:
        raise ParameterError(f"sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return sequence.copy()
    return sequence + rng.normal(0.0, sigma, size=sequence.shape)


def segment_record(record, k=3, rng=None, max_groups=None):
    """Full preprocessing of one recording into grouped heartbeat sequences.

    Resamples to 500 Hz, detects R peaks, drops peaks whose window would
    cross a record boundary, min-max normalizes each heartbeat, and groups
    them. Returns a list of [k, 300] arrays.
    """
    samples = resample(record.samples, record.rate, WORK_RATE)
    peaks = detect_r_peaks(samples, WORK_RATE)
    beats = []
    for p in peaks:
        try:
            beats.append(minmax_normalize(extract_qrs(samples, p)))
        except BoundaryError:
            continue  # partial window at a record edge
    if len(beats) < k:
        raise InsufficientComplexesError(
            f"record {record.subject_id!r} yields {len(beats)} usable heartbeats, need {k}"
        )
    return group_complexes(beats, k=k, rng=rng, max_groups=max_groups)


def read_signal_csv(path, column=0):
    """Load a recording from ``<path>`` plus its ``<stem>.json`` sidecar.

    The CSV holds one sample per line (multi-lead files hold one lead per
    comma-separated column; ``column`` selects the lead). The sidecar
    provides subject_id, gender, age, and rate.
    """
    values = []
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.decode("utf-8", errors="replace").strip()
            if line and not line.startswith("#"):
                fields = line.split(",")
                if column >= len(fields):
                    raise FormatError(
                        f"{path}:{lineno} (byte {offset}): no column {column} in {line!r}"
                    )
                try:
                    values.append(float(fields[column]))
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno} (byte {offset}): not a number: {fields[column]!r}"
                    ) from None
            offset += len(raw)
    if not values:
        raise FormatError(f"{path}: no samples")

    sidecar = os.path.splitext(path)[0] + ".json"
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise FormatError(f"{sidecar}: sidecar metadata file missing") from None
    except json.JSONDecodeError as e:
        raise FormatError(f"{sidecar}: invalid JSON at byte {e.pos}: {e.msg}") from None
    for field in ("subject_id", "gender", "age", "rate"):
        if field not in meta:
            raise FormatError(f"{sidecar}: missing field {field!r}")
    return SignalRecord(
        samples=np.asarray(values, dtype=np.float64),
        rate=float(meta["rate"]),
        subject_id=str(meta["subject_id"]),
        gender=str(meta["gender"]),
        age=int(meta["age"]),
    )


def combination_count(n, k):
    """Number of k-groups available from n heartbeats."""
    if n < k:
        return 0
    return math.comb(n, k)
