"""Manifests, splits and folds, batch order, synthetic tone datasets, feature cache."""

import logging
import os
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (EmptyInputError, ExistenceError, FormatError, ParseError,
                     RangeError, SpecError, ValidationError, VersionError)
from .features import (FeatureConfig, lfbe_extract, read_feature_file, read_wav,
                       write_feature_file, write_wav)

log = logging.getLogger(__name__)

MANIFEST_FIELDS = ("id", "path", "label", "fold", "split")
SPLITS = ("train", "val", "test")


@dataclass
class ManifestEntry:
    clip_id: str
    path: str
    label: str
    fold: Optional[int] = None
    split: Optional[str] = None

    def to_line(self):
        parts = [f"id={self.clip_id}", f"path={self.path}", f"label={self.label}"]
        if self.fold is not None:
            parts.append(f"fold={self.fold}")
        if self.split is not None:
            parts.append(f"split={self.split}")
        return "\t".join(parts)


def parse_manifest(text, k=None):
    """Parse manifest text; returns (entries, sorted class list)."""
    entries, seen = [], set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        record = {}
        for item in line.rstrip("\r\n").split("\t"):
            key, sep, value = item.partition("=")
            if not sep:
                raise ParseError(f"line {lineno}: expected key=value, got {item!r}")
            if key not in MANIFEST_FIELDS:
                raise ParseError(f"line {lineno}: unknown field {key!r}")
            record[key] = value
        missing = [f for f in ("id", "path", "label") if f not in record]
        if missing:
            raise ParseError(f"line {lineno}: missing field(s) {', '.join(missing)}")
        fold = None
        if "fold" in record:
            try:
                fold = int(record["fold"])
            except ValueError:
                raise ParseError(f"line {lineno}: fold {record['fold']!r} is not an integer") from None
            if fold < 0 or (k is not None and fold >= k):
                raise RangeError(f"line {lineno}: fold {fold} outside [0, {k})")
        split = record.get("split")
        if split is not None and split not in SPLITS:
            raise ValidationError(f"line {lineno}: split {split!r} not in {SPLITS}")
        if record["id"] in seen:
            raise ValidationError(f"duplicate clip id {record['id']!r} (line {lineno})")
        seen.add(record["id"])
        entries.append(ManifestEntry(record["id"], record["path"], record["label"], fold, split))
    return entries, sorted({e.label for e in entries})


def load_manifest(path, k=None):
    with open(path, encoding="utf-8") as fh:
        return parse_manifest(fh.read(), k)


def save_manifest(path, entries):
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.to_line() + "\n")


def resolve_audio_path(entry, base_dir):
    path = entry.path if os.path.isabs(entry.path) else os.path.join(base_dir, entry.path)
    if not os.path.exists(path):
        raise ExistenceError(f"audio file for {entry.clip_id!r} not found: {path}")
    return path


# -- ordering, splits, folds --------------------------------------------------------

def make_batches(items, batch_size, seed, epoch):
    """Shuffle once per (seed, epoch) and cut into batches; the last may be short."""
    if batch_size < 1:
        raise ValidationError("batch_size must be >= 1")
    items = np.asarray(items) if isinstance(items, np.ndarray) else list(items)
    order = np.random.default_rng([seed, epoch]).permutation(len(items))
    if isinstance(items, np.ndarray):
        shuffled = items[order]
        return [shuffled[i:i + batch_size] for i in range(0, len(order), batch_size)]
    shuffled = [items[i] for i in order]
    return [shuffled[i:i + batch_size] for i in range(0, len(shuffled), batch_size)]


def stratified_split(labels, fraction=0.1, seed=0):
    """Seeded per-class holdout; returns (train_indices, holdout_indices), both sorted."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    holdout = []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        n = int(round(len(idx) * fraction))
        if len(idx) >= 2:
            n = min(max(n, 1), len(idx) - 1)
        else:
            n = 0
        holdout.extend(rng.permutation(idx)[:n].tolist())
    holdout = np.sort(np.asarray(holdout, dtype=np.int64))
    train = np.setdiff1d(np.arange(len(labels)), holdout)
    return train, holdout


def assign_folds(n, k, seed=0):
    """Balanced seeded fold ids in [0, k) for ``n`` samples."""
    if k < 2:
        raise ValidationError("k must be >= 2")
    folds = np.empty(n, dtype=np.int64)
    folds[np.random.default_rng(seed).permutation(n)] = np.arange(n) % k
    return folds


# -- synthetic data ------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Tone-signature classes: each clip sums its class's tones plus white noise."""

    n_classes: int = 2
    clips_per_class: int = 32
    class_tones: Optional[tuple] = None
    noise_level: float = 0.05
    duration: float = 1.0
    sample_rate: int = 16000
    seed: int = 0

    def tones(self):
        if self.class_tones is not None:
            tones = tuple(tuple(float(f) for f in t) for t in self.class_tones)
            if len(tones) != self.n_classes:
                raise SpecError(f"{len(tones)} tone sets for {self.n_classes} classes")
        else:
            tones = tuple((400.0 + 800.0 * c,) for c in range(self.n_classes))
        flat = [f for t in tones for f in t]
        if len(set(flat)) != len(flat):
            raise SpecError(f"class tone sets overlap: {tones}")
        if max(flat) >= self.sample_rate / 2:
            raise SpecError(f"tone {max(flat)} Hz at or above Nyquist")
        return tones


def synth_clip(spec, class_index, clip_index, tones=None):
    tones = tones or spec.tones()
    rng = np.random.default_rng([spec.seed, clip_index])
    t = np.arange(int(round(spec.duration * spec.sample_rate))) / spec.sample_rate
    signal = np.zeros_like(t)
    for freq in tones[class_index]:
        signal += np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    if spec.noise_level > 0:
        signal += spec.noise_level * rng.standard_normal(len(t))
    return 0.9 * signal / np.abs(signal).max()


def generate_synthetic_dataset(spec, out_dir):
    """Write WAVs plus ``manifest.tsv``; returns (manifest_path, entries, classes)."""
    tones = spec.tones()
    if spec.n_classes < 2 or spec.clips_per_class < 1:
        raise SpecError("need at least 2 classes and 1 clip per class")
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    index = 0
    for c in range(spec.n_classes):
        label = f"c{c}"
        for i in range(spec.clips_per_class):
            name = f"{label}_{i:04d}.wav"
            write_wav(os.path.join(out_dir, name), synth_clip(spec, c, index, tones),
                      spec.sample_rate)
            entries.append(ManifestEntry(f"{label}_{i:04d}", name, label))
            index += 1
    manifest = os.path.join(out_dir, "manifest.tsv")
    save_manifest(manifest, entries)
    return manifest, entries, sorted({e.label for e in entries})


# -- feature cache ---------------------------------------------------------------------

_UNSAFE = re.compile(r"[^A-Za-z0-9_.-]")


@dataclass
class FeatureCache:
    """Extract-once store keyed by (clip id, feature-config digest).

    ``extracted`` and ``cached`` count work done by the most recent ``load``.
    """

    root: str
    config: FeatureConfig = field(default_factory=FeatureConfig)
    extracted: int = 0
    cached: int = 0

    def __post_init__(self):
        os.makedirs(self.root, exist_ok=True)
        self.digest = self.config.validate().digest()
        self.index = {}
        index_path = os.path.join(self.root, "index.tsv")
        if os.path.exists(index_path):
            with open(index_path, encoding="utf-8") as fh:
                for line in fh:
                    parts = line.rstrip("\n").split("\t")
                    if len(parts) == 3:
                        self.index[(parts[0], parts[1])] = parts[2]

    def _filename(self, clip_id):
        return f"{_UNSAFE.sub('_', clip_id)}-{self.digest}.lfbe"

    def _publish(self, clip_id, filename):
        self.index[(clip_id, self.digest)] = filename
        with open(os.path.join(self.root, "index.tsv"), "a", encoding="utf-8") as fh:
            fh.write(f"{clip_id}\t{self.digest}\t{filename}\n")

    def get(self, entry, base_dir):
        filename = self.index.get((entry.clip_id, self.digest))
        if filename is not None:
            try:
                feats = read_feature_file(os.path.join(self.root, filename))
                if feats.clip_id != entry.clip_id:
                    raise FormatError(f"file holds clip {feats.clip_id!r}")
                self.cached += 1
                return feats
            except (OSError, FormatError, VersionError) as exc:
                log.warning("corrupt cache entry for %s (%s); re-extracting", entry.clip_id, exc)
        clip = read_wav(resolve_audio_path(entry, base_dir))
        feats = lfbe_extract(clip, self.config, entry.clip_id)
        filename = self._filename(entry.clip_id)
        tmp = os.path.join(self.root, filename + ".tmp")
        write_feature_file(tmp, feats)
        os.replace(tmp, os.path.join(self.root, filename))
        self._publish(entry.clip_id, filename)
        self.extracted += 1
        return feats

    def load(self, entries, base_dir):
        self.extracted = self.cached = 0
        return [self.get(e, base_dir) for e in entries]


def stack_features(features, frames, pad_value=float(np.log(1e-10))):
    """[n, 1, frames, mels] float32 array, cropping or padding along time."""
    if not features:
        raise EmptyInputError("no features to stack")
    mels = features[0].matrix.shape[1]
    out = np.full((len(features), 1, frames, mels), pad_value, dtype=np.float32)
    for i, f in enumerate(features):
        n = min(frames, f.matrix.shape[0])
        out[i, 0, :n] = f.matrix[:n]
    return out
