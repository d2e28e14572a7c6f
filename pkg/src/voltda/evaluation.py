"""Nearest-centroid classification of flattened persistence images."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError
from .image import read_pi_csv

MIN_PER_CLASS = 4
TRAIN_FRACTION = 0.7


@dataclass
class EvalReport:
    classes: list[str]
    confusion: list[list[int]]  # rows: true class, columns: predicted class
    accuracy: float
    per_class: dict[str, dict[str, int]]
    n_train: int
    n_test: int
    fingerprint: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def stratified_split(labels, seed: int, train_fraction: float = TRAIN_FRACTION):
    """Per-class shuffled split; returns sorted (train, test) index arrays."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == cls)
        if len(idx) < MIN_PER_CLASS:
            raise InsufficientDataError(f"class {cls!r} has {len(idx)} samples, need {MIN_PER_CLASS}")
        idx = rng.permutation(idx)
        n_train = int(round(train_fraction * len(idx)))
        n_train = min(max(n_train, 1), len(idx) - 1)
        train.extend(idx[:n_train].tolist())
        test.extend(idx[n_train:].tolist())
    return np.array(sorted(train)), np.array(sorted(test))


def nearest_centroid(x_train, y_train, x_test):
    classes = sorted(set(np.asarray(y_train).tolist()))
    y_train = np.asarray(y_train)
    centroids = np.stack([x_train[y_train == c].mean(axis=0) for c in classes])
    d2 = ((x_test[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    # argmin returns the first minimum, i.e. the smallest class label on ties
    return [classes[i] for i in np.argmin(d2, axis=1)]


def evaluate(features: np.ndarray, labels, seed: int = 0, fingerprint: str = "") -> EvalReport:
    labels = [str(v) for v in labels]
    if len(set(labels)) < 2:
        raise InsufficientDataError("need at least two classes")
    features = np.asarray(features, dtype=np.float64).reshape(len(labels), -1)
    train, test = stratified_split(labels, seed)
    y = np.array(labels)
    pred = nearest_centroid(features[train], y[train], features[test])
    classes = sorted(set(labels))
    pos = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y[test], pred):
        confusion[pos[t], pos[p]] += 1
    per_class = {
        c: {"train": int((y[train] == c).sum()), "test": int((y[test] == c).sum()),
            "correct": int(confusion[pos[c], pos[c]])}
        for c in classes
    }
    return EvalReport(
        classes=classes,
        confusion=confusion.tolist(),
        accuracy=float(np.trace(confusion) / confusion.sum()),
        per_class=per_class,
        n_train=len(train),
        n_test=len(test),
        fingerprint=fingerprint,
    )


def read_labels(path: str | Path) -> list[tuple[str, str]]:
    with open(path, newline="") as fh:
        return [(row["file"], row["label"]) for row in csv.DictReader(fh)]


def load_features(pi_dir: str | Path, stems, hom_dims) -> np.ndarray:
    """Concatenate the flattened H_k images of every stem, in ``hom_dims`` order."""
    pi_dir = Path(pi_dir)
    rows = []
    for stem in stems:
        parts = [read_pi_csv(pi_dir / f"{stem}.H{k}.pi.csv").ravel() for k in hom_dims]
        rows.append(np.concatenate(parts))
    return np.stack(rows)


def evaluate_dir(pi_dir, labels_csv, hom_dims=(2,), seed: int = 0) -> EvalReport:
    entries = read_labels(labels_csv)
    stems = [Path(f).stem for f, _ in entries]
    labels = [lab for _, lab in entries]
    x = load_features(pi_dir, stems, hom_dims)
    tag = json.dumps({"stems": stems, "hom_dims": list(hom_dims), "seed": seed}, sort_keys=True)
    return evaluate(x, labels, seed, hashlib.sha256(tag.encode()).hexdigest()[:16])
