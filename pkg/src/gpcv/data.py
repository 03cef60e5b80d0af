"""Dataset loading, standardization, and train/test partition management.

Dataset files are delimited numeric text (comma or whitespace), one example
per row, with a configurable label column. Partition files hold 1-based index
lists, two lines per split::

    train: 1 4 5 ...
    test: 2 3 6 ...

Stratified random splits preserve the class ratio within one example per
class and are reproducible from a seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, ParseError, StratificationError


@dataclass(eq=False)
class Dataset:
    features: np.ndarray  # n x D
    labels: np.ndarray  # entries in {+1, -1}
    name: str = ""

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise InputError("dataset needs at least one example")
        if self.labels.shape != (self.features.shape[0],):
            raise InputError("label count does not match example count")
        if not np.all(np.isfinite(self.features)):
            raise InputError("dataset contains non-finite features")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise InputError("labels must be +1/-1")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def n_dims(self):
        return self.features.shape[1]

    def subset(self, indices):
        return Dataset(self.features[indices], self.labels[indices], self.name)


@dataclass(eq=False)
class PartitionSet:
    splits: list  # of (train_indices, test_indices) int arrays

    @property
    def count(self):
        return len(self.splits)

    def __iter__(self):
        return iter(self.splits)

    def __len__(self):
        return len(self.splits)


def load_dataset(path, label_col=0, delimiter=None, label_map="auto", name=None):
    """Parse a delimited numeric text file into a Dataset.

    ``label_map`` is ``"auto"`` (accept {0,1} or {-1,+1} encodings), ``"01"``
    (force 0 -> -1, 1 -> +1) or ``"pm1"``. Parse failures report the 1-based
    line number.
    """
    rows = []
    labels = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(delimiter) if delimiter else line.replace(",", " ").split()
            if width is None:
                width = len(parts)
                if width < 2:
                    raise ParseError("need at least one feature and a label", lineno)
            elif len(parts) != width:
                raise ParseError(
                    f"ragged row: expected {width} fields, found {len(parts)}", lineno
                )
            try:
                values = [float(tok) for tok in parts]
            except ValueError:
                bad = next(tok for tok in parts if not _is_number(tok))
                raise ParseError(f"non-numeric field {bad!r}", lineno) from None
            col = label_col if label_col >= 0 else len(values) + label_col
            labels.append(values[col])
            rows.append([v for i, v in enumerate(values) if i != col])
    if not rows:
        raise ParseError("file holds no data rows", None)

    y = np.asarray(labels, dtype=float)
    uniq = set(np.unique(y).tolist())
    if label_map == "01" or (label_map == "auto" and uniq <= {0.0, 1.0}):
        if not uniq <= {0.0, 1.0}:
            raise InputError(f"labels {sorted(uniq)} are not 0/1 encoded")
        y = np.where(y > 0.5, 1.0, -1.0)
    elif not uniq <= {-1.0, 1.0}:
        raise InputError(f"unknown label encoding {sorted(uniq)}")
    return Dataset(np.asarray(rows, dtype=float), y, name or str(path))


def _is_number(tok):
    try:
        float(tok)
        return True
    except ValueError:
        return False


def save_dataset(dataset, path):
    """Write label-first comma-delimited text; round-trips through load."""
    with open(path, "w", encoding="utf-8") as fh:
        for y, row in zip(dataset.labels, dataset.features):
            fields = [f"{int(y):+d}"] + [repr(float(v)) for v in row]
            fh.write(",".join(fields) + "\n")


def binarize_multiclass(raw_labels, positive_class):
    """Map one class to +1 and everything else to -1."""
    raw = np.asarray(raw_labels)
    mask = raw == positive_class
    if not mask.any():
        raise InputError(f"class {positive_class!r} does not occur")
    return np.where(mask, 1.0, -1.0)


def stratified_partitions(dataset, nr, train_fraction, seed):
    """Random splits preserving the class ratio, reproducible from the seed."""
    if not 0.0 < train_fraction < 1.0:
        raise InputError("train_fraction must lie in (0, 1)")
    y = dataset.labels
    pos = np.flatnonzero(y > 0)
    neg = np.flatnonzero(y < 0)
    if pos.size < 2 or neg.size < 2:
        raise StratificationError("each class needs at least two examples")
    children = np.random.SeedSequence(seed).spawn(nr)
    splits = []
    for child in children:
        rng = np.random.default_rng(child)
        train_idx = []
        test_idx = []
        for cls in (pos, neg):
            k = int(round(cls.size * train_fraction))
            k = min(max(k, 1), cls.size - 1)  # keep both sides non-empty per class
            perm = rng.permutation(cls)
            train_idx.append(perm[:k])
            test_idx.append(perm[k:])
        splits.append(
            (
                np.sort(np.concatenate(train_idx)),
                np.sort(np.concatenate(test_idx)),
            )
        )
    return PartitionSet(splits)


def load_partitions(path, n_examples):
    """Read 1-based train/test index lines into a PartitionSet."""
    splits = []
    pending_train = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                tag, _, rest = line.partition(":")
                idx = np.asarray([int(tok) for tok in rest.split()], dtype=int)
            except ValueError:
                raise ParseError("malformed index line", lineno) from None
            if np.any(idx < 1) or np.any(idx > n_examples):
                raise ParseError(f"index out of range 1..{n_examples}", lineno)
            idx = idx - 1
            tag = tag.strip().lower()
            if tag == "train":
                if pending_train is not None:
                    raise ParseError("two train lines in a row", lineno)
                pending_train = idx
            elif tag == "test":
                if pending_train is None:
                    raise ParseError("test line without preceding train line", lineno)
                if np.intersect1d(pending_train, idx).size:
                    raise ParseError("train and test indices overlap", lineno)
                splits.append((pending_train, idx))
                pending_train = None
            else:
                raise ParseError(f"unknown line tag {tag!r}", lineno)
    if pending_train is not None:
        raise ParseError("train line without matching test line", None)
    if not splits:
        raise ParseError("partition file holds no splits", None)
    return PartitionSet(splits)


def save_partitions(partitions, path):
    with open(path, "w", encoding="utf-8") as fh:
        for train, test in partitions:
            fh.write("train: " + " ".join(str(i + 1) for i in train) + "\n")
            fh.write("test: " + " ".join(str(i + 1) for i in test) + "\n")


def standardize(train_features, test_features=None):
    """Per-dimension zero mean / unit variance fitted on the training block.

    Returns ``(train_s, test_s, mean, scale)``; zero-variance dimensions pass
    through with scale 1. Statistics never see the test block.
    """
    train = np.asarray(train_features, dtype=float)
    if train.shape[0] < 2:
        raise InputError("standardization needs at least two training rows")
    mean = train.mean(axis=0)
    scale = train.std(axis=0)
    scale = np.where(scale > 0.0, scale, 1.0)
    train_s = (train - mean) / scale
    test_s = None
    if test_features is not None:
        test_s = (np.asarray(test_features, dtype=float) - mean) / scale
    return train_s, test_s, mean, scale
