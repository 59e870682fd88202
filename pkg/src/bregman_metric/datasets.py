"""Synthetic generators, the nonlinear matching task, and CSV ingestion."""

import csv
from dataclasses import InitVar, dataclass

import numpy as np

from .errors import ParseError
from .numeric import FLOAT, make_rng


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_count: int
    name: str = "dataset"
    # a split of a dataset may legitimately miss a class
    require_all_classes: InitVar[bool] = True

    def __post_init__(self, require_all_classes):
        self.features = np.asarray(self.features, dtype=FLOAT)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_count = int(self.class_count)
        self.validate(require_all_classes)

    def validate(self, require_all_classes=True):
        if self.features.ndim != 2:
            raise ValueError(f"features must be n x p, got shape {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("one label per feature row is required")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        missing = set(range(self.class_count)) - set(self.labels.tolist())
        if missing and require_all_classes:
            raise ValueError(f"classes {sorted(missing)} have no samples")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def subset(self, idx, name=None):
        """Rows ``idx``; the class count is kept so label ids stay comparable."""
        idx = np.asarray(idx)
        return Dataset(self.features[idx], self.labels[idx], self.class_count,
                       name or self.name, require_all_classes=False)


def _class_counts(n, C):
    return [n // C + (1 if c < n % C else 0) for c in range(C)]


def make_blobs(n, C, p=2, spread=0.3, seed=0):
    """C isotropic Gaussian clusters; centers evenly spaced on the unit circle
    in the first two coordinates (on a line when p == 1)."""
    if not (n >= C >= 2) or p < 1 or spread <= 0:
        raise ValueError("need n >= C >= 2, p >= 1 and spread > 0")
    rng = make_rng(seed)
    centers = np.zeros((C, p))
    if p == 1:
        centers[:, 0] = np.linspace(-1.0, 1.0, C)
    else:
        angles = 2.0 * np.pi * np.arange(C) / C
        centers[:, 0], centers[:, 1] = np.cos(angles), np.sin(angles)
    labels = np.repeat(np.arange(C), _class_counts(n, C))
    features = centers[labels] + spread * rng.normal(size=(n, p))
    order = rng.permutation(n)
    return Dataset(features[order], labels[order], C, "blobs")


def make_two_moons(n=400, noise=0.1, seed=0):
    """Two interleaved half circles; class 0 is the upper arc (cos t, sin t)."""
    if n < 4 or noise < 0:
        raise ValueError("need n >= 4 and noise >= 0")
    rng = make_rng(seed)
    n0, n1 = _class_counts(n, 2)
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    features = np.vstack([upper, lower])
    labels = np.repeat([0, 1], [n0, n1])
    if noise > 0:
        features = features + noise * rng.normal(size=features.shape)
    order = rng.permutation(n)
    return Dataset(features[order], labels[order], 2, "two_moons")


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------

class EmptyFileError(ParseError):
    pass


class MissingLabelColumnError(ParseError):
    pass


class NonNumericFeatureError(ParseError):
    pass


def load_csv(path):
    """Header ``f0,...,f{p-1},label``; integer labels are remapped to 0..C-1
    in increasing order of the original ids."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise EmptyFileError("file is empty", line=1)
    header = [h.strip() for h in rows[0]]
    if header[-1] != "label":
        raise MissingLabelColumnError("last column must be named 'label'", line=1)
    expected = [f"f{k}" for k in range(len(header) - 1)]
    if header[:-1] != expected:
        raise ParseError(f"feature columns must be {expected}, got {header[:-1]}", line=1)
    body = [(lineno, r) for lineno, r in enumerate(rows[1:], start=2) if r]
    if not body:
        raise EmptyFileError("no data rows", line=2)

    features, raw_labels = [], []
    for lineno, row in body:
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            values = [float(v) for v in row[:-1]]
        except ValueError:
            raise NonNumericFeatureError(f"non-numeric feature in {row[:-1]}", line=lineno) from None
        if not all(np.isfinite(values)):
            raise NonNumericFeatureError("features must be finite", line=lineno)
        try:
            raw_labels.append(int(row[-1]))
        except ValueError:
            raise ParseError(f"label '{row[-1]}' is not an integer", line=lineno) from None
        features.append(values)

    classes, labels = np.unique(np.asarray(raw_labels), return_inverse=True)
    return Dataset(np.asarray(features), labels, len(classes), str(path))


def save_csv(dataset, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{k}" for k in range(dataset.feature_dim)] + ["label"])
        for x, y in zip(dataset.features, dataset.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])


# --------------------------------------------------------------------------
# nonlinear matching task
# --------------------------------------------------------------------------

MAPPINGS = ("nonlinear", "identity")


def nonlinear_map(left):
    """g(x, y) = (0.5 x + sin(3 y), y^2 + 0.5 sin(3 x)), applied row-wise."""
    left = np.asarray(left, dtype=FLOAT)
    x, y = left[..., 0], left[..., 1]
    return np.stack([0.5 * x + np.sin(3.0 * y), y**2 + 0.5 * np.sin(3.0 * x)], axis=-1)


def derangement(n, rng):
    """Sattolo's algorithm: a uniformly random n-cycle, hence no fixed points."""
    if n < 2:
        raise ValueError("a derangement needs n >= 2")
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


@dataclass
class MatchingTask:
    """Support pairs (all true matches) and a balanced, labelled query set.

    ``query_labels[k]`` is 1 when ``query_right[k]`` is the image of
    ``query_left[k]`` and 0 otherwise.
    """

    support_left: np.ndarray
    support_right: np.ndarray
    query_left: np.ndarray
    query_right: np.ndarray
    query_labels: np.ndarray
    mapping: str = "nonlinear"

    @property
    def support_pairs(self):
        return list(zip(self.support_left, self.support_right))

    @property
    def query_pairs(self):
        return list(zip(self.query_left, self.query_right, self.query_labels.tolist()))


def make_nonlinear_matching(grid_size=20, noise=0.02, seed=0, mapping="nonlinear"):
    """Left points on a grid_size x grid_size grid over [-1, 1]^2, right = g(left) + noise.

    The shuffled grid is split in half: the first half forms the support
    pairs; every left point of the second half is queried twice, once with
    its own right point and once with the right point of another query
    (a derangement), so the query set is exactly balanced.
    """
    if grid_size < 4 or noise < 0:
        raise ValueError("need grid_size >= 4 and noise >= 0")
    if mapping not in MAPPINGS:
        raise ValueError(f"mapping must be one of {MAPPINGS}")
    rng = make_rng(seed)
    axis = np.linspace(-1.0, 1.0, grid_size)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    left = np.column_stack([gx.ravel(), gy.ravel()])[rng.permutation(grid_size**2)]
    image = nonlinear_map(left) if mapping == "nonlinear" else left.copy()
    right = image + noise * rng.normal(size=left.shape)

    half = left.shape[0] // 2
    q_left, q_right = left[half:], right[half:]
    perm = derangement(q_left.shape[0], rng)
    n_q = q_left.shape[0]
    return MatchingTask(
        support_left=left[:half],
        support_right=right[:half],
        query_left=np.vstack([q_left, q_left]),
        query_right=np.vstack([q_right, q_right[perm]]),
        query_labels=np.repeat([1, 0], n_q),
        mapping=mapping,
    )
