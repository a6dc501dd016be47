"""Shared construction helpers for the test suite."""

import numpy as np

from dualbatch import make_dataset


def dataset_from_dense(X, y, d=None):
    """Build a Dataset from a dense matrix, keeping only nonzero entries."""
    X = np.asarray(X, dtype=np.float64)
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for row in X:
        nz = np.flatnonzero(row)
        assert nz.size, "test matrices must not contain zero rows"
        indices.extend(nz.tolist())
        data.extend(row[nz].tolist())
        indptr.append(len(indices))
    return make_dataset(indptr, indices, data, y,
                        d=d if d is not None else X.shape[1])


def random_dense_dataset(rng, n, d, density=0.6, labels=None):
    """Random sparse-ish dataset with no zero rows and +-1 labels."""
    X = rng.standard_normal((n, d))
    mask = rng.random((n, d)) < density
    mask[np.arange(n), rng.integers(0, d, n)] = True
    X = np.where(mask, X, 0.0)
    X[mask & (X == 0.0)] = 0.5
    y = labels if labels is not None else rng.choice([-1.0, 1.0], n)
    return dataset_from_dense(X, y)


def feasible_alpha(rng, loss, labels, scale=1.0):
    """Random dual-feasible point: alpha_i * y_i in [0, scale] for the box
    losses, unconstrained Gaussian for the square loss."""
    n = labels.shape[0]
    if loss.kind == "square":
        return rng.standard_normal(n) * scale
    return rng.uniform(0.0, 1.0, n) * labels * scale
