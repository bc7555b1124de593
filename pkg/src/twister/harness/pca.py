"""Principal-component projection of cube features."""

from __future__ import annotations

import numpy as np


def pca_project(data: np.ndarray, k: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Project rows of ``data`` onto the top-``k`` principal components.

    Components come from the covariance eigendecomposition, ordered by
    descending eigenvalue; each is signed so its largest-magnitude loading is
    positive. Returns ``(projection (n, k), explained_variance_fraction (k,))``;
    missing components (feature dim < k) are zero columns.
    """
    data = np.asarray(data, dtype=np.float64)
    n, d = data.shape
    if n < 3:
        raise ValueError(f"PCA needs at least 3 samples, got {n}")
    centered = data - data.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:k]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    evecs = evecs * np.where(signs == 0, 1.0, signs)
    proj = np.zeros((n, k))
    proj[:, : evecs.shape[1]] = centered @ evecs
    total = np.clip(np.linalg.eigvalsh(cov), 0.0, None).sum()
    frac = np.zeros(k)
    if total > 0:
        frac[: evals.shape[0]] = evals / total
    return proj, frac
