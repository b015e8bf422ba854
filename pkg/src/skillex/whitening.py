"""Whitening of token embeddings: fit a linear map, apply it to vectors.

Fitting centers the sample and rescales it along the eigenvectors of its
covariance so the transformed sample has zero mean and identity covariance.
The full dimensionality is kept: no components are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embedio import EmbeddingMatrix
from .errors import AlignmentError, DataError

# Eigenvalues below this fraction of the spectrum's maximum are clamped so
# near-singular directions cannot blow up the transform.
EIGENVALUE_CLAMP_RATIO = 1e-10


@dataclass(frozen=True)
class WhiteningModel:
    """A fitted whitening map: subtract ``mean``, then multiply by ``transform``."""

    mean: np.ndarray       # (dims,) float64
    transform: np.ndarray  # (dims, dims) float64
    clamp_count: int

    def __post_init__(self):
        if self.mean.ndim != 1 or self.transform.shape != (self.mean.size,) * 2:
            raise DataError("mean and transform shapes are inconsistent")
        if not (np.isfinite(self.mean).all() and np.isfinite(self.transform).all()):
            raise DataError("whitening model contains NaN or Inf")

    @property
    def dims(self) -> int:
        return self.mean.size


def _as_sample(sample) -> np.ndarray:
    if isinstance(sample, EmbeddingMatrix):
        arr = sample.data
    else:
        arr = np.asarray(sample)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"fitting sample must be 2-D, got {arr.ndim}-D")
    if not np.isfinite(arr).all():
        raise DataError("fitting sample contains NaN or Inf")
    return arr


def fit(sample) -> WhiteningModel:
    """Fit a whitening model on a (rows x dims) sample.

    The covariance uses the 1/N convention.  Its symmetric eigendecomposition
    gives the map W = U diag(eigenvalue^-1/2); eigenvalues below
    ``EIGENVALUE_CLAMP_RATIO`` times the largest one are clamped (counted in
    ``clamp_count``) so the transform stays finite on rank-deficient samples.
    Eigenvector signs are canonicalized (first nonzero component positive),
    making refits on identical data bit-reproducible.
    """
    x = _as_sample(sample)
    n, dims = x.shape
    if n < 2:
        raise DataError(f"whitening needs at least 2 rows, got {n}")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / n

    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    for j in range(dims):
        col = eigenvectors[:, j]
        nonzero = np.nonzero(col)[0]
        if nonzero.size and col[nonzero[0]] < 0:
            eigenvectors[:, j] = -col

    lam_max = float(eigenvalues[-1])
    # A zero spectrum means every point coincides; any finite map whitens the
    # (all-zero) centered sample, so fall back to the plain rotation.
    floor = lam_max * EIGENVALUE_CLAMP_RATIO if lam_max > 0.0 else 1.0
    clamp_count = int(np.count_nonzero(eigenvalues < floor))
    clamped = np.maximum(eigenvalues, floor)

    transform = eigenvectors * (1.0 / np.sqrt(clamped))
    return WhiteningModel(mean=mean, transform=transform, clamp_count=clamp_count)


def apply(model: WhiteningModel, vectors) -> np.ndarray:
    """Whiten a vector or a (rows x dims) batch; returns float64.

    Raises :class:`AlignmentError` if the vector width does not match the
    model, naming both widths.
    """
    if isinstance(vectors, EmbeddingMatrix):
        vectors = vectors.data
    arr = np.asarray(vectors, dtype=np.float64)
    if arr.ndim not in (1, 2):
        raise DataError(f"expected a vector or matrix, got {arr.ndim}-D input")
    if arr.shape[-1] != model.dims:
        raise AlignmentError(
            f"input width {arr.shape[-1]} does not match model width {model.dims}"
        )
    if not np.isfinite(arr).all():
        raise DataError("input contains NaN or Inf")
    return (arr - model.mean) @ model.transform
