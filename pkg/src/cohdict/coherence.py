"""Frame-quality metrics: coherence, Welch bound, Gram histogram, spectrum."""

from __future__ import annotations

import math

import numpy as np

from cohdict.types import Dictionary, GramSummary, ValidationError


def _atoms(d) -> np.ndarray:
    return d.atoms if isinstance(d, Dictionary) else np.asarray(d, dtype=np.float64)


def _upper_offdiag(d) -> np.ndarray:
    a = _atoms(d)
    if a.shape[1] < 2:
        raise ValidationError("coherence needs at least two atoms")
    g = a.T @ a
    return np.abs(g[np.triu_indices(a.shape[1], k=1)])


def mutual_coherence(d) -> float:
    """Largest magnitude of an off-diagonal Gram entry, clamped to [0, 1]."""
    return float(min(1.0, _upper_offdiag(d).max()))


def welch_bound(dim: int, size: int) -> float:
    """Lower bound on the coherence of ``size`` unit vectors in ``dim`` dimensions."""
    if dim < 1 or size < 1:
        raise ValidationError("dimension and size must be positive")
    if size <= dim:
        return 0.0
    return math.sqrt((size - dim) / (dim * (size - 1)))


def erc_max_cardinality(mu: float) -> int:
    """Largest k with k < (1 + 1/mu) / 2.

    Signals with an exact k-sparse coding of at most this cardinality have
    their support recovered by OMP.
    """
    if not mu > 0:
        raise ValidationError("coherence must be positive; the bound is infinite at mu = 0")
    if mu > 1:
        raise ValidationError("coherence cannot exceed 1")
    bound = 0.5 * (1.0 + 1.0 / mu)
    nearest = round(bound)
    if abs(bound - nearest) <= 1e-12 * bound:
        return int(nearest) - 1
    return int(math.ceil(bound)) - 1


def gram_offdiag_histogram(d, num_bins: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of |<atom_i, atom_j>| for i < j over ``num_bins`` bins on [0, 1].

    Returns ``(edges, counts)``; the last bin is closed on the right.
    Magnitudes are rounded to 12 decimals first so values that sit on a bin
    edge up to rounding land in the bin starting at that edge.
    """
    if num_bins < 1:
        raise ValidationError("num_bins must be positive")
    vals = np.minimum(np.round(_upper_offdiag(d), 12), 1.0)
    counts, edges = np.histogram(vals, bins=num_bins, range=(0.0, 1.0))
    return edges, counts


def singular_spectrum(d) -> np.ndarray:
    """Singular values in descending order, length min(D, L).

    Computed from the eigenvalues of the smaller of A A^T and A^T A.
    """
    a = _atoms(d)
    g = a @ a.T if a.shape[0] <= a.shape[1] else a.T @ a
    w = np.linalg.eigvalsh(g)[::-1]
    if w[-1] < -1e-10 * max(1.0, w[0]):
        raise ArithmeticError(f"Gram eigenvalue {w[-1]:.3e} is significantly negative")
    return np.sqrt(np.clip(w, 0.0, None))


def etf_flat_value(dim: int, size: int) -> float:
    """Common singular value sqrt(L/D) of an equiangular tight frame."""
    if dim < 1 or size < dim:
        raise ValidationError("etf_flat_value needs size >= dim >= 1")
    return math.sqrt(size / dim)


def gram_summary(d, num_bins: int = 20) -> GramSummary:
    a = _atoms(d)
    dim, size = a.shape
    edges, counts = gram_offdiag_histogram(a, num_bins)
    return GramSummary(
        mutual_coherence=mutual_coherence(a),
        welch_bound=welch_bound(dim, size),
        hist_edges=tuple(float(e) for e in edges),
        hist_counts=tuple(int(c) for c in counts),
        singular_values=tuple(float(s) for s in singular_spectrum(a)),
        etf_flat_value=math.sqrt(size / dim),
        etf_admissible=size <= dim * (dim + 1) // 2,
    )
