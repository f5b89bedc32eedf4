"""Greedy sparse coders: orthogonal matching pursuit and LARC.

LARC is least-angle regression stopped at the first breakpoint where the
residual has become incoherent with the dictionary, i.e. where
``max_j |<atom_j, r>| / ||r|| < mu_dl``. Its coefficients are de-biased by a
least-squares refit on the final active set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from cohdict.types import DataMatrix, Dictionary, SparseCoding, ValidationError

COND_LIMIT = 1e12
REL_RESIDUAL_FLOOR = 1e-12


class CodingError(RuntimeError):
    """A coder failed on a particular data column."""

    def __init__(self, column: int, cause: Exception):
        super().__init__(f"column {column}: {cause}")
        self.column = column


@dataclass(frozen=True)
class Cardinality:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError(f"cardinality must be a positive integer, got {self.k}")


@dataclass(frozen=True)
class ResidualNorm:
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValidationError("residual norm tolerance must be positive")


@dataclass(frozen=True)
class ResidualCoherence:
    mu_dl: float

    def __post_init__(self):
        if not 0 < self.mu_dl <= 1:
            raise ValidationError("residual coherence threshold must be in (0, 1]")


StopRule = Union[Cardinality, ResidualNorm, ResidualCoherence]


@dataclass(frozen=True)
class Larc:
    """Coder spec selecting LARC with residual coherence threshold ``mu_dl``."""

    mu_dl: float = 0.2

    def __post_init__(self):
        if not 0 < self.mu_dl <= 1:
            raise ValidationError("LARC threshold mu_dl must be in (0, 1]")


CoderSpec = Union[Cardinality, ResidualNorm, ResidualCoherence, Larc]


class _GrowingCholesky:
    """Lower Cholesky factor of the Gram block of a growing atom set."""

    def __init__(self, gram: np.ndarray, capacity: int):
        self.gram = gram
        self.low = np.zeros((capacity, capacity))
        self.k = 0
        self.dmin = np.inf
        self.dmax = 0.0

    def try_add(self, j: int, members) -> bool:
        """Append atom ``j``; refuse (and leave the factor intact) if ill-conditioned."""
        k = self.k
        if k:
            w = solve_triangular(self.low[:k, :k], self.gram[members, j], lower=True, check_finite=False)
            dd = self.gram[j, j] - w @ w
        else:
            dd = self.gram[j, j]
        if not dd > 0:
            return False
        diag = np.sqrt(dd)
        dmin, dmax = min(self.dmin, diag), max(self.dmax, diag)
        if (dmax / dmin) ** 2 > COND_LIMIT:
            return False
        if k:
            self.low[k, :k] = w
        self.low[k, k] = diag
        self.k, self.dmin, self.dmax = k + 1, dmin, dmax
        return True

    def solve(self, b: np.ndarray) -> np.ndarray:
        return cho_solve((self.low[: self.k, : self.k], True), b, check_finite=False)


def _check_x(atoms: np.ndarray, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != atoms.shape[0]:
        raise ValidationError(f"signal has length {x.shape[0]}, dictionary dimension is {atoms.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValidationError("signal contains non-finite entries")
    return x


def _omp(atoms, gram, x, stop, max_atoms=None):
    """Core OMP loop; returns (support, coefs, residual norm after each step)."""
    dim, size = atoms.shape
    limit = min(dim, size) if max_atoms is None else max_atoms
    xnorm = float(np.sqrt(x @ x))
    support: list[int] = []
    coefs = np.zeros(0)
    norms = [xnorm]
    if xnorm == 0.0:
        return support, coefs, norms
    chol = _GrowingCholesky(gram, limit)
    proj = atoms.T @ x
    eligible = np.ones(size, dtype=bool)
    r = x
    rnorm = xnorm
    while True:
        if isinstance(stop, Cardinality) and len(support) >= stop.k:
            break
        if isinstance(stop, ResidualNorm) and rnorm <= stop.eps:
            break
        if rnorm < REL_RESIDUAL_FLOOR * xnorm or len(support) >= limit:
            break
        corr = np.abs(atoms.T @ r)
        if isinstance(stop, ResidualCoherence) and corr.max() / rnorm < stop.mu_dl:
            break
        corr[~eligible] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 0.0:
            break
        eligible[j] = False
        if not chol.try_add(j, support):
            # near-duplicate of a selected atom
            continue
        support.append(j)
        coefs = chol.solve(proj[support])
        r = x - atoms[:, support] @ coefs
        rnorm = float(np.sqrt(r @ r))
        norms.append(rnorm)
    return support, coefs, norms


def omp(dictionary: Dictionary, x, stop: StopRule, *, gram=None, return_residuals=False):
    """Orthogonal matching pursuit for a single signal.

    Each step selects the atom most correlated with the residual (lowest
    index on ties) and refits all selected coefficients by least squares.
    An atom whose inclusion makes the selected Gram block numerically
    singular is marked ineligible and skipped.

    Returns a one-column ``SparseCoding``; with ``return_residuals=True``
    also the residual norm after each selection (entry 0 is ``||x||``).
    """
    atoms = dictionary.atoms
    x = _check_x(atoms, x)
    if isinstance(stop, Cardinality) and stop.k > min(atoms.shape):
        raise ValidationError(f"cardinality {stop.k} exceeds min(D, L) = {min(atoms.shape)}")
    if gram is None:
        gram = atoms.T @ atoms
    support, coefs, norms = _omp(atoms, gram, x, stop)
    coding = SparseCoding(atoms.shape[1], (np.array(support, dtype=np.int64),), (coefs,))
    if return_residuals:
        return coding, np.array(norms)
    return coding


def _larc(atoms, gram, x, mu_dl):
    dim, size = atoms.shape
    limit = min(dim, size)
    xnorm = float(np.sqrt(x @ x))
    if xnorm == 0.0:
        return [], np.zeros(0)
    active: list[int] = []
    inactive = np.ones(size, dtype=bool)
    chol = _GrowingCholesky(gram, limit)
    r = x
    while True:
        rnorm = float(np.sqrt(r @ r))
        if rnorm < REL_RESIDUAL_FLOOR * xnorm:
            break
        c = atoms.T @ r
        cabs = np.abs(c)
        if cabs.max() / rnorm < mu_dl or len(active) >= limit:
            break
        cand = np.where(inactive, cabs, -1.0)
        j = int(np.argmax(cand))
        if cand[j] <= 0.0 or not chol.try_add(j, active):
            break
        active.append(j)
        inactive[j] = False

        # equiangular direction over the active set
        signs = np.sign(c[active])
        w = chol.solve(signs)
        scale = 1.0 / np.sqrt(signs @ w)
        w *= scale
        u = atoms[:, active] @ w
        a = atoms.T @ u
        big_c = float(cabs[active].max())
        step = big_c / scale
        ci, ai = c[inactive], a[inactive]
        if ci.size:
            with np.errstate(divide="ignore", invalid="ignore"):
                g = np.concatenate([(big_c - ci) / (scale - ai), (big_c + ci) / (scale + ai)])
            g = g[g > 0]
            if g.size:
                step = min(step, float(g.min()))
        r = r - step * u
    if not active:
        return [], np.zeros(0)
    # de-bias: least-squares refit on the final active set
    return active, chol.solve(atoms[:, active].T @ x)


def larc(dictionary: Dictionary, x, mu_dl: float = 0.2, *, gram=None) -> SparseCoding:
    """LARS homotopy with the residual-coherence stopping rule.

    The active set grows one atom per breakpoint. Coding stops at the
    first breakpoint where the residual coherence drops below ``mu_dl``,
    the residual vanishes, or the active Gram block becomes singular.
    """
    Larc(mu_dl)
    atoms = dictionary.atoms
    x = _check_x(atoms, x)
    if gram is None:
        gram = atoms.T @ atoms
    active, coefs = _larc(atoms, gram, x, mu_dl)
    return SparseCoding(atoms.shape[1], (np.array(active, dtype=np.int64),), (coefs,))


def batch_code(dictionary: Dictionary, data, coder: CoderSpec) -> SparseCoding:
    """Code every column of ``data`` independently."""
    atoms = dictionary.atoms
    x = data.columns if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != atoms.shape[0]:
        raise ValidationError(f"data shape {x.shape} does not match dictionary dimension {atoms.shape[0]}")
    if isinstance(coder, Cardinality) and coder.k > min(atoms.shape):
        raise ValidationError(f"cardinality {coder.k} exceeds min(D, L) = {min(atoms.shape)}")
    gram = atoms.T @ atoms
    idx, val = [], []
    for n in range(x.shape[1]):
        col = np.ascontiguousarray(x[:, n])
        try:
            if isinstance(coder, Larc):
                s, c = _larc(atoms, gram, col, coder.mu_dl)
            else:
                s, c, _ = _omp(atoms, gram, col, coder)
        except Exception as exc:
            raise CodingError(n, exc) from exc
        idx.append(np.array(s, dtype=np.int64))
        val.append(c)
    return SparseCoding(atoms.shape[1], tuple(idx), tuple(val))


def residual_norms(dictionary: Dictionary, data, coding: SparseCoding) -> np.ndarray:
    """Per-column ||x_n - D c_n||."""
    x = data.columns if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    atoms = dictionary.atoms if isinstance(dictionary, Dictionary) else np.asarray(dictionary)
    return np.linalg.norm(x - atoms @ coding.to_dense(), axis=0)
