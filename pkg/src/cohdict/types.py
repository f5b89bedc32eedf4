"""Core data types shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ATOM_NORM_TOL = 1e-9
ZERO_ATOM_NORM = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="F", copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dictionary:
    """D x L matrix whose columns (atoms) have unit l2 norm.

    Construction renormalizes columns whose norm is off 1 by more than
    ``ATOM_NORM_TOL`` (so rebuilding from existing atoms is bit-exact); a
    column with norm below ``1e-12`` is rejected since a zero atom always
    signals an upstream bug.
    """

    atoms: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.atoms, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValidationError(f"dictionary must be a non-empty 2-D matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("dictionary contains non-finite entries")
        norms = np.linalg.norm(a, axis=0)
        bad = np.flatnonzero(norms < ZERO_ATOM_NORM)
        if bad.size:
            raise ValidationError(f"atoms {bad.tolist()} have norm below {ZERO_ATOM_NORM}")
        scale = np.where(np.abs(norms - 1.0) > ATOM_NORM_TOL, norms, 1.0)
        object.__setattr__(self, "atoms", _frozen(a / scale))

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    @property
    def size(self) -> int:
        return self.atoms.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.atoms.shape

    def __array__(self, dtype=None, copy=None):
        return self.atoms if dtype is None else self.atoms.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Dictionary):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms)

    def __hash__(self):
        return hash(self.atoms.tobytes())


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """D x N matrix of observations stored column-wise."""

    columns: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.columns, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValidationError(f"data must be a non-empty 2-D matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("data contains non-finite entries")
        object.__setattr__(self, "columns", _frozen(a))

    @property
    def dim(self) -> int:
        return self.columns.shape[0]

    @property
    def n(self) -> int:
        return self.columns.shape[1]

    def __array__(self, dtype=None, copy=None):
        return self.columns if dtype is None else self.columns.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, DataMatrix):
            return NotImplemented
        return np.array_equal(self.columns, other.columns)

    def __hash__(self):
        return hash(self.columns.tobytes())


@dataclass(frozen=True, eq=False)
class SparseCoding:
    """L x N coefficient matrix kept as per-column (indices, values) pairs.

    Indices are stored in selection order, which is the order the coder
    activated the atoms.
    """

    n_atoms: int
    indices: tuple[np.ndarray, ...]
    values: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.n_atoms < 1:
            raise ValidationError("coding needs at least one atom")
        if len(self.indices) != len(self.values):
            raise ValidationError("indices and values differ in column count")
        idx_cols, val_cols = [], []
        for n, (idx, val) in enumerate(zip(self.indices, self.values)):
            idx = np.asarray(idx, dtype=np.int64).reshape(-1)
            val = np.asarray(val, dtype=np.float64).reshape(-1)
            if idx.shape != val.shape:
                raise ValidationError(f"column {n}: {idx.size} indices but {val.size} values")
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_atoms):
                raise ValidationError(f"column {n}: atom index out of range [0, {self.n_atoms})")
            if np.unique(idx).size != idx.size:
                raise ValidationError(f"column {n}: repeated atom index")
            idx.setflags(write=False)
            val.setflags(write=False)
            idx_cols.append(idx)
            val_cols.append(val)
        object.__setattr__(self, "indices", tuple(idx_cols))
        object.__setattr__(self, "values", tuple(val_cols))

    @classmethod
    def from_columns(cls, n_atoms: int, columns: Sequence[tuple]) -> SparseCoding:
        """Build from a sequence of ``(indices, values)`` pairs."""
        return cls(n_atoms, tuple(c[0] for c in columns), tuple(c[1] for c in columns))

    @classmethod
    def from_dense(cls, c: np.ndarray) -> SparseCoding:
        c = np.asarray(c, dtype=np.float64)
        idx = [np.flatnonzero(c[:, n]) for n in range(c.shape[1])]
        return cls(c.shape[0], tuple(idx), tuple(c[i, n] for n, i in enumerate(idx)))

    @classmethod
    def empty(cls, n_atoms: int, n_columns: int) -> SparseCoding:
        z_i, z_v = np.zeros(0, np.int64), np.zeros(0)
        return cls(n_atoms, (z_i,) * n_columns, (z_v,) * n_columns)

    @property
    def n_columns(self) -> int:
        return len(self.indices)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_atoms, self.n_columns)

    def cardinality(self, n: int) -> int:
        return int(self.indices[n].size)

    def cardinalities(self) -> np.ndarray:
        return np.array([i.size for i in self.indices], dtype=np.int64)

    def support(self, n: int) -> frozenset[int]:
        return frozenset(int(i) for i in self.indices[n])

    def column(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        return self.indices[n], self.values[n]

    def to_dense(self) -> np.ndarray:
        c = np.zeros(self.shape)
        for n, (idx, val) in enumerate(zip(self.indices, self.values)):
            c[idx, n] = val
        return c

    def usage(self) -> np.ndarray:
        """Number of columns using each atom."""
        counts = np.zeros(self.n_atoms, dtype=np.int64)
        for idx in self.indices:
            counts[idx] += 1
        return counts

    def drop_atoms(self, atoms: Sequence[int]) -> SparseCoding:
        """Return a copy with all coefficients of ``atoms`` removed."""
        drop = np.asarray(sorted(set(int(a) for a in atoms)), dtype=np.int64)
        if drop.size == 0:
            return self
        new_i, new_v = [], []
        for idx, val in zip(self.indices, self.values):
            keep = ~np.isin(idx, drop)
            new_i.append(idx[keep])
            new_v.append(val[keep])
        return SparseCoding(self.n_atoms, tuple(new_i), tuple(new_v))

    def __eq__(self, other):
        if not isinstance(other, SparseCoding):
            return NotImplemented
        return (
            self.n_atoms == other.n_atoms
            and self.n_columns == other.n_columns
            and all(np.array_equal(a, b) for a, b in zip(self.indices, other.indices))
            and all(np.array_equal(a, b) for a, b in zip(self.values, other.values))
        )

    __hash__ = None


CODERS = ("omp", "larc")


@dataclass(frozen=True)
class TrainConfig:
    """Settings for one alternating-minimization run.

    ``coder_param`` is the cardinality K for OMP and the residual coherence
    threshold for LARC.
    """

    gamma: float = 0.0
    iterations: int = 25
    coder: str = "larc"
    coder_param: float = 0.2
    lbfgs_inner_iters: int = 10
    lbfgs_memory: int = 7
    seed: int = 0

    def __post_init__(self):
        if not np.isfinite(self.gamma) or self.gamma < 0:
            raise ValidationError(f"gamma must be >= 0, got {self.gamma}")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        if self.coder not in CODERS:
            raise ValidationError(f"coder must be one of {CODERS}, got {self.coder!r}")
        if self.coder == "larc" and not 0 < self.coder_param <= 1:
            raise ValidationError("LARC residual coherence threshold must be in (0, 1]")
        if self.coder == "omp" and (self.coder_param < 1 or self.coder_param != int(self.coder_param)):
            raise ValidationError("OMP cardinality must be a positive integer")
        if self.lbfgs_inner_iters < 1 or self.lbfgs_memory < 1:
            raise ValidationError("L-BFGS iteration count and memory must be positive")
        if not -(2**63) <= self.seed < 2**64:
            raise ValidationError("seed must fit in 64 bits")

    def check_dims(self, dim: int, size: int) -> None:
        if self.coder == "omp" and self.coder_param > min(dim, size):
            raise ValidationError(f"OMP cardinality {int(self.coder_param)} exceeds min(D, L) = {min(dim, size)}")


@dataclass(frozen=True)
class GramSummary:
    """Frame statistics of a dictionary."""

    mutual_coherence: float
    welch_bound: float
    hist_edges: tuple[float, ...]
    hist_counts: tuple[int, ...]
    singular_values: tuple[float, ...]
    etf_flat_value: float
    etf_admissible: bool = field(default=True)

    def to_json(self) -> dict:
        return {
            "mu": self.mutual_coherence,
            "welch": self.welch_bound,
            "hist_edges": list(self.hist_edges),
            "hist_counts": list(self.hist_counts),
            "sigma": list(self.singular_values),
            "etf_flat": self.etf_flat_value,
            "etf_admissible": self.etf_admissible,
        }

    @classmethod
    def from_json(cls, d: dict) -> GramSummary:
        return cls(
            mutual_coherence=d["mu"],
            welch_bound=d["welch"],
            hist_edges=tuple(d["hist_edges"]),
            hist_counts=tuple(d["hist_counts"]),
            singular_values=tuple(d["sigma"]),
            etf_flat_value=d["etf_flat"],
            etf_admissible=d.get("etf_admissible", True),
        )
