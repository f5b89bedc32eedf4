"""Coherence-penalized dictionary update.

The update minimizes

    f(D) = ||X - D C||_F^2 + gamma * ||D^T D - I||_F^2

over the raw (not normalized) atom matrix with a few L-BFGS iterations,
then rescales every atom to unit norm. The penalty pulls the Gram matrix
toward the identity, trading approximation error for lower coherence;
large gamma drives the dictionary toward a unit-norm tight frame.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from cohdict.types import ZERO_ATOM_NORM, DataMatrix, Dictionary, SparseCoding, ValidationError


@dataclass(frozen=True)
class LbfgsParams:
    memory: int = 7
    max_iters: int = 10
    grad_tol: float = 1e-6
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 40

    def __post_init__(self):
        if self.memory < 1 or self.max_iters < 1 or self.max_backtracks < 1:
            raise ValidationError("L-BFGS memory, iterations and backtracks must be positive")
        if not (self.grad_tol > 0 and 0 < self.armijo < 1 and 0 < self.shrink < 1):
            raise ValidationError("invalid L-BFGS tolerances")


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    n_iter: int
    line_search_failed: bool = False
    trace: list = field(default_factory=list)


def _as_matrix(d) -> np.ndarray:
    return d.atoms if isinstance(d, Dictionary) else np.asarray(d, dtype=np.float64)


def _as_data(data) -> np.ndarray:
    return data.columns if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)


def _as_coefs(coding) -> np.ndarray:
    return coding.to_dense() if isinstance(coding, SparseCoding) else np.asarray(coding, dtype=np.float64)


def _operands(dict_raw, data, coding, gamma):
    d, x, c = _as_matrix(dict_raw), _as_data(data), _as_coefs(coding)
    if gamma < 0:
        raise ValidationError("gamma must be nonnegative")
    if d.shape[0] != x.shape[0] or d.shape[1] != c.shape[0] or x.shape[1] != c.shape[1]:
        raise ValidationError(f"shape mismatch: D {d.shape}, X {x.shape}, C {c.shape}")
    return d, x, c


def _finite(value, what):
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"non-finite {what}")
    return value


def idl_objective(dict_raw, data, coding, gamma: float) -> float:
    """Squared approximation error plus gamma times the Gram penalty."""
    d, x, c = _operands(dict_raw, data, coding, gamma)
    resid = x - d @ c
    penalty = d.T @ d - np.eye(d.shape[1])
    return float(_finite(np.sum(resid * resid) + gamma * np.sum(penalty * penalty), "objective"))


def idl_gradient(dict_raw, data, coding, gamma: float) -> np.ndarray:
    """Gradient 2(D C C^T - X C^T) + 4 gamma (D D^T D - D)."""
    d, x, c = _operands(dict_raw, data, coding, gamma)
    g = 2.0 * (d @ (c @ c.T) - x @ c.T) + 4.0 * gamma * (d @ (d.T @ d) - d)
    return _finite(g, "gradient")


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    s, y, _ = pairs[-1]
    r = q * ((s @ y) / (y @ y))
    for (s, y, rho), a in zip(pairs, reversed(alphas)):
        b = rho * (y @ r)
        r += s * (a - b)
    return -r


def lbfgs_minimize(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    start,
    params: LbfgsParams = LbfgsParams(),
) -> LbfgsResult:
    """Limited-memory BFGS with backtracking Armijo line search.

    ``fun`` maps a matrix to ``(value, gradient)``. The matrix is flattened
    column-major for the optimizer. Curvature pairs with
    ``y.s <= 1e-12 ||s|| ||y||`` are not stored. A failed line search stops
    the run and returns the last accepted iterate with
    ``line_search_failed`` set; accepted iterates never increase ``fun``.
    """
    start = np.asarray(start, dtype=np.float64)
    shape = start.shape
    if not np.all(np.isfinite(start)):
        raise ValidationError("start point must be finite")

    def evaluate(v):
        f, g = fun(v.reshape(shape, order="F"))
        return float(f), np.asarray(g, dtype=np.float64).ravel(order="F")

    x = start.ravel(order="F").copy()
    f, g = evaluate(x)
    pairs: deque = deque(maxlen=params.memory)
    trace = [f]
    failed = False
    n_iter = 0
    for _ in range(params.max_iters):
        gnorm = float(np.sqrt(g @ g))
        if gnorm < params.grad_tol:
            break
        if pairs:
            d = _two_loop(g, list(pairs))
            t = 1.0
            gtd = float(g @ d)
            if not gtd < 0:
                pairs.clear()
        if not pairs:
            d = -g
            t = min(1.0, 1.0 / gnorm)
            gtd = -gnorm * gnorm
        for _ in range(params.max_backtracks):
            x_new = x + t * d
            f_new, g_new = evaluate(x_new)
            if np.isfinite(f_new) and f_new <= f + params.armijo * t * gtd:
                break
            t *= params.shrink
        else:
            failed = True
            break
        s, y = x_new - x, g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        n_iter += 1
    return LbfgsResult(
        x=x.reshape(shape, order="F"),
        fun=f,
        grad_norm=float(np.sqrt(g @ g)),
        n_iter=n_iter,
        line_search_failed=failed,
        trace=trace,
    )


def renormalize_atoms(dict_raw, data=None, seed: int = 0, residual_norms=None) -> Dictionary:
    """Scale every column to unit norm.

    Columns with norm below 1e-12 are replaced by distinct, nonzero data
    columns: those with the largest ``residual_norms`` when given,
    otherwise a seeded random choice.
    """
    d = np.array(_as_matrix(dict_raw), dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise ValidationError("dictionary contains non-finite entries")
    dead = np.flatnonzero(np.linalg.norm(d, axis=0) < ZERO_ATOM_NORM)
    if dead.size:
        if data is None:
            raise ValidationError(f"atoms {dead.tolist()} vanished and no data is available to replace them")
        x = _as_data(data)
        usable = np.flatnonzero(np.linalg.norm(x, axis=0) >= ZERO_ATOM_NORM)
        if usable.size == 0:
            raise ValidationError("cannot replace vanished atoms: all data columns are zero")
        if residual_norms is not None:
            order = usable[np.argsort(-np.asarray(residual_norms)[usable], kind="stable")]
        else:
            order = np.random.default_rng(seed).permutation(usable)
        for k, atom in enumerate(dead):
            d[:, atom] = x[:, order[k % order.size]]
    return Dictionary(d)


def idl_dictionary_update(
    dictionary: Dictionary,
    data,
    coding,
    gamma: float,
    params: LbfgsParams = LbfgsParams(),
    seed: int = 0,
    return_info: bool = False,
):
    """One joint update of all atoms followed by renormalization.

    With ``return_info=True`` returns ``(Dictionary, LbfgsResult)``; the
    result holds the pre-normalization optimum and its objective trace.
    """
    d0, x, c = _operands(dictionary, data, coding, gamma)
    cct = c @ c.T
    xct = x @ c.T
    eye = np.eye(d0.shape[1])

    def fun(d):
        resid = x - d @ c
        gram = d.T @ d
        pen = gram - eye
        f = np.sum(resid * resid) + gamma * np.sum(pen * pen)
        g = 2.0 * (d @ cct - xct) + 4.0 * gamma * (d @ gram - d)
        return f, g

    res = lbfgs_minimize(fun, d0, params)
    resid = np.linalg.norm(x - res.x @ c, axis=0)
    out = renormalize_atoms(res.x, x, seed=seed, residual_norms=resid)
    return (out, res) if return_info else out
