"""Baseline dictionary updates: K-SVD, K-SVD atom replacement and INK-SVD.

Both baselines update the atoms for approximation error first and only
afterwards try to reduce coherence between pairs of atoms.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from cohdict.types import ZERO_ATOM_NORM, DataMatrix, Dictionary, SparseCoding, ValidationError

# pairs whose |inner product| exceeds the threshold by less than this are
# treated as satisfying it, so rounding cannot cause endless re-updates
PAIR_SLACK = 1e-10


@dataclass(frozen=True)
class DecorrelationReport:
    pair_updates: int
    sweeps: int
    converged: bool
    final_coherence: float

    def to_json(self) -> dict:
        return asdict(self)


class ReplaceResult(NamedTuple):
    dictionary: Dictionary
    replaced: list
    exhausted: bool


def _dominant_left(e: np.ndarray, start: np.ndarray, max_iter: int = 50, tol: float = 1e-10):
    """Leading left singular vector of ``e`` by power iteration on e e^T."""
    u = start / np.linalg.norm(start)
    for _ in range(max_iter):
        w = e @ (e.T @ u)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return None
        w /= nw
        change = np.linalg.norm(w - u)
        u = w
        if change < tol:
            break
    return u


def ksvd_atom_update(dictionary: Dictionary, data, coding: SparseCoding) -> tuple[Dictionary, SparseCoding]:
    """Per-atom rank-1 refit of atoms and their coefficient rows.

    For each atom in index order, the residual of the columns using it
    (with the atom's own contribution added back) is approximated by its
    dominant singular pair. Supports are kept; unused atoms are left alone.
    The power iteration starts from the current atom, so the squared
    approximation error never increases.
    """
    x = data.columns if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    d = np.array(dictionary.atoms)
    c = coding.to_dense()
    if x.shape != (d.shape[0], c.shape[1]) or c.shape[0] != d.shape[1]:
        raise ValidationError("data, dictionary and coding shapes disagree")
    users = [[] for _ in range(d.shape[1])]
    for n, idx in enumerate(coding.indices):
        for j in idx:
            users[j].append(n)
    for k in range(d.shape[1]):
        omega = np.array(users[k], dtype=np.int64)
        if omega.size == 0:
            continue
        e = x[:, omega] - d @ c[:, omega] + np.outer(d[:, k], c[k, omega])
        u = _dominant_left(e, d[:, k])
        if u is None:
            continue
        if u @ d[:, k] < 0:
            u = -u
        d[:, k] = u
        c[k, omega] = u @ e
    values = tuple(c[idx, n] for n, idx in enumerate(coding.indices))
    return Dictionary(d), SparseCoding(coding.n_atoms, coding.indices, values)


def ksvd_replace(dictionary: Dictionary, data, coding: SparseCoding, mu_t: float) -> ReplaceResult:
    """Replace atoms that are too coherent with an earlier atom.

    Pairs (d, e), d < e, are scanned lexicographically; whenever
    ``|<atom_d, atom_e>| > mu_t``, atom e is replaced by the normalized data
    column with the largest approximation error not used yet. The result
    may still violate ``mu_t`` when replacements are coherent with each
    other. ``exhausted`` is set if the usable data columns ran out.
    """
    if not 0 < mu_t <= 1:
        raise ValidationError("mu_t must be in (0, 1]")
    x = data.columns if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    a = np.array(dictionary.atoms)
    errs = np.linalg.norm(x - a @ coding.to_dense(), axis=0)
    cnorm = np.linalg.norm(x, axis=0)
    queue = [int(n) for n in np.argsort(-errs, kind="stable") if cnorm[n] >= ZERO_ATOM_NORM]
    pos = 0
    replaced: list[int] = []
    exhausted = False
    size = a.shape[1]
    for i in range(size - 1):
        for j in range(i + 1, size):
            if min(abs(float(a[:, i] @ a[:, j])), 1.0) <= mu_t:
                continue
            if pos >= len(queue):
                exhausted = True
                continue
            n = queue[pos]
            pos += 1
            a[:, j] = x[:, n] / cnorm[n]
            replaced.append(j)
    return ReplaceResult(Dictionary(a), sorted(set(replaced)), exhausted)


def _plane_partner(a: np.ndarray) -> np.ndarray:
    """Unit vector orthogonal to ``a`` from span{a, e_k}, k the first non-maximal |a_k|."""
    if a.size < 2:
        raise ValidationError("cannot decorrelate parallel atoms in one dimension")
    mag = np.abs(a)
    candidates = np.flatnonzero(mag < mag.max())
    k = int(candidates[0]) if candidates.size else 0
    p = -a[k] * a
    p[k] += 1.0
    return p / np.linalg.norm(p)


def inksvd_decorrelate_pair(a, b, mu_t: float) -> tuple[np.ndarray, np.ndarray]:
    """Open the angle between two unit atoms until |<a, b>| = mu_t.

    Both atoms rotate by the same amount in span{a, b}, away from the
    bisector of ``a`` and ``sign(<a, b>) b``; the sign of the inner product is
    kept. Pairs already at or below ``mu_t`` are returned unchanged.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not 0 <= mu_t <= 1:
        raise ValidationError("mu_t must be in [0, 1]")
    g = float(a @ b)
    if abs(g) <= mu_t:
        return a.copy(), b.copy()
    sgn = 1.0 if g >= 0 else -1.0
    b1 = sgn * b
    m = a + b1
    m /= np.linalg.norm(m)
    p = a - b1
    p -= (p @ m) * m
    pn = np.linalg.norm(p)
    if pn < 1e-8:
        m = a
        p = _plane_partner(a)
    else:
        p /= pn
    half = 0.5 * np.arccos(mu_t)
    a_new = np.cos(half) * m + np.sin(half) * p
    b_new = np.cos(half) * m - np.sin(half) * p
    a_new /= np.linalg.norm(a_new)
    b_new /= np.linalg.norm(b_new)
    return a_new, sgn * b_new


def inksvd_decorrelate(
    dictionary: Dictionary, mu_t: float, max_pair_updates: int = 10**5
) -> tuple[Dictionary, DecorrelationReport]:
    """Sweep all pairs lexicographically, decorrelating those above ``mu_t``.

    Stops after a sweep without updates (converged) or once
    ``max_pair_updates`` updates have been made (not converged).
    """
    if not 0 < mu_t <= 1:
        raise ValidationError("mu_t must be in (0, 1]")
    a = np.array(dictionary.atoms)
    size = a.shape[1]
    updates = sweeps = 0
    converged = False
    while updates < max_pair_updates:
        sweeps += 1
        changed = False
        for i in range(size - 1):
            row = a[:, i] @ a
            for j in range(i + 1, size):
                if abs(row[j]) <= mu_t + PAIR_SLACK:
                    continue
                a[:, i], a[:, j] = inksvd_decorrelate_pair(a[:, i], a[:, j], mu_t)
                updates += 1
                changed = True
                if updates >= max_pair_updates:
                    break
                row = a[:, i] @ a
            if updates >= max_pair_updates:
                break
        if not changed:
            converged = True
            break
    out = Dictionary(a)
    if size >= 2:
        g = np.abs(out.atoms.T @ out.atoms)
        final = float(min(1.0, g[np.triu_indices(size, 1)].max()))
    else:
        final = 0.0
    return out, DecorrelationReport(updates, sweeps, converged, final)
