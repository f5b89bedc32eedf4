"""Alternating minimization: sparse coding step, then a dictionary step."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np

from cohdict.baselines import inksvd_decorrelate, ksvd_atom_update, ksvd_replace
from cohdict.coding import Cardinality, CodingError, Larc, batch_code
from cohdict.coherence import mutual_coherence, singular_spectrum
from cohdict.idl import LbfgsParams, idl_dictionary_update, idl_objective
from cohdict.types import ZERO_ATOM_NORM, DataMatrix, Dictionary, SparseCoding, TrainConfig, ValidationError


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class IDL:
    gamma: float = 0.0

    def __post_init__(self):
        if not self.gamma >= 0:
            raise ValidationError("gamma must be >= 0")

    @property
    def name(self) -> str:
        return "idl"

    @property
    def param(self) -> float:
        return self.gamma


@dataclass(frozen=True)
class KSVDReplace:
    mu_t: float = 1.0

    def __post_init__(self):
        if not 0 < self.mu_t <= 1:
            raise ValidationError("mu_t must be in (0, 1]")

    @property
    def name(self) -> str:
        return "ksvd"

    @property
    def param(self) -> float:
        return self.mu_t


@dataclass(frozen=True)
class KSVDInkSVD:
    mu_t: float = 1.0
    max_pair_updates: int = 10**5

    def __post_init__(self):
        if not 0 < self.mu_t <= 1:
            raise ValidationError("mu_t must be in (0, 1]")
        if self.max_pair_updates < 0:
            raise ValidationError("max_pair_updates must be >= 0")

    @property
    def name(self) -> str:
        return "inksvd"

    @property
    def param(self) -> float:
        return self.mu_t


Method = Union[IDL, KSVDReplace, KSVDInkSVD]


def make_method(name: str, param: float, max_pair_updates: int = 10**5) -> Method:
    if name == "idl":
        return IDL(float(param))
    if name == "ksvd":
        return KSVDReplace(float(param))
    if name == "inksvd":
        return KSVDInkSVD(float(param), int(max_pair_updates))
    raise ValidationError(f"unknown method {name!r}; expected idl, ksvd or inksvd")


@dataclass
class IterationRecord:
    iteration: int
    approx_error: float
    penalized_objective: float
    mutual_coherence: float
    singular_values: list
    wall_time: float
    replaced_unused: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def to_jsonl(self, include_timings: bool = True) -> str:
        lines = []
        for r in self.records:
            d = asdict(r)
            if not include_timings:
                d.pop("wall_time")
            lines.append(json.dumps(d))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "approx_error", "penalized_objective", "mutual_coherence", "wall_time", "singular_values"])
        for r in self.records:
            w.writerow([
                r.iteration,
                repr(r.approx_error),
                repr(r.penalized_objective),
                repr(r.mutual_coherence),
                repr(r.wall_time),
                " ".join(repr(s) for s in r.singular_values),
            ])
        return buf.getvalue()


def init_dictionary(data, size: int, seed: int) -> Dictionary:
    """Normalized data columns drawn uniformly at random.

    Columns are drawn without replacement when enough nonzero columns
    exist, otherwise with replacement.
    """
    x = data.columns if isinstance(data, DataMatrix) else np.asarray(data, dtype=np.float64)
    if size < 1:
        raise ValidationError("dictionary size must be positive")
    usable = np.flatnonzero(np.linalg.norm(x, axis=0) > ZERO_ATOM_NORM)
    if usable.size == 0:
        raise ValidationError("cannot initialize a dictionary from all-zero data")
    rng = np.random.default_rng(seed)
    picks = rng.choice(usable, size=size, replace=usable.size < size)
    return Dictionary(x[:, picks])


def _coder(config: TrainConfig):
    if config.coder == "larc":
        return Larc(config.coder_param)
    return Cardinality(int(config.coder_param))


def _replace_unused(d: Dictionary, x: np.ndarray, coding: SparseCoding):
    unused = np.flatnonzero(coding.usage() == 0)
    if unused.size == 0:
        return d, 0
    errs = np.linalg.norm(x - d.atoms @ coding.to_dense(), axis=0)
    norms = np.linalg.norm(x, axis=0)
    order = [n for n in np.argsort(-errs, kind="stable") if norms[n] > ZERO_ATOM_NORM]
    a = np.array(d.atoms)
    for k, atom in enumerate(unused):
        a[:, atom] = x[:, order[k % len(order)]]
    return Dictionary(a), int(unused.size)


def train(
    data,
    config: TrainConfig,
    method: Method | None = None,
    *,
    size: int | None = None,
    init: Dictionary | None = None,
):
    """Run ``config.iterations`` alternations of coding and dictionary update.

    The initial dictionary is ``init`` or ``size`` data columns drawn with
    ``config.seed``. Atoms that no column uses after a coding step are
    replaced by the worst-approximated data columns before the update.

    Returns ``(Dictionary, SparseCoding, TrainHistory)``.
    """
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    x = data.columns
    method = IDL(config.gamma) if method is None else method
    if init is None:
        if size is None:
            raise ValidationError("train needs either an initial dictionary or a size")
        init = init_dictionary(data, size, config.seed)
    if init.dim != data.dim:
        raise ValidationError(f"dictionary dimension {init.dim} != data dimension {data.dim}")
    config.check_dims(init.dim, init.size)
    coder = _coder(config)
    gamma = method.gamma if isinstance(method, IDL) else config.gamma
    params = LbfgsParams(memory=config.lbfgs_memory, max_iters=config.lbfgs_inner_iters)

    d = init
    history = TrainHistory()
    coding = None
    for it in range(config.iterations):
        t0 = time.perf_counter()
        try:
            coding = batch_code(d, x, coder)
        except CodingError as exc:
            raise TrainingError(f"iteration {it}, {exc}") from exc
        d, n_unused = _replace_unused(d, x, coding)
        extra = {}
        if isinstance(method, IDL):
            d, info = idl_dictionary_update(
                d, x, coding, method.gamma, params, seed=config.seed + it, return_info=True
            )
            extra["lbfgs_iters"] = info.n_iter
            extra["line_search_failed"] = info.line_search_failed
            # before renormalization, so the descent property is checkable
            extra["update_objective_start"] = info.trace[0]
            extra["update_objective_end"] = info.trace[-1]
        else:
            d, coding = ksvd_atom_update(d, x, coding)
            if isinstance(method, KSVDReplace):
                d, replaced, exhausted = ksvd_replace(d, x, coding, method.mu_t)
                coding = coding.drop_atoms(replaced)
                extra["replaced"] = len(replaced)
                extra["replacement_exhausted"] = exhausted
            else:
                d, report = inksvd_decorrelate(d, method.mu_t, method.max_pair_updates)
                extra["decorrelation"] = report.to_json()
        c = coding.to_dense()
        resid = x - d.atoms @ c
        history.records.append(
            IterationRecord(
                iteration=it,
                approx_error=float(np.sum(resid * resid)),
                penalized_objective=idl_objective(d, x, c, gamma),
                mutual_coherence=mutual_coherence(d) if d.size > 1 else 0.0,
                singular_values=[float(s) for s in singular_spectrum(d)],
                wall_time=time.perf_counter() - t0,
                replaced_unused=n_unused,
                extra=extra,
            )
        )
    return d, coding, history
