"""Data ingestion, desk-scale experiment runners and report export."""

from __future__ import annotations

import csv
import json
import os
import time
import wave
from dataclasses import dataclass, field, fields

import numpy as np

from cohdict.coding import Cardinality, _omp
from cohdict.coherence import etf_flat_value, gram_summary, mutual_coherence, welch_bound
from cohdict.matrix_io import load_matrix
from cohdict.types import DataMatrix, Dictionary, TrainConfig, ValidationError
from cohdict.trainer import init_dictionary, make_method, train

PCM_SCALE = 32768.0
SILENT_FRAME = 1e-8


def ingest_wav(path, frame_len: int, num_frames: int, seed: int = 0) -> DataMatrix:
    """Frames of ``frame_len`` consecutive samples at seeded random offsets.

    Only mono 16-bit PCM is accepted. Samples are scaled to [-1, 1) and
    near-silent frames (norm < 1e-8) are redrawn, up to 100 * num_frames
    draws in total.
    """
    if frame_len < 1 or num_frames < 1:
        raise ValidationError("frame length and frame count must be positive")
    try:
        with wave.open(os.fspath(path), "rb") as wf:
            if wf.getcomptype() != "NONE" or wf.getsampwidth() != 2 or wf.getnchannels() != 1:
                raise ValidationError(
                    f"{path}: need mono 16-bit PCM, got {wf.getnchannels()} channel(s), "
                    f"{8 * wf.getsampwidth()}-bit, compression {wf.getcomptype()!r}"
                )
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        raise ValidationError(f"{path}: unsupported WAV file: {exc}") from None
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    if samples.size < frame_len:
        raise ValidationError(f"{path}: {samples.size} samples, shorter than frame length {frame_len}")
    rng = np.random.default_rng(seed)
    out = np.empty((frame_len, num_frames))
    filled = draws = 0
    max_draws = 100 * num_frames
    while filled < num_frames:
        if draws >= max_draws:
            raise ValidationError(f"{path}: only {filled} non-silent frames found in {max_draws} draws")
        start = int(rng.integers(0, samples.size - frame_len + 1))
        draws += 1
        frame = samples[start : start + frame_len]
        if np.linalg.norm(frame) < SILENT_FRAME:
            continue
        out[:, filled] = frame
        filled += 1
    return DataMatrix(out)


def make_synthetic(dim: int, size: int, sparsity: int, n: int, noise: float = 0.0, seed: int = 0):
    """Data from a planted dictionary of normalized Gaussian atoms.

    Each column combines ``sparsity`` atoms on a uniformly random support
    with standard normal weights, plus ``noise``-scaled Gaussian noise.
    Returns ``(DataMatrix, planted Dictionary)``.
    """
    if dim < 1 or size < 1 or n < 1:
        raise ValidationError("dim, size and n must be positive")
    if not 1 <= sparsity <= min(dim, size):
        raise ValidationError(f"sparsity must be in [1, min(dim, size)], got {sparsity}")
    if noise < 0:
        raise ValidationError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    planted = Dictionary(rng.standard_normal((dim, size)))
    supports = np.argsort(rng.random((n, size)), axis=1)[:, :sparsity]
    weights = rng.standard_normal((n, sparsity))
    coefs = np.zeros((size, n))
    coefs[supports.T, np.arange(n)] = weights.T
    x = planted.atoms @ coefs
    if noise > 0:
        x = x + noise * rng.standard_normal(x.shape)
    return DataMatrix(x), planted


@dataclass
class ExperimentConfig:
    """Settings read from a ``key=value`` config file.

    Without ``data`` the training and test sets are synthetic, drawn from
    one planted dictionary. With ``data`` the last ``n_test`` columns of the
    matrix file are held out for testing (or ``test_data`` is used).
    """

    dim: int = 16
    size: int = 40
    sparsity: int = 3
    n_train: int = 2000
    n_test: int = 400
    noise: float = 0.0
    seed: int = 0
    data: str = ""
    test_data: str = ""
    iterations: int = 25
    coder: str = "larc"
    # 0.2 sits below the residual coherence of noise at D=16, so LARC would
    # code every column to full rank
    coder_param: float = 0.5
    lbfgs_inner_iters: int = 10
    lbfgs_memory: int = 7
    gammas: tuple = (0.0, 1.0, 10.0, 50.0)
    inksvd_mu_t: tuple = (0.9, 0.5, 0.2)
    ksvd_mu_t: tuple = (1.0, 0.5)
    max_pair_updates: int = 10**5
    cardinalities: tuple = (1, 2, 4, 8, 16)
    bins: int = 20
    include_timings: bool = False

    @classmethod
    def from_text(cls, text: str) -> ExperimentConfig:
        types = {f.name: f.type for f in fields(cls)}
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"config line {lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValidationError(f"config line {lineno}: unknown key {key!r}")
            try:
                values[key] = _parse_value(types[key], val)
            except ValueError:
                raise ValidationError(f"config line {lineno}: bad value {val!r} for {key}") from None
        return cls(**values)

    @classmethod
    def from_file(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_text(fh.read())

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=0.0,
            iterations=self.iterations,
            coder=self.coder,
            coder_param=self.coder_param,
            lbfgs_inner_iters=self.lbfgs_inner_iters,
            lbfgs_memory=self.lbfgs_memory,
            seed=self.seed,
        )

    def grid(self) -> list:
        return (
            [("idl", g) for g in self.gammas]
            + [("inksvd", m) for m in self.inksvd_mu_t]
            + [("ksvd", m) for m in self.ksvd_mu_t]
        )

    def to_json(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def _parse_value(typ, val: str):
    if typ == "int":
        return int(val)
    if typ == "float":
        return float(val)
    if typ == "bool":
        if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(val)
        return val.lower() in ("true", "1", "yes")
    if typ == "tuple":
        return tuple(float(v) for v in val.split(",") if v.strip())
    return val


@dataclass
class ExperimentReport:
    """Plot-ready results of a spectrum or generalization experiment."""

    kind: str
    config: dict
    metadata: dict = field(default_factory=dict)
    entries: list = field(default_factory=list)
    generalization: dict = field(default_factory=dict)
    observations: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "config": self.config,
            "metadata": self.metadata,
            "entries": self.entries,
            "generalization": self.generalization,
            "observations": self.observations,
        }

    @classmethod
    def from_json(cls, d: dict) -> ExperimentReport:
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2) + "\n"


def _label(method: str, param: float) -> str:
    return f"{method}:{param:g}"


def load_experiment_data(cfg: ExperimentConfig):
    """Training and test data for an experiment config, plus planted atoms if synthetic."""
    if cfg.data:
        full = load_matrix(cfg.data)
        if cfg.test_data:
            return DataMatrix(full), DataMatrix(load_matrix(cfg.test_data)), None
        if full.shape[1] <= cfg.n_test:
            raise ValidationError("data file has too few columns to hold out the test set")
        return DataMatrix(full[:, : -cfg.n_test]), DataMatrix(full[:, -cfg.n_test :]), None
    x, planted = make_synthetic(cfg.dim, cfg.size, cfg.sparsity, cfg.n_train + cfg.n_test, cfg.noise, cfg.seed)
    cols = x.columns
    return DataMatrix(cols[:, : cfg.n_train]), DataMatrix(cols[:, cfg.n_train :]), planted


def _spectrum_decay(sigma) -> float:
    """Ratio of the smallest to the largest singular value."""
    sigma = np.asarray(sigma)
    return float(sigma[-1] / sigma[0])


def run_spectrum_experiment(data, base_config: TrainConfig, grid, size: int, *,
                            max_pair_updates: int = 10**5, bins: int = 20,
                            include_timings: bool = False, config_echo: dict | None = None):
    """Train one dictionary per ``(method, parameter)`` grid point.

    All runs start from the same seeded initialization. Returns
    ``(ExperimentReport, {label: Dictionary})``.
    """
    data = data if isinstance(data, DataMatrix) else DataMatrix(data)
    init = init_dictionary(data, size, base_config.seed)
    report = ExperimentReport(
        kind="spectrum",
        config=config_echo if config_echo is not None else {"train": _config_json(base_config), "size": size},
        metadata={
            "dim": data.dim,
            "size": size,
            "n_train": data.n,
            "etf_flat": etf_flat_value(data.dim, size) if size >= data.dim else None,
            "welch_bound": welch_bound(data.dim, size),
        },
    )
    dictionaries = {}
    for method_name, param in grid:
        label = _label(method_name, param)
        method = make_method(method_name, param, max_pair_updates)
        t0 = time.perf_counter()
        try:
            d, _, history = train(data, base_config, method, init=init)
        except Exception as exc:
            raise type(exc)(f"grid point {label}: {exc}") from exc
        elapsed = time.perf_counter() - t0
        summary = gram_summary(d, bins)
        entry = {
            "label": label,
            "method": method_name,
            "param": float(param),
            "gram": summary.to_json(),
            "spectrum": list(summary.singular_values),
            "spectrum_std": float(np.std(summary.singular_values)),
            "approx_error": history[-1].approx_error,
            "penalized_objective": history[-1].penalized_objective,
            "coherence_trace": history.column("mutual_coherence"),
            "approx_error_trace": history.column("approx_error"),
        }
        if method_name == "inksvd":
            entry["decorrelation"] = [r.extra["decorrelation"] for r in history]
        if method_name == "ksvd":
            entry["replaced"] = [r.extra["replaced"] for r in history]
        if include_timings:
            entry["wall_time"] = elapsed
        report.entries.append(entry)
        dictionaries[label] = d
    report.observations = _spectrum_observations(report.entries)
    return report, dictionaries


def _spectrum_observations(entries) -> dict:
    obs = {}
    by = {(e["method"], e["param"]): e for e in entries}
    idl = sorted((p, e["spectrum_std"]) for (m, p), e in by.items() if m == "idl")
    if len(idl) > 1:
        stds = [s for _, s in idl]
        obs["idl_spectrum_std_by_gamma"] = [[p, s] for p, s in idl]
        obs["idl_flattening_monotone"] = all(a > b for a, b in zip(stds, stds[1:]))
    ksvd = {p: e for (m, p), e in by.items() if m == "ksvd"}
    if 1.0 in ksvd and len(ksvd) > 1:
        ref = _spectrum_decay(ksvd[1.0]["spectrum"])
        obs["ksvd_decay_ratio_by_mu_t"] = [[p, _spectrum_decay(e["spectrum"])] for p, e in sorted(ksvd.items())]
        obs["ksvd_lower_mu_t_decays_faster"] = all(
            _spectrum_decay(e["spectrum"]) <= ref for p, e in ksvd.items() if p < 1.0
        )
    ink = sorted((p, sum(r["pair_updates"] for r in e["decorrelation"])) for (m, p), e in by.items() if m == "inksvd")
    if ink:
        obs["inksvd_pair_updates_by_mu_t"] = [[p, u] for p, u in ink]
    return obs


def _config_json(cfg: TrainConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def generalization_curve(dictionary: Dictionary, test, cardinalities) -> list:
    """Median over test columns of ||x - D c_K|| / ||x|| for each K.

    Codes come from OMP with a cardinality stop; a zero test column counts
    as residual 0. K = 0 gives 1 for every nonzero column.
    """
    x = test.columns if isinstance(test, DataMatrix) else np.asarray(test, dtype=np.float64)
    atoms = dictionary.atoms
    ks = [int(k) for k in cardinalities]
    if any(k < 0 for k in ks) or ks != sorted(ks):
        raise ValidationError("cardinalities must be nonnegative and ascending")
    if ks and ks[-1] > min(atoms.shape):
        raise ValidationError(f"cardinality {ks[-1]} exceeds min(D, L) = {min(atoms.shape)}")
    kmax = ks[-1] if ks else 0
    gram = atoms.T @ atoms
    table = np.zeros((x.shape[1], len(ks)))
    for n in range(x.shape[1]):
        col = np.ascontiguousarray(x[:, n])
        xn = np.linalg.norm(col)
        if xn == 0.0:
            continue
        if kmax == 0:
            table[n] = 1.0
            continue
        _, _, norms = _omp(atoms, gram, col, Cardinality(kmax))
        path = np.array(norms) / xn
        table[n] = path[np.minimum(ks, len(path) - 1)]
    return [float(v) for v in np.median(table, axis=0)]


def run_generalization_experiment(train_data, test_data, dictionaries: dict, cardinalities, *,
                                  config_echo: dict | None = None) -> ExperimentReport:
    """Median normalized OMP residual versus cardinality for each dictionary."""
    train_data = train_data if isinstance(train_data, DataMatrix) else DataMatrix(train_data)
    test_data = test_data if isinstance(test_data, DataMatrix) else DataMatrix(test_data)
    seen = {train_data.columns[:, n].tobytes() for n in range(train_data.n)}
    overlap = sum(test_data.columns[:, n].tobytes() in seen for n in range(test_data.n))
    if overlap:
        raise ValidationError(f"{overlap} test columns also occur in the training data")
    ks = [int(k) for k in cardinalities]
    report = ExperimentReport(
        kind="generalization",
        config=config_echo if config_echo is not None else {"cardinalities": ks},
        metadata={
            "n_train": train_data.n,
            "n_test": test_data.n,
            "residual": "median over test columns of ||x - D c|| / ||x||, OMP with cardinality stop",
        },
    )
    curves = {}
    for label, d in dictionaries.items():
        curves[label] = generalization_curve(d, test_data, ks)
        report.entries.append({
            "label": label,
            "mu": mutual_coherence(d),
            "welch": welch_bound(d.dim, d.size),
        })
    report.generalization = {"cardinalities": ks, "curves": curves}
    report.observations = {
        "curves_non_increasing": {
            label: all(a >= b for a, b in zip(c, c[1:])) for label, c in curves.items()
        }
    }
    return report


def run_config(cfg: ExperimentConfig, kind: str) -> ExperimentReport:
    """Run the spectrum (``kind="spectrum"``) or generalization experiment for a config."""
    train_data, test_data, planted = load_experiment_data(cfg)
    report, dicts = run_spectrum_experiment(
        train_data,
        cfg.train_config(),
        cfg.grid(),
        cfg.size,
        max_pair_updates=cfg.max_pair_updates,
        bins=cfg.bins,
        include_timings=cfg.include_timings,
        config_echo=cfg.to_json(),
    )
    if planted is not None:
        for e in report.entries:
            d = dicts[e["label"]]
            e["planted_recovery_0.99"] = float(np.mean(np.abs(planted.atoms.T @ d.atoms).max(axis=1) >= 0.99))
    if kind == "spectrum":
        return report
    gen = run_generalization_experiment(
        train_data, test_data, dicts, [int(k) for k in cfg.cardinalities], config_echo=cfg.to_json()
    )
    gen.metadata.update(report.metadata)
    gen.metadata["n_test"] = test_data.n
    gen.observations.update(report.observations)
    for g_entry, s_entry in zip(gen.entries, report.entries):
        for key in ("method", "param", "gram", "spectrum", "spectrum_std"):
            g_entry[key] = s_entry[key]
    return gen


def export_report(report: ExperimentReport, path, fmt: str = "json") -> list:
    """Write ``report`` as one JSON file, or as CSV tables plus a manifest.

    For CSV, ``path`` is a directory. Returns the list of files written.
    """
    fmt = fmt.lower()
    if fmt == "json":
        with open(path, "w") as fh:
            fh.write(report.dumps())
        return [os.fspath(path)]
    if fmt != "csv":
        raise ValidationError(f"unknown report format {fmt!r}")
    os.makedirs(path, exist_ok=True)
    written = {}

    def table(name, header, rows):
        fname = os.path.join(path, f"{name}.csv")
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
        written[name] = {"file": f"{name}.csv", "rows": len(rows), "columns": header}

    table(
        "summary",
        ["label", "method", "param", "mu", "welch"],
        [[e["label"], e.get("method", e["label"].split(":")[0]), e.get("param", ""),
          repr(e["gram"]["mu"] if "gram" in e else e["mu"]),
          repr(e["gram"]["welch"] if "gram" in e else e["welch"])] for e in report.entries],
    )
    spec_rows = [
        [e["label"], i, repr(s)] for e in report.entries for i, s in enumerate(e.get("spectrum", ()))
    ]
    if spec_rows:
        table("spectra", ["label", "index", "sigma"], spec_rows)
    if report.generalization:
        ks = report.generalization["cardinalities"]
        table(
            "generalization",
            ["label", "cardinality", "median_normalized_residual"],
            [[label, k, repr(v)] for label, curve in report.generalization["curves"].items() for k, v in zip(ks, curve)],
        )
    manifest = {"kind": report.kind, "config": report.config, "metadata": report.metadata, "tables": written}
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    return [os.path.join(path, v["file"]) for v in written.values()] + [os.path.join(path, "manifest.json")]
