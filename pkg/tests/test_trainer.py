import csv
import io
import json

import numpy as np
import pytest

from cohdict import (
    IDL,
    CodingError,
    DataMatrix,
    Dictionary,
    KSVDInkSVD,
    KSVDReplace,
    TrainConfig,
    ValidationError,
    init_dictionary,
    mutual_coherence,
    train,
)
from cohdict.experiments import make_synthetic
from cohdict.trainer import TrainingError, make_method


@pytest.fixture(scope="module")
def small_problem():
    data, planted = make_synthetic(8, 16, 2, 300, 0.01, seed=3)
    return data, planted


def quick_config(**kw):
    base = dict(iterations=4, coder="omp", coder_param=2, seed=1)
    base.update(kw)
    return TrainConfig(**base)


class TestInitDictionary:
    def test_permutation_when_sizes_match(self, rng):
        x = rng.standard_normal((5, 7))
        d = init_dictionary(x, 7, seed=2)
        normalized = x / np.linalg.norm(x, axis=0)
        match = np.abs(normalized.T @ d.atoms)
        assert sorted(np.argmax(match, axis=0).tolist()) == list(range(7))

    def test_deterministic(self, rng):
        x = rng.standard_normal((5, 30))
        assert init_dictionary(x, 10, 4) == init_dictionary(x, 10, 4)
        assert init_dictionary(x, 10, 4) != init_dictionary(x, 10, 5)

    def test_skips_zero_columns(self):
        x = np.zeros((3, 6))
        x[:, 2] = [1.0, 2.0, 2.0]
        d = init_dictionary(x, 4, 0)
        np.testing.assert_allclose(d.atoms, np.tile([[1 / 3], [2 / 3], [2 / 3]], 4))

    def test_all_zero_rejected(self):
        with pytest.raises(ValidationError):
            init_dictionary(np.zeros((3, 4)), 2, 0)


class TestMethods:
    def test_make_method(self):
        assert make_method("idl", 10) == IDL(10.0)
        assert make_method("ksvd", 0.5) == KSVDReplace(0.5)
        assert make_method("inksvd", 0.5, 7) == KSVDInkSVD(0.5, 7)
        with pytest.raises(ValidationError):
            make_method("mod", 1.0)

    @pytest.mark.parametrize("bad", [lambda: IDL(-1.0), lambda: KSVDReplace(0.0), lambda: KSVDInkSVD(1.5)])
    def test_invalid_parameters(self, bad):
        with pytest.raises(ValidationError):
            bad()


class TestTrain:
    def test_orthonormal_fixed_point(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        d, coding, history = train(q, TrainConfig(iterations=1), IDL(0.0), init=Dictionary(q))
        assert history[0].approx_error == pytest.approx(0.0, abs=1e-24)
        np.testing.assert_allclose(np.abs(np.sum(d.atoms * q, axis=0)), 1.0, atol=1e-12)

    def test_history_length_and_finiteness(self, small_problem):
        data, _ = small_problem
        for method in (IDL(1.0), KSVDReplace(0.9), KSVDInkSVD(0.6)):
            _, _, history = train(data, quick_config(iterations=3), method, size=16)
            assert len(history) == 3
            assert [r.iteration for r in history] == [0, 1, 2]
            for r in history:
                assert np.isfinite([r.approx_error, r.penalized_objective, r.mutual_coherence]).all()
                assert len(r.singular_values) == 8

    def test_bit_identical_reruns(self, small_problem):
        data, _ = small_problem
        for method in (IDL(10.0), KSVDInkSVD(0.5)):
            cfg = quick_config(coder="larc", coder_param=0.4)
            d1, c1, h1 = train(data, cfg, method, size=16)
            d2, c2, h2 = train(data, cfg, method, size=16)
            assert d1 == d2 and c1 == c2
            assert h1.to_jsonl(include_timings=False) == h2.to_jsonl(include_timings=False)

    def test_idl_update_descends(self, small_problem):
        data, _ = small_problem
        _, _, history = train(data, quick_config(iterations=5), IDL(5.0), size=16)
        for r in history:
            assert r.extra["update_objective_end"] <= r.extra["update_objective_start"]

    def test_inksvd_coherence_bound(self, small_problem):
        data, _ = small_problem
        mu_t = 0.5
        _, _, history = train(data, quick_config(), KSVDInkSVD(mu_t), size=16)
        for r in history:
            assert r.extra["decorrelation"]["converged"]
            assert r.mutual_coherence <= mu_t + 1e-9

    def test_ksvd_and_inksvd_agree_without_bound(self, small_problem):
        data, _ = small_problem
        d1, _, h1 = train(data, quick_config(), KSVDReplace(1.0), size=16)
        d2, _, h2 = train(data, quick_config(), KSVDInkSVD(1.0), size=16)
        assert d1 == d2
        assert h1.column("approx_error") == h2.column("approx_error")

    def test_penalized_objective_uses_method_gamma(self, small_problem):
        data, _ = small_problem
        d, coding, history = train(data, quick_config(iterations=1), IDL(3.0), size=16)
        g = d.atoms.T @ d.atoms - np.eye(16)
        expected = history[0].approx_error + 3.0 * np.sum(g * g)
        assert history[0].penalized_objective == pytest.approx(expected, rel=1e-12)

    def test_unused_atoms_replaced(self):
        x = np.zeros((3, 4))
        x[0, :2] = [1.0, 2.0]
        x[1, 2:] = [1.0, 0.5]
        init = Dictionary(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        _, coding, history = train(x, TrainConfig(iterations=1, coder="omp", coder_param=1), IDL(0.0), init=init)
        # atom 2 (e3) codes nothing
        assert history[0].replaced_unused == 1

    def test_needs_size_or_init(self, rng):
        with pytest.raises(ValidationError):
            train(rng.standard_normal((3, 5)), TrainConfig(iterations=1))

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValidationError):
            train(rng.standard_normal((3, 5)), TrainConfig(iterations=1), init=Dictionary(np.eye(4)))

    def test_coder_failure_has_context(self, small_problem, monkeypatch):
        import cohdict.trainer as trainer_mod

        def boom(*args, **kw):
            raise CodingError(7, ArithmeticError("bad"))

        monkeypatch.setattr(trainer_mod, "batch_code", boom)
        with pytest.raises(TrainingError, match="iteration 0, column 7"):
            train(small_problem[0], quick_config(), IDL(0.0), size=16)

    @pytest.mark.slow
    def test_planted_recovery(self):
        data, planted = make_synthetic(16, 40, 3, 2000, 0.0, seed=0)
        cfg = TrainConfig(iterations=25, coder="omp", coder_param=3, seed=0)
        d, _, _ = train(data, cfg, IDL(0.0), size=40)
        recovered = np.mean(np.abs(planted.atoms.T @ d.atoms).max(axis=1) >= 0.99)
        assert recovered >= 0.6


class TestHistoryExport:
    def test_jsonl(self, small_problem):
        _, _, history = train(small_problem[0], quick_config(iterations=2), IDL(1.0), size=16)
        lines = history.to_jsonl().strip().split("\n")
        assert len(lines) == 2
        rec = json.loads(lines[1])
        assert rec["iteration"] == 1 and "wall_time" in rec
        assert rec["mutual_coherence"] == history[1].mutual_coherence
        assert "wall_time" not in json.loads(history.to_jsonl(include_timings=False).split("\n")[0])

    def test_csv(self, small_problem):
        _, _, history = train(small_problem[0], quick_config(iterations=3), KSVDReplace(0.8), size=16)
        rows = list(csv.DictReader(io.StringIO(history.to_csv())))
        assert len(rows) == 3
        assert float(rows[2]["approx_error"]) == history[2].approx_error
        sv = [float(v) for v in rows[0]["singular_values"].split()]
        assert sv == history[0].singular_values
