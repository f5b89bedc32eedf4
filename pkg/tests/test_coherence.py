import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cohdict import (
    Dictionary,
    ValidationError,
    erc_max_cardinality,
    etf_flat_value,
    gram_offdiag_histogram,
    gram_summary,
    mutual_coherence,
    singular_spectrum,
    welch_bound,
)
from conftest import mercedes_benz, random_dictionary


def icosahedron_lines() -> np.ndarray:
    """The 6 diagonals of the icosahedron: an ETF of 6 lines in R^3."""
    phi = (1 + math.sqrt(5)) / 2
    pts = [(0, 1, phi), (0, -1, phi), (1, phi, 0), (-1, phi, 0), (phi, 0, 1), (phi, 0, -1)]
    return np.array(pts, dtype=float).T


def brute_coherence(a):
    best = 0.0
    for i in range(a.shape[1]):
        for j in range(a.shape[1]):
            if i != j:
                best = max(best, abs(float(np.dot(a[:, i], a[:, j]))))
    return best


class TestMutualCoherence:
    def test_identity(self):
        assert mutual_coherence(Dictionary(np.eye(4))) == 0.0

    def test_duplicated_atom(self, rng):
        a = rng.standard_normal((5, 6))
        a[:, 4] = a[:, 1]
        assert mutual_coherence(Dictionary(a)) == 1.0

    def test_mercedes_benz(self, mb_frame):
        assert mutual_coherence(mb_frame) == pytest.approx(0.5, abs=1e-12)

    def test_matches_brute_force(self, rng):
        d = random_dictionary(rng, 6, 15)
        assert mutual_coherence(d) == pytest.approx(brute_coherence(d.atoms), abs=1e-15)

    def test_single_atom_undefined(self):
        with pytest.raises(ValidationError):
            mutual_coherence(Dictionary(np.ones((3, 1))))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_and_sign_invariance(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((5, 11))
        perm = r.permutation(11)
        signs = r.choice([-1.0, 1.0], size=11)
        mu = mutual_coherence(Dictionary(a))
        assert mutual_coherence(Dictionary(a[:, perm] * signs)) == pytest.approx(mu, abs=1e-15)

    def test_welch_bound_over_random_dictionaries(self):
        r = np.random.default_rng(7)
        for _ in range(1000):
            dim = int(r.integers(2, 17))
            size = int(r.integers(dim, 4 * dim + 1))
            d = random_dictionary(r, dim, size)
            assert mutual_coherence(d) >= welch_bound(dim, size) - 1e-12


class TestWelchBound:
    def test_square_is_zero(self):
        assert welch_bound(7, 7) == 0.0
        assert welch_bound(7, 3) == 0.0
        assert welch_bound(4, 1) == 0.0

    def test_mercedes_benz_dims(self):
        assert welch_bound(2, 3) == pytest.approx(math.sqrt((3 - 2) / (2 * 2)))
        assert welch_bound(2, 3) == pytest.approx(0.5, abs=1e-15)

    def test_experiment_dims(self):
        # D=160, L=1000 from the speech experiment
        assert welch_bound(160, 1000) == pytest.approx(0.072493, abs=1e-6)

    def test_desk_scale_dims(self):
        assert welch_bound(16, 40) == pytest.approx(math.sqrt(24 / (16 * 39)), abs=1e-15)

    @pytest.mark.parametrize("frame", [mercedes_benz(), icosahedron_lines()])
    def test_attained_by_etf(self, frame):
        d = Dictionary(frame)
        assert mutual_coherence(d) == pytest.approx(welch_bound(d.dim, d.size), abs=1e-12)


class TestErc:
    @pytest.mark.parametrize(
        "mu, k",
        [
            (1.0, 0),  # bound is exactly 1
            (1 / 3, 1),  # bound is exactly 2
            (0.072493, 7),  # (1 + 13.794) / 2 = 7.397
            (0.5, 1),  # bound 1.5
            (0.2, 2),  # bound exactly 3
        ],
    )
    def test_values(self, mu, k):
        assert erc_max_cardinality(mu) == k

    def test_matches_strict_inequality(self):
        for mu in np.linspace(0.01, 1.0, 500):
            k = erc_max_cardinality(mu)
            bound = 0.5 * (1 + 1 / mu)
            assert k < bound + 1e-9
            assert k + 1 >= bound - 1e-9

    @pytest.mark.parametrize("mu", [0.0, -0.1, 1.5])
    def test_invalid(self, mu):
        with pytest.raises(ValidationError):
            erc_max_cardinality(mu)


class TestHistogram:
    def test_identity_mass_in_first_bin(self):
        edges, counts = gram_offdiag_histogram(Dictionary(np.eye(5)), 10)
        assert counts[0] == 10 and counts[1:].sum() == 0
        np.testing.assert_allclose(edges, np.linspace(0, 1, 11))

    def test_mercedes_benz(self, mb_frame):
        edges, counts = gram_offdiag_histogram(mb_frame, 10)
        k = np.searchsorted(edges, 0.5, side="right") - 1
        assert counts[k] == 3 and counts.sum() == 3
        assert edges[k] <= 0.5 < edges[k + 1]

    def test_total_count(self, rng):
        _, counts = gram_offdiag_histogram(random_dictionary(rng, 8, 16), 13)
        assert counts.sum() == 16 * 15 // 2

    def test_duplicate_lands_in_last_bin(self):
        a = np.array([[1.0, 1.0], [0.0, 0.0]])
        _, counts = gram_offdiag_histogram(Dictionary(a), 4)
        assert counts[-1] == 1


class TestSpectrum:
    def test_identity(self):
        np.testing.assert_allclose(singular_spectrum(Dictionary(np.eye(6))), 1.0, atol=1e-12)

    def test_mercedes_benz(self, mb_frame):
        np.testing.assert_allclose(singular_spectrum(mb_frame), [math.sqrt(1.5)] * 2, atol=1e-12)

    def test_etf_is_flat(self):
        d = Dictionary(icosahedron_lines())
        np.testing.assert_allclose(singular_spectrum(d), math.sqrt(6 / 3), atol=1e-12)

    def test_against_svd_and_frobenius(self, rng):
        for dim, size in [(5, 12), (8, 8), (9, 4)]:
            d = random_dictionary(rng, dim, size)
            s = singular_spectrum(d)
            assert s.shape == (min(dim, size),)
            assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
            np.testing.assert_allclose(s, np.linalg.svd(d.atoms, compute_uv=False), atol=1e-7)
            assert np.sum(s**2) == pytest.approx(size, rel=1e-6)


class TestEtfFlatValue:
    def test_values(self):
        assert etf_flat_value(160, 1000) == pytest.approx(2.5)
        assert etf_flat_value(5, 5) == 1.0
        assert etf_flat_value(2, 3) == pytest.approx(1.2247, abs=1e-4)
        assert etf_flat_value(16, 40) == pytest.approx(math.sqrt(2.5))

    def test_invalid(self):
        with pytest.raises(ValidationError):
            etf_flat_value(4, 3)


class TestGramSummary:
    def test_identity(self):
        s = gram_summary(Dictionary(np.eye(4)), 10)
        assert s.mutual_coherence == 0 and s.welch_bound == 0 and s.etf_flat_value == 1
        np.testing.assert_allclose(s.singular_values, 1.0)

    def test_mercedes_benz_certificate(self, mb_frame):
        s = gram_summary(mb_frame)
        g = np.abs(mb_frame.atoms.T @ mb_frame.atoms)[np.triu_indices(3, 1)]
        assert np.ptp(g) < 1e-9
        np.testing.assert_allclose(s.singular_values, s.etf_flat_value, atol=1e-9)
        assert s.mutual_coherence == pytest.approx(s.welch_bound, abs=1e-8)
        assert s.etf_admissible

    def test_random_strictly_above_bound(self, rng):
        s = gram_summary(random_dictionary(rng, 8, 16))
        assert s.mutual_coherence > s.welch_bound
        assert sum(s.hist_counts) == 120

    def test_json_keys(self, mb_frame):
        js = gram_summary(mb_frame, 5).to_json()
        assert {"mu", "welch", "hist_edges", "hist_counts", "sigma", "etf_flat"} <= set(js)
        assert len(js["hist_edges"]) == 6

    def test_admissibility_flag(self, rng):
        # L <= D(D+1)/2 fails for 2 x 4
        assert not gram_summary(random_dictionary(rng, 2, 4)).etf_admissible
