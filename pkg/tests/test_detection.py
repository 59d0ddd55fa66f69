import math

import numpy as np
import pytest

from oracles import spatial_cyclic_correlation
from prnukit.detection import CorrelationPlane, align_and_score, ncc_surface, pce
from prnukit.fingerprint import FingerprintEstimate, weight_plane
from prnukit.plane import PlaneError
from prnukit.simulate import smooth_scene


class TestNccSurface:
    def test_matches_spatial_brute_force(self):
        rng = np.random.default_rng(1)
        term = rng.standard_normal((16, 16))
        resid = rng.standard_normal((16, 16))
        surf = ncc_surface(term, resid)
        np.testing.assert_allclose(
            surf.plane, spatial_cyclic_correlation(term, resid), atol=1e-9
        )

    def test_smaller_residual_matches_brute_force(self):
        rng = np.random.default_rng(2)
        term = rng.standard_normal((16, 16))
        resid = rng.standard_normal((9, 11))
        surf = ncc_surface(term, resid)
        np.testing.assert_allclose(
            surf.plane, spatial_cyclic_correlation(term, resid), atol=1e-9
        )

    def test_autocorrelation_peak(self):
        term = np.random.default_rng(3).standard_normal((24, 24))
        surf = ncc_surface(term, term)
        assert surf.peak_shift == (0, 0)
        assert surf.plane[0, 0] == pytest.approx(1.0, abs=1e-12)

    def test_cyclic_shift_recovered(self):
        term = np.random.default_rng(4).standard_normal((32, 32))
        resid = np.roll(np.roll(term, -7, axis=0), -13, axis=1)
        surf = ncc_surface(term, resid)
        assert surf.peak_shift == (7, 13)
        assert surf.plane[7, 13] == pytest.approx(1.0, abs=1e-12)

    def test_values_bounded(self):
        rng = np.random.default_rng(5)
        surf = ncc_surface(rng.standard_normal((20, 20)), rng.standard_normal((8, 8)))
        assert np.abs(surf.plane).max() <= 1.0 + 1e-6

    def test_independent_noise_max_bound(self):
        # max |ncc| of independent white planes stays below 6/sqrt(N)
        n = 128
        for seed in range(20):
            rng = np.random.default_rng(seed)
            surf = ncc_surface(rng.standard_normal((n, n)), rng.standard_normal((n, n)))
            assert np.abs(surf.plane).max() <= 6.0 / n

    def test_zero_energy_rejected(self):
        with pytest.raises(PlaneError):
            ncc_surface(np.zeros((8, 8)), np.ones((8, 8)))
        with pytest.raises(PlaneError):
            ncc_surface(np.ones((8, 8)), np.zeros((8, 8)))

    def test_residual_larger_than_term_rejected(self):
        with pytest.raises(PlaneError):
            ncc_surface(np.ones((8, 8)), np.ones((9, 9)))

    def test_tie_break_lexicographic(self):
        plane = np.zeros((6, 6))
        plane[2, 4] = plane[4, 1] = plane[2, 1] = 1.0
        assert CorrelationPlane(plane, (0, 0)) is not None
        from prnukit.detection import _argmax_shift

        assert _argmax_shift(plane) == (2, 1)


class TestPce:
    def test_constant_plane_gives_one(self):
        surf = CorrelationPlane(np.full((32, 32), 0.3), (0, 0))
        assert pce(surf, (5, 5)) == pytest.approx(1.0)

    def test_peak_over_floor_arithmetic(self):
        plane = np.ones((64, 64))
        plane[20, 30] = 10.0
        surf = CorrelationPlane(plane, (20, 30))
        assert pce(surf) == pytest.approx(100.0)

    def test_white_noise_extreme_value_band(self):
        # argmax PCE of a white plane concentrates near 2 ln N
        n = 256
        values = []
        for seed in range(100):
            plane = np.random.default_rng(seed).standard_normal((n, n))
            surf = CorrelationPlane(plane, (0, 0))
            surf = CorrelationPlane(plane, divmod(int(np.argmax(plane)), n))
            values.append(pce(surf))
        mean = np.mean(values)
        assert 0.5 * math.log(n * n) <= mean <= 2.5 * math.log(n * n)

    def test_zero_background_gives_inf(self):
        plane = np.zeros((16, 16))
        plane[3, 3] = 1.0
        surf = CorrelationPlane(plane, (3, 3))
        assert pce(surf, neighborhood=7) == math.inf

    def test_signed_variant(self):
        plane = np.ones((32, 32))
        plane[4, 4] = -10.0
        surf = CorrelationPlane(plane, (4, 4))
        assert pce(surf) > 0
        assert pce(surf, signed=True) < 0

    def test_scale_invariance(self):
        rng = np.random.default_rng(9)
        plane = rng.standard_normal((64, 64))
        shift = divmod(int(np.argmax(plane)), 64)
        a = pce(CorrelationPlane(plane, shift))
        b = pce(CorrelationPlane(plane * 123.0, shift))
        assert a == pytest.approx(b, rel=1e-12)

    def test_neighborhood_validation(self):
        surf = CorrelationPlane(np.ones((8, 8)), (0, 0))
        with pytest.raises(ValueError):
            pce(surf, neighborhood=4)
        with pytest.raises(ValueError):
            pce(surf, neighborhood=9)


def synthetic_query(k, sigma_k, crop, patch, noise, seed):
    """Weighted residual patch carrying the fingerprint at a known crop."""
    x = smooth_scene(seed, patch, patch)
    window = k[crop[0] : crop[0] + patch, crop[1] : crop[1] + patch]
    rng = np.random.default_rng(seed + 1)
    residual = x * sigma_k * window + noise * rng.standard_normal((patch, patch))
    return residual, x


class TestAlignAndScore:
    def setup_method(self):
        self.k = np.random.default_rng(100).standard_normal((256, 256))
        self.fp = FingerprintEstimate(0.05 * self.k, "baseline", 1)

    def test_planted_shift_recovered_exactly(self):
        crop = (41, 97)
        residual, x = synthetic_query(self.k, 0.05, crop, 64, 0.0, 7)
        score = align_and_score(self.fp, weight_plane("baseline", x), residual, crop)
        assert score.aligned is True
        assert score.shift == crop
        assert score.label == "H1"

    def test_misalignment_forces_h0_label(self):
        crop = (41, 97)
        residual, x = synthetic_query(self.k, 0.05, crop, 64, 0.0, 7)
        wrong = (0, 0)
        score = align_and_score(self.fp, weight_plane("baseline", x), residual, wrong)
        assert score.aligned is False
        assert score.label == "H0"

    def test_no_true_shift_is_best_alignment_protocol(self):
        rng = np.random.default_rng(11)
        residual = rng.standard_normal((64, 64))
        x = smooth_scene(12, 64, 64)
        score = align_and_score(self.fp, weight_plane("baseline", x), residual)
        assert score.aligned is None
        assert score.label == "H0"
        assert 0 <= score.shift[0] <= 192
        assert 0 <= score.shift[1] <= 192

    def test_pce_invariant_to_fingerprint_scale(self):
        crop = (10, 20)
        residual, x = synthetic_query(self.k, 0.05, crop, 64, 0.02, 21)
        wp = weight_plane("baseline", x)
        a = align_and_score(self.fp, wp, residual, crop)
        scaled_fp = FingerprintEstimate(self.fp.plane * 7.5, "baseline", 1)
        b = align_and_score(scaled_fp, wp, residual * 0.3, crop)
        assert a.pce == pytest.approx(b.pce, rel=1e-9)
        assert a.shift == b.shift

    def test_pce_invariant_to_weight_scale_end_to_end(self):
        # scaling the weighting rule scales the fingerprint estimate by the
        # inverse and the matched term by the scale itself: the PCE cannot move
        from prnukit.fingerprint import estimate_fingerprint
        from prnukit.preprocess import ResidualPair

        rng = np.random.default_rng(42)
        k = rng.standard_normal((128, 128))
        pairs = []
        for i in range(5):
            x = smooth_scene(900, 128, 128, index=i)
            pairs.append(ResidualPair(x * 0.05 * k + 0.02 * rng.standard_normal((128, 128)), x))
        crop = (17, 33)
        query, qx = synthetic_query(k, 0.05, crop, 48, 0.02, 77)
        scores = []
        for c in (0.1, 1.0, 10.0):
            fp = estimate_fingerprint(pairs, lambda x, c=c: c * x, clean=False)
            scores.append(
                align_and_score(fp, c * np.clip(qx, 0, 1), query, crop).pce
            )
        assert scores[0] == pytest.approx(scores[1], rel=1e-9)
        assert scores[2] == pytest.approx(scores[1], rel=1e-9)

    def test_max_over_alignments_dominates_fixed_shift(self):
        # under a foreign fingerprint the best-alignment score is
        # stochastically larger than the score of any one fixed shift
        other = np.random.default_rng(500).standard_normal((256, 256))
        fp = FingerprintEstimate(0.05 * other, "baseline", 1)
        best, fixed = [], []
        for seed in range(50):
            residual, x = synthetic_query(self.k, 0.05, (30, 40), 48, 0.01, 600 + seed)
            wp = weight_plane("baseline", x)
            surface_best = align_and_score(fp, wp, residual)
            best.append(surface_best.pce)
            matched = residual * wp
            matched = matched - matched.mean()
            surf = ncc_surface(fp.plane - fp.plane.mean(), matched)
            fixed.append(pce(CorrelationPlane(surf.plane[:209, :209], (30, 40)), (30, 40)))
        assert np.median(best) > np.median(fixed)

    def test_failed_alignment_always_labels_h0(self):
        # protocol contract, checked across randomized queries: whenever
        # the peak misses the declared origin the label must be H0
        rng = np.random.default_rng(77)
        checked_misses = 0
        for trial in range(30):
            residual = rng.standard_normal((48, 48))
            x = smooth_scene(800 + trial, 48, 48)
            claim = (int(rng.integers(0, 190)), int(rng.integers(0, 190)))
            score = align_and_score(
                self.fp, weight_plane("baseline", x), residual, claim
            )
            if score.aligned:
                assert score.label == "H1"
            else:
                checked_misses += 1
                assert score.label == "H0"
        assert checked_misses > 0

    def test_true_shift_outside_region_rejected(self):
        residual, x = synthetic_query(self.k, 0.05, (0, 0), 64, 0.0, 3)
        with pytest.raises(PlaneError):
            align_and_score(self.fp, weight_plane("baseline", x), residual, (200, 0))

    def test_patch_weight_shape_mismatch_rejected(self):
        with pytest.raises(PlaneError):
            align_and_score(self.fp, np.ones((32, 32)), np.ones((64, 64)), (0, 0))

    def test_patch_larger_than_fingerprint_rejected(self):
        with pytest.raises(PlaneError):
            align_and_score(self.fp, np.ones((300, 300)), np.ones((300, 300)), (0, 0))
