import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ichcast.blocks import (
    BAND_EDGES,
    Block,
    band_energies,
    partition_blocks,
    sanitize_block,
    sanitize_samples,
    shannon_entropy,
    spectral_energies,
    stat_complexity,
)
from ichcast.records import Record


def oracle_band_energies(x, rate=125, bands=BAND_EDGES):
    """Independent two-sided DFT oracle for the band energies."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    spec = np.fft.fft(x - x.mean())
    power_two_sided = np.abs(spec) ** 2 / n**2
    freqs = np.arange(n) * rate / n
    out = []
    for lo, hi in bands:
        total = 0.0
        for k in range(1, n):
            f = min(freqs[k], rate - freqs[k])  # alias to the one-sided axis
            if lo <= f < hi:
                total += power_two_sided[k]
        out.append(total)
    return np.array(out)


class TestPartition:
    def _record(self, n_seconds):
        return Record("seg", 0.0, {
            "ICP": np.arange(n_seconds, dtype=np.float32),
            "wICP": np.arange(n_seconds * 125, dtype=np.float32),
        })

    def test_3600s_gives_60_blocks(self):
        blocks = partition_blocks(self._record(3600))
        assert len(blocks["ICP"]) == 60
        assert len(blocks["wICP"]) == 60

    def test_trailing_partial_minute_discarded(self):
        blocks = partition_blocks(self._record(3599))
        assert len(blocks["ICP"]) == 59

    def test_indexing_law(self):
        rec = self._record(300)
        blocks = partition_blocks(rec)
        m = 3
        assert np.array_equal(
            blocks["ICP"][m].samples, rec.channels["ICP"][m * 60:(m + 1) * 60]
        )
        assert np.array_equal(
            blocks["wICP"][m].samples,
            rec.channels["wICP"][m * 60 * 125:(m + 1) * 60 * 125],
        )
        assert blocks["wICP"][m].samples.shape == (7500,)


class TestSanitize:
    def test_29_of_60_valid_is_invalid(self):
        x = np.full(60, np.nan)
        x[:29] = 10.0
        _, valid = sanitize_samples(x, -10, 100)
        assert not valid

    def test_30_of_60_valid_is_valid_and_interpolated(self):
        x = np.full(60, np.nan)
        x[:30] = 10.0
        filled, valid = sanitize_samples(x, -10, 100)
        assert valid
        assert np.all(filled == 10.0)  # edge gap extends nearest valid

    def test_out_of_range_sample_interpolated(self):
        x = np.full(60, 10.0)
        x[30] = 250.0
        filled, valid = sanitize_samples(x, -10, 100)
        assert valid
        assert filled[30] == pytest.approx(10.0)

    def test_linear_interpolation_between_neighbors(self):
        x = np.array([0.0, np.nan, np.nan, 3.0] + [1.0] * 56)
        filled, valid = sanitize_samples(x, -10, 100)
        assert valid
        assert filled[1] == pytest.approx(1.0)
        assert filled[2] == pytest.approx(2.0)

    def test_idempotent_on_own_output(self):
        rng = np.random.default_rng(4)
        x = rng.normal(10, 5, 60)
        x[rng.random(60) < 0.3] = np.nan
        x[5] = 500.0
        filled, valid = sanitize_samples(x, -10, 100)
        assert valid
        again, valid2 = sanitize_samples(filled, -10, 100)
        assert valid2
        assert np.array_equal(filled, again)

    def test_block_wrapper_marks_validity(self):
        block = Block(0, "ICP", np.full(60, np.nan))
        out = sanitize_block(block)
        assert not out.valid


class TestStatComplexity:
    def test_constant_block(self):
        out = stat_complexity(np.full(60, 7.5))
        assert out["Med"] == 7.5
        assert out["Iqr"] == 0.0
        assert out["LineLength"] == 0.0
        assert out["ShannonEntropy"] == 0.0

    def test_alternating_line_length(self):
        x = np.tile([0.0, 1.0], 30)
        assert stat_complexity(x)["LineLength"] == 59.0

    def test_ramp_entropy_is_log2_10(self):
        x = np.arange(1.0, 61.0)
        out = stat_complexity(x)
        # oracle: 10 equal-width bins over [1, 60] hold 6 samples each
        counts, _ = np.histogram(x, bins=10, range=(1.0, 60.0))
        assert np.all(counts == 6)
        assert out["ShannonEntropy"] == pytest.approx(np.log2(10), abs=1e-12)

    def test_median_iqr_match_percentile_oracle(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=60)
        out = stat_complexity(x)
        assert out["Med"] == np.percentile(x, 50)
        assert out["Iqr"] == np.percentile(x, 75) - np.percentile(x, 25)

    @given(
        c=st.floats(-50, 50),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=30, deadline=None)
    def test_shift_law(self, c, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(10, 3, 60)
        base = stat_complexity(x)
        shifted = stat_complexity(x + c)
        assert shifted["Med"] == pytest.approx(base["Med"] + c, abs=1e-9)
        assert shifted["Iqr"] == pytest.approx(base["Iqr"], abs=1e-9)
        assert shifted["LineLength"] == pytest.approx(base["LineLength"], abs=1e-9)
        assert shifted["ShannonEntropy"] == pytest.approx(
            base["ShannonEntropy"], abs=1e-9
        )

    @given(
        a=st.floats(0.1, 20),
        seed=st.integers(0, 2**16),
    )
    @settings(max_examples=30, deadline=None)
    def test_scale_law(self, a, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(10, 3, 60)
        base = stat_complexity(x)
        scaled = stat_complexity(a * x)
        assert scaled["Med"] == pytest.approx(a * base["Med"], rel=1e-9)
        assert scaled["Iqr"] == pytest.approx(a * base["Iqr"], rel=1e-9)
        assert scaled["LineLength"] == pytest.approx(a * base["LineLength"], rel=1e-9)
        assert scaled["ShannonEntropy"] == pytest.approx(
            base["ShannonEntropy"], abs=1e-9
        )


class TestBandEnergies:
    def test_single_tone_lands_in_its_band(self):
        t = np.arange(7500) / 125.0
        x = np.sin(2 * np.pi * 2.5 * t)
        energies = spectral_energies(x, 125)
        total = energies.sum()
        assert energies[2] / total >= 0.999      # [2, 3) band
        for i in (0, 1, 3, 4, 5, 6):
            assert energies[i] / total < 0.001

    def test_constant_block_zero(self):
        assert np.all(spectral_energies(np.full(7500, 3.3), 125) == 0.0)

    def test_parseval_identity(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=7500)
        n = len(x)
        spec = np.fft.rfft(x - x.mean())
        power = np.abs(spec) ** 2 * 2.0 / n**2
        power[-1] *= 0.5
        total = power[1:].sum()
        variance = np.var(x)
        assert abs(total - variance) <= 1e-9 * variance
        # the 7 reported bands are a subset of that total
        assert spectral_energies(x, 125).sum() <= total + 1e-12

    def test_matches_two_sided_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            x = rng.normal(size=7500)
            got = spectral_energies(x, 125)
            want = oracle_band_energies(x, 125)
            np.testing.assert_allclose(got, want, rtol=1e-9)

    def test_scale_law(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=7500)
        base = spectral_energies(x, 125)
        scaled = spectral_energies(3.0 * x, 125)
        np.testing.assert_allclose(scaled, 9.0 * base, rtol=1e-9)

    def test_circular_shift_invariance(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=7500)
        base = spectral_energies(x, 125)
        shifted = spectral_energies(np.roll(x, 321), 125)
        np.testing.assert_allclose(shifted, base, rtol=1e-9)

    def test_band_edge_bin_excluded(self):
        # a tone exactly at 15 Hz belongs to no reported band
        t = np.arange(7500) / 125.0
        x = np.sin(2 * np.pi * 15.0 * t)
        energies = spectral_energies(x, 125)
        assert energies.sum() < 1e-20 * 7500

    def test_named_dict(self):
        rng = np.random.default_rng(6)
        out = band_energies(rng.normal(size=7500))
        assert set(out) == {f"{lo}-{hi}Hz" for lo, hi in BAND_EDGES}
