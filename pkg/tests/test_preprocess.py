import numpy as np
import pytest

from pm25map.preprocess import (
    LinearFit, PreprocessError, StationSeries, compute_uncertainty,
    correct_pm_humidity, daily_average, extract_window, fit_sensor_regression,
    iqr_filter, merge_daily_aod, merge_daily_aod_grid, normalize_aod_pblh,
    strict_qa_mask, uncertainty_at, window_stats,
)
from pm25map.raster import (
    QA_ADJ_ONLY, QA_BEST, QA_CLOUD_ONLY, QA_NEITHER, RasterError, RasterGrid,
    band_path,
)


class TestHumidityCorrection:
    def test_rh20(self):
        assert correct_pm_humidity(50.0, 20.0) == 62.5

    def test_dry_air_identity(self):
        assert correct_pm_humidity(30.0, 0.0) == 30.0

    def test_rh50(self):
        assert correct_pm_humidity(10.0, 50.0) == 20.0

    def test_rh_100_rejected(self):
        with pytest.raises(PreprocessError):
            correct_pm_humidity(10.0, 100.0)

    def test_negative_pm_rejected(self):
        with pytest.raises(PreprocessError):
            correct_pm_humidity(-1.0, 10.0)

    def test_monotone_in_rh(self):
        vals = [correct_pm_humidity(25.0, rh) for rh in range(0, 99, 7)]
        assert all(b > a for a, b in zip(vals, vals[1:]))
        assert all(v >= 25.0 for v in vals)


class TestDailyAverage:
    def test_constant_day(self):
        s = StationSeries("S1", 0.0, 0.0)
        for h in range(24):
            s.pm[f"2018-03-01T{h:02d}:00:00"] = 30.0
        out = daily_average(s)
        assert out.pm["2018-03-01"] == 30.0

    def test_partial_day(self):
        s = StationSeries("S1", 0.0, 0.0)
        s.pm["2018-03-01T09:00:00"] = 10.0
        s.pm["2018-03-01T12:00:00"] = 20.0
        s.pm["2018-03-01T15:00:00"] = np.nan
        out = daily_average(s)
        assert out.pm["2018-03-01"] == 15.0

    def test_all_missing_day_stays_missing(self):
        s = StationSeries("S1", 0.0, 0.0)
        for h in range(24):
            s.pm[f"2018-03-01T{h:02d}:00:00"] = np.nan
        out = daily_average(s)
        assert "2018-03-01" not in out.pm

    def test_rh_averaged_alongside(self):
        s = StationSeries("S1", 0.0, 0.0)
        s.rh["2018-03-01T09:00:00"] = 40.0
        s.rh["2018-03-01T15:00:00"] = 60.0
        assert daily_average(s).rh["2018-03-01"] == 50.0


def _iqr_oracle(values):
    """Independent inlier rule: sort, linear-interpolated quartiles by
    hand, keep values in [q1 - iqr, q3 + iqr]."""
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)

    def quant(p):
        pos = p * (n - 1)
        lo = int(np.floor(pos))
        hi = int(np.ceil(pos))
        frac = pos - lo
        return v[lo] * (1 - frac) + v[hi] * frac

    q1, q3 = quant(0.25), quant(0.75)
    iqr = q3 - q1
    keep = [i for i, x in enumerate(values)
            if q1 - iqr <= x <= q3 + iqr]
    return keep


class TestIqrFilter:
    def test_all_equal_no_outliers(self):
        inl, out = iqr_filter([7.0] * 6)
        assert list(inl) == list(range(6)) and len(out) == 0

    def test_known_outlier(self):
        vals = [10.0, 12.0, 14.0, 16.0, 100.0]
        inl, out = iqr_filter(vals)
        assert list(out) == [4]
        assert list(inl) == _iqr_oracle(vals)

    def test_four_values_all_kept(self):
        inl, out = iqr_filter([1.0, 2.0, 3.0, 4.0])
        assert list(inl) == [0, 1, 2, 3] and len(out) == 0

    def test_short_input_passthrough_warns(self):
        with pytest.warns(UserWarning):
            inl, out = iqr_filter([1.0, 99.0])
        assert list(inl) == [0, 1] and len(out) == 0

    def test_partition_property(self):
        rng = np.random.default_rng(11)
        vals = rng.normal(0, 1, 30)
        inl, out = iqr_filter(vals)
        assert sorted(list(inl) + list(out)) == list(range(30))

    def test_matches_oracle_on_random_lists(self):
        rng = np.random.default_rng(2024)
        for _ in range(50):
            n = int(rng.integers(4, 40))
            vals = rng.normal(0, 1, n) + rng.choice([0.0, 8.0], n,
                                                    p=[0.9, 0.1])
            inl, _ = iqr_filter(vals)
            assert list(inl) == _iqr_oracle(vals)

    def test_idempotent_on_symmetric_input(self):
        vals = [-2.0, -1.0, 0.0, 1.0, 2.0]
        inl, _ = iqr_filter(vals)
        inl2, out2 = iqr_filter(np.asarray(vals)[inl])
        assert len(out2) == 0 and len(inl2) == len(inl)


class TestAodNormalization:
    def test_basic(self):
        assert normalize_aod_pblh(0.2, 500.0) == 4.0e-4

    def test_zero_aod(self):
        assert normalize_aod_pblh(0.0, 800.0) == 0.0

    def test_low_boundary_layer(self):
        assert np.isclose(normalize_aod_pblh(0.0555, 27.75), 2.0e-3)

    def test_nonpositive_pblh_missing(self):
        assert np.isnan(normalize_aod_pblh(0.2, 0.0))
        assert np.isnan(normalize_aod_pblh(0.2, -5.0))

    def test_missing_aod_propagates(self):
        assert np.isnan(normalize_aod_pblh(np.nan, 500.0))


class TestSensorRegression:
    def test_exact_line(self):
        a = np.linspace(0.1, 0.5, 10)
        t = 2.0 * a + 1.0
        fit = fit_sensor_regression(np.column_stack([t, a]))
        assert np.isclose(fit.slope_a_to_t, 2.0)
        assert np.isclose(fit.intercept_a_to_t, 1.0)
        assert np.isclose(fit.r2, 1.0)

    def test_constant_response(self):
        a = np.linspace(0.1, 0.5, 8)
        t = np.full(8, 0.3)
        fit = fit_sensor_regression(np.column_stack([t, a]))
        assert fit.slope_a_to_t == 0.0
        assert fit.r2 == 0.0

    def test_r2_matches_pearson_squared(self):
        rng = np.random.default_rng(4)
        a = rng.uniform(0.0, 1.0, 200)
        t = 0.9 * a + 0.02 + rng.normal(0, 0.05, 200)
        fit = fit_sensor_regression(np.column_stack([t, a]))
        num = np.sum((t - t.mean()) * (a - a.mean()))
        den = np.sqrt(np.sum((t - t.mean()) ** 2) * np.sum((a - a.mean()) ** 2))
        assert abs(fit.r2 - (num / den) ** 2) < 1e-9

    def test_degenerate_rejected(self):
        with pytest.raises(PreprocessError):
            fit_sensor_regression([[0.3, 0.2], [0.3, 0.2]])


IDENTITY_FIT = LinearFit(1.0, 0.0, 1.0, 0.0, 1.0)


class TestAodMerge:
    def test_both_present_mean(self):
        assert merge_daily_aod(0.2, 0.3, IDENTITY_FIT) == 0.25

    def test_both_missing(self):
        assert np.isnan(merge_daily_aod(np.nan, np.nan, IDENTITY_FIT))

    def test_identity_fill(self):
        assert merge_daily_aod(0.2, np.nan, IDENTITY_FIT) == 0.2

    def test_regression_fill_other_direction(self):
        fit = LinearFit(2.0, 0.1, 0.5, -0.05, 0.9)
        got = merge_daily_aod(np.nan, 0.4, fit)
        assert np.isclose(got, (0.5 * 0.4 - 0.05 + 0.4) / 2.0)

    def test_symmetric_when_both_present(self):
        assert merge_daily_aod(0.11, 0.37, IDENTITY_FIT) == \
            merge_daily_aod(0.37, 0.11, IDENTITY_FIT)

    def test_grid_merge_matches_scalar(self):
        rng = np.random.default_rng(9)
        a = rng.uniform(0.05, 0.6, (6, 6))
        t = 0.9 * a + 0.02
        a[1, 1] = np.nan
        t[2, 3] = np.nan
        a[4, 4] = np.nan
        t[4, 4] = np.nan
        fit = LinearFit(0.9, 0.02, 1 / 0.9, -0.02 / 0.9, 1.0)
        ga = RasterGrid(a, origin=(1.0, 2.0), cell_size=0.01)
        gt = RasterGrid(t, origin=(1.0, 2.0), cell_size=0.01)
        merged = merge_daily_aod_grid(ga, gt, fit)
        for r in range(6):
            for c in range(6):
                want = merge_daily_aod(a[r, c], t[r, c], fit)
                got = merged.values[r, c]
                if np.isnan(want):
                    assert merged.mask[r, c]
                else:
                    assert np.isclose(got, want, atol=1e-12)

    def test_grid_merge_alignment_checked(self):
        ga = RasterGrid(np.ones((3, 3)), origin=(0.0, 0.0))
        gt = RasterGrid(np.ones((4, 4)), origin=(0.0, 0.0))
        with pytest.raises(PreprocessError):
            merge_daily_aod_grid(ga, gt, IDENTITY_FIT)


def _grid(vals):
    return RasterGrid(np.asarray(vals, dtype=float), origin=(0.0, 0.0),
                      cell_size=1.0)


class TestWindow:
    def test_uniform_window(self):
        g = _grid(np.full((3, 3), 0.2))
        mean, n, std = window_stats(g, 1, 1)
        assert mean == 0.2 and n == 9 and std == 0.0

    def test_two_valid_cells_fails_validity_gate(self):
        vals = np.full((3, 3), np.nan)
        vals[0, 0] = 0.2
        vals[2, 2] = 0.3
        mean, n, std = window_stats(_grid(vals), 1, 1)
        assert np.isnan(mean) and n == 2

    def test_high_dispersion_fails_std_gate(self):
        vals = np.full((3, 3), np.nan)
        vals[0, 0], vals[0, 1], vals[0, 2] = 0.1, 0.1, 1.2
        mean, n, std = window_stats(_grid(vals), 1, 1)
        assert np.isnan(mean)
        assert n == 3
        assert np.isclose(std, np.std([0.1, 0.1, 1.2], ddof=1))
        assert std >= 0.5

    def test_std_is_sample_std_of_valid_cells(self):
        vals = np.full((3, 3), np.nan)
        picks = [(0, 0), (1, 1), (2, 0), (2, 2)]
        data = [0.12, 0.19, 0.31, 0.25]
        for (r, c), v in zip(picks, data):
            vals[r, c] = v
        mean, n, std = window_stats(_grid(vals), 1, 1)
        assert n == 4
        assert np.isclose(std, np.std(data, ddof=1))
        assert np.isclose(mean, np.mean(data))

    def test_extract_window_routes_by_center(self):
        vals = np.arange(25, dtype=float).reshape(5, 5) * 0.01
        g = RasterGrid(vals, origin=(10.0, 20.0), cell_size=1.0)
        mean, n, std = extract_window(g, (8.0, 22.0))
        block = vals[1:4, 1:4]
        assert n == 9 and np.isclose(mean, block.mean())

    def test_center_outside_raster(self):
        g = _grid(np.zeros((3, 3)))
        with pytest.raises(RasterError):
            extract_window(g, (99.0, 99.0))


class TestUncertainty:
    def test_all_best(self):
        assert compute_uncertainty(np.zeros((3, 3), dtype=int)) == 1.0

    def test_none_qualify(self):
        assert compute_uncertainty(np.full((3, 3), QA_NEITHER)) == 0.0

    def test_four_of_nine(self):
        qa = np.full((3, 3), QA_ADJ_ONLY)
        qa[0, 0] = qa[0, 1] = qa[1, 0] = qa[1, 1] = QA_BEST
        assert np.isclose(compute_uncertainty(qa), 4.0 / 9.0)

    def test_quantized_range(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            qa = rng.integers(0, 4, (3, 3))
            u = compute_uncertainty(qa)
            assert any(np.isclose(u, k / 9.0) for k in range(10))

    def test_edge_cells_count_as_not_best(self):
        qa = RasterGrid(np.zeros((3, 3)), origin=(0.0, 0.0), cell_size=1.0)
        # corner window has only 4 in-bounds cells, N stays 9
        assert np.isclose(uncertainty_at(qa, 0, 0), 4.0 / 9.0)
        assert uncertainty_at(qa, 1, 1) == 1.0

    def test_masked_qa_cells_not_best(self):
        vals = np.zeros((3, 3))
        vals[1, 1] = np.nan
        qa = RasterGrid(vals, origin=(0.0, 0.0), cell_size=1.0)
        assert np.isclose(uncertainty_at(qa, 1, 1), 8.0 / 9.0)


class TestStrictQa:
    def test_masks_non_best(self):
        aod = _grid(np.full((2, 2), 0.3))
        qa_vals = np.array([[QA_BEST, QA_ADJ_ONLY],
                            [QA_CLOUD_ONLY, QA_NEITHER]], dtype=float)
        qa = _grid(qa_vals)
        out = strict_qa_mask(aod, qa)
        assert not out.mask[0, 0]
        assert out.mask[0, 1] and out.mask[1, 0] and out.mask[1, 1]


class TestRasterIO:
    def test_ascii_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        vals = rng.uniform(0.0, 1.0, (5, 7))
        vals[2, 3] = np.nan
        g = RasterGrid(vals, origin=(35.8, 51.24), cell_size=0.01, band="AOD")
        p = str(tmp_path / band_path("", "AOD", "2018-01-01").lstrip("/"))
        g.write_ascii(p)
        back = RasterGrid.read_ascii(p, band="AOD")
        assert back.values.shape == (5, 7)
        assert back.mask[2, 3]
        keep = ~g.mask
        assert np.array_equal(back.values[keep], g.values[keep])
        assert np.allclose(back.origin, g.origin)
        assert back.cell_size == g.cell_size

    def test_header_format(self, tmp_path):
        g = RasterGrid(np.zeros((2, 2)), origin=(1.0, 2.0), cell_size=0.5)
        p = str(tmp_path / "g.asc")
        g.write_ascii(p)
        lines = open(p).read().splitlines()
        assert lines[0].split() == ["ncols", "2"]
        assert lines[1].split() == ["nrows", "2"]
        assert lines[5].split()[0] == "NODATA_value"

    def test_cell_of_center_inverse(self):
        g = RasterGrid(np.zeros((4, 6)), origin=(10.0, 20.0), cell_size=0.5)
        for r in range(4):
            for c in range(6):
                lat, lon = g.cell_center(r, c)
                assert g.cell_of(lat, lon) == (r, c)

    def test_band_path_pattern(self):
        assert band_path("/d", "AOD_A", "2018-02-03") == "/d/AOD_A_2018-02-03.asc"
