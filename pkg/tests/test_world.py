import json

import numpy as np
import pytest
from scipy.optimize import curve_fit

from argp.geometry import Rect
from argp.kernels import Hyperparams
from argp.world import GroundTruthField, generate_grf, load_csv, save_csv


class TestGenerate:
    def test_same_seed_same_field(self):
        a = generate_grf(7)
        b = generate_grf(7)
        assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self):
        assert not np.array_equal(generate_grf(1).values, generate_grf(2).values)

    def test_normalized_to_unit_interval(self):
        f = generate_grf(11)
        assert f.values.min() == 0.0
        assert f.values.max() == 1.0
        assert f.values.shape == (200, 200)

    def test_normalization_idempotent(self):
        from argp.world import _normalize

        v = generate_grf(3).values
        assert np.array_equal(_normalize(v), v)

    def test_variogram_length_scale_recovery(self):
        # statistical check: fitted SE length scale across 30 seeded fields
        def fit_ell(field):
            v = field.values
            lags = np.arange(1, 41)
            gx = np.array([0.5 * np.mean((v[:, l:] - v[:, :-l]) ** 2) for l in lags])
            gy = np.array([0.5 * np.mean((v[l:, :] - v[:-l, :]) ** 2) for l in lags])
            g = 0.5 * (gx + gy)
            h = lags * field.resolution
            popt, _ = curve_fit(
                lambda h, c, ell: c * (1 - np.exp(-h ** 2 / (2 * ell ** 2))),
                h, g, p0=[0.05, 2.0], maxfev=10000)
            return popt[1]

        ells = [fit_ell(generate_grf(seed)) for seed in range(30)]
        assert abs(np.mean(ells) - 2.36) / 2.36 <= 0.25

    def test_spectral_fallback_to_cholesky(self):
        # long correlation relative to the extent breaks the embedding
        f = generate_grf(1, hyper=Hyperparams(0.25, 10.0))
        assert f.metadata["generator"] == "cholesky"
        assert "fallback" in f.metadata["warning"]
        assert f.values.min() == 0.0 and f.values.max() == 1.0

    def test_explicit_cholesky_method(self):
        f = generate_grf(2, method="cholesky")
        assert f.metadata["generator"] == "cholesky"

    def test_spectral_method_raises_when_embedding_fails(self):
        with pytest.raises(ValueError):
            generate_grf(1, hyper=Hyperparams(0.25, 10.0), method="spectral")

    def test_resolution_must_divide_extent(self):
        with pytest.raises(ValueError):
            generate_grf(0, resolution=0.3)

    def test_hotspot_mask(self):
        f = generate_grf(5)
        mask = f.hotspot_mask()
        assert mask.any()
        assert np.array_equal(mask, f.values > 0.7)


def constant_field(value: float, side: float = 20.0, res: float = 0.1) -> GroundTruthField:
    n = round(side / res)
    return GroundTruthField(Rect(0, side, 0, side), res, np.full((n, n), value))


class TestAverageOver:
    def test_whole_extent_is_global_mean(self):
        f = generate_grf(4)
        assert f.average_over(f.extent) == pytest.approx(f.values.mean(), rel=1e-12)

    def test_constant_field(self):
        f = constant_field(0.3)
        assert f.average_over(Rect(1.2, 7.9, 0.4, 18.0)) == pytest.approx(0.3, rel=1e-12)

    def test_checker_field_even_split(self):
        # alternating 0/1 columns: any region covering equally many of each
        # kind of column averages to one half (exhaustive by construction)
        vals = np.zeros((200, 200))
        vals[:, 1::2] = 1.0
        f = GroundTruthField(Rect(0, 20, 0, 20), 0.1, vals)
        region = Rect(0.0, 2.0, 3.0, 17.0)  # 20 columns: 10 zeros, 10 ones
        assert f.average_over(region) == 0.5

    def test_linearity(self):
        f = generate_grf(8)
        region = Rect(3, 9, 2, 11)
        scaled = GroundTruthField(f.extent, f.resolution, 2.0 * f.values + 0.25)
        assert scaled.average_over(region) == pytest.approx(
            2.0 * f.average_over(region) + 0.25, rel=1e-12)

    def test_empty_intersection_raises(self):
        f = constant_field(0.5)
        with pytest.raises(ValueError):
            f.average_over(Rect(30, 40, 30, 40))

    def test_grid_shape_validated(self):
        with pytest.raises(ValueError):
            GroundTruthField(Rect(0, 20, 0, 20), 0.1, np.zeros((100, 200)))


class TestCsvRoundTrip:
    def test_bitwise_round_trip(self, tmp_path):
        f = generate_grf(9)
        path = tmp_path / "field.csv"
        save_csv(f, path)
        loaded = load_csv(path)
        assert np.array_equal(loaded.values, f.values)
        assert loaded.extent == f.extent
        assert loaded.resolution == f.resolution
        assert loaded.metadata["normalized"] is True

    def test_sidecar_metadata_for_external_shape(self, tmp_path):
        # 150 m x 150 m external field at 1 m resolution
        vals = np.random.default_rng(0).uniform(15, 35, (150, 150))
        f = GroundTruthField(Rect(0, 150, 0, 150), 1.0, vals)
        path = tmp_path / "crop.csv"
        save_csv(f, path)
        assert json.loads((tmp_path / "crop.meta.json").read_text())["resolution_m"] == 1.0
        loaded = load_csv(path, normalize=True)
        assert loaded.extent.x_max == 150.0
        assert loaded.values.min() == 0.0 and loaded.values.max() == 1.0

    def test_missing_sidecar_needs_explicit_geometry(self, tmp_path):
        path = tmp_path / "bare.csv"
        path.write_text("0.1,0.2\n0.3,0.4\n")
        with pytest.raises(ValueError):
            load_csv(path)
        loaded = load_csv(path, extent=Rect(0, 2, 0, 2), resolution=1.0)
        assert loaded.values.shape == (2, 2)
        # rows are stored north to south on disk
        assert loaded.values[1, 0] == 0.1 and loaded.values[0, 0] == 0.3

    def test_ragged_row_names_row(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("0.1,0.2\n0.3\n")
        with pytest.raises(ValueError, match="row 1"):
            load_csv(path, extent=Rect(0, 2, 0, 2), resolution=1.0)

    def test_non_numeric_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.1,0.2\n0.3,oops\n")
        with pytest.raises(ValueError, match="row 1, column 1"):
            load_csv(path, extent=Rect(0, 2, 0, 2), resolution=1.0)
