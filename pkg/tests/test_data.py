import numpy as np
import pytest

from conformal_amp import (
    Dataset,
    SplitSpec,
    SyntheticConfig,
    augment,
    generate_synthetic,
    load_csv,
    split,
)


class TestDataset:
    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError, match="row mismatch"):
            Dataset(np.ones((3, 2)), np.ones(4))

    def test_non_finite_rejected(self):
        X = np.ones((2, 2))
        X[0, 0] = np.nan
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(X, np.ones(2))
        with pytest.raises(ValueError, match="non-finite"):
            Dataset(np.ones((2, 2)), np.array([1.0, np.inf]))

    def test_accessors(self):
        ds = Dataset(np.ones((6, 3)), np.zeros(6))
        assert (ds.n, ds.d) == (6, 3)
        assert ds.alpha == 2.0

    def test_augment_appends_last_row(self):
        ds = Dataset(np.arange(6.0).reshape(3, 2), np.array([1.0, 2.0, 3.0]))
        out = augment(ds, [9.0, 8.0], -1.0)
        assert out.n == 4
        np.testing.assert_array_equal(out.X[-1], [9.0, 8.0])
        assert out.y[-1] == -1.0
        with pytest.raises(ValueError):
            augment(ds, [1.0, 2.0, 3.0], 0.0)


class TestGenerateSynthetic:
    def test_shapes_and_entry_variance(self):
        cfg = SyntheticConfig(n=100, d=50, teacher_prior="gaussian",
                              noise_variance=1.0, seed=7)
        ds, teacher = generate_synthetic(cfg)
        assert ds.X.shape == (100, 50)
        assert teacher.shape == (50,)
        var = ds.X.var()
        assert 0.5 / 50 <= var <= 1.5 / 50

    def test_noiseless_labels_are_exact(self):
        cfg = SyntheticConfig(n=40, d=10, noise_variance=0.0, seed=3)
        ds, teacher = generate_synthetic(cfg)
        np.testing.assert_array_equal(ds.y, ds.X @ teacher)

    def test_seeded_determinism(self):
        cfg = SyntheticConfig(n=30, d=8, teacher_prior="laplace",
                              noise_variance=0.5, seed=11)
        a, ta = generate_synthetic(cfg)
        b, tb = generate_synthetic(cfg)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(ta, tb)

    def test_moments_at_scale(self):
        # n*d >= 1e4: entry mean near 0 and variance near 1/d
        cfg = SyntheticConfig(n=200, d=100, seed=1)
        ds, _ = generate_synthetic(cfg)
        assert abs(ds.X.mean()) < 0.3 / np.sqrt(100)
        assert 0.7 / 100 <= ds.X.var() <= 1.3 / 100

    def test_invalid_configs(self):
        with pytest.raises(ValueError):
            SyntheticConfig(n=0, d=5)
        with pytest.raises(ValueError):
            SyntheticConfig(n=5, d=5, teacher_prior="cauchy")
        with pytest.raises(ValueError):
            SyntheticConfig(n=5, d=5, noise_variance=-1.0)


class TestLoadCsv:
    def test_single_column_zscores(self, tmp_path):
        path = tmp_path / "tiny.csv"
        path.write_text("x,target\n1,10\n2,20\n3,30\n")
        ds = load_csv(path, "target")
        # population z-scores of (1, 2, 3), d=1 so the 1/sqrt(d) factor is 1
        expected = np.array([-1.224744871391589, 0.0, 1.224744871391589])
        np.testing.assert_allclose(ds.X[:, 0], expected, atol=1e-12)
        np.testing.assert_allclose(ds.y, expected, atol=1e-12)

    def test_constant_column_maps_to_zero(self, tmp_path):
        path = tmp_path / "const.csv"
        path.write_text("a,b,target\n5,1,1\n5,2,4\n5,3,9\n")
        ds = load_csv(path, "target")
        np.testing.assert_array_equal(ds.X[:, 0], 0.0)
        assert np.any(ds.X[:, 1] != 0.0)

    def test_parse_error_names_row_and_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("age,target\n1,2\noops,3\n")
        with pytest.raises(ValueError, match=r"row 2, column 'age'"):
            load_csv(path, "target")

    def test_missing_target_column(self, tmp_path):
        path = tmp_path / "cols.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="no column named"):
            load_csv(path, "target")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_csv(tmp_path / "nope.csv", "target")

    def test_column_scaling_convention(self, tmp_path):
        rng = np.random.default_rng(0)
        table = rng.normal(10.0, 3.0, size=(40, 5))
        path = tmp_path / "real.csv"
        header = "c0,c1,c2,c3,target"
        rows = "\n".join(",".join(f"{float(v)!r}" for v in row) for row in table)
        path.write_text(header + "\n" + rows + "\n")
        ds = load_csv(path, "target")
        d = 4
        assert np.all(np.abs(ds.X.mean(axis=0)) <= 1e-10)
        np.testing.assert_allclose(ds.X.var(axis=0), 1.0 / d, atol=1e-10)
        assert abs(ds.y.mean()) <= 1e-10
        np.testing.assert_allclose(ds.y.var(), 1.0, atol=1e-10)


class TestSplit:
    def test_sizes(self):
        ds = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10.0))
        train, test = split(ds, SplitSpec(train_fraction=0.8, seed=0))
        assert (train.n, test.n) == (8, 2)

    def test_determinism(self):
        ds = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10.0))
        a = split(ds, SplitSpec(0.7, seed=5))
        b = split(ds, SplitSpec(0.7, seed=5))
        np.testing.assert_array_equal(a[0].X, b[0].X)
        np.testing.assert_array_equal(a[1].y, b[1].y)

    def test_smaller_fraction_is_prefix_of_larger(self):
        ds = Dataset(np.arange(20.0).reshape(10, 2), np.arange(10.0))
        small, _ = split(ds, SplitSpec(0.5, seed=9))
        large, _ = split(ds, SplitSpec(0.8, seed=9))
        np.testing.assert_array_equal(small.X, large.X[:5])

    def test_partition_is_exact(self):
        rng = np.random.default_rng(2)
        ds = Dataset(rng.normal(size=(17, 3)), rng.normal(size=17))
        train, test = split(ds, SplitSpec(0.6, seed=1))
        assert train.n + test.n == ds.n
        merged = np.vstack([train.X, test.X])
        order = np.lexsort(merged.T)
        base_order = np.lexsort(ds.X.T)
        np.testing.assert_array_equal(merged[order], ds.X[base_order])
        np.testing.assert_array_equal(
            np.sort(np.concatenate([train.y, test.y])), np.sort(ds.y)
        )

    def test_too_small(self):
        ds = Dataset(np.ones((1, 2)), np.ones(1))
        with pytest.raises(ValueError):
            split(ds, SplitSpec(0.5, seed=0))

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            SplitSpec(train_fraction=1.0)
