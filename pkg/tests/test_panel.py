"""Panel data model, CSV round trips, and loader error reporting."""

from pathlib import Path

import numpy as np
import pytest

from geesub import (
    BERNOULLI_LOGIT,
    GAUSSIAN_IDENTITY,
    DataError,
    DomainError,
    PanelDataset,
    get_family,
    load_csv,
    simulate_panel,
    validate_conditions,
    write_csv,
)

FIXTURE = Path(__file__).parent / "data" / "tiny_panel.csv"


class TestLoadCsv:
    def test_minimal_panel(self, tiny_csv):
        data = load_csv(tiny_csv, "gaussian_identity")
        assert (data.n, data.m, data.p) == (2, 2, 1)
        assert data.subject_ids == ("a", "b")
        np.testing.assert_allclose(data.Y, [[1.0, 2.0], [3.0, 4.0]])

    def test_repo_fixture(self):
        data = load_csv(FIXTURE, "gaussian_identity")
        assert (data.n, data.m, data.p) == (4, 3, 2)
        # intercept column is explicit in the file, never implicit
        np.testing.assert_allclose(data.X[:, :, 0], 1.0)

    def test_unbalanced_names_subject(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,obs,y,x1\na,1,1,1\na,2,2,2\nb,1,3,3\n")
        with pytest.raises(DataError, match="'b'"):
            load_csv(path, "gaussian_identity")

    def test_binary_family_rejects_half(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,obs,y,x1\na,1,0,1\na,2,0.5,2\nb,1,1,3\nb,2,0,4\n")
        with pytest.raises(DataError, match="0, 1"):
            load_csv(path, "bernoulli_logit")

    def test_non_numeric_cell_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,obs,y,x1\na,1,1,1\na,2,oops,2\nb,1,3,3\nb,2,4,4\n")
        with pytest.raises(DataError, match="row 3"):
            load_csv(path, "gaussian_identity")

    def test_nan_cell_reports_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,obs,y,x1\na,1,1,1\na,2,nan,2\nb,1,3,3\nb,2,4,4\n")
        with pytest.raises(DataError, match="row 3"):
            load_csv(path, "gaussian_identity")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_csv(tmp_path / "nope.csv", "gaussian_identity")

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("subject,time,resp,x1\na,1,1,1\n")
        with pytest.raises(DataError, match="header"):
            load_csv(path, "gaussian_identity")

    def test_duplicate_obs(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,obs,y,x1\na,1,1,1\na,1,2,2\nb,1,3,3\nb,2,4,4\n")
        with pytest.raises(DataError, match="duplicate obs"):
            load_csv(path, "gaussian_identity")

    def test_rows_sorted_by_obs_within_subject(self, tmp_path):
        path = tmp_path / "shuffled.csv"
        path.write_text(
            "id,obs,y,x1\nb,2,4,4\na,2,2,2\na,1,1,1\nb,1,3,3\n"
        )
        data = load_csv(path, "gaussian_identity")
        # subjects keep first-appearance order, rows sort by obs
        assert data.subject_ids == ("b", "a")
        np.testing.assert_allclose(data.Y, [[3.0, 4.0], [1.0, 2.0]])

    def test_single_subject_rejected(self, tmp_path):
        path = tmp_path / "one.csv"
        path.write_text("id,obs,y,x1\na,1,1,1\na,2,2,2\n")
        with pytest.raises(DataError, match="at least 2"):
            load_csv(path, "gaussian_identity")


class TestRoundTrip:
    def test_write_then_load_is_exact(self, tmp_path):
        data, _ = simulate_panel("t3", 25, 4, 4, "ar1", 0.5, seed=9)
        path = tmp_path / "panel.csv"
        write_csv(data, path)
        back = load_csv(path, "gaussian_identity")
        np.testing.assert_array_equal(back.X, data.X)
        np.testing.assert_array_equal(back.Y, data.Y)
        assert back.subject_ids == data.subject_ids


class TestPanelDataset:
    def test_immutable(self, tiny_csv):
        data = load_csv(tiny_csv, "gaussian_identity")
        with pytest.raises(AttributeError):
            data.X = data.X * 2

    def test_rejects_non_finite(self):
        X = np.ones((2, 2, 1))
        Y = np.array([[1.0, np.inf], [0.0, 1.0]])
        with pytest.raises(DataError, match="non-finite"):
            PanelDataset(X=X, Y=Y, family=GAUSSIAN_IDENTITY)

    def test_binary_invariant(self):
        X = np.ones((2, 2, 1))
        Y = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(DataError):
            PanelDataset(X=X, Y=Y, family=BERNOULLI_LOGIT)

    def test_subset_preserves_order(self):
        data, _ = simulate_panel("t3", 10, 2, 2, "ex", 0.3, seed=2)
        sub = data.subset(np.array([7, 2, 5]))
        assert sub.subject_ids == tuple(data.subject_ids[i] for i in (7, 2, 5))
        np.testing.assert_array_equal(sub.X[1], data.X[2])

    def test_family_lookup(self):
        assert get_family("gaussian_identity") is GAUSSIAN_IDENTITY
        assert get_family("bernoulli_logit") is BERNOULLI_LOGIT
        with pytest.raises(DomainError):
            get_family("poisson_log")


class TestValidateConditions:
    def test_zero_column_flags_near_singular(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((20, 3, 3))
        X[:, :, 2] = 0.0
        data = PanelDataset(X=X, Y=np.zeros((20, 3)), family=GAUSSIAN_IDENTITY)
        report = validate_conditions(data)
        assert report.eigen_min == pytest.approx(0.0, abs=1e-12)
        assert report.near_singular
        assert report.flags

    def test_orthonormal_design_has_equal_extremes(self):
        p = 6
        X = np.eye(p).reshape(p, 1, p)
        data = PanelDataset(X=X, Y=np.zeros((p, 1)), family=GAUSSIAN_IDENTITY)
        report = validate_conditions(data)
        assert report.eigen_min == pytest.approx(1.0 / p, rel=1e-12)
        assert report.eigen_max == pytest.approx(1.0 / p, rel=1e-12)
        assert not report.near_singular

    def test_generated_design_matches_eigen_oracle(self):
        data, _ = simulate_panel("t3", 300, 5, 6, "ar1", 0.5, seed=3)
        report = validate_conditions(data)
        rows = data.X.reshape(-1, data.p)
        oracle = np.linalg.eigvalsh(rows.T @ rows / data.n)
        assert report.eigen_min == pytest.approx(oracle[0], rel=1e-10)
        assert report.eigen_max == pytest.approx(oracle[-1], rel=1e-10)
        assert report.eigen_min > 0
        norms = np.sqrt((rows**2).sum(axis=1))
        assert report.max_row_norm == pytest.approx(norms.max(), rel=1e-12)
