import json
import math

import numpy as np
import pytest
from scipy import stats

from shapkan.datasets import (
    DatasetFormatError,
    SampleSpec,
    TASKS,
    generate,
    read_csv,
    write_csv,
    write_generation_manifest,
)


class TestTaskFunctions:
    def test_multiplication_value(self):
        assert TASKS["multiplication"].fn(np.array([[0.5, -0.5]]))[0] == -0.25

    def test_phase_on_constraint_manifold(self):
        got = TASKS["phase"].fn(np.array([[1.0, 0.0, 0.0]]))[0]
        assert abs(got) < 1e-12

    def test_special_at_origin(self):
        got = TASKS["special"].fn(np.array([[0.0, 1.0]]))[0]
        assert math.isclose(got, math.exp(2.0), rel_tol=1e-6)

    def test_complex_value(self):
        got = TASKS["complex"].fn(np.array([[0.5, 0.0]]))[0]
        assert math.isclose(got, math.exp(1.0), rel_tol=1e-12)

    def test_input_dims(self):
        assert TASKS["multiplication"].input_dim == 2
        assert TASKS["special"].input_dim == 2
        assert TASKS["phase"].input_dim == 3
        assert TASKS["complex"].input_dim == 2


class TestGenerate:
    def test_inputs_within_range(self):
        x, y = generate("multiplication", SampleSpec(n=5000, lo=-1, hi=1, seed=1))
        assert x.shape == (5000, 2)
        assert x.min() >= -1 and x.max() <= 1
        np.testing.assert_allclose(y, x[:, 0] * x[:, 1])

    def test_asymmetric_range(self):
        x, _ = generate("complex", SampleSpec(n=2000, lo=0.0, hi=1.0, seed=2))
        assert x.min() >= 0.0 and x.max() <= 1.0

    def test_three_dim_task(self):
        x, _ = generate("phase", SampleSpec(n=100, seed=3))
        assert x.shape == (100, 3)

    def test_deterministic(self):
        a = generate("special", SampleSpec(n=500, seed=9))
        b = generate("special", SampleSpec(n=500, seed=9))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_truncated_normal_moments(self):
        x, _ = generate("multiplication", SampleSpec(n=10000, lo=-1, hi=1, seed=4))
        assert abs(x.mean()) < 0.05
        assert abs(stats.skew(x[:, 0])) < 0.1
        # mass concentrates toward the center, unlike a uniform draw
        assert (np.abs(x[:, 0]) < 0.5).mean() > 0.45

    def test_unknown_task(self):
        with pytest.raises(ValueError, match="multiplication"):
            generate("nope", SampleSpec(n=10))

    def test_implausible_range_rejected(self):
        with pytest.raises(ValueError):
            SampleSpec(n=10, lo=10.5, hi=11.0)

    def test_bad_spec(self):
        with pytest.raises(ValueError):
            SampleSpec(n=0)
        with pytest.raises(ValueError):
            SampleSpec(n=5, lo=1.0, hi=-1.0)


class TestCsv:
    def test_round_trip_value_identical(self, tmp_path, rng):
        x = rng.uniform(-1, 1, (50, 3))
        x[0, 0] = np.pi
        x[1, 1] = 1e-300
        x[2, 2] = -7.123456789012345e100
        y = rng.uniform(-1, 1, 50)
        path = tmp_path / "data.csv"
        write_csv(path, x, y)
        x2, y2 = read_csv(path)
        np.testing.assert_array_equal(x, x2)
        np.testing.assert_array_equal(y, y2)

    def test_header_mismatch_names_column(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,z2,y\n1,2,3\n")
        with pytest.raises(DatasetFormatError, match="'z2'"):
            read_csv(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DatasetFormatError, match="empty"):
            read_csv(path)

    def test_header_only(self, tmp_path):
        path = tmp_path / "header.csv"
        path.write_text("x1,y\n")
        with pytest.raises(DatasetFormatError, match="no data rows"):
            read_csv(path)

    def test_bad_value_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x1,y\n1,2\n3,oops\n")
        with pytest.raises(DatasetFormatError, match=":3"):
            read_csv(path)

    def test_ragged_row_reports_line(self, tmp_path):
        path = tmp_path / "ragged.csv"
        path.write_text("x1,x2,y\n1,2,3\n4,5\n")
        with pytest.raises(DatasetFormatError, match=":3"):
            read_csv(path)


class TestManifest:
    def test_sidecar_contents(self, tmp_path):
        spec = SampleSpec(n=100, lo=0.0, hi=1.0, seed=11)
        path = tmp_path / "data.manifest.json"
        write_generation_manifest(path, "phase", spec)
        doc = json.loads(path.read_text())
        assert doc == {"task": "phase", "n": 100, "range": [0.0, 1.0], "seed": 11}
