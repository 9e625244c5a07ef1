"""On-disk float/int/JSON helpers: bit-exact round trips, strict reads."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmf import csvio
from qmf.errors import FormatError


class TestFloatMatrix:
    def test_round_trip_is_bit_exact(self, tmp_path):
        a = np.array([[1.0 / 3.0, -2.0 ** -45], [np.pi, 1e300]])
        p = tmp_path / "m.csv"
        csvio.write_float_matrix(p, a)
        b = csvio.read_float_matrix(p)
        np.testing.assert_array_equal(a, b)
        assert a.tobytes() == b.tobytes()

    @settings(max_examples=50, deadline=None)
    @given(rows=st.lists(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64),
                                  min_size=3, max_size=3), min_size=1, max_size=5))
    def test_round_trip_property(self, rows, tmp_path_factory):
        a = np.array(rows, dtype=np.float64)
        p = tmp_path_factory.mktemp("csv") / "m.csv"
        csvio.write_float_matrix(p, a)
        np.testing.assert_array_equal(csvio.read_float_matrix(p), a)

    def test_header_written_and_skipped(self, tmp_path):
        p = tmp_path / "m.csv"
        csvio.write_float_matrix(p, np.array([[1.0, 2.0]]), header=["w_0", "w_1"])
        text = p.read_text()
        assert text.splitlines()[0] == "w_0,w_1"
        np.testing.assert_array_equal(
            csvio.read_float_matrix(p, skip_header=True), [[1.0, 2.0]])

    def test_lf_line_endings_and_trailing_newline(self, tmp_path):
        p = tmp_path / "m.csv"
        csvio.write_float_matrix(p, np.zeros((2, 2)))
        raw = p.read_bytes()
        assert b"\r" not in raw
        assert raw.endswith(b"\n")

    def test_ragged_rows_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3\n")
        with pytest.raises(FormatError):
            csvio.read_float_matrix(p)

    def test_non_numeric_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("1,2\n3,abc\n")
        with pytest.raises(FormatError):
            csvio.read_float_matrix(p)

    def test_shape_check(self, tmp_path):
        p = tmp_path / "m.csv"
        csvio.write_float_matrix(p, np.zeros((2, 2)))
        with pytest.raises(FormatError):
            csvio.read_float_matrix(p, expected_shape=(3, 2))

    def test_missing_file_is_format_error(self, tmp_path):
        with pytest.raises(FormatError):
            csvio.read_float_matrix(tmp_path / "absent.csv")

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("")
        with pytest.raises(FormatError):
            csvio.read_float_matrix(p)


class TestIntColumn:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "labels.csv"
        v = np.array([0, 3, 2, 9], dtype=np.int64)
        csvio.write_int_column(p, v)
        np.testing.assert_array_equal(csvio.read_int_column(p), v)

    def test_length_check(self, tmp_path):
        p = tmp_path / "labels.csv"
        csvio.write_int_column(p, np.arange(4))
        with pytest.raises(FormatError):
            csvio.read_int_column(p, expected_len=5)

    def test_non_integer_rejected(self, tmp_path):
        p = tmp_path / "labels.csv"
        p.write_text("1\n2.5\n")
        with pytest.raises(FormatError):
            csvio.read_int_column(p)


class TestJson:
    def test_round_trip_and_key_order(self, tmp_path):
        p = tmp_path / "x.json"
        csvio.write_json(p, {"b": 1, "a": [1, 2], "c": {"z": None}})
        assert csvio.read_json(p) == {"a": [1, 2], "b": 1, "c": {"z": None}}
        text = p.read_text()
        assert text.index('"a"') < text.index('"b"') < text.index('"c"')
        assert text.endswith("\n")

    def test_identical_payload_identical_bytes(self, tmp_path):
        p1, p2 = tmp_path / "1.json", tmp_path / "2.json"
        csvio.write_json(p1, {"x": 1.5, "y": "s"})
        csvio.write_json(p2, {"y": "s", "x": 1.5})
        assert p1.read_bytes() == p2.read_bytes()

    def test_invalid_json_rejected(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{nope")
        with pytest.raises(FormatError):
            csvio.read_json(p)

    def test_non_object_top_level_rejected(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("[1, 2]")
        with pytest.raises(FormatError):
            csvio.read_json(p)


def test_format_float_survives_round_trip_for_17_digits():
    for x in (1.0 / 3.0, 0.1, -1e-308, 2.0 ** 52 + 1.0, 5e-324):
        assert float(csvio.format_float(x)) == x
