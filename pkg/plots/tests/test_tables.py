import numpy as np
import pytest

from pptplots.tables import SchemaError, read_table


def write_csv(path, header, rows):
    lines = [header] + rows
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


def canonical_rows(columns):
    """Rows in the producer's canonical formatting."""
    n = len(next(iter(columns.values())))
    out = []
    for i in range(n):
        cells = []
        for vals in columns.values():
            v = vals[i]
            cells.append(str(v) if isinstance(v, int) else repr(float(v)))
        out.append(",".join(cells))
    return out


class TestReadTable:
    def test_reads_floats_and_ints(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", "iteration,value", ["1,0.5", "2,1.25"])
        table = read_table(path)
        assert table["iteration"].dtype == np.int64
        assert table["value"].dtype == float
        assert table.n_rows == 2

    def test_missing_column_named_in_error(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", "a,b", ["1,2"])
        table = read_table(path)
        with pytest.raises(SchemaError, match="density"):
            table.require("density")

    def test_non_numeric_column_named(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", "a,b", ["1,x"])
        with pytest.raises(SchemaError, match="'b'"):
            read_table(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", "a,b", ["1,2", "3"])
        with pytest.raises(SchemaError, match=":3"):
            read_table(path)

    def test_empty_file_rejected(self, tmp_path):
        path = tmp_path / "t.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(SchemaError):
            read_table(str(path))


class TestCheckModeRoundTrip:
    def test_byte_exact_reemission(self, tmp_path):
        rng = np.random.default_rng(1)
        columns = {
            "iteration": [int(i) for i in range(50)],
            "theta": list(rng.uniform(0, 2 * np.pi, 50)),
            "density": list(rng.uniform(0, 1, 50) ** 3),
        }
        rows = canonical_rows(columns)
        path = write_csv(tmp_path / "t.csv", "iteration,theta,density", rows)
        original = (tmp_path / "t.csv").read_bytes()
        assert read_table(path).emit().encode() == original

    def test_extreme_values_roundtrip(self, tmp_path):
        columns = {
            "v": [1e-300, 1.7976931348623157e308, 0.1 + 0.2, -0.0, 3.0],
        }
        rows = canonical_rows(columns)
        path = write_csv(tmp_path / "t.csv", "v", rows)
        assert read_table(path).emit().encode() == (tmp_path / "t.csv").read_bytes()
