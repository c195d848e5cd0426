import json

import numpy as np
import pytest

from ohmgrad.csv_io import (
    SCHEMAS,
    SchemaViolation,
    read_csv,
    validate_csv,
    write_csv,
    write_json,
)


def test_write_and_read(tmp_path):
    p = write_csv(tmp_path / "run.csv", "run", [(0, np.float64(1.5), None), (1, 0.25, 0.5)])
    assert p.read_text() == "step,loss,accuracy\n0,1.5,\n1,0.25,0.5\n"
    rows = read_csv(p, "run")
    assert rows[1] == {"step": "1", "loss": "0.25", "accuracy": "0.5"}


def test_float_round_trip(tmp_path):
    x = 0.1 + 0.2
    p = write_csv(tmp_path / "l.csv", "landscape", [(x, -1e-300, np.float32(2.5))])
    row = read_csv(p, "landscape")[0]
    assert float(row["q1"]) == x and float(row["q2"]) == -1e-300 and row["loss"] == "2.5"


def test_bool_and_dict_rows(tmp_path):
    p = write_csv(tmp_path / "v.csv", "verify",
                  [{"invariant": "idem", "max_residual": 1e-12, "tolerance": 1e-9, "passed": np.bool_(True)}])
    assert read_csv(p, "verify")[0]["passed"] == "true"


@pytest.mark.parametrize("content", ["step,loss\n1,2\n", "step,loss,accuracy\n1,2\n", ""])
def test_validation_errors(tmp_path, content):
    p = tmp_path / "bad.csv"
    p.write_text(content)
    with pytest.raises(SchemaViolation):
        validate_csv(p, "run")


def test_wrong_row_width_rejected(tmp_path):
    with pytest.raises(SchemaViolation):
        write_csv(tmp_path / "x.csv", "run", [(1, 2)])


def test_every_schema_has_unique_columns():
    for cols in SCHEMAS.values():
        assert len(set(cols)) == len(cols)


def test_write_json_sorted(tmp_path):
    p = write_json(tmp_path / "a.json", {"b": 1, "a": [1, 2]})
    assert json.loads(p.read_text()) == {"a": [1, 2], "b": 1}
    assert p.read_text().index('"a"') < p.read_text().index('"b"')
