import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sparse

from circuit_srpt.meanfield import Phase
from circuit_srpt.report import (
    dumps,
    round_sig,
    rows_to_csv,
    to_jsonable,
    write_matrix,
    write_output,
)


@dataclass(frozen=True)
class Row:
    name: str
    value: float | None
    phase: Phase


class TestRoundSig:
    def test_twelve_digits(self) -> None:
        assert round_sig(1.0 / 3.0) == 0.333333333333
        assert round_sig(2.0678338484619295e-15) == 2.06783384846e-15

    def test_non_finite(self) -> None:
        assert round_sig(math.nan) == "nan"
        assert round_sig(math.inf) == "inf"
        assert round_sig(-math.inf) == "-inf"


class TestToJsonable:
    def test_dataclass_and_enum(self) -> None:
        assert to_jsonable(Row("a", 0.1, Phase.SUPERRADIANT)) == {
            "name": "a",
            "value": 0.1,
            "phase": "Superradiant",
        }

    def test_numpy_and_complex(self) -> None:
        data = to_jsonable({"m": np.eye(2), "n": np.int64(3), "z": 1 + 2j})
        assert data == {"m": [[1.0, 0.0], [0.0, 1.0]], "n": 3, "z": {"re": 1.0, "im": 2.0}}

    def test_fraction(self) -> None:
        assert to_jsonable(Fraction(1, 4)) == 0.25

    def test_unknown_type(self) -> None:
        with pytest.raises(TypeError, match="cannot serialize"):
            to_jsonable(object())

    def test_dumps_keeps_unicode(self) -> None:
        assert "ψ" in dumps({"expression": "ψ"})
        assert json.loads(dumps([math.inf])) == ["inf"]


class TestRowsToCsv:
    def test_header_and_rows(self) -> None:
        rows = [Row("a", 1.0 / 3.0, Phase.NORMAL), Row("b", None, Phase.SUPERRADIANT)]
        text = rows_to_csv(rows, {"name": "name", "value": "value[J]", "phase": "phase"})
        assert text.splitlines() == [
            "name,value[J],phase",
            "a,0.333333333333,Normal",
            "b,,Superradiant",
        ]

    def test_mappings(self) -> None:
        text = rows_to_csv([{"t": 0.1, "holds": True}], {"t": "t[K]", "holds": "holds"})
        assert text == "t[K],holds\n0.1,True\n"


class TestWriteOutput:
    def test_stdout(self, capsys: pytest.CaptureFixture[str]) -> None:
        write_output("{}")
        assert capsys.readouterr().out == "{}\n"

    def test_file(self, tmp_path: Path) -> None:
        path = tmp_path / "out.json"
        write_output("{}\n", path)
        assert path.read_text() == "{}\n"


class TestWriteMatrix:
    def test_real(self, tmp_path: Path) -> None:
        path = tmp_path / "h.txt"
        write_matrix(sparse.csr_matrix(np.array([[1.0, 0.5], [0.5, 0.0]])), path, 1e-24)
        lines = path.read_text().splitlines()
        assert lines[0] == "# dimension 2, nnz 3, energy unit 1e-24 J"
        assert lines[1:] == ["0 0 1.0", "0 1 0.5", "1 0 0.5"]

    def test_complex(self, tmp_path: Path) -> None:
        path = tmp_path / "h.txt"
        write_matrix(sparse.csr_matrix(np.array([[0, 1j], [-1j, 0]])), path, 1.0)
        assert path.read_text().splitlines()[1:] == ["0 1 0.0 1.0", "1 0 0.0 -1.0"]
