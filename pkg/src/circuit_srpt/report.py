"""json/csv output, numbers rounded to 12 significant digits"""

import csv
import dataclasses
import io
import json
import math
import sys
from collections.abc import Mapping, Sequence
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any

import numpy as np
import scipy.sparse as sparse

SIGNIFICANT_DIGITS = 12


def round_sig(value: float) -> float | str:
    """finite numbers rounded to 12 significant digits, the rest as strings"""
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return float(f"{value:.{SIGNIFICANT_DIGITS}g}")


def to_jsonable(obj: Any) -> Any:
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating, Fraction)):
        return round_sig(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": round_sig(obj.real), "im": round_sig(obj.imag)}
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(to_jsonable(obj), indent=2, ensure_ascii=False)


def rows_to_csv(rows: Sequence[Any], columns: Mapping[str, str]) -> str:
    """rows (dataclasses or mappings) as csv, `columns` mapping field to header"""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns.values())
    for row in rows:
        data = row if isinstance(row, Mapping) else to_jsonable(row)
        values = []
        for name in columns:
            value = data.get(name)
            if isinstance(value, float):
                value = round_sig(value)
            values.append("" if value is None else value)
        writer.writerow(values)
    return buf.getvalue()


def write_output(text: str, path: Path | None = None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def write_matrix(matrix: sparse.spmatrix, path: Path, energy_unit: float) -> None:
    """nonzero entries as "row col value", values in units of energy_unit joules"""
    coo = sparse.coo_matrix(matrix)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# dimension {coo.shape[0]}, nnz {coo.nnz}, energy unit {energy_unit!r} J\n")
        complex_values = np.iscomplexobj(coo.data)
        for i, j, v in zip(coo.row, coo.col, coo.data):
            if complex_values:
                f.write(f"{i} {j} {float(v.real)!r} {float(v.imag)!r}\n")
            else:
                f.write(f"{i} {j} {float(v)!r}\n")
