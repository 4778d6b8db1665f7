from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from utils.config import MIN_OBSERVATIONS
from utils.errors import DataError
from utils.models import Sample

ColumnSelector = Optional[Union[str, int]]


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except (TypeError, ValueError):
        return False


def has_header(path: Union[str, Path]) -> bool:
    """A first line with any non-numeric field is a header."""
    with open(path, newline="") as f:
        first = f.readline()
    fields = [field.strip() for field in first.strip().split(",")]
    return any(field != "" and not _is_number(field) for field in fields)


def _read_frame(path: Union[str, Path]):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    header = has_header(path)
    try:
        frame = pd.read_csv(path, header=0 if header else None, dtype=str,
                            skip_blank_lines=False, keep_default_na=False,
                            skipinitialspace=True)
    except pd.errors.EmptyDataError as exc:
        raise DataError(f"need at least {MIN_OBSERVATIONS} observations, got 0") from exc
    except pd.errors.ParserError as exc:
        raise DataError(f"malformed CSV: {exc}") from exc
    first_data_line = 2 if header else 1
    return frame, first_data_line


def _column_position(frame: pd.DataFrame, selector: ColumnSelector, default: int) -> int:
    if selector is None:
        position = default
    elif isinstance(selector, int) or str(selector).strip().isdigit():
        position = int(selector)
    else:
        names = [str(c).strip() for c in frame.columns]
        if str(selector).strip() not in names:
            raise DataError(f"column '{selector}' not found; available columns: {names}")
        return names.index(str(selector).strip())
    if position >= frame.shape[1]:
        raise DataError(f"column {position} requested but the file has {frame.shape[1]} column(s)")
    return position


def read_columns(path: Union[str, Path], selectors: Sequence[ColumnSelector]) -> List[np.ndarray]:
    """Numeric columns of a CSV file; blank lines are skipped, anything non-finite is rejected."""
    frame, first_data_line = _read_frame(path)
    positions = [_column_position(frame, sel, default) for default, sel in enumerate(selectors)]
    raw = frame.iloc[:, positions].fillna("").astype(str).apply(lambda col: col.str.strip())
    blank = (raw == "").all(axis=1)

    columns = []
    for offset, position in enumerate(positions):
        text = raw.iloc[:, offset]
        values = pd.to_numeric(text, errors="coerce").to_numpy(dtype=float)
        bad = ~np.isfinite(values) & ~blank.to_numpy()
        if bad.any():
            row = int(np.argmax(bad))
            raise DataError(
                f"value '{text.iloc[row]}' in column {position} is not a finite number",
                line=row + first_data_line,
            )
        columns.append(values)
    keep = ~blank.to_numpy()
    return [values[keep] for values in columns]


def load_sample(path: Union[str, Path], x_col: ColumnSelector = None,
                y_col: ColumnSelector = None) -> Sample:
    x, y = read_columns(path, [x_col, y_col])
    if len(x) < MIN_OBSERVATIONS:
        raise DataError(f"need at least {MIN_OBSERVATIONS} observations, got {len(x)}")
    return Sample(x=x, y=y)


def load_series(path: Union[str, Path], column: ColumnSelector = None) -> np.ndarray:
    (series,) = read_columns(path, [column])
    if len(series) - 1 < MIN_OBSERVATIONS:
        raise DataError(f"need at least {MIN_OBSERVATIONS} observations, got {max(len(series) - 1, 0)}")
    return series
