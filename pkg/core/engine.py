import logging
from pathlib import Path

import duckdb
import numpy as np
import pandas as pd

from core.errors import DataLoadError

logger = logging.getLogger(__name__)


def read_csv_rows(path: Path, columns: list[str]) -> pd.DataFrame:
    """Read a CSV as strings, check its header and tag every row with its source line."""
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8-sig",
        )
    except pd.errors.EmptyDataError:
        frame = pd.DataFrame({c: pd.Series(dtype=str) for c in columns})
    except pd.errors.ParserError as e:
        raise DataLoadError(path, None, f"malformed CSV ({e})") from e
    except UnicodeDecodeError as e:
        raise DataLoadError(path, None, "file is not valid UTF-8") from e

    header = [str(c).strip() for c in frame.columns]
    if header != columns:
        raise DataLoadError(path, 1, f"expected header {','.join(columns)}, found {','.join(header)}")
    frame.columns = columns
    frame = frame.fillna("").astype(str)
    for column in columns:
        frame[column] = frame[column].str.strip()
    frame["line"] = np.arange(len(frame), dtype=np.int64) + 2

    blank = (frame[columns] == "").all(axis=1)
    return frame.loc[~blank].reset_index(drop=True)


class DatasetEngine:
    """In-memory DuckDB holding the raw CSV tables of one dataset.

    Raw tables keep every column as text plus the source line, so validation
    queries can point at the offending row.
    """

    def __init__(self):
        self.conn = duckdb.connect(database=":memory:")
        self._tables: dict[str, Path] = {}

    def close(self) -> None:
        self.conn.close()

    def __enter__(self) -> "DatasetEngine":
        return self

    def __exit__(self, *exc):
        self.close()

    def path(self, table: str) -> Path:
        return self._tables[table]

    def register_csv(self, table: str, path, columns: list[str]) -> int:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"{table} file not found: {path}")
        frame = read_csv_rows(path, columns)
        self.conn.register(f"{table}_raw", frame)
        self._tables[table] = path
        logger.info("Loaded table: %s (%d rows)", table, len(frame))
        return len(frame)

    def execute(self, sql: str, params: list | None = None) -> pd.DataFrame:
        try:
            return self.conn.execute(sql, params or []).df()
        except duckdb.Error as e:
            raise ValueError(f"query failed: {e}") from e

    def fetchone(self, sql: str, params: list | None = None):
        try:
            return self.conn.execute(sql, params or []).fetchone()
        except duckdb.Error as e:
            raise ValueError(f"query failed: {e}") from e

    def require_ids(self, table: str, columns: list[str]) -> None:
        """Every listed column must hold a non-negative integer."""
        bad = " OR ".join(
            f"TRY_CAST({c} AS BIGINT) IS NULL OR TRY_CAST({c} AS BIGINT) < 0" for c in columns
        )
        row = self.fetchone(
            f'SELECT line, {", ".join(columns)} FROM "{table}_raw" WHERE {bad} ORDER BY line LIMIT 1'
        )
        if row is not None:
            values = ", ".join(f"{c}={v!r}" for c, v in zip(columns, row[1:]))
            raise DataLoadError(self.path(table), int(row[0]), f"malformed row ({values})")

    def typed(self, table: str, int_columns: list[str], text_columns: list[str] = ()) -> None:
        """Materialise `<table>` with integer-typed id columns."""
        select = ["line"]
        select += [f"CAST({c} AS BIGINT) AS {c}" for c in int_columns]
        select += list(text_columns)
        self.conn.execute(
            f'CREATE OR REPLACE TABLE "{table}" AS SELECT {", ".join(select)} FROM "{table}_raw"'
        )

    def first_out_of_range(self, table: str, column: str, limit: int):
        return self.fetchone(
            f'SELECT line, {column} FROM "{table}" WHERE {column} >= ? ORDER BY line LIMIT 1',
            [limit],
        )

    def keep_last(self, table: str, key: list[str]) -> tuple[pd.DataFrame, pd.DataFrame]:
        """Split rows into (kept, dropped) so only the last row per key survives."""
        window = f'ROW_NUMBER() OVER (PARTITION BY {", ".join(key)} ORDER BY line DESC)'
        kept = self.execute(f'SELECT * FROM "{table}" QUALIFY {window} = 1 ORDER BY line')
        dropped = self.execute(f'SELECT * FROM "{table}" QUALIFY {window} > 1 ORDER BY line')
        return kept, dropped
