"""Indicator data ingestion and peer-group imputation."""

import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from models.errors import ImputationError, InvalidInput, ParseError
from models.schemas import IndicatorSchema

logger = logging.getLogger(__name__)

ID_COLUMN = "entity_id"
GROUP_COLUMN = "group"


@dataclass(frozen=True)
class EntityRecord:
    """One entity (e.g. a country) with raw indicator values; None marks missing."""
    entity_id: str
    group: str
    values: tuple[Optional[float], ...]

    @property
    def missing(self) -> list[int]:
        return [j for j, value in enumerate(self.values) if value is None]


@dataclass(frozen=True)
class Dataset:
    """M entity records under one indicator schema for one year."""
    schema: IndicatorSchema
    records: tuple[EntityRecord, ...]
    year_label: str

    def __post_init__(self):
        if len(self.records) < 2:
            raise InvalidInput(f"Dataset needs at least 2 entities, got {len(self.records)}")
        ids = [record.entity_id for record in self.records]
        duplicates = sorted({entity_id for entity_id in ids if ids.count(entity_id) > 1})
        if duplicates:
            raise InvalidInput(f"Duplicate entity ids: {duplicates}")
        for record in self.records:
            if len(record.values) != self.schema.size:
                raise InvalidInput(
                    f"Entity '{record.entity_id}' has {len(record.values)} values, "
                    f"schema expects {self.schema.size}"
                )
            if any(value is not None and not math.isfinite(value) for value in record.values):
                raise InvalidInput(f"Entity '{record.entity_id}' has non-finite values")

    @property
    def entity_ids(self) -> list[str]:
        return [record.entity_id for record in self.records]

    @property
    def groups(self) -> list[str]:
        return [record.group for record in self.records]

    def matrix(self) -> np.ndarray:
        """M x N float array with NaN at missing positions."""
        return np.array(
            [[np.nan if value is None else value for value in record.values] for record in self.records],
            dtype=float,
        )

    @property
    def missing_count(self) -> int:
        return sum(len(record.missing) for record in self.records)


def _read_table(path: Path) -> pd.DataFrame:
    """Every physical line as one row of strings; absent trailing fields are NaN."""
    try:
        return pd.read_csv(
            path,
            header=None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8-sig",
        )
    except UnicodeDecodeError as e:
        raise ParseError(f"Data file '{path}' is not valid UTF-8: {e.reason} at byte {e.start}") from e
    except pd.errors.EmptyDataError as e:
        raise ParseError(f"Data file '{path}' is empty", row=1) from e
    except pd.errors.ParserError as e:
        line = re.search(r"line (\d+)", str(e))
        raise ParseError(
            f"Malformed CSV in '{path}': {e}", row=int(line.group(1)) if line else None
        ) from e
    except OSError as e:
        raise ParseError(f"Cannot read data file '{path}': {e}") from e


def _first_bad_cell(flags: pd.DataFrame, raw: pd.DataFrame, kind: str) -> None:
    """Raise for the first flagged cell in file order."""
    rows, columns = np.nonzero(flags.to_numpy(dtype=bool))
    if rows.size:
        index, column = int(flags.index[rows[0]]), flags.columns[columns[0]]
        raise ParseError(f"{kind} value '{raw.at[index, column]}'", row=index + 1, column=column)


def load_dataset(
    path: Union[str, Path],
    schema: IndicatorSchema,
    year_label: Optional[str] = None,
) -> Dataset:
    """
    Parse an indicator CSV.

    Expected header: ``entity_id,group,<indicator names in schema order>``.
    Empty cells are missing values. Row numbers in errors count the header as row 1.

    Args:
        path: CSV file path (UTF-8, optional byte order mark)
        schema: Indicator schema the columns must follow
        year_label: Label for the dataset (default: file stem)

    Returns:
        Dataset with one EntityRecord per data row

    Raises:
        ParseError: unreadable file, malformed header/row, non-numeric cell, duplicate id, too few rows
    """
    path = Path(path)
    expected_header = [ID_COLUMN, GROUP_COLUMN, *schema.names]
    table = _read_table(path)

    header = [str(cell).strip() for cell in table.iloc[0]]
    if header != expected_header:
        raise ParseError(f"Header mismatch: expected {expected_header}, got {header}", row=1)

    # row label i is physical line i + 1
    body = table.iloc[1:].set_axis(header, axis=1)
    absent = body.isna()
    cells = body.fillna("").apply(lambda column: column.str.strip())
    body = cells[~(cells == "").all(axis=1)]

    short = absent.loc[body.index].any(axis=1)
    if short.any():
        index = int(short.idxmax())
        got = int((~absent.loc[index]).sum())
        raise ParseError(f"Expected {len(expected_header)} columns, got {got}", row=index + 1)
    if len(body) < 2:
        raise ParseError(f"Data file '{path}' needs at least 2 entity rows, got {len(body)}")

    ids = body[ID_COLUMN]
    if (ids == "").any():
        raise ParseError("Empty entity id", row=int((ids == "").idxmax()) + 1, column=ID_COLUMN)
    duplicated = ids.duplicated()
    if duplicated.any():
        index = int(duplicated.idxmax())
        first = int(ids.index[ids == ids.loc[index]][0])
        raise ParseError(
            f"Duplicate entity id '{ids.loc[index]}' (first seen on row {first + 1})",
            row=index + 1,
            column=ID_COLUMN,
        )

    raw = body[schema.names]
    numeric = raw.apply(pd.to_numeric, errors="coerce")
    _first_bad_cell(numeric.isna() & (raw != ""), raw, "Non-numeric")
    _first_bad_cell(numeric.isin([np.inf, -np.inf]), raw, "Non-finite")

    records = tuple(
        EntityRecord(
            entity_id=entity_id,
            group=group,
            values=tuple(None if math.isnan(value) else float(value) for value in row),
        )
        for entity_id, group, row in zip(ids, body[GROUP_COLUMN], numeric.itertuples(index=False))
    )
    dataset = Dataset(schema=schema, records=records, year_label=year_label or path.stem)
    logger.info(
        f"[DATASET] Loaded {len(records)} entities x {schema.size} indicators from {path} "
        f"({dataset.missing_count} missing values)"
    )
    return dataset


def impute_missing(ds: Dataset) -> Dataset:
    """
    Replace each missing value by the mean of the present values of the same
    indicator within the entity's group. Never zero-fills.

    Group means use pre-imputation values only, so the operation is idempotent.

    Raises:
        ImputationError: a group has a missing value but no present value for that indicator
    """
    if ds.missing_count == 0:
        return ds

    values = ds.matrix()
    groups = np.array(ds.groups)
    names = ds.schema.names
    filled = values.copy()

    for group in sorted(set(ds.groups)):
        members = groups == group
        block = values[members]
        for j in range(block.shape[1]):
            column = block[:, j]
            gaps = np.isnan(column)
            if not gaps.any():
                continue
            if gaps.all():
                raise ImputationError(group=group, indicator=names[j])
            mean = float(column[~gaps].mean())
            rows = np.where(members)[0][gaps]
            filled[rows, j] = mean
            logger.debug(
                f"[DATASET] Imputed {len(rows)} value(s) of '{names[j]}' in group '{group}' with {mean:.6g}"
            )

    records = tuple(
        replace(record, values=tuple(float(value) for value in filled[i]))
        for i, record in enumerate(ds.records)
    )
    logger.info(f"[DATASET] Imputed {ds.missing_count} missing values by group means")
    return replace(ds, records=records)
