"""CSV ingestion, label validation, and deterministic train/val/test splits.

The input dialect matches the Kaggle export of the SuicideWatch/depression
corpus: RFC-4180 quoting, UTF-8, a `text` column and a `class` column whose
values are exactly `suicide` or `non-suicide`.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

TEXT_COLUMN = "text"
LABEL_COLUMN = "class"
LABEL_NAMES = {"suicide": 1, "non-suicide": 0}
NAME_FOR_LABEL = {1: "suicide", 0: "non-suicide"}


class CorpusError(ValueError):
    """Malformed dataset file: missing columns, unknown labels, too few rows."""


@dataclass(frozen=True)
class Record:
    text: str
    label: int

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError("record text is empty after trimming")
        if self.label not in (0, 1):
            raise CorpusError(f"label must be 0 or 1, got {self.label!r}")


@dataclass
class DatasetSplit:
    train: list[Record]
    validation: list[Record]
    test: list[Record]
    seed: int

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def load_csv(path: str | Path) -> list[Record]:
    """Read records in row order; empty-text rows are skipped and counted."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    records: list[Record] = []
    skipped = 0
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if TEXT_COLUMN not in header or LABEL_COLUMN not in header:
            raise CorpusError(
                f"{path}: header must contain {TEXT_COLUMN!r} and {LABEL_COLUMN!r} "
                f"columns, got {header}"
            )
        for row_num, row in enumerate(reader, start=2):  # 1-based, after header
            raw_label = (row[LABEL_COLUMN] or "").strip()
            if raw_label not in LABEL_NAMES:
                raise CorpusError(f"{path}: row {row_num}: unknown label {raw_label!r}")
            text = row[TEXT_COLUMN] or ""
            if not text.strip():
                skipped += 1
                continue
            records.append(Record(text=text, label=LABEL_NAMES[raw_label]))
    if skipped:
        logger.warning("%s: skipped %d rows with empty text", path, skipped)
    return records


def write_csv(records: list[Record], path: str | Path) -> None:
    """Inverse of load_csv for the declared dialect (round-trips exactly)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([TEXT_COLUMN, LABEL_COLUMN])
        for rec in records:
            writer.writerow([rec.text, NAME_FOR_LABEL[rec.label]])


def split(
    records: list[Record],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 42,
) -> DatasetSplit:
    """Seeded shuffle-then-slice partition; same seed => same split.

    Slice boundaries are rounded cumulative ratios, so each part's size is
    within one element of ratio * n and the parts always partition the input.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1.0, got {sum(ratios)}")
    if len(records) < 3:
        raise CorpusError(f"need at least 3 records to split, got {len(records)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    b1 = int(round(ratios[0] * len(records)))
    b2 = int(round((ratios[0] + ratios[1]) * len(records)))
    shuffled = [records[i] for i in order]
    return DatasetSplit(
        train=shuffled[:b1],
        validation=shuffled[b1:b2],
        test=shuffled[b2:],
        seed=seed,
    )


def class_balance(records: list[Record]) -> tuple[int, int]:
    """(count of label 1, count of label 0)."""
    pos = sum(1 for r in records if r.label == 1)
    return pos, len(records) - pos
