# NOTES:
# A wrapper around the per-iteration optimizer trace.
# Mirrors the fluent history wrapper used for chat histories: append plus a DataFrame export for trace.csv.

from dataclasses import asdict, dataclass, fields
from typing import List

from typing_extensions import Self

import pandas as pd


@dataclass
class TraceRow:
    iteration: int
    objective: float
    min_sinr: float
    max_slack: float
    relative_change: float
    status: str
    solve_seconds: float


class TraceHistory:
    def __init__(self):
        self.__rows: List[TraceRow] = []

    def append(self, row: TraceRow) -> Self:
        if not isinstance(row, TraceRow):
            raise TypeError(
                f"Invalid row type: {type(row).__name__}. "
                f"Expected: {TraceRow.__name__}."
            )

        self.__rows.append(row)
        return self

    def last(self) -> TraceRow | None:
        return self.__rows[-1] if self.__rows else None

    def __len__(self) -> int:
        return len(self.__rows)

    def to_frame(self, **labels) -> pd.DataFrame:
        """Trace as a DataFrame; extra keyword labels become leading constant columns."""
        columns = list(labels) + [f.name for f in fields(TraceRow)]
        records = [{**labels, **asdict(row)} for row in self.__rows]
        return pd.DataFrame.from_records(records, columns=columns)
