from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


@dataclass
class SolverResult:
    """Outcome of any solver in the package.

    ``status`` is solver specific (``converged``, ``max_iterations``,
    ``stalled``, ``completed``, ``exhaustive``); ``feasible`` says whether both
    business constraints hold at ``delta``.
    """

    solver: str
    delta: np.ndarray
    objective: float
    residuals: tuple[float, float]
    feasible: bool
    status: str
    iterations: int
    kkt_residual: Optional[float] = None
    best_fitness: Optional[float] = None
    relaxed: bool = False
    multipliers: Optional[dict] = None
    trace: list[dict] = field(default_factory=list)
    trace_columns: Optional[list[str]] = None
    info: dict = field(default_factory=dict)

    @property
    def infeasible(self) -> bool:
        return not self.feasible

    def write_trace(self, path) -> None:
        """Write the per-iteration trace as CSV.

        Columns are ``trace_columns`` when set, else the keys of the first row.
        """
        if not self.trace:
            return
        columns = self.trace_columns or list(self.trace[0])
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in self.trace:
                writer.writerow([_fmt(row[c]) for c in columns])


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value
