"""Solver options shared by the exact solvers."""

from __future__ import annotations

from dataclasses import dataclass

__all__ = ["SolverOptions", "PRUNE_NONE", "PRUNE_INEQUALITY", "TIE_BREAK_POLICY"]

PRUNE_NONE = "none"
PRUNE_INEQUALITY = "inequality-pruning"

# Fixed policy: among objective ties (within tolerance) prefer fewer
# changepoints, then the lexicographically smallest changepoint vector.
# This also realises the spike model's exclusion of zero-effect changes.
TIE_BREAK_POLICY = "fewest-changes-then-lexicographic"


@dataclass(frozen=True)
class SolverOptions:
    """Options for the exact solvers.

    ``pruning``: None picks the per-model default (inequality pruning for
    mean and slope, disabled for spike).  Pruning never changes the
    returned objective.

    ``max_changes``: optional hard cap on the number of changes (mean and
    spike only).

    ``tolerance``: comparison tolerance for objective ties and pruning
    margins.

    ``keep_value_functions``: slope only; retain the per-t value functions
    for inspection.
    """

    pruning: str | None = None
    max_changes: int | None = None
    tolerance: float = 1e-9
    keep_value_functions: bool = False
    tie_break: str = TIE_BREAK_POLICY

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")
        if self.pruning not in (None, PRUNE_NONE, PRUNE_INEQUALITY):
            raise ValueError(f"unknown pruning mode {self.pruning!r}")
        if self.tie_break != TIE_BREAK_POLICY:
            raise ValueError("the tie-break policy is fixed")
        if self.max_changes is not None and self.max_changes < 0:
            raise ValueError("max_changes must be >= 0")

    def resolve_pruning(self, default: str) -> bool:
        mode = self.pruning if self.pruning is not None else default
        return mode == PRUNE_INEQUALITY
