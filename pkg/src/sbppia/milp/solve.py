"""Thin bridge to scipy's HiGHS MILP solver, for small models only."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import csr_matrix, vstack

from .model import Model


def solve_model(model: Model, time_limit: float | None = None) -> dict[str, float] | None:
    """Optimal assignment, or None when infeasible (or no incumbent in time)."""
    names, c, a, lo, up, integ, lb, ub = model.to_arrays()
    options = {} if time_limit is None else {"time_limit": time_limit}
    res = milp(c, constraints=LinearConstraint(a, lo, up), integrality=integ,
               bounds=Bounds(lb, ub), options=options)
    if res.x is None:
        return None
    return dict(zip(names, res.x))


def enumerate_projections(
    model: Model, keep: Sequence[str], limit: int = 10_000
) -> set[tuple[int, ...]]:
    """Every feasible 0/1 pattern of the binaries ``keep``, via no-good cuts.

    Each solve finds a feasible point with a pattern not seen yet; a cut
    then excludes exactly that pattern. Stops when the model turns
    infeasible.
    """
    names, _, a, lo, up, integ, lb, ub = model.to_arrays()
    index = {n: i for i, n in enumerate(names)}
    cols = np.array([index[n] for n in keep])
    c = np.zeros(len(names))
    found: set[tuple[int, ...]] = set()
    cut_rows, cut_lo = [], []
    while True:
        if len(found) >= limit:
            raise RuntimeError(f"more than {limit} feasible patterns")
        if cut_rows:
            big = vstack([a, csr_matrix(np.array(cut_rows))])
            l = np.concatenate([lo, cut_lo])
            u = np.concatenate([up, np.full(len(cut_lo), np.inf)])
        else:
            big, l, u = a, lo, up
        res = milp(c, constraints=LinearConstraint(big, l, u), integrality=integ,
                   bounds=Bounds(lb, ub))
        if res.x is None:
            return found
        pattern = tuple(int(round(v)) for v in res.x[cols])
        found.add(pattern)
        # sum over ones of (1 - x) + sum over zeros of x >= 1
        row = np.zeros(len(names))
        ones = 0
        for col, bit in zip(cols, pattern):
            row[col] = -1.0 if bit else 1.0
            ones += bit
        cut_rows.append(row)
        cut_lo.append(1.0 - ones)
