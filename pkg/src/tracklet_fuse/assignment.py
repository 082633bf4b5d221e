"""
Rectangular assignment with infeasible cells and a new-track cost.

Rows are existing tracklets, columns are new observations.  A matched cell
costs its entry; an unmatched column opens a new tracklet at
``new_track_cost``; an unmatched row costs nothing (the tracklet coasts).
Infeasible cells are ``math.inf``.

When ``new_track_cost`` is None, matching as many columns as possible comes
first and the matched cost is minimized second.

Among equal optima the lexicographically smallest row->column mapping wins,
reading "unmatched" as larger than any column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

INFEASIBLE = math.inf
_REL_TOL = 1e-12


@dataclass(frozen=True)
class Assignment:
    pairs: dict = field(default_factory=dict)   # row -> column
    cost: float = 0.0                           # sum of matched cells
    unmatched_cols: int = 0

    def objective(self, new_track_cost: Optional[float]):
        if new_track_cost is None:
            return (self.unmatched_cols, self.cost)
        return math.fsum([self.cost, new_track_cost * self.unmatched_cols])


def _key(c: np.ndarray, pairs: dict, ntc: Optional[float]):
    matched = math.fsum(c[r, k] for r, k in pairs.items())
    unmatched = c.shape[1] - len(pairs)
    if ntc is None:
        return (unmatched, matched)
    return math.fsum([matched, ntc * unmatched])


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return a[0] == b[0] and _same(a[1], b[1])
    return abs(a - b) <= _REL_TOL * max(1.0, abs(a), abs(b))


def _lsa(c: np.ndarray, ntc: float) -> dict:
    """Optimal mapping via an augmented square problem."""
    n, m = c.shape
    if n == 0 or m == 0:
        return {}
    aug = np.full((n + m, m + n), np.inf)
    aug[:n, :m] = c
    aug[np.arange(n), m + np.arange(n)] = 0.0
    aug[n + np.arange(m), np.arange(m)] = ntc
    aug[n:, m:] = 0.0
    rows, cols = linear_sum_assignment(aug)
    return {int(r): int(k) for r, k in zip(rows, cols) if r < n and k < m}


def _components(c: np.ndarray):
    """Connected components of the feasibility graph as (rows, cols) lists."""
    n, m = c.shape
    parent = list(range(n + m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    rr, kk = np.nonzero(np.isfinite(c))
    feas = list(zip(rr.tolist(), kk.tolist()))
    for r, k in feas:
        ra, rb = find(r), find(n + k)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    groups: dict[int, tuple[set, set]] = {}
    for r, k in feas:
        g = groups.setdefault(find(r), (set(), set()))
        g[0].add(r)
        g[1].add(k)
    return [(sorted(rs), sorted(ks)) for rs, ks in groups.values()]


_SMALL = 3   # components up to 3x3 are enumerated outright


def _enumerate_small(c: np.ndarray, ntc: Optional[float]) -> dict:
    """Depth-first walk over partial matchings in lexicographic order; the
    first optimum met is the lexicographically smallest one."""
    n, m = c.shape
    cells = c.tolist()
    best_key = None
    best: dict = {}
    chosen: list = []

    def walk(r, used, total):
        nonlocal best_key, best
        if r == n:
            unmatched = m - sum(1 for k in chosen if k is not None)
            key = (unmatched, total) if ntc is None else total + ntc * unmatched
            if best_key is None or (key < best_key and not _same(key, best_key)):
                best_key = key
                best = {i: k for i, k in enumerate(chosen) if k is not None}
            return
        for k in range(m):
            if not used >> k & 1 and cells[r][k] != INFEASIBLE:
                chosen.append(k)
                walk(r + 1, used | 1 << k, total + cells[r][k])
                chosen.pop()
        chosen.append(None)
        walk(r + 1, used, total)
        chosen.pop()

    walk(0, 0, 0.0)
    return best


def _solve_component(c: np.ndarray, ntc: Optional[float]) -> dict:
    n, m = c.shape
    if n <= _SMALL and m <= _SMALL and (n > 1 and m > 1):
        return _enumerate_small(c, ntc)
    big = ntc if ntc is not None else 1.0 + float(np.sum(c[np.isfinite(c)]))
    if n == 1 or m == 1:
        # one row picks its cheapest column, or one column its cheapest row
        flat = c[0] if n == 1 else c[:, 0]
        i = int(np.argmin(flat))
        if ntc is not None and not flat[i] <= ntc:
            return {}
        return {0: i} if n == 1 else {i: 0}
    best = _key(c, _lsa(c, big), ntc)
    fixed: dict = {}
    used: set = set()
    for r in range(n):
        options = [k for k in range(m) if k not in used and math.isfinite(c[r, k])] + [None]
        for opt in options:
            trial = dict(fixed)
            if opt is not None:
                trial[r] = opt
            free_rows = [i for i in range(r + 1, n)]
            taken = set(trial.values())
            free_cols = [k for k in range(m) if k not in taken]
            sub = c[np.ix_(free_rows, free_cols)]
            rest = _lsa(sub, big)
            full = dict(trial)
            full.update({free_rows[i]: free_cols[k] for i, k in rest.items()})
            if _same(_key(c, full, ntc), best):
                fixed = trial
                if opt is not None:
                    used.add(opt)
                break
    return fixed


def solve_assignment(cost, new_track_cost: Optional[float] = None) -> Assignment:
    """Optimal partial assignment of rows to columns avoiding infeasible cells."""
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n, m = c.shape
    pairs: dict = {}
    for rows, cols in _components(c):
        if len(rows) == 1 and len(cols) == 1:
            r, k = rows[0], cols[0]
            if new_track_cost is None or c[r, k] <= new_track_cost:
                pairs[r] = k
            continue
        sub = c[np.ix_(rows, cols)]
        for r, k in _solve_component(sub, new_track_cost).items():
            pairs[rows[r]] = cols[k]
    pairs = dict(sorted(pairs.items()))
    matched = math.fsum(c[r, k] for r, k in pairs.items())
    return Assignment(pairs, matched, m - len(pairs))
