"""Exact categorical statistics: Fisher's exact test for 2x2 tables and its
r x c generalization.

Both tests are two-sided by point-probability ordering: the p-value is the
total probability of all same-margin tables whose point probability does not
exceed the observed table's (with a 1e-7 relative slack on the comparison to
absorb representation noise). The 2x2 path runs on exact integers; the
generic path enumerates in log space while the number of candidate tables is
small enough, and falls back to seeded Monte Carlo with a reported standard
error beyond that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

# include a table iff P(table) <= P(observed) * (1 + CUTOFF_REL_TOL)
CUTOFF_REL_TOL = 1e-7
_CUT_NUM = 10**7 + 1
_CUT_DEN = 10**7

DEFAULT_ENUMERATION_LIMIT = 10**7
DEFAULT_MC_DRAWS = 100_000


class StatsError(Exception):
    pass


@dataclass(frozen=True)
class FisherResult:
    p_value: float
    method: str  # "enumeration" or "monte-carlo"
    degenerate: bool = False
    std_error: Optional[float] = None
    draws: Optional[int] = None
    tables_enumerated: Optional[int] = None

    def as_dict(self) -> dict:
        out = {"p_value": self.p_value, "method": self.method,
               "degenerate": self.degenerate}
        if self.std_error is not None:
            out["std_error"] = self.std_error
        if self.draws is not None:
            out["draws"] = self.draws
        return out


def _check_table(table) -> list[list[int]]:
    rows = [list(r) for r in table]
    if len(rows) < 2 or any(len(r) != len(rows[0]) for r in rows) or len(rows[0]) < 2:
        raise ValueError("table must be at least 2x2 and rectangular")
    for r in rows:
        for x in r:
            if int(x) != x or x < 0:
                raise ValueError("table cells must be nonnegative integers")
    return [[int(x) for x in r] for r in rows]


def fisher_exact_2x2(table) -> FisherResult:
    """Two-sided Fisher's exact test on a 2x2 table, by exact enumeration
    of the hypergeometric distribution over the fixed margins."""
    rows = _check_table(table)
    if len(rows) != 2 or len(rows[0]) != 2:
        raise ValueError("fisher_exact_2x2 requires a 2x2 table")
    (a, b), (c, d) = rows
    r1, r2 = a + b, c + d
    c1, c2 = a + c, b + d
    n = r1 + r2
    if 0 in (r1, r2, c1, c2):
        return FisherResult(p_value=1.0, method="enumeration", degenerate=True,
                            tables_enumerated=1)

    # integer point-probability numerators over the common C(n, c1) denominator
    k_min = max(0, c1 - r2)
    k_max = min(r1, c1)
    observed = math.comb(r1, a) * math.comb(r2, c1 - a)
    denom = math.comb(n, c1)
    included = 0
    total = 0
    count = 0
    for k in range(k_min, k_max + 1):
        num = math.comb(r1, k) * math.comb(r2, c1 - k)
        total += num
        count += 1
        if num * _CUT_DEN <= observed * _CUT_NUM:
            included += num
    if total != denom:
        raise StatsError("hypergeometric enumeration does not sum to 1")
    p = float(Fraction(included, denom))
    return FisherResult(p_value=min(p, 1.0), method="enumeration",
                        tables_enumerated=count)


def _drop_zero_margins(rows: list[list[int]]) -> list[list[int]]:
    rows = [r for r in rows if sum(r) > 0]
    if not rows:
        return []
    keep_cols = [j for j in range(len(rows[0])) if any(r[j] for r in rows)]
    return [[r[j] for j in keep_cols] for r in rows]


def _log_point_prob(cells: list[int], log_const: float) -> float:
    return log_const - sum(math.lgamma(x + 1) for x in cells)


def _enumeration_bound(row_sums: list[int], col_sums: list[int]) -> float:
    bound = 1.0
    for rs in row_sums[:-1]:
        for cs in col_sums[:-1]:
            bound *= min(rs, cs) + 1
            if bound > 1e18:
                return bound
    return bound


def fisher_exact_rxc(table, *,
                     enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT,
                     mc_draws: int = DEFAULT_MC_DRAWS,
                     seed: int = 0) -> FisherResult:
    """Generalized (Freeman-Halton style) exact test on an r x c table.

    All-zero rows and columns are dropped first; if fewer than two rows or
    columns remain, the result is the degenerate p=1.0. Enumerates every
    same-margin table while the candidate-count bound stays within
    enumeration_limit, otherwise estimates by seeded Monte Carlo.
    """
    rows = _drop_zero_margins(_check_table(table))
    if len(rows) < 2 or len(rows[0]) < 2:
        return FisherResult(p_value=1.0, method="enumeration", degenerate=True,
                            tables_enumerated=1)

    row_sums = [sum(r) for r in rows]
    col_sums = [sum(r[j] for r in rows) for j in range(len(rows[0]))]
    n = sum(row_sums)
    log_const = (sum(math.lgamma(x + 1) for x in row_sums)
                 + sum(math.lgamma(x + 1) for x in col_sums)
                 - math.lgamma(n + 1))
    observed_cells = [x for r in rows for x in r]
    log_obs = _log_point_prob(observed_cells, log_const)
    log_cut = log_obs + math.log1p(CUTOFF_REL_TOL)

    if _enumeration_bound(row_sums, col_sums) <= enumeration_limit:
        return _rxc_enumerate(row_sums, col_sums, log_const, log_cut)
    return _rxc_monte_carlo(row_sums, col_sums, log_const, log_cut,
                            draws=max(mc_draws, DEFAULT_MC_DRAWS), seed=seed)


def _rxc_enumerate(row_sums: list[int], col_sums: list[int],
                   log_const: float, log_cut: float) -> FisherResult:
    r = len(row_sums)
    c = len(col_sums)
    p_included = 0.0
    p_total = 0.0
    tables = 0

    lgam = [math.lgamma(k + 1) for k in range(max(row_sums + col_sums) + 1)]

    def fill_row(i: int, col_rem: list[int], log_acc: float) -> None:
        nonlocal p_included, p_total, tables
        if i == r - 1:
            # last row forced by the column budgets
            log_p = log_const - (log_acc + sum(lgam[x] for x in col_rem))
            p_total += math.exp(log_p)
            tables += 1
            if log_p <= log_cut:
                p_included += math.exp(log_p)
            return

        def fill_cell(j: int, row_rem: int, col_rem_inner: list[int],
                      row_log: float) -> None:
            if j == c - 1:
                if row_rem <= col_rem_inner[j]:
                    nxt = list(col_rem_inner)
                    nxt[j] -= row_rem
                    fill_row(i + 1, nxt, log_acc + row_log + lgam[row_rem])
                return
            tail_capacity = sum(col_rem_inner[j + 1:])
            lo = max(0, row_rem - tail_capacity)
            hi = min(row_rem, col_rem_inner[j])
            for x in range(lo, hi + 1):
                nxt = list(col_rem_inner)
                nxt[j] -= x
                fill_cell(j + 1, row_rem - x, nxt, row_log + lgam[x])

        fill_cell(0, row_sums[i], col_rem, 0.0)

    fill_row(0, list(col_sums), 0.0)

    if abs(p_total - 1.0) > 1e-9:
        raise StatsError(
            f"enumeration probabilities sum to {p_total!r}, expected 1.0")
    return FisherResult(p_value=min(p_included, 1.0), method="enumeration",
                        tables_enumerated=tables)


def _rxc_monte_carlo(row_sums: list[int], col_sums: list[int],
                     log_const: float, log_cut: float,
                     draws: int, seed: int) -> FisherResult:
    rng = np.random.default_rng(seed)
    r = len(row_sums)
    c = len(col_sums)
    n = sum(row_sums)
    row_labels = np.repeat(np.arange(r), row_sums)
    col_labels = np.repeat(np.arange(c), col_sums)
    lgam = np.array([math.lgamma(k + 1) for k in range(n + 1)])

    hits = 0
    flat_index = np.empty(n, dtype=np.int64)
    for _ in range(draws):
        permuted = rng.permutation(col_labels)
        np.multiply(row_labels, c, out=flat_index)
        flat_index += permuted
        counts = np.bincount(flat_index, minlength=r * c)
        log_p = log_const - float(lgam[counts].sum())
        if log_p <= log_cut:
            hits += 1
    # add-one correction keeps the estimate inside (0, 1]
    p_hat = (hits + 1) / (draws + 1)
    se = math.sqrt(p_hat * (1.0 - p_hat) / draws)
    return FisherResult(p_value=p_hat, method="monte-carlo",
                        std_error=se, draws=draws)
