"""Mann-Whitney U with midranks; exact or normal-approximated p-value."""
from __future__ import annotations

import itertools
import math
from collections import Counter
from typing import Sequence

EXACT_MAX_SIZE = 8
_EPS = 1e-9


def midranks(values: Sequence[float]) -> list[float]:
    """1-based ranks; tied values share the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def u_statistic(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """(U_a, U_b); U_a + U_b = len(a) * len(b)."""
    n, m = len(a), len(b)
    ranks = midranks(list(a) + list(b))
    r_a = sum(ranks[:n])
    u_a = r_a - n * (n + 1) / 2
    return u_a, n * m - u_a


def _exact_p(ranks: list[float], n: int, u_obs: float) -> float:
    total = len(ranks)
    m = total - n
    mean = n * m / 2
    dev = abs(u_obs - mean)
    hits = count = 0
    offset = n * (n + 1) / 2
    for combo in itertools.combinations(range(total), n):
        u = sum(ranks[i] for i in combo) - offset
        count += 1
        if abs(u - mean) >= dev - _EPS:
            hits += 1
    return hits / count


def _normal_p(ranks: list[float], n: int, m: int, u_obs: float) -> float:
    total = n + m
    ties = sum(t ** 3 - t for t in Counter(ranks).values())
    var = n * m / 12 * ((total + 1) - ties / (total * (total - 1)))
    if var <= 0:
        return 1.0
    z = (abs(u_obs - n * m / 2) - 0.5) / math.sqrt(var)
    if z <= 0:
        return 1.0
    return min(1.0, math.erfc(z / math.sqrt(2)))


def mann_whitney_u(a: Sequence[float], b: Sequence[float], exact: bool | None = None) -> tuple[float, float]:
    """Two-sided test; returns (U_a, p).

    The exact null distribution is enumerated over the observed midranks
    when both samples have at most eight values (or ``exact=True``).
    """
    if not a or not b:
        raise ValueError("both samples must be non-empty")
    n, m = len(a), len(b)
    pooled = list(a) + list(b)
    u_a, _ = u_statistic(a, b)
    if len(set(pooled)) == 1:
        return u_a, 1.0
    ranks = midranks(pooled)
    if exact is None:
        exact = n <= EXACT_MAX_SIZE and m <= EXACT_MAX_SIZE
    if exact:
        return u_a, _exact_p(ranks, n, u_a)
    return u_a, _normal_p(ranks, n, m, u_a)
