import itertools
import random
from fractions import Fraction

import pytest
from scipy import stats as sps

from iiotscan.assessor.stats import midranks, mann_whitney_u, u_statistic


def pairwise_u(a, b) -> Fraction:
    """U of sample a counted pair by pair; ties count one half."""
    return sum((Fraction(1) if x > y else Fraction(1, 2) if x == y else Fraction(0)) for x in a for y in b)


def enumerated(a, b):
    """Exact two-sided p by relabelling the pooled values every possible way."""
    pooled = list(a) + list(b)
    n, m = len(a), len(b)
    center = Fraction(n * m, 2)
    u_obs = pairwise_u(a, b)
    if len(set(pooled)) == 1:
        return u_obs, Fraction(1)
    dev = abs(u_obs - center)
    hits = total = 0
    for idx in itertools.combinations(range(n + m), n):
        chosen = set(idx)
        xa = [pooled[i] for i in idx]
        xb = [pooled[i] for i in range(n + m) if i not in chosen]
        total += 1
        hits += abs(pairwise_u(xa, xb) - center) >= dev
    return u_obs, Fraction(hits, total)


def fixtures():
    rng = random.Random(7)
    for n in range(1, 7):
        for m in range(1, 7):
            for _ in range(4):
                spread = rng.choice([3, 6, 50])
                yield [rng.randint(0, spread) for _ in range(n)], [rng.randint(0, spread) for _ in range(m)]


@pytest.mark.parametrize("a,b", list(fixtures()))
def test_exact_enumeration_agrees(a, b):
    u, p = mann_whitney_u(a, b)
    u_ref, p_ref = enumerated(a, b)
    assert u == float(u_ref)
    assert p == pytest.approx(float(p_ref), abs=1e-12)


def test_u_identity_on_1000_fixtures():
    rng = random.Random(11)
    for _ in range(1000):
        a = [rng.choice([rng.random(), rng.randint(0, 5)]) for _ in range(rng.randint(1, 40))]
        b = [rng.choice([rng.random(), rng.randint(0, 5)]) for _ in range(rng.randint(1, 40))]
        ua, ub = u_statistic(a, b)
        assert ua + ub == len(a) * len(b)
        assert ua == float(pairwise_u(a, b))


def test_agrees_with_scipy_without_ties():
    rng = random.Random(3)
    for _ in range(50):
        pool = rng.sample(range(1000), 14)
        a, b = pool[:rng.randint(2, 7)], pool[7:]
        u, p = mann_whitney_u(a, b)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="exact")
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-9)


def test_normal_approximation_matches_scipy():
    rng = random.Random(5)
    for _ in range(30):
        a = [rng.randint(0, 30) for _ in range(rng.randint(9, 60))]
        b = [rng.randint(5, 40) for _ in range(rng.randint(9, 60))]
        u, p = mann_whitney_u(a, b)
        ref = sps.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
        assert u == ref.statistic
        assert p == pytest.approx(ref.pvalue, rel=1e-9, abs=1e-300)


def test_midranks():
    assert midranks([10, 20, 20, 30]) == [1, 2.5, 2.5, 4]


def test_degenerate_inputs():
    assert mann_whitney_u([1, 1], [1, 1, 1]) == (3.0, 1.0)
    with pytest.raises(ValueError):
        mann_whitney_u([], [1])
