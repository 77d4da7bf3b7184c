"""Brute-force reference computations, independent of the package code."""

import itertools
import math
from fractions import Fraction

import numpy as np


def compositions(n, s):
    """All length-``s`` non-negative integer vectors summing to ``n``."""
    if s == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in compositions(n - first, s - 1):
            yield (first,) + rest


def multinomial_pmf(n, p):
    """Direct factorial formula, no logs."""
    coef = math.factorial(sum(n))
    for nk in n:
        coef //= math.factorial(nk)
    prob = float(coef)
    for nk, pk in zip(n, p):
        if nk:
            prob *= pk ** nk
    return prob


def enumerate_moments(n0, p):
    """Mean and covariance of the count vector by summing over the pmf."""
    s = len(p)
    mean = np.zeros(s)
    second = np.zeros((s, s))
    total = 0.0
    for n in compositions(n0, s):
        w = multinomial_pmf(n, p)
        v = np.array(n, dtype=float)
        total += w
        mean += w * v
        second += w * np.outer(v, v)
    return total, mean, second - np.outer(mean, mean)


def individual_outcome_moments(n0, p):
    """Moments from every joint assignment of ``n0`` individuals to states."""
    s = len(p)
    mean = np.zeros(s)
    second = np.zeros((s, s))
    for assignment in itertools.product(range(s), repeat=n0):
        w = 1.0
        for k in assignment:
            w *= p[k]
        v = np.bincount(assignment, minlength=s).astype(float)
        mean += w * v
        second += w * np.outer(v, v)
    return mean, second - np.outer(mean, mean)


def four_state_fractions():
    """Four-state example matrix in exact rational arithmetic, diagonals completed."""
    P = [
        [None, Fraction(1, 10), Fraction(5, 100), Fraction(14, 100)],
        [Fraction(0), None, Fraction(7, 100), Fraction(17, 100)],
        [Fraction(0), Fraction(0), None, Fraction(11, 100)],
        [Fraction(0), Fraction(0), Fraction(0), None],
    ]
    for i, row in enumerate(P):
        row[i] = 1 - sum(x for j, x in enumerate(row) if j != i)
    return P


def exact_propagate(p0, P, z):
    p = [Fraction(x) for x in p0]
    for _ in range(z):
        p = [sum(p[k] * P[k][l] for k in range(len(p))) for l in range(len(p))]
    return p
