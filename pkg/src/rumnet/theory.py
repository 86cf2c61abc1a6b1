"""Closed-form learning-theory calculators.

All logarithms are natural. The failure probability enters the compact
sample count as ln(1/delta): a literal log(delta) is negative for
delta < 1 and cannot scale a sample count.
"""
from __future__ import annotations

from dataclasses import dataclass

import math


@dataclass(frozen=True)
class BoundInputs:
    kappa: int
    T: int
    M: float
    ell: int = 0
    delta: float = 0.05
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.kappa < 1 or self.T < 1:
            raise ValueError("kappa and T must be positive")
        if self.M < 0:
            raise ValueError("M must be >= 0")
        if self.ell < 0:
            raise ValueError("ell must be >= 0")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("c1 and c2 must be > 0")


def generalization_gap(b: BoundInputs) -> float:
    """High-probability bound on out-of-sample minus in-sample log-loss:

        c1 * kappa^{3/2} / sqrt(T) * e^{2M} * M^ell
        + 4 * c2 * sqrt(2 * ln(4/delta) / T)

    with the convention M^ell = 1 when M = 0 and ell = 0.
    """
    first = (b.c1 * b.kappa * math.sqrt(b.kappa) / math.sqrt(b.T)
             * math.exp(2.0 * b.M) * b.M ** b.ell)
    second = 4.0 * b.c2 * math.sqrt(2.0 * math.log(4.0 / b.delta) / b.T)
    return first + second


def compact_K(epsilon: float, b: BoundInputs) -> int:
    """Number of latent samples sufficient to stay within O(epsilon)
    expected KL of a reference architecture:

        ceil( 1/(2 eps^2) * ln(1/delta) * (kappa e^{2M})^2
              * ln( ceil(16 / (max(c1^2, c2^2) eps^2) * kappa^3 e^{4M} M^{2 ell}) ) )
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    inner = (16.0 / (max(b.c1 ** 2, b.c2 ** 2) * epsilon ** 2)
             * b.kappa ** 3 * math.exp(4.0 * b.M) * b.M ** (2 * b.ell))
    inner_ceil = math.ceil(inner)
    if inner_ceil < 2:
        raise ValueError(
            f"degenerate inner argument {inner_ceil} (< 2): the bound is vacuous here")
    value = (1.0 / (2.0 * epsilon ** 2) * math.log(1.0 / b.delta)
             * (b.kappa * math.exp(2.0 * b.M)) ** 2 * math.log(inner_ceil))
    return math.ceil(value)


def pmin_bound(kappa: int, M: float) -> float:
    """Lower bound e^{-2M} / kappa on any available choice probability when
    every per-sample utility lies in [-M, M]."""
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if M < 0:
        raise ValueError("M must be >= 0")
    return math.exp(-2.0 * M) / kappa
