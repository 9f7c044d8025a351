"""Sampling distributions with exact raw moments."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


class UnsupportedDistribution(ValueError):
    pass


class Distribution:
    name = "?"
    discrete = True

    def moment(self, m: int) -> Fraction:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> float:
        raise NotImplementedError

    def support_bounds(self) -> tuple[Fraction, Fraction]:
        raise NotImplementedError

    def outcomes(self) -> list[tuple[Fraction, Fraction]]:
        """``(value, probability)`` pairs of a finite-support distribution."""
        raise UnsupportedDistribution(f"continuous distribution {self} not enumerable")


@dataclass(frozen=True)
class Bernoulli(Distribution):
    p: Fraction
    name = "bernoulli"

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ValueError(f"bernoulli probability {self.p} outside [0, 1]")

    def moment(self, m: int) -> Fraction:
        return Fraction(1) if m == 0 else Fraction(self.p)

    def sample(self, rng):
        return 1.0 if rng.random() < self.p else 0.0

    def support_bounds(self):
        return Fraction(0), Fraction(1)

    def outcomes(self):
        out = []
        if self.p < 1:
            out.append((Fraction(0), 1 - Fraction(self.p)))
        if self.p > 0:
            out.append((Fraction(1), Fraction(self.p)))
        return out

    def __str__(self):
        return f"bernoulli({self.p})"


@dataclass(frozen=True)
class Uniform(Distribution):
    a: Fraction
    b: Fraction
    name = "uniform"
    discrete = False

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"uniform({self.a}, {self.b}) requires a < b")

    def moment(self, m: int) -> Fraction:
        a, b = Fraction(self.a), Fraction(self.b)
        return (b ** (m + 1) - a ** (m + 1)) / ((m + 1) * (b - a))

    def sample(self, rng):
        return float(self.a) + (float(self.b) - float(self.a)) * rng.random()

    def support_bounds(self):
        return Fraction(self.a), Fraction(self.b)

    def __str__(self):
        return f"uniform({self.a}, {self.b})"


@dataclass(frozen=True)
class Discrete(Distribution):
    values: tuple
    probs: tuple
    name = "discrete"

    def __post_init__(self):
        if len(self.values) != len(self.probs) or not self.values:
            raise ValueError("discrete distribution needs matching non-empty values/probs")
        if any(p < 0 or p > 1 for p in self.probs):
            raise ValueError("discrete probabilities must lie in [0, 1]")
        if sum(self.probs) != 1:
            raise ValueError(f"discrete probabilities sum to {sum(self.probs)}, not 1")

    def moment(self, m: int) -> Fraction:
        return sum((Fraction(p) * Fraction(v) ** m for v, p in zip(self.values, self.probs)), Fraction(0))

    def sample(self, rng):
        u = rng.random()
        acc = 0.0
        for v, p in zip(self.values, self.probs):
            acc += float(p)
            if u < acc:
                return float(v)
        return float(self.values[-1])

    def support_bounds(self):
        return min(self.values), max(self.values)

    def outcomes(self):
        merged: dict = {}
        for v, p in zip(self.values, self.probs):
            if p:
                merged[Fraction(v)] = merged.get(Fraction(v), Fraction(0)) + Fraction(p)
        return sorted(merged.items())

    def scaled(self, a) -> "Discrete":
        return Discrete(tuple(Fraction(a) * v for v in self.values), self.probs)

    def __str__(self):
        body = ", ".join(f"{v}: {p}" for v, p in zip(self.values, self.probs))
        return f"discrete({body})"


def make_distribution(name: str, args: Sequence) -> Distribution:
    key = name.lower()
    if key in ("bernoulli", "flip"):
        if len(args) != 1:
            raise ValueError(f"{name} takes one parameter")
        return Bernoulli(Fraction(args[0]))
    if key == "uniform":
        if len(args) != 2:
            raise ValueError("uniform takes two parameters")
        return Uniform(Fraction(args[0]), Fraction(args[1]))
    if key == "discrete":
        values = tuple(Fraction(v) for v, _ in args)
        probs = tuple(Fraction(p) for _, p in args)
        return Discrete(values, probs)
    raise UnsupportedDistribution(f"unknown distribution {name!r}")


def moment(dist: Distribution, m: int) -> Fraction:
    """Exact ``m``-th raw moment ``E[r^m]``."""
    if m < 0:
        raise ValueError("moment order must be >= 0")
    if not isinstance(dist, Distribution):
        raise UnsupportedDistribution(f"unsupported distribution {dist!r}")
    return dist.moment(m)
