"""G-sum statistics: per-frequency functions, membership checks, finalizers.

All logarithms are base 2. ``L2`` is the sum of squared frequencies, not
its square root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Mapping

from .errors import UndefinedEntropyError, UnsupportedStatisticError

# frequencies 0..MEMBERSHIP_CHECK_RANGE are probed when a g is registered
MEMBERSHIP_CHECK_RANGE = 4096


@dataclass(frozen=True)
class GSum:
    """A per-frequency function ``g`` whose sum a universal sketch estimates."""

    name: str
    g: Callable[[float], float] = field(compare=False)

    def __call__(self, f: float) -> float:
        return self.g(f)


def _l1(f):
    return f if f > 0 else 0


def _l2(f):
    return f * f if f > 0 else 0


def _flogf(f):
    return f * math.log2(f) if f > 1 else 0.0


def _indicator(f):
    # estimates are reals; anything that rounds to zero does not count
    return 1 if f >= 0.5 else 0


def check_membership(name: str, g: Callable[[float], float]) -> None:
    """Reject ``g`` unless g(0) = 0, g is nondecreasing and g(f) <= f^2."""
    if g(0) != 0:
        raise UnsupportedStatisticError(f"{name}: g(0) must be 0, got {g(0)}")
    prev = 0
    for f in range(1, MEMBERSHIP_CHECK_RANGE + 1):
        v = g(f)
        if v < prev:
            raise UnsupportedStatisticError(f"{name}: g is not monotone at f={f}")
        if v > f * f:
            raise UnsupportedStatisticError(f"{name}: g({f})={v} exceeds f^2")
        prev = v


_REGISTRY: dict[str, GSum] = {}


def register_gsum(name: str, g: Callable[[float], float]) -> GSum:
    check_membership(name, g)
    gs = GSum(name, g)
    _REGISTRY[name] = gs
    return gs


def get_gsum(name: str) -> GSum:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise UnsupportedStatisticError(f"unknown G-sum {name!r}") from None


L1_G = register_gsum("l1", _l1)
L2_G = register_gsum("l2", _l2)
FLOGF_G = register_gsum("flogf", _flogf)
CARDINALITY_G = register_gsum("cardinality", _indicator)


class Statistic(str, Enum):
    L1 = "l1"
    L2 = "l2"
    ENTROPY = "entropy"
    CARDINALITY = "cardinality"
    HEAVY_HITTERS = "heavy_hitters"


# G-sums each scalar statistic needs; entropy also takes cardinality for clamping
COMPONENTS: dict[Statistic, tuple[GSum, ...]] = {
    Statistic.L1: (L1_G,),
    Statistic.L2: (L2_G,),
    Statistic.CARDINALITY: (CARDINALITY_G,),
    Statistic.ENTROPY: (L1_G, FLOGF_G, CARDINALITY_G),
}


@dataclass(frozen=True)
class StatSpec:
    """A parsed statistic request, e.g. ``heavy_hitters:0.05``."""

    stat: Statistic
    alpha: float | None = None

    def __str__(self):
        if self.stat is Statistic.HEAVY_HITTERS:
            return f"heavy_hitters:{self.alpha:g}"
        return self.stat.value


def parse_statistic(text: str) -> StatSpec:
    name, _, arg = text.strip().lower().partition(":")
    try:
        stat = Statistic(name)
    except ValueError:
        raise UnsupportedStatisticError(f"unsupported statistic {text!r}") from None
    if stat is Statistic.HEAVY_HITTERS:
        try:
            alpha = float(arg)
        except ValueError:
            raise UnsupportedStatisticError("heavy_hitters needs a threshold, e.g. heavy_hitters:0.1") from None
        if not 0 < alpha < 1:
            raise UnsupportedStatisticError(f"heavy-hitter threshold must be in (0, 1), got {alpha}")
        return StatSpec(stat, alpha)
    if arg:
        raise UnsupportedStatisticError(f"statistic {name} takes no argument")
    return StatSpec(stat)


def as_statistic(stat) -> Statistic:
    if isinstance(stat, Statistic):
        return stat
    if isinstance(stat, StatSpec):
        return stat.stat
    return parse_statistic(stat).stat


def g_of(stat, f: float) -> float:
    """Per-frequency contribution of ``stat``; entropy maps to its f*log2(f) component."""
    stat = as_statistic(stat)
    if stat is Statistic.ENTROPY:
        return FLOGF_G(f)
    if stat is Statistic.HEAVY_HITTERS:
        return L1_G(f)
    return COMPONENTS[stat][0](f)


@dataclass(frozen=True)
class StatisticResult:
    stat: Statistic
    value: float
    components: Mapping[str, float]


def entropy_from(l1: float, flogf: float, cardinality: float | None = None) -> float:
    if l1 <= 0:
        raise UndefinedEntropyError("entropy is undefined for an empty stream")
    h = math.log2(l1) - flogf / l1
    hi = math.log2(cardinality) if cardinality is not None and cardinality >= 1 else math.inf
    return min(max(h, 0.0), hi)


def finalize(stat, components: Mapping[str, float]) -> StatisticResult:
    """Turn raw G-sum components into the statistic's value."""
    stat = as_statistic(stat)
    if stat is Statistic.ENTROPY:
        value = entropy_from(components["l1"], components["flogf"], components.get("cardinality"))
    elif stat in COMPONENTS:
        value = float(components[COMPONENTS[stat][0].name])
    else:
        raise UnsupportedStatisticError(f"{stat.value} has no scalar finalizer")
    return StatisticResult(stat, value, dict(components))


def exact_components(freqs) -> dict[str, float]:
    """Exact G-sum components of a frequency vector."""
    freqs = [f for f in freqs if f > 0]
    return {
        "l1": float(sum(freqs)),
        "l2": float(sum(f * f for f in freqs)),
        "flogf": math.fsum(_flogf(f) for f in freqs),
        "cardinality": float(len(freqs)),
    }
