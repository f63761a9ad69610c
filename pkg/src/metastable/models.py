"""Built-in rate specifications.

Energy landscapes on a path (nearest-neighbour Metropolis rates), the
30-state reference landscape with nine local minima, and a seeded generator
of random reversible specs used throughout the property tests.
"""
from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import ModelError
from .scale_algebra import AsymScalar, RateSpec, as_number

FIG1_ENERGIES = (0, -1, 0, -1, 0, -1, -2, -1, 0, -1, -2, -3, -2, -1, -2,
                 -1, -2, -1, 0, 1, 0, -1, 0, -1, 0, 1, 0, -1, -2, -3)

# local minima x1..x9 of the reference landscape, by state label
FIG1_MINIMA = {"x1": 1, "x2": 3, "x3": 6, "x4": 11, "x5": 14,
               "x6": 16, "x7": 21, "x8": 23, "x9": 29}


@dataclass(frozen=True)
class Landscape:
    energies: tuple

    def __post_init__(self):
        energies = tuple(as_number(h) for h in self.energies)
        if len(energies) < 2:
            raise ModelError("a landscape needs at least two sites")
        object.__setattr__(self, "energies", energies)


def landscape_spec(landscape: Landscape | Sequence, prefactors: Mapping | None = None) -> RateSpec:
    """Nearest-neighbour chain on ``0..m`` with ``R(k, k±1) = c exp(-n [H(k±1) - H(k)]^+)``.

    ``prefactors`` optionally maps directed edges ``(k, k±1)`` to ``c``
    (default 1 everywhere); useful to break the symmetry of the landscape.
    """
    if not isinstance(landscape, Landscape):
        landscape = Landscape(tuple(landscape))
    h = landscape.energies
    prefactors = dict(prefactors or {})
    edges = {}
    for k in range(len(h) - 1):
        for x, y in ((k, k + 1), (k + 1, k)):
            up = h[y] - h[x]
            cost = up if up > 0 else 0 * up
            edges[(x, y)] = AsymScalar(prefactors.pop((x, y), 1), cost)
    if prefactors:
        raise ModelError(f"prefactors given for non-edges: {sorted(prefactors)}")
    return RateSpec(tuple(range(len(h))), edges)


def fig1_spec() -> RateSpec:
    """The 30-state reference landscape."""
    return landscape_spec(Landscape(FIG1_ENERGIES))


_WEIGHTS = (Fraction(1, 2), Fraction(1), Fraction(2), Fraction(3))


def random_reversible_spec(num_states: int, cost_range=(0, 3), seed: int = 0,
                           edge_probability: float = 0.3) -> RateSpec:
    """Random connected spec satisfying detailed balance exactly.

    Each state gets an integer potential ``U(x)`` in ``cost_range`` and a
    rational weight ``w(x)``; each undirected edge a barrier ``B >= max U``
    and a symmetric weight ``s``. Then ``R(x, y) = (s / w(x)) e^{-n (B - U(x))}``
    so ``pi(x) ~ w(x) e^{-n U(x)}`` balances every edge.
    """
    if num_states < 2:
        raise ModelError("num_states must be at least 2")
    lo, hi = int(cost_range[0]), int(cost_range[1])
    if hi < lo:
        raise ModelError("empty cost range")
    rng = random.Random(seed)
    potential = [rng.randint(lo, hi) for _ in range(num_states)]
    weight = [rng.choice(_WEIGHTS) for _ in range(num_states)]
    order = list(range(num_states))
    rng.shuffle(order)
    pairs = set()
    for k in range(1, num_states):
        a, b = order[k], order[rng.randrange(k)]
        pairs.add((min(a, b), max(a, b)))
    for a in range(num_states):
        for b in range(a + 1, num_states):
            if (a, b) not in pairs and rng.random() < edge_probability:
                pairs.add((a, b))
    edges = {}
    for a, b in sorted(pairs):
        extra = 0 if rng.random() < 0.7 else rng.randint(1, max(1, hi - lo))
        barrier = max(potential[a], potential[b]) + extra
        s = rng.choice(_WEIGHTS)
        edges[(a, b)] = AsymScalar(s / weight[a], barrier - potential[a])
        edges[(b, a)] = AsymScalar(s / weight[b], barrier - potential[b])
    return RateSpec(tuple(range(num_states)), edges)
