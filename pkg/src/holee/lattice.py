"""Recombining lattice of cumulative factor states.

A node at step ``t`` is keyed by its outcome counts ``(c_0, ..., c_n)`` with
``sum(c) == t``; the cumulative state is ``w = sum_j c_j * dw(j)``.  Keying by
counts makes recombination exact: any reordering of an outcome sequence lands
on the same key, so no floating point comparison is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from scipy.special import gammaln

from .errors import ValidationError
from .factors import FactorDistribution

DEFAULT_MAX_NODES = 5_000_000


@dataclass(frozen=True, eq=False)
class LatticeNode:
    step: int
    counts: tuple[int, ...]
    w: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, LatticeNode):
            return NotImplemented
        return self.step == other.step and self.counts == other.counts

    def __hash__(self):
        return hash((self.step, self.counts))


@dataclass(frozen=True)
class Level:
    """Array view of all nodes at one step.

    ``children[i, s]`` is the index in the next level reached from node ``i``
    by outcome ``s`` (``-1`` on the last level).
    """

    step: int
    counts: np.ndarray
    w: np.ndarray
    children: np.ndarray
    probs: np.ndarray

    def __len__(self):
        return len(self.counts)


def node_count(step: int, n: int) -> int:
    return comb(step + n, n)


def _level_counts(step: int, n: int) -> np.ndarray:
    out = np.zeros((node_count(step, n), n + 1), dtype=np.int64)
    for i, combo in enumerate(combinations_with_replacement(range(n + 1), step)):
        np.add.at(out[i], list(combo), 1)
    return out


def _multinomial(counts: np.ndarray, probs: np.ndarray) -> np.ndarray:
    t = counts.sum(axis=-1)
    return np.exp(gammaln(t + 1) - gammaln(counts + 1).sum(axis=-1) + counts @ np.log(probs))


def level_states(f: FactorDistribution, step: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Counts, states and probabilities of one level without building the tree."""
    c = _level_counts(step, f.n)
    return c, c @ f.outcomes, _multinomial(c, f.probs)


class Lattice:
    """Eagerly materialised recombining tree up to ``horizon`` steps."""

    def __init__(self, factor: FactorDistribution, horizon: int, max_nodes: int = DEFAULT_MAX_NODES):
        if horizon < 0:
            raise ValidationError(f"horizon must be >= 0, got {horizon}")
        n = factor.n
        total = comb(horizon + n + 1, n + 1)  # sum of C(t+n, n) for t <= horizon
        if total > max_nodes:
            raise ValidationError(
                f"lattice with n={n}, horizon={horizon} needs {total} nodes, over budget {max_nodes}"
            )
        self.factor = factor
        self.horizon = horizon
        self._index: list[dict[tuple[int, ...], int]] = []
        counts = [_level_counts(t, n) for t in range(horizon + 1)]
        for c in counts:
            self._index.append({tuple(int(v) for v in row): i for i, row in enumerate(c)})

        levels = []
        for t, c in enumerate(counts):
            children = np.full((len(c), n + 1), -1, dtype=np.int64)
            if t < horizon:
                nxt = self._index[t + 1]
                for i, row in enumerate(c):
                    key = list(int(v) for v in row)
                    for s in range(n + 1):
                        key[s] += 1
                        children[i, s] = nxt[tuple(key)]
                        key[s] -= 1
            probs = _multinomial(c, factor.probs)
            w = c @ factor.outcomes
            for arr in (c, children, probs, w):
                arr.setflags(write=False)
            levels.append(Level(t, c, w, children, probs))
        self.levels: list[Level] = levels

    @property
    def n(self) -> int:
        return self.factor.n

    @property
    def dt(self) -> float:
        return self.factor.dt

    def level(self, step: int) -> list[LatticeNode]:
        lv = self._level(step)
        return [LatticeNode(step, tuple(int(v) for v in c), w) for c, w in zip(lv.counts, lv.w)]

    def _level(self, step: int) -> Level:
        if not 0 <= step <= self.horizon:
            raise ValidationError(f"step {step} outside lattice range 0..{self.horizon}")
        return self.levels[step]

    def index_of(self, node: LatticeNode) -> int:
        if not 0 <= node.step <= self.horizon:
            raise ValidationError(f"node step {node.step} outside lattice range 0..{self.horizon}")
        try:
            return self._index[node.step][tuple(node.counts)]
        except KeyError:
            raise ValidationError(f"node {node.counts} is not on step {node.step} of this lattice") from None

    def node(self, step: int, counts) -> LatticeNode:
        counts = tuple(int(c) for c in counts)
        if len(counts) != self.n + 1 or sum(counts) != step or min(counts) < 0:
            raise ValidationError(f"counts {counts} are not a valid node key at step {step}")
        i = self.index_of(LatticeNode(step, counts, np.zeros(self.n)))
        return LatticeNode(step, counts, self.levels[step].w[i])

    @property
    def root(self) -> LatticeNode:
        return self.node(0, (0,) * (self.n + 1))

    def children(self, node: LatticeNode) -> list[tuple[int, LatticeNode]]:
        self.index_of(node)
        if node.step >= self.horizon:
            raise ValidationError(f"node at step {node.step} has no children within horizon {self.horizon}")
        out = []
        for s in range(self.n + 1):
            counts = list(node.counts)
            counts[s] += 1
            out.append((s, self.node(node.step + 1, counts)))
        return out

    def node_probability(self, node: LatticeNode) -> float:
        i = self.index_of(node)
        return float(self.levels[node.step].probs[i])

    def walk(self, outcomes) -> LatticeNode:
        """Node reached by following a sequence of outcome labels from the root."""
        counts = [0] * (self.n + 1)
        for s in outcomes:
            counts[int(s)] += 1
        return self.node(len(outcomes), counts)

    def nodes(self):
        for t in range(self.horizon + 1):
            yield from self.level(t)


def build(f: FactorDistribution, horizon: int, max_nodes: int = DEFAULT_MAX_NODES) -> Lattice:
    return Lattice(f, horizon, max_nodes=max_nodes)


def node_probability(lat: Lattice, node: LatticeNode) -> float:
    return lat.node_probability(node)


def children(lat: Lattice, node: LatticeNode) -> list[tuple[int, LatticeNode]]:
    return lat.children(node)


def level(lat: Lattice, step: int) -> list[LatticeNode]:
    return lat.level(step)


def sample_path(f: FactorDistribution, steps: int, rng: np.random.Generator) -> np.ndarray:
    """Outcome labels of a real-world sample path."""
    return rng.choice(len(f.probs), size=steps, p=f.probs)
