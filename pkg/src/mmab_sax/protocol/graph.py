"""Confidence-interval overlap graph over the active arms."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


@dataclass
class ConnectivityGraph:
    nodes: tuple[int, ...]
    edges: set[tuple[int, int]] = field(default_factory=set)
    labels: dict[int, int] = field(default_factory=dict)

    @classmethod
    def build(cls, nodes: Sequence[int], mu_hat, radius) -> "ConnectivityGraph":
        """Edge (i, j) iff |mu_i - mu_j| <= B_i + B_j; arrays are indexed by arm."""
        nodes = tuple(sorted(nodes))
        g = cls(nodes)
        for x, i in enumerate(nodes):
            for j in nodes[x + 1:]:
                if abs(mu_hat[i] - mu_hat[j]) <= radius[i] + radius[j]:
                    g.edges.add((i, j))
        g._label()
        return g

    def _label(self) -> None:
        parent = {v: v for v in self.nodes}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for i, j in self.edges:
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[max(ri, rj)] = min(ri, rj)
        self.labels = {v: find(v) for v in self.nodes}

    @property
    def n_components(self) -> int:
        return len(set(self.labels.values()))

    def components(self) -> list[frozenset[int]]:
        out: dict[int, set[int]] = {}
        for v, c in self.labels.items():
            out.setdefault(c, set()).add(v)
        return [frozenset(s) for _, s in sorted(out.items())]

    def partition(self, mu_hat) -> tuple[frozenset[int], frozenset[int]]:
        """(V_top, V_bottom): the component holding the best estimate, and the rest."""
        best = max(self.nodes, key=lambda v: (mu_hat[v], -v))
        top = frozenset(v for v in self.nodes if self.labels[v] == self.labels[best])
        return top, frozenset(self.nodes) - top


def top_component(nodes, mu_hat, radius):
    g = ConnectivityGraph.build(nodes, np.asarray(mu_hat), np.asarray(radius))
    return g.partition(np.asarray(mu_hat)) if g.n_components > 1 else None
