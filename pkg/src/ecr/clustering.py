"""Turn pairwise coreference probabilities into mention clusters."""

from __future__ import annotations

from typing import Mapping, Sequence

from .errors import ConfigError, InputError

MODE_UNION = "union"
MODE_BEST_ANTECEDENT = "best_antecedent"


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1


def greedy_cluster(
    mentions: Sequence[str],
    pair_probs: Mapping[tuple[str, str], float],
    theta: float = 0.5,
    mode: str = MODE_UNION,
) -> list[set[str]]:
    """Cluster mentions by merging pairs with probability >= theta.

    ``mentions`` must be in document order and ``pair_probs`` must cover every
    unordered pair, keyed by (earlier, later).  In union mode, pairs are
    processed by descending probability (document order breaking ties) and
    merged transitively; in best-antecedent mode each mention links to at most
    its best-scoring earlier mention.  Output clusters are ordered by their
    earliest member and include singletons.
    """
    if mode not in (MODE_UNION, MODE_BEST_ANTECEDENT):
        raise ConfigError(f"unknown clustering mode {mode!r}")
    if not 0.0 <= theta <= 1.0:
        raise InputError(f"theta must lie in [0, 1], got {theta}")
    if len(set(mentions)) != len(mentions):
        raise InputError("duplicate mention ids")
    index = {m: i for i, m in enumerate(mentions)}
    scored: list[tuple[float, int, int]] = []
    for i in range(len(mentions)):
        for j in range(i + 1, len(mentions)):
            key = (mentions[i], mentions[j])
            if key not in pair_probs:
                raise InputError(f"missing probability for pair {key!r}")
            prob = float(pair_probs[key])
            if not 0.0 <= prob <= 1.0:
                raise InputError(f"probability for {key!r} out of [0, 1]: {prob}")
            scored.append((prob, i, j))
    uf = _UnionFind(len(mentions))
    if mode == MODE_UNION:
        scored.sort(key=lambda item: (-item[0], item[1], item[2]))
        for prob, i, j in scored:
            if prob >= theta:
                uf.union(i, j)
    else:
        best: dict[int, tuple[float, int]] = {}
        for prob, i, j in scored:
            if prob >= theta:
                current = best.get(j)
                if current is None or (prob, -i) > (current[0], -current[1]):
                    best[j] = (prob, i)
        for j, (_, i) in best.items():
            uf.union(i, j)
    clusters: dict[int, set[str]] = {}
    for m in mentions:
        clusters.setdefault(uf.find(index[m]), set()).add(m)
    ordered = sorted(clusters.values(), key=lambda c: min(index[m] for m in c))
    return ordered
