"""Independent oracles the tests check the real implementations against.

Everything here is deliberately naive: double loops, literal threshold
tables, graph reachability by walking edges. None of it shares code with
the package under test.
"""

from __future__ import annotations


def pairwise_auc(scores, labels) -> float:
    """Brute-force concordance over every positive-negative pair, half credit for ties."""
    positives = [s for s, y in zip(scores, labels) if y == 1]
    negatives = [s for s, y in zip(scores, labels) if y == 0]
    assert positives and negatives
    twice_concordant = 0  # counted in half units to stay exact
    for p in positives:
        for n in negatives:
            if p > n:
                twice_concordant += 2
            elif p == n:
                twice_concordant += 1
    return (twice_concordant / 2.0) / (len(positives) * len(negatives))


def color_oracle(expected: float) -> str:
    if expected < 1.0:
        return "yellow"
    if expected <= 2.0:
        return "orange"
    return "red"


def reachable_from(edges: dict[str, list[str]], sources: set[str]) -> set[str]:
    """All nodes reachable from the sources by walking dependency edges."""
    seen = set(sources)
    frontier = list(sources)
    while frontier:
        node = frontier.pop()
        for succ in edges.get(node, []):
            if succ not in seen:
                seen.add(succ)
                frontier.append(succ)
    return seen


def smoothed_rate_oracle(missed: int, scheduled: int, global_rate: float, k: float) -> float:
    return (missed + k * global_rate) / (scheduled + k)
