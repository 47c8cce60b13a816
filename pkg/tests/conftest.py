import itertools
import os

# every gds_eev call in the suite (including bench worker processes) re-checks
# descent and local optimality with independently recomputed scores
os.environ["EEVDAG_CERTIFY"] = "1"

import numpy as np
import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def nilpotent(p, edges):
    """Independent acyclicity oracle: A^p == 0 for the adjacency matrix."""
    A = np.zeros((p, p), dtype=np.int64)
    for u, v in edges:
        A[u, v] = 1
    return not np.linalg.matrix_power(A, p).any()


def brute_force_dags(p):
    """All acyclic edge subsets of the p(p-1) ordered pairs."""
    pairs = list(itertools.permutations(range(p), 2))
    out = []
    for mask in range(1 << len(pairs)):
        edges = [e for i, e in enumerate(pairs) if mask >> i & 1]
        if nilpotent(p, edges):
            out.append(frozenset(edges))
    return out


def skeleton_and_colliders(p, edges):
    skel = frozenset(frozenset(e) for e in edges)
    parents = {j: {u for u, v in edges if v == j} for j in range(p)}
    coll = set()
    for c in range(p):
        for a, b in itertools.combinations(sorted(parents[c]), 2):
            if frozenset((a, b)) not in skel:
                coll.add((a, c, b))
    return skel, frozenset(coll)


def equivalence_classes(p):
    classes = {}
    for edges in brute_force_dags(p):
        classes.setdefault(skeleton_and_colliders(p, edges), []).append(edges)
    return list(classes.values())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
