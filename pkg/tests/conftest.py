from collections import deque

import numpy as np
import pytest

from canyonperc.geometry import BOUNDARY, Tessellation, Window

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def star_tessellation(n_arms=5, arm_length=1.0, side=4.0, leaves_are_vertices=True):
    """Centre vertex with ``n_arms`` straight edges; the centre is vertex 0."""
    centre = np.array([side / 2, side / 2])
    angles = 2 * np.pi * np.arange(n_arms) / n_arms + 0.1
    tips = centre + arm_length * np.column_stack([np.cos(angles), np.sin(angles)])
    if leaves_are_vertices:
        vertices = np.vstack([centre, tips])
        ends = [(0, k + 1) for k in range(n_arms)]
    else:
        vertices = centre[None, :]
        ends = [(0, BOUNDARY) for _ in range(n_arms)]
    coords = [(centre, tip) for tip in tips]
    return Tessellation.from_edges(Window(side), vertices, ends, coords)


def bfs_labels(n, pairs):
    """Component label (smallest member) of each node by breadth-first search."""
    adj = [[] for _ in range(n)]
    for a, b in pairs:
        adj[a].append(b)
        adj[b].append(a)
    label = [-1] * n
    for s in range(n):
        if label[s] >= 0:
            continue
        label[s] = s
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = s
                    queue.append(v)
    return np.array(label)


def canonical(labels):
    """Relabel so that two equal partitions give identical arrays."""
    labels = np.asarray(labels)
    first = {}
    return np.array([first.setdefault(x, len(first)) for x in labels.tolist()])


def agent_streets(tess, agents):
    """Set of edge ids each agent lies on (one for users, all incident for relays)."""
    out = [{int(e)} for e in agents.users.edge]
    out += [set(tess.incident_edges(v).tolist()) for v in agents.relay_vertex]
    return out


def pairwise_canyon_pairs(tess, agents, r):
    """O(n^2) reference: share a street and Euclidean distance <= r."""
    xy = agents.xy
    streets = agent_streets(tess, agents)
    pairs = []
    for i in range(len(xy)):
        for j in range(i + 1, len(xy)):
            if streets[i] & streets[j] and np.hypot(*(xy[i] - xy[j])) <= r:
                pairs.append((i, j))
    return pairs


def pairwise_disk_pairs(xy, r):
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1)
    i, j = np.nonzero(np.triu(d2 <= r * r, k=1))
    return list(zip(i.tolist(), j.tolist()))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
