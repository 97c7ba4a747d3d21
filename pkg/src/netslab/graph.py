"""Gene networks, interaction line graphs and ridge-stabilized Laplacians.

Each network contributes a main-effect graph ``A1`` over its ``p`` genes and
an interaction graph ``A2`` over its ``p(p-1)/2`` gene pairs. Two pairs that
share a gene are linked when the closed neighborhoods of their non-shared
genes overlap (positive Jaccard similarity). The penalty graph of a network
is the block-diagonal union of both, summarized by its normalized Laplacian.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class GeneNetwork:
    """A pathway: ordered gene list plus undirected edges (as index pairs)."""

    id: str
    nodes: tuple
    edges: tuple = ()

    def __post_init__(self):
        nodes = tuple(str(n) for n in self.nodes)
        if len(nodes) < 1:
            raise InputError(f"network {self.id!r} has no nodes")
        if len(set(nodes)) != len(nodes):
            raise InputError(f"network {self.id!r} lists a node twice")
        p = len(nodes)
        canon = set()
        for e in self.edges:
            j, l = (int(e[0]), int(e[1]))
            for v in (j, l):
                if not 0 <= v < p:
                    raise InputError(f"network {self.id!r}: edge references unknown node index {v}")
            if j == l:
                raise InputError(f"network {self.id!r}: self-loop on node {nodes[j]!r}")
            canon.add((min(j, l), max(j, l)))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @classmethod
    def from_ids(cls, id, nodes, edges=()):
        """Build from edges given as gene-id pairs."""
        nodes = [str(n) for n in nodes]
        index = {g: i for i, g in enumerate(nodes)}
        pairs = []
        for a, b in edges:
            for g in (str(a), str(b)):
                if g not in index:
                    raise InputError(f"network {id!r}: edge references unknown node {g!r}")
            pairs.append((index[str(a)], index[str(b)]))
        return cls(str(id), tuple(nodes), tuple(pairs))

    @property
    def size(self):
        return len(self.nodes)

    @property
    def n_slots(self):
        p = self.size
        return p * (p + 1) // 2

    def edge_ids(self):
        return [(self.nodes[j], self.nodes[l]) for j, l in self.edges]


def canonical_pairs(p):
    """Index pairs ``(l1, l2)``, ``l1 < l2``, in lexicographic order."""
    return list(itertools.combinations(range(p), 2))


def build_main_adjacency(network: GeneNetwork) -> np.ndarray:
    p = network.size
    adj = np.zeros((p, p), dtype=np.int8)
    for j, l in network.edges:
        adj[j, l] = adj[l, j] = 1
    return adj


def _check_adjacency(adj):
    adj = np.asarray(adj)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise InputError("adjacency must be a square matrix")
    return adj


def closed_neighborhood(adj, node) -> set:
    """``{node}`` plus every node adjacent to it."""
    adj = _check_adjacency(adj)
    p = adj.shape[0]
    if not 0 <= node < p:
        raise InputError(f"node index {node} out of range for dimension {p}")
    return {int(node)} | {int(l) for l in np.flatnonzero(adj[node])}


def interaction_similarity(adj, pair1, pair2) -> float:
    """Jaccard similarity of the non-shared members' closed neighborhoods.

    Zero when the two pairs have no member in common.
    """
    a = tuple(int(v) for v in pair1)
    b = tuple(int(v) for v in pair2)
    if len(a) != 2 or len(b) != 2:
        raise InputError("interaction pairs must have exactly two members")
    if a[0] == a[1] or b[0] == b[1]:
        raise InputError(f"interaction pair with repeated member: {a if a[0] == a[1] else b}")
    if set(a) == set(b):
        raise InputError(f"identical interaction pairs {a} and {b}")
    shared = set(a) & set(b)
    if not shared:
        return 0.0
    (j,) = shared
    l1 = a[0] if a[1] == j else a[1]
    l2 = b[0] if b[1] == j else b[1]
    n1 = closed_neighborhood(adj, l1)
    n2 = closed_neighborhood(adj, l2)
    return len(n1 & n2) / len(n1 | n2)


def build_interaction_adjacency(adj) -> np.ndarray:
    """Line-graph adjacency over canonical pairs; 1 iff similarity > 0."""
    adj = _check_adjacency(adj)
    p = adj.shape[0]
    if p < 2:
        return np.zeros((0, 0), dtype=np.int8)
    pairs = canonical_pairs(p)
    index = {pr: i for i, pr in enumerate(pairs)}
    closed = adj.astype(np.int64) + np.eye(p, dtype=np.int64)
    # closed neighborhoods of l1, l2 intersect iff (A+I)^2[l1, l2] > 0
    overlap = (closed @ closed) > 0
    out = np.zeros((len(pairs), len(pairs)), dtype=np.int8)
    for j in range(p):
        others = [l for l in range(p) if l != j]
        for l1, l2 in itertools.combinations(others, 2):
            if overlap[l1, l2]:
                u = index[(min(j, l1), max(j, l1))]
                v = index[(min(j, l2), max(j, l2))]
                out[u, v] = out[v, u] = 1
    return out


def normalized_laplacian(adj) -> np.ndarray:
    """``I - D^{-1/2} A D^{-1/2}``; zero-degree rows reduce to the identity row."""
    a = np.asarray(adj, dtype=np.float64)
    deg = a.sum(axis=1)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(a.shape[0]) - inv_sqrt[:, None] * a * inv_sqrt[None, :]


@dataclass
class PenaltyGraph:
    network_id: str
    combined_adjacency: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray
    ridge: float = DEFAULT_RIDGE
    laplacian_ridge: np.ndarray = field(init=False)

    def __post_init__(self):
        self.laplacian_ridge = self.laplacian + self.ridge * np.eye(self.laplacian.shape[0])

    @property
    def dim(self):
        return self.laplacian.shape[0]

    def logdet_ridge(self):
        chol = np.linalg.cholesky(self.laplacian_ridge)
        return 2.0 * float(np.sum(np.log(np.diag(chol))))


def build_penalty_graph(network: GeneNetwork, ridge=DEFAULT_RIDGE) -> PenaltyGraph:
    if not ridge > 0:
        raise InputError(f"ridge must be positive, got {ridge}")
    a1 = build_main_adjacency(network)
    a2 = build_interaction_adjacency(a1)
    p, q = a1.shape[0], a2.shape[0]
    combined = np.zeros((p + q, p + q), dtype=np.int8)
    combined[:p, :p] = a1
    combined[p:, p:] = a2
    return PenaltyGraph(
        network_id=network.id,
        combined_adjacency=combined,
        degree=combined.sum(axis=1).astype(np.int64),
        laplacian=normalized_laplacian(combined),
        ridge=float(ridge),
    )


# ---------------------------------------------------------------------------
# network files


def parse_networks_text(text):
    networks = []
    current = None

    def flush():
        if current is not None:
            networks.append(GeneNetwork.from_ids(current["id"], current["nodes"], current["edges"]))

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#network"):
            flush()
            parts = line.split()
            if len(parts) != 2:
                raise InputError(f"line {lineno}: expected '#network <id>'")
            current = {"id": parts[1], "nodes": [], "edges": []}
            continue
        if line.startswith("#"):
            continue
        if current is None:
            raise InputError(f"line {lineno}: entry before any '#network' header")
        parts = line.split()
        if parts[0] == "node" and len(parts) == 2:
            current["nodes"].append(parts[1])
        elif parts[0] == "edge" and len(parts) == 3:
            current["edges"].append((parts[1], parts[2]))
        else:
            raise InputError(f"line {lineno}: cannot parse {line!r}")
    flush()
    if not networks:
        raise InputError("no networks found")
    return networks


def parse_networks_json(obj):
    if isinstance(obj, dict):
        obj = obj.get("networks", [obj])
    try:
        return [GeneNetwork.from_ids(d["id"], d["nodes"], [tuple(e) for e in d.get("edges", [])]) for d in obj]
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed network JSON: {exc}") from exc


def read_networks(path):
    path = Path(path)
    text = path.read_text()
    if text.lstrip().startswith(("{", "[")):
        return parse_networks_json(json.loads(text))
    return parse_networks_text(text)


def format_networks(networks):
    lines = []
    for net in networks:
        lines.append(f"#network {net.id}")
        lines.extend(f"node {g}" for g in net.nodes)
        lines.extend(f"edge {a} {b}" for a, b in net.edge_ids())
    return "\n".join(lines) + "\n"


def write_networks(networks, path):
    Path(path).write_text(format_networks(networks))
