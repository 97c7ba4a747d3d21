"""Expanded main + interaction design with per-network slot duplication.

A gene that belongs to several networks gets one main-effect slot per
network; its column values are identical across those slots. Interaction
slots only pair genes that sit in the same network.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, InputError
from .graph import canonical_pairs


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    gene_ids: list

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        self.gene_ids = [str(g) for g in self.gene_ids]
        if self.X.ndim != 2:
            raise InputError("X must be a 2-d matrix")
        n, g = self.X.shape
        if n < 2:
            raise InputError(f"need at least 2 subjects, got {n}")
        if self.y.shape[0] != n:
            raise InputError(f"y has {self.y.shape[0]} rows but X has {n}")
        if len(self.gene_ids) != g:
            raise InputError(f"{len(self.gene_ids)} gene ids for {g} columns")
        if len(set(self.gene_ids)) != g:
            raise InputError("gene ids must be unique")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise InputError("non-finite values in X or y")

    @property
    def n(self):
        return self.X.shape[0]

    def gene_index(self):
        return {g: i for i, g in enumerate(self.gene_ids)}


MAIN, INTERACTION = "main", "interaction"


@dataclass(frozen=True)
class ColumnRegistry:
    """Slot table. ``genes[j]`` holds dataset column indices (``-1`` pads mains)."""

    network_ids: tuple
    gene_ids: tuple
    offsets: np.ndarray  # K + 1 boundaries into the slot axis
    n_mains: np.ndarray  # per network
    slot_network: np.ndarray
    slot_is_main: np.ndarray
    genes: np.ndarray  # P x 2
    local: np.ndarray  # P x 2, node positions inside the owning network

    @property
    def P(self):
        return int(self.slot_network.shape[0])

    @property
    def K(self):
        return len(self.network_ids)

    def network_slice(self, k):
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def kind(self, j):
        return MAIN if self.slot_is_main[j] else INTERACTION

    def main_slots(self):
        return np.flatnonzero(self.slot_is_main)

    def interaction_slots(self):
        return np.flatnonzero(~self.slot_is_main)

    def slot_key(self, j):
        """Distinct-gene key: gene id for mains, sorted id pair for interactions."""
        a, b = self.genes[j]
        if b < 0:
            return self.gene_ids[a]
        return tuple(sorted((self.gene_ids[a], self.gene_ids[b])))

    def parent_slots(self, j):
        """Main slots (same network) of an interaction slot's two genes."""
        if self.slot_is_main[j]:
            raise ContractError(f"slot {j} is a main-effect slot")
        base = int(self.offsets[self.slot_network[j]])
        return base + int(self.local[j, 0]), base + int(self.local[j, 1])

    def to_dict(self):
        slots = []
        for j in range(self.P):
            a, b = self.genes[j]
            entry = {"network": self.network_ids[self.slot_network[j]], "kind": self.kind(j)}
            entry["genes"] = [self.gene_ids[a]] if b < 0 else [self.gene_ids[a], self.gene_ids[b]]
            slots.append(entry)
        return {"P": self.P, "network_ids": list(self.network_ids), "offsets": self.offsets.tolist(), "slots": slots}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def build_registry(networks, dataset) -> ColumnRegistry:
    gene_ids = dataset.gene_ids if isinstance(dataset, Dataset) else [str(g) for g in dataset]
    index = {g: i for i, g in enumerate(gene_ids)}
    offsets = [0]
    n_mains, slot_net, is_main, genes, local = [], [], [], [], []
    for k, net in enumerate(networks):
        cols = []
        for g in net.nodes:
            if g not in index:
                raise InputError(f"network {net.id!r}: gene {g!r} not found in dataset")
            cols.append(index[g])
        p = len(cols)
        for u in range(p):
            slot_net.append(k)
            is_main.append(True)
            genes.append((cols[u], -1))
            local.append((u, -1))
        for u, v in canonical_pairs(p):
            slot_net.append(k)
            is_main.append(False)
            genes.append((cols[u], cols[v]))
            local.append((u, v))
        n_mains.append(p)
        offsets.append(offsets[-1] + p * (p + 1) // 2)
    return ColumnRegistry(
        network_ids=tuple(net.id for net in networks),
        gene_ids=tuple(gene_ids),
        offsets=np.asarray(offsets, dtype=np.int64),
        n_mains=np.asarray(n_mains, dtype=np.int64),
        slot_network=np.asarray(slot_net, dtype=np.int64),
        slot_is_main=np.asarray(is_main, dtype=bool),
        genes=np.asarray(genes, dtype=np.int64).reshape(-1, 2),
        local=np.asarray(local, dtype=np.int64).reshape(-1, 2),
    )


class ExpandedDesign:
    """Column accessor over ``X`` for every registry slot.

    Interaction columns are products of (optionally standardized) gene
    columns. The full ``P x n`` transposed matrix is built on first request
    and cached; :meth:`column` never needs it.
    """

    def __init__(self, X, registry: ColumnRegistry, standardize=False):
        X = np.asarray(X, dtype=np.float64)
        self.standardize = bool(standardize)
        self.center = np.zeros(X.shape[1])
        self.scale = np.ones(X.shape[1])
        if self.standardize:
            self.center = X.mean(axis=0)
            sd = X.std(axis=0)
            self.scale = np.where(sd > 0, sd, 1.0)
        self.X = (X - self.center) / self.scale
        self.registry = registry
        self._Xt = None
        self._sq = None

    @classmethod
    def from_dataset(cls, dataset, networks, standardize=False):
        return cls(dataset.X, build_registry(networks, dataset), standardize=standardize)

    def transform(self, X):
        """Apply this design's main-effect standardization to new rows."""
        return (np.asarray(X, dtype=np.float64) - self.center) / self.scale

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def P(self):
        return self.registry.P

    def main_column(self, j):
        if not self.registry.slot_is_main[j]:
            raise ContractError(f"slot {j} is an interaction slot")
        return self.X[:, self.registry.genes[j, 0]].copy()

    def interaction_column(self, j):
        if self.registry.slot_is_main[j]:
            raise ContractError(f"slot {j} is a main-effect slot, not an interaction")
        a, b = self.registry.genes[j]
        if a == b:
            raise ContractError(f"slot {j} pairs gene {a} with itself")
        return self.X[:, a] * self.X[:, b]

    def column(self, j):
        if self.registry.slot_is_main[j]:
            return self.main_column(j)
        return self.interaction_column(j)

    def expand(self, X):
        """``n' x P`` expanded matrix for rows already on this design's scale."""
        X = np.asarray(X, dtype=np.float64)
        g = self.registry.genes
        out = X[:, g[:, 0]].copy()
        inter = g[:, 1] >= 0
        out[:, inter] *= X[:, g[inter, 1]]
        return out

    @property
    def Xt(self):
        """Cached ``P x n`` C-contiguous expanded matrix (rows are columns of X~)."""
        if self._Xt is None:
            self._Xt = np.ascontiguousarray(self.expand(self.X).T)
        return self._Xt

    @property
    def column_sq_norms(self):
        if self._sq is None:
            self._sq = np.einsum("ij,ij->i", self.Xt, self.Xt)
        return self._sq

    def predict(self, coef, X=None):
        if X is None:
            return self.Xt.T @ coef
        return self.expand(self.transform(X)) @ coef


def dedup_selection(selection, registry: ColumnRegistry):
    """Collapse duplicated slots into distinct genes / gene pairs.

    A distinct gene or pair counts as selected when any of its slots is.
    Every per-slot estimate is kept alongside its slot list.
    """
    mains, inters = {}, {}
    for j in sorted(selection.selected_mains):
        mains.setdefault(registry.slot_key(j), []).append(int(j))
    for j in sorted(selection.selected_interactions):
        inters.setdefault(registry.slot_key(j), []).append(int(j))
    coef = selection.coefficients

    def detail(groups):
        return {key: {"slots": slots, "estimates": [float(coef.get(s, 0.0)) for s in slots]} for key, slots in groups.items()}

    return dataclasses.replace(
        selection,
        distinct_mains=sorted(mains),
        distinct_interactions=sorted(inters),
        distinct_detail={"mains": detail(mains), "interactions": detail(inters)},
    )


# ---------------------------------------------------------------------------
# CSV files


def read_matrix_csv(path):
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
    if not header:
        raise InputError(f"{path}: empty file")
    gene_ids = [h.strip().strip('"') for h in header.split(",")]
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if data.shape[1] != len(gene_ids):
        raise InputError(f"{path}: header has {len(gene_ids)} fields, rows have {data.shape[1]}")
    return data, gene_ids


def read_response_csv(path):
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    try:
        float(first)
        skip = 0
    except ValueError:
        skip = 1
    try:
        y = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc
    if y.shape[1] != 1:
        raise InputError(f"{path}: response must be a single column")
    return y[:, 0]


def write_matrix_csv(path, X, gene_ids):
    np.savetxt(path, X, delimiter=",", header=",".join(gene_ids), comments="", fmt="%.17g")


def write_response_csv(path, y, name="y"):
    np.savetxt(path, np.asarray(y).reshape(-1, 1), delimiter=",", header=name, comments="", fmt="%.17g")


def load_dataset(x_path, y_path):
    X, gene_ids = read_matrix_csv(x_path)
    y = read_response_csv(y_path)
    return Dataset(X, y, gene_ids)
