"""Simulation scenarios (TF-centred gene networks) and evaluation metrics."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import Dataset, write_matrix_csv, write_response_csv
from .errors import InputError
from .graph import GeneNetwork, write_networks

SETTINGS = ("S1", "S2", "S3", "S4")
N_IMPORTANT_NETWORKS = 3
TARGETS_PER_NETWORK = 5  # important non-TF mains per important network

# Interaction templates on local node positions (0 is the TF). 6 + 6 + 5 = 17.
_TF_TEMPLATE = (
    ((0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2)),
    ((0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2)),
    ((0, 1), (0, 2), (0, 3), (0, 4), (0, 5)),
)
_NON_TF_TEMPLATE = (
    ((1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (1, 5)),
    ((1, 2), (1, 3), (2, 3), (3, 4), (4, 5), (1, 5)),
    ((1, 2), (2, 3), (3, 4), (4, 5), (1, 5)),
)


@dataclass(frozen=True)
class SimConfig:
    n_train: int = 300
    n_test: int = 100
    p: int = 1000
    K: int = 100
    rho: float = 0.4
    signal_ratio: float = 1 / math.sqrt(5)
    setting: str = "S1"
    noise_variance: float = 1.0
    seed: int = 0
    edge_model: str = "complete"

    def __post_init__(self):
        if self.p <= 0 or self.K <= 0 or self.p % self.K:
            raise InputError(f"p ({self.p}) must be a positive multiple of K ({self.K})")
        if not 0 < self.rho < 1:
            raise InputError("rho must lie in (0, 1)")
        if self.n_train < 2 or self.n_test < 1:
            raise InputError("need n_train >= 2 and n_test >= 1")
        if self.signal_ratio <= 0 or self.noise_variance < 0:
            raise InputError("signal_ratio must be positive and noise_variance non-negative")
        if self.setting not in SETTINGS:
            raise InputError(f"setting must be one of {SETTINGS}")
        if self.edge_model not in ("complete", "star"):
            raise InputError("edge_model must be 'complete' or 'star'")

    @property
    def p_k(self):
        return self.p // self.K


@dataclass
class GroundTruth:
    important_networks: list
    main_coef: dict  # gene id -> coefficient
    interaction_coef: dict  # (gene id, gene id) sorted -> coefficient
    tf_magnitude: dict = field(default_factory=dict)  # network id -> |TF coefficient|

    def to_dict(self):
        return {
            "important_networks": list(self.important_networks),
            "mains": dict(self.main_coef),
            "interactions": [[a, b, v] for (a, b), v in sorted(self.interaction_coef.items())],
            "tf_magnitude": dict(self.tf_magnitude),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            important_networks=list(d["important_networks"]),
            main_coef={str(g): float(v) for g, v in d["mains"].items()},
            interaction_coef={tuple(sorted((str(a), str(b)))): float(v) for a, b, v in d["interactions"]},
            tf_magnitude={str(k): float(v) for k, v in d.get("tf_magnitude", {}).items()},
        )


def gene_name(i):
    return f"g{i + 1:04d}"


def generate_networks(config: SimConfig):
    """K disjoint networks of p/K genes; node 0 of each is its TF."""
    pk = config.p_k
    networks = []
    for k in range(config.K):
        nodes = [gene_name(k * pk + u) for u in range(pk)]
        if config.edge_model == "complete":
            edges = [(u, v) for u in range(pk) for v in range(u + 1, pk)]
        else:
            edges = [(0, v) for v in range(1, pk)]
        networks.append(GeneNetwork(f"net{k + 1:03d}", tuple(nodes), tuple(edges)))
    return networks


def generate_X(config: SimConfig, n, rng):
    """Per network: TF ~ N(0, 1), targets ~ N(rho * TF, 1 - rho^2)."""
    K, pk, rho = config.K, config.p_k, config.rho
    tf = rng.standard_normal((n, K))
    noise = rng.standard_normal((n, K, pk - 1))
    X = np.empty((n, K, pk))
    X[:, :, 0] = tf
    X[:, :, 1:] = rho * tf[:, :, None] + math.sqrt(1.0 - rho**2) * noise
    return X.reshape(n, K * pk)


def assign_effects(config: SimConfig, networks, rng) -> GroundTruth:
    if config.p_k < TARGETS_PER_NETWORK + 1:
        raise InputError(f"networks of size {config.p_k} cannot host {TARGETS_PER_NETWORK + 1} important genes")
    if len(networks) < N_IMPORTANT_NETWORKS:
        raise InputError(f"need at least {N_IMPORTANT_NETWORKS} networks")
    tf_mag = rng.uniform(0.8, 1.2, size=N_IMPORTANT_NETWORKS)
    template = _NON_TF_TEMPLATE if config.setting == "S4" else _TF_TEMPLATE
    ratio = config.signal_ratio
    mains, inters, mags = {}, {}, {}
    for idx in range(N_IMPORTANT_NETWORKS):
        net = networks[idx]
        u = float(tf_mag[idx])
        mags[net.id] = u
        # local slot order within the network: mains first, then interactions
        entries = [((v,), u if v == 0 else ratio * u) for v in range(TARGETS_PER_NETWORK + 1)]
        pk = net.size
        pair_rank = {pr: i for i, pr in enumerate((a, b) for a in range(pk) for b in range(a + 1, pk))}
        for pr in sorted(template[idx], key=pair_rank.__getitem__):
            entries.append((pr, ratio * u))
        for pos, (nodes, mag) in enumerate(entries):
            sign = 1.0
            if config.setting == "S2" and idx == 1:
                sign = -1.0
            elif config.setting == "S3" and pos % 2 == 1:
                sign = -1.0
            if len(nodes) == 1:
                mains[net.nodes[nodes[0]]] = sign * mag
            else:
                key = tuple(sorted((net.nodes[nodes[0]], net.nodes[nodes[1]])))
                inters[key] = sign * mag
    truth = GroundTruth([networks[i].id for i in range(N_IMPORTANT_NETWORKS)], mains, inters, mags)
    check_hierarchies(truth, networks)
    return truth


def check_hierarchies(truth: GroundTruth, networks):
    """Raise AssertionError unless both main/interaction and network hierarchies hold."""
    important = {net.id: set(net.nodes) for net in networks if net.id in truth.important_networks}
    for a, b in truth.interaction_coef:
        assert a in truth.main_coef and b in truth.main_coef, f"interaction {a}x{b} lacks an important parent"
        assert any(a in nodes and b in nodes for nodes in important.values()), f"interaction {a}x{b} outside important networks"
    for g in truth.main_coef:
        assert any(g in nodes for nodes in important.values()), f"main {g} outside important networks"


def linear_predictor(X, gene_ids, main_coef, interaction_coef):
    index = {g: i for i, g in enumerate(gene_ids)}
    eta = np.zeros(X.shape[0])
    for g, v in main_coef.items():
        eta += v * X[:, index[g]]
    for (a, b), v in interaction_coef.items():
        eta += v * X[:, index[a]] * X[:, index[b]]
    return eta


def generate_response(X, gene_ids, truth: GroundTruth, noise_variance, rng):
    mean = linear_predictor(X, gene_ids, truth.main_coef, truth.interaction_coef)
    return mean + math.sqrt(noise_variance) * rng.standard_normal(X.shape[0])


@dataclass
class Simulation:
    config: SimConfig
    networks: list
    train: Dataset
    test: Dataset
    truth: GroundTruth


def simulate(config: SimConfig) -> Simulation:
    rng = np.random.default_rng(config.seed)
    networks = generate_networks(config)
    truth = assign_effects(config, networks, rng)
    gene_ids = [g for net in networks for g in net.nodes]
    X_train = generate_X(config, config.n_train, rng)
    X_test = generate_X(config, config.n_test, rng)
    y_train = generate_response(X_train, gene_ids, truth, config.noise_variance, rng)
    y_test = generate_response(X_test, gene_ids, truth, config.noise_variance, rng)
    return Simulation(config, networks, Dataset(X_train, y_train, gene_ids), Dataset(X_test, y_test, gene_ids), truth)


def write_simulation(sim: Simulation, outdir):
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(out / "X_train.csv", sim.train.X, sim.train.gene_ids)
    write_response_csv(out / "y_train.csv", sim.train.y)
    write_matrix_csv(out / "X_test.csv", sim.test.X, sim.test.gene_ids)
    write_response_csv(out / "y_test.csv", sim.test.y)
    write_networks(sim.networks, out / "networks.txt")
    payload = sim.truth.to_dict()
    payload["config"] = dataclasses.asdict(sim.config)
    (out / "truth.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    return out


# ---------------------------------------------------------------------------
# metrics


@dataclass
class Estimates:
    """Distinct-level selections and coefficient estimates from one fit."""

    mains: dict  # gene -> estimate (selected only)
    interactions: dict  # sorted gene pair -> estimate (selected only)
    networks: list
    transform: tuple | None = None  # (center, scale) per gene id, when the fit standardized


def estimates_from_selection(selection, registry, design=None):
    """Sum per-slot estimates of duplicated genes/pairs into one effect each."""
    mains, inters = {}, {}
    for j, v in selection.coefficients.items():
        key = registry.slot_key(j)
        target = mains if registry.slot_is_main[j] else inters
        target[key] = target.get(key, 0.0) + v
    transform = None
    if design is not None and design.standardize:
        transform = (dict(zip(registry.gene_ids, design.center)), dict(zip(registry.gene_ids, design.scale)))
    return Estimates(mains, inters, list(selection.selected_networks), transform)


@dataclass
class MetricsReport:
    M_TP: int
    M_FP: int
    I_TP: int
    I_FP: int
    N_TP: int
    N_FP: int
    M_RSSE: float
    I_RSSE: float
    PMSE: float

    FIELDS = ("M_TP", "M_FP", "M_RSSE", "I_TP", "I_FP", "I_RSSE", "N_TP", "N_FP", "PMSE")

    def row(self):
        return {f: getattr(self, f) for f in self.FIELDS}


def _rsse(est, truth):
    keys = set(est) | set(truth)
    return math.sqrt(sum((est.get(k, 0.0) - truth.get(k, 0.0)) ** 2 for k in keys))


def compute_metrics(est: Estimates, truth: GroundTruth, test: Dataset) -> MetricsReport:
    X = test.X
    if est.transform is not None:
        center, scale = est.transform
        X = (X - np.array([center[g] for g in test.gene_ids])) / np.array([scale[g] for g in test.gene_ids])
    pred = linear_predictor(X, test.gene_ids, est.mains, est.interactions)
    true_m, true_i = set(truth.main_coef), set(truth.interaction_coef)
    true_n = set(truth.important_networks)
    sel_m, sel_i, sel_n = set(est.mains), set(est.interactions), set(est.networks)
    return MetricsReport(
        M_TP=len(sel_m & true_m),
        M_FP=len(sel_m - true_m),
        I_TP=len(sel_i & true_i),
        I_FP=len(sel_i - true_i),
        N_TP=len(sel_n & true_n),
        N_FP=len(sel_n - true_n),
        M_RSSE=_rsse(est.mains, truth.main_coef),
        I_RSSE=_rsse(est.interactions, truth.interaction_coef),
        PMSE=pmse(test.y, pred),
    )


def pmse(y, pred):
    """Median of squared prediction errors."""
    return float(np.median((np.asarray(y) - np.asarray(pred)) ** 2))


def aggregate_metrics(rows):
    """Mean (SD) per metric across replicate rows, formatted ``m.mm(s.ss)``."""
    if not rows:
        raise InputError("no replicate rows to aggregate")
    out = {}
    for f in MetricsReport.FIELDS:
        vals = np.array([float(r[f]) for r in rows])
        sd = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
        out[f] = {"mean": float(vals.mean()), "sd": sd, "cell": f"{vals.mean():.2f}({sd:.2f})"}
    return out
