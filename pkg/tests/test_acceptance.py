"""Acceptance criteria 1-8, each at its stated tolerance.

Every test records a ``C<n> PASS|FAIL`` line (shown in the terminal summary)
before asserting.
"""

import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE, make_problem
from netslab.graph import GeneNetwork, build_interaction_adjacency, build_main_adjacency, canonical_pairs, interaction_similarity
from netslab.oracle import enumerate_posterior
from netslab.simgen import SimConfig, compute_metrics, estimates_from_selection, simulate
from netslab.tuning import tune_s2
from netslab.vbem import (
    FitOptions,
    Hyperparameters,
    StructuredModel,
    fit_model,
    init_state,
    update_model_params,
    update_q_zeta,
)


def report(criterion, ok, detail):
    ACCEPTANCE[criterion] = f"{criterion} {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[criterion])
    assert ok, ACCEPTANCE[criterion]


# -- C1 ----------------------------------------------------------------------


def test_c1_toy_line_graph():
    t0 = time.perf_counter()
    net = GeneNetwork.from_ids("toy", ["x1", "x2", "x3", "x4"], [("x1", "x2"), ("x1", "x3"), ("x2", "x4")])
    adj = build_main_adjacency(net)
    sim = interaction_similarity(adj, (0, 2), (0, 3))
    a2 = build_interaction_adjacency(adj)
    idx = {p: i for i, p in enumerate(canonical_pairs(4))}
    edge = int(a2[idx[(0, 2)], idx[(0, 3)]]) + int(a2[idx[(0, 3)], idx[(0, 2)]])
    elapsed = time.perf_counter() - t0
    report("C1", sim == 0.0 and edge == 0 and elapsed < 1.0, f"S((x1,x3),(x1,x4))={sim} line-graph edge={edge} in {elapsed:.3f}s")


# -- C2 ----------------------------------------------------------------------


def _random_instance(rng):
    K = int(rng.integers(1, 5))
    nets, budget = [], 60
    for k in range(K):
        p = int(rng.integers(1, 7))
        while p * (p + 1) // 2 > budget - (K - k - 1):
            p -= 1
        budget -= p * (p + 1) // 2
        names = [f"k{k}g{u}" for u in range(p)]
        edges = [(names[u], names[v]) for u in range(p) for v in range(u + 1, p) if rng.random() < 0.5]
        nets.append(GeneNetwork.from_ids(f"n{k}", names, edges))
    P = sum(len(n.nodes) * (len(n.nodes) + 1) // 2 for n in nets)
    coef = {int(j): float(rng.normal(0, 2)) for j in rng.choice(P, size=min(3, P), replace=False)}
    return make_problem(rng, networks=nets, n=50, coef=coef)[2]


def test_c2_elbo_monotone():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, sizes = 0.0, []
    for _ in range(20):
        model = _random_instance(rng)
        s2 = float(10 ** rng.uniform(-4, -1))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            state, _ = fit_model(model, Hyperparameters(s2=s2))
        trace = np.array(state.elbo_trace)
        rel = np.diff(trace) / np.abs(trace[:-1])
        worst = min(worst, float(rel.min()) if rel.size else 0.0)
        sizes.append((model.P, model.K))
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-8 and elapsed < 30 and all(P <= 60 and K <= 4 for P, K in sizes)
    report("C2", ok, f"20 instances, worst relative ELBO step {worst:.2e} (tol -1e-8), {elapsed:.1f}s")


# -- C3 ----------------------------------------------------------------------

C3_LAYOUTS = [
    ([("a", "b", "c")], [("a", "b")]),
    ([("a", "b", "c", "d")], [("a", "b"), ("b", "c"), ("c", "d")]),
    ([("a", "b", "c"), ("d", "e")], [("a", "c"), ("d", "e")]),
    ([("a", "b", "c"), ("d", "e", "f")], [("a", "b"), ("a", "c"), ("d", "f")]),
]


def _c3_instance(i, rng):
    nodes, edges = C3_LAYOUTS[i % len(C3_LAYOUTS)]
    nets = []
    for k, group in enumerate(nodes):
        nets.append(GeneNetwork.from_ids(f"N{k}", list(group), [e for e in edges if e[0] in group]))
    probe = make_problem(rng, networks=nets, n=50)[2]
    reg = probe.registry
    mains = reg.main_slots()
    coef = {int(rng.choice(mains)): 5.0}
    if i % 2 == 1:
        inter = int(rng.choice(reg.interaction_slots()))
        a, b = reg.parent_slots(inter)
        coef.update({a: 5.0, b: 5.0, inter: 5.0})
    return make_problem(rng, networks=nets, n=50, coef=coef, noise_sd=0.1)[2]


def test_c3_oracle_equivalence():
    rng = np.random.default_rng(77)
    hyper = Hyperparameters()
    t0 = time.perf_counter()
    agree, notes = 0, []
    for i in range(10):
        model = _c3_instance(i, rng)
        assert model.P + model.K <= 14
        state, sel = fit_model(model, hyper)
        exact = enumerate_posterior(model, hyper, state.tau, state.theta)
        vb_set = set(sel.selected_slots)
        oracle_set = set(np.flatnonzero(exact.inclusion > 0.5).tolist())
        # top slot: inclusion probabilities saturate at 1 for every strong slot, so
        # the oracle's top is a tie set (within 1e-9 of the maximum)
        top = set(np.flatnonzero(exact.inclusion >= exact.inclusion.max() - 1e-9).tolist())
        vb_top = int(np.argmax(state.eta))
        ok = vb_set == oracle_set and vb_top in top
        agree += ok
        if not ok:
            notes.append(f"#{i}: vb={sorted(vb_set)} oracle={sorted(oracle_set)} top={vb_top} in {sorted(top)}")
    elapsed = time.perf_counter() - t0
    report("C3", agree == 10 and elapsed < 60, f"{agree}/10 instances agree with enumeration, {elapsed:.1f}s {' '.join(notes)}")


# -- C4, C5, C7 (shared desk-scale replicates) --------------------------------


@pytest.fixture(scope="module")
def desk_runs():
    runs = []
    for seed in range(20):
        sim = simulate(SimConfig(n_train=300, p=100, K=10, setting="S1", rho=0.4, signal_ratio=1 / math.sqrt(5), seed=seed))
        model = StructuredModel.build(sim.train, sim.networks)
        _, _, (state, sel) = tune_s2(model)
        metrics = compute_metrics(estimates_from_selection(sel, model.registry, model.design), sim.truth, sim.test)
        runs.append((model, sel, metrics))
    return runs


def test_c4_network_selection(desk_runs):
    ntp = np.array([m.N_TP for _, _, m in desk_runs])
    nfp = np.array([m.N_FP for _, _, m in desk_runs])
    mtp = np.array([m.M_TP for _, _, m in desk_runs])
    deviating = int(np.sum((ntp != 3) | (nfp != 0)))
    ok = deviating <= 1 and mtp.mean() >= 14.4
    itp = np.mean([m.I_TP for _, _, m in desk_runs])
    report("C4", ok, f"mean N:TP={ntp.mean():.2f} N:FP={nfp.mean():.2f} ({deviating} deviating), M:TP={mtp.mean():.2f}, I:TP={itp:.2f}")


def test_c5_pmse(desk_runs):
    pm = float(np.mean([m.PMSE for _, _, m in desk_runs]))
    report("C5", 0.3 <= pm <= 1.2, f"mean PMSE={pm:.3f} (target [0.3, 1.2])")


def test_c6_full_scale_runtime():
    sim = simulate(SimConfig(seed=0))
    t0 = time.perf_counter()
    model = StructuredModel.build(sim.train, sim.networks)
    state, sel = fit_model(model, Hyperparameters(s2=1e-3), FitOptions())
    elapsed = time.perf_counter() - t0
    report("C6", elapsed <= 300, f"n=300 p=1000 K=100 fixed-s2 fit in {elapsed:.2f}s ({state.n_sweeps} sweeps, P={model.P})")


def test_c7_hierarchy_tendency(desk_runs):
    fractions, total, both = [], 0, 0
    for model, sel, _ in desk_runs:
        chosen = set(sel.selected_mains)
        inters = sel.selected_interactions
        if not inters:
            continue
        hits = sum(all(p in chosen for p in model.registry.parent_slots(j)) for j in inters)
        fractions.append(hits / len(inters))
        total += len(inters)
        both += hits
    mean = float(np.mean(fractions)) if fractions else 0.0
    report("C7", mean >= 0.9, f"mean per-replicate parent-selected fraction {mean:.3f}, pooled {both}/{total}")


# -- C8 ----------------------------------------------------------------------


def test_c8_conjugate_updates():
    rng = np.random.default_rng(8)
    _, _, model, _ = make_problem(rng, "two3", n=25, coef={0: 1.0})
    worst = 0.0
    exact = True
    for a, b in [(1.0, 1.0), (0.5, 2.0), (3.0, 0.7)]:
        hyper = Hyperparameters(a=a, b=b)
        state = init_state(model, hyper)
        state.eta[:] = rng.uniform(0, 1, model.P)
        update_q_zeta(state, hyper)
        exact &= bool(np.all(state.a_tilde == a + state.eta) and np.all(state.b_tilde == b + 1.0 - state.eta))
    for _ in range(5):
        state = init_state(model, Hyperparameters())
        state.m[:] = rng.normal(0, 1, model.P)
        state.sigma2[:] = rng.uniform(0.01, 0.5, model.P)
        state.r[:] = rng.uniform(0, 1, model.K)
        X = model.design.Xt.T
        energy = float(np.sum((model.y - X @ state.m) ** 2)) + float(np.sum(state.sigma2 * np.sum(X * X, axis=0)))
        tau, theta = update_model_params(state, model)
        worst = max(worst, abs(tau - model.n / energy) / (model.n / energy), abs(theta - np.mean(state.r)))
    report("C8", exact and worst <= 1e-12, f"zeta updates exact={exact}, worst tau/theta error {worst:.1e}")
