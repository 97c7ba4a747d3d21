"""Variational EM for the network-structured spike-and-slab interaction model.

Generative structure, per slot j of the expanded design:

* y | w ~ N(X~ w, 1/tau)
* w_j | beta_j ~ N(0, s1)^beta_j N(0, s2)^(1 - beta_j), beta_j ~ Bern(zeta_j),
  zeta_j ~ Beta(a, b)
* interaction slot (l1, l2) carries an extra tied factor
  N(0, s1)^(beta_l1 beta_l2) N(0, s2)^(1 - beta_l1 beta_l2) on its coefficient
* network k carries N(0, s1 (L_k + xi I)^-1)^alpha_k N(0, s2 I)^(1 - alpha_k)
  on its coefficient block, alpha_k ~ Bern(theta)

All prior factors multiply as written (no renormalization). The variational
family is fully factorized: q(w_j) Gaussian, q(beta_j), q(alpha_k) Bernoulli,
q(zeta_j) Beta. Every E-step update below is the exact maximizer of the ELBO
in its own factor, so full sweeps never decrease the ELBO.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaln, digamma, expit

from . import kernels
from .design import ExpandedDesign, build_registry, dedup_selection
from .errors import ContractError, InputError, NumericalError
from .graph import DEFAULT_RIDGE, build_penalty_graph

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)
PROB_FLOOR = kernels.PROB_FLOOR
THETA_FLOOR = 1e-6
TAU_CAP = 1e8


@dataclass(frozen=True)
class Hyperparameters:
    s1: float = 1.0
    s2: float = 1e-3
    a: float = 1.0
    b: float = 1.0
    ridge: float = DEFAULT_RIDGE
    threshold: float = 0.5

    def __post_init__(self):
        if not self.s1 > self.s2 > 0:
            raise InputError(f"need s1 > s2 > 0, got s1={self.s1}, s2={self.s2}")
        if not (self.a > 0 and self.b > 0):
            raise InputError("Beta prior parameters must be positive")
        if not self.ridge > 0:
            raise InputError("ridge must be positive")


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-6
    max_iter: int = 500
    standardize: bool = False
    # (noise fraction, warm-up sweeps) per start; see init_state and fit_model
    starts: tuple = ((0.03, 0), (0.001, 3))

    def __post_init__(self):
        if not (self.tol > 0 and self.max_iter >= 1):
            raise InputError("need tol > 0 and max_iter >= 1")
        starts = tuple((float(f), int(w)) for f, w in self.starts)
        if not starts or any(f <= 0 or w < 0 for f, w in starts):
            raise InputError("starts must be non-empty (noise fraction > 0, warm-up sweeps >= 0) pairs")
        object.__setattr__(self, "starts", starts)


class StructuredModel:
    """Design, penalty graphs and the per-network quantities fixed across sweeps."""

    def __init__(self, design: ExpandedDesign, y, graphs):
        self.design = design
        self.registry = design.registry
        self.y = np.asarray(y, dtype=np.float64)
        self.graphs = list(graphs)
        reg = self.registry
        if len(self.graphs) != reg.K:
            raise ContractError(f"{len(self.graphs)} penalty graphs for {reg.K} networks")
        if self.y.shape[0] != design.n:
            raise ContractError("response length does not match design rows")
        self.offsets = reg.offsets
        self.n_mains = reg.n_mains
        self.local = np.ascontiguousarray(reg.local)
        self.slot_network = reg.slot_network
        self.is_main = reg.slot_is_main
        self.net_dim = np.diff(reg.offsets)
        block_offsets = [0]
        flat, logdets, diag = [], [], np.empty(reg.P)
        for k, g in enumerate(self.graphs):
            if g.dim != self.net_dim[k]:
                raise ContractError(f"network {k}: penalty graph has dimension {g.dim}, registry expects {self.net_dim[k]}")
            M = g.laplacian_ridge
            flat.append(M.ravel())
            block_offsets.append(block_offsets[-1] + M.size)
            diag[reg.network_slice(k)] = np.diag(M)
            try:
                logdets.append(g.logdet_ridge())
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"Cholesky failed for network {g.network_id}", network=k) from exc
        self.blocks = np.concatenate(flat) if flat else np.zeros(0)
        self.block_offsets = np.asarray(block_offsets, dtype=np.int64)
        self.lap_diag = diag
        self.logdets = np.asarray(logdets)
        inter = np.flatnonzero(~self.is_main)
        self.inter_slots = inter
        if inter.size:
            base = self.offsets[self.slot_network[inter]]
            self.parent_a = base + self.local[inter, 0]
            self.parent_b = base + self.local[inter, 1]
        else:
            self.parent_a = self.parent_b = np.zeros(0, dtype=np.int64)

    @classmethod
    def build(cls, dataset, networks, ridge=DEFAULT_RIDGE, standardize=False):
        design = ExpandedDesign(dataset.X, build_registry(networks, dataset), standardize=standardize)
        graphs = [build_penalty_graph(net, ridge) for net in networks]
        return cls(design, dataset.y, graphs)

    @property
    def n(self):
        return self.design.n

    @property
    def P(self):
        return self.registry.P

    @property
    def K(self):
        return self.registry.K

    def block(self, k):
        return self.graphs[k].laplacian_ridge

    def hierarchy_weight(self, eta):
        """eta_l1 * eta_l2 for every interaction slot (in ``inter_slots`` order)."""
        return eta[self.parent_a] * eta[self.parent_b]


@dataclass
class VariationalState:
    m: np.ndarray
    sigma2: np.ndarray
    eta: np.ndarray
    a_tilde: np.ndarray
    b_tilde: np.ndarray
    r: np.ndarray
    tau: float
    theta: float
    elbo_trace: list = field(default_factory=list)
    converged: bool = False
    n_sweeps: int = 0
    registry: object = field(default=None, repr=False, compare=False)

    def copy(self):
        return VariationalState(
            self.m.copy(), self.sigma2.copy(), self.eta.copy(), self.a_tilde.copy(), self.b_tilde.copy(),
            self.r.copy(), float(self.tau), float(self.theta), list(self.elbo_trace), self.converged,
            self.n_sweeps, self.registry,
        )

    def check_domains(self):
        ok = (
            np.all(self.sigma2 > 0)
            and np.all((self.eta >= 0) & (self.eta <= 1))
            and np.all((self.r >= 0) & (self.r <= 1))
            and np.all(self.a_tilde > 0)
            and np.all(self.b_tilde > 0)
            and self.tau > 0
            and 0 < self.theta < 1
        )
        return bool(ok)


def init_state(model: StructuredModel, hyper: Hyperparameters, noise_fraction=0.03) -> VariationalState:
    """m = 0, eta = r = theta = 0.5, a~ = b~ = 1, tau = 1 / (noise_fraction * var(y)).

    A start at tau = 1/var(y) (all variance treated as noise) shrinks every
    coefficient into the spike on the first sweep and the fit never leaves
    that mode; a low-noise start lets the first sweep reach the data. Even
    then a single start can settle where an early small tau keeps the
    coefficients shrunk, which is why fit_model runs several starts.
    """
    P, K = model.P, model.K
    var_y = float(np.var(model.y)) * noise_fraction
    return VariationalState(
        m=np.zeros(P),
        sigma2=np.full(P, hyper.s1),
        eta=np.full(P, 0.5),
        a_tilde=np.ones(P),
        b_tilde=np.ones(P),
        r=np.full(K, 0.5),
        tau=min(1.0 / var_y, TAU_CAP) if var_y > 0 else TAU_CAP,
        theta=0.5,
        registry=model.registry,
    )


# ---------------------------------------------------------------------------
# expected log joint and ELBO


def _log_normal_expect(w2, s):
    return -0.5 * (LOG_2PI + np.log(s)) - w2 / (2.0 * s)


def expected_log_joint(model, hyper, m, w2, resid_energy, eta, r, elog_zeta, elog_1mzeta, tau, theta):
    """Additive pieces of E_q[log p(y, w, beta, zeta, alpha)] from q's moments.

    ``w2`` is E[w_j^2] and ``resid_energy`` E||y - X~ w||^2. A point mass at
    (w, beta, zeta, alpha) is represented by w2 = w**2, eta = beta, r = alpha
    and elog_zeta = log(zeta).
    """
    s1, s2 = hyper.s1, hyper.s2
    n = model.n
    terms = {}
    terms["likelihood"] = 0.5 * n * (math.log(tau) - LOG_2PI) - 0.5 * tau * resid_energy
    slab, spike = _log_normal_expect(w2, s1), _log_normal_expect(w2, s2)
    terms["spike_slab"] = float(np.sum(eta * slab + (1.0 - eta) * spike))
    if model.inter_slots.size:
        g = model.hierarchy_weight(eta)
        i = model.inter_slots
        terms["hierarchy"] = float(np.sum(g * slab[i] + (1.0 - g) * spike[i]))
    net = 0.0
    for k in range(model.K):
        sl = model.registry.network_slice(k)
        d = int(model.net_dim[k])
        M = model.block(k)
        mk = m[sl]
        quad = float(mk @ M @ mk) + float(np.sum(np.diag(M) * (w2[sl] - mk * mk)))
        on = -0.5 * d * (LOG_2PI + math.log(s1)) + 0.5 * model.logdets[k] - quad / (2.0 * s1)
        off = -0.5 * d * (LOG_2PI + math.log(s2)) - float(np.sum(w2[sl])) / (2.0 * s2)
        net += r[k] * on + (1.0 - r[k]) * off
    terms["network"] = net
    terms["inclusion"] = float(np.sum(eta * elog_zeta + (1.0 - eta) * elog_1mzeta))
    terms["zeta_prior"] = float(
        np.sum((hyper.a - 1.0) * elog_zeta + (hyper.b - 1.0) * elog_1mzeta) - model.P * betaln(hyper.a, hyper.b)
    )
    terms["network_prior"] = float(np.sum(r * math.log(theta) + (1.0 - r) * math.log1p(-theta)))
    return terms


def _zeta_moments(state):
    total = digamma(state.a_tilde + state.b_tilde)
    return digamma(state.a_tilde) - total, digamma(state.b_tilde) - total


def expected_residual_energy(state, model, resid=None):
    if resid is None:
        resid = model.y - model.design.Xt.T @ state.m
    return float(resid @ resid) + float(np.sum(state.sigma2 * model.design.column_sq_norms))


def log_joint_factors(state, model, hyper, resid=None):
    elz, el1mz = _zeta_moments(state)
    return expected_log_joint(
        model, hyper, state.m, state.m**2 + state.sigma2, expected_residual_energy(state, model, resid),
        state.eta, state.r, elz, el1mz, state.tau, state.theta,
    )


def _bernoulli_entropy(p):
    p = np.clip(p, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log(p), 0.0) + np.where(p < 1, (1 - p) * np.log1p(-p), 0.0))
    return float(np.sum(h))


def entropies(state):
    a, b = state.a_tilde, state.b_tilde
    beta_h = betaln(a, b) - (a - 1) * digamma(a) - (b - 1) * digamma(b) + (a + b - 2) * digamma(a + b)
    return {
        "gaussian": float(np.sum(0.5 * (LOG_2PI + 1.0 + np.log(state.sigma2)))),
        "inclusion": _bernoulli_entropy(state.eta),
        "network": _bernoulli_entropy(state.r),
        "beta": float(np.sum(beta_h)),
    }


def compute_elbo(state, model, hyper, resid=None):
    parts = dict(log_joint_factors(state, model, hyper, resid))
    for key, val in entropies(state).items():
        parts["entropy_" + key] = val
    for key, val in parts.items():
        if not np.isfinite(val):
            raise NumericalError(f"ELBO term {key!r} is not finite ({val})", term=key)
    return float(sum(parts.values()))


# ---------------------------------------------------------------------------
# coordinate updates


def prior_precision(state, model, hyper):
    """Expected prior precision on every slot from all Gaussian factors."""
    s1, s2 = hyper.s1, hyper.s2
    r_slot = state.r[model.slot_network]
    prec = state.eta / s1 + (1.0 - state.eta) / s2
    prec = prec + r_slot * model.lap_diag / s1 + (1.0 - r_slot) / s2
    if model.inter_slots.size:
        g = model.hierarchy_weight(state.eta)
        prec[model.inter_slots] += g / s1 + (1.0 - g) / s2
    return prec


def slab_evidence(state, hyper):
    """E[log N(w_j; 0, s1)] - E[log N(w_j; 0, s2)] per slot."""
    w2 = state.m**2 + state.sigma2
    return 0.5 * math.log(hyper.s2 / hyper.s1) + w2 * (0.5 / hyper.s2 - 0.5 / hyper.s1)


def update_q_w(state, model, hyper, j, resid=None):
    """Exact update of q(w_j); returns (m_j, sigma2_j) and writes them into state."""
    design = model.design
    xj = design.column(j)
    if resid is None:
        resid = model.y - design.Xt.T @ state.m
    k = int(model.slot_network[j])
    sl = model.registry.network_slice(k)
    u = j - sl.start
    M = model.block(k)
    cross = float(M[u] @ state.m[sl]) - M[u, u] * state.m[j]
    prec_j = prior_precision(state, model, hyper)[j]
    sq = float(xj @ xj)
    sigma2 = 1.0 / (state.tau * sq + prec_j)
    rhs = state.tau * (float(xj @ resid) + sq * state.m[j]) - state.r[k] / hyper.s1 * cross
    m_new = sigma2 * rhs
    if not (np.isfinite(m_new) and np.isfinite(sigma2)):
        raise NumericalError(f"non-finite Gaussian update at slot {j}", slot=j)
    resid -= (m_new - state.m[j]) * xj
    state.m[j] = m_new
    state.sigma2[j] = sigma2
    return m_new, sigma2


def update_q_beta(state, model, hyper, j):
    ev = slab_evidence(state, hyper)
    elz, el1mz = _zeta_moments(state)
    s = ev[j] + elz[j] - el1mz[j]
    if model.is_main[j]:
        k = int(model.slot_network[j])
        base = int(model.offsets[k])
        u = j - base
        for i in range(base + int(model.n_mains[k]), int(model.offsets[k + 1])):
            a, b = model.local[i]
            if a == u:
                s += state.eta[base + b] * ev[i]
            elif b == u:
                s += state.eta[base + a] * ev[i]
    state.eta[j] = np.clip(expit(s), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return state.eta[j]


def update_q_zeta(state, hyper, j=None):
    """Conjugate Beta update: (a + eta, b + 1 - eta)."""
    idx = slice(None) if j is None else j
    state.a_tilde[idx] = hyper.a + state.eta[idx]
    state.b_tilde[idx] = hyper.b + 1.0 - state.eta[idx]
    return state.a_tilde[idx], state.b_tilde[idx]


def network_log_odds(state, model, hyper, k):
    s1, s2 = hyper.s1, hyper.s2
    sl = model.registry.network_slice(k)
    d = int(model.net_dim[k])
    M = model.block(k)
    mk, vk = state.m[sl], state.sigma2[sl]
    quad_on = float(mk @ M @ mk) + float(np.sum(np.diag(M) * vk))
    quad_off = float(np.sum(mk * mk + vk))
    on = -0.5 * d * math.log(s1) + 0.5 * model.logdets[k] - quad_on / (2.0 * s1)
    off = -0.5 * d * math.log(s2) - quad_off / (2.0 * s2)
    return math.log(state.theta) - math.log1p(-state.theta) + on - off


def update_q_alpha(state, model, hyper, k):
    state.r[k] = np.clip(expit(network_log_odds(state, model, hyper, k)), PROB_FLOOR, 1.0 - PROB_FLOOR)
    return state.r[k]


def update_model_params(state, model, resid=None):
    """M-step: closed-form tau and theta."""
    energy = expected_residual_energy(state, model, resid)
    state.tau = TAU_CAP if energy <= model.n / TAU_CAP else min(model.n / energy, TAU_CAP)
    state.theta = float(np.clip(np.mean(state.r), THETA_FLOOR, 1.0 - THETA_FLOOR))
    return state.tau, state.theta


def sweep(state, model, hyper):
    """One full E+M pass. Returns the residual vector it leaves behind."""
    design = model.design
    Xt = design.Xt
    resid = model.y - Xt.T @ state.m
    state.sigma2[:] = 1.0 / (state.tau * design.column_sq_norms + prior_precision(state, model, hyper))
    bad = kernels.sweep_w(
        Xt, resid, state.m, state.sigma2, design.column_sq_norms, float(state.tau),
        state.r / hyper.s1, model.blocks, model.block_offsets, model.offsets, model.slot_network,
    )
    if bad >= 0:
        raise NumericalError(f"non-finite Gaussian update at slot {bad}", slot=int(bad))
    elz, el1mz = _zeta_moments(state)
    kernels.sweep_beta(state.eta, slab_evidence(state, hyper), elz - el1mz, model.offsets, model.n_mains, model.local)
    update_q_zeta(state, hyper)
    for k in range(model.K):
        update_q_alpha(state, model, hyper, k)
    update_model_params(state, model, resid)
    return resid


@dataclass
class SelectionResult:
    selected_mains: list
    selected_interactions: list
    selected_networks: list
    eta: np.ndarray
    r: np.ndarray
    coefficients: dict
    distinct_mains: list = field(default_factory=list)
    distinct_interactions: list = field(default_factory=list)
    distinct_detail: dict = field(default_factory=dict)

    @property
    def selected_slots(self):
        return sorted(self.selected_mains + self.selected_interactions)

    def coefficient_vector(self, P):
        w = np.zeros(P)
        for j, v in self.coefficients.items():
            w[j] = v
        return w


def select(state, threshold=0.5, registry=None):
    """Strict thresholding of inclusion probabilities (slots) and r (networks)."""
    registry = registry if registry is not None else state.registry
    chosen = np.flatnonzero(state.eta > threshold)
    if registry is None:
        mains, inters, nets = chosen.tolist(), [], np.flatnonzero(state.r > threshold).tolist()
    else:
        is_main = registry.slot_is_main[chosen]
        mains = chosen[is_main].tolist()
        inters = chosen[~is_main].tolist()
        nets = [registry.network_ids[k] for k in np.flatnonzero(state.r > threshold)]
    sel = SelectionResult(
        selected_mains=mains,
        selected_interactions=inters,
        selected_networks=nets,
        eta=state.eta.copy(),
        r=state.r.copy(),
        coefficients={int(j): float(state.m[j]) for j in chosen},
    )
    if registry is not None:
        sel = dedup_selection(sel, registry)
    return sel


def run_sweeps(model, hyper, state, options=FitOptions(), warmup=0):
    """Sweep until the relative ELBO change drops below ``options.tol``.

    For the first ``warmup`` sweeps tau stays at its starting value, so the
    coefficients can reach the data before the noise level is re-estimated.
    """
    tau0 = state.tau
    elbo = compute_elbo(state, model, hyper)
    state.elbo_trace = [elbo]
    state.converged = False
    for it in range(options.max_iter):
        resid = sweep(state, model, hyper)
        if it < warmup:
            state.tau = tau0
        new = compute_elbo(state, model, hyper, resid)
        state.elbo_trace.append(new)
        state.n_sweeps = it + 1
        if it >= warmup and abs(new - elbo) < options.tol * abs(elbo):
            state.converged = True
            break
        elbo = new
    return state


def fit_model(model, hyper=Hyperparameters(), options=FitOptions(), state=None):
    """Fit from every start in ``options.starts`` and keep the highest final ELBO.

    Passing ``state`` runs a single fit from that state instead.
    """
    if state is not None:
        best = run_sweeps(model, hyper, state, options)
    else:
        best = None
        for fraction, warmup in options.starts:
            cand = run_sweeps(model, hyper, init_state(model, hyper, fraction), options, warmup)
            logger.debug("start (%g, %d): elbo=%.6f after %d sweeps", fraction, warmup, cand.elbo_trace[-1], cand.n_sweeps)
            if best is None or cand.elbo_trace[-1] > best.elbo_trace[-1]:
                best = cand
    if not best.converged:
        warnings.warn(f"variational EM did not converge in {options.max_iter} sweeps", RuntimeWarning, stacklevel=2)
    logger.debug("fit finished after %d sweeps, elbo=%.6f", best.n_sweeps, best.elbo_trace[-1])
    return best, select(best, hyper.threshold)


def fit(dataset, networks, hyper=Hyperparameters(), options=FitOptions()):
    model = StructuredModel.build(dataset, networks, ridge=hyper.ridge, standardize=options.standardize)
    return fit_model(model, hyper, options)


def result_dict(state, selection):
    """JSON-ready fit summary."""
    return {
        "eta": state.eta.tolist(),
        "r": state.r.tolist(),
        "m": state.m.tolist(),
        "sigma2": state.sigma2.tolist(),
        "tau": float(state.tau),
        "theta": float(state.theta),
        "elbo_trace": [float(v) for v in state.elbo_trace],
        "selected_mains": [int(j) for j in selection.selected_mains],
        "selected_interactions": [int(j) for j in selection.selected_interactions],
        "selected_networks": list(selection.selected_networks),
        "distinct_mains": list(selection.distinct_mains),
        "distinct_interactions": [list(p) for p in selection.distinct_interactions],
        "converged": bool(state.converged),
        "n_sweeps": int(state.n_sweeps),
    }
