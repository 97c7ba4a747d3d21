"""Exact posterior by enumeration, for checking the variational fit on tiny problems.

For fixed (tau, theta) and a given configuration of slot indicators beta and
network indicators alpha, every prior factor on w is Gaussian, so w integrates
out in closed form. zeta integrates out as a Beta-Bernoulli mass. Summing over
all 2^(P+K) configurations gives the exact posterior over (beta, alpha).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import cho_factor, cho_solve
from scipy.special import betaln, logsumexp

from .errors import InputError

MAX_BITS = 16
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class OracleResult:
    config_log_posteriors: dict  # (beta bits, alpha bits) -> normalized log mass
    inclusion: np.ndarray
    network_inclusion: np.ndarray
    log_marginal_likelihood: float


def _config_precision(model, hyper, beta, alpha):
    """Total prior precision matrix on w and the log of its normalizing product."""
    s1, s2 = hyper.s1, hyper.s2
    P = model.P
    diag = np.where(beta == 1, 1.0 / s1, 1.0 / s2)
    log_c = float(np.sum(-0.5 * (LOG_2PI + np.log(np.where(beta == 1, s1, s2)))))
    for i, a, b in zip(model.inter_slots, model.parent_a, model.parent_b):
        s = s1 if beta[a] * beta[b] == 1 else s2
        diag[i] += 1.0 / s
        log_c += -0.5 * (LOG_2PI + math.log(s))
    prec = np.diag(diag)
    for k in range(model.K):
        sl = model.registry.network_slice(k)
        d = sl.stop - sl.start
        if alpha[k] == 1:
            prec[sl, sl] += model.block(k) / s1
            log_c += -0.5 * d * (LOG_2PI + math.log(s1)) + 0.5 * model.logdets[k]
        else:
            prec[sl, sl] += np.eye(d) / s2
            log_c += -0.5 * d * (LOG_2PI + math.log(s2))
    assert prec.shape == (P, P)
    return prec, log_c


def log_evidence_given_config(model, hyper, beta, alpha, tau):
    """log of the integral over w of likelihood times the config's prior factors."""
    X = model.design.Xt.T
    y = model.y
    n, P = X.shape
    prec, log_c = _config_precision(model, hyper, beta, alpha)
    A = prec + tau * (X.T @ X)
    b = tau * (X.T @ y)
    cf = cho_factor(A, lower=True)
    logdet_a = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
    quad = float(b @ cho_solve(cf, b))
    return (
        log_c
        + 0.5 * n * (math.log(tau) - LOG_2PI)
        - 0.5 * tau * float(y @ y)
        + 0.5 * P * LOG_2PI
        - 0.5 * logdet_a
        + 0.5 * quad
    )


def _log_prior_mass(beta, alpha, hyper, theta):
    a, b = hyper.a, hyper.b
    lm = float(np.sum(betaln(a + beta, b + 1 - beta) - betaln(a, b)))
    for ak in alpha:
        if ak == 1:
            lm += -math.inf if theta <= 0 else math.log(theta)
        else:
            lm += -math.inf if theta >= 1 else math.log1p(-theta)
    return lm


def enumerate_posterior(model, hyper, tau, theta) -> OracleResult:
    """Exact posterior over all (beta, alpha) for a built StructuredModel."""
    P, K = model.P, model.K
    if P + K > MAX_BITS:
        raise InputError(f"enumeration needs P + K <= {MAX_BITS}, got {P + K}")
    keys, logs = [], []
    for bits in itertools.product((0, 1), repeat=P + K):
        beta = np.array(bits[:P])
        alpha = np.array(bits[P:])
        lp = _log_prior_mass(beta, alpha, hyper, theta)
        if lp == -math.inf:
            continue
        keys.append((bits[:P], bits[P:]))
        logs.append(lp + log_evidence_given_config(model, hyper, beta, alpha, tau))
    logs = np.array(logs)
    log_ml = float(logsumexp(logs))
    post = logs - log_ml
    result = OracleResult(dict(zip(keys, post.tolist())), np.zeros(P), np.zeros(K), log_ml)
    result.inclusion, result.network_inclusion = exact_inclusion_probs(result)
    return result


def exact_inclusion_probs(result: OracleResult):
    """Marginal P(beta_j = 1) and P(alpha_k = 1) from normalized config masses."""
    keys = list(result.config_log_posteriors)
    w = np.exp(np.array([result.config_log_posteriors[k] for k in keys]))
    betas = np.array([k[0] for k in keys], dtype=float).reshape(len(keys), -1)
    alphas = np.array([k[1] for k in keys], dtype=float).reshape(len(keys), -1)
    return w @ betas, w @ alphas


def log_joint_point(model, hyper, w, beta, zeta, alpha, tau, theta):
    """log p(y, w, beta, zeta, alpha) at a point, term by term.

    Written directly from the densities so that it can cross-check the
    moment-based expectation used by the variational code.
    """
    s1, s2 = hyper.s1, hyper.s2
    X = model.design.Xt.T
    terms = {}
    terms["likelihood"] = float(np.sum(stats.norm.logpdf(model.y, loc=X @ w, scale=math.sqrt(1.0 / tau))))
    sd = np.where(beta == 1, math.sqrt(s1), math.sqrt(s2))
    terms["spike_slab"] = float(np.sum(stats.norm.logpdf(w, scale=sd)))
    if model.inter_slots.size:
        g = beta[model.parent_a] * beta[model.parent_b]
        sd = np.where(g == 1, math.sqrt(s1), math.sqrt(s2))
        terms["hierarchy"] = float(np.sum(stats.norm.logpdf(w[model.inter_slots], scale=sd)))
    net = 0.0
    for k in range(model.K):
        sl = model.registry.network_slice(k)
        d = sl.stop - sl.start
        if alpha[k] == 1:
            cov = s1 * np.linalg.inv(model.block(k))
            net += stats.multivariate_normal.logpdf(w[sl], mean=np.zeros(d), cov=cov)
        else:
            net += stats.multivariate_normal.logpdf(w[sl], mean=np.zeros(d), cov=s2 * np.eye(d))
    terms["network"] = float(net)
    terms["inclusion"] = float(np.sum(stats.bernoulli.logpmf(beta, zeta)))
    terms["zeta_prior"] = float(np.sum(stats.beta.logpdf(zeta, hyper.a, hyper.b)))
    terms["network_prior"] = float(np.sum(stats.bernoulli.logpmf(alpha, theta)))
    return terms
