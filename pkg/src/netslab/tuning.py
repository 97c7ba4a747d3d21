"""Spike-variance selection by BIC over a grid (slab variance held fixed)."""

from __future__ import annotations

import dataclasses
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .vbem import FitOptions, Hyperparameters, StructuredModel, fit_model

logger = logging.getLogger(__name__)

RSS_FLOOR = 1e-12


def default_grid(s1=1.0, size=8):
    """Log-spaced spike variances in [1e-4, 1e-1] * s1, largest first."""
    return list(np.geomspace(1e-1, 1e-4, size) * s1)


def bic_from_rss(rss, n, df):
    return n * math.log(max(rss, RSS_FLOOR) / n) + df * math.log(n)


def bic_score(state, selection, model):
    """n log(RSS/n) + df log n with df = number of selected slots.

    RSS uses the posterior means of selected slots and zeros elsewhere.
    """
    coef = selection.coefficient_vector(model.P)
    resid = model.y - model.design.Xt.T @ coef
    rss = float(resid @ resid)
    df = len(selection.selected_mains) + len(selection.selected_interactions)
    return bic_from_rss(rss, model.n, df), df, rss


@dataclass
class GridPoint:
    s2: float
    bic: float
    df: int
    rss: float
    n_mains: int
    n_interactions: int
    n_networks: int
    converged: bool

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclass
class TuningGrid:
    s2_values: list
    points: list

    def table(self):
        return [p.to_dict() for p in self.points]


def _fit_one(model, hyper, options):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        state, sel = fit_model(model, hyper, options)
    bic, df, rss = bic_score(state, sel, model)
    point = GridPoint(
        s2=hyper.s2, bic=bic, df=df, rss=rss,
        n_mains=len(sel.selected_mains), n_interactions=len(sel.selected_interactions),
        n_networks=len(sel.selected_networks), converged=bool(state.converged),
    )
    return point, state, sel


def _fit_worker(args):
    model, hyper, options = args
    return _fit_one(model, hyper, options)


def max_workers(requested=None):
    cap = os.environ.get("NETSLAB_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def tune_s2(model: StructuredModel, grid=None, hyper=Hyperparameters(), options=FitOptions(), jobs=1):
    """Fit every grid value independently and keep the BIC minimizer.

    Ties go to the smaller s2. Returns ``(best_s2, TuningGrid, (state, selection))``
    where the last element is the winning fit.
    """
    grid = default_grid(hyper.s1) if grid is None else list(grid)
    if not grid:
        raise InputError("s2 grid is empty")
    for s2 in grid:
        if not 0 < s2 < hyper.s1:
            raise InputError(f"grid value {s2} outside (0, s1={hyper.s1})")
    values = sorted(set(float(s) for s in grid), reverse=True)
    tasks = [(model, dataclasses.replace(hyper, s2=s2), options) for s2 in values]
    jobs = max_workers(jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_fit_worker, tasks))
    else:
        results = [_fit_worker(t) for t in tasks]
    points = [r[0] for r in results]
    best = min(range(len(points)), key=lambda i: (points[i].bic, points[i].s2))
    if not any(p.converged for p in points):
        warnings.warn("no grid fit converged; returning the best available", RuntimeWarning, stacklevel=2)
    logger.info("s2 grid: %s -> %g", [(round(p.s2, 6), round(p.bic, 3)) for p in points], values[best])
    return values[best], TuningGrid(values, points), results[best][1:]
