"""
Sample paths and Monte Carlo estimates of E x_k' R_k x_k.

Every path draws its noise from its own Philox (counter-based) stream
keyed by ``(master_seed, path_index)``; step k consumes the k-th draw of
that stream. Results therefore do not depend on how paths are batched
or ordered, and sums are taken with ``math.fsum`` for the same reason.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import FtsSpec, NoiseModel, StochasticSystem

__all__ = ["Trajectory", "McEstimate", "path_stream", "draw_noise", "simulate", "monte_carlo", "estimate_to_csv"]


@dataclass(frozen=True, eq=False)
class Trajectory:
    x: np.ndarray  # shape (T+1, n)
    seed: tuple


@dataclass(frozen=True, eq=False)
class McEstimate:
    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    master_seed: int
    n_divergent: np.ndarray  # paths that have diverged at or before step k

    @property
    def T(self):
        return len(self.mean) - 1


def path_stream(master_seed, path_index):
    """Generator for one path: Philox keyed by ``(master_seed, path_index)``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def draw_noise(gen, T, noise=NoiseModel.STANDARD_NORMAL):
    noise = NoiseModel(noise)
    if noise is NoiseModel.STANDARD_NORMAL:
        return gen.standard_normal(T)
    return 2.0 * gen.integers(0, 2, size=T).astype(float) - 1.0


def simulate(sys: StochasticSystem, x0, noise=NoiseModel.STANDARD_NORMAL, seed=0, path_index=0, w=None) -> Trajectory:
    """One sample path of ``x_{k+1} = A_k x_k + C_k x_k w_k``.

    ``w`` overrides the drawn noise sequence (length T) when given.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 has length {x0.size}, expected {sys.n}")
    if w is None:
        w = draw_noise(path_stream(seed, path_index), sys.T, noise)
    xs = np.empty((sys.T + 1, sys.n))
    xs[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(sys.T):
            xs[k + 1] = sys.A[k] @ xs[k] + w[k] * (sys.C[k] @ xs[k])
    return Trajectory(xs, (int(seed), int(path_index)))


def monte_carlo(
    sys: StochasticSystem,
    spec: FtsSpec,
    x0,
    n_paths=1000,
    noise=NoiseModel.STANDARD_NORMAL,
    master_seed=0,
    blowup=math.inf,
) -> McEstimate:
    """Sample mean and standard error of ``x_k' R_k x_k`` over ``n_paths`` paths.

    A path counts as divergent from the first step where its weighted
    norm is non-finite or exceeds ``blowup``; divergent paths are left
    out of the statistics at that step and all later ones.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 has length {x0.size}, expected {sys.n}")
    T = sys.T
    W = np.stack([draw_noise(path_stream(master_seed, i), T, noise) for i in range(n_paths)])

    X = np.tile(x0, (n_paths, 1))
    alive = np.ones(n_paths, dtype=bool)
    mean = np.empty(T + 1)
    stderr = np.empty(T + 1)
    n_div = np.zeros(T + 1, dtype=int)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(T + 1):
            if k > 0:
                X = X @ sys.A[k - 1].T + W[:, k - 1, None] * (X @ sys.C[k - 1].T)
            q = np.einsum("pi,ij,pj->p", X, spec.R[k], X)
            alive &= np.isfinite(q) & (q <= blowup)
            n_div[k] = n_paths - int(alive.sum())
            mean[k], stderr[k] = _mean_stderr(q[alive])
    return McEstimate(mean, stderr, n_paths, int(master_seed), n_div)


def _mean_stderr(values):
    n = values.size
    if n == 0:
        return math.nan, math.nan
    # shifted so that identical samples give their value back exactly
    ref = float(values[0])
    mu = ref + math.fsum(values - ref) / n
    if n < 2:
        return mu, math.nan
    var = math.fsum((values - mu) ** 2) / (n - 1)
    return mu, math.sqrt(var / n)


def estimate_to_csv(est: McEstimate, digits=17):
    """CSV text with columns ``k, mean, stderr, n_divergent``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "mean", "stderr", "n_divergent"])
    for k in range(est.T + 1):
        w.writerow([k, f"{est.mean[k]:.{digits}g}", f"{est.stderr[k]:.{digits}g}", int(est.n_divergent[k])])
    return buf.getvalue()
