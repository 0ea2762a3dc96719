"""
Exact finite-time stability analysis.

The system is finite-time stable w.r.t. (c1, c2, T, {R_k}) iff

    H_k = phi_{k,0}' (I (x) R_k) phi_{k,0}  <  (c2/c1) R_0     for k = 0..T.

H_k is computed without the exponential transition matrix by the backward
recursion G <- A_j' G A_j + C_j' G C_j started from G = R_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kron
from .errors import PreconditionError
from .model import FtsSpec, StochasticSystem, ensure_valid
from .sdp import eig_sym, inv_sqrt_spd

__all__ = [
    "BOUNDARY_TOL",
    "GramianSequence",
    "MomentSequence",
    "FtsVerdict",
    "PSequence",
    "MarginResult",
    "gram_sequence",
    "weighted_gram",
    "unweighted_gram",
    "check_fts_exact",
    "check_fts_sufficient_cor1",
    "moment_propagate",
    "theorem2_sequence",
    "perturbation_margin",
    "is_pos_def",
]

BOUNDARY_TOL = 1e-10


def _sym(M):
    return 0.5 * (M + M.T)


def is_pos_def(M):
    """Strict positive definiteness.

    Cholesky with a relative pivot floor of 1e-12; when the factorization
    fails or a pivot is below the floor, the smallest eigenvalue decides,
    with values at round-off level (64 eps ||M||) counted as zero.
    """
    M = _sym(np.asarray(M, dtype=float))
    scale = np.linalg.norm(M)
    if scale == 0.0:
        return False
    try:
        L = np.linalg.cholesky(M)
        if np.min(np.diag(L)) ** 2 > 1e-12 * scale:
            return True
    except np.linalg.LinAlgError:
        pass
    return bool(np.linalg.eigvalsh(M)[0] > 64 * np.finfo(float).eps * scale)


@dataclass(frozen=True, eq=False)
class GramianSequence:
    H: tuple


@dataclass(frozen=True, eq=False)
class MomentSequence:
    """Second moments ``S[k] = E x_k x_k'``; ``weighted[k] = trace(R_k S[k])`` when weights were given."""

    S: tuple
    weighted: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class FtsVerdict:
    stable: bool
    margins: np.ndarray
    first_violation: Optional[int]
    boundary: bool
    gram: GramianSequence

    @property
    def min_margin(self):
        return float(np.min(self.margins))


@dataclass(frozen=True, eq=False)
class PSequence:
    P: tuple
    constraint_ok: tuple
    oracle_error: tuple

    @property
    def stable(self):
        return all(self.constraint_ok)


@dataclass(frozen=True, eq=False)
class MarginResult:
    eps_star: float
    eps_samples: np.ndarray
    margin_samples: np.ndarray
    min_margin_at_star: float
    reached_limit: bool = False


def gram_sequence(sys: StochasticSystem, terminal):
    """``[phi_{k,0}' (I (x) W_k) phi_{k,0} for k = 0..T]`` by backward recursion.

    ``terminal[k]`` is the terminal weight W_k. Each k costs O(k n^3).
    """
    out = []
    for k in range(sys.T + 1):
        G = np.array(terminal[k], dtype=float)
        for j in range(k - 1, -1, -1):
            A, C = sys.A[j], sys.C[j]
            G = A.T @ G @ A + C.T @ G @ C
        out.append(_sym(G))
    return tuple(out)


def weighted_gram(sys: StochasticSystem, spec: FtsSpec) -> GramianSequence:
    ensure_valid(sys, spec)
    return GramianSequence(gram_sequence(sys, spec.R))


def unweighted_gram(sys: StochasticSystem) -> GramianSequence:
    I = np.eye(sys.n)
    return GramianSequence(gram_sequence(sys, [I] * (sys.T + 1)))


def _margins(H, R0, bound):
    """``bound - lambda_max(R0^{-1/2} H_k R0^{-1/2})`` per k."""
    W = inv_sqrt_spd(R0, "R_0")
    return np.array([bound - eig_sym(W @ Hk @ W)[0][-1] for Hk in H])


def check_fts_exact(sys: StochasticSystem, spec: FtsSpec) -> FtsVerdict:
    """Necessary and sufficient test.

    ``stable`` is strict: equality at some k (as in a boundary case)
    gives ``stable=False`` with ``boundary=True``.
    """
    gram = weighted_gram(sys, spec)
    ratio = spec.ratio
    margins = _margins(gram.H, spec.R[0], ratio)
    first = None
    for k, Hk in enumerate(gram.H):
        if not (margins[k] > 0 and is_pos_def(ratio * spec.R[0] - Hk)):
            first = k
            break
    boundary = bool(abs(np.min(margins)) <= BOUNDARY_TOL)
    return FtsVerdict(first is None, margins, first, boundary, gram)


def check_fts_sufficient_cor1(sys: StochasticSystem, spec: FtsSpec):
    """Sufficient test through the unweighted Gramian ``phi' phi``.

    Returns ``(passed, margins)`` with
    ``margins[k] = c2 / (c1 max_j lambda_max(R_j)) - lambda_max(R0^{-1/2} phi' phi R0^{-1/2})``.
    """
    ensure_valid(sys, spec)
    rmax = max(eig_sym(R)[0][-1] for R in spec.R)
    bound = spec.ratio / rmax
    U = unweighted_gram(sys).H
    margins = _margins(U, spec.R[0], bound)
    passed = all(m > 0 and is_pos_def(bound * spec.R[0] - Uk) for m, Uk in zip(margins, U))
    return bool(passed), margins


def moment_propagate(sys: StochasticSystem, x0, spec: Optional[FtsSpec] = None) -> MomentSequence:
    """Exact second moments: ``S_{k+1} = A_k S_k A_k' + C_k S_k C_k'``."""
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape != (sys.n,):
        raise ValueError(f"x0 has length {x0.size}, expected {sys.n}")
    S = [np.outer(x0, x0)]
    for A, C in zip(sys.A, sys.C):
        S.append(_sym(A @ S[-1] @ A.T + C @ S[-1] @ C.T))
    weighted = None
    if spec is not None:
        weighted = np.array([np.trace(R @ Sk) for R, Sk in zip(spec.R, S)])
    return MomentSequence(tuple(S), weighted)


def theorem2_sequence(sys: StochasticSystem, spec: FtsSpec, kmax=None, row_cap=kron.DEFAULT_ROW_CAP) -> PSequence:
    """Explicit constrained difference equation for ``P_k = phi_{k,0} R_0^{-1} phi_{k,0}'``.

    ``constraint_ok[k]`` tests ``P_k < (c2/c1)(I (x) R_k^{-1})``;
    ``oracle_error[k]`` is the relative deviation of P_k from the
    product of explicit transition matrices.
    """
    ensure_valid(sys, spec)
    n = sys.n
    kmax = sys.T if kmax is None else kmax
    if not 0 <= kmax <= sys.T:
        raise ValueError(f"kmax must lie in [0, T={sys.T}]")
    kron._check_size(sys, kmax, 0, row_cap)

    R0inv = np.linalg.inv(spec.R[0])
    P = [_sym(R0inv)]
    for k in range(kmax):
        nb = 2**k
        IA = np.kron(np.eye(nb), sys.A[k])
        IC = np.kron(np.eye(nb), sys.C[k])
        Pk = P[-1]
        P.append(_sym(np.block([[IA @ Pk @ IA.T, IA @ Pk @ IC.T], [IC @ Pk @ IA.T, IC @ Pk @ IC.T]])))

    ok, err = [], []
    for k, Pk in enumerate(P):
        bound = spec.ratio * np.kron(np.eye(2**k), np.linalg.inv(spec.R[k]))
        ok.append(is_pos_def(bound - Pk))
        ph = kron.phi(sys, k, 0, row_cap).data
        ref = ph @ R0inv @ ph.T
        err.append(float(np.linalg.norm(Pk - ref) / max(np.linalg.norm(ref), np.finfo(float).tiny)))
    return PSequence(tuple(P), tuple(ok), tuple(err))


def _min_margin(sys, spec, eps):
    return check_fts_exact(sys.perturbed(eps), spec).min_margin


def perturbation_margin(sys: StochasticSystem, spec: FtsSpec, eps_max=1.0, tol=1e-8, samples=101) -> MarginResult:
    """Largest perturbation keeping finite-time stability.

    Scans ``eps`` over ``samples`` equally spaced points between 0 and
    ``eps_max`` (negative ``eps_max`` searches downwards), then bisects the
    first interval where the minimum margin stops being positive. No
    monotonicity in ``eps`` is assumed.
    """
    if not check_fts_exact(sys, spec).stable:
        raise PreconditionError("base system not strictly FTS")
    if eps_max == 0:
        raise ValueError("eps_max must be non-zero")
    grid = np.linspace(0.0, eps_max, samples)
    curve = np.array([_min_margin(sys, spec, e) for e in grid])
    bad = np.flatnonzero(~(curve > 0))
    if bad.size == 0:
        return MarginResult(float(eps_max), grid, curve, float(curve[-1]), reached_limit=True)
    lo, hi = grid[bad[0] - 1], grid[bad[0]]
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        if _min_margin(sys, spec, mid) > 0:
            lo = mid
        else:
            hi = mid
    return MarginResult(float(lo), grid, curve, _min_margin(sys, spec, lo))
