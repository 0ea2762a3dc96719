"""
Small dense semidefinite feasibility engine.

Contains a cyclic Jacobi eigensolver, symmetric positive definite square
roots, and a phase-I log-det barrier method for block-diagonal affine
matrix inequalities

    F0_b + sum_i x_i F_i^b  <  0      for every block b.

The phase-I problem is

    minimize t   subject to   F0_b + sum_i x_i F_i^b  <=  t I,

and the inequalities are strictly feasible iff its optimum is negative.
Sized for desk-scale problems (a few hundred variables, blocks up to ~50).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .errors import ConditioningError, ValidationError

__all__ = [
    "eig_sym",
    "sqrt_spd",
    "inv_sqrt_spd",
    "lambda_max",
    "Block",
    "AffineMatrixInequality",
    "Status",
    "FeasibilityResult",
    "solve_feasibility",
]

_JACOBI_MAX_SWEEPS = 100
_MAX_CENTERING_STEPS = 50


def _symmetrize(M):
    return 0.5 * (M + M.T)


def _fro(M):
    # Frobenius norm, pre-scaled so that entries near the overflow limit survive
    m = np.abs(M).max(initial=0.0)
    return 0.0 if m == 0.0 else m * float(np.linalg.norm(M / m))


def eig_sym(M):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    M : array_like, shape (n, n)
        Symmetric matrix. It is symmetrized internally, so asymmetry at
        round-off level is harmless.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    V : ndarray, shape (n, n)
        Orthonormal eigenvectors, ``V[:, i]`` belongs to ``w[i]``.
    """
    a = np.array(M, dtype=float, copy=True, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"eig_sym expects a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("eig_sym: non-finite entries")
    a = _symmetrize(a)
    n = a.shape[0]
    V = np.eye(n)
    scale = _fro(a)
    if n == 1 or scale == 0.0:
        return np.diag(a).copy(), V

    threshold = 1e-14 * scale
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = _fro(a - np.diag(np.diag(a)))
        if off <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                if abs(apq) < 1e-150 * abs(h):
                    t = apq / h
                else:
                    theta = h / (2.0 * apq)
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


def lambda_max(M):
    """Largest eigenvalue of a symmetric matrix (Jacobi)."""
    return float(eig_sym(M)[0][-1])


def _spd_eig(M, what):
    w, V = eig_sym(M)
    if w[-1] <= 0.0 or w[0] <= 1e-12 * w[-1]:
        raise ConditioningError(
            f"{what} is not numerically positive definite "
            f"(eigenvalues in [{w[0]:.3g}, {w[-1]:.3g}])"
        )
    return w, V


def sqrt_spd(M, what="matrix"):
    """Symmetric positive definite square root ``V diag(sqrt(w)) V'``."""
    w, V = _spd_eig(M, what)
    return _symmetrize((V * np.sqrt(w)) @ V.T)


def inv_sqrt_spd(M, what="matrix"):
    """Inverse of :func:`sqrt_spd`, from the same eigen-decomposition."""
    w, V = _spd_eig(M, what)
    return _symmetrize((V / np.sqrt(w)) @ V.T)


@dataclass
class Block:
    """One diagonal block ``F0 + sum_i x_i F_i`` of an affine inequality.

    ``terms`` is a sparse list of ``(var_index, F_i)`` pairs; repeated
    indices are summed. ``label`` is only used in reports.
    """

    F0: np.ndarray
    terms: list = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        self.F0 = np.atleast_2d(np.asarray(self.F0, dtype=float))

    @property
    def size(self):
        return self.F0.shape[0]

    def value(self, x):
        M = self.F0.copy()
        for i, Fi in self.terms:
            M += x[i] * Fi
        return M


class AffineMatrixInequality:
    """Block-diagonal affine map ``x -> F0 + sum_i x_i F_i`` required to be < 0."""

    def __init__(self, num_vars, blocks=None):
        self.num_vars = int(num_vars)
        self.blocks: list[Block] = list(blocks or [])

    def add(self, F0, terms=(), label=""):
        """Append a block; returns it for chaining."""
        b = Block(F0, [(int(i), np.atleast_2d(np.asarray(F, dtype=float))) for i, F in terms], label)
        self.blocks.append(b)
        return b

    def check(self):
        """Return a list of well-formedness violations (empty when fine)."""
        problems = []
        if self.num_vars < 0:
            problems.append("negative variable count")
        for k, b in enumerate(self.blocks):
            d = b.size
            if d <= 0 or b.F0.shape != (d, d):
                problems.append(f"block {k}: F0 is not a non-empty square matrix")
                continue
            mats = [b.F0] + [F for _, F in b.terms]
            for i, F in b.terms:
                if not 0 <= i < self.num_vars:
                    problems.append(f"block {k}: variable index {i} out of range")
            for F in mats:
                if F.shape != (d, d):
                    problems.append(f"block {k}: coefficient of shape {F.shape}, expected {(d, d)}")
                elif np.abs(F - F.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(F).max()):
                    problems.append(f"block {k}: coefficient matrix not symmetric")
        return problems

    def values(self, x):
        return [b.value(x) for b in self.blocks]

    def max_eigenvalues(self, x):
        """Per-block largest eigenvalue, evaluated with the Jacobi solver."""
        return np.array([lambda_max(M) for M in self.values(x)])

    def scaled(self, factor):
        """Copy with all block data multiplied by ``factor``."""
        out = AffineMatrixInequality(self.num_vars)
        for b in self.blocks:
            out.blocks.append(Block(factor * b.F0, [(i, factor * F) for i, F in b.terms], b.label))
        return out


class Status(str, Enum):
    STRICTLY_FEASIBLE = "strictly-feasible"
    INFEASIBLE = "infeasible-at-tolerance"
    MAX_ITERATIONS = "max-iterations"


@dataclass
class FeasibilityResult:
    status: Status
    x: np.ndarray
    tstar: float
    iterations: int

    @property
    def feasible(self):
        return self.status is Status.STRICTLY_FEASIBLE


class _Compiled:
    """Per-block dense stacks of the coefficient matrices, with t appended."""

    def __init__(self, problem: AffineMatrixInequality):
        self.nz = problem.num_vars + 1
        self.blocks = []
        for b in problem.blocks:
            d = b.size
            merged: dict[int, np.ndarray] = {}
            for i, F in b.terms:
                merged[i] = merged.get(i, 0.0) + _symmetrize(F)
            idx = sorted(merged)
            # dS/dz for S = tI - F(x): -F_i for x_i, I for t
            G = np.empty((len(idx) + 1, d, d))
            for r, i in enumerate(idx):
                G[r] = -merged[i]
            G[-1] = np.eye(d)
            Fx = G[:-1].reshape(len(idx), d * d)
            self.blocks.append(
                (np.array(idx + [problem.num_vars], dtype=int), _symmetrize(b.F0), G, Fx, d)
            )
        self.degree = sum(d for *_, d in self.blocks)

    def slacks(self, z):
        """Cholesky factors of S_b = tI - F_b(x), or None if any is not PD."""
        t = z[-1]
        out = []
        for idx, F0, _, Fx, d in self.blocks:
            S = t * np.eye(d) - F0
            if len(idx) > 1:
                S += (z[idx[:-1]] @ Fx).reshape(d, d)
            try:
                L = np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                return None
            out.append(L)
        return out

    def barrier(self, Ls):
        return -2.0 * sum(np.sum(np.log(np.diag(L))) for L in Ls)

    def derivatives(self, Ls):
        g = np.zeros(self.nz)
        H = np.zeros((self.nz, self.nz))
        for (idx, _, G, _, d), L in zip(self.blocks, Ls):
            Linv = solve_triangular(L, np.eye(d), lower=True)
            W = Linv @ G @ Linv.T
            flat = W.reshape(len(idx), d * d)
            g[idx] -= np.trace(W, axis1=1, axis2=2)
            H[np.ix_(idx, idx)] += flat @ flat.T
        return g, H

    def tmax(self, x):
        best = -np.inf
        for idx, F0, _, Fx, d in self.blocks:
            M = -F0 if len(idx) == 1 else -F0 + (x[idx[:-1]] @ Fx).reshape(d, d)
            best = max(best, float(np.linalg.eigvalsh(-M)[-1]))
        return best


def _newton_direction(g, H):
    try:
        c = cho_factor(H)
        return -cho_solve(c, g)
    except np.linalg.LinAlgError:
        return -np.linalg.lstsq(H, g, rcond=None)[0]


def solve_feasibility(problem, tol=1e-9, max_iter=500, mu=10.0, stop_below=None):
    """Decide strict feasibility of ``problem`` by a phase-I barrier method.

    Parameters
    ----------
    problem : AffineMatrixInequality
    tol : float
        Strictness margin: feasibility is declared only when the phase-I
        value satisfies ``t < -tol``.
    max_iter : int
        Budget of Newton iterations over all centering steps.
    mu : float
        Barrier parameter growth factor.
    stop_below : float, optional
        Return as soon as an iterate reaches ``t < stop_below`` (must be
        ``<= -tol``). Without it the phase-I problem is solved to optimality,
        which yields the most robust point.

    Returns
    -------
    FeasibilityResult
        ``x`` holds the best iterate; ``tstar`` its phase-I value, recomputed
        as the exact maximum block eigenvalue at ``x``.
    """
    problems = problem.check()
    if problems:
        raise ValidationError(problems)
    comp = _Compiled(problem)
    n = problem.num_vars
    if not comp.blocks:
        return FeasibilityResult(Status.STRICTLY_FEASIBLE, np.zeros(n), -np.inf, 0)

    z = np.zeros(n + 1)
    z[-1] = comp.tmax(z[:-1]) + 1.0
    data_scale = max(1.0, max(np.abs(F0).max(initial=0.0) for _, F0, *_ in comp.blocks))
    unbounded = -1e10 * data_scale
    m = comp.degree
    s = 1.0
    iterations = 0

    def finish(status):
        x = z[:-1].copy()
        return FeasibilityResult(status, x, comp.tmax(x), iterations)

    while True:
        # centering; the inner cap guards against round-off stalls at large s
        for _ in range(_MAX_CENTERING_STEPS):
            Ls = comp.slacks(z)
            g, H = comp.derivatives(Ls)
            g[-1] += s
            dz = _newton_direction(g, H)
            dec2 = -float(g @ dz)
            if dec2 / 2.0 <= 1e-9:
                break
            if iterations >= max_iter:
                return finish(Status.MAX_ITERATIONS)
            iterations += 1
            f0 = s * z[-1] + comp.barrier(Ls)
            step = 1.0
            while True:
                zn = z + step * dz
                Ln = comp.slacks(zn)
                if Ln is not None and s * zn[-1] + comp.barrier(Ln) <= f0 - 0.01 * step * dec2:
                    break
                step *= 0.5
                if step < 1e-14:
                    break
            if step < 1e-14:
                break
            z = zn
            if stop_below is not None and z[-1] < stop_below:
                return finish(Status.STRICTLY_FEASIBLE)
            if z[-1] < unbounded:
                return finish(Status.STRICTLY_FEASIBLE)

        gap = m / s
        t = z[-1]
        if t - gap >= -tol:
            return finish(Status.INFEASIBLE)
        if t < -tol and gap <= 1e-6 * abs(t):
            res = finish(Status.STRICTLY_FEASIBLE)
            if res.tstar < -tol:
                return res
        if gap <= 1e-10:
            res = finish(Status.STRICTLY_FEASIBLE)
            if res.tstar < -tol:
                return res
            return finish(Status.INFEASIBLE)
        if iterations >= max_iter:
            return finish(Status.MAX_ITERATIONS)
        s *= mu
