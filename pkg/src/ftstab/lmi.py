"""
Lyapunov-type matrix inequalities for finite-time stability.

Analysis, for a fixed alpha > -1 and unknowns P_0..P_T > 0, lambda1, lambda2:

    lambda2 I < P_k < lambda1 I                                   k = 0..T
    A_j' S_{j+1} P_{j+1} S_{j+1} A_j + C_j' S_{j+1} P_{j+1} S_{j+1} C_j
        - (alpha+1) S_j P_j S_j < 0                               j = 0..T-1
    g(alpha) c1 lambda1 - c2 lambda2 < 0

with S_k = R_k^{1/2} and g(alpha) = (alpha+1)^T for alpha >= 0,
g(alpha) = alpha+1 for -1 < alpha < 0.

Synthesis, for alpha >= 0 and unknowns X_0..X_T, Y_0..Y_{T-1}, lhat1, lhat2:

    lhat2 R_i^{-1} < X_i < lhat1 R_i^{-1}                         i = 0..T
    (alpha+1)^T c1 lhat1 - c2 lhat2 < 0
    [ -(alpha+1) X_j   (A_j X_j + B_j Y_j)'   (C_j X_j + D_j Y_j)' ]
    [  *               -X_{j+1}               0                    ]  < 0
    [  *               *                      -X_{j+1}             ]

and K_j = Y_j X_j^{-1}. Both families are homogeneous of degree one, so the
assembled problems add lambda2 (resp. lhat2) in (delta, 1) as a
normalization that keeps the phase-I problem bounded without losing
feasible points.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import CertificateError, ValidationError
from .gramian import FtsVerdict, check_fts_exact
from .model import ControlledSystem, FeedbackLaw, FtsSpec, StochasticSystem, closed_loop, ensure_valid, matrix_to_json
from .sdp import AffineMatrixInequality, eig_sym, solve_feasibility, sqrt_spd

__all__ = [
    "DEFAULT_ANALYSIS_GRID",
    "DEFAULT_SYNTHESIS_GRID",
    "AnalysisCertificate",
    "SynthesisCertificate",
    "AnalysisLMI",
    "SynthesisLMI",
    "SynthesisResult",
    "ResidualReport",
    "assemble_analysis",
    "assemble_synthesis",
    "check_fts_lyapunov",
    "synthesize_gains",
    "verify_certificate",
    "schur_residuals",
    "certificate_to_dict",
    "certificate_from_dict",
]

DEFAULT_ANALYSIS_GRID = (-0.5, -0.25, -0.1, 0.0, 0.1, 0.5, 1.0, 2.0)
DEFAULT_SYNTHESIS_GRID = (0.0, 0.1, 0.5, 1.0)
NORMALIZATION_FLOOR = 1e-6


def growth_factor(alpha, T):
    """Scalar budget multiplier: ``(alpha+1)^T`` or ``alpha+1`` for negative alpha."""
    return (alpha + 1.0) ** T if alpha >= 0 else alpha + 1.0


@dataclass(frozen=True, eq=False)
class AnalysisCertificate:
    alpha: float
    P: tuple
    lambda1: float
    lambda2: float


@dataclass(frozen=True, eq=False)
class SynthesisCertificate:
    alpha: float
    X: tuple
    Y: tuple
    lhat1: float
    lhat2: float


Certificate = Union[AnalysisCertificate, SynthesisCertificate]


class _Layout:
    """Allocates scalar decision variables for symmetric/full matrix unknowns."""

    def __init__(self):
        self.count = 0

    def symmetric(self, n):
        """Index list and basis matrices of a symmetric n x n unknown (lower triangle)."""
        basis = []
        for i in range(n):
            for j in range(i + 1):
                E = np.zeros((n, n))
                E[i, j] = E[j, i] = 1.0
                basis.append((self.count, E))
                self.count += 1
        return basis

    def full(self, r, c):
        basis = []
        for i in range(r):
            for j in range(c):
                E = np.zeros((r, c))
                E[i, j] = 1.0
                basis.append((self.count, E))
                self.count += 1
        return basis

    def scalar(self):
        self.count += 1
        return self.count - 1


def _value(basis, x, shape):
    M = np.zeros(shape)
    for i, E in basis:
        M += x[i] * E
    return M


@dataclass
class AnalysisLMI:
    """An assembled analysis problem plus the map back to its unknowns."""

    problem: AffineMatrixInequality
    alpha: float
    P_basis: list
    lambda1: int
    lambda2: int
    n: int

    def certificate(self, x) -> AnalysisCertificate:
        P = tuple(_sym(_value(b, x, (self.n, self.n))) for b in self.P_basis)
        return AnalysisCertificate(self.alpha, P, float(x[self.lambda1]), float(x[self.lambda2]))

    def point(self, cert: AnalysisCertificate):
        """Decision vector for a certificate (inverse of :meth:`certificate`)."""
        x = np.zeros(self.problem.num_vars)
        for basis, P in zip(self.P_basis, cert.P):
            for i, E in basis:
                r, c = np.argwhere(E)[0]
                x[i] = P[r, c]
        x[self.lambda1] = cert.lambda1
        x[self.lambda2] = cert.lambda2
        return x


@dataclass
class SynthesisLMI:
    problem: AffineMatrixInequality
    alpha: float
    X_basis: list
    Y_basis: list
    lhat1: int
    lhat2: int
    n: int
    m: int

    def certificate(self, x) -> SynthesisCertificate:
        X = tuple(_sym(_value(b, x, (self.n, self.n))) for b in self.X_basis)
        Y = tuple(_value(b, x, (self.m, self.n)) for b in self.Y_basis)
        return SynthesisCertificate(self.alpha, X, Y, float(x[self.lhat1]), float(x[self.lhat2]))


def _sym(M):
    return 0.5 * (M + M.T)


def _normalize(prob, var, floor=NORMALIZATION_FLOOR):
    prob.add([[floor]], [(var, [[-1.0]])], label="normalization floor")
    prob.add([[-1.0]], [(var, [[1.0]])], label="normalization ceiling")


def assemble_analysis(sys: StochasticSystem, spec: FtsSpec, alpha) -> AnalysisLMI:
    """Affine matrix inequality whose strict feasibility certifies FTS.

    Raises
    ------
    ValueError
        ``alpha <= -1``: then the decrease condition admits no positive
        definite solution.
    """
    alpha = float(alpha)
    if not alpha > -1.0:
        raise ValueError(f"alpha={alpha} <= -1: the Lyapunov decrease inequality admits no solution P_k > 0")
    ensure_valid(sys, spec)
    n, T = sys.n, sys.T
    S = [sqrt_spd(R, f"R_{k}") for k, R in enumerate(spec.R)]
    lay = _Layout()
    Pb = [lay.symmetric(n) for _ in range(T + 1)]
    l1 = lay.scalar()
    l2 = lay.scalar()
    prob = AffineMatrixInequality(lay.count)
    I = np.eye(n)
    Z = np.zeros((n, n))
    for k in range(T + 1):
        prob.add(Z, [(l2, I)] + [(i, -E) for i, E in Pb[k]], label=f"lambda2 I < P_{k}")
        prob.add(Z, [(l1, -I)] + [(i, E) for i, E in Pb[k]], label=f"P_{k} < lambda1 I")
    for j in range(T):
        Ma = S[j + 1] @ sys.A[j]
        Mc = S[j + 1] @ sys.C[j]
        terms = [(i, Ma.T @ E @ Ma + Mc.T @ E @ Mc) for i, E in Pb[j + 1]]
        terms += [(i, -(alpha + 1.0) * S[j] @ E @ S[j]) for i, E in Pb[j]]
        prob.add(Z, terms, label=f"decrease j={j}")
    g = growth_factor(alpha, T)
    prob.add([[0.0]], [(l1, [[g * spec.c1]]), (l2, [[-spec.c2]])], label="scalar budget")
    _normalize(prob, l2)
    return AnalysisLMI(prob, alpha, Pb, l1, l2, n)


def assemble_synthesis(csys: ControlledSystem, spec: FtsSpec, alpha) -> SynthesisLMI:
    """Affine matrix inequality in (X, Y, lhat1, lhat2) for state-feedback synthesis."""
    alpha = float(alpha)
    if alpha < 0:
        raise ValueError(f"synthesis needs alpha >= 0, got {alpha}")
    ensure_valid(csys, spec)
    n, m, T = csys.n, csys.m, csys.T
    Rinv = [_sym(np.linalg.inv(R)) for R in spec.R]
    lay = _Layout()
    Xb = [lay.symmetric(n) for _ in range(T + 1)]
    Yb = [lay.full(m, n) for _ in range(T)]
    h1 = lay.scalar()
    h2 = lay.scalar()
    prob = AffineMatrixInequality(lay.count)
    Z = np.zeros((n, n))
    for i in range(T + 1):
        prob.add(Z, [(h2, Rinv[i])] + [(v, -E) for v, E in Xb[i]], label=f"lhat2 R^-1 < X_{i}")
        prob.add(Z, [(h1, -Rinv[i])] + [(v, E) for v, E in Xb[i]], label=f"X_{i} < lhat1 R^-1")
    g = growth_factor(alpha, T)
    prob.add([[0.0]], [(h1, [[g * spec.c1]]), (h2, [[-spec.c2]])], label="scalar budget")

    def embed(r, c, M):
        out = np.zeros((3 * n, 3 * n))
        out[r * n:(r + 1) * n, c * n:(c + 1) * n] = M
        if r != c:
            out[c * n:(c + 1) * n, r * n:(r + 1) * n] = M.T
        return out

    for j in range(T):
        A, B, C, D = csys.A[j], csys.B[j], csys.C[j], csys.D[j]
        terms = []
        for v, E in Xb[j]:
            terms.append((v, embed(0, 0, -(alpha + 1.0) * E) + embed(1, 0, A @ E) + embed(2, 0, C @ E)))
        for v, E in Xb[j + 1]:
            terms.append((v, embed(1, 1, -E) + embed(2, 2, -E)))
        for v, E in Yb[j]:
            terms.append((v, embed(1, 0, B @ E) + embed(2, 0, D @ E)))
        prob.add(np.zeros((3 * n, 3 * n)), terms, label=f"closed-loop decrease j={j}")
    _normalize(prob, h2)
    return SynthesisLMI(prob, alpha, Xb, Yb, h1, h2, n, m)


@dataclass
class ResidualReport:
    """Recomputed residuals of every inequality; all must be < -tol."""

    residuals: dict
    tol: float

    @property
    def worst(self):
        return max(self.residuals.values())

    @property
    def worst_label(self):
        return max(self.residuals, key=self.residuals.get)

    @property
    def passed(self):
        return bool(self.worst < -self.tol)

    def failures(self):
        return {k: v for k, v in self.residuals.items() if not v < -self.tol}


def _lmax(M):
    return float(eig_sym(_sym(M))[0][-1])


def verify_certificate(cert: Certificate, system, spec: FtsSpec, tol=1e-9) -> ResidualReport:
    """Recompute every inequality of ``cert`` from the raw data.

    ``system`` is a :class:`StochasticSystem` for analysis certificates and
    a :class:`ControlledSystem` for synthesis certificates.
    """
    res = {}
    if isinstance(cert, AnalysisCertificate):
        sys = system.open_loop() if isinstance(system, ControlledSystem) else system
        T, n = sys.T, sys.n
        a = cert.alpha
        res["alpha > -1"] = -1.0 - a
        if len(cert.P) != T + 1:
            raise ValidationError([f"certificate has {len(cert.P)} P matrices, expected {T + 1}"])
        S = [sqrt_spd(R, f"R_{k}") for k, R in enumerate(spec.R)]
        I = np.eye(n)
        res["lambda2 > 0"] = -cert.lambda2
        for k, P in enumerate(cert.P):
            res[f"P_{k} > 0"] = _lmax(-P)
            res[f"lambda2 I < P_{k}"] = _lmax(cert.lambda2 * I - P)
            res[f"P_{k} < lambda1 I"] = _lmax(P - cert.lambda1 * I)
        for j in range(T):
            Q = S[j + 1] @ cert.P[j + 1] @ S[j + 1]
            M = sys.A[j].T @ Q @ sys.A[j] + sys.C[j].T @ Q @ sys.C[j] - (a + 1.0) * S[j] @ cert.P[j] @ S[j]
            res[f"decrease j={j}"] = _lmax(M)
        res["scalar budget"] = growth_factor(a, T) * spec.c1 * cert.lambda1 - spec.c2 * cert.lambda2
        if a < 0:
            # the chain of inequalities only covers k >= 1; k = 0 needs c1 < c2
            res["c1 < c2 (k=0, alpha<0)"] = spec.c1 - spec.c2
        return ResidualReport(res, tol)

    if not isinstance(system, ControlledSystem):
        raise TypeError("synthesis certificates are verified against a ControlledSystem")
    csys = system
    T, n = csys.T, csys.n
    a = cert.alpha
    if len(cert.X) != T + 1 or len(cert.Y) != T:
        raise ValidationError([f"certificate needs {T + 1} X and {T} Y matrices"])
    # non-strict requirements: -inf when met, the size of the violation otherwise
    res["alpha >= 0"] = -np.inf if a >= 0 else -a
    res["lhat2 <= lhat1"] = -np.inf if cert.lhat2 <= cert.lhat1 else cert.lhat2 - cert.lhat1
    res["lhat2 > 0"] = -cert.lhat2
    Rinv = [_sym(np.linalg.inv(R)) for R in spec.R]
    for i, X in enumerate(cert.X):
        res[f"lhat2 R^-1 < X_{i}"] = _lmax(cert.lhat2 * Rinv[i] - X)
        res[f"X_{i} < lhat1 R^-1"] = _lmax(X - cert.lhat1 * Rinv[i])
    res["scalar budget"] = growth_factor(a, T) * spec.c1 * cert.lhat1 - spec.c2 * cert.lhat2
    for j in range(T):
        X, Xn, Y = cert.X[j], cert.X[j + 1], cert.Y[j]
        U = csys.A[j] @ X + csys.B[j] @ Y
        V = csys.C[j] @ X + csys.D[j] @ Y
        Z = np.zeros_like(X)
        M = np.block([[-(a + 1.0) * X, U.T, V.T], [U, -Xn, Z], [V, Z, -Xn]])
        res[f"closed-loop decrease j={j}"] = _lmax(M)
    return ResidualReport(res, tol)


def schur_residuals(cert: SynthesisCertificate, csys: ControlledSystem):
    """Largest eigenvalue of the unfolded quadratic inequality per j.

    ``U' X_{j+1}^{-1} U + V' X_{j+1}^{-1} V - (alpha+1) X_j`` with
    ``U = A_j X_j + B_j Y_j`` and ``V = C_j X_j + D_j Y_j``.
    """
    out = []
    for j in range(csys.T):
        X, Xn, Y = cert.X[j], cert.X[j + 1], cert.Y[j]
        U = csys.A[j] @ X + csys.B[j] @ Y
        V = csys.C[j] @ X + csys.D[j] @ Y
        c = cho_factor(Xn)
        M = U.T @ cho_solve(c, U) + V.T @ cho_solve(c, V) - (cert.alpha + 1.0) * X
        out.append(_lmax(M))
    return np.array(out)


def check_fts_lyapunov(sys: StochasticSystem, spec: FtsSpec, alpha_grid=DEFAULT_ANALYSIS_GRID, tol=1e-9) -> Optional[AnalysisCertificate]:
    """First certificate found along ``alpha_grid`` (in grid order), or None.

    The condition is only sufficient: None does not mean unstable.
    """
    ensure_valid(sys, spec)
    for alpha in alpha_grid:
        if not alpha > -1:
            raise ValueError(f"alpha grid value {alpha} <= -1")
        if alpha < 0 and not spec.c1 < spec.c2:
            continue
        lmi = assemble_analysis(sys, spec, alpha)
        result = solve_feasibility(lmi.problem, tol=tol)
        if not result.feasible:
            continue
        cert = lmi.certificate(result.x)
        if verify_certificate(cert, sys, spec, tol).passed:
            return cert
    return None


@dataclass(frozen=True, eq=False)
class SynthesisResult:
    law: FeedbackLaw
    certificate: SynthesisCertificate
    closed_loop_verdict: FtsVerdict


def extract_gains(cert: SynthesisCertificate) -> FeedbackLaw:
    """``K_j = Y_j X_j^{-1}`` via Cholesky solves ``X_j K_j' = Y_j'``."""
    K = []
    for j, Y in enumerate(cert.Y):
        try:
            c = cho_factor(cert.X[j])
        except np.linalg.LinAlgError:
            raise CertificateError(f"X_{j} is not positive definite; cannot extract K_{j}") from None
        K.append(cho_solve(c, Y.T).T)
    return FeedbackLaw(K)


def synthesize_gains(csys: ControlledSystem, spec: FtsSpec, alpha_grid=DEFAULT_SYNTHESIS_GRID, tol=1e-9) -> Optional[SynthesisResult]:
    """Solve the synthesis inequalities along ``alpha_grid``; None when all fail."""
    ensure_valid(csys, spec)
    for alpha in alpha_grid:
        lmi = assemble_synthesis(csys, spec, alpha)
        result = solve_feasibility(lmi.problem, tol=tol)
        if not result.feasible:
            continue
        cert = lmi.certificate(result.x)
        if not verify_certificate(cert, csys, spec, tol).passed:
            continue
        law = extract_gains(cert)
        verdict = check_fts_exact(closed_loop(csys, law), spec)
        return SynthesisResult(law, cert, verdict)
    return None


def certificate_to_dict(cert: Certificate):
    if isinstance(cert, AnalysisCertificate):
        return {
            "type": "analysis",
            "alpha": cert.alpha,
            "P": [matrix_to_json(P) for P in cert.P],
            "lambda1": cert.lambda1,
            "lambda2": cert.lambda2,
        }
    return {
        "type": "synthesis",
        "alpha": cert.alpha,
        "X": [matrix_to_json(X) for X in cert.X],
        "Y": [matrix_to_json(Y) for Y in cert.Y],
        "lhat1": cert.lhat1,
        "lhat2": cert.lhat2,
    }


def certificate_from_dict(doc) -> Certificate:
    kind = doc.get("type")
    try:
        if kind == "analysis":
            return AnalysisCertificate(
                float(doc["alpha"]),
                tuple(np.array(P, dtype=float, ndmin=2) for P in doc["P"]),
                float(doc["lambda1"]),
                float(doc["lambda2"]),
            )
        if kind == "synthesis":
            return SynthesisCertificate(
                float(doc["alpha"]),
                tuple(np.array(X, dtype=float, ndmin=2) for X in doc["X"]),
                tuple(np.array(Y, dtype=float, ndmin=2) for Y in doc["Y"]),
                float(doc["lhat1"]),
                float(doc["lhat2"]),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([f"certificate: {exc!r}"]) from None
    raise ValidationError([f"certificate: unknown type {kind!r}"])
