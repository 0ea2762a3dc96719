import json
from dataclasses import replace

import numpy as np
import pytest

from ftstab.errors import CertificateError
from ftstab.gramian import check_fts_exact
from ftstab.lmi import (
    AnalysisCertificate,
    SynthesisCertificate,
    assemble_analysis,
    assemble_synthesis,
    certificate_from_dict,
    certificate_to_dict,
    check_fts_lyapunov,
    extract_gains,
    growth_factor,
    schur_residuals,
    synthesize_gains,
    verify_certificate,
)
from ftstab.model import ControlledSystem, FtsSpec, StochasticSystem, closed_loop, load_problem
from ftstab.sdp import solve_feasibility

from conftest import DATA, random_system, scalar_controlled, scalar_system


def zero_system(n, T):
    return StochasticSystem([np.zeros((n, n))] * T, [np.zeros((n, n))] * T)


def contractive_system(rng, n, T, R):
    """Random system whose scaled coefficients satisfy Abar'Abar + Cbar'Cbar < I."""
    A, C = [], []
    for j in range(T):
        a, c = rng.uniform(-1, 1, (n, n)), rng.uniform(-1, 1, (n, n))
        S1 = np.linalg.cholesky(R[j + 1]).T
        S0 = np.linalg.cholesky(R[j]).T
        ab, cb = S1 @ a @ np.linalg.inv(S0), S1 @ c @ np.linalg.inv(S0)
        s = 0.9 / np.sqrt(np.linalg.eigvalsh(ab.T @ ab + cb.T @ cb)[-1])
        A.append(s * a)
        C.append(s * c)
    return StochasticSystem(A, C)


def example1():
    return scalar_system([1.0, 2.0], [1.0, 2.0]), FtsSpec(0.25, 8.0, [[[1.0]], [[2.0]], [[2.0]]])


class TestAnalysis:
    def test_growth_factor(self):
        assert growth_factor(0.5, 3) == 1.5**3
        assert growth_factor(-0.5, 3) == 0.5

    def test_alpha_below_minus_one(self):
        with pytest.raises(ValueError):
            assemble_analysis(*example1(), -1.0)

    def test_zero_system_certificate(self):
        spec = FtsSpec(1.0, 2.0, [np.eye(2)] * 4)
        cert = check_fts_lyapunov(zero_system(2, 3), spec, alpha_grid=(0.0,))
        assert cert is not None and cert.alpha == 0.0
        # P = I with lambda1 = lambda2 = 1 meets the bounds only with equality;
        # opening the gap a little gives a strict point
        hand = AnalysisCertificate(0.0, tuple(np.eye(2) for _ in range(4)), 1.1, 0.9)
        assert verify_certificate(hand, zero_system(2, 3), spec).passed

    def test_contractive_identity_point(self, rng):
        n, T = 2, 4
        R = [np.eye(n) + 0.3 * np.diag(rng.uniform(size=n)) for _ in range(T + 1)]
        spec = FtsSpec(1.0, 1.5, R)
        for _ in range(5):
            sys = contractive_system(rng, n, T, R)
            hand = AnalysisCertificate(0.0, tuple(np.eye(n) for _ in range(T + 1)), 1.0, 1.0)
            # lambda1 = lambda2 sits on the boundary of the bound blocks, so nudge them
            hand = replace(hand, lambda1=1.0 + 1e-3, lambda2=1.0 - 1e-3)
            assert verify_certificate(hand, sys, spec).passed
            cert = check_fts_lyapunov(sys, spec, alpha_grid=(0.0,))
            assert cert is not None and cert.alpha == 0.0

    def test_example1_infeasible_at_zero(self):
        lmi = assemble_analysis(*example1(), 0.0)
        assert not solve_feasibility(lmi.problem).feasible
        assert check_fts_lyapunov(*example1()) is None

    def test_soundness_on_random_instances(self, rng):
        found = 0
        for _ in range(30):
            sys = random_system(rng, 2, 4, scale=0.5)
            spec = FtsSpec(1.0, 20.0, [np.eye(2)] * 5)
            cert = check_fts_lyapunov(sys, spec)
            if cert is not None:
                found += 1
                assert verify_certificate(cert, sys, spec).passed
                assert check_fts_exact(sys, spec).stable
        assert found > 5

    def test_sign_flip_fails(self):
        spec = FtsSpec(1.0, 2.0, [np.eye(2)] * 4)
        cert = check_fts_lyapunov(zero_system(2, 3), spec, alpha_grid=(0.0,))
        flipped = replace(cert, P=tuple(-P for P in cert.P))
        rep = verify_certificate(flipped, zero_system(2, 3), spec)
        assert not rep.passed
        assert "P_0 > 0" in rep.failures()

    def test_homogeneity(self, rng):
        sys = random_system(rng, 2, 3, scale=0.4)
        spec = FtsSpec(1.0, 10.0, [np.eye(2)] * 4)
        cert = check_fts_lyapunov(sys, spec, alpha_grid=(0.0,))
        assert cert is not None
        for s in (1e-3, 7.0, 1e4):
            big = replace(cert, P=tuple(s * P for P in cert.P), lambda1=s * cert.lambda1, lambda2=s * cert.lambda2)
            assert verify_certificate(big, sys, spec).passed

    def test_alpha_structure(self, rng):
        """Raising alpha relaxes the decrease blocks and tightens the scalar budget."""
        sys = random_system(rng, 2, 3, scale=0.4)
        spec = FtsSpec(1.0, 10.0, [np.eye(2)] * 4)
        cert = check_fts_lyapunov(sys, spec, alpha_grid=(0.0,))
        lo = verify_certificate(replace(cert, alpha=0.1), sys, spec).residuals
        hi = verify_certificate(replace(cert, alpha=0.5), sys, spec).residuals
        for j in range(sys.T):
            assert hi[f"decrease j={j}"] < lo[f"decrease j={j}"]
        assert hi["scalar budget"] > lo["scalar budget"]

    def test_negative_alpha_skipped_when_c1_equals_c2(self):
        spec = FtsSpec(1.0, 1.0, [[[1.0]]] * 3)
        sys = scalar_system([0.1, 0.1], [0.1, 0.1])
        cert = check_fts_lyapunov(sys, spec, alpha_grid=(-0.5,))
        assert cert is None

    def test_dict_round_trip(self, rng):
        sys = random_system(rng, 2, 3, scale=0.4)
        spec = FtsSpec(1.0, 10.0, [np.eye(2)] * 4)
        cert = check_fts_lyapunov(sys, spec)
        back = certificate_from_dict(json.loads(json.dumps(certificate_to_dict(cert))))
        assert back.alpha == cert.alpha and back.lambda1 == cert.lambda1
        for a, b in zip(cert.P, back.P):
            assert a.tobytes() == b.tobytes()


class TestSynthesis:
    def test_scalar_cancellation(self):
        csys = scalar_controlled(1.0, 1.0, 1.0, 1.0, 3)
        spec = FtsSpec(1.0, 2.0, [[[1.0]]] * 4)
        hand = SynthesisCertificate(0.0, tuple([[[1.0]]] * 4), tuple([[[-1.0]]] * 3), 1.1, 0.9)
        hand = replace(hand, X=tuple(np.array(x) for x in hand.X), Y=tuple(np.array(y) for y in hand.Y))
        assert verify_certificate(hand, csys, spec).passed
        np.testing.assert_allclose(extract_gains(hand).K[0], [[-1.0]])
        res = synthesize_gains(csys, spec)
        assert res is not None and res.closed_loop_verdict.stable
        assert all(abs(K[0, 0] + 1.0) < 1.0 / np.sqrt(2) for K in res.law.K)

    def test_no_actuation_unstabilizable(self):
        csys = scalar_controlled(1.0, 0.0, 1.0, 0.0, 3)
        spec = FtsSpec(1.0, 2.0, [[[1.0]]] * 4)
        assert not check_fts_exact(csys.open_loop(), spec).stable
        assert check_fts_lyapunov(csys.open_loop(), spec) is None
        assert synthesize_gains(csys, spec) is None

    def test_no_actuation_matches_analysis(self, rng):
        """With B = D = 0 and R = I, P = X^{-1} turns a synthesis certificate into an analysis one."""
        n, T = 2, 3
        sys = random_system(rng, n, T, scale=0.3)
        Z = [np.zeros((n, 1))] * T
        csys = ControlledSystem(sys.A, Z, sys.C, Z)
        spec = FtsSpec(1.0, 10.0, [np.eye(n)] * (T + 1))
        res = synthesize_gains(csys, spec, alpha_grid=(0.0,))
        assert res is not None
        c = res.certificate
        mapped = AnalysisCertificate(0.0, tuple(np.linalg.inv(X) for X in c.X), 1.0 / c.lhat2, 1.0 / c.lhat1)
        assert verify_certificate(mapped, sys, spec).passed
        assert check_fts_exact(sys, spec).stable

    def test_ordering_violation(self):
        csys = scalar_controlled(1.0, 1.0, 1.0, 1.0, 2)
        spec = FtsSpec(1.0, 2.0, [[[1.0]]] * 3)
        bad = SynthesisCertificate(0.0, tuple(np.eye(1) for _ in range(3)), tuple(-np.eye(1) for _ in range(2)), 0.5, 0.9)
        rep = verify_certificate(bad, csys, spec)
        assert "lhat2 <= lhat1" in rep.failures()

    def test_schur_equivalence(self):
        p = load_problem(DATA / "example2_half_noise.json")
        res = synthesize_gains(p.system, p.spec)
        assert res is not None
        assert np.all(schur_residuals(res.certificate, p.system) < 0)

    def test_singular_x_rejected(self):
        cert = SynthesisCertificate(0.0, (np.zeros((1, 1)), np.eye(1)), (np.eye(1),), 1.0, 0.5)
        with pytest.raises(CertificateError):
            extract_gains(cert)

    def test_assembled_sizes(self):
        p = load_problem(DATA / "example2_half_noise.json")
        lmi = assemble_synthesis(p.system, p.spec, 0.0)
        assert lmi.problem.check() == []
        assert max(b.size for b in lmi.problem.blocks) == 6
        with pytest.raises(ValueError):
            assemble_synthesis(p.system, p.spec, -0.5)


@pytest.fixture(scope="module")
def result():
    p = load_problem(DATA / "example2_half_noise.json")
    return p, synthesize_gains(p.system, p.spec, alpha_grid=(0.0,))


class TestReducedNoiseVariant:
    """Example 2 dynamics with the noise matrices halved: a stabilizable companion case."""

    def test_open_loop_unstable(self, result):
        p, _ = result
        assert not check_fts_exact(p.open_loop, p.spec).stable

    def test_closed_loop_stable(self, result):
        p, res = result
        assert res is not None
        cl = closed_loop(p.system, res.law)
        assert check_fts_exact(cl, p.spec).stable
        assert verify_certificate(res.certificate, p.system, p.spec).passed
