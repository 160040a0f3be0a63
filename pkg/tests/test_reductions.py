import math
import warnings

import numpy as np
import pytest

from perfpred.domain import Ball, Hypercube
from perfpred.instances import (Custom, Negation, PerformativeInstance, fixed_point_gap,
                                stability_gap)
from perfpred.reductions import (DEFAULT_EPS_PRIME, AffineOperator, BimatrixGame,
                                 certify_fp_from_ps, certify_vi_from_ps, encode_endogenous,
                                 endogenous_payoffs, fp_to_ps, gen_affine_hard, matrix_norms,
                                 support_enum_nash, verify_approx_nash, vi_to_ps)
from perfpred.solvers import run_halpern, svi_gap

from helpers import cube_points_near, norm_bounded_matrix, orthogonal, planted_affine_vi


# VI -> stability ---------------------------------------------------------------------

def test_vi_to_ps_examples():
    dom = Hypercube.unit(2)
    c = np.array([0.3, 1.4])
    inst = vi_to_ps(AffineOperator(np.eye(2), -c), 1.0, 0.1, 0.1, dom)
    x = np.array([0.9, 0.1])
    assert np.allclose(inst.g(x), c)
    assert stability_gap(inst, dom.project(c)) == pytest.approx(0)
    inst = vi_to_ps(AffineOperator(np.eye(2)), 1.0, 0.01, 1.0, dom)
    assert inst.rho <= 1.01 + 1e-12
    inst = vi_to_ps(lambda x: np.zeros(2), 0.0, 0.1, 0.2, dom)
    assert np.allclose(inst.g(x), x) and stability_gap(inst, x) == 0


def test_stability_gap_is_scaled_svi_gap(rng):
    A, b, _ = planted_affine_vi(rng, 4)
    F = AffineOperator(A, b)
    inst = vi_to_ps(F, F.lipschitz, 0.02, 0.5, Hypercube.unit(4))
    lam = inst.provenance["lambda"]
    for x in rng.uniform(0, 1, (50, 4)):
        assert stability_gap(inst, x) == pytest.approx(lam * svi_gap(F, inst.domain, x))


def test_vi_round_trip_on_planted_solutions(rng):
    eps, eps_prime = 1e-3, 1e-2
    hits = 0
    for _ in range(10):
        A, b, xs = planted_affine_vi(rng, 5)
        F = AffineOperator(A, b)
        inst = vi_to_ps(F, F.lipschitz, eps, eps_prime, Hypercube.unit(5))
        for x in np.vstack([xs, cube_points_near(rng, xs, 1e-2, 30)]):
            if stability_gap(inst, x) <= eps:
                hits += 1
                assert svi_gap(F, inst.domain, x) <= eps_prime + 1e-9
            assert certify_vi_from_ps(F, inst.domain, x, eps, eps_prime)
    assert hits > 10


def test_vi_ratio_above_one_warns():
    with pytest.warns(UserWarning):
        inst = vi_to_ps(AffineOperator(np.eye(1)), 1.0, 2.0, 1.0, Hypercube.unit(1))
    assert inst.provenance["lambda"] == 2.0


def test_nonpositive_tolerances_rejected():
    with pytest.raises(ValueError):
        vi_to_ps(AffineOperator(np.eye(1)), 1.0, 0.0, 1.0, Hypercube.unit(1))
    with pytest.raises(ValueError):
        fp_to_ps(Negation(), 1.0, 0.1, -1.0, Hypercube.unit(1))


# fixed point -> stability -----------------------------------------------------------------

def test_fp_to_ps_examples():
    dom = Hypercube.symmetric(2)
    x = np.array([0.3, -0.7])
    inst = fp_to_ps(Negation(), 1.0, 0.1, 0.1, dom)
    assert np.allclose(inst.g(x), -x)
    inst = fp_to_ps(Negation(), 1.0, 0.05, 0.1, dom)
    assert np.allclose(inst.g(x), 0)
    inst = fp_to_ps(Negation(), 1.0, 0.01, 1.0, dom)
    assert inst.rho <= 1.0 + 1e-12


def test_fp_ratio_capped():
    with pytest.warns(UserWarning):
        inst = fp_to_ps(Negation(), 1.0, 0.5, 0.1, Hypercube.symmetric(1))
    assert inst.provenance["lambda"] == 1.0
    assert inst.provenance["certifiedEpsPrime"] == pytest.approx(0.5)


def test_fp_round_trip(rng):
    eps, eps_prime = 1e-3, 1e-2
    dom = Hypercube.unit(3)
    for _ in range(5):
        Q, c = orthogonal(rng, 3), rng.uniform(-0.5, 0.5, 3)
        T = Custom(lambda x, Q=Q, c=c: dom.project(Q @ (x - 0.5) + 0.5 + c), 1.0)
        inst = fp_to_ps(T, 1.0, eps, eps_prime, dom)
        rep = run_halpern(inst, rng.uniform(0, 1, 3), max_iter=20_000, tol=eps)
        assert rep.status == "converged"
        x = rep.final_point
        assert np.linalg.norm(T(x) - x) <= eps_prime + 1e-9
        assert certify_fp_from_ps(T, inst, x, eps)


# affine hard family -------------------------------------------------------------------

def test_gen_affine_hard_defaults():
    assert DEFAULT_EPS_PRIME == pytest.approx(0.014667, abs=1e-6)
    inst = gen_affine_hard(np.zeros((3, 3)), np.ones(3), 0.001)
    assert inst.rho <= 1 + 1e-12
    assert inst.provenance["epsPrime"] == DEFAULT_EPS_PRIME
    inst = gen_affine_hard(np.eye(1), [0.0], 0.1, 1.0)
    assert inst.rho == pytest.approx(0.9)
    assert inst.rho <= inst.provenance["rhoBound"] == pytest.approx(1.1)


def test_gen_affine_hard_rejects_large_norms():
    with pytest.raises(ValueError):
        gen_affine_hard(np.ones((2, 2)), np.zeros(2), 0.01)


def test_norm_inequality(rng):
    for _ in range(200):
        A = rng.normal(size=(rng.integers(1, 7),) * 2)
        n1, ninf, n2 = matrix_norms(A)
        assert n2 <= math.sqrt(n1 * ninf) + 1e-9


def test_gen_affine_hard_rho_bound(rng):
    for _ in range(20):
        A = norm_bounded_matrix(rng, 5)
        inst = gen_affine_hard(A, rng.normal(size=5), 1e-3)
        assert inst.rho <= 1 + 1e-3 / DEFAULT_EPS_PRIME + 1e-12


# games ------------------------------------------------------------------------------

def test_matching_pennies():
    game = BimatrixGame([[1, 0], [0, 1]], [[0, 1], [1, 0]])
    eqs = support_enum_nash(game)
    assert len(eqs) == 1
    x, y = eqs[0]
    assert np.allclose(x, [0.5, 0.5]) and np.allclose(y, [0.5, 0.5])


def test_pure_equilibrium_found():
    game = BimatrixGame([[3, 0], [5, 1]], [[3, 5], [0, 1]])  # prisoner's dilemma
    eqs = support_enum_nash(game)
    assert any(np.allclose(x, [0, 1]) and np.allclose(y, [0, 1]) for x, y in eqs)


def test_trivial_game():
    game = BimatrixGame([[1]], [[1]])
    assert verify_approx_nash(game, [1.0], [1.0], 0.0)
    assert len(support_enum_nash(game)) == 1


def test_degenerate_game_handled():
    game = BimatrixGame(np.ones((3, 3)), np.ones((3, 3)))
    eqs = support_enum_nash(game)
    assert eqs and all(verify_approx_nash(game, x, y, 1e-9) for x, y in eqs)


def test_every_enumerated_equilibrium_verifies(rng):
    for _ in range(20):
        game = BimatrixGame(rng.integers(0, 2, (3, 3)), rng.integers(0, 2, (3, 3)))
        eqs = support_enum_nash(game)
        assert eqs
        for x, y in eqs:
            assert verify_approx_nash(game, x, y, 1e-9)


def test_enumeration_size_limit():
    with pytest.raises(ValueError):
        support_enum_nash(BimatrixGame(np.zeros((6, 2)), np.zeros((6, 2))))


# endogenous costs ---------------------------------------------------------------------

def test_encoding_costs_and_labels():
    game = BimatrixGame([[1, 0], [0, 1]], [[0, 1], [1, 0]])
    enc = encode_endogenous(game, 10)
    assert enc.star_costs.tolist() == [[10, 20], [20, 10]]
    assert enc.labels.tolist() == [[1, 0], [0, 1]]
    assert np.allclose(enc.weights, 0.5)
    with pytest.raises(ValueError):
        encode_endogenous(BimatrixGame([[2]], [[0]]), 10)
    with pytest.raises(ValueError):
        encode_endogenous(game, 1.0)


def test_derived_payoffs_formula():
    game = BimatrixGame([[1, 0]], [[0, 1]])
    derived, offsets = endogenous_payoffs(encode_endogenous(game, 10))
    assert derived.A.tolist() == [[-9, -20]]
    assert np.array_equal(derived.B, game.B)
    assert offsets.tolist() == [-10, -20]


def test_derived_game_keeps_row_best_responses(rng):
    for _ in range(20):
        game = BimatrixGame(rng.integers(0, 2, (3, 4)), rng.integers(0, 2, (3, 4)))
        M = 50.0
        enc = encode_endogenous(game, M)
        derived, _ = endogenous_payoffs(enc)
        shifted = M * game.A + enc.labels
        for j in range(4):
            assert np.argmax(derived.A[:, j]) == np.argmax(shifted[:, j])


def test_nash_transfer(rng):
    for _ in range(10):
        game = BimatrixGame(rng.integers(0, 2, (3, 3)), rng.integers(0, 2, (3, 3)))
        enc = encode_endogenous(game, 100)
        derived, _ = endogenous_payoffs(enc)
        for x, y in support_enum_nash(derived):
            assert verify_approx_nash(game, x, y, 1 / 100 + 1e-9)
