"""Tests for the mixed-model oracle, numeric eigensolver, and Monte Carlo."""

import numpy as np
import pytest

from rcr_design.estimation import ObservationSet, blue, blup
from rcr_design.model import ExactDesign, MixedModelSystem, ModelConfig, build_system
from rcr_design.moments import cov_blue, mse_blup
from rcr_design.oracle import (
    blue_covariance_from_partition,
    frobenius_distance,
    henderson_mse,
    henderson_solve,
    henderson_solve_joint,
    mixed_equation_residual,
    numeric_eigs,
    partitioned_mse_closed_form,
    prediction_mse_from_partition,
    run_eigen_checks,
    run_oracle_checks,
    simulate_mse,
)

UNIT = ModelConfig(J=2, N=2, K=1, u=1, v=1)
UNIT_DESIGN = ExactDesign(n=1, m=1, J=2)


def small_grid():
    """A reduced config grid for fast oracle-style tests."""
    grid = []
    for J, n, m, K, u, v in [
        (2, 1, 1, 1, 1.0, 1.0), (2, 2, 3, 2, 0.5, 2.0), (2, 3, 1, 3, 2.0, 0.5),
        (3, 1, 2, 2, 1.0, 0.5), (3, 2, 2, 1, 2.0, 2.0),
        (4, 2, 1, 2, 0.5, 1.0), (4, 1, 3, 1, 1.0, 2.0),
    ]:
        design = ExactDesign(n=n, m=m, J=J)
        grid.append((ModelConfig(J=J, N=design.N, K=K, u=u, v=v, sigma2=1.5), design))
    return grid


class TestHendersonSolve:
    def test_hand_solvable_system(self):
        system = build_system(UNIT, UNIT_DESIGN, y=[3.0, 1.0])
        solution = henderson_solve(system)
        np.testing.assert_allclose(solution.beta_hat, [1.0, 2.0], atol=1e-12)

    def test_constant_data(self):
        design = ExactDesign(n=2, m=3, J=3)
        cfg = ModelConfig(J=3, N=7, K=2, u=0.5, v=2.0)
        system = build_system(cfg, design, y=4.5 * np.ones(14))
        solution = henderson_solve(system)
        np.testing.assert_allclose(solution.beta_hat, [4.5, 0.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(solution.gamma_hat, 0.0, atol=1e-12)

    def test_matches_closed_forms_on_grid(self):
        rng = np.random.default_rng(23)
        for cfg, design in small_grid():
            system = build_system(cfg, design)
            for _ in range(2):
                y = rng.normal(size=cfg.N * cfg.K)
                solution = henderson_solve(system.with_observations(y))
                obs = ObservationSet(design, y.reshape(cfg.N, cfg.K))
                estimate = blue(obs)
                prediction = blup(obs, cfg)
                beta = np.concatenate([[estimate.mu_hat], estimate.alpha_hat])
                zeta = (np.column_stack([prediction.mu_hat, prediction.alpha_hat])
                        - beta).reshape(-1)
                np.testing.assert_allclose(solution.beta_hat, beta, atol=1e-10)
                np.testing.assert_allclose(solution.gamma_hat, zeta, atol=1e-10)

    def test_joint_solve_agrees(self):
        rng = np.random.default_rng(29)
        for cfg, design in small_grid():
            y = rng.normal(size=cfg.N * cfg.K)
            system = build_system(cfg, design, y=y)
            two_step = henderson_solve(system)
            joint = henderson_solve_joint(system)
            np.testing.assert_allclose(joint.beta_hat, two_step.beta_hat, atol=1e-10)
            np.testing.assert_allclose(joint.gamma_hat, two_step.gamma_hat, atol=1e-10)

    def test_normal_equation_residual(self):
        rng = np.random.default_rng(31)
        cfg, design = small_grid()[3]
        system = build_system(cfg, design, y=rng.normal(size=cfg.N * cfg.K))
        assert mixed_equation_residual(system, henderson_solve(system)) <= 1e-9

    def test_observations_required(self):
        system = build_system(UNIT, UNIT_DESIGN)
        with pytest.raises(ValueError, match="no observation vector"):
            henderson_solve(system)

    def test_rank_deficient_design_reported(self):
        # duplicated fixed-effect column
        system = MixedModelSystem(
            X=np.ones((2, 2)), Z=np.eye(2), G=np.eye(2), R=np.eye(2), Y=np.ones(2)
        )
        with pytest.raises(np.linalg.LinAlgError, match="rank deficient"):
            henderson_solve(system)

    def test_ill_conditioned_covariance_reported(self):
        system = MixedModelSystem(
            X=np.array([[1.0], [1.0]]), Z=np.eye(2), G=np.diag([1.0, 1e-14]),
            R=np.diag([1.0, 1e-14]), Y=np.ones(2),
        )
        with pytest.raises(np.linalg.LinAlgError, match="condition"):
            henderson_solve(system)


class TestHendersonMse:
    def test_projected_blocks_match_closed_forms(self):
        for cfg, design in small_grid():
            parts = henderson_mse(build_system(cfg, design))
            cov = cov_blue(cfg, design.n, design.m).entries
            np.testing.assert_allclose(
                blue_covariance_from_partition(parts, cfg.J), cov,
                atol=1e-10 * np.abs(cov).max(),
            )
            mse = mse_blup(cfg, design.n, design.m).entries
            np.testing.assert_allclose(
                prediction_mse_from_partition(parts, cfg.J, cfg.N), mse,
                atol=1e-10 * np.abs(mse).max(),
            )

    def test_minimal_prediction_mse(self):
        parts = henderson_mse(build_system(UNIT, UNIT_DESIGN))
        np.testing.assert_allclose(
            prediction_mse_from_partition(parts, 2, 2), [[4.0, 4.0], [4.0, 6.0]],
            atol=1e-12,
        )

    def test_printed_blocks_match_generic_formulas(self):
        for cfg, design in small_grid():
            generic = henderson_mse(build_system(cfg, design))
            closed = partitioned_mse_closed_form(cfg, design)
            scale = np.abs(generic.assembled()).max()
            np.testing.assert_allclose(closed.c11, generic.c11, atol=1e-10 * scale)
            np.testing.assert_allclose(closed.c12, generic.c12, atol=1e-10 * scale)
            np.testing.assert_allclose(closed.c22, generic.c22, atol=1e-10 * scale)

    def test_assembled_partition_is_symmetric_psd(self):
        cfg, design = small_grid()[1]
        full = henderson_mse(build_system(cfg, design)).assembled()
        np.testing.assert_allclose(full, full.T, atol=1e-10)
        assert np.linalg.eigvalsh(full).min() >= -1e-9 * np.abs(full).max()


class TestNumericEigs:
    def test_two_by_two(self):
        spectrum = numeric_eigs(np.array([[2.0, 0.75], [0.75, 2.0]]))
        np.testing.assert_allclose(spectrum.values, [2.75, 1.25], rtol=1e-12)

    def test_identity_multiplicity(self):
        spectrum = numeric_eigs(np.eye(3))
        np.testing.assert_allclose(spectrum.values, [1.0])
        np.testing.assert_array_equal(spectrum.multiplicities, [3])

    def test_mse_example_to_four_decimals(self):
        spectrum = numeric_eigs(np.array([[4.0, 4.0], [4.0, 6.0]]))
        assert spectrum.values[0] == pytest.approx(9.1231, abs=5e-5)
        assert spectrum.values[1] == pytest.approx(0.8769, abs=5e-5)

    def test_accepts_moment_matrix(self):
        spectrum = numeric_eigs(cov_blue(ModelConfig(J=3, N=6, K=2, u=1, v=1), 2, 2))
        np.testing.assert_allclose(spectrum.values, [2.75, 1.25], rtol=1e-12)

    def test_rejects_asymmetric_input(self):
        with pytest.raises(ValueError, match="not symmetric"):
            numeric_eigs(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError, match="square"):
            numeric_eigs(np.ones((2, 3)))


class TestSimulateMse:
    CFG = ModelConfig(J=2, N=6, K=2, u=1, v=1)
    DESIGN = ExactDesign(n=3, m=3, J=2)

    def test_same_seed_is_bit_identical(self):
        a = simulate_mse(self.CFG, self.DESIGN, reps=50, seed=7)
        b = simulate_mse(self.CFG, self.DESIGN, reps=50, seed=7)
        np.testing.assert_array_equal(a.second_moment.entries, b.second_moment.entries)
        np.testing.assert_array_equal(a.mean_error, b.mean_error)

    def test_different_seed_differs(self):
        a = simulate_mse(self.CFG, self.DESIGN, reps=50, seed=7)
        b = simulate_mse(self.CFG, self.DESIGN, reps=50, seed=8)
        assert np.abs(a.second_moment.entries - b.second_moment.entries).max() > 0

    def test_single_replicate_gives_rank_one(self):
        result = simulate_mse(self.CFG, self.DESIGN, reps=1, seed=3)
        entries = result.second_moment.entries
        np.testing.assert_allclose(entries, entries.T, atol=1e-12)
        assert np.linalg.matrix_rank(entries) == 1

    def test_converges_to_theory(self):
        result = simulate_mse(self.CFG, self.DESIGN, reps=4000, seed=11)
        theory = mse_blup(self.CFG, 3, 3)
        assert frobenius_distance(result.second_moment, theory) < 0.1

    def test_invalid_reps(self):
        with pytest.raises(ValueError, match="replicate"):
            simulate_mse(self.CFG, self.DESIGN, reps=0, seed=1)

    def test_mismatched_design(self):
        with pytest.raises(ValueError, match="inconsistent"):
            simulate_mse(self.CFG, ExactDesign(n=2, m=2, J=2), reps=10, seed=1)


class TestCheckRunners:
    def test_oracle_checks_pass_on_reduced_grid(self):
        results = run_oracle_checks(grid=small_grid(), datasets_per_config=2)
        assert all(c.passed for c in results)
        names = [c.name for c in results]
        assert len(names) == len(set(names)) == 6

    def test_eigen_checks_pass_on_reduced_grid(self):
        results = run_eigen_checks(grid=small_grid())
        assert all(c.passed for c in results)
        assert results[0].cases == len(small_grid())
