"""Tests for group means, population estimates, and individual predictions."""

import io

import numpy as np
import pytest

from rcr_design.estimation import (
    ObservationSet,
    blue,
    blup,
    group_means,
    parse_observations,
    predict_from_means,
    read_observations_csv,
    write_predictions_csv,
)
from rcr_design.model import ExactDesign, ModelConfig


def obs_from_rows(design, rows):
    return ObservationSet(design, np.asarray(rows, dtype=float))


class TestGroupMeans:
    def test_two_replicates(self):
        obs = obs_from_rows(ExactDesign(n=1, m=1, J=2), [[3, 5], [1, 1]])
        grp, ind = group_means(obs)
        np.testing.assert_allclose(grp, [4.0, 1.0])
        np.testing.assert_allclose(ind, [4.0, 1.0])

    def test_two_individuals_per_group(self):
        obs = obs_from_rows(ExactDesign(n=2, m=1, J=2), [[4], [2], [1]])
        grp, _ = group_means(obs)
        np.testing.assert_allclose(grp, [3.0, 1.0])

    def test_constant_data(self):
        obs = obs_from_rows(ExactDesign(n=2, m=2, J=3), 5.5 * np.ones((6, 3)))
        grp, ind = group_means(obs)
        np.testing.assert_allclose(grp, 5.5)
        np.testing.assert_allclose(ind, 5.5)


class TestBlue:
    def test_minimal_example(self):
        obs = obs_from_rows(ExactDesign(n=1, m=1, J=2), [[3], [1]])
        estimate = blue(obs)
        assert estimate.mu_hat == 1.0
        np.testing.assert_allclose(estimate.alpha_hat, [2.0])

    def test_three_groups(self):
        obs = obs_from_rows(ExactDesign(n=1, m=1, J=3), [[5], [4], [2]])
        estimate = blue(obs)
        assert estimate.mu_hat == 2.0
        np.testing.assert_allclose(estimate.alpha_hat, [3.0, 2.0])


class TestBlup:
    def test_two_group_shrinkage_example(self):
        design = ExactDesign(n=2, m=1, J=2)
        obs = obs_from_rows(design, [[4], [2], [1]])
        cfg = ModelConfig(J=2, N=3, K=1, u=1, v=1)
        prediction = blup(obs, cfg)
        np.testing.assert_allclose(
            prediction.alpha_hat[:, 0], [7 / 3, 5 / 3, 2.0], rtol=1e-14
        )
        np.testing.assert_allclose(
            prediction.mu_hat, [4 / 3, 2 / 3, 1.0], rtol=1e-14
        )

    def test_constant_data(self):
        design = ExactDesign(n=2, m=2, J=3)
        obs = obs_from_rows(design, 3.25 * np.ones((6, 2)))
        cfg = ModelConfig(J=3, N=6, K=2, u=0.7, v=1.3)
        prediction = blup(obs, cfg)
        np.testing.assert_allclose(prediction.mu_hat, 3.25, rtol=1e-14)
        np.testing.assert_allclose(prediction.alpha_hat, 0.0, atol=1e-14)

    def test_large_intercept_variance_removes_control_shrinkage(self):
        design = ExactDesign(n=1, m=3, J=2)
        obs = obs_from_rows(design, [[5.0], [2.0], [4.0], [9.0]])
        cfg = ModelConfig(J=2, N=4, K=1, u=1e8, v=1.0)
        prediction = blup(obs, cfg)
        np.testing.assert_allclose(prediction.mu_hat[1:], [2.0, 4.0, 9.0], atol=1e-6)

    def test_own_group_average_recovers_population_estimate(self):
        rng = np.random.default_rng(7)
        design = ExactDesign(n=4, m=3, J=3)
        cfg = ModelConfig(J=3, N=11, K=2, u=0.6, v=1.8)
        obs = obs_from_rows(design, rng.normal(size=(11, 2)))
        estimate = blue(obs)
        prediction = blup(obs, cfg)
        groups = design.group_index()
        for j in (1, 2):
            own = prediction.alpha_hat[groups == j, j - 1]
            assert own.mean() == pytest.approx(estimate.alpha_hat[j - 1], abs=1e-12)

    def test_own_group_prediction_is_convex_combination(self):
        rng = np.random.default_rng(11)
        design = ExactDesign(n=5, m=4, J=2)
        cfg = ModelConfig(J=2, N=9, K=3, u=0.5, v=2.0)
        K, u, v = cfg.K, cfg.u, cfg.v
        # the two shrinkage coefficients form a partition of one
        assert (K * v + K * u + 1) / (K * (v + u) + 1) == pytest.approx(1.0, rel=1e-15)
        obs = obs_from_rows(design, rng.normal(size=(9, 3)))
        prediction = blup(obs, cfg)
        grp = obs.group_means()
        ind = obs.individual_means()
        for i in range(design.n):
            anchors = sorted([ind[i] - grp[-1], grp[0] - grp[-1]])
            assert anchors[0] - 1e-12 <= prediction.alpha_hat[i, 0] <= anchors[1] + 1e-12

    def test_foreign_group_prediction_equals_population_estimate(self):
        rng = np.random.default_rng(3)
        design = ExactDesign(n=2, m=2, J=3)
        cfg = ModelConfig(J=3, N=6, K=2, u=1.0, v=1.0)
        obs = obs_from_rows(design, rng.normal(size=(6, 2)))
        estimate = blue(obs)
        prediction = blup(obs, cfg)
        # group-2 individuals inherit the population estimate of treatment 1
        np.testing.assert_allclose(
            prediction.alpha_hat[2:4, 0], estimate.alpha_hat[0], rtol=1e-14
        )
        # control individuals inherit both population estimates
        np.testing.assert_allclose(
            prediction.alpha_hat[4:], np.tile(estimate.alpha_hat, (2, 1)), rtol=1e-14
        )

    def test_config_mismatch_rejected(self):
        obs = obs_from_rows(ExactDesign(n=1, m=1, J=2), [[3], [1]])
        with pytest.raises(ValueError, match="does not match"):
            blup(obs, ModelConfig(J=2, N=2, K=2, u=1, v=1))

    def test_batched_prediction_matches_loop(self):
        rng = np.random.default_rng(5)
        design = ExactDesign(n=3, m=2, J=3)
        cfg = ModelConfig(J=3, N=8, K=2, u=0.9, v=1.4)
        batch = rng.normal(size=(4, 8))
        grp = np.stack([
            ObservationSet(design, np.repeat(row[:, None], 2, axis=1)).group_means()
            for row in batch
        ])
        mu, alpha = predict_from_means(batch, grp, design, cfg.K, cfg.u, cfg.v)
        for r in range(4):
            obs = ObservationSet(design, np.repeat(batch[r][:, None], 2, axis=1))
            single = blup(obs, cfg)
            np.testing.assert_allclose(mu[r], single.mu_hat, rtol=1e-14)
            np.testing.assert_allclose(alpha[r], single.alpha_hat, rtol=1e-14)


class TestObservationSet:
    def test_row_count_checked(self):
        with pytest.raises(ValueError, match="expected 3 individuals"):
            ObservationSet(ExactDesign(n=2, m=1, J=2), np.ones((2, 1)))

    def test_values_are_frozen(self):
        obs = obs_from_rows(ExactDesign(n=1, m=1, J=2), [[3], [1]])
        with pytest.raises(ValueError):
            obs.values[0, 0] = 0.0


def long_rows(design, values):
    """Expand an (N, K) array into long-form rows with a header."""
    rows = [list(map(str, ("group", "individual", "replicate", "value")))]
    groups = design.group_index()
    for i in range(values.shape[0]):
        for k in range(values.shape[1]):
            rows.append([str(groups[i]), str(i + 1), str(k + 1), repr(float(values[i, k]))])
    return rows


class TestParseObservations:
    def test_round_trip(self):
        rng = np.random.default_rng(13)
        design = ExactDesign(n=2, m=3, J=3)
        values = rng.normal(size=(7, 2))
        obs = parse_observations(long_rows(design, values))
        assert obs.design == design
        np.testing.assert_allclose(obs.values, values)

    def test_rows_may_arrive_shuffled(self):
        rng = np.random.default_rng(17)
        design = ExactDesign(n=2, m=1, J=2)
        values = rng.normal(size=(3, 2))
        rows = long_rows(design, values)
        header, data = rows[0], rows[1:]
        rng.shuffle(data)
        obs = parse_observations([header] + data)
        np.testing.assert_allclose(obs.values, values)

    def test_header_required(self):
        with pytest.raises(ValueError, match="expected header"):
            parse_observations([["g", "i", "r", "v"], ["1", "1", "1", "0.0"]])

    def test_missing_replicate(self):
        design = ExactDesign(n=1, m=1, J=2)
        rows = long_rows(design, np.ones((2, 2)))
        del rows[-1]
        with pytest.raises(ValueError, match="missing replicate 2 for individual 2"):
            parse_observations(rows)

    def test_duplicate_cell(self):
        design = ExactDesign(n=1, m=1, J=2)
        rows = long_rows(design, np.ones((2, 1)))
        rows.append(rows[-1])
        with pytest.raises(ValueError, match="duplicate"):
            parse_observations(rows)

    def test_unequal_treatment_groups(self):
        rows = [
            ["group", "individual", "replicate", "value"],
            ["1", "1", "1", "1.0"],
            ["1", "2", "1", "1.0"],
            ["2", "3", "1", "1.0"],
            ["3", "4", "1", "1.0"],
        ]
        with pytest.raises(ValueError, match="share one size"):
            parse_observations(rows)

    def test_block_numbering_enforced(self):
        rows = [
            ["group", "individual", "replicate", "value"],
            ["2", "1", "1", "1.0"],
            ["1", "2", "1", "1.0"],
        ]
        with pytest.raises(ValueError, match="block numbering"):
            parse_observations(rows)

    def test_individual_gap_detected(self):
        rows = [
            ["group", "individual", "replicate", "value"],
            ["1", "1", "1", "1.0"],
            ["2", "3", "1", "1.0"],
        ]
        with pytest.raises(ValueError, match="numbered 1..N"):
            parse_observations(rows)

    def test_bad_number_reported_with_line(self):
        rows = [
            ["group", "individual", "replicate", "value"],
            ["1", "1", "1", "abc"],
        ]
        with pytest.raises(ValueError, match="line 2"):
            parse_observations(rows)

    def test_csv_file_round_trip(self, tmp_path):
        design = ExactDesign(n=1, m=2, J=2)
        values = np.array([[1.5, 2.5], [0.5, 0.25], [4.0, 8.0]])
        path = tmp_path / "obs.csv"
        path.write_text("\n".join(",".join(r) for r in long_rows(design, values)) + "\n")
        obs = read_observations_csv(path)
        np.testing.assert_allclose(obs.values, values)


class TestWritePredictions:
    def test_csv_layout(self):
        design = ExactDesign(n=1, m=1, J=3)
        obs = obs_from_rows(design, [[5], [4], [2]])
        cfg = ModelConfig(J=3, N=3, K=1, u=1, v=1)
        prediction = blup(obs, cfg)
        out = io.StringIO()
        write_predictions_csv(prediction, design, out)
        lines = out.getvalue().strip().splitlines()
        assert lines[0] == "individual,group,mu_hat,alpha_1,alpha_2"
        assert len(lines) == 4
        first = lines[1].split(",")
        assert first[0] == "1" and first[1] == "1"
