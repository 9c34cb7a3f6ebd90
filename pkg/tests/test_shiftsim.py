"""
Tests for the synthetic generator, test-set construction and shift sweeps
"""

import pytest
import numpy as np
import pandas as pd
import os
import sys

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.realized import counting_metrics, realized_confusion_matrix, root_brier_score
from src.scores import ScoreSet
from src.shiftsim import (
    GeneratorSpec, GroupSpec, LatentLaw, ShiftPools, SweepConfig,
    default_levels, derive_seed, generate_synthetic, mae_report, mix_groups,
    realized_report, resample_prevalence, run_sweep, synthetic_sweep_inputs,
)


@pytest.fixture(scope="module")
def prevalence_inputs():
    """Small generator-backed validation set and pool for prevalence sweeps"""
    return synthetic_sweep_inputs("prevalence", seed=3, pool_size=3000, val_size=1000)


@pytest.fixture(scope="module")
def covariate_inputs():
    return synthetic_sweep_inputs("covariate", seed=3, pool_size=2000, val_size=1000)


class TestLatentLaw:
    """Test latent law parsing"""

    @pytest.mark.parametrize("text,expected", [
        ("uniform", LatentLaw("uniform")),
        ("beta(0.5,0.5)", LatentLaw("beta", 0.5, 0.5)),
        ("Beta( 5 , 2 )", LatentLaw("beta", 5.0, 2.0)),
    ])
    def test_parse(self, text, expected):
        assert LatentLaw.parse(text) == expected

    def test_parse_rejects_unknown(self):
        with pytest.raises(ValueError, match="Cannot parse latent law"):
            LatentLaw.parse("gamma(1,2)")

    def test_non_positive_parameters(self):
        with pytest.raises(ValueError, match="positive"):
            LatentLaw("beta", 0.0, 1.0)

    def test_str_parses_back(self):
        law = LatentLaw("beta", 0.5, 5.0)
        assert LatentLaw.parse(str(law)) == law


class TestGenerator:
    """Test the synthetic score generator"""

    @pytest.mark.unit
    def test_same_seed_same_records(self):
        first = generate_synthetic(GeneratorSpec(n=500, seed=9))
        second = generate_synthetic(GeneratorSpec(n=500, seed=9))
        np.testing.assert_array_equal(first.scores, second.scores)
        np.testing.assert_array_equal(first.labels, second.labels)
        assert first.ids[0] == "s000000"

    def test_different_seed_differs(self):
        first = generate_synthetic(GeneratorSpec(n=100, seed=1))
        second = generate_synthetic(GeneratorSpec(n=100, seed=2))
        assert not np.array_equal(first.scores, second.scores)

    def test_exact_prevalence(self):
        score_set = generate_synthetic(GeneratorSpec(n=1000, prevalence=0.2, seed=3))
        assert int(np.sum(score_set.labels == 1)) == 200

    def test_calibrated_uniform_latent(self, synthetic):
        score_set = synthetic(n=20000, seed=13)
        accuracy = counting_metrics(realized_confusion_matrix(score_set))["accuracy"]
        assert accuracy == pytest.approx(0.75, abs=0.01)
        # E[q(1-q)] = 1/6 for uniform q
        assert root_brier_score(score_set) == pytest.approx(np.sqrt(1 / 6), abs=0.01)

    def test_distortion_sharpens_scores(self):
        calibrated = generate_synthetic(GeneratorSpec(n=2000, seed=4))
        sharpened = generate_synthetic(GeneratorSpec(n=2000, seed=4, distortion=2.0))
        np.testing.assert_array_equal(calibrated.labels, sharpened.labels)
        assert np.mean(np.abs(sharpened.scores - 0.5)) > np.mean(np.abs(calibrated.scores - 0.5))

    def test_groups_tagged(self):
        groups = (GroupSpec(LatentLaw("beta", 0.5, 0.5)), GroupSpec(LatentLaw("beta", 5.0, 5.0), 2.0))
        score_set = generate_synthetic(GeneratorSpec(n=100, groups=groups, majority_fraction=0.7, seed=5))
        assert list(score_set.groups).count("majority") == 70
        assert list(score_set.groups).count("minority") == 30

    @pytest.mark.edge_case
    def test_unreachable_prevalence(self):
        spec = GeneratorSpec(n=200, prevalence=0.99, latent=LatentLaw("beta", 0.05, 20.0), seed=1)
        with pytest.raises(ValueError, match="unreachable"):
            generate_synthetic(spec)

    @pytest.mark.slow
    @pytest.mark.acceptance
    def test_calibrated_generator_at_scale(self):
        score_set = generate_synthetic(GeneratorSpec(n=100000, seed=2024))
        accuracy = counting_metrics(realized_confusion_matrix(score_set))["accuracy"]
        assert abs(accuracy - 0.75) < 0.01
        assert abs(root_brier_score(score_set) - 0.4082) < 0.01


class TestResamplePrevalence:
    """Test prevalence-controlled resampling"""

    @pytest.mark.unit
    def test_exact_class_counts(self, synthetic):
        pool = synthetic(n=2000, seed=21)
        sample = resample_prevalence(pool, 0.05, 1000, seed=1)
        assert len(sample) == 1000
        assert int(np.sum(sample.labels == 1)) == 50
        assert int(np.sum(sample.labels == 0)) == 950

    def test_deterministic(self, synthetic):
        pool = synthetic(n=500, seed=22)
        first = resample_prevalence(pool, 0.3, 100, seed=8)
        second = resample_prevalence(pool, 0.3, 100, seed=8)
        np.testing.assert_array_equal(first.ids, second.ids)

    def test_records_come_from_pool(self, synthetic):
        pool = synthetic(n=300, seed=23)
        sample = resample_prevalence(pool, 0.5, 400, seed=2)
        assert set(sample.ids) <= set(pool.ids)

    @pytest.mark.edge_case
    def test_too_small_sample(self, synthetic):
        with pytest.raises(ValueError, match="n >= 20"):
            resample_prevalence(synthetic(n=100), 0.5, 19, seed=1)

    @pytest.mark.edge_case
    def test_extreme_prevalence_needs_only_one_class(self):
        pool = ScoreSet.from_arrays([0.2, 0.3], labels=[0, 0])
        sample = resample_prevalence(pool, 0.0, 20, seed=1)
        assert np.all(sample.labels == 0)

    def test_missing_class_pool(self):
        pool = ScoreSet.from_arrays([0.2, 0.3], labels=[0, 0])
        with pytest.raises(ValueError, match="positive-class pool is empty"):
            resample_prevalence(pool, 0.5, 20, seed=1)


class TestMixGroups:
    """Test majority/minority mixing"""

    @pytest.mark.unit
    def test_group_counts_and_prevalence(self, covariate_inputs):
        _, pools = covariate_inputs
        mixed = mix_groups(pools.majority, pools.minority, 0.8, 1000, seed=4, reference_prevalence=0.38)
        groups = list(mixed.groups)
        assert groups.count("majority") == 800
        assert groups.count("minority") == 200
        assert int(np.sum(mixed.labels == 1)) == 380

    def test_prevalence_fixed_across_fractions(self, covariate_inputs):
        _, pools = covariate_inputs
        for fraction in (0.0, 0.3, 1.0):
            mixed = mix_groups(pools.majority, pools.minority, fraction, 500, seed=5, reference_prevalence=0.4)
            assert int(np.sum(mixed.labels == 1)) == 200

    def test_order_is_shuffled(self, covariate_inputs):
        _, pools = covariate_inputs
        mixed = mix_groups(pools.majority, pools.minority, 0.5, 200, seed=6)
        assert list(mixed.groups[:100]) != ["majority"] * 100


class TestSeeds:
    """Test per-repetition seed derivation"""

    def test_stable_and_distinct(self):
        assert derive_seed(7, 0, 0) == derive_seed(7, 0, 0)
        seeds = {derive_seed(7, li, rep) for li in range(5) for rep in range(5)}
        assert len(seeds) == 25

    def test_depends_on_master(self):
        assert derive_seed(7, 1, 1) != derive_seed(8, 1, 1)


class TestMaeReport:
    """Test MAE aggregation"""

    @pytest.mark.unit
    def test_mean_absolute_error(self):
        pairs = [
            {"method": "cbpe", "metric": "ppv", "realized": 0.8, "estimated": 0.7},
            {"method": "cbpe", "metric": "ppv", "realized": 0.6, "estimated": 0.7},
        ]
        report = mae_report(pairs)
        assert report.loc[0, "mae"] == pytest.approx(0.1)
        assert report.loc[0, "n_defined"] == 2
        assert report.loc[0, "undefined_count"] == 0

    def test_undefined_pairs_counted(self):
        pairs = [
            {"method": "cbpe", "metric": "recall", "realized": None, "estimated": 0.4},
            {"method": "cbpe", "metric": "recall", "realized": 0.5, "estimated": 0.3},
        ]
        report = mae_report(pairs)
        assert report.loc[0, "mae"] == pytest.approx(0.2)
        assert report.loc[0, "undefined_count"] == 1

    def test_sorted_by_group(self):
        pairs = [
            {"method": "cm_doc", "metric": "ppv", "realized": 0.5, "estimated": 0.5},
            {"method": "cbpe", "metric": "npv", "realized": 0.5, "estimated": 0.6},
        ]
        assert list(mae_report(pairs)["method"]) == ["cbpe", "cm_doc"]

    @pytest.mark.edge_case
    def test_nothing_defined(self):
        pairs = [{"method": "cbpe", "metric": "ppv", "realized": None, "estimated": 0.5}]
        with pytest.raises(ValueError, match="MAE undefined"):
            mae_report(pairs)

    def test_empty_input(self):
        with pytest.raises(ValueError, match="at least one"):
            mae_report([])

    def test_missing_columns(self):
        with pytest.raises(ValueError, match="lacks columns: method"):
            mae_report(pd.DataFrame({"metric": ["ppv"], "realized": [0.1], "estimated": [0.2]}))


class TestRealizedReport:
    """Test realized metrics of constructed test sets"""

    def test_single_class_auc_undefined(self):
        report = realized_report(ScoreSet.from_arrays([0.2, 0.7], labels=[0, 0]))
        assert report["auc"] is None
        assert report["recall"] is None
        assert report["specificity"] == 0.5


class TestSweepConfig:
    """Test sweep settings validation"""

    def test_default_levels(self):
        assert SweepConfig("prevalence").levels == tuple(default_levels("prevalence"))
        assert len(default_levels("prevalence")) == 19
        assert default_levels("covariate")[0] == 0.0 and default_levels("covariate")[-1] == 1.0

    def test_levels_must_increase(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            SweepConfig("prevalence", levels=(0.5, 0.2))

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="Unknown sweep kind"):
            SweepConfig("label")


class TestSweep:
    """Test repeated shift sweeps"""

    @pytest.mark.integration
    def test_prevalence_sweep_shape(self, prevalence_inputs):
        val, pools = prevalence_inputs
        config = SweepConfig("prevalence", levels=(0.2, 0.5, 0.8), repetitions=2, n=200, include_auc=False)
        result = run_sweep("prevalence", config, val, pools, methods=["cbpe", "cm_doc"])
        assert result.axis == [0.2, 0.5, 0.8]
        assert result.methods == ("cbpe", "cm_doc")
        assert all(level.repetitions == 2 for level in result.levels)
        long_frame = result.to_long_frame()
        assert set(long_frame["level"]) == {0.2, 0.5, 0.8}
        assert "auc" not in set(long_frame["metric"])

    def test_worker_count_does_not_change_results(self, prevalence_inputs):
        val, pools = prevalence_inputs
        config = SweepConfig("prevalence", levels=(0.3, 0.6), repetitions=3, n=150, methods=("cbpe", "atc"))
        serial = run_sweep("prevalence", config, val, pools)
        threaded = run_sweep("prevalence", SweepConfig(
            "prevalence", levels=(0.3, 0.6), repetitions=3, n=150, methods=("cbpe", "atc"), workers=4
        ), val, pools)
        pd.testing.assert_frame_equal(serial.to_long_frame(), threaded.to_long_frame())

    def test_realized_prevalence_follows_levels(self, prevalence_inputs):
        val, pools = prevalence_inputs
        config = SweepConfig("prevalence", levels=(0.1, 0.9), repetitions=1, n=100, methods=("cbpe",))
        sweep = run_sweep("prevalence", config, val, pools)
        low, high = sweep.levels
        assert low.realized["npv"] > high.realized["npv"]
        assert low.realized["ppv"] < high.realized["ppv"]

    @pytest.mark.edge_case
    def test_degenerate_levels_recorded_as_undefined(self, prevalence_inputs):
        val, pools = prevalence_inputs
        config = SweepConfig("prevalence", levels=(0.0, 0.5), repetitions=1, n=50, methods=("cbpe",))
        result = run_sweep("prevalence", config, val, pools)
        zero = result.levels[0]
        assert zero.realized["recall"] is None
        assert zero.realized["auc"] is None
        summary = result.summary_frame()
        recall = summary[(summary["level"] == 0.0) & (summary["metric"] == "recall")]
        assert int(recall["undefined_count"].iloc[0]) == 1

    def test_covariate_sweep_tags_levels(self, covariate_inputs):
        val, pools = covariate_inputs
        config = SweepConfig("covariate", levels=(0.0, 1.0), repetitions=1, n=200, methods=("cm_atc",),
                             reference_prevalence=0.4, include_auc=False)
        result = run_sweep("covariate", config, val, pools)
        assert result.kind == "covariate"
        assert result.mae_frame()["method"].unique().tolist() == ["cm_atc"]

    def test_missing_pool(self, prevalence_inputs):
        val, _ = prevalence_inputs
        with pytest.raises(ValueError, match="prevalence sweep needs a labelled pool"):
            run_sweep("prevalence", SweepConfig("prevalence", repetitions=1), val, ShiftPools())

    def test_synthetic_inputs_deterministic(self):
        first_val, first_pools = synthetic_sweep_inputs("prevalence", seed=5, pool_size=200, val_size=100)
        second_val, second_pools = synthetic_sweep_inputs("prevalence", seed=5, pool_size=200, val_size=100)
        np.testing.assert_array_equal(first_val.scores, second_val.scores)
        np.testing.assert_array_equal(first_pools.pool.scores, second_pools.pool.scores)
        assert first_val.prevalence() == pytest.approx(0.38, abs=0.01)
