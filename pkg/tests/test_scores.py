"""
Tests for the score data model, ingestion and prediction splitting
"""

import pytest
import numpy as np
import os
import sys

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..'))

from src.scores import (
    ScoreRecord, ScoreSet, ScoreValidationError, PredictionSplit,
    load_scores, write_scores, predicted_confidence, predicted_confidences,
    split_predictions, stable_mean,
)


class TestScoreRecord:
    """Test single record validation"""

    def test_valid_record(self):
        record = ScoreRecord("a", 0.9, 1, "majority")
        assert record.raw_score == 0.9
        assert record.label == 1

    def test_score_out_of_range_rejected(self):
        with pytest.raises(ScoreValidationError, match="outside"):
            ScoreRecord("a", 1.5)

    def test_label_must_be_binary(self):
        with pytest.raises(ScoreValidationError, match="not 0 or 1"):
            ScoreRecord("a", 0.5, 2)


class TestScoreSet:
    """Test ScoreSet construction and derivations"""

    @pytest.mark.unit
    def test_from_arrays_labelled(self):
        score_set = ScoreSet.from_arrays([0.9, 0.2], labels=[1, 0], ids=["a", "b"])
        assert len(score_set) == 2
        assert score_set.labelled
        assert score_set.threshold == 0.5
        assert list(score_set.ids) == ["a", "b"]

    def test_partially_labelled_is_not_labelled(self):
        score_set = ScoreSet.from_arrays([0.9, 0.2], labels=[1, None])
        assert not score_set.labelled
        with pytest.raises(ValueError, match="not fully labelled"):
            score_set.require_labels()

    def test_empty_set_rejected_for_metrics(self):
        with pytest.raises(ValueError, match="Empty score set"):
            ScoreSet.from_arrays([]).require_labels()

    def test_invalid_threshold_rejected(self):
        with pytest.raises(ScoreValidationError, match="threshold"):
            ScoreSet.from_arrays([0.5], threshold=1.2)

    def test_out_of_range_message_is_plain(self):
        with pytest.raises(ScoreValidationError) as excinfo:
            ScoreSet.from_arrays([0.5, 1.25], ids=["a", "b"])
        assert str(excinfo.value) == "score 1.25 for id 'b' outside [0, 1]"

    def test_arrays_are_read_only(self):
        score_set = ScoreSet.from_arrays([0.9, 0.2], labels=[1, 0])
        with pytest.raises(ValueError):
            score_set.scores[0] = 0.1

    def test_records_round_trip(self):
        records = [ScoreRecord("a", 0.9, 1, None), ScoreRecord("b", 0.3, None, "minority")]
        score_set = ScoreSet.from_records(records)
        assert score_set.records == records

    def test_subset_and_select_group(self, grouped_set):
        minority = grouped_set.select_group("minority")
        assert len(minority) == 20
        assert set(minority.groups) == {"minority"}
        repeated = grouped_set.subset([0, 0, 1])
        assert list(repeated.ids) == [grouped_set.ids[0], grouped_set.ids[0], grouped_set.ids[1]]

    def test_with_threshold_keeps_records(self, tiny_val):
        moved = tiny_val.with_threshold(0.3)
        assert moved.threshold == 0.3
        np.testing.assert_array_equal(moved.scores, tiny_val.scores)
        assert moved.scores is tiny_val.scores
        assert not moved.scores.flags.writeable

    def test_with_threshold_rejects_out_of_range(self, tiny_val):
        with pytest.raises(ScoreValidationError, match="threshold 1.5 outside"):
            tiny_val.with_threshold(1.5)

    def test_concat_keeps_order(self):
        first = ScoreSet.from_arrays([0.1], labels=[0], ids=["x"])
        second = ScoreSet.from_arrays([0.9], labels=[1], ids=["y"])
        joined = ScoreSet.concat([first, second])
        assert list(joined.ids) == ["x", "y"]
        assert joined.prevalence() == 0.5


class TestPredictedConfidence:
    """Test predicted-class confidence"""

    @pytest.mark.parametrize("raw_score,expected", [(0.9, 0.9), (0.2, 0.8), (0.5, 0.5)])
    def test_examples(self, raw_score, expected):
        assert predicted_confidence(raw_score, 0.5) == pytest.approx(expected)

    def test_vectorised_matches_scalar(self, rng):
        scores = rng.random(50)
        vectorised = predicted_confidences(scores, 0.3)
        assert list(vectorised) == [predicted_confidence(s, 0.3) for s in scores]


class TestSplitPredictions:
    """Test the positive/negative prediction partition"""

    @pytest.mark.unit
    def test_basic_split(self):
        split = split_predictions(ScoreSet.from_arrays([0.9, 0.4, 0.5]))
        np.testing.assert_allclose(split.positives, [0.9, 0.5])
        np.testing.assert_allclose(split.negatives, [0.6])
        assert (split.n_pos, split.n_neg) == (2, 1)

    @pytest.mark.edge_case
    def test_all_negative(self):
        split = split_predictions(ScoreSet.from_arrays([0.1, 0.2]))
        assert split.n_pos == 0
        assert split.positives.size == 0

    @pytest.mark.edge_case
    def test_zero_threshold_sends_all_positive(self):
        split = split_predictions(ScoreSet.from_arrays([0.3], threshold=0.0))
        np.testing.assert_allclose(split.positives, [0.3])
        assert split.n_neg == 0

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            split_predictions(ScoreSet.from_arrays([]))

    def test_labels_carried_and_predictive_values(self, tiny_val):
        split = split_predictions(tiny_val)
        assert split.labelled
        assert split.realized_ppv() == pytest.approx(0.8)
        assert split.realized_npv() == pytest.approx(0.8)

    def test_partial_labels_not_carried(self):
        split = split_predictions(ScoreSet.from_arrays([0.9, 0.1], labels=[1, None]))
        assert not split.labelled
        with pytest.raises(ValueError):
            split.realized_ppv()

    def test_empty_side_predictive_value_undefined(self):
        split = split_predictions(ScoreSet.from_arrays([0.1, 0.2], labels=[0, 1]))
        assert split.realized_ppv() is None
        assert split.realized_npv() == pytest.approx(0.5)

    @pytest.mark.property
    def test_partition_properties(self, rng):
        for _ in range(200):
            n = int(rng.integers(1, 40))
            t = float(rng.random())
            score_set = ScoreSet.from_arrays(rng.random(n), threshold=t)
            split = split_predictions(score_set)
            again = split_predictions(score_set)
            assert split.n_pos + split.n_neg == n
            np.testing.assert_array_equal(split.positives, again.positives)
            np.testing.assert_array_equal(split.negatives, again.negatives)
            assert np.all(split.positives >= t)
            assert np.all(1.0 - split.negatives < t + 1e-12)

    def test_confidences_pool_both_sides(self):
        split = PredictionSplit(np.array([0.9]), np.array([0.7, 0.6]), 0.5)
        np.testing.assert_allclose(split.confidences, [0.9, 0.7, 0.6])


class TestStableMean:
    """Test order-independent mean"""

    def test_permutation_invariant(self, rng):
        values = rng.random(1001)
        assert stable_mean(values) == stable_mean(rng.permutation(values))


class TestLoadScores:
    """Test CSV and JSONL ingestion"""

    @pytest.mark.unit
    def test_load_csv(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score,label\na,0.9,1\nb,0.2,0\n")
        score_set = load_scores(path)
        assert len(score_set) == 2
        assert score_set.labelled
        assert list(score_set.labels) == [1, 0]

    def test_column_order_free_and_extra_columns_ignored(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("note,label,score,id\nx,1,0.75,a\r\ny,0,0.25,b\r\n")
        score_set = load_scores(path)
        assert list(score_set.ids) == ["a", "b"]
        np.testing.assert_allclose(score_set.scores, [0.75, 0.25])

    def test_score_out_of_range_names_line(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score\na,0.5\nb,1.5\n")
        with pytest.raises(ScoreValidationError, match="line 3") as excinfo:
            load_scores(path)
        assert excinfo.value.line == 3

    @pytest.mark.edge_case
    def test_blank_line_keeps_physical_line_numbers(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score\na,0.9\n\nb,1.5\n")
        with pytest.raises(ScoreValidationError) as excinfo:
            load_scores(path)
        assert excinfo.value.line == 4
        assert str(excinfo.value) == "line 4: score 1.5 outside [0, 1]"

    def test_blank_lines_are_skipped(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score\n\na,0.9\n\nb,0.2\n\n")
        assert list(load_scores(path).ids) == ["a", "b"]

    def test_full_precision_scores_load_exactly(self, tmp_path, rng):
        values = rng.random(200)
        path = tmp_path / "scores.csv"
        path.write_text("id,score\n" + "".join(f"r{i},{value!r}\n" for i, value in enumerate(values)))
        np.testing.assert_array_equal(load_scores(path).scores, values)

    def test_non_numeric_score(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score\na,high\n")
        with pytest.raises(ScoreValidationError, match="line 2: score 'high' is not a number"):
            load_scores(path)

    def test_bad_label(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score,label\na,0.5,yes\n")
        with pytest.raises(ScoreValidationError, match="not 0 or 1"):
            load_scores(path)

    def test_missing_column(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,prob\na,0.5\n")
        with pytest.raises(ScoreValidationError, match="missing required column 'score'"):
            load_scores(path)

    @pytest.mark.edge_case
    def test_empty_file(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("")
        with pytest.raises(ScoreValidationError, match="empty file"):
            load_scores(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="missing.csv"):
            load_scores(tmp_path / "missing.csv")

    def test_load_jsonl(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        path.write_text('{"id":"a","score":0.7}\n\n{"id":"b","score":0.1,"group":"minority"}\n')
        score_set = load_scores(path)
        assert len(score_set) == 2
        assert not score_set.labelled
        assert score_set.groups[1] == "minority"

    def test_jsonl_malformed_line(self, tmp_path):
        path = tmp_path / "scores.jsonl"
        path.write_text('{"id":"a","score":0.7}\n{"id":\n')
        with pytest.raises(ScoreValidationError, match="line 2"):
            load_scores(path)

    def test_threshold_from_caller(self, tmp_path):
        path = tmp_path / "scores.csv"
        path.write_text("id,score\na,0.5\n")
        assert load_scores(path, threshold=0.3).threshold == 0.3

    def test_write_then_load_preserves_values(self, tmp_path, grouped_set):
        path = write_scores(grouped_set, tmp_path / "out" / "scores.csv")
        loaded = load_scores(path)
        np.testing.assert_array_equal(loaded.scores, grouped_set.scores)
        np.testing.assert_array_equal(loaded.labels, grouped_set.labels)
        assert list(loaded.groups) == list(grouped_set.groups)
        assert path.read_bytes().count(b"\r\n") == 0

    def test_write_unlabelled_has_no_label_column(self, tmp_path, tiny_test):
        path = write_scores(tiny_test, tmp_path / "scores.csv")
        assert path.read_text().splitlines()[0] == "id,score"
