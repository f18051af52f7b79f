"""Tests for yearly runs, scaling, comparison and report files."""

import json

import numpy as np
import pandas as pd
import pytest
from scipy.stats import kendalltau

from models.enums import Movement, TargetMode
from models.errors import DegenerateScores, InvalidInput, ParseError, ReportWriteError
from models.schemas import NetworkConfig
from services import target
from services.pipeline import (
    COMPARISON_COLUMNS,
    YearState,
    compare,
    emit_reports,
    rank_scores,
    read_reference,
    run_year,
    scale_scores,
    stage,
)
from services.ranknet import init_model

FIVE_FILES = ["scores.csv", "ranking.csv", "targets.csv", "loss_history.csv", "comparison.csv"]


@pytest.fixture
def schema_file(write_schema, schema3):
    return write_schema(schema3)


@pytest.fixture
def year_state(random_cluster_state):
    """Hand-made YearState from scaled scores (ranks derived, one cluster)."""
    def _make(label, ids, scaled):
        scaled = np.asarray(scaled, dtype=float)
        cs = random_cluster_state(np.random.default_rng(0), len(ids), 1, entity_ids=ids)
        return YearState(
            year_label=label,
            entity_ids=tuple(ids),
            cluster_state=cs,
            scores_raw=scaled * 0.1,
            scores_scaled=scaled,
            ranks=rank_scores(scaled, ids),
        )
    return _make


class TestScaleScores:
    """Linear map onto the 1-7 scale."""

    def test_hand_example(self):
        np.testing.assert_allclose(scale_scores([2.5, 4.0, 10.0]), [1.0, 2.2, 7.0])

    def test_two_entities(self):
        assert scale_scores([-3.0, 8.0]).tolist() == [1.0, 7.0]
        assert scale_scores([8.0, -3.0]).tolist() == [7.0, 1.0]

    def test_anchors_exact(self):
        scaled = scale_scores(np.random.default_rng(0).normal(size=50))
        assert scaled.min() == 1.0
        assert scaled.max() == 7.0

    def test_all_equal(self):
        with pytest.raises(DegenerateScores):
            scale_scores([0.3, 0.3, 0.3])

    def test_single_score(self):
        with pytest.raises(DegenerateScores):
            scale_scores([1.0])


class TestRankScores:
    """Ranking by scaled score."""

    def test_descending(self):
        assert rank_scores([1.0, 7.0, 4.0], ["a", "b", "c"]).tolist() == [3, 1, 2]

    def test_exact_tie_uses_entity_id(self):
        assert rank_scores([5.0, 5.0, 1.0], ["zz", "aa", "mm"]).tolist() == [2, 1, 3]


class TestStage:
    """Stage labeling of pipeline errors."""

    def test_labels_unlabeled_error(self):
        with pytest.raises(InvalidInput) as excinfo:
            with stage("impute"):
                raise InvalidInput("boom")
        assert excinfo.value.stage == "impute"
        assert str(excinfo.value) == "[impute] boom"

    def test_keeps_inner_label(self):
        with pytest.raises(InvalidInput) as excinfo:
            with stage("outer"):
                with stage("inner"):
                    raise InvalidInput("boom")
        assert excinfo.value.stage == "inner"


class TestRunYear:
    """End-to-end yearly runs."""

    def test_first_year_recovers_order(self, monotone_data, schema_file, fast_config, tmp_path):
        state = run_year(monotone_data, schema_file, cfg=fast_config, out_dir=tmp_path / "out")
        assert state.target_mode == TargetMode.STATIC
        assert target.validate(state.targets) == []
        assert (tmp_path / "out" / "state.json").exists()

        truth = np.arange(1, 31)
        tau = kendalltau(state.scores_scaled, truth).statistic
        assert tau == pytest.approx(1.0)
        assert state.scores_scaled.max() == 7.0
        assert state.scores_scaled.min() == 1.0
        assert state.entity_ids[int(np.argmin(state.ranks))] == "e30"
        assert state.ranks[0] == 30
        assert state.loss_history[-1] < state.loss_history[0]

    def test_ranks_follow_raw_order(self, monotone_data, schema_file, fast_config):
        state = run_year(monotone_data, schema_file, cfg=fast_config)
        assert np.array_equal(np.argsort(-state.scores_raw, kind="stable"), np.argsort(state.ranks))

    def test_second_year_uses_dynamic_targets(self, write_csv, make_monotone_rows, schema_file, fast_config):
        year1 = run_year(write_csv("y1.csv", make_monotone_rows()), schema_file, cfg=fast_config)
        cfg2 = fast_config.model_copy(update={"year_label": "y2"})
        year2 = run_year(
            write_csv("y2.csv", make_monotone_rows(shift={20: -9.5})), schema_file, year1, cfg2
        )
        assert year2.target_mode == TargetMode.DYNAMIC
        assert target.validate(year2.targets) == []

    def test_static_targets_flag(self, monotone_data, schema_file, fast_config):
        year1 = run_year(monotone_data, schema_file, cfg=fast_config)
        cfg = fast_config.model_copy(update={"static_targets": True})
        assert run_year(monotone_data, schema_file, year1, cfg).target_mode == TargetMode.STATIC

    def test_previous_state_entity_mismatch(self, write_csv, make_monotone_rows, schema_file, fast_config):
        year1 = run_year(write_csv("y1.csv", make_monotone_rows()), schema_file, cfg=fast_config)
        rows = make_monotone_rows()
        smaller = write_csv("y2.csv", rows[:-1])
        with pytest.raises(InvalidInput) as excinfo:
            run_year(smaller, schema_file, year1, fast_config)
        assert excinfo.value.stage == "previous-state"
        assert "e30" in str(excinfo.value)

    def test_errors_carry_stage(self, write_csv, schema_file, fast_config):
        path = write_csv("flat.csv", [
            ["entity_id", "group", "income", "employment", "poverty"],
            ["a", "G", "1", "5", "3"],
            ["b", "G", "2", "5", "2"],
            ["c", "G", "3", "5", "1"],
        ])
        with pytest.raises(InvalidInput) as excinfo:
            run_year(path, schema_file, cfg=fast_config)
        assert excinfo.value.stage == "normalize"
        assert "employment" in str(excinfo.value)

    def test_missing_schema_file(self, monotone_data, tmp_path, fast_config):
        with pytest.raises(ParseError) as excinfo:
            run_year(monotone_data, tmp_path / "nope.json", cfg=fast_config)
        assert excinfo.value.stage == "schema"

    def test_state_round_trip(self, monotone_data, schema_file, fast_config, tmp_path):
        state = run_year(monotone_data, schema_file, cfg=fast_config, out_dir=tmp_path)
        loaded = YearState.load(tmp_path / "state.json")
        assert loaded.entity_ids == state.entity_ids
        assert np.array_equal(loaded.cluster_state.labels, state.cluster_state.labels)
        assert np.array_equal(loaded.ranks, state.ranks)
        assert np.array_equal(loaded.scores_raw, state.scores_raw)
        assert np.array_equal(loaded.scores_scaled, state.scores_scaled)
        assert np.array_equal(loaded.targets.t, state.targets.t)
        assert loaded.loss_history == state.loss_history

    def test_dynamic_targets_move_the_mover(self, write_csv, make_monotone_rows, schema_file, fast_config):
        """An entity dropping to the lower cluster loses rank under dynamic targets."""
        mover = "e20"
        cfg1 = fast_config.model_copy(update={"clusters": 2})
        year1 = run_year(write_csv("y1.csv", make_monotone_rows()), schema_file, cfg=cfg1)

        rows = make_monotone_rows()
        rows[20][4] = "29.5"  # worst poverty of the panel, income and employment unchanged
        data2 = write_csv("y2.csv", rows)
        cfg2 = cfg1.model_copy(update={"year_label": "y2"})
        dynamic = run_year(data2, schema_file, year1, cfg2)
        static = run_year(data2, schema_file, year1, cfg2.model_copy(update={"static_targets": True}))

        moves = target.movements(dynamic.cluster_state, year1.cluster_state)
        assert moves[mover] == Movement.DOWNGRADED
        assert all(move == Movement.STAYED for entity_id, move in moves.items() if entity_id != mover)
        assert not np.array_equal(dynamic.targets.t, static.targets.t)

        index = dynamic.entity_ids.index(mover)
        assert dynamic.ranks[index] > static.ranks[index]
        others = np.array([entity_id != mover for entity_id in dynamic.entity_ids])
        assert np.max(np.abs(dynamic.ranks[others] - static.ranks[others])) <= 3

    def test_checkpoint_reproduces_scores(self, monotone_data, schema_file, fast_config, tmp_path):
        """Scoring with a saved model.json gives the trained run's scores without training."""
        trained = run_year(monotone_data, schema_file, cfg=fast_config)
        emit_reports(trained, None, tmp_path / "first")

        model_path = tmp_path / "first" / "model.json"
        reloaded = run_year(monotone_data, schema_file, cfg=fast_config, checkpoint=model_path)
        assert np.array_equal(reloaded.scores_raw, trained.scores_raw)
        assert np.array_equal(reloaded.ranks, trained.ranks)
        assert reloaded.loss_history == []

    def test_checkpoint_feature_count_mismatch(self, monotone_data, schema_file, fast_config):
        model = init_model(NetworkConfig(input_dim=3, hidden_layers=[2], seed=1))
        with pytest.raises(InvalidInput, match="features") as excinfo:
            run_year(monotone_data, schema_file, cfg=fast_config, checkpoint=model)
        assert excinfo.value.stage == "checkpoint"


class TestCompare:
    """Year-over-year comparison."""

    IDS = ["a", "b", "c", "d"]

    def test_identical_states(self, year_state):
        state = year_state("y", self.IDS, [7.0, 5.0, 3.0, 1.0])
        report = compare(state, state)
        assert (report.rows["rank_delta"] == 0).all()
        assert (report.rows["direction"] == "same").all()
        assert report.average_score_change == 0.0
        assert report.summary.kendall_tau_previous == pytest.approx(1.0)

    def test_rank_moves_and_markers(self, year_state):
        previous = year_state("y1", self.IDS, [7.0, 5.0, 3.0, 1.0])
        current = year_state("y2", self.IDS, [7.0, 3.0, 1.0, 6.0])
        rows = compare(current, previous).rows.set_index("entity_id")
        assert rows.loc["d", "previous_rank"] == 4
        assert rows.loc["d", "current_rank"] == 2
        assert rows.loc["d", "rank_delta"] == 2
        assert rows.loc["d", "direction"] == "up"
        assert rows.loc["b", "direction"] == "down"
        assert rows.loc["a", "direction"] == "same"
        assert rows.loc["d", "score_delta_display"] == "5.00"

    def test_average_score_change(self, year_state):
        previous = year_state("y1", self.IDS, [7.0, 5.0, 3.0, 1.0])
        current = year_state("y2", self.IDS, [7.0, 3.0, 1.0, 6.0])
        report = compare(current, previous)
        assert report.average_score_change == pytest.approx(0.25, abs=1e-12)
        assert report.average_score_change == pytest.approx(report.rows["score_delta"].mean(), abs=1e-12)
        assert list(report.rows.columns) == COMPARISON_COLUMNS

    def test_reference_equal_to_current(self, year_state):
        current = year_state("y2", self.IDS, [7.0, 3.0, 1.0, 6.0])
        previous = year_state("y1", self.IDS, [7.0, 5.0, 3.0, 1.0])
        reference = pd.DataFrame({
            "entity_id": self.IDS,
            "rank": current.ranks,
            "score": 4.0 + 0.5 * (current.scores_scaled - 1.0),
        })
        report = compare(current, previous, reference)
        assert report.summary.mean_rank_distance_reference == 0.0
        assert report.summary.kendall_tau_reference == pytest.approx(1.0)
        anchored = report.rows.set_index("entity_id").loc[self.IDS, "anchored_score"]
        np.testing.assert_allclose(anchored, reference["score"], atol=1e-12)
        assert report.summary.mean_abs_score_difference_reference == pytest.approx(0.0, abs=1e-12)
        assert report.summary.score_gaps_at_least_one_point == 0

    def test_reference_distance(self, year_state, tmp_path):
        current = year_state("y2", self.IDS, [7.0, 5.0, 3.0, 1.0])
        path = tmp_path / "ref.csv"
        path.write_text("entity_id,rank\na,2\nb,1\nc,3\nd,4\n", encoding="utf-8")
        report = compare(current, current, path)
        assert report.summary.mean_rank_distance_reference == pytest.approx(0.5)
        assert report.rows["anchored_score"].isna().all()

    def test_exclusion_re_ranks(self, year_state):
        previous = year_state("y1", self.IDS, [7.0, 5.0, 3.0, 1.0])
        current = year_state("y2", self.IDS, [7.0, 3.0, 1.0, 6.0])
        rows = compare(current, previous, exclude=["a"]).rows.set_index("entity_id")
        assert "a" not in rows.index
        assert rows.loc["d", "previous_rank"] == 3
        assert rows.loc["d", "current_rank"] == 1
        assert rows.loc["d", "rank_delta"] == 2

    def test_entity_mismatch(self, year_state):
        with pytest.raises(InvalidInput):
            compare(year_state("y2", ["a", "b"], [1.0, 7.0]), year_state("y1", ["a", "c"], [1.0, 7.0]))


class TestReadReference:
    """External ranking files."""

    def test_requires_rank_column(self, tmp_path):
        path = tmp_path / "ref.csv"
        path.write_text("entity_id,score\na,5\n", encoding="utf-8")
        with pytest.raises(ParseError, match="rank"):
            read_reference(path)

    def test_duplicate_ids(self, tmp_path):
        path = tmp_path / "ref.csv"
        path.write_text("entity_id,rank\na,1\na,2\n", encoding="utf-8")
        with pytest.raises(ParseError):
            read_reference(path)


class TestEmitReports:
    """Report files."""

    def test_first_year_files(self, monotone_data, schema_file, fast_config, tmp_path):
        state = run_year(monotone_data, schema_file, cfg=fast_config)
        written = emit_reports(state, None, tmp_path / "reports")
        names = [path.name for path in written]
        assert names == FIVE_FILES + ["model.json"]
        for name in FIVE_FILES:
            header = (tmp_path / "reports" / name).read_text(encoding="utf-8").splitlines()[0]
            assert header
        assert (tmp_path / "reports" / "comparison.csv").read_text(encoding="utf-8").strip() == ",".join(COMPARISON_COLUMNS)

        ranking = pd.read_csv(tmp_path / "reports" / "ranking.csv")
        assert list(ranking.columns) == ["rank", "entity_id", "score_scaled", "score_display"]
        assert ranking.loc[0, "entity_id"] == "e30"
        assert ranking.loc[0, "score_display"] == 7.0

    def test_exclusion_only_affects_ranking(self, monotone_data, schema_file, fast_config, tmp_path):
        state = run_year(monotone_data, schema_file, cfg=fast_config)
        emit_reports(state, None, tmp_path, exclude=["e30"])
        scores = pd.read_csv(tmp_path / "scores.csv")
        ranking = pd.read_csv(tmp_path / "ranking.csv")
        assert "e30" in set(scores["entity_id"])
        assert "e30" not in set(ranking["entity_id"])
        assert ranking["rank"].tolist() == list(range(1, 30))
        assert ranking.loc[0, "entity_id"] == "e29"

    def test_comparison_summary(self, year_state, tmp_path):
        previous = year_state("y1", ["a", "b", "c", "d"], [7.0, 5.0, 3.0, 1.0])
        current = year_state("y2", ["a", "b", "c", "d"], [7.0, 3.0, 1.0, 6.0])
        written = emit_reports(current, compare(current, previous), tmp_path)
        assert [path.name for path in written] == FIVE_FILES + ["comparison_summary.json"]
        summary = json.loads((tmp_path / "comparison_summary.json").read_text(encoding="utf-8"))
        assert summary["current_year"] == "y2"
        assert summary["average_score_change"] == pytest.approx(0.25)
        comparison = pd.read_csv(tmp_path / "comparison.csv")
        assert len(comparison) == 4

    def test_deterministic_bytes(self, monotone_data, schema_file, fast_config, tmp_path):
        for name in ("first", "second"):
            state = run_year(monotone_data, schema_file, cfg=fast_config, out_dir=tmp_path / name)
            emit_reports(state, None, tmp_path / name)
        for name in FIVE_FILES + ["model.json", "state.json"]:
            assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()

    def test_unwritable_directory(self, year_state, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory", encoding="utf-8")
        state = year_state("y", ["a", "b"], [1.0, 7.0])
        with pytest.raises(ReportWriteError) as excinfo:
            emit_reports(state, None, blocker / "out")
        assert "blocker" in str(excinfo.value)

