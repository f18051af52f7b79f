"""End-to-end yearly ranking run, 1-7 scaling, comparison and report files."""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd
from scipy.stats import kendalltau

from models.enums import RankMarker, TargetMode
from models.errors import DegenerateScores, InvalidInput, ParseError, RankingError, ReportWriteError
from models.schemas import ComparisonSummary, IndicatorSchema, RunConfig, YearStateDocument
from services import dataset, ranknet, relarm, target
from services.numerics import RandomSource
from services.ranknet import RankModel
from services.relarm import ClusterState
from services.target import TargetMatrix
from services.validation import validation_service

logger = logging.getLogger(__name__)

SCALE_MIN = 1.0
SCALE_MAX = 7.0

STATE_FILE = "state.json"
MODEL_FILE = "model.json"
SCORES_FILE = "scores.csv"
RANKING_FILE = "ranking.csv"
TARGETS_FILE = "targets.csv"
LOSS_FILE = "loss_history.csv"
COMPARISON_FILE = "comparison.csv"
SUMMARY_FILE = "comparison_summary.json"

COMPARISON_COLUMNS = [
    "entity_id", "previous_rank", "current_rank", "rank_delta", "direction",
    "previous_score", "current_score", "score_delta", "score_delta_display",
    "reference_rank", "rank_distance", "reference_score", "anchored_score", "score_difference",
]

PathLike = Union[str, Path]


@dataclass
class YearState:
    """Everything one yearly run produces; persisted as state.json."""
    year_label: str
    entity_ids: tuple[str, ...]
    cluster_state: ClusterState
    scores_raw: np.ndarray
    scores_scaled: np.ndarray
    ranks: np.ndarray
    targets: Optional[TargetMatrix] = None
    loss_history: list[float] = field(default_factory=list)
    model: Optional[RankModel] = None

    @property
    def target_mode(self) -> TargetMode:
        return self.targets.mode if self.targets is not None else TargetMode.STATIC

    def to_document(self) -> YearStateDocument:
        return YearStateDocument(
            year_label=self.year_label,
            entity_ids=list(self.entity_ids),
            target_mode=self.target_mode,
            cluster_state=self.cluster_state.to_document(),
            scores_raw=self.scores_raw.tolist(),
            scores_scaled=self.scores_scaled.tolist(),
            ranks=[int(rank) for rank in self.ranks],
            loss_history=list(self.loss_history),
            targets=self.targets.t.tolist() if self.targets is not None else [],
        )

    @classmethod
    def from_document(cls, doc: YearStateDocument) -> "YearState":
        m = len(doc.entity_ids)
        if not (len(doc.scores_raw) == len(doc.scores_scaled) == len(doc.ranks) == m):
            raise InvalidInput(f"State '{doc.year_label}' has inconsistent per-entity array lengths")
        targets = None
        if doc.targets:
            targets = TargetMatrix(
                t=np.array(doc.targets, dtype=float),
                entity_ids=tuple(doc.entity_ids),
                mode=doc.target_mode,
            )
        return cls(
            year_label=doc.year_label,
            entity_ids=tuple(doc.entity_ids),
            cluster_state=ClusterState.from_document(doc.cluster_state),
            scores_raw=np.array(doc.scores_raw, dtype=float),
            scores_scaled=np.array(doc.scores_scaled, dtype=float),
            ranks=np.array(doc.ranks, dtype=int),
            targets=targets,
            loss_history=list(doc.loss_history),
        )

    def save(self, path: PathLike) -> Path:
        path = Path(path)
        _write_text(path, self.to_document().model_dump_json(indent=2))
        return path

    @classmethod
    def load(cls, path: PathLike) -> "YearState":
        return cls.from_document(validation_service.load_state(path))


@dataclass
class ComparisonReport:
    """Per-entity year-over-year deltas plus report-level metrics."""
    rows: pd.DataFrame
    summary: ComparisonSummary

    @property
    def average_score_change(self) -> float:
        return self.summary.average_score_change


@contextmanager
def stage(name: str):
    """Label any pipeline error raised inside the block with the stage name."""
    try:
        yield
    except RankingError as e:
        if e.stage is None:
            e.stage = name
        raise


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ReportWriteError(str(path), e.strerror or str(e)) from e


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> None:
    try:
        frame.to_csv(path, index=index, lineterminator="\n")
    except OSError as e:
        raise ReportWriteError(str(path), e.strerror or str(e)) from e


# Scores and ranks

def scale_scores(raw) -> np.ndarray:
    """
    Map raw scores linearly onto [1, 7]: s' = 1 + 6 (s - min) / (max - min).

    Raises:
        DegenerateScores: fewer than 2 scores or all scores equal
    """
    raw = np.asarray(raw, dtype=float)
    if raw.size < 2:
        raise DegenerateScores(f"Need at least 2 scores to scale, got {raw.size}")
    low, high = float(raw.min()), float(raw.max())
    if high == low:
        raise DegenerateScores("All raw scores are equal; the 1-7 scale is undefined")
    return SCALE_MIN + (SCALE_MAX - SCALE_MIN) * (raw - low) / (high - low)


def rank_scores(scores, entity_ids: Iterable[str]) -> np.ndarray:
    """1-based ranks by score descending; exact ties go to the lexicographically smaller id."""
    scores = np.asarray(scores, dtype=float)
    ids = list(entity_ids)
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    ranks = np.empty(len(ids), dtype=int)
    for position, index in enumerate(order):
        ranks[index] = position + 1
    return ranks


# Yearly run

def load_model(source: Union[PathLike, RankModel]) -> RankModel:
    """Model checkpoint written by emit_reports (model.json), validated and rebuilt."""
    if isinstance(source, RankModel):
        return source
    model = ranknet.from_checkpoint(validation_service.load_checkpoint(source))
    logger.info(f"[PIPELINE] Loaded ranking model from {source} (hidden {model.config.hidden_layers})")
    return model


def run_year(
    data: PathLike,
    schema: Union[PathLike, IndicatorSchema],
    prev_state: Optional[Union[PathLike, YearState]] = None,
    cfg: Optional[RunConfig] = None,
    out_dir: Optional[PathLike] = None,
    checkpoint: Optional[Union[PathLike, RankModel]] = None,
) -> YearState:
    """
    Run load -> impute -> normalize -> PCA -> features -> clusters -> targets ->
    train -> score -> scale -> rank for one year.

    Targets use the first-year rules without a previous state (or with
    ``cfg.static_targets``) and the movement-aware rules otherwise.

    Args:
        data: Indicator CSV
        schema: Schema JSON path or a loaded IndicatorSchema
        prev_state: Previous year's state.json path or YearState
        cfg: Run configuration (defaults from settings)
        out_dir: When given, state.json is written there
        checkpoint: Trained model (or model.json path) used instead of training

    Returns:
        YearState of the run

    Raises:
        RankingError subclasses, labeled with the failing stage
    """
    cfg = cfg or RunConfig()
    start_time = time.time()
    logger.info(f"[PIPELINE] 🚀 Run '{cfg.year_label}' started (seed={cfg.seed})")

    with stage("schema"):
        if not isinstance(schema, IndicatorSchema):
            schema = validation_service.load_schema(schema)
    with stage("load"):
        ds = dataset.load_dataset(data, schema, year_label=cfg.year_label)

    previous = None
    if prev_state is not None:
        with stage("previous-state"):
            previous = prev_state if isinstance(prev_state, YearState) else YearState.load(prev_state)
            difference = set(previous.entity_ids) ^ set(ds.entity_ids)
            if difference:
                raise InvalidInput(
                    f"Entities differ from previous year '{previous.year_label}'; "
                    f"present in only one: {sorted(difference)}"
                )

    with stage("impute"):
        ds = dataset.impute_missing(ds)
    with stage("normalize"):
        normalized = relarm.normalize(ds)
    with stage("pca"):
        basis = relarm.fit_pca(normalized, cfg.variance_target)
    with stage("features"):
        features = relarm.feature_map(normalized, basis)
    with stage("cluster"):
        clusters = relarm.cluster_entities(
            features, basis, k=cfg.clusters, restarts=cfg.restarts,
            rng=RandomSource(cfg.seed), max_iter=cfg.kmeans_max_iter,
        )
    with stage("targets"):
        if previous is None or cfg.static_targets:
            targets = target.build_static(clusters)
        else:
            targets = target.build_dynamic(clusters, previous.cluster_state)
    if checkpoint is not None:
        with stage("checkpoint"):
            model = load_model(checkpoint)
            if model.config.input_dim != basis.d:
                raise InvalidInput(
                    f"Checkpoint expects {model.config.input_dim} features, this year's PCA kept {basis.d}"
                )
        loss_history = []
    else:
        with stage("train"):
            net_cfg = cfg.network_config(basis.d)
            training = ranknet.train(ranknet.init_model(net_cfg), features, targets, net_cfg)
        model, loss_history = training.model, training.loss_history
    with stage("score"):
        raw = ranknet.score_all(model, features)
        scaled = scale_scores(raw)
        ranks = rank_scores(scaled, ds.entity_ids)

    state = YearState(
        year_label=cfg.year_label,
        entity_ids=tuple(ds.entity_ids),
        cluster_state=clusters,
        scores_raw=raw,
        scores_scaled=scaled,
        ranks=ranks,
        targets=targets,
        loss_history=loss_history,
        model=model,
    )

    if out_dir is not None:
        with stage("persist"):
            out = _ensure_dir(out_dir)
            state.save(out / STATE_FILE)

    elapsed = time.time() - start_time
    best = state.entity_ids[int(np.argmin(ranks))]
    logger.info(
        f"[PIPELINE] ✅ Run '{cfg.year_label}' done ({elapsed:.2f}s): {len(ranks)} entities, "
        f"{targets.mode.value} targets, top entity '{best}'"
    )
    return state


# Comparison

def _reported(state: YearState, exclude: Iterable[str] = ()) -> pd.DataFrame:
    """Entities shown in reports, re-ranked densely after dropping excluded ids."""
    excluded = set(exclude)
    frame = pd.DataFrame({
        "entity_id": list(state.entity_ids),
        "computed_rank": state.ranks,
        "score_raw": state.scores_raw,
        "score_scaled": state.scores_scaled,
    })
    frame = frame[~frame["entity_id"].isin(excluded)].sort_values("computed_rank", kind="stable")
    frame["rank"] = np.arange(1, len(frame) + 1)
    return frame.reset_index(drop=True)


def read_reference(path: PathLike) -> pd.DataFrame:
    """External ranking CSV: ``entity_id,rank`` with an optional ``score`` column."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype={"entity_id": str})
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"Cannot read reference ranking '{path}': {e}") from e
    missing = [column for column in ("entity_id", "rank") if column not in frame.columns]
    if missing:
        raise ParseError(f"Reference ranking '{path}' lacks columns {missing}", row=1)
    if frame["entity_id"].duplicated().any():
        raise ParseError(f"Reference ranking '{path}' has duplicate entity ids")
    if not pd.api.types.is_numeric_dtype(frame["rank"]) or frame["rank"].isna().any():
        raise ParseError(f"Reference ranking '{path}' has non-numeric ranks", column="rank")
    if "score" in frame.columns and not pd.api.types.is_numeric_dtype(frame["score"]):
        raise ParseError(f"Reference ranking '{path}' has non-numeric scores", column="score")
    return frame


def _tau(a, b) -> Optional[float]:
    if len(a) < 2:
        return None
    tau, _ = kendalltau(a, b)
    return None if np.isnan(tau) else float(tau)


def compare(
    current: YearState,
    previous: YearState,
    reference: Optional[Union[PathLike, pd.DataFrame]] = None,
    exclude: Iterable[str] = (),
) -> ComparisonReport:
    """
    Year-over-year comparison of two runs, optionally against an external ranking.

    Rank delta is previous - current (positive = moved up). When the reference has a
    ``score`` column, current scaled scores are re-anchored affinely onto the
    reference [min, max] before score differences are taken.

    Raises:
        InvalidInput: entity sets differ
    """
    difference = set(current.entity_ids) ^ set(previous.entity_ids)
    if difference:
        raise InvalidInput(
            f"Cannot compare '{current.year_label}' with '{previous.year_label}'; "
            f"present in only one: {sorted(difference)}"
        )

    cur = _reported(current, exclude).set_index("entity_id")
    prev = _reported(previous, exclude).set_index("entity_id")
    prev = prev.loc[cur.index]

    rows = pd.DataFrame(index=cur.index)
    rows["previous_rank"] = prev["rank"].astype(int)
    rows["current_rank"] = cur["rank"].astype(int)
    rows["rank_delta"] = rows["previous_rank"] - rows["current_rank"]
    rows["direction"] = [
        (RankMarker.UP if delta > 0 else RankMarker.DOWN if delta < 0 else RankMarker.SAME).value
        for delta in rows["rank_delta"]
    ]
    rows["previous_score"] = prev["score_scaled"]
    rows["current_score"] = cur["score_scaled"]
    rows["score_delta"] = rows["current_score"] - rows["previous_score"]
    rows["score_delta_display"] = [f"{delta:.2f}" for delta in rows["score_delta"]]
    for column in COMPARISON_COLUMNS[9:]:
        rows[column] = np.nan

    summary = ComparisonSummary(
        current_year=current.year_label,
        previous_year=previous.year_label,
        entities=len(rows),
        average_score_change=float(rows["score_delta"].mean()) if len(rows) else 0.0,
        kendall_tau_previous=_tau(rows["current_rank"], rows["previous_rank"]),
    )

    if reference is not None:
        ref = reference if isinstance(reference, pd.DataFrame) else read_reference(reference)
        ref = ref.set_index("entity_id")
        unknown = sorted(set(rows.index) - set(ref.index))
        if unknown:
            logger.warning(f"[PIPELINE] ⚠️ {len(unknown)} entities missing from reference: {unknown}")
        shared = [entity_id for entity_id in rows.index if entity_id in ref.index]
        rows.loc[shared, "reference_rank"] = ref.loc[shared, "rank"].astype(float).to_numpy()
        rows.loc[shared, "rank_distance"] = (
            rows.loc[shared, "current_rank"] - rows.loc[shared, "reference_rank"]
        ).abs()
        if shared:
            summary.mean_rank_distance_reference = float(rows.loc[shared, "rank_distance"].mean())
            summary.kendall_tau_reference = _tau(
                rows.loc[shared, "current_rank"], rows.loc[shared, "reference_rank"]
            )
        if "score" in ref.columns and shared:
            ref_scores = ref.loc[shared, "score"].astype(float)
            rows.loc[shared, "reference_score"] = ref_scores.to_numpy()
            current_scores = rows.loc[shared, "current_score"]
            low, high = float(current_scores.min()), float(current_scores.max())
            ref_low, ref_high = float(ref_scores.min()), float(ref_scores.max())
            if high > low:
                anchored = ref_low + (ref_high - ref_low) * (current_scores - low) / (high - low)
            else:
                anchored = pd.Series(ref_low, index=current_scores.index)
            rows.loc[shared, "anchored_score"] = anchored.to_numpy()
            rows.loc[shared, "score_difference"] = (ref_scores - anchored).to_numpy()
            gaps = rows.loc[shared, "score_difference"].abs()
            summary.mean_abs_score_difference_reference = float(gaps.mean())
            summary.score_gaps_at_least_one_point = int((gaps >= 1.0).sum())

    rows = rows.reset_index()[COMPARISON_COLUMNS]
    logger.info(
        f"[PIPELINE] Compared '{current.year_label}' vs '{previous.year_label}': "
        f"average score change {summary.average_score_change:+.3f}"
        + (
            f", mean rank distance to reference {summary.mean_rank_distance_reference:.2f}"
            if summary.mean_rank_distance_reference is not None else ""
        )
    )
    return ComparisonReport(rows=rows, summary=summary)


# Reports

def _ensure_dir(out_dir: PathLike) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportWriteError(str(out), e.strerror or str(e)) from e
    return out


def emit_reports(
    state: YearState,
    report: Optional[ComparisonReport],
    out_dir: PathLike,
    exclude: Iterable[str] = (),
) -> list[Path]:
    """
    Write scores, ranking, target-matrix, loss-history and comparison CSVs.

    Also writes model.json when the state carries a trained model and
    comparison_summary.json when a report is given. Excluded entities appear in
    scores.csv (they were computed) but not in ranking.csv.

    Returns:
        Paths written, in a fixed order

    Raises:
        ReportWriteError: directory or file not writable
    """
    out = _ensure_dir(out_dir)
    written = []
    cs = state.cluster_state
    cluster_rank = cs.entity_cluster_rank()

    scores = pd.DataFrame({
        "entity_id": list(state.entity_ids),
        "score_raw": state.scores_raw,
        "score_scaled": state.scores_scaled,
        "score_display": [f"{score:.2f}" for score in state.scores_scaled],
        "rank": state.ranks,
        "cluster_rank": cluster_rank,
        "within_cluster_rank": cs.within_cluster_rank,
        "projection": cs.entity_projection,
    })
    path = out / SCORES_FILE
    _write_csv(scores, path)
    written.append(path)

    reported = _reported(state, exclude)
    ranking = pd.DataFrame({
        "rank": reported["rank"],
        "entity_id": reported["entity_id"],
        "score_scaled": reported["score_scaled"],
        "score_display": [f"{score:.2f}" for score in reported["score_scaled"]],
    })
    path = out / RANKING_FILE
    _write_csv(ranking, path)
    written.append(path)

    path = out / TARGETS_FILE
    if state.targets is not None:
        _write_csv(state.targets.to_frame(), path, index=True)
    else:
        _write_csv(pd.DataFrame(columns=["entity_id", *state.entity_ids]), path)
    written.append(path)

    path = out / LOSS_FILE
    _write_csv(
        pd.DataFrame({"epoch": range(len(state.loss_history)), "loss": state.loss_history}),
        path,
    )
    written.append(path)

    path = out / COMPARISON_FILE
    _write_csv(report.rows if report is not None else pd.DataFrame(columns=COMPARISON_COLUMNS), path)
    written.append(path)

    if state.model is not None:
        path = out / MODEL_FILE
        _write_text(path, ranknet.to_checkpoint(state.model).model_dump_json(indent=2))
        written.append(path)

    if report is not None:
        path = out / SUMMARY_FILE
        _write_text(path, report.summary.model_dump_json(indent=2))
        written.append(path)

    logger.info(f"[PIPELINE] 📄 Wrote {len(written)} report files to {out}/")
    return written
