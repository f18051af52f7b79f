"""Target-probability matrix for pairwise training, static and year-over-year rules."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from models.enums import Movement, TargetMode
from models.errors import InvalidInput, ParseError
from services.relarm import ClusterState

logger = logging.getLogger(__name__)

STATIC_VALUES = (0.0, 0.35, 0.4, 0.45, 0.55, 0.6, 0.65, 1.0)
DYNAMIC_VALUES = (0.0, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 1.0)
DIAGONAL = 0.5

# Better-ranked side's probability by within-cluster rank gap (gaps >= 3 share 0.65)
_GAP_PROBABILITY = {1: 0.55, 2: 0.6, 3: 0.65}


@dataclass(frozen=True)
class TargetMatrix:
    """M x M matrix; t[i, j] is the target probability that entity i outranks j."""
    t: np.ndarray
    entity_ids: tuple[str, ...]
    mode: TargetMode

    @property
    def size(self) -> int:
        return len(self.entity_ids)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.t, index=list(self.entity_ids), columns=list(self.entity_ids))
        frame.index.name = "entity_id"
        return frame


def _complement(value: float) -> float:
    # Exact decimal complement for the admissible values (1 - 0.65 != 0.35 in binary)
    return round(1.0 - value, 2)


def _same_cluster_static(rank_i: int, rank_j: int) -> float:
    """Within-cluster rule: probability ladder by rank gap (rank 1 = best)."""
    gap = rank_j - rank_i
    if gap > 0:
        return _GAP_PROBABILITY[min(gap, 3)]
    return _complement(_GAP_PROBABILITY[min(-gap, 3)])


def _require_complete(cs: ClusterState) -> None:
    if not cs.is_complete():
        raise InvalidInput("Cluster state is incomplete (projections or ranks missing)")


def build_static(cs: ClusterState) -> TargetMatrix:
    """
    First-year targets.

    Different clusters: 1 if i's cluster projects higher, else 0. Same cluster:
    0.55 / 0.6 / 0.65 when i is 1 / 2 / >=3 within-cluster ranks ahead of j, mirrored
    (0.45 / 0.4 / 0.35) when behind.
    """
    _require_complete(cs)
    m = len(cs.entity_ids)
    cluster_rank = cs.entity_cluster_rank()
    within = cs.within_cluster_rank
    t = np.full((m, m), DIAGONAL)
    for i in range(m):
        for j in range(i + 1, m):
            if cluster_rank[i] != cluster_rank[j]:
                value = 1.0 if cluster_rank[i] < cluster_rank[j] else 0.0
            else:
                value = _same_cluster_static(int(within[i]), int(within[j]))
            t[i, j] = value
            t[j, i] = _complement(value)
    logger.info(f"[TARGET] Built static target matrix for {m} entities")
    return TargetMatrix(t=t, entity_ids=tuple(cs.entity_ids), mode=TargetMode.STATIC)


def movements(current: ClusterState, previous: ClusterState) -> dict[str, Movement]:
    """Per-entity cluster move: sign(previous cluster rank - current cluster rank)."""
    _check_same_entities(current, previous)
    previous_rank = dict(zip(previous.entity_ids, previous.entity_cluster_rank()))
    result = {}
    for entity_id, rank in zip(current.entity_ids, current.entity_cluster_rank()):
        result[entity_id] = Movement(int(np.sign(int(previous_rank[entity_id]) - int(rank))))
    return result


def _check_same_entities(current: ClusterState, previous: ClusterState) -> None:
    difference = set(current.entity_ids) ^ set(previous.entity_ids)
    if difference:
        raise InvalidInput(
            f"Entity sets differ between years; present in only one: {sorted(difference)}"
        )


def _same_cluster_dynamic(move_i: Movement, move_j: Movement, rank_i: int, rank_j: int) -> float:
    """
    Within-cluster rule accounting for moves into the cluster.

    Only the canonical role patterns are spelled out; the mirrored patterns come from
    t_ij = 1 - t_ji with the roles of i and j swapped.
    """
    stayed, down, up = Movement.STAYED, Movement.DOWNGRADED, Movement.UPGRADED
    i_higher = rank_i < rank_j

    if move_i == stayed and move_j == stayed:
        return _same_cluster_static(rank_i, rank_j)
    if move_i == move_j:
        return 0.5  # both came down (or up) into the cluster: indefinite
    if move_i == stayed and move_j == down:
        return 0.65 if i_higher else 0.5
    if move_i == stayed and move_j == up:
        return 0.5 if i_higher else 0.35
    if move_i == down and move_j == up:
        return 0.5 if i_higher else 0.65
    # (down, stayed), (up, stayed), (up, down): mirror of a canonical pattern
    return _complement(_same_cluster_dynamic(move_j, move_i, rank_j, rank_i))


def build_dynamic(current: ClusterState, previous: ClusterState) -> TargetMatrix:
    """
    Second-year targets from the current clustering and last year's cluster ranks.

    Cross-cluster pairs follow the static 1/0 rule on current clusters. Same-cluster
    pairs where nobody moved follow the static ladder; pairs involving entities that
    moved into the cluster use the movement rules (0.65 / 0.5 / 0.35). Moves of more
    than one cluster rank count as a single up/down move.

    Raises:
        InvalidInput: incomplete states or differing entity sets
    """
    _require_complete(current)
    _require_complete(previous)
    moves = movements(current, previous)

    m = len(current.entity_ids)
    cluster_rank = current.entity_cluster_rank()
    within = current.within_cluster_rank
    move = [moves[entity_id] for entity_id in current.entity_ids]
    t = np.full((m, m), DIAGONAL)
    for i in range(m):
        for j in range(i + 1, m):
            if cluster_rank[i] != cluster_rank[j]:
                value = 1.0 if cluster_rank[i] < cluster_rank[j] else 0.0
            else:
                value = _same_cluster_dynamic(move[i], move[j], int(within[i]), int(within[j]))
            t[i, j] = value
            t[j, i] = _complement(value)

    moved = sum(1 for value in move if value != Movement.STAYED)
    logger.info(f"[TARGET] Built dynamic target matrix for {m} entities ({moved} changed cluster)")
    return TargetMatrix(t=t, entity_ids=tuple(current.entity_ids), mode=TargetMode.DYNAMIC)


def validate(tm: TargetMatrix) -> list[str]:
    """
    Check value-set membership and complementarity of a target matrix.

    Positions in messages are 1-based (row, column).

    Returns:
        List of violation messages (empty means valid)
    """
    violations = []
    t = np.asarray(tm.t, dtype=float)
    m = t.shape[0] if t.ndim == 2 else 0
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        return [f"Target matrix must be square, got shape {t.shape}"]
    if m != len(tm.entity_ids):
        violations.append(f"Matrix size {m} does not match {len(tm.entity_ids)} entity ids")

    allowed = np.array(STATIC_VALUES if tm.mode == TargetMode.STATIC else DYNAMIC_VALUES)
    for i in range(m):
        if t[i, i] != DIAGONAL:
            violations.append(f"({i + 1},{i + 1}): diagonal must be {DIAGONAL}, got {t[i, i]}")
        for j in range(m):
            if i == j:
                continue
            if not np.any(np.isclose(t[i, j], allowed, rtol=0.0, atol=1e-12)):
                violations.append(
                    f"({i + 1},{j + 1}): value {t[i, j]} not admissible in {tm.mode.value} mode"
                )
            if j > i and not np.isclose(t[i, j] + t[j, i], 1.0, rtol=0.0, atol=1e-12):
                violations.append(
                    f"({i + 1},{j + 1}): complementarity violated, "
                    f"t_ij + t_ji = {t[i, j] + t[j, i]}"
                )
    return violations


def read_targets_csv(path: Union[str, Path], mode: Optional[TargetMode] = None) -> TargetMatrix:
    """
    Load a target matrix written by the report stage.

    When ``mode`` is not given it is inferred: any off-diagonal 0.5 means dynamic.
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, index_col=0, dtype={0: str})
    except (OSError, ValueError, pd.errors.ParserError) as e:
        raise ParseError(f"Cannot read target matrix '{path}': {e}") from e
    ids = [str(x) for x in frame.index]
    if [str(c) for c in frame.columns] != ids:
        raise ParseError(f"Target matrix '{path}' must have matching row and column entity ids", row=1)
    try:
        t = frame.to_numpy(dtype=float)
    except ValueError as e:
        raise ParseError(f"Target matrix '{path}' has non-numeric entries: {e}") from e
    if mode is None:
        off_diagonal = ~np.eye(len(ids), dtype=bool)
        mode = TargetMode.DYNAMIC if np.any(np.isclose(t[off_diagonal], 0.5)) else TargetMode.STATIC
    return TargetMatrix(t=t, entity_ids=tuple(ids), mode=mode)
