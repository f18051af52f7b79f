"""Relative PCA attribute rating: normalization, PCA basis, feature map and clustering."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.config import settings
from models.enums import Direction
from models.errors import DegenerateColumn, InvalidInput
from models.schemas import ClusterStateDocument
from services.dataset import Dataset
from services.numerics import RandomSource, SymmetricMatrix, eig_symmetric, kmeans

logger = logging.getLogger(__name__)

# Cumulative-variance comparisons tolerate float round-off at the target
_VARIANCE_SLACK = 1e-12


@dataclass(frozen=True)
class NormalizedMatrix:
    """M x N min-max scaled indicators in [0, 1], rows aligned with entity_ids."""
    values: np.ndarray
    entity_ids: tuple[str, ...]


@dataclass(frozen=True)
class PcaBasis:
    """l1-normalized principal components with the retained projection matrix W."""
    components: np.ndarray      # N x N, column k has unit l1 norm
    variances: np.ndarray       # descending
    d: int
    W: np.ndarray               # N x d, |components[:, :d]|
    rating_vector: np.ndarray   # variances[:d]

    @property
    def n(self) -> int:
        return self.components.shape[0]

    def explained_fraction(self) -> float:
        total = float(np.sum(self.variances))
        return float(np.sum(self.variances[: self.d]) / total) if total > 0 else 1.0


@dataclass(frozen=True)
class FeatureSet:
    """Ranking-function values a_i (M x d), rows aligned with entity_ids."""
    vectors: np.ndarray
    entity_ids: tuple[str, ...]

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class ClusterState:
    """
    Clustering of one year's feature vectors, ordered along the rating vector.

    cluster_rank[q] is the rank of cluster q by center projection (1 = highest);
    within_cluster_rank[i] is entity i's rank inside its cluster (1 = highest).
    """
    entity_ids: tuple[str, ...]
    labels: np.ndarray
    centers: np.ndarray
    rating_vector: np.ndarray
    projections: np.ndarray
    cluster_rank: np.ndarray
    entity_projection: np.ndarray
    within_cluster_rank: np.ndarray

    @property
    def k(self) -> int:
        return self.centers.shape[0]

    @property
    def cluster_order(self) -> list[int]:
        """Cluster indices from best (highest projection) to worst."""
        return [int(q) for q in np.argsort(self.cluster_rank, kind="stable")]

    def entity_cluster_rank(self) -> np.ndarray:
        """Cluster rank of every entity's cluster."""
        return self.cluster_rank[self.labels]

    def is_complete(self) -> bool:
        m = len(self.entity_ids)
        return (
            m > 0
            and self.labels.shape == (m,)
            and self.entity_projection.shape == (m,)
            and self.within_cluster_rank.shape == (m,)
            and self.projections.shape == (self.k,)
            and self.cluster_rank.shape == (self.k,)
        )

    def to_document(self) -> ClusterStateDocument:
        return ClusterStateDocument(
            entity_ids=list(self.entity_ids),
            labels=[int(x) for x in self.labels],
            centers=self.centers.tolist(),
            rating_vector=self.rating_vector.tolist(),
            projections=self.projections.tolist(),
            cluster_rank=[int(x) for x in self.cluster_rank],
            entity_projection=self.entity_projection.tolist(),
            within_cluster_rank=[int(x) for x in self.within_cluster_rank],
        )

    @classmethod
    def from_document(cls, doc: ClusterStateDocument) -> "ClusterState":
        return cls(
            entity_ids=tuple(doc.entity_ids),
            labels=np.array(doc.labels, dtype=int),
            centers=np.array(doc.centers, dtype=float),
            rating_vector=np.array(doc.rating_vector, dtype=float),
            projections=np.array(doc.projections, dtype=float),
            cluster_rank=np.array(doc.cluster_rank, dtype=int),
            entity_projection=np.array(doc.entity_projection, dtype=float),
            within_cluster_rank=np.array(doc.within_cluster_rank, dtype=int),
        )


# Stage 1: normalization

def normalize(ds: Dataset) -> NormalizedMatrix:
    """
    Min-max scale every indicator to [0, 1].

    Positive indicators map min -> 0, max -> 1; negative indicators are reversed
    so that 1 is always the best value.

    Raises:
        InvalidInput: dataset still has missing values
        DegenerateColumn: an indicator is constant
    """
    if ds.missing_count:
        raise InvalidInput(f"Dataset has {ds.missing_count} missing values; impute before normalizing")
    values = ds.matrix()
    result = np.empty_like(values)
    for j, spec in enumerate(ds.schema.indicators):
        column = values[:, j]
        low, high = float(column.min()), float(column.max())
        if high == low:
            raise DegenerateColumn(spec.name)
        if spec.direction == Direction.POSITIVE:
            result[:, j] = (column - low) / (high - low)
        else:
            result[:, j] = (high - column) / (high - low)
    return NormalizedMatrix(values=result, entity_ids=tuple(ds.entity_ids))


# Stage 2: PCA relative attributes

def fit_pca(b: NormalizedMatrix, variance_target: float = settings.VARIANCE_TARGET) -> PcaBasis:
    """
    Fit l1-normalized principal components of the normalized indicators.

    Uses the sample covariance (divisor M - 1) of the mean-centered columns. The
    retained dimension d is the smallest count whose cumulative variance fraction
    reaches ``variance_target``.

    Args:
        b: Normalized matrix (M >= 2)
        variance_target: Fraction of variance to retain, in (0, 1]

    Returns:
        PcaBasis with components, variances, d, W and the rating vector
    """
    values = b.values
    m, n = values.shape
    if m < 2:
        raise InvalidInput(f"PCA needs at least 2 entities, got {m}")
    if not 0.0 < variance_target <= 1.0:
        raise InvalidInput(f"variance_target must be in (0, 1], got {variance_target}")

    centered = values - values.mean(axis=0)
    covariance = SymmetricMatrix.from_array(centered.T @ centered / (m - 1))
    eigen = eig_symmetric(covariance)

    variances = np.clip(eigen.eigenvalues, 0.0, None)
    components = eigen.eigenvectors / np.sum(np.abs(eigen.eigenvectors), axis=0)

    total = float(variances.sum())
    if total <= 0:
        d = 1
    else:
        cumulative = np.cumsum(variances) / total
        d = int(np.argmax(cumulative >= variance_target - _VARIANCE_SLACK)) + 1

    basis = PcaBasis(
        components=components,
        variances=variances,
        d=d,
        W=np.abs(components[:, :d]),
        rating_vector=variances[:d].copy(),
    )
    logger.info(
        f"[RELARM] PCA kept d={d} of {n} components "
        f"({basis.explained_fraction():.1%} of variance, target {variance_target:.0%})"
    )
    return basis


def _check_component(basis: PcaBasis, p: int) -> None:
    if not 1 <= p <= basis.d:
        raise InvalidInput(f"Component index p must be in [1, {basis.d}], got {p}")


def relative_attribute(b_i, basis: PcaBasis, p: int) -> np.ndarray:
    """Element-wise product of a normalized row with the signed p-th component (1-based)."""
    _check_component(basis, p)
    b_i = np.asarray(b_i, dtype=float)
    if b_i.shape != (basis.n,):
        raise InvalidInput(f"Row must have {basis.n} values, got shape {b_i.shape}")
    return b_i * basis.components[:, p - 1]


def ranking_function(b_i, basis: PcaBasis, p: int) -> float:
    """r_p(b_i) = sum_k b_ik |w_kp|, the l1 norm of the p-th relative attribute for b_i >= 0."""
    _check_component(basis, p)
    b_i = np.asarray(b_i, dtype=float)
    if b_i.shape != (basis.n,):
        raise InvalidInput(f"Row must have {basis.n} values, got shape {b_i.shape}")
    return float(b_i @ basis.W[:, p - 1])


def feature_map(b: NormalizedMatrix, basis: PcaBasis) -> FeatureSet:
    """Map every normalized row to its d ranking-function values (b x W)."""
    if b.values.ndim != 2 or b.values.shape[1] != basis.n:
        raise InvalidInput(
            f"Normalized matrix has {b.values.shape[-1]} indicators, basis expects {basis.n}"
        )
    return FeatureSet(vectors=b.values @ basis.W, entity_ids=b.entity_ids)


# Stage 3: clustering

def _rank_desc(values: np.ndarray, tie_keys) -> np.ndarray:
    """1-based ranks by value descending; ties resolved by ascending tie key."""
    order = sorted(range(len(values)), key=lambda i: (-values[i], tie_keys[i]))
    ranks = np.empty(len(values), dtype=int)
    for position, index in enumerate(order):
        ranks[index] = position + 1
    return ranks


def cluster_entities(
    f: FeatureSet,
    basis: PcaBasis,
    k: int = settings.CLUSTERS,
    restarts: int = settings.RESTARTS,
    rng: Optional[RandomSource] = None,
    max_iter: int = settings.KMEANS_MAX_ITER,
) -> ClusterState:
    """
    Cluster feature vectors and order clusters and members along the rating vector.

    Cluster ranks follow |CC_q . Lambda| descending (ties: lower cluster index);
    within-cluster ranks follow |a_i . Lambda| descending (ties: entity id).

    Args:
        f: Feature set
        basis: PCA basis supplying the rating vector
        k: Number of clusters
        restarts: k-means restarts
        rng: Random source (default: seeded from settings.SEED)
        max_iter: Lloyd iteration cap

    Returns:
        Complete ClusterState
    """
    rng = rng or RandomSource(settings.SEED)
    result = kmeans(f.vectors, k, restarts, rng, max_iter=max_iter)

    rating = basis.rating_vector
    projections = np.abs(result.centers @ rating)
    cluster_rank = _rank_desc(projections, list(range(k)))
    entity_projection = np.abs(f.vectors @ rating)

    within = np.zeros(f.size, dtype=int)
    for cluster in range(k):
        members = np.where(result.labels == cluster)[0]
        ranks = _rank_desc(entity_projection[members], [f.entity_ids[i] for i in members])
        within[members] = ranks

    state = ClusterState(
        entity_ids=f.entity_ids,
        labels=result.labels.astype(int),
        centers=result.centers,
        rating_vector=rating.copy(),
        projections=projections,
        cluster_rank=cluster_rank,
        entity_projection=entity_projection,
        within_cluster_rank=within,
    )
    sizes = np.bincount(result.labels, minlength=k)
    logger.info(
        f"[RELARM] {k} clusters (inertia {result.inertia:.6g}, {restarts} restarts); "
        f"sizes by rank: {[int(sizes[q]) for q in state.cluster_order]}"
    )
    return state
