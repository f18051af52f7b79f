"""Numerical kernels: symmetric eigendecomposition, k-means++ and seeded randomness."""

import logging
from dataclasses import dataclass, field

import numpy as np

from app.config import settings
from models.errors import InvalidInput, NumericalFailure

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SymmetricMatrix:
    """Square real matrix with exactly mirrored entries."""
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] < 1:
            raise InvalidInput(f"Symmetric matrix must be square and non-empty, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise InvalidInput("Symmetric matrix contains non-finite entries")
        if not np.array_equal(entries, entries.T):
            raise InvalidInput("Matrix is not exactly symmetric; use SymmetricMatrix.from_array")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_array(cls, values) -> "SymmetricMatrix":
        """Build from a nearly symmetric array by averaging it with its transpose."""
        values = np.asarray(values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise InvalidInput(f"Symmetric matrix must be square, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise InvalidInput("Symmetric matrix contains non-finite entries")
        return cls(0.5 * (values + values.T))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenResult:
    """Eigenvalues (descending) with unit-norm eigenvectors as columns."""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = 0


@dataclass(frozen=True)
class KMeansResult:
    """Best clustering found over all restarts."""
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    restarts_run: int
    best_restart: int = 0


@dataclass
class RandomSource:
    """Seeded PCG64 stream; child streams are derived by index, not by draw order."""
    seed: int
    spawn_key: tuple[int, ...] = ()
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.seed < 0:
            raise InvalidInput(f"Seed must be non-negative, got {self.seed}")
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))

    def child(self, index: int) -> "RandomSource":
        """Independent stream for task ``index`` (e.g. one k-means restart)."""
        return RandomSource(self.seed, self.spawn_key + (index,))


# Eigendecomposition

def eig_symmetric(
    m: SymmetricMatrix,
    max_sweeps: int = settings.JACOBI_MAX_SWEEPS,
    tolerance: float = settings.JACOBI_TOLERANCE,
) -> EigenResult:
    """
    Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Each sweep visits every (p, q) pair above the diagonal once and zeroes it with a
    plane rotation. Iteration stops when the off-diagonal Frobenius norm drops to
    ``tolerance`` times the matrix Frobenius norm.

    Args:
        m: Symmetric input matrix
        max_sweeps: Sweep cap before NumericalFailure
        tolerance: Relative off-diagonal Frobenius tolerance

    Returns:
        EigenResult with eigenvalues sorted descending and eigenvectors as columns,
        each flipped so its largest-magnitude entry is positive
    """
    a = np.array(m.entries, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    threshold = tolerance * scale if scale > 0 else 0.0

    sweeps = 0
    while True:
        off = np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= threshold:
            break
        if sweeps >= max_sweeps:
            raise NumericalFailure(
                f"Jacobi eigensolver did not converge after {max_sweeps} sweeps "
                f"(off-diagonal norm {off:.3e})"
            )
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        logger.debug(f"[JACOBI] sweep {sweeps}: off-diagonal norm {off:.3e}")

    eigenvalues = np.diag(a).copy()
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues = eigenvalues[order]
    eigenvectors = v[:, order]

    # Sign convention: largest-magnitude entry of each column is positive
    for k in range(n):
        pivot = int(np.argmax(np.abs(eigenvectors[:, k])))
        if eigenvectors[pivot, k] < 0:
            eigenvectors[:, k] = -eigenvectors[:, k]

    return EigenResult(eigenvalues=eigenvalues, eigenvectors=eigenvectors, sweeps=sweeps)


# k-means

def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("mkd,mkd->mk", diff, diff)


def _kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: next center drawn with probability proportional to D^2."""
    m = points.shape[0]
    chosen = [int(rng.integers(0, m))]
    closest = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            index = int(rng.choice(m, p=closest / total))
        else:
            # All remaining points coincide with a center; pick any unchosen one
            remaining = np.setdiff1d(np.arange(m), chosen)
            index = int(rng.choice(remaining))
        chosen.append(index)
        closest = np.minimum(closest, np.sum((points - points[index]) ** 2, axis=1))
    return points[chosen].copy()


def _assign(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # argmin returns the lowest index on ties
    return np.argmin(_squared_distances(points, centers), axis=1)


def _repair_empty(points: np.ndarray, centers: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Give each empty cluster the point farthest from its center (from a cluster with > 1 member)."""
    labels = labels.copy()
    for cluster in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[cluster] > 0:
            continue
        distances = np.sum((points - centers[labels]) ** 2, axis=1)
        donors = counts[labels] > 1
        candidates = np.where(donors)[0]
        farthest = candidates[np.argmax(distances[candidates])]
        logger.debug(f"[KMEANS] empty cluster {cluster} repaired with point {farthest}")
        labels[farthest] = cluster
    return labels


def _centers_of(points: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    centers = np.zeros((k, points.shape[1]))
    for cluster in range(k):
        centers[cluster] = points[labels == cluster].mean(axis=0)
    return centers


def _lloyd(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int) -> tuple[np.ndarray, np.ndarray, float]:
    centers = _kmeans_plusplus(points, k, rng)
    labels = _repair_empty(points, centers, _assign(points, centers), k)
    for _ in range(max_iter):
        centers = _centers_of(points, labels, k)
        new_labels = _repair_empty(points, centers, _assign(points, centers), k)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    centers = _centers_of(points, labels, k)
    inertia = float(np.sum((points - centers[labels]) ** 2))
    return labels, centers, inertia


def kmeans(
    points,
    k: int,
    restarts: int,
    rng: RandomSource,
    max_iter: int = settings.KMEANS_MAX_ITER,
) -> KMeansResult:
    """
    Best-of-``restarts`` k-means with k-means++ seeding.

    Restart ``r`` draws from ``rng.child(r)``, so a run with more restarts evaluates a
    superset of the candidates of a run with fewer restarts and the same seed. The best
    candidate is chosen by (inertia, restart index).

    Args:
        points: M x d array
        k: Number of clusters (1 <= k <= M)
        restarts: Independent initializations
        rng: Seeded random source
        max_iter: Lloyd iteration cap per restart

    Returns:
        KMeansResult with non-empty clusters
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise InvalidInput(f"k-means expects an M x d array, got shape {points.shape}")
    m = points.shape[0]
    if k < 1 or m < k:
        raise InvalidInput(f"k-means needs 1 <= k <= M, got k={k}, M={m}")
    if restarts < 1:
        raise InvalidInput(f"k-means needs at least one restart, got {restarts}")
    if not np.all(np.isfinite(points)):
        raise InvalidInput("k-means input contains non-finite values")

    best = None
    for restart in range(restarts):
        labels, centers, inertia = _lloyd(points, k, rng.child(restart).generator, max_iter)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia, restart)

    labels, centers, inertia, restart = best
    logger.debug(f"[KMEANS] best inertia {inertia:.6g} from restart {restart}/{restarts}")
    return KMeansResult(
        labels=labels,
        centers=centers,
        inertia=inertia,
        restarts_run=restarts,
        best_restart=restart,
    )
