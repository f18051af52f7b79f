"""Siamese pairwise ranking network trained with iRprop- on cross-entropy pair loss."""

import copy
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from models.errors import InvalidInput, NumericalFailure
from models.schemas import LayerParameters, ModelCheckpoint, NetworkConfig, RpropConfig
from services.numerics import RandomSource
from services.relarm import FeatureSet
from services.target import TargetMatrix, validate

logger = logging.getLogger(__name__)

PROBABILITY_EPS = 1e-12


@dataclass
class DenseLayer:
    """Fully connected layer: weights (out x in), biases (out)."""
    weights: np.ndarray
    biases: np.ndarray


@dataclass
class RankModel:
    """Hidden log-sigmoid layers followed by the affine ranking layer."""
    config: NetworkConfig
    hidden: list[DenseLayer]
    ranking_weights: np.ndarray
    ranking_bias: float = 0.0

    def parameter_count(self) -> int:
        return len(self.to_vector())

    def to_vector(self) -> np.ndarray:
        parts = []
        for layer in self.hidden:
            parts.append(layer.weights.ravel())
            parts.append(layer.biases.ravel())
        parts.append(self.ranking_weights.ravel())
        parts.append(np.array([self.ranking_bias]))
        return np.concatenate(parts)

    def load_vector(self, vector: np.ndarray) -> None:
        offset = 0
        for layer in self.hidden:
            size = layer.weights.size
            layer.weights = vector[offset:offset + size].reshape(layer.weights.shape).copy()
            offset += size
            size = layer.biases.size
            layer.biases = vector[offset:offset + size].copy()
            offset += size
        size = self.ranking_weights.size
        self.ranking_weights = vector[offset:offset + size].copy()
        offset += size
        self.ranking_bias = float(vector[offset])


@dataclass
class RankGradients:
    """Gradient of the mean pair loss, same layout as RankModel."""
    hidden: list[DenseLayer]
    ranking_weights: np.ndarray
    ranking_bias: float

    def to_vector(self) -> np.ndarray:
        parts = []
        for layer in self.hidden:
            parts.append(layer.weights.ravel())
            parts.append(layer.biases.ravel())
        parts.append(self.ranking_weights.ravel())
        parts.append(np.array([self.ranking_bias]))
        return np.concatenate(parts)


@dataclass
class RpropState:
    """Per-parameter step sizes and previous gradient for iRprop-."""
    config: RpropConfig
    steps: np.ndarray
    previous_gradient: np.ndarray

    @classmethod
    def start(cls, size: int, config: RpropConfig) -> "RpropState":
        return cls(
            config=config,
            steps=np.full(size, config.delta_init),
            previous_gradient=np.zeros(size),
        )

    def step(self, parameters: np.ndarray, gradient: np.ndarray) -> np.ndarray:
        """Return updated parameters; on a sign flip shrink the step and skip that update."""
        cfg = self.config
        product = self.previous_gradient * gradient
        grow = product > 0
        shrink = product < 0
        self.steps[grow] = np.minimum(self.steps[grow] * cfg.eta_plus, cfg.delta_max)
        self.steps[shrink] = np.maximum(self.steps[shrink] * cfg.eta_minus, cfg.delta_min)
        gradient = gradient.copy()
        gradient[shrink] = 0.0
        self.previous_gradient = gradient
        return parameters - np.sign(gradient) * self.steps


@dataclass(frozen=True)
class PairBatch:
    """Training pairs (i < j) with their target probabilities."""
    i: np.ndarray
    j: np.ndarray
    t: np.ndarray

    @classmethod
    def from_targets(cls, targets: TargetMatrix) -> "PairBatch":
        i, j = np.triu_indices(targets.size, k=1)
        return cls(i=i, j=j, t=np.asarray(targets.t, dtype=float)[i, j])

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class TrainingResult:
    model: RankModel
    loss_history: list[float] = field(default_factory=list)
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return max(len(self.loss_history) - 1, 0)


def init_model(cfg: NetworkConfig) -> RankModel:
    """
    Create a network with weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] and zero biases.

    Deterministic for a given ``cfg.seed``.
    """
    rng = RandomSource(cfg.seed).generator
    hidden = []
    fan_in = cfg.input_dim
    for width in cfg.hidden_layers:
        bound = 1.0 / np.sqrt(fan_in)
        hidden.append(DenseLayer(
            weights=rng.uniform(-bound, bound, size=(width, fan_in)),
            biases=np.zeros(width),
        ))
        fan_in = width
    bound = 1.0 / np.sqrt(fan_in)
    ranking_weights = rng.uniform(-bound, bound, size=fan_in)
    return RankModel(config=cfg, hidden=hidden, ranking_weights=ranking_weights, ranking_bias=0.0)


def _forward(m: RankModel, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Activations per layer (input first) and the rank values for a batch of rows."""
    activations = [x]
    h = x
    for layer in m.hidden:
        h = expit(h @ layer.weights.T + layer.biases)
        activations.append(h)
    return activations, h @ m.ranking_weights + m.ranking_bias


def _as_batch(m: RankModel, features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != m.config.input_dim:
        raise InvalidInput(f"Expected feature vectors of length {m.config.input_dim}, got shape {x.shape}")
    return x


def score(m: RankModel, a) -> float:
    """Rank value of one feature vector: log-sigmoid hidden layers, then weight . x + bias."""
    x = np.asarray(a, dtype=float)
    if x.shape != (m.config.input_dim,):
        raise InvalidInput(f"Expected a feature vector of length {m.config.input_dim}, got shape {x.shape}")
    _, ranks = _forward(m, x[None, :])
    return float(ranks[0])


def score_all(m: RankModel, features: FeatureSet) -> np.ndarray:
    """Raw score per entity, in feature order (higher is better)."""
    _, ranks = _forward(m, _as_batch(m, features.vectors))
    return ranks


def pair_probability(rank_i, rank_j):
    """Posterior probability that i outranks j: sigmoid(rank_i - rank_j)."""
    return expit(np.subtract(rank_i, rank_j))


def pair_loss(t_ij, p_ij):
    """Cross entropy -t log P - (1 - t) log(1 - P), with P clamped to [eps, 1 - eps]."""
    p = np.clip(p_ij, PROBABILITY_EPS, 1.0 - PROBABILITY_EPS)
    return -t_ij * np.log(p) - (1.0 - t_ij) * np.log1p(-p)


def loss_and_gradients(m: RankModel, batch: PairBatch, vectors: np.ndarray) -> tuple[float, RankGradients]:
    """
    Mean pair loss over the batch and its exact gradient.

    Both siamese branches share parameters, so the per-entity upstream gradient
    accumulates +(P - t)/n from every pair where the entity is i and -(P - t)/n where
    it is j; a single backward pass over all entities then gives the parameter gradient.
    """
    if len(batch) == 0:
        raise InvalidInput("Pair batch is empty")
    x = _as_batch(m, vectors)
    activations, ranks = _forward(m, x)
    p = pair_probability(ranks[batch.i], ranks[batch.j])
    loss = float(np.mean(pair_loss(batch.t, p)))

    g = (p - batch.t) / len(batch)
    upstream = (
        np.bincount(batch.i, weights=g, minlength=x.shape[0])
        - np.bincount(batch.j, weights=g, minlength=x.shape[0])
    )

    grad_ranking_weights = activations[-1].T @ upstream
    grad_ranking_bias = float(upstream.sum())
    delta = np.outer(upstream, m.ranking_weights)
    grad_hidden = [None] * len(m.hidden)
    for index in range(len(m.hidden) - 1, -1, -1):
        h = activations[index + 1]
        dz = delta * h * (1.0 - h)
        grad_hidden[index] = DenseLayer(weights=dz.T @ activations[index], biases=dz.sum(axis=0))
        delta = dz @ m.hidden[index].weights

    return loss, RankGradients(
        hidden=grad_hidden,
        ranking_weights=grad_ranking_weights,
        ranking_bias=grad_ranking_bias,
    )


def gradients(m: RankModel, batch: PairBatch, features: FeatureSet) -> RankGradients:
    """Analytic gradient of the mean pair loss with respect to every weight and bias."""
    _, grads = loss_and_gradients(m, batch, features.vectors)
    return grads


def mean_loss(m: RankModel, batch: PairBatch, features: FeatureSet) -> float:
    ranks = score_all(m, features)
    return float(np.mean(pair_loss(batch.t, pair_probability(ranks[batch.i], ranks[batch.j]))))


def train(m: RankModel, features: FeatureSet, targets: TargetMatrix, cfg: NetworkConfig) -> TrainingResult:
    """
    Full-batch iRprop- training over all i < j pairs.

    The loss history starts with the loss of the initial model and gains one entry per
    epoch. Training stops after ``cfg.epochs`` epochs or once the loss changes by less
    than ``cfg.loss_tolerance``. The input model is not modified.

    Raises:
        InvalidInput: invalid target matrix or misaligned entity ids
        NumericalFailure: loss became non-finite
    """
    violations = validate(targets)
    if violations:
        raise InvalidInput(f"Target matrix invalid ({len(violations)} violations), first: {violations[0]}")
    if tuple(features.entity_ids) != tuple(targets.entity_ids):
        raise InvalidInput("Feature and target entity ids are not aligned")

    model = copy.deepcopy(m)
    batch = PairBatch.from_targets(targets)
    rprop = RpropState.start(model.parameter_count(), cfg.rprop)

    loss, grads = loss_and_gradients(model, batch, features.vectors)
    result = TrainingResult(model=model, loss_history=[loss])
    logger.info(f"[RANKNET] Training on {len(batch)} pairs, initial loss {loss:.6f}")

    for epoch in range(1, cfg.epochs + 1):
        model.load_vector(rprop.step(model.to_vector(), grads.to_vector()))
        new_loss, grads = loss_and_gradients(model, batch, features.vectors)
        if not np.isfinite(new_loss):
            raise NumericalFailure(f"Training loss became non-finite at epoch {epoch}")
        result.loss_history.append(new_loss)
        logger.debug(f"[RANKNET] epoch {epoch}: loss {new_loss:.8f}")
        if abs(loss - new_loss) < cfg.loss_tolerance:
            result.stopped_early = epoch < cfg.epochs
            break
        loss = new_loss

    logger.info(
        f"[RANKNET] ✅ Trained {result.epochs_run} epochs, final loss {result.loss_history[-1]:.6f}"
        + (" (converged)" if result.stopped_early else "")
    )
    return result


# Checkpoints

def to_checkpoint(m: RankModel) -> ModelCheckpoint:
    return ModelCheckpoint(
        config=m.config,
        hidden=[
            LayerParameters(weights=layer.weights.tolist(), biases=layer.biases.tolist())
            for layer in m.hidden
        ],
        ranking_weights=m.ranking_weights.tolist(),
        ranking_bias=float(m.ranking_bias),
    )


def from_checkpoint(checkpoint: ModelCheckpoint) -> RankModel:
    """Rebuild a model; shapes are checked against the echoed config."""
    cfg = checkpoint.config
    hidden = []
    fan_in = cfg.input_dim
    if len(checkpoint.hidden) != len(cfg.hidden_layers):
        raise InvalidInput(
            f"Checkpoint has {len(checkpoint.hidden)} hidden layers, config declares {len(cfg.hidden_layers)}"
        )
    for layer, width in zip(checkpoint.hidden, cfg.hidden_layers):
        weights = np.array(layer.weights, dtype=float)
        biases = np.array(layer.biases, dtype=float)
        if weights.shape != (width, fan_in) or biases.shape != (width,):
            raise InvalidInput(f"Checkpoint layer shape {weights.shape} does not match ({width}, {fan_in})")
        hidden.append(DenseLayer(weights=weights, biases=biases))
        fan_in = width
    ranking_weights = np.array(checkpoint.ranking_weights, dtype=float)
    if ranking_weights.shape != (fan_in,):
        raise InvalidInput(f"Checkpoint ranking layer has {ranking_weights.size} weights, expected {fan_in}")
    return RankModel(
        config=cfg,
        hidden=hidden,
        ranking_weights=ranking_weights,
        ranking_bias=float(checkpoint.ranking_bias),
    )
