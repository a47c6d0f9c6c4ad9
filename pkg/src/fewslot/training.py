"""Episodic meta-training and meta-testing, losses, and the experiment grid.

The protocol: train for ``train_episodes`` episodes (one gradient update per
episode) and, when an evaluation collection is supplied, run
``eval_episodes`` fresh test episodes every ``eval_every`` steps. The
reported figure of merit (``EvalRun.final_accuracy``) is the arithmetic mean
of the checkpoint accuracies. Relation-family heads train on mean squared
error against one-hot targets; matching and prototypical train on softmax
cross-entropy over their scores. Everything is deterministic given the seed.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .data import Collection
from .episodes import EpisodeSpec, derive_seed, episode_stream
from .errors import CapacityError, ContractError, NumericError
from .models import (ModelBundle, ModelConfig, bind_params, episode_score_matrix,
                     init_bundle)
from .optim import OptimizerState, optimizer_step
from .tensor import Graph, Tensor

logger = logging.getLogger(__name__)

MSE_KINDS = ("relation", "attentive")


@dataclass(frozen=True)
class TrainConfig:
    """Episode schedule, geometry, optimizer settings, and the seed."""

    k_shot: int
    c_way: int = 5
    query_per_class: int | None = None
    train_episodes: int = 10000
    eval_every: int = 500
    eval_episodes: int = 1000
    eval_c_way: int | None = None
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.train_episodes < 0:
            raise ContractError("train_episodes must be >= 0")
        if self.train_episodes and self.eval_every > 0 \
                and self.train_episodes % self.eval_every != 0:
            raise ContractError(
                f"eval_every ({self.eval_every}) must divide train_episodes "
                f"({self.train_episodes})")
        if self.eval_every <= 0:
            raise ContractError("eval_every must be positive")

    @property
    def queries(self) -> int:
        return self.k_shot if self.query_per_class is None else self.query_per_class

    def make_optimizer(self) -> OptimizerState:
        if self.optimizer == "sgd":
            return OptimizerState.sgd(self.learning_rate)
        if self.optimizer == "adam":
            return OptimizerState.adam(self.learning_rate, self.beta1, self.beta2,
                                       self.epsilon)
        raise ContractError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class EvalRun:
    """Accuracy at each evaluation checkpoint plus the checkpoint mean."""

    checkpoints: list[tuple[int, float]]
    final_accuracy: float = field(init=False)

    def __post_init__(self):
        if not self.checkpoints:
            raise ContractError("EvalRun needs at least one checkpoint")
        for _, acc in self.checkpoints:
            if not 0.0 <= acc <= 1.0:
                raise ContractError(f"accuracy {acc} outside [0, 1]")
        self.final_accuracy = float(np.mean([acc for _, acc in self.checkpoints]))


@dataclass
class TrainResult:
    bundle: ModelBundle
    loss_curve: list[tuple[int, float]]
    eval_run: EvalRun | None = None


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _one_hot(scores: Tensor, true_classes: list[int]) -> np.ndarray:
    n_query, n_classes = scores.shape
    if len(true_classes) != n_query:
        raise ContractError(f"score matrix has {n_query} rows for "
                            f"{len(true_classes)} true classes")
    onehot = np.zeros((n_query, n_classes))
    for row, true in enumerate(true_classes):
        if not 0 <= true < n_classes:
            raise ContractError(f"true class {true} outside [0, {n_classes})")
        onehot[row, true] = 1.0
    return onehot


def mse_episode_loss(graph: Graph, scores: Tensor,
                     true_classes: list[int]) -> Tensor:
    """Mean over (query, class) pairs of (score - one-hot target)^2."""
    delta = T.sub(scores, graph.constant(_one_hot(scores, true_classes)))
    return T.mean_axis(T.mul_elementwise(delta, delta))


def cross_entropy_episode_loss(graph: Graph, scores: Tensor,
                               true_classes: list[int]) -> Tensor:
    """Mean over queries of -log softmax(scores)[true class].

    Stabilized by shifting with the detached row max; the gradient is the
    exact softmax either way.
    """
    onehot = _one_hot(scores, true_classes)
    row_max = graph.constant(scores.value.max(axis=1, keepdims=True))
    shifted = T.sub(scores, T.broadcast_to(row_max, scores.shape))
    lse = T.add(T.log(T.sum_axis(T.exp(shifted), axis=1)),
                T.reshape(row_max, (scores.shape[0],)))
    true_score = T.sum_axis(T.mul_elementwise(scores, graph.constant(onehot)), axis=1)
    return T.mean_axis(T.sub(lse, true_score))


def episode_loss(graph: Graph, kind: str, scores: Tensor, true_classes) -> Tensor:
    if kind in MSE_KINDS:
        return mse_episode_loss(graph, scores, true_classes)
    return cross_entropy_episode_loss(graph, scores, true_classes)


# ---------------------------------------------------------------------------
# meta-training / meta-testing
# ---------------------------------------------------------------------------

def _check_label_disjointness(bundle: ModelBundle, collection: Collection) -> None:
    overlap = set(bundle.train_labels) & set(collection.label_index)
    if overlap:
        raise ContractError(
            f"test labels overlap the bundle's training labels: {sorted(overlap)}")


def _episode_accuracy(scores: np.ndarray, true_classes) -> float:
    predicted = np.argmax(scores, axis=1)
    return float(np.mean(predicted == np.asarray(true_classes)))


def _evaluate(bundle: ModelBundle, collection: Collection, c_way: int, k_shot: int,
              queries: int, episodes: int, seed: int) -> float:
    spec = EpisodeSpec(c_way=c_way, k_shot=k_shot, query_per_class=queries, seed=seed)
    accuracies = []
    for episode in episode_stream(collection, spec, episodes):
        graph = Graph()
        pnodes = bind_params(graph, bundle.params)
        scores, true_classes = episode_score_matrix(
            graph, pnodes, bundle.kind, bundle.config, episode)
        accuracies.append(_episode_accuracy(scores.value, true_classes))
    return float(np.mean(accuracies))


def default_model_config(kind: str, collection: Collection) -> ModelConfig:
    return ModelConfig(input_dim=collection.manifest.dimension)


def meta_train(kind: str, collection: Collection, config: TrainConfig,
               model_config: ModelConfig | None = None,
               eval_collection: Collection | None = None) -> TrainResult:
    """Train one model episodically; optionally evaluate at checkpoints.

    Returns the trained bundle, the per-episode loss curve, and (when an
    evaluation collection is given) the checkpoint EvalRun whose
    final_accuracy is the paper-style checkpoint mean.
    """
    if model_config is None:
        model_config = default_model_config(kind, collection)
    labels = collection.labels()
    if len(labels) < config.c_way:
        raise CapacityError(f"training collection has {len(labels)} labels, "
                            f"need C={config.c_way}")
    bundle = init_bundle(kind, model_config, seed=derive_seed(config.seed, "init", 0),
                         train_labels=labels)
    if eval_collection is not None:
        _check_label_disjointness(bundle, eval_collection)
    optimizer = config.make_optimizer()
    spec = EpisodeSpec(c_way=config.c_way, k_shot=config.k_shot,
                       query_per_class=config.queries,
                       seed=derive_seed(config.seed, "train", 0))
    eval_c = config.eval_c_way or config.c_way
    loss_curve: list[tuple[int, float]] = []
    checkpoints: list[tuple[int, float]] = []
    for step, episode in enumerate(
            episode_stream(collection, spec, config.train_episodes), start=1):
        try:
            graph = Graph()
            pnodes = bind_params(graph, bundle.params)
            scores, true_classes = episode_score_matrix(
                graph, pnodes, kind, model_config, episode)
            loss = episode_loss(graph, kind, scores, true_classes)
        except NumericError as err:
            raise NumericError(f"training aborted at episode {step}: {err}") from err
        grads_by_id = graph.backward(loss)
        grads = {name: grads_by_id[node.id] for name, node in pnodes.items()}
        bundle.params = optimizer_step(optimizer, bundle.params, grads)
        bundle.trained_episodes = step
        loss_value = loss.item()
        loss_curve.append((step, loss_value))
        if logger.isEnabledFor(logging.DEBUG) and step % 100 == 0:
            logger.debug("train kind=%s step=%d loss=%.6f", kind, step, loss_value)
        if eval_collection is not None and step % config.eval_every == 0:
            accuracy = _evaluate(bundle, eval_collection, eval_c, config.k_shot,
                                 config.queries, config.eval_episodes,
                                 seed=derive_seed(config.seed, "eval",
                                                  step // config.eval_every))
            checkpoints.append((step, accuracy))
            logger.info("eval kind=%s step=%d accuracy=%.4f", kind, step, accuracy)
    eval_run = EvalRun(checkpoints) if checkpoints else None
    return TrainResult(bundle=bundle, loss_curve=loss_curve, eval_run=eval_run)


def meta_test(bundle: ModelBundle, collection: Collection,
              config: TrainConfig) -> EvalRun:
    """Evaluate a trained bundle on unseen labels at a single checkpoint."""
    _check_label_disjointness(bundle, collection)
    eval_c = config.eval_c_way or config.c_way
    accuracy = _evaluate(bundle, collection, eval_c, config.k_shot, config.queries,
                         config.eval_episodes, seed=derive_seed(config.seed, "eval", 0))
    return EvalRun([(bundle.trained_episodes, accuracy)])


# ---------------------------------------------------------------------------
# experiment grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Which cells to run and with what schedule."""

    domains: tuple[str, ...]
    embedders: tuple[str, ...]
    models: tuple[str, ...]
    k_shots: tuple[int, ...]
    sizes: tuple[int, ...] = (50, 100, 200)
    c_way: int = 5
    query_per_class: int | None = None
    train_episodes: int = 10000
    eval_every: int = 500
    eval_episodes: int = 1000
    seed: int = 0
    workers: int = 1


@dataclass
class GridResult:
    """final_accuracy per (domain, embedder, model, k_shot, size) cell."""

    rows: dict[tuple[str, str, str, int, int], float] = field(default_factory=dict)
    absent: list[tuple[str, str, str, int, int]] = field(default_factory=list)


CellKey = tuple[str, str, str, int, int]


def _cell_seed(base_seed: int, key: CellKey) -> int:
    return derive_seed(base_seed, "cell/" + "/".join(str(part) for part in key), 0)


def run_experiment_grid(train_collections: dict[tuple[str, str, int], Collection],
                        test_collections: dict[tuple[str, str], Collection],
                        spec: GridSpec) -> GridResult:
    """meta_train + checkpoint meta-testing for every grid cell.

    ``train_collections`` is keyed by (test domain, embedder, size);
    ``test_collections`` by (test domain, embedder). Missing collections mark
    their cells absent and the grid continues. Each cell derives its own seed
    from its key, so parallel and serial execution give identical results.
    """
    keys: list[CellKey] = [
        (domain, embedder, model, k, size)
        for domain in spec.domains
        for embedder in spec.embedders
        for model in spec.models
        for k in spec.k_shots
        for size in spec.sizes
    ]
    result = GridResult()

    def run_cell(key: CellKey) -> tuple[CellKey, float | None]:
        domain, embedder, model, k, size = key
        train = train_collections.get((domain, embedder, size))
        test = test_collections.get((domain, embedder))
        if train is None or test is None:
            return key, None
        eval_c = min(spec.c_way, len(test.label_index))
        config = TrainConfig(
            k_shot=k, c_way=spec.c_way, query_per_class=spec.query_per_class,
            train_episodes=spec.train_episodes, eval_every=spec.eval_every,
            eval_episodes=spec.eval_episodes, eval_c_way=eval_c,
            seed=_cell_seed(spec.seed, key))
        outcome = meta_train(model, train, config, eval_collection=test)
        assert outcome.eval_run is not None
        logger.info("grid cell %s: final_accuracy=%.4f", key,
                    outcome.eval_run.final_accuracy)
        return key, outcome.eval_run.final_accuracy

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            outcomes = list(pool.map(run_cell, keys))
    else:
        outcomes = [run_cell(key) for key in keys]
    for key, accuracy in outcomes:
        if accuracy is None:
            result.absent.append(key)
            logger.warning("grid cell %s: collection missing, marked absent", key)
        else:
            result.rows[key] = accuracy
    return result


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _size_averaged(result: GridResult) -> dict[tuple[str, str, str, int], float]:
    grouped: dict[tuple[str, str, str, int], list[float]] = {}
    for (domain, embedder, model, k, _size), acc in result.rows.items():
        grouped.setdefault((domain, embedder, model, k), []).append(acc)
    return {key: float(np.mean(values)) for key, values in sorted(grouped.items())}


def aggregate_report(result: GridResult, format: str = "csv") -> str:
    """Render size-averaged accuracies as CSV or Markdown (percent, 1 decimal)."""
    if not result.rows:
        raise ContractError("cannot render an empty grid")
    averaged = _size_averaged(result)
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["domain", "embedder", "model", "k_shot", "accuracy"])
        for (domain, embedder, model, k), acc in averaged.items():
            writer.writerow([domain, embedder, model, k, f"{100 * acc:.1f}"])
        return buffer.getvalue()
    if format == "markdown":
        embedders = sorted({key[1] for key in averaged})
        blocks = []
        for embedder in embedders:
            subset = {key: acc for key, acc in averaged.items() if key[1] == embedder}
            columns = sorted({(model, k) for (_, _, model, k) in subset})
            domains = sorted({key[0] for key in subset})
            header = "| domain | " + " | ".join(
                f"{model} K={k}" for model, k in columns) + " |"
            rule = "|" + "---|" * (len(columns) + 1)
            lines = [f"## {embedder}", "", header, rule]
            for domain in domains:
                cells = []
                for model, k in columns:
                    acc = subset.get((domain, embedder, model, k))
                    cells.append("-" if acc is None else f"{100 * acc:.1f}")
                lines.append(f"| {domain} | " + " | ".join(cells) + " |")
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"
    raise ContractError(f"unknown report format {format!r}")
