"""The four metric-learning heads and the shared trainable encoder.

Matching, prototypical, and relation models encode inputs with a small MLP
(d -> hidden -> out, ReLU after the first layer). The relation-family heads
read a pair feature: the class representation (support-count-normalized class
sum) stacked with the query feature as a 2-channel map, so the first
convolution sees both halves of the pair at every position and can learn
support/query interactions. The
attentive relational model skips the encoder and consumes raw pretrained
vectors: two residual conv blocks produce local descriptors, a kernel-size-1
conv scores each position (compatibility), a sigmoid turns scores into
attention, and a linear classifier over [attention-weighted descriptor,
compatibility] emits the relation score.

Scoring functions exist at two levels: graph builders used by training (and
by evaluation, forward-only), and array-in/array-out public ops that wrap a
throwaway graph. Per-class scores are always "higher is better"; distances
are stored negated. Ties break toward the lowest class index.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import tensor as T
from .episodes import Episode
from .errors import ContractError, DimensionError, NumericError
from .fileio import atomic_write_text
from .tensor import Graph, Tensor

Array = np.ndarray

MODEL_KINDS = ("matching", "prototypical", "relation", "attentive")


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters; defaults match the experiment setup."""

    input_dim: int
    encoder_hidden: int = 128
    encoder_out: int = 64
    channels: int = 32
    kernel: int = 3
    fc_hidden: int = 64
    sequential_blocks: bool = True

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        return cls(**raw)


@dataclass
class PredictionDistribution:
    """Per-class scores (higher is better) and the argmax class."""

    scores: Array
    predicted_class: int

    @classmethod
    def from_scores(cls, scores) -> "PredictionDistribution":
        arr = np.asarray(scores, dtype=np.float64).reshape(-1)
        return cls(scores=arr, predicted_class=int(np.argmax(arr)))


@dataclass
class AttentiveDiagnostics:
    """Intermediate quantities of one attentive-head evaluation."""

    score: float
    compatibility: Array
    attention: Array
    global_feature: Array


@dataclass
class ModelBundle:
    """Parameters plus hyperparameters for one learner."""

    kind: str
    config: ModelConfig
    params: dict[str, Array]
    train_labels: tuple[str, ...] = ()
    trained_episodes: int = 0


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def _he(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


def _out_layer(rng, shape, fan_in):
    return rng.normal(0.0, np.sqrt(1.0 / fan_in), size=shape)


def _near_zero(rng, shape):
    # score-producing layers start close to sigmoid's linear regime (r ~ 0.5);
    # class sums are unnormalized, so standard init would saturate the sigmoid
    # and stall MSE training (no batch norm in these blocks by design)
    return rng.normal(0.0, 1e-3, size=shape)


def _semi_orthogonal(rng, rows, cols, gain):
    raw = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, _ = np.linalg.qr(raw)
    return gain * (q if q.shape == (rows, cols) else q.T)


def _encoder_params(rng, cfg: ModelConfig) -> dict[str, Array]:
    """Encoder init that starts close to an isometry of the input space.

    Metric heads work directly on encoder outputs, so a random init that
    scrambles the pretrained-embedding geometry costs accuracy before
    training even starts. When the widths allow it, the first layer stacks
    [I; -I] (ReLU then keeps x as x+ and x-) and the second reconstructs x,
    plus small noise for symmetry breaking; otherwise both layers fall back
    to semi-orthogonal matrices (norm-preserving in expectation).
    """
    d, h, out = cfg.input_dim, cfg.encoder_hidden, cfg.encoder_out
    if 2 * d <= h and d <= out:
        w1 = rng.normal(0.0, 0.01, size=(h, d))
        w1[:d] += np.eye(d)
        w1[d:2 * d] -= np.eye(d)
        w2 = rng.normal(0.0, 0.01, size=(out, h))
        w2[:d, :d] += np.eye(d)
        w2[:d, d:2 * d] -= np.eye(d)
    else:
        w1 = _semi_orthogonal(rng, h, d, gain=np.sqrt(2.0))
        w2 = _semi_orthogonal(rng, out, h, gain=1.0)
    return {
        "encoder.w1": w1,
        "encoder.b1": np.zeros((h, 1)),
        "encoder.w2": w2,
        "encoder.b2": np.zeros((out, 1)),
    }


def _relation_head_params(rng, cfg: ModelConfig) -> dict[str, Array]:
    ch, k, length = cfg.channels, cfg.kernel, cfg.encoder_out
    return {
        "head.conv1.w": _he(rng, (ch, 2, k), 2 * k),
        "head.conv1.b": np.zeros((ch, 1)),
        "head.conv2.w": _he(rng, (ch, ch, k), ch * k),
        "head.conv2.b": np.zeros((ch, 1)),
        "head.fc1.w": _he(rng, (cfg.fc_hidden, ch * length), ch * length),
        "head.fc1.b": np.zeros((cfg.fc_hidden, 1)),
        "head.fc2.w": _near_zero(rng, (1, cfg.fc_hidden)),
        "head.fc2.b": np.zeros((1, 1)),
    }


def _attentive_head_params(rng, cfg: ModelConfig) -> dict[str, Array]:
    ch, k, d = cfg.channels, cfg.kernel, cfg.input_dim
    params = {
        "head.block1.w": _he(rng, (ch, 2, k), 2 * k),
        "head.block1.b": np.zeros((ch, 1)),
        "head.block1.proj_w": _he(rng, (ch, 2, 1), 2),
        "head.block1.proj_b": np.zeros((ch, 1)),
    }
    if cfg.sequential_blocks:
        params["head.block2.w"] = _he(rng, (ch, ch, k), ch * k)
        params["head.block2.b"] = np.zeros((ch, 1))
    else:
        # parallel wiring: block 2 also reads the 2-channel pair feature
        params["head.block2.w"] = _he(rng, (ch, 2, k), 2 * k)
        params["head.block2.b"] = np.zeros((ch, 1))
        params["head.block2.proj_w"] = _he(rng, (ch, 2, 1), 2)
        params["head.block2.proj_b"] = np.zeros((ch, 1))
    params["head.compat.w"] = _near_zero(rng, (1, ch, 1))
    params["head.compat.b"] = np.zeros((1, 1))
    params["head.classifier.w"] = _near_zero(rng, (1, ch * d + d))
    params["head.classifier.b"] = np.zeros((1, 1))
    return params


def init_bundle(kind: str, config: ModelConfig, seed: int,
                train_labels=()) -> ModelBundle:
    """Freshly initialized parameters for one model kind, seeded."""
    if kind not in MODEL_KINDS:
        raise ContractError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    rng = np.random.default_rng(seed)
    if kind in ("matching", "prototypical"):
        params = _encoder_params(rng, config)
    elif kind == "relation":
        params = _encoder_params(rng, config)
        params.update(_relation_head_params(rng, config))
    else:
        params = _attentive_head_params(rng, config)
    return ModelBundle(kind=kind, config=config, params=params,
                       train_labels=tuple(sorted(train_labels)))


# ---------------------------------------------------------------------------
# checkpoint io (exact round-trip, deterministic bytes)
# ---------------------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_bundle(bundle: ModelBundle, path: str | Path) -> None:
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "kind": bundle.kind,
        "config": bundle.config.to_dict(),
        "train_labels": list(bundle.train_labels),
        "trained_episodes": bundle.trained_episodes,
        "params": {
            name: {"shape": list(arr.shape), "data": [float(v) for v in arr.reshape(-1)]}
            for name, arr in bundle.params.items()
        },
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True) + "\n")


def load_bundle(path: str | Path) -> ModelBundle:
    raw = json.loads(Path(path).read_text("utf-8"))
    if raw.get("format_version") != CHECKPOINT_VERSION:
        raise ContractError(f"unsupported checkpoint version {raw.get('format_version')}")
    params = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in raw["params"].items()
    }
    return ModelBundle(kind=raw["kind"], config=ModelConfig.from_dict(raw["config"]),
                       params=params, train_labels=tuple(raw["train_labels"]),
                       trained_episodes=int(raw["trained_episodes"]))


# ---------------------------------------------------------------------------
# graph builders
# ---------------------------------------------------------------------------

def bind_params(graph: Graph, params: dict[str, Array]) -> dict[str, Tensor]:
    """Insert parameter nodes in name order; returns name -> node."""
    return {name: graph.parameter(params[name]) for name in sorted(params)}


def _linear(weights: Tensor, bias: Tensor, x: Tensor) -> Tensor:
    return T.add(T.matmul(weights, x), bias)


def _conv_layer(x: Tensor, weights: Tensor, bias: Tensor, padding="same") -> Tensor:
    out = T.conv1d(x, weights, padding)
    return T.add(out, T.broadcast_to(bias, out.shape))


def encode_node(pnodes: dict[str, Tensor], x: Tensor) -> Tensor:
    """Encoder forward: column vector [d,1] -> feature column [out,1]."""
    hidden = T.relu(_linear(pnodes["encoder.w1"], pnodes["encoder.b1"], x))
    return _linear(pnodes["encoder.w2"], pnodes["encoder.b2"], hidden)


def pair_feature(class_rep_node: Tensor, query_node: Tensor) -> Tensor:
    """Stack a class representation and a query [L,1] into a 2-channel map [2,L]."""
    length = class_rep_node.shape[0]
    return T.concat(T.reshape(class_rep_node, (1, length)),
                    T.reshape(query_node, (1, length)), axis=0)


def relation_head_node(pnodes: dict[str, Tensor], pair: Tensor,
                       cfg: ModelConfig) -> Tensor:
    """Relation module on a 2-channel pair feature [2,L]; returns scalar score."""
    x = pair
    h = T.relu(_conv_layer(x, pnodes["head.conv1.w"], pnodes["head.conv1.b"]))
    h = T.relu(_conv_layer(h, pnodes["head.conv2.w"], pnodes["head.conv2.b"]))
    flat = T.reshape(h, (h.shape[0] * h.shape[1], 1))
    f = T.relu(_linear(pnodes["head.fc1.w"], pnodes["head.fc1.b"], flat))
    score = T.sigmoid(_linear(pnodes["head.fc2.w"], pnodes["head.fc2.b"], f))
    return T.reshape(score, ())


def attentive_head_node(pnodes: dict[str, Tensor], pair: Tensor,
                        cfg: ModelConfig) -> tuple[Tensor, dict[str, Tensor]]:
    """Attentive relational module on a 2-channel raw pair feature [2,d].

    Returns the scalar relation score plus the intermediate nodes
    (compatibility, attention, global feature) for diagnostics.
    """
    d = pair.shape[1]
    x = pair
    pre1 = T.add(_conv_layer(x, pnodes["head.block1.w"], pnodes["head.block1.b"]),
                 _conv_layer(x, pnodes["head.block1.proj_w"], pnodes["head.block1.proj_b"]))
    local1 = T.relu(pre1)
    if cfg.sequential_blocks:
        pre2 = T.add(_conv_layer(local1, pnodes["head.block2.w"], pnodes["head.block2.b"]),
                     local1)
    else:
        pre2 = T.add(_conv_layer(x, pnodes["head.block2.w"], pnodes["head.block2.b"]),
                     _conv_layer(x, pnodes["head.block2.proj_w"],
                                 pnodes["head.block2.proj_b"]))
    local2 = T.relu(pre2)
    summed = T.add(local1, local2)
    compat = _conv_layer(summed, pnodes["head.compat.w"], pnodes["head.compat.b"])
    attention = T.sigmoid(compat)
    channels = local1.shape[0]
    weighted = T.mul_elementwise(local1, T.broadcast_to(attention, (channels, d)))
    global_flat = T.reshape(weighted, (channels * d, 1))
    compat_flat = T.reshape(compat, (d, 1))
    joint = T.concat(global_flat, compat_flat, axis=0)
    score = T.sigmoid(_linear(pnodes["head.classifier.w"],
                              pnodes["head.classifier.b"], joint))
    return T.reshape(score, ()), {
        "compatibility": compat,
        "attention": attention,
        "global_feature": global_flat,
    }


def _cosine_node(a: Tensor, b: Tensor, a_norm: Tensor, b_norm: Tensor) -> Tensor:
    dot = T.sum_axis(T.mul_elementwise(a, b))
    return T.div(dot, T.mul_elementwise(a_norm, b_norm))


def _norm_node(x: Tensor) -> Tensor:
    return T.sqrt(T.sum_axis(T.mul_elementwise(x, x)))


def _mean_of(nodes: list[Tensor]) -> Tensor:
    total = nodes[0]
    for node in nodes[1:]:
        total = T.add(total, node)
    return T.scale(total, 1.0 / len(nodes))


def _sum_of(nodes: list[Tensor]) -> Tensor:
    total = nodes[0]
    for node in nodes[1:]:
        total = T.add(total, node)
    return total


def _group_by_class(items, classes, n_classes) -> list[list]:
    groups: list[list] = [[] for _ in range(n_classes)]
    for item, class_index in zip(items, classes):
        if not 0 <= class_index < n_classes:
            raise ContractError(f"class index {class_index} outside [0, {n_classes})")
        groups[class_index].append(item)
    for class_index, group in enumerate(groups):
        if not group:
            raise ContractError(f"class {class_index} has no support examples")
    return groups


def episode_score_nodes(graph: Graph, pnodes: dict[str, Tensor], kind: str,
                        cfg: ModelConfig, episode: Episode,
                        ) -> tuple[list[list[Tensor]], list[int]]:
    """Per-query, per-class score nodes for one episode under one model.

    Shared quantities (support features, norms, prototypes, class sums) are
    built once and reused across queries.
    """
    n_classes = len(episode.labels)
    support_vecs = [t.vector for t, _ in episode.support]
    support_classes = [ci for _, ci in episode.support]
    query_vecs = [t.vector for t, _ in episode.query]
    true_classes = [ci for _, ci in episode.query]

    def column(vec: Array) -> Tensor:
        if vec.size != cfg.input_dim:
            raise DimensionError(f"vector dimension {vec.size} does not match "
                                 f"model input_dim {cfg.input_dim}")
        return graph.constant(vec.reshape(-1, 1))

    if kind in ("matching", "prototypical", "relation"):
        support_feats = [encode_node(pnodes, column(v)) for v in support_vecs]
        query_feats = [encode_node(pnodes, column(v)) for v in query_vecs]
    elif kind == "attentive":
        support_feats = [column(v) for v in support_vecs]
        query_feats = [column(v) for v in query_vecs]
    else:
        raise ContractError(f"unknown model kind {kind!r}")

    by_class = _group_by_class(support_feats, support_classes, n_classes)
    scores: list[list[Tensor]] = []

    if kind == "matching":
        support_norms = [[_norm_node(f) for f in group] for group in by_class]
        for query in query_feats:
            qnorm = _norm_node(query)
            row = []
            for group, norms in zip(by_class, support_norms):
                cosines = [_cosine_node(s, query, ns, qnorm)
                           for s, ns in zip(group, norms)]
                row.append(_mean_of(cosines))
            scores.append(row)
    elif kind == "prototypical":
        prototypes = [_mean_of(group) for group in by_class]
        for query in query_feats:
            row = []
            for proto in prototypes:
                delta = T.sub(query, proto)
                dist = T.sqrt(T.sum_axis(T.mul_elementwise(delta, delta)))
                row.append(T.scale(dist, -1.0))
            scores.append(row)
    else:
        # class channel is the support-count-normalized class sum: without
        # batch norm in the head, a raw sum would make input scale (and the
        # encoder gradient) grow with K
        class_reps = [_mean_of(group) for group in by_class]
        for query in query_feats:
            row = []
            for rep in class_reps:
                pair = pair_feature(rep, query)
                if kind == "relation":
                    row.append(relation_head_node(pnodes, pair, cfg))
                else:
                    row.append(attentive_head_node(pnodes, pair, cfg)[0])
            scores.append(row)
    return scores, true_classes


# ---------------------------------------------------------------------------
# batched episode scoring (one tensor program per episode)
# ---------------------------------------------------------------------------

def encode_matrix(pnodes: dict[str, Tensor], x: Tensor) -> Tensor:
    """Encoder applied to a matrix of column vectors [d, N] -> [out, N]."""
    n = x.shape[1]
    pre = T.matmul(pnodes["encoder.w1"], x)
    hidden = T.relu(T.add(pre, T.broadcast_to(pnodes["encoder.b1"], pre.shape)))
    out = T.matmul(pnodes["encoder.w2"], hidden)
    return T.add(out, T.broadcast_to(pnodes["encoder.b2"], (out.shape[0], n)))


def _bias3(bias: Tensor, shape: tuple[int, int, int]) -> Tensor:
    return T.broadcast_to(T.reshape(bias, (1, bias.shape[0], 1)), shape)


def _conv_layer_batch(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    out = T.conv1d_batch(x, weights, "same")
    return T.add(out, _bias3(bias, out.shape))


def relation_head_matrix(pnodes: dict[str, Tensor], pairs: Tensor,
                         cfg: ModelConfig) -> Tensor:
    """Relation module over a batch of pair features [B, 2, L] -> scores [B, 1]."""
    batch = pairs.shape[0]
    x = pairs
    h = T.relu(_conv_layer_batch(x, pnodes["head.conv1.w"], pnodes["head.conv1.b"]))
    h = T.relu(_conv_layer_batch(h, pnodes["head.conv2.w"], pnodes["head.conv2.b"]))
    flat = T.reshape(h, (batch, h.shape[1] * h.shape[2]))
    f = T.matmul(flat, T.transpose(pnodes["head.fc1.w"]))
    f = T.relu(T.add(f, T.broadcast_to(T.transpose(pnodes["head.fc1.b"]), f.shape)))
    score = T.matmul(f, T.transpose(pnodes["head.fc2.w"]))
    score = T.add(score, T.broadcast_to(pnodes["head.fc2.b"], score.shape))
    return T.sigmoid(score)


def attentive_head_matrix(pnodes: dict[str, Tensor], pairs: Tensor,
                          cfg: ModelConfig) -> Tensor:
    """Attentive relational module over pair features [B, 2, d] -> scores [B, 1]."""
    batch, _, d = pairs.shape
    x = pairs
    pre1 = T.add(_conv_layer_batch(x, pnodes["head.block1.w"], pnodes["head.block1.b"]),
                 _conv_layer_batch(x, pnodes["head.block1.proj_w"],
                                   pnodes["head.block1.proj_b"]))
    local1 = T.relu(pre1)
    if cfg.sequential_blocks:
        pre2 = T.add(_conv_layer_batch(local1, pnodes["head.block2.w"],
                                       pnodes["head.block2.b"]), local1)
    else:
        pre2 = T.add(_conv_layer_batch(x, pnodes["head.block2.w"],
                                       pnodes["head.block2.b"]),
                     _conv_layer_batch(x, pnodes["head.block2.proj_w"],
                                       pnodes["head.block2.proj_b"]))
    local2 = T.relu(pre2)
    summed = T.add(local1, local2)
    compat = _conv_layer_batch(summed, pnodes["head.compat.w"], pnodes["head.compat.b"])
    attention = T.sigmoid(compat)
    channels = local1.shape[1]
    weighted = T.mul_elementwise(local1, T.broadcast_to(attention, (batch, channels, d)))
    joint = T.concat(T.reshape(weighted, (batch, channels * d)),
                     T.reshape(compat, (batch, d)), axis=1)
    score = T.matmul(joint, T.transpose(pnodes["head.classifier.w"]))
    score = T.add(score, T.broadcast_to(pnodes["head.classifier.b"], score.shape))
    return T.sigmoid(score)


def _indicator(rows: int, cols: int, ones: list[tuple[int, int]]) -> Array:
    m = np.zeros((rows, cols))
    for r, c in ones:
        m[r, c] = 1.0
    return m


def episode_score_matrix(graph: Graph, pnodes: dict[str, Tensor], kind: str,
                         cfg: ModelConfig, episode: Episode,
                         ) -> tuple[Tensor, list[int]]:
    """Batched counterpart of episode_score_nodes: one [Q, C] score tensor.

    Numerically equal to the per-pair path up to float summation order; this
    is the program meta-training differentiates.
    """
    n_classes = len(episode.labels)
    support_classes = [ci for _, ci in episode.support]
    true_classes = [ci for _, ci in episode.query]
    n_support = len(episode.support)
    n_query = len(episode.query)
    for class_index, count in enumerate(np.bincount(support_classes,
                                                    minlength=n_classes)):
        if count == 0:
            raise ContractError(f"class {class_index} has no support examples")

    def matrix_of(entries) -> Tensor:
        stacked = np.stack([t.vector for t, _ in entries], axis=1)
        if stacked.shape[0] != cfg.input_dim:
            raise DimensionError(f"vector dimension {stacked.shape[0]} does not "
                                 f"match model input_dim {cfg.input_dim}")
        return graph.constant(stacked)

    support = matrix_of(episode.support)
    query = matrix_of(episode.query)
    if kind in ("matching", "prototypical", "relation"):
        support = encode_matrix(pnodes, support)
        query = encode_matrix(pnodes, query)
    elif kind != "attentive":
        raise ContractError(f"unknown model kind {kind!r}")

    member = _indicator(n_support, n_classes,
                        [(i, ci) for i, ci in enumerate(support_classes)])
    counts = member.sum(axis=0)

    if kind == "matching":
        def normalize(m: Tensor) -> Tensor:
            norms = T.sqrt(T.sum_axis(T.mul_elementwise(m, m), axis=0))
            norms = T.reshape(norms, (1, m.shape[1]))
            return T.div(m, T.broadcast_to(norms, m.shape))

        cosines = T.matmul(T.transpose(normalize(support)), normalize(query))
        class_mean = graph.constant((member / counts).T)
        scores = T.transpose(T.matmul(class_mean, cosines))
        return scores, true_classes

    if kind == "prototypical":
        prototypes = T.matmul(support, graph.constant(member / counts))
        expand_c = graph.constant(_indicator(
            n_classes, n_query * n_classes,
            [(b % n_classes, b) for b in range(n_query * n_classes)]))
        expand_q = graph.constant(_indicator(
            n_query, n_query * n_classes,
            [(b // n_classes, b) for b in range(n_query * n_classes)]))
        deltas = T.sub(T.matmul(query, expand_q), T.matmul(prototypes, expand_c))
        dist = T.sqrt(T.sum_axis(T.mul_elementwise(deltas, deltas), axis=0))
        scores = T.scale(T.reshape(dist, (n_query, n_classes)), -1.0)
        return scores, true_classes

    class_reps = T.matmul(support, graph.constant(member / counts))
    n_pairs = n_query * n_classes
    expand_c = graph.constant(_indicator(
        n_classes, n_pairs, [(b % n_classes, b) for b in range(n_pairs)]))
    expand_q = graph.constant(_indicator(
        n_query, n_pairs, [(b // n_classes, b) for b in range(n_pairs)]))
    length = class_reps.shape[0]
    rep_channel = T.reshape(T.transpose(T.matmul(class_reps, expand_c)),
                            (n_pairs, 1, length))
    query_channel = T.reshape(T.transpose(T.matmul(query, expand_q)),
                              (n_pairs, 1, length))
    pairs = T.concat(rep_channel, query_channel, axis=1)
    if kind == "relation":
        flat = relation_head_matrix(pnodes, pairs, cfg)
    else:
        flat = attentive_head_matrix(pnodes, pairs, cfg)
    return T.reshape(flat, (n_query, n_classes)), true_classes


# ---------------------------------------------------------------------------
# public array-level operations
# ---------------------------------------------------------------------------

def _as_columns(features) -> list[Array]:
    return [np.asarray(f, dtype=np.float64).reshape(-1, 1) for f in features]


def encode(bundle: ModelBundle, vector) -> Array:
    """Run the encoder of a matching/prototypical/relation bundle on one vector."""
    if "encoder.w1" not in bundle.params:
        raise ContractError(f"bundle of kind {bundle.kind!r} has no encoder")
    vec = np.asarray(vector, dtype=np.float64).reshape(-1)
    if vec.size != bundle.config.input_dim:
        raise DimensionError(f"vector dimension {vec.size} does not match "
                             f"encoder input_dim {bundle.config.input_dim}")
    graph = Graph()
    pnodes = bind_params(graph, bundle.params)
    out = encode_node(pnodes, graph.constant(vec.reshape(-1, 1)))
    return out.value.reshape(-1)


def matching_scores(support_features, support_classes, query_feature,
                    ) -> PredictionDistribution:
    """Mean cosine similarity to each class's supports; argmax class wins."""
    supports = _as_columns(support_features)
    query = np.asarray(query_feature, dtype=np.float64).reshape(-1, 1)
    for i, s in enumerate(supports):
        if not np.linalg.norm(s) > 0.0:
            raise NumericError(f"support feature {i} has zero norm")
    if not np.linalg.norm(query) > 0.0:
        raise NumericError("query feature has zero norm")
    n_classes = max(support_classes) + 1
    graph = Graph()
    groups = _group_by_class([graph.constant(s) for s in supports],
                             support_classes, n_classes)
    qnode = graph.constant(query)
    qnorm = _norm_node(qnode)
    values = []
    for group in groups:
        cosines = [_cosine_node(s, qnode, _norm_node(s), qnorm) for s in group]
        values.append(_mean_of(cosines).item())
    return PredictionDistribution.from_scores(values)


def prototypical_scores(support_features, support_classes, query_feature,
                        ) -> PredictionDistribution:
    """Negative Euclidean distance to each class mean; argmax class wins."""
    supports = _as_columns(support_features)
    query = np.asarray(query_feature, dtype=np.float64).reshape(-1, 1)
    n_classes = max(support_classes) + 1
    graph = Graph()
    groups = _group_by_class([graph.constant(s) for s in supports],
                             support_classes, n_classes)
    qnode = graph.constant(query)
    values = []
    for group in groups:
        proto = _mean_of(group)
        delta = T.sub(qnode, proto)
        dist = T.sqrt(T.sum_axis(T.mul_elementwise(delta, delta)))
        values.append(-dist.item())
    return PredictionDistribution.from_scores(values)


def class_sum(support_features, support_classes) -> list[Array]:
    """Elementwise sum of each class's support features, ordered by class."""
    supports = [np.asarray(f, dtype=np.float64).reshape(-1) for f in support_features]
    n_classes = max(support_classes) + 1
    groups = _group_by_class(supports, support_classes, n_classes)
    return [np.sum(group, axis=0) for group in groups]


def class_representation(support_features, support_classes) -> list[Array]:
    """Per-class support-count-normalized class sum (the heads' class channel)."""
    sums = class_sum(support_features, support_classes)
    counts = np.bincount(np.asarray(support_classes), minlength=len(sums))
    return [s / n for s, n in zip(sums, counts)]


def relation_scores(bundle: ModelBundle, support_features, support_classes,
                    query_feature) -> PredictionDistribution:
    """Relation-module score of the query against each class's supports."""
    if bundle.kind != "relation":
        raise ContractError(f"expected a relation bundle, got {bundle.kind!r}")
    query = np.asarray(query_feature, dtype=np.float64).reshape(-1, 1)
    graph = Graph()
    pnodes = bind_params(graph, bundle.params)
    qnode = graph.constant(query)
    values = []
    for rep in class_representation(support_features, support_classes):
        rep = rep.reshape(-1, 1)
        if rep.shape != query.shape:
            raise DimensionError(f"class representation shape {rep.shape} does not "
                                 f"match query shape {query.shape}")
        pair = pair_feature(graph.constant(rep), qnode)
        values.append(relation_head_node(pnodes, pair, bundle.config).item())
    return PredictionDistribution.from_scores(values)


def attentive_relation_scores(bundle: ModelBundle, support_vectors,
                              support_classes, query_vector,
                              ) -> tuple[PredictionDistribution,
                                         list[AttentiveDiagnostics]]:
    """Attentive-head scores over raw (un-encoded) vectors, with diagnostics."""
    if bundle.kind != "attentive":
        raise ContractError(f"expected an attentive bundle, got {bundle.kind!r}")
    reps = class_representation(support_vectors, support_classes)
    query = np.asarray(query_vector, dtype=np.float64).reshape(-1, 1)
    graph = Graph()
    pnodes = bind_params(graph, bundle.params)
    qnode = graph.constant(query)
    values = []
    diagnostics = []
    for rep in reps:
        pair = pair_feature(graph.constant(rep.reshape(-1, 1)), qnode)
        score, extras = attentive_head_node(pnodes, pair, bundle.config)
        values.append(score.item())
        diagnostics.append(AttentiveDiagnostics(
            score=score.item(),
            compatibility=extras["compatibility"].value.reshape(-1).copy(),
            attention=extras["attention"].value.reshape(-1).copy(),
            global_feature=extras["global_feature"].value.reshape(-1).copy(),
        ))
    return PredictionDistribution.from_scores(values), diagnostics


def one_shot_equivalence_check(support_features, support_classes,
                               query_feature) -> bool:
    """With one unit-norm support per class, matching and prototypical must agree.

    On the unit sphere the squared Euclidean distance is 2 - 2 cos, so the
    cosine argmax and the distance argmin coincide. Rejects K > 1 and
    unnormalized inputs.
    """
    supports = _as_columns(support_features)
    query = np.asarray(query_feature, dtype=np.float64).reshape(-1, 1)
    counts = np.bincount(np.asarray(support_classes))
    if not np.all(counts == 1):
        raise ContractError(f"one-shot check requires K=1, got per-class counts "
                            f"{counts.tolist()}")
    for name, vec in [("query", query)] + [(f"support {i}", s)
                                           for i, s in enumerate(supports)]:
        norm = float(np.linalg.norm(vec))
        if abs(norm - 1.0) > 1e-9:
            raise ContractError(f"{name} is not unit-normalized (norm={norm!r})")
    matched = matching_scores(supports, support_classes, query)
    proto = prototypical_scores(supports, support_classes, query)
    return matched.predicted_class == proto.predicted_class
