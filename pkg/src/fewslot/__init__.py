"""Metric-based few-shot learners for slot tagging over word embeddings."""

from .data import (Collection, CollectionManifest, DomainSplit, Triplet,
                   build_domain_splits, read_collection, subsample_collection,
                   subset_by_labels, validate_collection, write_collection)
from .episodes import Episode, EpisodeSpec, derive_seed, episode_stream, sample_episode
from .models import (AttentiveDiagnostics, ModelBundle, ModelConfig,
                     PredictionDistribution, attentive_relation_scores, class_sum,
                     encode, init_bundle, load_bundle, matching_scores,
                     one_shot_equivalence_check, prototypical_scores,
                     relation_scores, save_bundle)
from .optim import OptimizerState, optimizer_step
from .synth import make_synthetic_collection
from .tensor import Graph, GradCheckReport, Tensor, grad_check
from .training import (EvalRun, GridResult, GridSpec, TrainConfig, TrainResult,
                       aggregate_report, cross_entropy_episode_loss,
                       meta_test, meta_train, mse_episode_loss,
                       run_experiment_grid)

__version__ = "0.1.0"
