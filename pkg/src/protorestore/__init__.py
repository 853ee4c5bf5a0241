"""Feature-space few-shot classification with learned prototype restoration.

The package operates on stored feature banks: deterministic synthetic
benchmarks or vectors exported from any upstream encoder.  Class
prototypes are support-set means; a small learned regressor pulls
unrepresentative prototypes back toward their class centroid, and an
optional self-training step refines prototypes with retrieved unlabeled
vectors.  An episodic harness measures each variant with paired,
replayable episodes.
"""

__version__ = "0.1.0"

from .embedtrain import (DualLossConfig, Episode, EpisodeSpec,
                         apply_embedding, episode_loss, sample_episode,
                         train_embedding)
from .evalharness import (EvalConfig, EvalReport, distance_stats,
                          emit_projection, enhancement, lambda_sweep,
                          nway_sweep, paired_ci, run_eval)
from .featstore import (FeatureBank, FeatureRecord, SplitManifest, load_bank,
                        save_bank, view_split)
from .neural import (AdamState, DenseNet2, TrainConfig, adam_step, backward,
                     forward, grad_check, init_net, load_net, save_net)
from .numerics import (RngStream, ci95, format_mean_ci, mean_vec, pca2d,
                       softmax, sq_euclidean)
from .protocore import (Prototype, class_posteriors, classify_nn,
                        compute_prototype, posterior_argmax)
from .restore import (PairSet, RestoreModel, TargetPrototypes, collect_pairs,
                      compute_targets, load_model, restore, save_model,
                      train_restore, transform)
from .selftrain import UnlabeledPool, refine_prototype
from .synthgen import GroundTruth, SynthSpec, generate, load_oracle, save_oracle
