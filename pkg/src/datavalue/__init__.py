"""Data valuation algorithms and a benchmark harness for noisy-data detection
and point removal/addition experiments."""

from .dataset import (Dataset, NoiseRecord, SplitIndices, inject_feature_noise,
                      inject_label_noise, load_csv, split_by_count, synth_blobs, synth_friedman)
from .evaluation import (detect, detection_f1, point_addition_curve, point_removal_curve,
                         two_means_split)
from .learners import LearnerSpec, fit, predict
from .marginal import ConvergenceConfig, gelman_rubin, run_tmc, scan_permutation
from .utility import (FunctionUtility, SetUtility, UtilitySpec, eval_utility, knn_utility,
                      volume_utility)
from .valuators import (ValueVector, ame, beta_shapley, beta_weights, data_banzhaf, data_oob,
                        data_shapley, influence_subset, knn_shapley, lava, loo, random_baseline,
                        volume_shapley)

__version__ = "0.1.0"
