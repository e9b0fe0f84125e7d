"""rotforge: rotation-forest ensembles with build-time prediction and
contract (time-budgeted) training."""

from .data import Dataset, ResamplePlan, load_arff, load_csv, stratified_resample
from .forests import (ForestConfig, ForestModel, build_hybrid,
                      build_random_attribute_rotf, build_random_forest,
                      build_rotation_forest, forest_predict, load_model,
                      save_model)
from .budget import (ContractConfig, TimingModel, TimingObservation, calibrate,
                     contract_train, fit_timing_model, predict_time,
                     prediction_interval, reference_timing_model)
from .evaluation import (ClassifierSpec, MetricReport, PredictionRecord,
                         auc_weighted, balanced_error, build_classifier,
                         cross_validate, error_rate, grid_tune, metric_report,
                         nll, sensitivity_sweep)
from .rotation import RotationConfig, RotationSet, apply_rotation, build_rotation
from .stats import (CliqueReport, ResultsMatrix, cd_diagram, friedman,
                    holm_cliques, paired_t, wilcoxon_signed_rank)
from .trees import TreeConfig, best_numeric_split, build_tree, entropy, tree_predict

__version__ = "0.1.0"
