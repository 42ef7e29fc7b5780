"""Cloud optical thickness regression and threshold-based cloud masks."""

from .core import BAND_NAMES, Dataset, SplitRatios, split_dataset
from .features import Normalizer, fit_normalizer
from .inference import classify_cot, image_level_label, predict_raster, run_inference, smooth_cot_map
from .metrics import accumulate_confusion, calibrate_threshold, evaluate_regression, mae, per_class_scores
from .mlp import Ensemble, Model, TrainConfig, init_mlp, load_model, save_model, train_model
from .surrogate_rt import generate_dataset, render_scenes
from .weak_finetune import ThresholdSet, finetune, weak_loss

__version__ = "0.1.0"
