"""Recurrent 6-DoF relocalization from short video clips.

A per-frame feature extractor feeds a bidirectional LSTM whose per-step
outputs are either point poses (translation plus unit quaternion) or a
Gaussian mixture over poses. Everything is plain numpy with hand-written
gradients.
"""

from .data import ClipDataset, DatasetError, Sequence, SyntheticSceneConfig, load_dataset, synth_generate
from .evaluation import ErrorReport, evaluate, predict_sequence, sweep_window_lengths
from .losses import LossWeights, MixtureDensity, mdn_nll, pose_loss
from .model import Model, ModelConfig
from .pose import Pose7, pack, rotation_error_deg, translation_error, unpack
from .smoothing import SplineConfig, spline_smooth
from .training import TrainConfig, load_checkpoint, predict, save_checkpoint, train

__version__ = "0.1.0"
