"""Confidence calibration toolkit: ECE / NLL / reliability diagrams, temperature scaling and CARING."""

from .calibrators import (
    CaringCalibrator,
    FitConfig,
    FitTrace,
    TemperatureScaler,
    caring_confidence,
    caring_loss_and_grads,
    caring_temperature,
    fit_caring,
    fit_temperature,
    temp_nll_and_grad,
)
from .core import Dataset, Prediction, Sample, nll, predict, predict_batch, scale_logits, softmax
from .errors import CalibrationError, DataError, InvalidParameterError, NumericFailureError
from .metrics import (
    BinStats,
    ClassManifest,
    ClassReport,
    ReliabilityReport,
    assign_bin,
    bin_stats,
    ece,
    partition_classes,
    per_class_report,
    reliability_report,
    subset_filter,
)
from .synth import SynthSpec, gen_global, gen_grouped

__version__ = "0.1.0"
