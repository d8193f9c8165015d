"""Decomposed frequency-attention forecasting with residual anomaly flags and a risk score."""
from .anomaly import AnomalyReport, ThresholdStats, detect, kl_regularizer, residuals
from .config import RunConfig
from .decomposition import DecompositionResult, decompose
from .metrics import EvalReport, classification_metrics, regression_metrics, roc_auc
from .model import ForwardOutput, HybridForecaster, ModelConfig, load_checkpoint, save_checkpoint
from .risk import RiskConfig, RiskSeries, joint_loss
from .training import TrainConfig, TrainLog, fit

__version__ = "0.1.0"

__all__ = [
    "AnomalyReport", "DecompositionResult", "EvalReport", "ForwardOutput", "HybridForecaster",
    "ModelConfig", "RiskConfig", "RiskSeries", "RunConfig", "ThresholdStats", "TrainConfig",
    "TrainLog", "classification_metrics", "decompose", "detect", "fit", "joint_loss",
    "kl_regularizer", "load_checkpoint", "regression_metrics", "residuals", "roc_auc",
    "save_checkpoint",
]
