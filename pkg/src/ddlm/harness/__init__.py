"""Configuration, checkpoints, metrics, training and experiment drivers."""

from ddlm.harness.checkpoint import load_checkpoint, save_checkpoint
from ddlm.harness.config import RunConfig, default_model_config, load_config
from ddlm.harness.evaluate import EvalReport, evaluate, load_model, random_response_baseline
from ddlm.harness.experiments import compare_init, sweep_quality_speed
from ddlm.harness.metrics import MetricsLog, read_metrics
from ddlm.harness.train import TrainResult, train

__all__ = [
    "EvalReport",
    "MetricsLog",
    "RunConfig",
    "TrainResult",
    "compare_init",
    "default_model_config",
    "evaluate",
    "load_checkpoint",
    "load_config",
    "load_model",
    "random_response_baseline",
    "read_metrics",
    "save_checkpoint",
    "sweep_quality_speed",
    "train",
]
