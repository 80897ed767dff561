"""Closed-loop evaluation: trials, batches, metrics, baseline and file formats."""

from .baseline import raycast_baseline
from .harness import VARIANTS, BatchReport, TrialResult, run_batch, run_trial, summarize
from .metrics import StepLog, compute_metrics, wilson_interval

__all__ = ["VARIANTS", "BatchReport", "StepLog", "TrialResult", "compute_metrics", "raycast_baseline",
           "run_batch", "run_trial", "summarize", "wilson_interval"]
