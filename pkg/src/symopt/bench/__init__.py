"""Convergence harness, diagnostics and toy training."""

from .diagnostics import logit_diagnostics, router_diagnostics
from .synthetic import (ConvergenceReport, SyntheticLoss, TrialSpec, calibrate_gamma,
                        geometry_diagnostics, loss_and_grad, run_convergence_trial)
from .toy import RunConfig, ToyModelConfig, swiglu_forward, toy_train

__all__ = ["ConvergenceReport", "RunConfig", "SyntheticLoss", "ToyModelConfig", "TrialSpec",
           "calibrate_gamma", "geometry_diagnostics", "logit_diagnostics", "loss_and_grad",
           "router_diagnostics", "run_convergence_trial", "swiglu_forward", "toy_train"]
