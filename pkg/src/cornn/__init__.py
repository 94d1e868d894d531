"""Coupled oscillatory recurrent networks with exact gradients and bound diagnostics."""

__version__ = "0.1.0"

from .cell import CoRnnParams, HiddenState, Rollout, Variant, rollout, step  # noqa: E402
from .grad import GradReport, bptt, finite_diff_gradient  # noqa: E402
