"""Hardware-oriented GAE: standardized/quantized datapath and a cycle-level accelerator model."""

from ._validation import ValidationError
from .gae import (
    AdvantageResult,
    GaeParams,
    Trajectory,
    compute_advantages,
    gae_lookahead,
    gae_sequential,
    gae_truncated_sum,
    rewards_to_go,
    td_residuals,
)
from .quantization import DatapathVariant, QuantScheme
from .standardization import BlockStats, RunningStats

__version__ = "0.1.0"
