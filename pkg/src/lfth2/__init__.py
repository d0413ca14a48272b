"""Robust and gain-scheduled H2 control for discrete-time LFT systems."""
from .errors import (DimensionMismatch, IllConditionedV, IllPosedLoop, Infeasible, LftError, SingularFactor,
                     SolverFailure, StructuralViolation, UnstableFrozenLoop)
from .lft_model import (ClosedLoopLft, LftController, LftPlant, UncertaintyStructure, close_output_feedback,
                        close_state_feedback, sample_uncertainty, vertex_deltas, zoh_discretize)
from .sdp import SolverOptions
from .simulation import estimate_h2_white_noise, estimate_induced_gain, simulate, step_disturbance_response
from .synthesis import analyze_robust_h2, synthesize_gs, synthesize_sf

__version__ = "0.1.0"
