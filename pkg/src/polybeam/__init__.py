"""Design, synthesis, evaluation and runtime processing of polynomial filter-and-sum beamformers."""

from .core import (SPEED_OF_SOUND, ArrayGeometry, DesignGrid, Direction, DomainError,
                   PolynomialOrderSpec, map_D_to_phi, map_phi_to_D, head_geometry,
                   pld_steering_matrix)
from .design import (DesignError, DesiredResponse, FrequencyDesign, design_rlsfi, design_rlsfip,
                     desired_response, extract_steered_weights, steered_weights)
from .engine import EngineState, simulate_scene
from .evaluation import EvalReport, beampattern, mse, mse_vs_steering, suppression_gain, wng
from .firsynth import FilterBank, frequency_response, load_bank, save_bank, synthesize
from .solver import InfeasibleError, QcqpInstance, SolverOptions, solve
from .steer import SteeringSet, build_steering_set, sphere_response

__version__ = "0.1.0"
