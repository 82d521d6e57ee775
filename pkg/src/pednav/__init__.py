"""Deterministic crowd navigation for a low-speed vehicle among replayed pedestrians.

The package splits into layers:

* core geometry and config (``core``)
* probabilistic prediction and calibration (``uncertainty``, ``predictor``)
* recorded scenarios and synthetic generators (``scenario``, ``data``)
* the stepped environment with its reward (``env``)
* sampling-based planners over predicted tracks (``mpc``, ``policies``)
* evaluation, reports, wire protocols, CLI (``runner``, ``metrics``,
  ``wire``, ``protocol``, ``cli``)
"""

from .core import (Action, Config, PedestrianState, VehicleState, clamp_action,
                   min_separation, unicycle_step, wrap_angle)
from .env import (CrowdNavEnv, JointObservation, ObservedPedestrian,
                  RewardBreakdown, StepOutcome, compute_reward,
                  prediction_penalty)
from .mpc import (CONSTRAINT_TOL, MpcProblem, MpcSolution, MpcWeights,
                  SolverParams, check_constraints, md_floor, solve,
                  stage_cost, terminal_cost)
from .policies import (ExternalPolicy, MpcPolicy, StopPolicy, StraightPolicy,
                       make_policy, mpc_policy, problem_from_observation)
from .predictor import (AvPose, ConstantVelocityPredictor, ExternalPredictor,
                        GroundTruthPredictor, PedestrianHistory,
                        PredictorError, PredictorInput, PredictorOutput,
                        constant_velocity_predict, ground_truth_predict,
                        project_av, validate_output)
from .scenario import (PedestrianTrack, Scenario, load_scenario,
                       save_scenario, scenario_from_dict, scenario_to_dict)
from .uncertainty import (ESV_IDEAL, CalibrationReport, Gaussian2D,
                          PredictedTrack, calibration_metrics,
                          collision_probability, combined_loss, mahalanobis,
                          md_squared_threshold, nll)

__version__ = "0.1.0"

__all__ = [
    "Action", "AvPose", "CONSTRAINT_TOL", "CalibrationReport", "Config",
    "ConstantVelocityPredictor", "CrowdNavEnv", "ESV_IDEAL",
    "ExternalPolicy", "ExternalPredictor", "Gaussian2D",
    "GroundTruthPredictor", "JointObservation", "MpcPolicy", "MpcProblem",
    "MpcSolution", "MpcWeights", "ObservedPedestrian", "PedestrianHistory",
    "PedestrianState", "PedestrianTrack", "PredictedTrack", "PredictorError",
    "PredictorInput", "PredictorOutput", "RewardBreakdown", "Scenario",
    "SolverParams", "StepOutcome", "StopPolicy", "StraightPolicy",
    "VehicleState", "calibration_metrics", "check_constraints",
    "clamp_action", "collision_probability", "combined_loss",
    "compute_reward", "constant_velocity_predict", "ground_truth_predict",
    "load_scenario", "mahalanobis", "make_policy", "md_floor",
    "md_squared_threshold", "min_separation", "mpc_policy", "nll",
    "prediction_penalty", "problem_from_observation", "project_av",
    "save_scenario", "scenario_from_dict", "scenario_to_dict", "solve",
    "stage_cost", "terminal_cost", "unicycle_step", "validate_output",
    "wrap_angle", "__version__",
]
