"""Finite-horizon optimal switching for multi-regime drift-diffusion processes.

The package solves the coupled variational-inequality system of a controlled
process that can switch between movement regimes (e.g. coastal detour flight,
direct flight, waiting at stop-over sites) on a bounded corridor [0, L] with a
seasonal terminal reward at L. It provides:

* an implicit finite-difference solver for the value functions (`hjb`),
* switching-region extraction and policies (`regions`),
* a calibrated lattice random walk driven by the extracted policy
  (`simulate`),
* partial-information experiments and the informed-regime extension (`info`),
* scenario sweeps: staging deterioration, noisy seasonal windows, coarse
  seasonal perception, shifted seasons (`scenarios`),
* deterministic artifact writing with hashed manifests (`artifacts`),
* a command-line interface over all of the above (`cli`).
"""

__version__ = "0.1.0"

from .artifacts import (
    canonical_json,
    config_hash,
    manifest_digest,
    sha256_file,
    write_csv,
    write_json,
    write_manifest,
    write_timings,
)
from .hjb import (
    ComplementarityResidual,
    Grid,
    ValueField,
    load_value_field,
    residual,
    save_value_field,
    solve_backward,
)
from .info import (
    ExperimentOutcome,
    InformationExperiment,
    MismatchStats,
    cohort_split,
    extend_with_information_regime,
    run_experiment,
    solve_partial,
    value_of_information,
)
from .model import (
    ConfigError,
    Problem,
    ProblemSpec,
    Regime,
    Site,
    StartState,
    SwitchRule,
    SwitchingCosts,
    validate_problem,
)
from .presets import (
    default_grid_shape,
    load_problem,
    preset_spec,
    spec_from_dict,
    spec_to_dict,
)
from .regions import (
    SwitchingRegions,
    extract_regions,
    region_boundary,
    region_rows,
    run_length_encode,
)
from .rewards import (
    GaussianPulse,
    NoisyProfile,
    ShiftedProfile,
    StepProfile,
    TriangularPulse,
    eval_terminal,
    step_projection,
)
from .scenarios import (
    DeteriorationSweep,
    NoiseSweep,
    PartitionSweep,
    SeasonShiftRun,
    deteriorate,
    mode1_sweep,
    mode2_run,
    noise_sweep,
    without_direct_flight,
)
from .simulate import (
    EnsembleResult,
    LatticeCalibration,
    Trajectory,
    calibrate,
    length_of_stay,
    run_ensemble,
    simulate_path,
)

__all__ = [
    "__version__",
    # model
    "ConfigError",
    "Problem",
    "ProblemSpec",
    "Regime",
    "Site",
    "StartState",
    "SwitchRule",
    "SwitchingCosts",
    "validate_problem",
    # presets
    "default_grid_shape",
    "load_problem",
    "preset_spec",
    "spec_from_dict",
    "spec_to_dict",
    # rewards
    "GaussianPulse",
    "TriangularPulse",
    "StepProfile",
    "ShiftedProfile",
    "NoisyProfile",
    "eval_terminal",
    "step_projection",
    # solver
    "Grid",
    "ValueField",
    "ComplementarityResidual",
    "solve_backward",
    "residual",
    "save_value_field",
    "load_value_field",
    # regions
    "SwitchingRegions",
    "extract_regions",
    "region_boundary",
    "region_rows",
    "run_length_encode",
    # simulation
    "LatticeCalibration",
    "calibrate",
    "Trajectory",
    "EnsembleResult",
    "run_ensemble",
    "simulate_path",
    "length_of_stay",
    # information workflows
    "InformationExperiment",
    "MismatchStats",
    "ExperimentOutcome",
    "value_of_information",
    "solve_partial",
    "extend_with_information_regime",
    "cohort_split",
    "run_experiment",
    # scenarios
    "DeteriorationSweep",
    "NoiseSweep",
    "PartitionSweep",
    "SeasonShiftRun",
    "deteriorate",
    "noise_sweep",
    "mode1_sweep",
    "mode2_run",
    "without_direct_flight",
    # artifacts
    "canonical_json",
    "config_hash",
    "sha256_file",
    "manifest_digest",
    "write_csv",
    "write_json",
    "write_manifest",
    "write_timings",
]
