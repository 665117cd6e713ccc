"""Reactive-species molecular communication: simulation and signal design."""

from .config import (AVOGADRO, ChannelResponse, ConfigValidationError,
                     CrTable, RadialField, ReactionDiffusionConfig,
                     ReleaseSchedule, config_hash, equilibrium_concentration,
                     load_config, table1_defaults, validate)
from .solver import (KernelMatrix, SolverError, build_kernel, compute_cr,
                     diffusion_step, observe, reaction_step,
                     receiver_weights, shell_measure)
from .particles import (ParticleEnsemble, RegimeError, binding_radius,
                        reaction_parameters, run_particle_sim)
from .signaling import (DetectorThresholds, ModulationScheme, Observation,
                        build_cr_table, build_schedule, compute_tau,
                        detect_genie_1tm, detect_genie_2tm,
                        detect_isi_neglecting, detect_ml_estimated_isi,
                        sample_observation, thresholds_from_table)
from .experiments import (BerPoint, BerRun, precompute_block_means,
                          response_width, run_ber, sweep_memory,
                          sweep_parameter, table_from_block_means)

__all__ = [
    "AVOGADRO", "ChannelResponse", "ConfigValidationError", "CrTable",
    "RadialField", "ReactionDiffusionConfig", "ReleaseSchedule",
    "config_hash", "equilibrium_concentration", "load_config",
    "table1_defaults", "validate",
    "KernelMatrix", "SolverError", "build_kernel", "compute_cr",
    "diffusion_step", "observe", "reaction_step", "receiver_weights",
    "shell_measure",
    "ParticleEnsemble", "RegimeError", "binding_radius",
    "reaction_parameters", "run_particle_sim",
    "DetectorThresholds", "ModulationScheme", "Observation",
    "build_cr_table", "build_schedule", "compute_tau",
    "detect_genie_1tm", "detect_genie_2tm", "detect_isi_neglecting",
    "detect_ml_estimated_isi", "sample_observation",
    "thresholds_from_table",
    "BerPoint", "BerRun", "precompute_block_means", "response_width",
    "run_ber", "sweep_memory", "sweep_parameter", "table_from_block_means",
]
