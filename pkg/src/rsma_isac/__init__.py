"""Rate-splitting hybrid beamforming for joint sensing and communication.

Modules
-------
scene      seeded channels and radar scenes
metrics    rates, SCNRs and the feasibility check
solver     WMMSE penalty-dual-decomposition solver
baselines  SDMA and fully-digital comparison schemes
estimator  scikit-learn style wrapper
harness    config parsing, Monte-Carlo sweeps, CSV/SVG output
cli        ``rsma-isac`` command
"""
from .baselines import SchemeKind, solve_fully_digital, solve_rsma, solve_scheme, solve_sdma
from .estimator import RsmaIsacBeamformer, check_channel_matrix
from .metrics import HbfSolution, MetricReport, evaluate
from .scene import (
    ChannelSet,
    ConfigError,
    CorrelationProfile,
    RadarScene,
    SystemConfig,
    build_radar_scene,
    default_radar_scene,
    generate_channel_set,
    make_rng,
)
from .solver import SolveResult, SolverOptions, Status, solve

__version__ = "0.1.0"

__all__ = [
    "SchemeKind",
    "solve_fully_digital",
    "solve_rsma",
    "solve_scheme",
    "solve_sdma",
    "RsmaIsacBeamformer",
    "check_channel_matrix",
    "HbfSolution",
    "MetricReport",
    "evaluate",
    "ChannelSet",
    "ConfigError",
    "CorrelationProfile",
    "RadarScene",
    "SystemConfig",
    "build_radar_scene",
    "default_radar_scene",
    "generate_channel_set",
    "make_rng",
    "SolveResult",
    "SolverOptions",
    "Status",
    "solve",
]
