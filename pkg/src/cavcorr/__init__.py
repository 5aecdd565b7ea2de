"""Photon correlations of a strongly driven single-atom cavity QED system."""

__version__ = "0.1.0"

from .errors import CavCorrError, ConfigError, NumericalError  # noqa: E402
from .operators import HilbertDims, SystemParams, dressed_spectrum, rung_splittings  # noqa: E402
from .liouvillian import SpectralPropagator, build_liouvillian, solve, steady_state  # noqa: E402
from .correlations import CorrGrid, g2, g3_diagonal, g3_full  # noqa: E402
from .trajectory import TrajectoryRecord, ensemble_average, run_trajectory  # noqa: E402
from .averaging import Ensemble, EnsemblePoint, averaged_g2, averaged_g3_diagonal, averaged_g3_full  # noqa: E402
from .fitting import FitModel, FitResult, fit_damped_oscillation, frequency_sweep  # noqa: E402
from .analysis import asymmetry_map, gaussian_smooth_2d, locate_modulation_frequency  # noqa: E402

__all__ = [
    "CavCorrError", "ConfigError", "NumericalError",
    "HilbertDims", "SystemParams", "dressed_spectrum", "rung_splittings",
    "SpectralPropagator", "build_liouvillian", "solve", "steady_state",
    "CorrGrid", "g2", "g3_diagonal", "g3_full",
    "TrajectoryRecord", "ensemble_average", "run_trajectory",
    "Ensemble", "EnsemblePoint", "averaged_g2", "averaged_g3_diagonal", "averaged_g3_full",
    "FitModel", "FitResult", "fit_damped_oscillation", "frequency_sweep",
    "asymmetry_map", "gaussian_smooth_2d", "locate_modulation_frequency",
]
