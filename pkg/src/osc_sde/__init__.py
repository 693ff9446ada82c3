"""Uniformly accurate solvers for SDEs with a periodic, possibly highly
oscillatory drift ``dX = f_{t/eps}(X) dt + sigma(X) dW``."""

from .core import (BlowUpError, DimensionError, MicroMacroState, NumericalError,
                   OscillatoryProblem, RngStream, derive_seed, gaussian_increments,
                   validate_problem)
from .montecarlo import (BrownianGrid, ErrorEstimate, ErrorTable, coarsen, epsilon_sweep,
                         estimate_order, micro_mean_abs, strong_error, weak_error)
from .problems import CATALOG, get_spec, geometric_brownian, henon_heiles, logistic, pure_oscillation
from .schemes import (TimeGrid, integrate, recombine, simulate_path, step_euler_maruyama,
                      step_integral, step_micro_macro)
from .toolkit import QuadratureRule, antiderivative, averaged_drift, phi

__version__ = "0.1.0"
