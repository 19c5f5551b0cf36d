"""kubolab: adiabatic linear response of free lattice fermions.

Typical use::

    from kubolab import builtin_model, find_fermi_points, builtin_bump, EulerScaling
    m = builtin_model("laplacian_chain", {"L": 513, "mu": -2.0})
    fd = find_fermi_points(m)
"""
__version__ = "0.1.0"

from .errors import KuboLabError, PreconditionError, AssumptionError, NumericalError, ToleranceError
from .model import builtin_model, LatticeModel1D, CylinderModel2D
from .spectral import find_fermi_points, classify_edge_modes, check_net_chirality, band_structure
from .perturb import builtin_bump, zero_function, EulerScaling, periodize, apply_momentum_cutoff
from .equilibrium import EquilibriumParams, gibbs_correlation, split_propagator
from .dynamics import EvolutionConfig, evolve_response, observable_kernel
from .diagrammatics import (ChiralPropagator, LoopSpec, loop_Bn, bubble_closed, ward_residual,
                            cancellation_check, cumulant_wick, wick_split)
from .prediction import PredictionInput, chi_lin_fourier, chi_lin_real, chi_edge, edge_conductance
from .harness import Scenario, run_scenario

__all__ = [name for name in dir() if not name.startswith("_")]
