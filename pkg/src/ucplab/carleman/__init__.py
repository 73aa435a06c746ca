"""Carleman weight, estimate sweeps, operator-form inequalities and the absorption chain."""

from .bootstrap import BootstrapReport, bootstrap_chain_check
from .estimate import (DEFAULT_TAUS, CarlemanReport, ShellBump, carleman_ratio, default_family_grid,
                       default_shell_family, eps_constants, estimate_kappa_and_eps, shell_for)
from .forms import (InequalityReport, PropagationReport, SqrtMonotoneResult, constant_propagation_check,
                    embedding_constant, form_sampling_bound, min_eps_form_inequality, scalar_sqrt_constant,
                    sharp_sobolev_constant, sobolev_split_bound, sqrt_monotone_check)
from .weight import CRITICAL_RADIUS, PHI_HALF, phi_derivatives, phi_radial, weight_phi

__all__ = [
    "BootstrapReport", "bootstrap_chain_check", "DEFAULT_TAUS", "CarlemanReport", "ShellBump",
    "carleman_ratio", "default_family_grid", "default_shell_family", "eps_constants",
    "estimate_kappa_and_eps", "shell_for", "InequalityReport", "PropagationReport", "SqrtMonotoneResult",
    "constant_propagation_check", "embedding_constant", "form_sampling_bound", "min_eps_form_inequality",
    "scalar_sqrt_constant", "sharp_sobolev_constant", "sobolev_split_bound", "sqrt_monotone_check",
    "CRITICAL_RADIUS", "PHI_HALF", "phi_derivatives", "phi_radial", "weight_phi",
]
