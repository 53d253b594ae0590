"""Harnack inequalities for Dirichlet forms on weighted graphs."""

from .forms import (
    CutoffFn, EnergyForm, FormError, WeightPair, build_form, build_grushin, build_weighted_elliptic,
    energy, energy_measure, intrinsic_space, make_cutoff, power_weight, weight_pair,
)
from .inequalities import (
    ConstantLedger, DegenerateFormError, PoincareCertificate, build_ledger, c1_profile, compute_tau,
    monotone_envelope, poincare_constant, sobolev_check, sobolev_exponents,
)
from .moser import (
    C_ABS, IterationSchedule, MoserBound, MoserError, TruncatedPower, all_p_bound, gamma_constant,
    harnack_verify, log_weak_estimate, moser_abstract_bound, product_bound, subsolution_sup_bound,
)
from .oscillation import OscillationProfile, decay_modulus, oscillation_profile, oscillation_step
from .solve import SolutionReport, SolveError, boundary_sampler, classify, lift_by_delta, solve_harmonic
from .space import Ball, DoublingEstimate, Space, SpaceError, ball, build_space, estimate_doubling, grid2d, path

__all__ = [name for name in dir() if not name.startswith("_")]
