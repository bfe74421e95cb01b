"""Matrix-product-state engine for a transverse-field Ising chain uniformly
coupled to a single quantized oscillator mode: ground and excited states,
coupling-space scans, and homodyne-detection quantum trajectories, with a
dense exact-diagonalization twin for validation.
"""

from .model import ModelParams, SiteSpec, coherent_state, default_n_max
from .tensor import (ConvergenceError, DenseTensor, DimensionError,
                     TruncationSpec)
from .mps import (MPSState, basis_product_mps, canonicalize, compress,
                  load_checkpoint, mps_norm, mps_sum, normalized, overlap,
                  product_mps, random_mps, save_checkpoint)
from .mpo import (MPOperator, apply_mpo, build_dicke_ising_mpo,
                  build_parity_mpo, build_sum_local_mpo, identity_mpo,
                  mpo_expectation)
from .fitting import FitResult, FitTerm, variational_fit
from .groundstate import (ConvergenceReport, DMRGConfig, EigenstateResult,
                          EigenstateSet, energy_variance, excited_states,
                          ground_state, thermal_average, thermal_weights)
from .dynamics import (KrylovConfig, TrajectoryRecord, cat_purification_state,
                       ensemble_statistics, krylov_basis, krylov_propagate,
                       measurement_update, run_trajectory)
from .observables import (CorrelationProfile, bond_entropy, fit_decay_length,
                          oscillator_density_matrix, oscillator_entropy,
                          parity_expectation, photon_statistics,
                          quadrature_mean, sigma_y_correlations, spin_profile,
                          top_fock_weight, von_neumann_entropy)
from .ed import (FreeFermionResult, SpectrumResult, dense_hamiltonian,
                 ed_lindblad, ed_propagate, ed_spectrum, ed_trajectory,
                 free_fermion_ising)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
