"""Decide whether a space of matrix product density operators has a
frustration-free k-local parent Lindbladian, and build it when it does."""

from .errors import (
    DimensionError, NotDaggerClosed, NumericalError, ProbabilisticFailure, ResourceError,
    StructureInconsistent, StructureInvalid,
)
from .numerics import (
    DEFAULT_TOL, SeededSampler, ToleranceConfig, check_operators, choi_matrix, derive_seeds,
    hermitian_span_basis, hs_inner, is_cptp, numerical_rank, orthonormalize_span, random_combination,
)
from .mpdo import (
    BoundarySpace, MpdoSpec, OperatorWindow, build_model, contract_window, dumps_spec, loads_spec,
    model_domain_wall, model_ising_thermal, model_pauli_strings, model_tfim_trotter, target_dims,
)
from .algebra_decomp import (
    AlgebraStructure, BlockDecomposition, RecoveryTrace, algebra_member_basis,
    finest_block_diagonalization, oracle_generated_algebra, smallest_observable_algebra,
)
from .fixed_space import (
    FixedSpaceStructure, ProjectionChannel, build_scaling, local_term_verdict,
    oracle_smallest_fixed_space, projection_channel, smallest_fixed_space, structure_equivalence,
)
from .patching import (
    GrowthState, PatchReport, check_mpdo_form_condition, constraint_matrix, grow_one_site,
    initialize_growth, oracle_global_kernel, run_patching,
)
from .synthesis import LindbladTerm, SynthesisReport, k_sweep, oracle_report, synthesize
from .estimators import BlockDiagonalizer, FixedSpaceProjector, ObservableAlgebra, ParentLindbladian, check_family

__version__ = "0.1.0"
