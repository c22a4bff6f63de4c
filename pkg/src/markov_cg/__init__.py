"""Structure-preserving coarse-graining and reconstruction for finite Markov chains."""

__version__ = "0.1.0"

from .coarse import (
    ClusterMap,
    CoarseGrainPair,
    build_M,
    build_N,
    coarse_generator,
    coarse_markov,
    coarse_measure,
    lumpability_defect,
    projection_P,
    weighted_inner,
)
from .errors import MarkovCGError
from .flux import coarse_evolution_step, evolve, flux_of, gradient_flow_rhs, reconstruct_flux
from .functionals import (
    BOLTZMANN,
    QUADRATIC,
    ConvexProfile,
    counterexample,
    dirichlet,
    energy,
    entropy,
    expectation,
    log_sobolev_constant,
    poincare_constant,
)
from .markov import (
    chain_step,
    generator_of,
    invariant_measure,
    is_detailed_balance,
    relative_density,
    validate_markov,
)
from .tensor import (
    EdgeTensor,
    IncidenceOperator,
    coarse_incidence,
    edge_reconstruct_op,
    edge_weight,
    incidence_adjoint,
    incidence_apply,
    lift,
    quotient_graph,
    restrict,
    tensor_pairing,
)
