"""Parameter synthesis for positive linear systems via geometric programming.

The package compiles norm- and robustness-constrained design problems for
internally positive LTI systems into geometric programs, solves them with a
log-domain interior-point method, and certifies every solution with
independent system-norm oracles.
"""

from .posy import (
    DiagMonoMatrix,
    Monomial,
    Posynomial,
    PosyMatrix,
    VarSpace,
    bar_factors,
    build_h2_vectors,
    eval_monomial,
    eval_posynomial,
    kron_sum_padded,
    kron_sum_symbolic,
    log_domain_eval,
    posy_add,
    posy_mul,
)
from .gp import (
    ExpConstraint,
    ExpTerm,
    FeasibilityReport,
    GpProblem,
    SolveOptions,
    SolveResult,
    SolveStatus,
    check_feasibility,
    log_transform,
    normalize,
    solve,
)
from .sysmodel import (
    NormReport,
    NumericSystem,
    ParamSystem,
    build_bar_matrices,
    certified_decay_rate,
    delay_decay_check,
    delay_gains,
    grammians,
    grammians_kron,
    h2_norm,
    hankel_singular_values,
    hinf_freq_sweep,
    hinf_norm,
    instantiate,
    norm_report,
    robust_abscissa_estimate,
    schatten_norm,
    spectral_abscissa,
)
from .synth import (
    CostSpec,
    ThetaSet,
    TradeoffFn,
    UncertaintyStructure,
    build_delay_gp,
    build_h2_gp,
    build_hankel_gp,
    build_hinf_gp,
    build_mixed_gp,
    build_robust_epsmax,
    build_robust_gp,
    build_schatten_gp,
    minimize_gamma,
)
from .apps import BufferNetwork, SisNetwork, build_buffer_network, build_sis_problem

__version__ = "0.1.0"
