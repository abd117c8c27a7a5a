"""Matrix-oriented solvers and Stein-equation preconditioners for
weak-constraint 4D-Var inner linear systems."""

from .blocks import (
    SaddleTriple,
    SystemData,
    apply_A,
    apply_D,
    apply_H_chain,
    apply_L,
    apply_S,
    saddle_rhs,
    solve_L,
    spd_rhs,
    triple_inner,
)
from .krylov import SolveConfig, SolveReport, inner_matcg, matcg, matgmres, vec_baseline_solve
from .precond import (
    LowRankUpdate,
    PrecondConfig,
    Preconditioner,
    TransformedSystem,
    apply_shat_inv_lowrank,
    apply_shat_inv_r0,
    build_lowrank,
    build_transform,
    inner_action,
)
from .problems import ProblemSpec, heat_model, lorenz96_tlm, make_realization, soar_covariance
from .stein import (
    BoundReport,
    MhatStrategy,
    SteinPrecomputation,
    karcher_mean,
    precompute,
    precompute_diagonal,
    prop31_bound,
    select_mhat,
    solve_stein,
    solve_stein_transpose,
)

__version__ = "0.1.0"
