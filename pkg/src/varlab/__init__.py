"""varlab: a numerical laboratory for variation seminorms, jump counts,
dyadic martingales, Muckenhoupt weights and smoothed square functions of
ergodic averages on periodic lattices."""

from .lattice import (
    CubeRef,
    Field,
    GridSpec,
    ball_mask,
    ball_offsets,
    ball_points,
    concentric_3q,
    concentric_cube,
    cube_points,
    cube_slices,
    dyadic_cube_of,
)
from .variation import (
    CATALOG,
    JumpRecord,
    SampledPath,
    VariationResult,
    hvar_bruteforce,
    hvar_exact,
    hvar_stack,
    jump_bruteforce,
    jump_count,
    jump_count_greedy,
    jump_count_stack,
    sobolev_bound_check,
    var_inhom,
    var_inhom_stack,
)
from .martingale import (
    CZResult,
    HaarAtom,
    HaarAtomSystem,
    MartingaleDecomposition,
    StoppingTimes,
    cond_expect,
    cz_decompose,
    greedy_stopping_times,
    haar_atoms_from_diff,
    haar_multiplier,
    lq_height,
    mart_decompose,
    mart_square_function,
    random_sign_fields,
)
from .averages import (
    AvgStack,
    ScaleSet,
    avg_stack,
    ball_symm_diff,
    boundary_cube_count,
    ergodic_avg,
    frak_r,
    frak_rk,
    rk_operator,
    shell_derivative_check,
    short_variation,
    smoothed_short_variation,
    square_function,
)
from .weights import (
    AinftyFit,
    Weight,
    WeightConstants,
    a1_constant,
    ainfty_fit,
    ap_constant,
    bmo_norm,
    make_weight,
    maximal,
    sharp_maximal,
    weak_quasinorm,
    weighted_lp_norm,
    weighted_measure,
)
from .harness import (
    Ensemble,
    ExperimentReport,
    TrialRow,
    make_ensemble,
    make_field,
    standard_weight_sweep,
    verify_bmo,
    verify_good_lambda,
    verify_jump,
    verify_reverse_holder,
    verify_short_scale_decay,
    verify_square_strong,
    verify_square_weak,
    verify_variation,
    verify_weak11_vector,
)

__version__ = "0.1.0"
