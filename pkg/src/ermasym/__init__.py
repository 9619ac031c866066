"""High-dimensional asymptotics of convex regularized ERM.

Solves the deterministic fixed-point system characterizing the ERM
minimizer's mean and covariance trace under general (non-Gaussian)
designs, predicts the resulting non-Gaussian test-score law, and checks
both against an internal Monte Carlo ERM engine.
"""

from .losses import (
    LOGISTIC,
    SQUARED,
    LabelSpace,
    LossFamily,
    LossKind,
    loss_value,
    moreau,
    moreau_dkappa,
    moreau_du,
    prox,
    xi,
)
from .regularizers import (
    Quadratic,
    Ridge,
    ShiftedRidge,
    SmoothSeparable,
    quadratic_surrogate,
)
from .data import (
    LFMM,
    BimodalLinear,
    BimodalTag,
    Empirical,
    GaussianLinear,
    MixtureClasses,
    load_csv,
    projection_samples,
)
from .rmt import (
    ResolventContext,
    ValidityBoundaryError,
    a_of_nu,
    empirical_resolvent,
    kappa_of_nu,
    q2_equiv,
    resolvent,
    solve_nu_ridge,
)
from .fixed_point import (
    ExpectationPanel,
    FixedPointSolution,
    MulticlassSolution,
    RidgeClosedForm,
    SolveOptions,
    make_panel,
    residuals,
    ridge_closed_form,
    solve,
    solve_multiclass,
    solve_with_refit,
)
from .erm import ErmFit, ReplicationSummary, fit, lipschitz_probe, replicate
from .scores import (
    ScoreLaw,
    classification_error,
    confinement_residual,
    gaussian_baseline,
    ks_distance,
    predict,
)

__version__ = "0.1.0"
