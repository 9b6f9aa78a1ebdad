"""Multiple endpoint testing under an equicorrelated normal model.

Step-up and symmetric Bayes procedures, vector risk (false rejections,
false acceptances), a monotonicity scan for admissibility, and the k = 2
rule that improves on step-up.
"""

__version__ = "0.1.0"

from .model import (
    IntraclassModel,
    MeanVector,
    conditional_z1_given_sum,
    from_partial_sums,
    in_region_s,
    log_density,
    partial_sums,
    precision_apply,
    psi_from_delta,
    sample,
)
from .procedures import (
    CriticalValues,
    ProcedureSpec,
    StripImprovement,
    c_star,
    d_of_t,
    marginal,
    psi_star,
    step_up,
    w_value,
)
from .bayes import SymmetricDiscretePrior, bayes_rule, posterior_oracle, q_value
from .risk import (
    RiskReport,
    component_risks,
    conditional_w_expectation,
    linear_combo_risk,
    risk_difference_quadrature,
    vector_risk_mc,
)
from .admissibility import LineSpec, Violation, monotonicity_scan, step_up_violation_witness
