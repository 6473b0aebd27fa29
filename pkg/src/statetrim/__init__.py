"""statetrim: train deep recurrent state-space models, then trim their states.

The package couples sequence-model training with system-theoretic order
reduction: the linear recurrent blocks of a deep model are analyzed through
their Grammians and Hankel singular values, optionally kept sparse during
training by modal l1 or Hankel-norm regularization, and afterwards reduced
by modal or balanced truncation / singular perturbation.
"""

from . import linalg, lru, mor, deepssm, training, data, evaluation, serialization
from .deepssm import DeepSsm, DeepSsmConfig, forward, init_deep_ssm
from .evaluation import Metrics, evaluate_model, metrics
from .linalg import (
    BalanceResult,
    GrammianPair,
    HankelSpectrum,
    StateSpaceModel,
    balance,
    block_hankel_svd_oracle,
    diagonal_model,
    eig_dense,
    frequency_response,
    grammians,
    hankel_singular_values,
    hinf_norm_estimate,
    solve_dlyap_dense,
    solve_dlyap_diag,
)
from .lru import (
    LruParams,
    from_modal,
    init_lru,
    simulate_scan,
    simulate_sequential,
    to_conjugate_real_form,
    to_state_space,
)
from .mor import (
    ReductionMethod,
    ReductionReport,
    error_bound,
    reduce_block,
    reduce_lru,
    reduce_model,
    singular_perturbation,
    sort_modal,
    truncate,
)
from .training import (
    TrainConfig,
    adamw_init,
    adamw_step,
    gradients,
    hankel_sv_gradients,
    make_subsequences,
    mse_loss,
    reg_hankel_l2,
    reg_hankel_nuclear,
    reg_modal_l1,
    total_loss,
    train,
)

__version__ = "0.1.0"
