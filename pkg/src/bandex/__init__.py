"""Off-policy contextual-bandit learning under support-deficient logging."""

from .core import (
    BandexError,
    ContractError,
    CorruptDataError,
    DegenerateRestrictionError,
    InvalidPolicyError,
    LoggedDataset,
    Policy,
    RestrictedPolicy,
    SoftmaxPolicy,
    StageFailure,
    SupportSet,
    SyntheticProblem,
    TabularPolicy,
    TrainingFailure,
    action_restrict,
    clip_support,
    policy_probs,
    prob_table,
    read_dataset_jsonl,
    tabular_softmax,
    unsupported_set,
)
from .datagen import (
    GenConfig,
    log_interactions,
    make_feature_split_problem,
    make_logging_policy,
    make_multiclass_problem,
    translate_rewards,
    unsupported_fraction,
)
from .estimators import (
    EstimatorReport,
    MinSupPolicy,
    augmented_ips,
    build_minsup,
    conservative_model,
    dm,
    dr,
    ips,
    minsup_estimate,
)
from .learning import (
    AugmentedDataset,
    ErmBatch,
    RewardModel,
    TrainConfig,
    augment_dataset,
    objective_value_and_gradient,
    train_erm,
    train_reward_model,
)
from .oracle import (
    ExactReport,
    adversarial_construction,
    exact_augmented_bias,
    exact_augmented_expectation,
    exact_ips_bias,
    exact_policy_value,
    exact_sampled_objective_expectation,
    exact_support_divergence,
    ips_bias_closed_form,
)
from .selection import SweepResult, check_kappa, default_grid, sweep_k

__version__ = "0.1.0"
