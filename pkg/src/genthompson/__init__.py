"""Generalized Thompson Sampling for contextual bandits with a finite expert set."""

from .bounds import (
    BoundReport,
    bound_report,
    corollary1_bound,
    corollary2_bound,
    entropy,
    kappa1,
    kl_divergence,
    lemma1_bound,
)
from .conditions import (
    ConditionReport,
    appendix_F,
    check_conditions,
    check_consistency,
    estimate_kappa2,
    sweep_F,
    verify_informativeness,
)
from .losses import (
    LossSpec,
    expected_shifted_loss,
    kl_bernoulli,
    loss_eval,
    second_moment_shifted_loss,
    shifted_loss,
    validate_beta_compatibility,
)
from .model import Environment, Expert, ExpertSet, binarize_reward, expert_policy, perturbed_experts, sample_reward
from .policy import (
    GeneralizedThompsonSampling,
    WeightState,
    arm_distribution,
    init_weights,
    recommended_eta,
    recommended_gamma,
    select_arm,
    update_weights,
)
from .simulation import (
    RunConfig,
    RunTrace,
    average_shifted_loss_total,
    bayes_regret_experiment,
    cumulative_regret,
    mean_regret,
    run_episode,
    run_episodes,
    simulate_seeds,
)

__version__ = "0.1.0"
