"""seqopt: black-box optimization of fixed-length token sequences.

Learns sequences that maximize an opaque scalar reward using
entropy-regularized Q-learning over a frozen-encoder Q-network, with either
dense (softmax / log-sum-exp) or sparse (sparsemax) policy and value
operators, per-prefix token filtering, replay, and a target network.
"""

from .agents import (
    AgentConfig,
    AgentState,
    CurveRecord,
    Episode,
    ReplayBuffer,
    compute_target,
    greedy_sequence,
    make_agent,
    make_variant,
    policy_distribution,
    polyak_update,
    sample_episode,
    train,
    update_from_batch,
)
from .environments import (
    BridgeEnv,
    HiddenEmbeddingEnv,
    RewardOracle,
    SyntheticClassifierEnv,
    TabularEnv,
    dp_optimal_q,
    make_environment,
    make_random_tabular,
    piecewise_gap_reward,
)
from .errors import (
    ConfigError,
    DomainError,
    EnvError,
    InputError,
    InternalError,
    NumericError,
    SeqoptError,
)
from .frozen_lm import (
    FrozenEncoder,
    IgnorableSet,
    LmHead,
    QFunctionModel,
    VocabSpec,
    base_logits,
    encode_prefix,
    ignorable_set,
    load_model,
    make_q_model,
    make_tabular_model,
    q_values,
    save_model,
    train_adapter_step,
)
from .harness import (
    ExperimentConfig,
    ModelConfig,
    RunRecord,
    compare_variants,
    load_config,
    run_experiment,
    sweep,
)
from .sparse_math import (
    NEG_SENTINEL,
    ActionDistribution,
    FilteredLogits,
    apply_filter,
    logsumexp_value,
    softmax_dist,
    sparsemax_dist,
    sparsemax_value,
    supporting_set,
    tau,
    tsallis_entropy,
)

__version__ = "0.1.0"
