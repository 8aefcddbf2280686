"""Learning algorithms for fixed-length sequence search.

One agent couples an online Q-model with a lagged target copy of its adapter,
a FIFO replay buffer, and the entropy-regularized policies from
``sparse_math``. Per outer iteration it samples one full sequence from the
current policy, collects the terminal reward, regresses the online adapter
toward bootstrapped targets on a replayed batch, and moves the target adapter
by Polyak averaging. Variant toggles select sparse vs. dense backups, the
retention filter, and replay vs. on-policy training.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import numkit, sparse_math
from .environments import RewardOracle
from .errors import ConfigError
from .frozen_lm import QFunctionModel, encode_prefix, ignorable_set, q_values
from .sparse_math import ActionDistribution

Array = np.ndarray

TokenSeq = tuple[int, ...]

BACKUP_KINDS = ("sparsemax", "logsumexp")
FILTER_RANKS = ("base_logits", "q_values")

VARIANTS = {
    # name: (backup_kind, use_filter, use_replay)
    "pin": ("sparsemax", True, True),
    "pin_no_fluency": ("sparsemax", False, True),
    "rlprompt": ("logsumexp", False, False),
    "rlprompt_fluency": ("logsumexp", True, False),
    "rlprompt_rb": ("logsumexp", False, True),
    "rlprompt_rb_fluency": ("logsumexp", True, True),
}


@dataclass
class AgentConfig:
    """All regularization and training knobs.

    ``alpha`` is the regularization coefficient (reported externally as a
    reward scale 1/alpha); ``top_k`` is the retention rank of the token
    filter; ``polyak_rho`` is the target-network retention rate.
    """

    alpha: float = 1.0
    gamma: float = 1.0
    prompt_length: int = 8
    top_k: int = 400
    buffer_capacity: int = 10_000
    batch_episodes: int = 64
    polyak_rho: float = 0.995
    backup_kind: str = "sparsemax"
    use_filter: bool = True
    use_replay: bool = True
    filter_rank: str = "base_logits"
    seed: int = 0

    def validate(self, vocab_size: int | None = None) -> "AgentConfig":
        if not (self.alpha > 0):
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not (0 < self.gamma <= 1):
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.prompt_length < 1:
            raise ConfigError(f"prompt_length must be >= 1, got {self.prompt_length}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if vocab_size is not None and self.top_k > vocab_size:
            raise ConfigError(f"top_k {self.top_k} exceeds vocabulary size {vocab_size}")
        if self.buffer_capacity < 1:
            raise ConfigError(f"buffer_capacity must be >= 1, got {self.buffer_capacity}")
        if self.batch_episodes < 1:
            raise ConfigError(f"batch_episodes must be >= 1, got {self.batch_episodes}")
        if not (0 <= self.polyak_rho <= 1):
            raise ConfigError(f"polyak_rho must be in [0, 1], got {self.polyak_rho}")
        if self.backup_kind not in BACKUP_KINDS:
            raise ConfigError(f"backup_kind must be one of {BACKUP_KINDS}, got {self.backup_kind!r}")
        if self.filter_rank not in FILTER_RANKS:
            raise ConfigError(f"filter_rank must be one of {FILTER_RANKS}, got {self.filter_rank!r}")
        return self


def make_variant(name: str, base: AgentConfig) -> AgentConfig:
    """Named algorithm variants differing in backup, filtering, and replay."""
    try:
        backup_kind, use_filter, use_replay = VARIANTS[name]
    except KeyError:
        raise ConfigError(f"unknown variant {name!r}; known: {sorted(VARIANTS)}") from None
    return replace(base, backup_kind=backup_kind, use_filter=use_filter, use_replay=use_replay)


@dataclass(frozen=True)
class Episode:
    """A complete sampled sequence with its terminal reward."""

    tokens: TokenSeq
    reward: float


class ReplayBuffer:
    """FIFO episode store with uniform with-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._store: deque[Episode] = deque(maxlen=self.capacity)
        self.insertions = 0

    def add(self, episode: Episode) -> None:
        self._store.append(episode)
        self.insertions += 1

    def sample(self, rng: np.random.Generator, n: int) -> list[Episode]:
        if not self._store:
            raise ConfigError("cannot sample from an empty replay buffer")
        idx = rng.integers(0, len(self._store), size=n)
        return [self._store[int(i)] for i in idx]

    def episodes(self) -> list[Episode]:
        return list(self._store)

    def __len__(self) -> int:
        return len(self._store)


@dataclass(eq=False)
class AgentState:
    """Online model, lagged target adapter, buffer, and the sampling RNG.

    The target model shares the online model's frozen encoder and head;
    only its adapter copy lags behind, moved solely by ``polyak_update``.
    """

    online: QFunctionModel
    target: QFunctionModel
    config: AgentConfig
    buffer: ReplayBuffer
    rng: np.random.Generator
    oracle: RewardOracle | None = None
    iteration: int = 0
    _mask_cache: dict = field(default_factory=dict, repr=False)


def make_agent(model: QFunctionModel, config: AgentConfig,
               oracle: RewardOracle | None = None) -> AgentState:
    config.validate(vocab_size=model.vocab_size)
    target = QFunctionModel(
        encoder=model.encoder,
        head=model.head,
        adapter=model.adapter.copy(),
        adapter_optimizer=model.adapter_optimizer.copy(),
    )
    return AgentState(
        online=model,
        target=target,
        config=config,
        buffer=ReplayBuffer(config.buffer_capacity),
        rng=np.random.default_rng(config.seed),
        oracle=oracle,
    )


def _retention_mask(state: AgentState, model: QFunctionModel, prefix: TokenSeq) -> Array:
    """Ignore mask for a prefix under the configured ranking source."""
    cfg = state.config
    if cfg.filter_rank == "base_logits":
        # base logits never change for a fixed prefix, so the mask is cacheable
        cached = state._mask_cache.get(prefix)
        if cached is None:
            cached = ignorable_set(state.online, prefix, cfg.top_k).mask
            state._mask_cache[prefix] = cached
        return cached
    q = q_values(model, prefix)
    kth = np.partition(q, q.size - cfg.top_k)[q.size - cfg.top_k]
    return q < kth


def policy_distribution(state: AgentState, prefix) -> ActionDistribution:
    """Sampling distribution at a prefix: (filtered) online Q through the policy map."""
    prefix = tuple(int(z) for z in prefix)
    cfg = state.config
    q = q_values(state.online, prefix)
    scores = sparse_math.apply_filter(q, _retention_mask(state, state.online, prefix)) \
        if cfg.use_filter else q
    if cfg.backup_kind == "sparsemax":
        return sparse_math.sparsemax_dist(scores, cfg.alpha)
    return sparse_math.softmax_dist(scores, cfg.alpha)


def _draw(dist: ActionDistribution, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over the support."""
    u = rng.random()
    cumulative = np.cumsum(dist.probabilities[dist.support])
    idx = int(np.searchsorted(cumulative, u, side="right"))
    if idx >= dist.support.size:  # guard against cumulative sum rounding below 1
        idx = dist.support.size - 1
    return int(dist.support[idx])


def _sample_episode_stats(state: AgentState) -> tuple[Episode, float]:
    if state.oracle is None:
        raise ConfigError("no environment attached to the agent")
    cfg = state.config
    tokens: list[int] = []
    support_sizes = []
    for _ in range(cfg.prompt_length):
        dist = policy_distribution(state, tuple(tokens))
        tokens.append(_draw(dist, state.rng))
        support_sizes.append(dist.support_size)
    reward = float(state.oracle.evaluate(tuple(tokens)))
    return Episode(tuple(tokens), reward), float(np.mean(support_sizes))


def sample_episode(state: AgentState) -> Episode:
    """Sample one full sequence from the current policy and score it once."""
    episode, _ = _sample_episode_stats(state)
    return episode


def greedy_sequence(state: AgentState) -> TokenSeq:
    """Argmax decode under the current (filtered) online Q."""
    cfg = state.config
    tokens: list[int] = []
    for _ in range(cfg.prompt_length):
        q = q_values(state.online, tuple(tokens))
        if cfg.use_filter:
            mask = _retention_mask(state, state.online, tuple(tokens))
            q = np.where(mask, -np.inf, q)
        tokens.append(int(np.argmax(q)))
    return tuple(tokens)


def compute_target(state: AgentState, episode: Episode, t: int) -> float:
    """Bootstrapped regression target for step t of an episode.

    Terminal step: the stored reward, exactly. Otherwise gamma * alpha times
    the configured value operator applied to the *target* model's next-state
    action values, filtered first when filtering is on.
    """
    cfg = state.config
    if not (0 <= t <= cfg.prompt_length - 1):
        raise ConfigError(f"step index {t} outside [0, {cfg.prompt_length - 1}]")
    if t == cfg.prompt_length - 1:
        return episode.reward
    next_prefix = episode.tokens[: t + 1]
    q = q_values(state.target, next_prefix)
    scores = sparse_math.apply_filter(q, _retention_mask(state, state.target, next_prefix)) \
        if cfg.use_filter else q
    if cfg.backup_kind == "sparsemax":
        return cfg.gamma * cfg.alpha * sparse_math.sparsemax_value(scores, cfg.alpha)
    return cfg.gamma * cfg.alpha * sparse_math.logsumexp_value(scores, cfg.alpha)


def _value_rows(q_rows: Array, alpha: float, backup: str) -> Array:
    """Row-wise value operator; -inf entries mark filtered actions."""
    scaled = q_rows / alpha
    if backup == "logsumexp":
        m = scaled.max(axis=1)
        return m + np.log(np.sum(np.exp(scaled - m[:, None]), axis=1))
    s = -np.sort(-scaled, axis=1)
    css = np.cumsum(s, axis=1)
    n = np.arange(1, s.shape[1] + 1, dtype=np.float64)
    cond = 1.0 + n * s > css
    # support size = last True position + 1 (the first is always True)
    sizes = s.shape[1] - np.argmax(cond[:, ::-1], axis=1)
    rows = np.arange(s.shape[0])
    taus = (css[rows, sizes - 1] - 1.0) / sizes
    # sum over the support of (s^2 - tau^2) via the running sum of squares;
    # -inf tail entries never fall inside the support prefix
    css2 = np.cumsum(s * s, axis=1)
    return (1.0 + css2[rows, sizes - 1] - sizes * taus * taus) / 2.0


def update_from_batch(state: AgentState, episodes: list[Episode]) -> float:
    """Regress the online adapter toward batch targets; one optimizer step.

    Every (episode, t) pair contributes a squared residual; the step is taken
    on the mean, i.e. gradients are summed over pairs then averaged. Returns
    the mean loss.
    """
    if not episodes:
        raise ConfigError("update_from_batch needs a nonempty batch")
    cfg = state.config
    model = state.online
    w = model.head.matrix
    length = cfg.prompt_length

    prefixes: list[TokenSeq] = []
    actions: list[int] = []
    targets = np.empty(len(episodes) * length)
    unique_next: dict[TokenSeq, int] = {}
    slot_to_row: list[tuple[int, int]] = []
    for i, ep in enumerate(episodes):
        for t in range(length):
            slot = i * length + t
            prefixes.append(ep.tokens[:t])
            actions.append(ep.tokens[t])
            if t == length - 1:
                targets[slot] = ep.reward
            else:
                nxt = ep.tokens[: t + 1]
                row = unique_next.setdefault(nxt, len(unique_next))
                slot_to_row.append((slot, row))

    if unique_next:
        next_rows = list(unique_next)
        e_next = np.stack([encode_prefix(model.encoder, p) for p in next_rows])
        adapted_next, _ = numkit.mlp_forward_batch(state.target.adapter, e_next)
        q_next = adapted_next @ w.T
        if cfg.use_filter:
            masks = np.stack([_retention_mask(state, state.target, p) for p in next_rows])
            q_next = np.where(masks, -np.inf, q_next)
        values = cfg.gamma * cfg.alpha * _value_rows(q_next, cfg.alpha, cfg.backup_kind)
        for slot, row in slot_to_row:
            targets[slot] = values[row]

    e_cur = np.stack([encode_prefix(model.encoder, p) for p in prefixes])
    adapted, cache = numkit.mlp_forward_batch(model.adapter, e_cur)
    w_actions = w[actions]
    q_selected = np.sum(adapted * w_actions, axis=1)
    residuals = q_selected - targets
    count = residuals.size
    grad_rows = (2.0 / count) * residuals[:, None] * w_actions
    grads = numkit.mlp_backward_batch(model.adapter, cache, grad_rows)
    numkit.adam_step(model.adapter_optimizer, model.adapter, grads)
    return float(np.mean(residuals ** 2))


def polyak_update(state: AgentState) -> None:
    """target <- rho * target + (1 - rho) * online, adapter parameters only."""
    rho = state.config.polyak_rho
    pairs = zip(
        (state.target.adapter.w1, state.target.adapter.b1,
         state.target.adapter.w2, state.target.adapter.b2),
        (state.online.adapter.w1, state.online.adapter.b1,
         state.online.adapter.w2, state.online.adapter.b2),
    )
    for tgt, src in pairs:
        tgt *= rho
        tgt += (1.0 - rho) * src


@dataclass(frozen=True)
class CurveRecord:
    """One learning-curve row (the harness CSV schema)."""

    iteration: int
    episode_reward: float
    greedy_reward: float
    mean_loss: float
    mean_support_size: float
    buffer_size: int


def train(state: AgentState, oracle: RewardOracle, iterations: int) -> list[CurveRecord]:
    """Run the outer loop: sample, store, regress, lag the target, record.

    With replay off the update uses just the freshly collected episode
    (on-policy) and the buffer stays empty. One oracle call per iteration for
    the sampled sequence plus one for the greedy evaluation.
    """
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1, got {iterations}")
    state.oracle = oracle
    cfg = state.config
    records = []
    for _ in range(iterations):
        episode, mean_support = _sample_episode_stats(state)
        if cfg.use_replay:
            state.buffer.add(episode)
            batch = state.buffer.sample(state.rng, cfg.batch_episodes)
        else:
            batch = [episode]
        loss = update_from_batch(state, batch)
        polyak_update(state)
        greedy_reward = float(oracle.evaluate(greedy_sequence(state)))
        state.iteration += 1
        records.append(CurveRecord(
            iteration=state.iteration,
            episode_reward=episode.reward,
            greedy_reward=greedy_reward,
            mean_loss=loss,
            mean_support_size=mean_support,
            buffer_size=len(state.buffer),
        ))
    return records
