"""Q-network parameterization over a frozen sequence encoder.

The model computes Q(prefix, token) = W[token] . adapter(encode(prefix)):
a frozen tanh recurrence maps a token prefix to a state vector, the trainable
two-layer adapter maps that vector back into the same space, and a fixed head
matrix W (one row per vocabulary token) turns it into per-token action values.
Only the adapter ever trains. With vocab size far above the state dimension
the head system W x = target is overdetermined, so per-token fitting error is
unavoidable; that is the regime the sparse policy operators are designed for.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import numkit
from .errors import ConfigError, InputError, NumericError
from .numkit import AdamState, MlpGrads, MlpParams

Array = np.ndarray

TokenSeq = tuple[int, ...]


@dataclass(eq=False)
class VocabSpec:
    """Vocabulary size plus optional display labels."""

    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 2:
            raise ConfigError(f"vocabulary size must be >= 2, got {self.size}")
        if self.labels is not None and len(self.labels) != self.size:
            raise ConfigError("labels length must equal vocabulary size")


@dataclass(eq=False)
class FrozenEncoder:
    """Deterministic recurrent prefix encoder; parameters fixed after init.

    State update per token z: s <- tanh(rec_w @ [s; embedding[z]] + rec_b).
    The empty prefix encodes to ``initial_state``. Because parameters never
    change, encodings are memoized per prefix.
    """

    embedding: Array          # (vocab, embed_dim)
    rec_w: Array              # (state_dim, state_dim + embed_dim)
    rec_b: Array              # (state_dim,)
    initial_state: Array      # (state_dim,)
    seed: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def vocab_size(self) -> int:
        return self.embedding.shape[0]

    @property
    def state_dim(self) -> int:
        return self.initial_state.shape[0]


def make_encoder(vocab_size: int, embed_dim: int, state_dim: int, seed: int) -> FrozenEncoder:
    """Seeded random encoder with standard-normal / sqrt(fan) parameters."""
    if vocab_size < 2:
        raise ConfigError(f"vocabulary size must be >= 2, got {vocab_size}")
    rng = np.random.default_rng(seed)
    embedding = rng.standard_normal((vocab_size, embed_dim)) / np.sqrt(embed_dim)
    rec_w = rng.standard_normal((state_dim, state_dim + embed_dim)) / np.sqrt(state_dim + embed_dim)
    rec_b = np.zeros(state_dim)
    initial_state = rng.standard_normal(state_dim) / np.sqrt(state_dim)
    return FrozenEncoder(embedding, rec_w, rec_b, initial_state, seed)


def encode_prefix(encoder: FrozenEncoder, prefix) -> Array:
    """Deterministic encoding of a token prefix (empty prefix -> initial state)."""
    key = tuple(int(z) for z in prefix)
    for z in key:
        if z < 0 or z >= encoder.vocab_size:
            raise InputError(f"token {z} outside vocabulary of size {encoder.vocab_size}")
    return _encode_cached(encoder, key)


def _encode_cached(encoder: FrozenEncoder, key: TokenSeq) -> Array:
    hit = encoder._cache.get(key)
    if hit is not None:
        return hit
    if not key:
        state = encoder.initial_state
    else:
        prev = _encode_cached(encoder, key[:-1])
        stacked = np.concatenate([prev, encoder.embedding[key[-1]]])
        state = np.tanh(encoder.rec_w @ stacked + encoder.rec_b)
        state.flags.writeable = False
    encoder._cache[key] = state
    return state


@dataclass(eq=False)
class LmHead:
    """Fixed head matrix; row i scores token i."""

    matrix: Array  # (vocab, state_dim)
    seed: int

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]


def make_head(vocab_size: int, state_dim: int, seed: int) -> LmHead:
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((vocab_size, state_dim)) / np.sqrt(state_dim)
    return LmHead(matrix, seed)


def make_identity_head(vocab_size: int, state_dim: int) -> LmHead:
    """Identity-padded head for tabular mode; requires state_dim >= vocab_size."""
    if state_dim < vocab_size:
        raise ConfigError("identity head needs state_dim >= vocab_size")
    return LmHead(np.eye(vocab_size, state_dim), seed=-1)


@dataclass(eq=False)
class QFunctionModel:
    """Frozen encoder + fixed head + trainable adapter and its optimizer."""

    encoder: FrozenEncoder
    head: LmHead
    adapter: MlpParams
    adapter_optimizer: AdamState

    @property
    def vocab_size(self) -> int:
        return self.head.vocab_size

    @property
    def state_dim(self) -> int:
        return self.encoder.state_dim


def make_q_model(
    vocab_size: int,
    state_dim: int = 32,
    embed_dim: int | None = None,
    hidden: int = 256,
    encoder_seed: int = 0,
    adapter_seed: int = 1,
    learning_rate: float = 5e-5,
    activation: str = "relu",
) -> QFunctionModel:
    """Standard model: random frozen encoder/head, fresh adapter and Adam state."""
    if embed_dim is None:
        embed_dim = state_dim
    encoder = make_encoder(vocab_size, embed_dim, state_dim, seed=encoder_seed)
    head = make_head(vocab_size, state_dim, seed=encoder_seed + 1)
    adapter = numkit.init_mlp(state_dim, hidden, seed=adapter_seed, activation=activation)
    opt = numkit.init_adam(adapter, learning_rate)
    return QFunctionModel(encoder, head, adapter, opt)


def make_tabular_model(
    vocab_size: int,
    hidden: int = 256,
    embed_dim: int = 8,
    state_dim: int | None = None,
    encoder_seed: int = 0,
    adapter_seed: int = 1,
    learning_rate: float = 5e-5,
    optimistic_init: float = 0.0,
) -> QFunctionModel:
    """Exactly-representable mode: state_dim >= vocab_size, identity-padded head.

    Any target vector over the vocabulary is reachable by some adapter
    output, so value-iteration fixed points can be matched exactly. A state
    dimension well above the vocabulary keeps prefix encodings close to
    orthogonal, limiting cross-prefix interference. With the identity head,
    ``optimistic_init`` places every initial Q value at that constant;
    starting above the reward range keeps unvisited actions inside sparse
    supports until they are actually tried.
    """
    if state_dim is None:
        state_dim = max(8 * vocab_size, 48)
    encoder = make_encoder(vocab_size, embed_dim, state_dim, seed=encoder_seed)
    head = make_identity_head(vocab_size, state_dim)
    adapter = numkit.init_mlp(state_dim, hidden, seed=adapter_seed, output_bias=optimistic_init)
    opt = numkit.init_adam(adapter, learning_rate)
    return QFunctionModel(encoder, head, adapter, opt)


def base_logits(model: QFunctionModel, e_t: Array) -> Array:
    """Head scores W @ e_t of the raw (un-adapted) encoding."""
    e_t = np.asarray(e_t, dtype=np.float64)
    if e_t.shape != (model.state_dim,):
        raise ConfigError(f"encoding shape {e_t.shape} != ({model.state_dim},)")
    return model.head.matrix @ e_t


def q_values(model: QFunctionModel, prefix) -> Array:
    """Action values W @ adapter(encode(prefix)) for every token."""
    e_t = encode_prefix(model.encoder, prefix)
    adapted, _ = numkit.mlp_forward(model.adapter, e_t)
    return model.head.matrix @ adapted


@dataclass(eq=False)
class IgnorableSet:
    """Per-prefix retention mask: True marks tokens dropped from consideration."""

    mask: Array
    k: int

    @property
    def ignored_count(self) -> int:
        return int(np.count_nonzero(self.mask))


def ignorable_set(model: QFunctionModel, prefix, k: int) -> IgnorableSet:
    """Tokens whose base logit falls strictly below the k-th largest.

    Ties with the k-th largest logit are retained, so the retained count is
    at least k. Base logits use the raw encoding, so for a fixed prefix the
    set never changes as the adapter trains.
    """
    vocab = model.vocab_size
    if not (1 <= k <= vocab):
        raise ConfigError(f"k must be in [1, {vocab}], got {k}")
    logits = base_logits(model, encode_prefix(model.encoder, prefix))
    kth = np.partition(logits, vocab - k)[vocab - k]
    return IgnorableSet(mask=logits < kth, k=k)


def td_grads(model: QFunctionModel, prefix, action_token: int, target_value: float) -> tuple[float, MlpGrads]:
    """Squared TD residual at one (prefix, action) and its adapter gradients.

    The target is treated as a constant: gradient 2r * W[action] flows back
    through the adapter only.
    """
    if not np.isfinite(target_value):
        raise NumericError(f"non-finite target value {target_value}")
    action_token = int(action_token)
    if action_token < 0 or action_token >= model.vocab_size:
        raise InputError(f"action token {action_token} outside vocabulary")
    e_t = encode_prefix(model.encoder, prefix)
    adapted, cache = numkit.mlp_forward(model.adapter, e_t)
    # full product, then index: keeps the residual bitwise consistent with
    # q_values, so a target taken from there is an exact fixed point
    residual = float((model.head.matrix @ adapted)[action_token]) - float(target_value)
    grads = numkit.mlp_backward(model.adapter, cache,
                                (2.0 * residual) * model.head.matrix[action_token])
    return residual * residual, grads


def train_adapter_step(model: QFunctionModel, prefix, action_token: int, target_value: float) -> float:
    """One TD regression step on the adapter; returns the squared residual."""
    loss, grads = td_grads(model, prefix, action_token, target_value)
    numkit.adam_step(model.adapter_optimizer, model.adapter, grads)
    return loss


def clone_adapter(model: QFunctionModel) -> MlpParams:
    return model.adapter.copy()


# -- checkpointing ----------------------------------------------------------

_CHECKPOINT_KIND = "seqopt-q-model"


def save_model(model: QFunctionModel, path) -> None:
    """Self-describing .npz checkpoint; reload reproduces q_values bitwise."""
    meta = {
        "kind": _CHECKPOINT_KIND,
        "vocab_size": model.vocab_size,
        "state_dim": model.state_dim,
        "embed_dim": int(model.encoder.embedding.shape[1]),
        "hidden": model.adapter.hidden,
        "encoder_seed": model.encoder.seed,
        "head_seed": model.head.seed,
        "activation": model.adapter.activation,
        "learning_rate": model.adapter_optimizer.learning_rate,
        "beta1": model.adapter_optimizer.beta1,
        "beta2": model.adapter_optimizer.beta2,
        "epsilon": model.adapter_optimizer.epsilon,
        "step_count": model.adapter_optimizer.step_count,
    }
    arrays = {
        "embedding": model.encoder.embedding,
        "rec_w": model.encoder.rec_w,
        "rec_b": model.encoder.rec_b,
        "initial_state": model.encoder.initial_state,
        "head": model.head.matrix,
        "w1": model.adapter.w1,
        "b1": model.adapter.b1,
        "w2": model.adapter.w2,
        "b2": model.adapter.b2,
        "m_w1": model.adapter_optimizer.first_moment.w1,
        "m_b1": model.adapter_optimizer.first_moment.b1,
        "m_w2": model.adapter_optimizer.first_moment.w2,
        "m_b2": model.adapter_optimizer.first_moment.b2,
        "v_w1": model.adapter_optimizer.second_moment.w1,
        "v_b1": model.adapter_optimizer.second_moment.b1,
        "v_w2": model.adapter_optimizer.second_moment.w2,
        "v_b2": model.adapter_optimizer.second_moment.b2,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8), **arrays)


def load_model(path) -> QFunctionModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("kind") != _CHECKPOINT_KIND:
            raise ConfigError(f"not a model checkpoint: {path}")
        encoder = FrozenEncoder(
            embedding=data["embedding"],
            rec_w=data["rec_w"],
            rec_b=data["rec_b"],
            initial_state=data["initial_state"],
            seed=int(meta["encoder_seed"]),
        )
        head = LmHead(matrix=data["head"], seed=int(meta["head_seed"]))
        adapter = MlpParams(data["w1"], data["b1"], data["w2"], data["b2"], meta["activation"])
        opt = AdamState(
            first_moment=MlpGrads(data["m_w1"], data["m_b1"], data["m_w2"], data["m_b2"]),
            second_moment=MlpGrads(data["v_w1"], data["v_b1"], data["v_w2"], data["v_b2"]),
            step_count=int(meta["step_count"]),
            learning_rate=float(meta["learning_rate"]),
            beta1=float(meta["beta1"]),
            beta2=float(meta["beta2"]),
            epsilon=float(meta["epsilon"]),
        )
    return QFunctionModel(encoder, head, adapter, opt)


def frozen_bytes(model: QFunctionModel) -> bytes:
    """Serialized frozen parts (encoder + head) for frozenness checks."""
    buf = io.BytesIO()
    for arr in (
        model.encoder.embedding,
        model.encoder.rec_w,
        model.encoder.rec_b,
        model.encoder.initial_state,
        model.head.matrix,
    ):
        buf.write(np.ascontiguousarray(arr).tobytes())
    return buf.getvalue()
