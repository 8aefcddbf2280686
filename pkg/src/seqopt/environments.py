"""Black-box reward oracles and exact dynamic-programming references.

Every environment scores complete length-L token sequences through a uniform
``evaluate`` interface and is pure: the same sequence always earns the same
reward. ``dp_optimal_q`` computes exact backup tables by backward induction
for small tabular problems, serving as the verification oracle for learned
Q-functions.
"""

from __future__ import annotations

import json
import os
import select
import subprocess
import time
from itertools import product

import numpy as np

from . import sparse_math
from .errors import ConfigError, EnvError, InputError
from .frozen_lm import FrozenEncoder, encode_prefix, make_encoder

Array = np.ndarray

TokenSeq = tuple[int, ...]


class RewardOracle:
    """Opaque evaluator from a length-L token sequence to a scalar reward."""

    vocab_size: int
    length: int

    def evaluate(self, tokens) -> float:
        raise NotImplementedError

    def _check(self, tokens) -> TokenSeq:
        key = tuple(int(z) for z in tokens)
        if len(key) != self.length:
            raise InputError(f"expected {self.length} tokens, got {len(key)}")
        for z in key:
            if z < 0 or z >= self.vocab_size:
                raise InputError(f"token {z} outside vocabulary of size {self.vocab_size}")
        return key


# -- hidden-embedding cosine environment -------------------------------------


class HiddenEmbeddingEnv(RewardOracle):
    """Cosine similarity between an encoded candidate and a hidden target.

    A planted target sequence defines the hidden embedding, so the global
    optimum (reward exactly 1) is known by construction. The text encoder is
    an independent frozen recurrence, unrelated to any policy model.
    """

    def __init__(self, vocab_size: int, length: int, seed: int,
                 embed_dim: int = 32, state_dim: int = 32):
        self.vocab_size = int(vocab_size)
        self.length = int(length)
        self.seed = int(seed)
        self.text_encoder: FrozenEncoder = make_encoder(
            vocab_size, embed_dim, state_dim, seed=seed)
        rng = np.random.default_rng(seed + 1)
        self.target_sequence: TokenSeq = tuple(
            int(z) for z in rng.integers(0, vocab_size, size=length))
        self.target_embedding: Array = encode_prefix(self.text_encoder, self.target_sequence)

    def evaluate(self, tokens) -> float:
        key = self._check(tokens)
        return cosine_reward(self, key)


def cosine_reward(env: HiddenEmbeddingEnv, tokens) -> float:
    """cos(g(tokens), g*) in [-1, 1]; 0 if either vector is near-null."""
    vec = encode_prefix(env.text_encoder, tokens)
    target = env.target_embedding
    nv = float(np.linalg.norm(vec))
    nt = float(np.linalg.norm(target))
    if nv < 1e-12 or nt < 1e-12:
        return 0.0
    return float(vec @ target / (nv * nt))


# -- synthetic few-shot classifier environment --------------------------------


def piecewise_gap_reward(probs, true_class: int, lambda1: float = 180.0, lambda2: float = 200.0) -> float:
    """Hinge-gap score for one example.

    Gap = P(true) - max over other classes; Correct = 1 if Gap > 0.
    Returns lambda1^(1-Correct) * lambda2^Correct * Gap, so correct
    predictions are amplified slightly more than mistakes are penalized.
    A zero gap counts as incorrect and scores exactly 0.
    """
    probs = np.asarray(probs, dtype=np.float64)
    true_class = int(true_class)
    others = np.delete(probs, true_class)
    gap = float(probs[true_class] - np.max(others))
    correct = 1 if gap > 0.0 else 0
    return float(lambda1 ** (1 - correct) * lambda2 ** correct * gap)


class SyntheticClassifierEnv(RewardOracle):
    """Frozen bilinear scorer over (sequence embedding, example embedding).

    Per example i with class label c_i, class probabilities are
    softmax_c(g(z) @ M_c @ x_i); the reward averages (or sums) the
    piecewise hinge-gap score over the few-shot example set. Example
    vectors cluster around per-class prototypes so sequences genuinely
    differ in how well they separate the classes.
    """

    def __init__(self, vocab_size: int, length: int, n_classes: int, seed: int,
                 examples_per_class: int = 16, lambda1: float = 180.0,
                 lambda2: float = 200.0, aggregate: str = "mean",
                 embed_dim: int = 16, state_dim: int = 16, example_dim: int = 16):
        if n_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {n_classes}")
        if aggregate not in ("mean", "sum"):
            raise ConfigError(f"aggregate must be 'mean' or 'sum', got {aggregate!r}")
        self.vocab_size = int(vocab_size)
        self.length = int(length)
        self.n_classes = int(n_classes)
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)
        self.aggregate = aggregate
        self.text_encoder = make_encoder(vocab_size, embed_dim, state_dim, seed=seed)
        rng = np.random.default_rng(seed + 1)
        self.bilinear = rng.standard_normal((n_classes, state_dim, example_dim)) / np.sqrt(
            state_dim * example_dim)
        prototypes = rng.standard_normal((n_classes, example_dim))
        xs, cs = [], []
        for c in range(n_classes):
            noise = 0.3 * rng.standard_normal((examples_per_class, example_dim))
            xs.append(prototypes[c] + noise)
            cs.extend([c] * examples_per_class)
        self.examples: Array = np.concatenate(xs, axis=0)
        self.classes: tuple[int, ...] = tuple(cs)

    def class_probabilities(self, tokens, example_index: int) -> Array:
        """softmax over classes of the bilinear scores for one example."""
        g = encode_prefix(self.text_encoder, tokens)
        x = self.examples[example_index]
        scores = np.array([g @ self.bilinear[c] @ x for c in range(self.n_classes)])
        scores -= np.max(scores)
        e = np.exp(scores)
        return e / e.sum()

    def evaluate(self, tokens) -> float:
        key = self._check(tokens)
        return classification_reward(self, key)


def classification_reward(env: SyntheticClassifierEnv, tokens) -> float:
    """Aggregate piecewise hinge-gap reward over the few-shot example set."""
    scores = [
        piecewise_gap_reward(env.class_probabilities(tokens, i), c, env.lambda1, env.lambda2)
        for i, c in enumerate(env.classes)
    ]
    total = float(np.sum(scores))
    if env.aggregate == "mean":
        return total / len(scores)
    return total


# -- exact tabular environment ------------------------------------------------

MAX_TABULAR_STATES = 10 ** 5


class TabularEnv(RewardOracle):
    """Explicit reward table over token sequences (verification substrate)."""

    def __init__(self, vocab_size: int, length: int, table: dict):
        self.vocab_size = int(vocab_size)
        self.length = int(length)
        self.table: dict[TokenSeq, float] = {
            tuple(int(z) for z in k): float(v) for k, v in table.items()
        }

    def evaluate(self, tokens) -> float:
        key = self._check(tokens)
        return tabular_reward(self, key)

    @classmethod
    def from_file(cls, path, vocab_size: int | None = None, length: int | None = None) -> "TabularEnv":
        """Parse plain-text lines of the form ``tok tok ... tok reward``."""
        table: dict[TokenSeq, float] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) < 2:
                    raise ConfigError(f"{path}:{lineno}: need tokens and a reward")
                try:
                    tokens = tuple(int(p) for p in parts[:-1])
                    reward = float(parts[-1])
                except ValueError as exc:
                    raise ConfigError(f"{path}:{lineno}: {exc}") from exc
                table[tokens] = reward
        if not table:
            raise ConfigError(f"{path}: empty reward table")
        if length is None:
            length = len(next(iter(table)))
        if vocab_size is None:
            vocab_size = 1 + max(max(k) for k in table)
        return cls(vocab_size, length, table)

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for key in sorted(self.table):
                fh.write(" ".join(str(z) for z in key) + f" {self.table[key]!r}\n")


def tabular_reward(env: TabularEnv, tokens) -> float:
    key = tuple(int(z) for z in tokens)
    try:
        return env.table[key]
    except KeyError:
        raise ConfigError(f"sequence {key} not covered by the reward table") from None


def make_random_tabular(vocab_size: int, length: int, seed: int,
                        low: float = 0.0, high: float = 1.0,
                        planted_reward: float | None = None) -> TabularEnv:
    """Full random table; optionally plants one sequence with a fixed reward.

    Planting keeps the optimum well separated from the bulk, which makes
    greedy-recovery checks meaningful at finite tolerance.
    """
    if vocab_size ** length > MAX_TABULAR_STATES:
        raise ConfigError(f"{vocab_size}^{length} sequences exceed the tabular bound")
    rng = np.random.default_rng(seed)
    table = {
        seq: float(r)
        for seq, r in zip(product(range(vocab_size), repeat=length),
                          rng.uniform(low, high, size=vocab_size ** length))
    }
    if planted_reward is not None:
        planted = tuple(int(z) for z in rng.integers(0, vocab_size, size=length))
        table[planted] = float(planted_reward)
    return TabularEnv(vocab_size, length, table)


def dp_optimal_q(env: TabularEnv, alpha: float, gamma: float, backup: str,
                 filter_masks: dict | None = None) -> dict[TokenSeq, Array]:
    """Exact Q tables for every prefix by backward induction.

    Terminal layer: Q(prefix, z) = R(prefix + z). Earlier layers:
    Q(prefix, z) = gamma * alpha * value(Q(prefix + z, .) / alpha), where the
    value operator is the sparse one or log-sum-exp per ``backup``. When
    ``filter_masks`` maps prefixes to ignore masks, successor action values
    are filtered before the backup, mirroring how learned targets are built.
    """
    if backup not in ("sparsemax", "logsumexp"):
        raise ConfigError(f"unknown backup {backup!r}")
    if env.vocab_size ** env.length > MAX_TABULAR_STATES:
        raise ConfigError("environment too large for exact backward induction")
    value_fn = sparse_math.sparsemax_value if backup == "sparsemax" else sparse_math.logsumexp_value
    tables: dict[TokenSeq, Array] = {}
    for t in range(env.length - 1, -1, -1):
        for prefix in product(range(env.vocab_size), repeat=t):
            q = np.empty(env.vocab_size)
            for z in range(env.vocab_size):
                nxt = prefix + (z,)
                if t == env.length - 1:
                    q[z] = env.table[nxt]
                else:
                    q_next = tables[nxt]
                    if filter_masks is not None and nxt in filter_masks:
                        q_next = sparse_math.apply_filter(q_next, filter_masks[nxt])
                    q[z] = gamma * alpha * value_fn(q_next, alpha)
            tables[prefix] = q
    return tables


# -- subprocess bridge ---------------------------------------------------------


class BridgeEnv(RewardOracle):
    """Reward oracle served by a child process over line-delimited JSON.

    One request per evaluate call: ``{"id": n, "tokens": [...]}`` followed by
    newline; the child must answer with one line ``{"id": n, "reward": r}``
    echoing the id. Unknown response fields are ignored. Calls are strictly
    synchronous; use one BridgeEnv per agent.
    """

    def __init__(self, command, vocab_size: int, length: int, timeout: float = 10.0):
        self.vocab_size = int(vocab_size)
        self.length = int(length)
        self.timeout = float(timeout)
        self.command = list(command)
        self._next_id = 0
        self._buffer = b""
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise EnvError(f"failed to launch bridge child {self.command!r}: {exc}") from exc

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        try:
            if proc.stdin:
                proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        self._proc = None

    def __enter__(self) -> "BridgeEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _read_line(self, deadline: float) -> bytes:
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise EnvError(f"bridge timeout after {self.timeout}s waiting for response")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise EnvError(f"bridge timeout after {self.timeout}s waiting for response")
            chunk = os.read(fd, 65536)
            if chunk == b"":
                raise EnvError("bridge child closed its output stream")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def evaluate(self, tokens) -> float:
        key = self._check(tokens)
        return bridge_evaluate(self, key)


def bridge_evaluate(env: BridgeEnv, tokens) -> float:
    """One synchronous request/response exchange with the child process."""
    if env._proc is None or env._proc.poll() is not None:
        raise EnvError("bridge child process is not running")
    request_id = env._next_id
    env._next_id += 1
    payload = json.dumps({"id": request_id, "tokens": [int(z) for z in tokens]})
    try:
        env._proc.stdin.write(payload.encode("utf-8") + b"\n")
        env._proc.stdin.flush()
    except (BrokenPipeError, OSError) as exc:
        raise EnvError(f"bridge child rejected the request: {exc}") from exc
    line = env._read_line(deadline=time.monotonic() + env.timeout)
    try:
        message = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EnvError(f"malformed bridge response {line[:200]!r}: {exc}") from exc
    if not isinstance(message, dict):
        raise EnvError(f"bridge response is not an object: {line[:200]!r}")
    if message.get("id") != request_id:
        raise EnvError(f"bridge id mismatch: sent {request_id}, got {message.get('id')!r}")
    reward = message.get("reward")
    if not isinstance(reward, (int, float)) or isinstance(reward, bool) or not np.isfinite(reward):
        raise EnvError(f"bridge returned a non-finite or missing reward: {reward!r}")
    return float(reward)


# -- spec-driven construction --------------------------------------------------


def make_environment(spec: dict) -> RewardOracle:
    """Build an environment from a plain config mapping (see README)."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("environment spec must be a mapping with a 'kind' field")
    kind = spec["kind"]
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "hidden_embedding":
            return HiddenEmbeddingEnv(**params)
        if kind == "synthetic_classifier":
            return SyntheticClassifierEnv(**params)
        if kind == "tabular":
            if "path" in params:
                return TabularEnv.from_file(params["path"],
                                            vocab_size=params.get("vocab_size"),
                                            length=params.get("length"))
            if "table" in params:
                table = {tuple(int(t) for t in key.split()): float(v)
                         for key, v in params["table"].items()}
                return TabularEnv(params["vocab_size"], params["length"], table)
            if "planted_reward" in params or "seed" in params:
                return make_random_tabular(**params)
            raise ConfigError("tabular environment needs 'path', 'table', or 'seed'")
        if kind == "bridge":
            return BridgeEnv(params["command"], params["vocab_size"],
                             params["length"], params.get("timeout", 10.0))
    except TypeError as exc:
        raise ConfigError(f"bad parameters for environment kind {kind!r}: {exc}") from exc
    raise ConfigError(f"unknown environment kind {kind!r}")
