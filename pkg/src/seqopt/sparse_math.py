"""Entropy-regularized policy and value operators over score vectors.

Two families are implemented over a vector of action scores q and a
regularization coefficient alpha > 0:

* sparse: the sparsemax distribution max(q/alpha - tau, 0), which equals the
  Euclidean projection of q/alpha onto the probability simplex and assigns
  exactly zero probability outside a supporting set of top-ranked actions,
  together with its value operator;
* dense: the softmax distribution and the log-sum-exp value.

Scores may carry filtered entries marked with a reserved sentinel (see
``apply_filter``); filtered actions receive probability exactly 0.0 and never
enter supports, thresholds, or values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, NumericError

Array = np.ndarray

# Most-negative finite float64. Marks filtered-out actions. It is never the
# result of arithmetic here; membership is tracked by the mask, the constant
# only keeps filtered vectors representable without NaN/inf hazards.
NEG_SENTINEL = float(-np.finfo(np.float64).max)


@dataclass(eq=False)
class FilteredLogits:
    """Score vector with some entries replaced by the filtered sentinel."""

    values: Array
    ignored_mask: Array

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.ignored_mask = np.asarray(self.ignored_mask, dtype=bool)
        if self.values.shape != self.ignored_mask.shape or self.values.ndim != 1:
            raise ConfigError("values and ignored_mask must be 1-D with equal length")
        if bool(np.all(self.ignored_mask)):
            raise DomainError("all actions are filtered out")
        if not np.all(self.values[self.ignored_mask] == NEG_SENTINEL):
            raise ConfigError("ignored entries must carry the sentinel value")
        if np.any(self.values[~self.ignored_mask] == NEG_SENTINEL):
            raise ConfigError("sentinel value present outside the ignored mask")


@dataclass(eq=False)
class ActionDistribution:
    """Probability vector with explicit support.

    ``support`` lists the indices with strictly positive probability in
    descending score order (ties by ascending index). ``threshold_value`` is
    the sparsemax threshold tau(q/alpha); for softmax distributions, which
    keep every feasible action, it is -inf.
    """

    probabilities: Array
    support: Array
    threshold_value: float

    @property
    def support_size(self) -> int:
        return int(self.support.size)


def apply_filter(q: Array, ignored: Array) -> FilteredLogits:
    """Mask out action scores: kept entries copied exactly, rest sentinel."""
    q = np.asarray(q, dtype=np.float64)
    ignored = np.asarray(ignored, dtype=bool)
    if q.shape != ignored.shape:
        raise ConfigError(f"score shape {q.shape} != mask shape {ignored.shape}")
    if bool(np.all(ignored)):
        raise DomainError("filter would remove every action")
    values = np.where(ignored, NEG_SENTINEL, q)
    return FilteredLogits(values=values, ignored_mask=ignored)


def _split(q) -> tuple[Array, Array]:
    """Normalize input to (values, ignored_mask), validating feasibility."""
    if isinstance(q, FilteredLogits):
        values, mask = q.values, q.ignored_mask
    else:
        values = np.asarray(q, dtype=np.float64)
        if values.ndim != 1:
            raise ConfigError(f"expected 1-D score vector, got shape {values.shape}")
        mask = values == NEG_SENTINEL
    if bool(np.all(mask)):
        raise DomainError("no feasible action: every entry is filtered")
    if not np.all(np.isfinite(values[~mask])):
        raise NumericError("non-finite score among feasible actions")
    return values, mask


def _check_alpha(alpha: float) -> float:
    if not (alpha > 0.0) or not math.isfinite(alpha):
        raise ConfigError(f"alpha must be a positive finite float, got {alpha}")
    return float(alpha)


def _sparse_core(scaled: Array, mask: Array) -> tuple[Array, int, float]:
    """Shared sparsemax machinery on pre-scaled scores.

    Returns (kept indices in descending score order, support size, tau).
    The support is the largest prefix z_(1..n) of the descending ordering
    satisfying 1 + n*z_(n) > sum_{m<=n} z_(m); tau is then
    (sum over support - 1) / |support|. Ties share a value, so they pass or
    fail the prefix test together: tied entries are all in or all out.
    """
    kept = np.flatnonzero(~mask)
    # stable sort on negated values: descending score, ties by ascending index
    order = kept[np.argsort(-scaled[kept], kind="stable")]
    s = scaled[order]
    css = np.cumsum(s)
    n = np.arange(1, s.size + 1, dtype=np.float64)
    cond = 1.0 + n * s > css
    size = int(n[cond][-1])  # cond[0] always holds, so the support is never empty
    t = (css[size - 1] - 1.0) / size
    return order, size, float(t)


def supporting_set(scaled_q) -> Array:
    """Indices receiving positive sparsemax probability, best score first."""
    values, mask = _split(scaled_q)
    order, size, _ = _sparse_core(values, mask)
    return order[:size]


def tau(scaled_q) -> float:
    """Sparsemax threshold: scores at or below it get probability zero."""
    values, mask = _split(scaled_q)
    _, _, t = _sparse_core(values, mask)
    return t


def sparsemax_dist(q, alpha: float) -> ActionDistribution:
    """Sparsemax distribution max(q/alpha - tau, 0).

    Equals the Euclidean projection of q/alpha onto the probability simplex.
    Filtered entries get probability exactly 0.0.
    """
    alpha = _check_alpha(alpha)
    values, mask = _split(q)
    scaled = np.zeros_like(values)
    np.divide(values, alpha, out=scaled, where=~mask)
    order, size, t = _sparse_core(scaled, mask)
    probs = np.zeros_like(values)
    sup = order[:size]
    probs[sup] = np.maximum(scaled[sup] - t, 0.0)
    sup = sup[probs[sup] > 0.0]
    return ActionDistribution(probabilities=probs, support=sup, threshold_value=t)


def sparsemax_value(q, alpha: float) -> float:
    """Sparse value operator (1 + sum over support of (z^2 - tau^2)) / 2 on q/alpha.

    Computed in the factored form sum (z - tau)(z + tau) to avoid squaring
    large scaled scores. Satisfies
    alpha * sparsemax_value(q, alpha) = E_pi[q] + alpha * S2(pi)
    for pi = sparsemax_dist(q, alpha) and S2 the quadratic entropy with unit
    scalar.
    """
    alpha = _check_alpha(alpha)
    values, mask = _split(q)
    scaled = np.zeros_like(values)
    np.divide(values, alpha, out=scaled, where=~mask)
    order, size, t = _sparse_core(scaled, mask)
    s = scaled[order[:size]]
    return float((1.0 + np.sum((s - t) * (s + t))) / 2.0)


def softmax_dist(q, alpha: float) -> ActionDistribution:
    """Softmax over q/alpha with max-subtraction; filtered entries get 0."""
    alpha = _check_alpha(alpha)
    values, mask = _split(q)
    kept = np.flatnonzero(~mask)
    scaled = values[kept] / alpha
    exps = np.exp(scaled - np.max(scaled))
    p = exps / np.sum(exps)
    probs = np.zeros_like(values)
    probs[kept] = p
    order = kept[np.argsort(-scaled, kind="stable")]
    sup = order[probs[order] > 0.0]
    return ActionDistribution(probabilities=probs, support=sup, threshold_value=-math.inf)


def logsumexp_value(q, alpha: float) -> float:
    """log sum exp(q/alpha) over feasible entries, max-subtracted for stability."""
    alpha = _check_alpha(alpha)
    values, mask = _split(q)
    scaled = values[~mask] / alpha
    m = np.max(scaled)
    return float(m + np.log(np.sum(np.exp(scaled - m))))


def tsallis_entropy(dist: ActionDistribution, entropic_index: float, scalar_k: float = 1.0) -> float:
    """Generalized entropy of a distribution.

    For index != 1 returns k * (1 - sum p^index) / (index * (index - 1)),
    normalized so the index -> 1 limit is k times Shannon entropy and
    index = 2 equals k * E_p[(1 - p) / 2], the quadratic form whose value
    identity with ``sparsemax_value`` holds at scalar_k = 1. index = 1 routes
    to Shannon entropy directly.
    """
    if not (scalar_k > 0.0):
        raise ConfigError(f"scalar_k must be positive, got {scalar_k}")
    p = dist.probabilities[dist.support]
    if entropic_index == 1.0:
        return float(scalar_k * -np.sum(p * np.log(p)))
    qi = float(entropic_index)
    return float(scalar_k * (1.0 - np.sum(p ** qi)) / (qi * (qi - 1.0)))
