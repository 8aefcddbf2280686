"""Self-contained verification suite behind ``seqopt verify``.

Re-checks the core operators against independent oracles (simplex projection,
finite differences, hand-worked backups) and prints one PASS/FAIL line per
check. Returns True only if everything passes.
"""

from __future__ import annotations

import numpy as np

from . import numkit, sparse_math
from .environments import TabularEnv, dp_optimal_q, piecewise_gap_reward
from .frozen_lm import make_q_model, q_values, td_grads


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Sort-based Euclidean projection onto the probability simplex."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    cond = u - css / ind > 0
    rho = ind[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def _check(results: list, name: str, ok: bool, detail: str = "") -> None:
    results.append((name, bool(ok), detail))


def _sparsemax_vs_projection(results, n_vectors: int) -> None:
    rng = np.random.default_rng(2024)
    dims = (2, 3, 8, 64, 512)
    alphas = (0.1, 0.5, 1.0, 2.0, 80.0)
    worst = 0.0
    count = 0
    while count < n_vectors:
        for dim in dims:
            for alpha in alphas:
                q = rng.standard_normal(dim) * rng.uniform(0.5, 4.0)
                dist = sparse_math.sparsemax_dist(q, alpha)
                ref = project_simplex(q / alpha)
                worst = max(worst, float(np.max(np.abs(dist.probabilities - ref))))
                count += 1
                if count >= n_vectors:
                    break
            if count >= n_vectors:
                break
    _check(results, f"sparsemax equals simplex projection on {n_vectors} vectors",
           worst < 1e-9, f"max component error {worst:.3g}")


def _value_identity(results, n_vectors: int) -> None:
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(n_vectors):
        dim = int(rng.integers(2, 64))
        alpha = float(rng.choice([0.1, 0.5, 1.0, 2.0, 80.0]))
        q = rng.standard_normal(dim) * 2.0
        dist = sparse_math.sparsemax_dist(q, alpha)
        lhs = alpha * sparse_math.sparsemax_value(q, alpha)
        rhs = float(dist.probabilities @ q) + alpha * sparse_math.tsallis_entropy(dist, 2.0, 1.0)
        worst = max(worst, abs(lhs - rhs))
    hand1 = sparse_math.sparsemax_value(np.array([1.2, 0.8]), 1.0)
    hand2 = sparse_math.sparsemax_value(np.array([0.0, 0.0]), 1.0)
    _check(results, "sparse value identity (incl. hand cases 1.29 / 0.25)",
           worst < 1e-9 and abs(hand1 - 1.29) < 1e-12 and abs(hand2 - 0.25) < 1e-12,
           f"max identity error {worst:.3g}, hand values {hand1}, {hand2}")


def _gradient_checks(results, n_cases: int) -> None:
    worst = 0.0
    for case in range(n_cases):
        rng = np.random.default_rng(1000 + case)
        dim = int(rng.choice([4, 8, 16]))
        params = numkit.MlpParams(
            w1=rng.standard_normal((3 * dim, dim)) / np.sqrt(dim),
            b1=rng.standard_normal(3 * dim) * 0.3,
            w2=rng.standard_normal((dim, 3 * dim)) / np.sqrt(3 * dim),
            b2=rng.standard_normal(dim) * 0.3,
        )
        x = rng.standard_normal(dim)
        g = rng.standard_normal(dim)
        _, cache = numkit.mlp_forward(params, x)
        grads = numkit.mlp_backward(params, cache, g)
        flat = np.concatenate([a.ravel() for a in grads.arrays()])
        idx = rng.choice(flat.size, size=min(12, flat.size), replace=False)
        for j in idx:
            num = _fd_scalar(params, x, g, int(j))
            ana = flat[int(j)]
            scale = max(abs(num), abs(ana), 1e-8)
            worst = max(worst, abs(num - ana) / scale)
    _check(results, f"MLP gradients match finite differences over {n_cases} cases",
           worst < 1e-5, f"worst relative error {worst:.3g}")


def _fd_scalar(params, x, g, flat_index: int, step: float = 1e-5) -> float:
    arrays = (params.w1, params.b1, params.w2, params.b2)
    offset = 0
    for arr in arrays:
        if flat_index < offset + arr.size:
            local = flat_index - offset
            orig = arr.flat[local]
            arr.flat[local] = orig + step
            up = float(g @ numkit.mlp_forward(params, x)[0])
            arr.flat[local] = orig - step
            down = float(g @ numkit.mlp_forward(params, x)[0])
            arr.flat[local] = orig
            return (up - down) / (2 * step)
        offset += arr.size
    raise IndexError(flat_index)


def _hand_dp(results) -> None:
    env = TabularEnv(2, 2, {(0, 0): 0.0, (0, 1): 1.0, (1, 0): 0.0, (1, 1): 2.0})
    q_sp = dp_optimal_q(env, alpha=0.01, gamma=1.0, backup="sparsemax")
    root = q_sp[()]
    ok = abs(root[0] - 1.0) < 1e-9 and abs(root[1] - 2.0) < 1e-9
    q_lse = dp_optimal_q(env, alpha=1.0, gamma=1.0, backup="logsumexp")
    ok = ok and abs(q_lse[()][1] - np.log(1 + np.e ** 2)) < 1e-9
    _check(results, "hand backward-induction cases (sparse root [1, 2]; lse root)",
           ok, f"sparse root {root}, lse root {q_lse[()]}")


def _classification_cases(results) -> None:
    r1 = piecewise_gap_reward([0.6, 0.3, 0.1], 0)
    r2 = piecewise_gap_reward([0.3, 0.6, 0.1], 0)
    r3 = piecewise_gap_reward([0.5, 0.5], 0)
    ok = r1 == 60.0 and r2 == -54.0 and r3 == 0.0
    _check(results, "piecewise classification reward hand cases (60 / -54 / 0)",
           ok, f"got {r1}, {r2}, {r3}")


def _filter_and_bounds(results) -> None:
    logits = np.array([3.0, 2.0, 2.0, 0.0])
    kth = np.partition(logits, logits.size - 2)[logits.size - 2]
    ignored = logits < kth
    ok = list(np.flatnonzero(ignored)) == [3]
    fl = sparse_math.apply_filter(np.array([1.0, 2.0]), np.array([True, False]))
    dist = sparse_math.sparsemax_dist(fl, 1.0)
    ok = ok and dist.probabilities[0] == 0.0 and dist.probabilities[1] == 1.0
    rng = np.random.default_rng(5)
    bound_ok = True
    for _ in range(100):
        q = rng.standard_normal(16)
        alpha = float(rng.choice([0.1, 1.0, 2.0]))
        bound_ok = bound_ok and sparse_math.logsumexp_value(q, alpha) >= float(np.max(q)) / alpha - 1e-12
    _check(results, "filter tie case and log-sum-exp lower bound", ok and bound_ok)


def _td_gradient(results) -> None:
    model = make_q_model(vocab_size=40, state_dim=8, hidden=32,
                         encoder_seed=3, adapter_seed=4, learning_rate=1e-3)
    # move off the zero init so the residual is generic
    rng = np.random.default_rng(9)
    model.adapter.w2 += 0.2 * rng.standard_normal(model.adapter.w2.shape)
    prefix, action, target = (1, 2), 7, 0.5
    _, grads = td_grads(model, prefix, action, target)
    flat = np.concatenate([a.ravel() for a in grads.arrays()])
    idx = rng.choice(flat.size, size=10, replace=False)
    worst = 0.0
    arrays = (model.adapter.w1, model.adapter.b1, model.adapter.w2, model.adapter.b2)
    for j in idx:
        offset = 0
        for arr in arrays:
            if j < offset + arr.size:
                local = int(j - offset)
                orig = arr.flat[local]
                step = 1e-5
                arr.flat[local] = orig + step
                up = (float(model.head.matrix[action] @ _adapted(model, prefix)) - target) ** 2
                arr.flat[local] = orig - step
                down = (float(model.head.matrix[action] @ _adapted(model, prefix)) - target) ** 2
                arr.flat[local] = orig
                num = (up - down) / (2 * step)
                ana = flat[int(j)]
                scale = max(abs(num), abs(ana), 1e-8)
                worst = max(worst, abs(num - ana) / scale)
                break
            offset += arr.size
    _check(results, "TD-loss adapter gradients match finite differences",
           worst < 1e-5, f"worst relative error {worst:.3g}")


def _adapted(model, prefix):
    from .frozen_lm import encode_prefix
    return numkit.mlp_forward(model.adapter, encode_prefix(model.encoder, prefix))[0]


def _determinism(results) -> None:
    model_a = make_q_model(vocab_size=30, state_dim=8, hidden=16, encoder_seed=1, adapter_seed=2)
    model_b = make_q_model(vocab_size=30, state_dim=8, hidden=16, encoder_seed=1, adapter_seed=2)
    qa = q_values(model_a, (4, 5))
    qb = q_values(model_b, (4, 5))
    _check(results, "identical seeds give bitwise-identical Q values",
           bool(np.array_equal(qa, qb)))


def run_verification(quick: bool = False) -> bool:
    """Run every check; print one line each; True iff all pass."""
    results: list[tuple[str, bool, str]] = []
    _sparsemax_vs_projection(results, 1_000 if quick else 10_000)
    _value_identity(results, 200 if quick else 2_000)
    _gradient_checks(results, 10 if quick else 40)
    _td_gradient(results)
    _hand_dp(results)
    _classification_cases(results)
    _filter_and_bounds(results)
    _determinism(results)
    all_ok = True
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        suffix = f" ({detail})" if detail and not ok else ""
        print(f"{status} {name}{suffix}")
        all_ok = all_ok and ok
    return all_ok
