"""Shared oracles for the test suite.

Everything here is deliberately written the dumb way (loops, brute force,
library calls) so the package code is checked against an independent route.
"""

import numpy as np


def central_diff(fn, x, h=1e-6):
    """Central finite differences of a scalar function at x, entry by entry."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        up = x.copy()
        up[idx] += h
        dn = x.copy()
        dn[idx] -= h
        grad[idx] = (fn(up) - fn(dn)) / (2.0 * h)
        it.iternext()
    return grad


def rel_err(got, want):
    want = np.asarray(want, dtype=np.float64)
    got = np.asarray(got, dtype=np.float64)
    denom = max(np.linalg.norm(want.ravel()), 1e-12)
    return np.linalg.norm((got - want).ravel()) / denom


def eigvals_oracle(z):
    """Singular values of z via numpy's symmetric eigensolver, sorted desc."""
    gram = z.T @ z
    vals = np.linalg.eigvalsh(gram)
    return np.sqrt(np.clip(vals, 0.0, None))[::-1]


def brute_hit_ratio(lists, targets, train_mask, users):
    hits = []
    for u in users:
        ranked = list(lists[list(users).index(u)])
        for t in targets:
            if train_mask[u, t]:
                continue
            hits.append(1.0 if t in ranked else 0.0)
    if not hits:
        raise ValueError("no eligible pairs")
    return float(np.mean(hits))


def brute_ndcg(lists, targets, train_mask, k, users):
    scores = []
    for row, u in enumerate(users):
        elig = [t for t in targets if not train_mask[u, t]]
        if not elig:
            continue
        dcg = 0.0
        for rank, item in enumerate(lists[row]):
            if item in elig:
                dcg += 1.0 / np.log2(rank + 2.0)
        ideal = sum(1.0 / np.log2(r + 2.0) for r in range(min(len(elig), k)))
        scores.append(dcg / ideal)
    if not scores:
        raise ValueError("no eligible users")
    return float(np.mean(scores))


def brute_recall(lists, test_pairs, users):
    per_user = {}
    for u, i in test_pairs:
        per_user.setdefault(int(u), set()).add(int(i))
    scores = []
    for row, u in enumerate(users):
        held = per_user.get(int(u))
        if not held:
            continue
        got = sum(1.0 for i in held if i in set(lists[row]))
        scores.append(got / len(held))
    if not scores:
        raise ValueError("no test users")
    return float(np.mean(scores))


def unit_rows(rng, n, d):
    """Random matrix with exactly unit rows."""
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def bpr_oracle(z_user, z_item, batch):
    """Literal transcription of the pairwise ranking loss."""
    batch = list(batch)
    total = 0.0
    for u, i, j in batch:
        m = float(z_user[u] @ z_item[i] - z_user[u] @ z_item[j])
        total += -np.log(1.0 / (1.0 + np.exp(-m)))
    return total / len(batch)


def infonce_oracle(a, b, tau, subset):
    """Direct softmax cross-entropy over the subset rows."""
    total = 0.0
    for u in subset:
        logits = a[u] @ b[subset].T / tau
        total += -np.log(np.exp(a[u] @ b[u] / tau) / np.exp(logits).sum())
    return float(total)
