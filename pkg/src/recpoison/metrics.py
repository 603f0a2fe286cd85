"""Target promotion and accuracy metrics over top-K recommendation lists.

All metrics take the per-user lists as produced by recommend_topk; list r
belongs to users[r] (all genuine users when users is omitted). A (user, target)
pair counts only when the user has not already interacted with the target.
"""

import numpy as np


def _as_users(lists, users):
    if users is None:
        return np.arange(len(lists))
    users = np.asarray(users, dtype=np.int64)
    if len(users) != len(lists):
        raise ValueError("users must align with lists")
    return users


def hit_ratio_at_k(lists, targets, train_mask, users=None):
    """Fraction of eligible (user, target) pairs whose target made the list."""
    users = _as_users(lists, users)
    targets = np.asarray(targets, dtype=np.int64)
    hits = 0
    eligible = 0
    for row, u in enumerate(users):
        ok = ~train_mask[u, targets]
        eligible += int(ok.sum())
        if ok.any():
            hits += int(np.isin(targets[ok], lists[row]).sum())
    if eligible == 0:
        raise ValueError("no eligible user-target pairs")
    return hits / eligible


def ndcg_at_k(lists, targets, train_mask, k, users=None):
    """Mean per-user DCG/IDCG of eligible targets, 1-based log2 discounting."""
    if k <= 0:
        raise ValueError("k must be positive")
    users = _as_users(lists, users)
    targets = np.asarray(targets, dtype=np.int64)
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    scores = []
    for row, u in enumerate(users):
        elig = targets[~train_mask[u, targets]]
        if len(elig) == 0:
            continue
        ranks = np.nonzero(np.isin(lists[row], elig))[0]
        dcg = discounts[ranks].sum()
        idcg = discounts[: min(len(elig), k)].sum()
        scores.append(dcg / idcg)
    if not scores:
        raise ValueError("no eligible user-target pairs")
    return float(np.mean(scores))


def recall_at_k(lists, ds, users=None):
    """Mean over test users of the fraction of their test items recommended."""
    users = _as_users(lists, users)
    test_items = {}
    for u, i in ds.test:
        test_items.setdefault(int(u), []).append(int(i))
    scores = []
    for row, u in enumerate(users):
        held = test_items.get(int(u))
        if not held:
            continue
        scores.append(np.isin(held, lists[row]).mean())
    if not scores:
        raise ValueError("no users with test interactions")
    return float(np.mean(scores))
