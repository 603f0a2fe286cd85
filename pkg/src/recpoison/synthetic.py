"""Bundled synthetic long-tail dataset for desk-scale experiments."""

import numpy as np

from .data import InteractionDataset


def make_synthetic(n_users=300, n_items=500, seed=2024, pop_exponent=1.0,
                   min_degree=6, max_degree=40, mean_degree=14.0):
    """Implicit-feedback dataset with power-law item popularity.

    Item attractiveness follows rank^(-pop_exponent) with ranks shuffled so
    popularity is independent of item index. User activity is lognormal,
    clipped to [min_degree, max_degree]. Returned unsplit.
    """
    rng = np.random.default_rng(seed)
    ranks = rng.permutation(n_items) + 1
    weights = ranks.astype(float) ** (-pop_exponent)
    weights /= weights.sum()
    sigma = 0.6
    mu = np.log(mean_degree) - 0.5 * sigma**2
    # a user cannot interact with more items than exist
    cap = min(max_degree, n_items)
    degrees = np.clip(rng.lognormal(mu, sigma, size=n_users), min(min_degree, cap), cap)
    degrees = degrees.astype(np.int64)
    pairs = []
    for u in range(n_users):
        items = rng.choice(n_items, size=degrees[u], replace=False, p=weights)
        pairs.extend((u, int(i)) for i in items)
    return InteractionDataset(
        user_ids=[f"u{k}" for k in range(n_users)],
        item_ids=[f"i{k}" for k in range(n_items)],
        train=pairs,
        valid=[],
        test=[],
        tag=f"synthetic-{n_users}x{n_items}-s{seed}",
    )
