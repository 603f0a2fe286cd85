"""Pairwise ranking and contrastive losses with analytic gradients."""

import numpy as np
from scipy.special import expit, logsumexp


def _check_batch(users, pos, neg):
    users = np.asarray(users, dtype=np.int64)
    pos = np.asarray(pos, dtype=np.int64)
    neg = np.asarray(neg, dtype=np.int64)
    if users.size == 0:
        raise ValueError("empty batch")
    if not (users.shape == pos.shape == neg.shape):
        raise ValueError("batch index arrays must share a shape")
    return users, pos, neg


def bpr_loss(user_emb, item_emb, users, pos, neg):
    """Mean over the batch of -log sigmoid(score(u,i) - score(u,j))."""
    users, pos, neg = _check_batch(users, pos, neg)
    zu = user_emb[users]
    margin = np.einsum("nd,nd->n", zu, item_emb[pos] - item_emb[neg])
    # log(1 + e^{-m}) evaluated stably
    return float(np.logaddexp(0.0, -margin).mean())


def bpr_gradient(user_emb, item_emb, users, pos, neg):
    """Batch-mean gradient of bpr_loss w.r.t. both embedding tables."""
    users, pos, neg = _check_batch(users, pos, neg)
    zu = user_emb[users]
    diff = item_emb[pos] - item_emb[neg]
    margin = np.einsum("nd,nd->n", zu, diff)
    coeff = -expit(-margin) / len(users)
    grad_user = np.zeros_like(user_emb)
    grad_item = np.zeros_like(item_emb)
    np.add.at(grad_user, users, coeff[:, None] * diff)
    np.add.at(grad_item, pos, coeff[:, None] * zu)
    np.add.at(grad_item, neg, -coeff[:, None] * zu)
    return grad_user, grad_item


def l2_normalize_rows(z):
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot L2-normalize a zero row")
    return z / norms[:, None]


def _subset_rows(z1, z2, subset):
    if subset is None:
        a, b = z1, z2
    else:
        subset = np.asarray(subset, dtype=np.int64)
        if subset.size == 0:
            raise ValueError("node subset is empty")
        a, b = z1[subset], z2[subset]
    if a.shape != b.shape:
        raise ValueError("view shapes differ")
    if a.shape[0] == 0:
        raise ValueError("node subset is empty")
    return a, b, subset


def _check_normalized(z, what):
    norms = np.linalg.norm(z, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError(f"{what} rows must be L2-normalized")


def infonce_loss(z1, z2, temperature, subset=None):
    """Contrastive loss over L2-normalized views; negatives are every node in
    the subset, the positive included in the denominator."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    a, b, _ = _subset_rows(z1, z2, subset)
    _check_normalized(a, "first view")
    _check_normalized(b, "second view")
    sim = (a @ b.T) / temperature
    num = np.exp(np.diag(sim))
    den = np.exp(sim).sum(axis=1)
    return float(-np.log(num / den).sum())


def infonce_loss_decomposed(z1, z2, temperature, subset=None):
    """Alignment-minus-logsumexp form; algebraically equal to infonce_loss."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    a, b, _ = _subset_rows(z1, z2, subset)
    _check_normalized(a, "first view")
    _check_normalized(b, "second view")
    sim = (a @ b.T) / temperature
    align = np.trace(sim)
    return float(-(align - logsumexp(sim, axis=1).sum()))


def infonce_gradient(z1, z2, temperature, subset=None):
    """Gradient of infonce_loss w.r.t. the raw (pre-normalization) views.

    Inputs are the un-normalized view matrices; the row L2-normalization
    applied before the loss is part of the differentiated map. Rows outside
    the subset get zero gradient.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    a_raw, b_raw, subset = _subset_rows(z1, z2, subset)
    na = np.linalg.norm(a_raw, axis=1)
    nb = np.linalg.norm(b_raw, axis=1)
    if np.any(na == 0) or np.any(nb == 0):
        raise ValueError("cannot L2-normalize a zero row")
    a = a_raw / na[:, None]
    b = b_raw / nb[:, None]
    sim = (a @ b.T) / temperature
    sim -= sim.max(axis=1, keepdims=True)
    p = np.exp(sim)
    p /= p.sum(axis=1, keepdims=True)
    coeff = p - np.eye(len(p))
    ga = (coeff @ b) / temperature
    gb = (coeff.T @ a) / temperature
    # chain rule of x -> x/|x|: remove the radial component, scale by 1/|x|
    ga = (ga - np.einsum("nd,nd->n", ga, a)[:, None] * a) / na[:, None]
    gb = (gb - np.einsum("nd,nd->n", gb, b)[:, None] * b) / nb[:, None]
    grad1 = np.zeros_like(z1)
    grad2 = np.zeros_like(z2)
    if subset is None:
        grad1[:], grad2[:] = ga, gb
    else:
        grad1[subset] = ga
        grad2[subset] = gb
    return grad1, grad2
