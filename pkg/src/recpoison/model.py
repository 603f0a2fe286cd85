"""Model state, joint BPR + contrastive training, and top-K recommendation."""

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import NumericError
from .graph import drop_edges, graph_from_profile, propagate, propagate_layers, propagate_stacked
from .losses import bpr_gradient, bpr_loss, infonce_gradient, infonce_loss, l2_normalize_rows
from .views import ViewPair, backprop_views, make_views

ENCODERS = ("mf", "lightgcn")
CL_CHOICES = ("none", "sgl", "simgcl", "xsimgcl")


@dataclass
class ModelConfig:
    encoder: str = "lightgcn"
    cl: str = "none"
    dim: int = 64
    layers: int = 2
    temperature: float = 0.2
    cl_weight: float = 0.1
    edge_drop: float = 0.1
    noise_scale: float = 0.1
    cross_layer: int = 1
    lr: float = 0.001
    batch_size: int = 1024
    epochs: int = 50
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.encoder not in ENCODERS:
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.cl not in CL_CHOICES:
            raise ValueError(f"unknown cl kind {self.cl!r}")
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.layers < 0:
            raise ValueError("layers must be >= 0")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.cl_weight < 0:
            raise ValueError("cl_weight must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    @property
    def tag(self):
        base = self.encoder
        if self.cl != "none" and self.cl_weight > 0:
            base = f"{base}+{self.cl}"
        return base


@dataclass(eq=False)
class ModelState:
    config: ModelConfig
    user_emb: np.ndarray
    item_emb: np.ndarray
    n_genuine_users: int
    final_user_emb: np.ndarray = None
    final_item_emb: np.ndarray = None

    def __post_init__(self):
        if not (np.isfinite(self.user_emb).all() and np.isfinite(self.item_emb).all()):
            raise ValueError("embeddings must be finite")

    @property
    def effective_layers(self):
        return 0 if self.config.encoder == "mf" else self.config.layers

    @property
    def n_malicious(self):
        return self.user_emb.shape[0] - self.n_genuine_users


class Adam:
    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(eq=False)
class TrainResult:
    state: ModelState
    history: list
    graph: object
    # resume payload
    adam_m: np.ndarray = None
    adam_v: np.ndarray = None
    adam_t: int = 0
    rng_state: dict = None
    epoch: int = 0


def _interaction_mask(ds, malicious, n_users_total):
    mask = np.zeros((n_users_total, ds.n_items), dtype=bool)
    mask[: ds.n_users] = ds.train_mask
    if malicious is not None:
        for row, items in enumerate(malicious.items):
            mask[ds.n_users + row, items] = True
    return mask


def _sample_negatives(rng, mask, users, n_items):
    neg = rng.integers(0, n_items, size=len(users))
    bad = mask[users, neg]
    while bad.any():
        neg[bad] = rng.integers(0, n_items, size=int(bad.sum()))
        bad = mask[users, neg]
    return neg


def train(ds, config, malicious=None, checkpoint=None, init_emb=None):
    """Minimize BPR + cl_weight * InfoNCE with Adam; deterministic per seed.

    malicious: optional discretized MaliciousProfile appended as extra users.
    checkpoint: resume payload from a previous TrainResult (exact stream).
    init_emb: (user_emb, item_emb) warm start with fresh optimizer and rng.
    """
    n_mal = malicious.n_users if malicious is not None else 0
    n_users_total = ds.n_users + n_mal
    graph = graph_from_profile(ds, malicious)
    pairs = [ds.train]
    if malicious is not None:
        extra = [(ds.n_users + row, int(i)) for row, items in enumerate(malicious.items) for i in items]
        pairs.append(np.asarray(extra, dtype=np.int64).reshape(-1, 2))
    train_pairs = np.vstack(pairs)
    mask = _interaction_mask(ds, malicious, n_users_total)

    rng = np.random.default_rng(config.seed)
    if checkpoint is not None:
        stacked = np.vstack([checkpoint["user_emb"], checkpoint["item_emb"]])
        adam = Adam(stacked.shape, config.lr)
        adam.m = checkpoint["adam_m"].copy()
        adam.v = checkpoint["adam_v"].copy()
        adam.t = int(checkpoint["adam_t"])
        rng.bit_generator.state = checkpoint["rng_state"]
        start_epoch = int(checkpoint["epoch"])
        history = list(checkpoint.get("history", []))
    else:
        if init_emb is not None:
            stacked = np.vstack([init_emb[0], init_emb[1]])
        else:
            stacked = config.init_scale * rng.standard_normal((n_users_total + ds.n_items, config.dim))
        adam = Adam(stacked.shape, config.lr)
        start_epoch = 0
        history = []
    if stacked.shape != (n_users_total + ds.n_items, config.dim):
        raise ValueError("embedding shape does not match dataset plus malicious users")

    state = ModelState(
        config=config,
        user_emb=stacked[:n_users_total],
        item_emb=stacked[n_users_total:],
        n_genuine_users=ds.n_users,
    )
    cl_active = config.cl != "none" and config.cl_weight > 0
    n_pairs = len(train_pairs)

    for epoch in range(start_epoch, config.epochs):
        neg = _sample_negatives(rng, mask, train_pairs[:, 0], ds.n_items)
        order = rng.permutation(n_pairs)
        sgl_graphs = None
        if cl_active and config.cl == "sgl":
            if not 0 <= config.edge_drop < 1:
                raise ValueError("edge_drop must lie in [0, 1)")
            keep = 1.0 - config.edge_drop
            sgl_graphs = (drop_edges(graph, keep, rng), drop_edges(graph, keep, rng))
        epoch_bpr, epoch_cl, n_batches = 0.0, 0.0, 0
        for lo in range(0, n_pairs, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            u, i, j = train_pairs[idx, 0], train_pairs[idx, 1], neg[idx]
            layers = propagate_layers(graph, stacked, state.effective_layers)
            z = sum(layers) / len(layers)
            zu, zi = z[:n_users_total], z[n_users_total:]
            loss = bpr_loss(zu, zi, u, i, j)
            gu, gi = bpr_gradient(zu, zi, u, i, j)
            gz = np.vstack([gu, gi])
            grad = _propagate_grad(graph, gz, state.effective_layers)
            cl_loss = 0.0
            if cl_active:
                pair = _batch_views(state, graph, config, layers, z, sgl_graphs, rng)
                subset = np.concatenate([np.unique(u), n_users_total + np.unique(i)])
                cl_loss = infonce_loss(pair.view1, pair.view2, config.temperature, subset)
                g1, g2 = infonce_gradient(pair.raw1, pair.raw2, config.temperature, subset)
                grad += config.cl_weight * backprop_views(pair, g1, g2)
            total = loss + config.cl_weight * cl_loss
            if not np.isfinite(total):
                raise NumericError(f"training diverged at epoch {epoch}: loss={total}")
            adam.step(stacked, grad)
            epoch_bpr += loss
            epoch_cl += cl_loss
            n_batches += 1
        history.append({
            "epoch": epoch,
            "bpr": epoch_bpr / n_batches,
            "cl": epoch_cl / n_batches,
        })

    state.final_user_emb, state.final_item_emb = propagate(state, graph)
    return TrainResult(
        state=state,
        history=history,
        graph=graph,
        adam_m=adam.m,
        adam_v=adam.v,
        adam_t=adam.t,
        rng_state=rng.bit_generator.state,
        epoch=config.epochs,
    )


def _propagate_grad(graph, gz, n_layers):
    # layer-mean propagation is symmetric, so the adjoint reuses it
    if n_layers == 0:
        return gz
    layers = propagate_layers(graph, gz, n_layers)
    return sum(layers) / len(layers)


def _batch_views(state, graph, config, layers, z, sgl_graphs, rng):
    if config.cl == "sgl":
        g1, g2 = sgl_graphs
        emb = np.vstack([state.user_emb, state.item_emb])
        raw1 = propagate_stacked(g1, emb, state.effective_layers)
        raw2 = propagate_stacked(g2, emb, state.effective_layers)
        pair = ViewPair("sgl", raw1, raw2, None, None, g1, g2, state.effective_layers)
        pair.view1 = l2_normalize_rows(raw1)
        pair.view2 = l2_normalize_rows(raw2)
        return pair
    if config.cl == "xsimgcl":
        if not 0 <= config.cross_layer <= state.effective_layers:
            raise ValueError("cross_layer must lie in [0, n_layers]")
        if config.noise_scale > 0:
            return make_views(state, graph, rng)
        # noise off: the batch's propagation tape already holds both views
        raw1 = z
        raw2 = layers[config.cross_layer]
        pair = ViewPair("xsimgcl", raw1, raw2, None, None, graph, graph,
                        state.effective_layers, cross_layer=config.cross_layer)
        pair.view1 = l2_normalize_rows(raw1)
        pair.view2 = l2_normalize_rows(raw2)
        return pair
    return make_views(state, graph, rng)


def final_embeddings(state, graph):
    if state.final_user_emb is not None:
        return state.final_user_emb, state.final_item_emb
    return propagate(state, graph)


def recommend_topk(state, graph, ds, k, users=None):
    """Per-user top-k item indices by dot-product score, train items excluded.

    Ties break toward the lower item index. Users default to all genuine users.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    if users is None:
        users = np.arange(ds.n_users)
    users = np.asarray(users, dtype=np.int64)
    zu, zi = final_embeddings(state, graph)
    scores = zu[users] @ zi.T
    mask = ds.train_mask[users]
    scores[mask] = -np.inf
    order = np.argsort(-scores, axis=1, kind="stable")
    lists = []
    for r, u in enumerate(users):
        row = order[r, : min(k, ds.n_items)]
        row = row[np.isfinite(scores[r, row])]
        lists.append(row.astype(np.int64))
    return lists


def save_checkpoint(result, ds_tag, path):
    """Binary checkpoint with embeddings plus the exact resume payload."""
    state = result.state
    meta = {
        "config": asdict(state.config),
        "dataset": ds_tag,
        "n_genuine_users": state.n_genuine_users,
        "epoch": result.epoch,
        "adam_t": result.adam_t,
        "rng_state": result.rng_state,
        "history": result.history,
    }
    np.savez(
        path,
        user_emb=state.user_emb,
        item_emb=state.item_emb,
        final_user_emb=state.final_user_emb,
        final_item_emb=state.final_item_emb,
        adam_m=result.adam_m,
        adam_v=result.adam_v,
        meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
    )


def load_checkpoint(path):
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        payload = {
            "user_emb": data["user_emb"],
            "item_emb": data["item_emb"],
            "final_user_emb": data["final_user_emb"],
            "final_item_emb": data["final_item_emb"],
            "adam_m": data["adam_m"],
            "adam_v": data["adam_v"],
        }
    payload.update(
        config=ModelConfig(**meta["config"]),
        dataset=meta["dataset"],
        n_genuine_users=meta["n_genuine_users"],
        epoch=meta["epoch"],
        adam_t=meta["adam_t"],
        rng_state=meta["rng_state"],
        history=meta["history"],
    )
    return payload
