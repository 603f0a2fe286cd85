"""Symmetric-normalized bipartite propagation graph and layer-averaged propagation.

Nodes are stacked [user rows | item rows]. Entry (u, i) of the adjacency is
w_ui / sqrt(deg(u) * deg(i)) with weighted degrees. Isolated nodes get a unit
self-loop so they keep their base embeddings through propagation.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp


@dataclass(eq=False)
class PropagationGraph:
    adj: sp.csr_matrix
    n_user_rows: int
    n_items: int
    # raw bipartite edge list (user row, item col, weight), kept for edge dropout
    edge_users: np.ndarray
    edge_items: np.ndarray
    edge_weights: np.ndarray
    # 1/sqrt(weighted degree) per node, 1 for isolated nodes
    inv_sqrt_deg: np.ndarray = None

    @property
    def n_nodes(self):
        return self.n_user_rows + self.n_items


def _assemble(n_user_rows, n_items, users, items, weights):
    n = n_user_rows + n_items
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    deg = np.zeros(n)
    np.add.at(deg, users, weights)
    np.add.at(deg, n_user_rows + items, weights)
    isolated = np.where(deg == 0)[0]
    inv_sqrt = np.ones(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    vals = weights * inv_sqrt[users] * inv_sqrt[n_user_rows + items]
    rows = np.concatenate([users, n_user_rows + items, isolated])
    cols = np.concatenate([n_user_rows + items, users, isolated])
    data = np.concatenate([vals, vals, np.ones(len(isolated))])
    adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    return PropagationGraph(
        adj=adj,
        n_user_rows=n_user_rows,
        n_items=n_items,
        edge_users=users,
        edge_items=items,
        edge_weights=weights,
        inv_sqrt_deg=inv_sqrt,
    )


def build_graph(ds, n_malicious=0, malicious_edges=None):
    """Graph over genuine train edges plus optional weighted malicious edges.

    malicious_edges: (user_rows, item_cols, weights) with user rows local to
    the malicious block, i.e. global row = ds.n_users + user_row. Weights must
    lie in [0, 1]; zero-weight edges are never stored.
    """
    users = ds.train[:, 0].astype(np.int64)
    items = ds.train[:, 1].astype(np.int64)
    weights = np.ones(len(users))
    if malicious_edges is not None:
        mu, mi, mw = malicious_edges
        mu = np.asarray(mu, dtype=np.int64)
        mi = np.asarray(mi, dtype=np.int64)
        mw = np.asarray(mw, dtype=np.float64)
        if mw.size and (mw.min() < 0 or mw.max() > 1):
            raise ValueError("malicious edge weights must lie in [0, 1]")
        if mu.size and (mu.min() < 0 or mu.max() >= n_malicious):
            raise ValueError("malicious user row out of range")
        keep = mw > 0
        users = np.concatenate([users, ds.n_users + mu[keep]])
        items = np.concatenate([items, mi[keep]])
        weights = np.concatenate([weights, mw[keep]])
    return _assemble(ds.n_users + n_malicious, ds.n_items, users, items, weights)


def graph_from_profile(ds, profile):
    """Graph for training on genuine data plus a discretized malicious profile."""
    if profile is None:
        return build_graph(ds)
    mu, mi = [], []
    for row, items in enumerate(profile.items):
        mu.extend([row] * len(items))
        mi.extend(items)
    return build_graph(ds, n_malicious=profile.n_users,
                       malicious_edges=(mu, mi, np.ones(len(mu))))


def drop_edges(graph, keep_prob, rng):
    """Independent edge dropout; degrees recomputed over the kept edges."""
    keep = rng.random(len(graph.edge_users)) < keep_prob
    return _assemble(
        graph.n_user_rows,
        graph.n_items,
        graph.edge_users[keep],
        graph.edge_items[keep],
        graph.edge_weights[keep],
    )


def propagate_layers(graph, emb, n_layers):
    """All layer states [H_0 .. H_L] with H_l = A @ H_{l-1}."""
    if emb.shape[0] != graph.n_nodes:
        raise ValueError(
            f"embedding rows ({emb.shape[0]}) do not match graph nodes ({graph.n_nodes})")
    layers = [emb]
    h = emb
    for _ in range(n_layers):
        h = graph.adj @ h
        layers.append(h)
    return layers


def propagate_stacked(graph, emb, n_layers):
    """Layer-averaged propagation: mean of H_0 .. H_L."""
    layers = propagate_layers(graph, emb, n_layers)
    return sum(layers) / len(layers)


def propagate(state, graph):
    """Final embeddings (user block, item block) for a model state.

    MF is the 0-layer special case and returns the base embeddings.
    """
    n_layers = state.effective_layers
    if n_layers == 0:
        return state.user_emb.copy(), state.item_emb.copy()
    stacked = np.vstack([state.user_emb, state.item_emb])
    out = propagate_stacked(graph, stacked, n_layers)
    k = state.user_emb.shape[0]
    return out[:k], out[k:]
