"""Contrastive view generation for the three augmentation styles."""

from dataclasses import dataclass

import numpy as np

from .graph import drop_edges, propagate_layers, propagate_stacked
from .losses import l2_normalize_rows

CL_KINDS = ("sgl", "simgcl", "xsimgcl")


@dataclass(eq=False)
class ViewPair:
    """Two stacked view matrices plus what backpropagation needs.

    raw1/raw2 are the propagation outputs; view1/view2 the row-normalized
    copies used by the loss. graph1/graph2 hold the per-view propagation
    graphs (they alias the base graph unless edges were dropped).
    """

    kind: str
    raw1: np.ndarray
    raw2: np.ndarray
    view1: np.ndarray
    view2: np.ndarray
    graph1: object
    graph2: object
    n_layers: int
    cross_layer: int = 0


def noisy_tape(graph, emb, n_layers, scale, rng):
    """Layer states with uniform-sphere noise of magnitude `scale` after each hop."""
    layers = [emb]
    h = emb
    for _ in range(n_layers):
        h = graph.adj @ h
        if scale > 0:
            noise = rng.standard_normal(h.shape)
            norms = np.linalg.norm(noise, axis=1, keepdims=True)
            norms[norms == 0] = 1.0
            h = h + scale * noise / norms
        layers.append(h)
    return layers


def _noisy_propagation(graph, emb, n_layers, scale, rng):
    layers = noisy_tape(graph, emb, n_layers, scale, rng)
    return sum(layers) / len(layers)


def make_views(state, graph, rng):
    """Build the two contrastive views for the state's cl kind.

    rng may be a seed or a numpy Generator. Views are returned both raw and
    row-normalized.
    """
    cfg = state.config
    if cfg.cl not in CL_KINDS:
        raise ValueError(f"cl kind {cfg.cl!r} has no views")
    rng = np.random.default_rng(rng)
    emb = np.vstack([state.user_emb, state.item_emb])
    n_layers = state.effective_layers
    if cfg.cl == "sgl":
        if not 0 <= cfg.edge_drop < 1:
            raise ValueError("edge_drop must lie in [0, 1)")
        g1 = drop_edges(graph, 1.0 - cfg.edge_drop, rng) if cfg.edge_drop > 0 else graph
        g2 = drop_edges(graph, 1.0 - cfg.edge_drop, rng) if cfg.edge_drop > 0 else graph
        raw1 = propagate_stacked(g1, emb, n_layers)
        raw2 = propagate_stacked(g2, emb, n_layers)
        pair = ViewPair("sgl", raw1, raw2, None, None, g1, g2, n_layers)
    elif cfg.cl == "simgcl":
        if cfg.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        raw1 = _noisy_propagation(graph, emb, n_layers, cfg.noise_scale, rng)
        raw2 = _noisy_propagation(graph, emb, n_layers, cfg.noise_scale, rng)
        pair = ViewPair("simgcl", raw1, raw2, None, None, graph, graph, n_layers)
    else:  # xsimgcl: one noisy propagation tapped at the average and one layer
        if not 0 <= cfg.cross_layer <= n_layers:
            raise ValueError("cross_layer must lie in [0, n_layers]")
        if cfg.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        layers = noisy_tape(graph, emb, n_layers, cfg.noise_scale, rng)
        raw1 = sum(layers) / len(layers)
        raw2 = layers[cfg.cross_layer].copy()
        pair = ViewPair("xsimgcl", raw1, raw2, None, None, graph, graph,
                        n_layers, cross_layer=cfg.cross_layer)
    pair.view1 = l2_normalize_rows(pair.raw1)
    pair.view2 = l2_normalize_rows(pair.raw2)
    return pair


def backprop_views(pair, grad1, grad2):
    """Pull view gradients back to the base embeddings.

    The layer-mean propagation operator is symmetric, so its adjoint is the
    operator itself; noise terms are constants and drop out.
    """
    if pair.kind in ("sgl", "simgcl"):
        out = propagate_stacked(pair.graph1, grad1, pair.n_layers)
        out += propagate_stacked(pair.graph2, grad2, pair.n_layers)
        return out
    # xsimgcl: view2 is a single layer state, adjoint is A^l
    out = propagate_stacked(pair.graph1, grad1, pair.n_layers)
    h = grad2
    for _ in range(pair.cross_layer):
        h = pair.graph1.adj @ h
    return out + h
