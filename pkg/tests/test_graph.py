import numpy as np
import pytest

from recpoison import InteractionDataset, build_graph, drop_edges
from recpoison.graph import propagate_layers, propagate_stacked

INV_SQRT2 = 0.7071067811865476


def _ds(pairs, n_users, n_items):
    return InteractionDataset(
        user_ids=[f"u{k}" for k in range(n_users)],
        item_ids=[f"i{k}" for k in range(n_items)],
        train=pairs, valid=[], test=[],
    )


class TestBuild:
    def test_single_edge_entry_is_one(self):
        g = build_graph(_ds([(0, 0)], 1, 1))
        assert g.adj[0, 1] == pytest.approx(1.0)
        assert g.adj[1, 0] == pytest.approx(1.0)

    def test_degree_two_user(self):
        # u0 - {i0, i1}: entries 1/sqrt(2*1)
        g = build_graph(_ds([(0, 0), (0, 1)], 1, 2))
        assert g.adj[0, 1] == pytest.approx(INV_SQRT2)
        assert g.adj[0, 2] == pytest.approx(INV_SQRT2)

    def test_symmetry(self, tiny_ds):
        g = build_graph(tiny_ds)
        diff = (g.adj - g.adj.T).toarray()
        assert np.abs(diff).max() == 0.0

    def test_isolated_nodes_self_loop(self):
        g = build_graph(_ds([(0, 0)], 2, 2))
        # user 1 and item 1 are isolated
        assert g.adj[1, 1] == pytest.approx(1.0)
        assert g.adj[3, 3] == pytest.approx(1.0)

    def test_zero_weight_edges_not_stored(self):
        ds = _ds([(0, 0)], 1, 2)
        g = build_graph(ds, n_malicious=1, malicious_edges=([0, 0], [0, 1], [0.5, 0.0]))
        # malicious user row 1 connects only to item 0
        assert g.adj[1, 2] != 0.0
        assert g.adj[1, 3] == 0.0

    def test_weight_range_enforced(self):
        ds = _ds([(0, 0)], 1, 2)
        with pytest.raises(ValueError, match="0, 1"):
            build_graph(ds, n_malicious=1, malicious_edges=([0], [1], [1.5]))
        with pytest.raises(ValueError, match="0, 1"):
            build_graph(ds, n_malicious=1, malicious_edges=([0], [1], [-0.2]))

    def test_malicious_row_range_enforced(self):
        ds = _ds([(0, 0)], 1, 2)
        with pytest.raises(ValueError, match="row out of range"):
            build_graph(ds, n_malicious=1, malicious_edges=([2], [1], [0.5]))

    def test_weighted_degrees(self):
        # u0 - i0 at w=1, malicious row - i0 at w=0.5: deg(i0)=1.5
        ds = _ds([(0, 0)], 1, 1)
        g = build_graph(ds, n_malicious=1, malicious_edges=([0], [0], [0.5]))
        assert g.adj[0, 2] == pytest.approx(1.0 / np.sqrt(1.0 * 1.5))
        assert g.adj[1, 2] == pytest.approx(0.5 / np.sqrt(0.5 * 1.5))
        assert g.inv_sqrt_deg[2] == pytest.approx(1.0 / np.sqrt(1.5))


class TestPropagate:
    def test_zero_layers_identity(self, tiny_ds, rng):
        g = build_graph(tiny_ds)
        emb = rng.standard_normal((g.n_nodes, 4))
        out = propagate_stacked(g, emb, 0)
        assert np.array_equal(out, emb)

    def test_single_pair_one_layer_average(self):
        g = build_graph(_ds([(0, 0)], 1, 1))
        emb = np.array([[2.0, 0.0], [0.0, 4.0]])
        out = propagate_stacked(g, emb, 1)
        # Z_u = (e_u + e_i) / 2 for the fully-normalized single edge
        assert np.allclose(out[0], [1.0, 2.0])
        assert np.allclose(out[1], [1.0, 2.0])

    def test_zero_embeddings_propagate_to_zero(self, tiny_ds):
        g = build_graph(tiny_ds)
        out = propagate_stacked(g, np.zeros((g.n_nodes, 3)), 2)
        assert np.all(out == 0.0)

    def test_linearity(self, tiny_ds, rng):
        g = build_graph(tiny_ds)
        emb = rng.standard_normal((g.n_nodes, 5))
        assert np.allclose(propagate_stacked(g, 3.0 * emb, 2),
                           3.0 * propagate_stacked(g, emb, 2))

    def test_layer_list_length(self, tiny_ds, rng):
        g = build_graph(tiny_ds)
        emb = rng.standard_normal((g.n_nodes, 2))
        layers = propagate_layers(g, emb, 3)
        assert len(layers) == 4
        assert np.array_equal(layers[0], emb)

    def test_dimension_mismatch_rejected(self, tiny_ds):
        g = build_graph(tiny_ds)
        with pytest.raises(ValueError, match="nodes"):
            propagate_stacked(g, np.zeros((3, 4)), 1)


class TestDropEdges:
    def test_keep_all(self, tiny_ds, rng):
        g = build_graph(tiny_ds)
        g2 = drop_edges(g, 1.0, rng)
        assert (g.adj != g2.adj).nnz == 0

    def test_drop_renormalizes_degrees(self, tiny_ds):
        g = build_graph(tiny_ds)
        rng = np.random.default_rng(0)
        g2 = drop_edges(g, 0.5, rng)
        kept = len(g2.edge_users)
        assert kept < len(g.edge_users)
        # every kept edge uses degrees over the kept edge set
        deg = np.zeros(g.n_nodes)
        np.add.at(deg, g2.edge_users, g2.edge_weights)
        np.add.at(deg, g2.n_user_rows + g2.edge_items, g2.edge_weights)
        for u, i, w in zip(g2.edge_users, g2.edge_items, g2.edge_weights):
            want = w / np.sqrt(deg[u] * deg[g2.n_user_rows + i])
            assert g2.adj[u, g2.n_user_rows + i] == pytest.approx(want)
