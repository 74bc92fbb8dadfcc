"""Triplet message-passing processor for CLRS-style algorithmic reasoning."""

from typing import Optional

import haiku as hk
import jax
import jax.numpy as jnp


class TripletMPNN(hk.Module):
    """Processor with node, edge and graph streams and triplet messages."""

    def __init__(self, out_size: int, nb_triplet_fts: int = 8, use_ln: bool = True,
                 name: str = "triplet_mpnn"):
        super().__init__(name=name)
        self.out_size = out_size
        self.nb_triplet_fts = nb_triplet_fts
        self.use_ln = use_ln

    def _maybe_lazy_init(self):
        # <SPARK:OPERATOR>
        t = self.nb_triplet_fts
        self.t_1 = hk.Linear(t)
        self.t_2 = hk.Linear(t)
        self.t_3 = hk.Linear(t)
        self.t_e_1 = hk.Linear(t)
        self.t_e_2 = hk.Linear(t)
        self.t_e_3 = hk.Linear(t)
        self.t_g = hk.Linear(2 * t)
        self.o3 = hk.Linear(self.out_size)
        self.m_1 = hk.Linear(self.out_size)
        self.m_2 = hk.Linear(self.out_size)
        self.m_e = hk.Linear(self.out_size)
        self.m_g = hk.Linear(self.out_size)
        self.o1 = hk.Linear(self.out_size)
        self.o2 = hk.Linear(self.out_size)
        self.ln = hk.LayerNorm(axis=-1, create_scale=True, create_offset=True)
        # </SPARK:OPERATOR>

    def _compute_tri_msgs(self, z, edge_fts, graph_fts):
        # <SPARK:ACTION>
        tri_1 = self.t_1(z)
        tri_2 = self.t_2(z)
        tri_3 = self.t_3(z)
        tri_e_1 = self.t_e_1(edge_fts)
        tri_e_2 = self.t_e_2(edge_fts)
        tri_e_3 = self.t_e_3(edge_fts)
        tri_g = self.t_g(graph_fts)
        gate = jax.nn.sigmoid(jnp.mean(tri_g, axis=-1, keepdims=True))
        tri_msgs = (
            jnp.expand_dims(tri_1, axis=(2, 3))
            + jnp.expand_dims(tri_2, axis=(1, 3))
            + jnp.expand_dims(tri_3, axis=(1, 2))
            + jnp.expand_dims(tri_e_1, axis=3)
            + jnp.expand_dims(tri_e_2, axis=2)
            + jnp.expand_dims(tri_e_3, axis=1)
            + jnp.expand_dims(tri_g, axis=(1, 2, 3))
        )
        tri_msgs = self.o3(jnp.max(tri_msgs, axis=1)) * gate[:, None, None, :]
        # </SPARK:ACTION>
        return tri_msgs

    def __call__(self, node_fts, edge_fts, graph_fts, adj_mat, hidden,
                 edge_mask: Optional[jnp.ndarray] = None):
        self._maybe_lazy_init()
        z = jnp.concatenate([node_fts, hidden], axis=-1)
        msg_1 = self.m_1(z)
        msg_2 = self.m_2(z)
        msg_e = self.m_e(edge_fts)
        msg_g = self.m_g(graph_fts)
        tri_msgs = self._compute_tri_msgs(z, edge_fts, graph_fts)
        msgs = (
            jnp.expand_dims(msg_1, axis=1)
            + jnp.expand_dims(msg_2, axis=2)
            + msg_e
            + jnp.expand_dims(msg_g, axis=(1, 2))
        )
        if edge_mask is not None:
            msgs = msgs * edge_mask[..., None]
        msgs = jnp.max(msgs + jnp.where(adj_mat[..., None] > 0, 0.0, -1e9), axis=1)
        h_1 = self.o1(z)
        h_2 = self.o2(msgs)
        ret = jax.nn.relu(h_1 + h_2)
        if self.use_ln:
            ret = self.ln(ret)
        return ret, tri_msgs
