"""Sequence LSTM, binary Tree-LSTM and gated graph network encoders.

All encoders work on mini-batches.  Parameters live in a
:class:`~mman.optim.ParameterSet` under a prefix (``tok.``, ``ast.``,
``cfg.``, ``des.``); gate blocks are laid out column-wise:

* LSTM:       ``[i | f | o | u]``
* Tree-LSTM:  ``[i | f_left | f_right | o | u]`` with ``U`` acting on ``[h_left; h_right]``
* GRU:        ``W`` (on messages) ``[z | r | h]``, ``U_zr`` and ``U_h`` (on state)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .modalities import NUM_EDGE_TYPES, VERTEX_KINDS
from .vocab import PAD

KIND_INDEX = {k: i for i, k in enumerate(VERTEX_KINDS)}


class EmptySequence(ValueError):
    pass


class EmptyTree(ValueError):
    pass


class EmptyGraph(ValueError):
    pass


@dataclass
class EncoderOutput:
    """Per-element states ``[B, n, H]``, summary ``[B, H]`` and validity mask ``[B, n]``."""

    states: T.Tensor
    summary: T.Tensor
    mask: np.ndarray


# ---------------------------------------------------------------------------
# parameter initialisation
# ---------------------------------------------------------------------------


def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


def init_lstm(params, prefix, vocab_size, embed_dim, hidden, rng):
    s = 1.0 / np.sqrt(hidden)
    params.add(prefix + "embed", _uniform(rng, (vocab_size, embed_dim), 0.1))
    params.add(prefix + "lstm.W", _uniform(rng, (embed_dim, 4 * hidden), s))
    params.add(prefix + "lstm.U", _uniform(rng, (hidden, 4 * hidden), s))
    params.add(prefix + "lstm.b", np.zeros(4 * hidden))


def init_tree_lstm(params, prefix, vocab_size, embed_dim, hidden, rng):
    s = 1.0 / np.sqrt(hidden)
    params.add(prefix + "embed", _uniform(rng, (vocab_size, embed_dim), 0.1))
    params.add(prefix + "cell.W", _uniform(rng, (embed_dim, 5 * hidden), s))
    params.add(prefix + "cell.U", _uniform(rng, (2 * hidden, 5 * hidden), s))
    params.add(prefix + "cell.b", np.zeros(5 * hidden))


def init_ggnn(params, prefix, hidden, rng):
    s = 1.0 / np.sqrt(hidden)
    params.add(prefix + "embed", _uniform(rng, (len(VERTEX_KINDS), hidden), 0.1))
    params.add(prefix + "edge.W", _uniform(rng, (hidden, NUM_EDGE_TYPES * hidden), s))
    params.add(prefix + "gru.W", _uniform(rng, (hidden, 3 * hidden), s))
    params.add(prefix + "gru.U_zr", _uniform(rng, (hidden, 2 * hidden), s))
    params.add(prefix + "gru.U_h", _uniform(rng, (hidden, hidden), s))


# ---------------------------------------------------------------------------
# sequence LSTM
# ---------------------------------------------------------------------------


def pad_batch(sequences, pad=PAD):
    """Right-pad integer sequences into ``(ids [B, T], lengths [B])``."""
    lengths = np.array([len(s) for s in sequences], dtype=np.int64)
    if lengths.size == 0 or lengths.min() == 0:
        raise EmptySequence("cannot encode an empty sequence")
    ids = np.full((len(sequences), int(lengths.max())), pad, dtype=np.int64)
    for b, seq in enumerate(sequences):
        ids[b, : len(seq)] = seq
    return ids, lengths


def lstm_batch(params, prefix, sequences, dropout=0.0, training=False, rng=None):
    """Run the LSTM over right-padded ``sequences`` (lists of vocabulary ids).

    Padding follows the last real token, so a sequence's final state is read at
    its own length and trailing pads never influence it.
    """
    sequences = [list(s) for s in sequences]
    sequences = [s[: len(s) - _trailing_pads(s)] for s in sequences]
    ids, lengths = pad_batch(sequences)
    B, steps = ids.shape
    W, U, b = params[prefix + "lstm.W"], params[prefix + "lstm.U"], params[prefix + "lstm.b"]
    H = U.shape[0]
    dtype = U.dtype
    emb = T.embedding_lookup(params[prefix + "embed"], ids)
    emb = T.dropout(emb, dropout, training, rng)
    xw = T.reshape(T.add(T.matmul(emb, W), b), (B * steps, 4 * H))
    h = T.Tensor(np.zeros((B, H), dtype=dtype))
    c = T.Tensor(np.zeros((B, H), dtype=dtype))
    rows = np.arange(B) * steps
    states = []
    for t in range(steps):
        z = T.add(T.embedding_lookup(xw, rows + t), T.matmul(h, U))
        h, c = _lstm_gates(z, c, H)
        states.append(T.reshape(h, (B, 1, H)))
    stacked = T.concat(states, axis=1) if steps > 1 else states[0]
    final = T.embedding_lookup(T.reshape(stacked, (B * steps, H)), rows + lengths - 1)
    mask = np.arange(steps)[None, :] < lengths[:, None]
    return EncoderOutput(stacked, final, mask)


def _trailing_pads(seq):
    n = 0
    for tok in reversed(seq):
        if tok != PAD:
            break
        n += 1
    return n


def _lstm_gates(z, c, H):
    gates = T.sigmoid(T.slice_last(z, 0, 3 * H))
    i = T.slice_last(gates, 0, H)
    f = T.slice_last(gates, H, 2 * H)
    o = T.slice_last(gates, 2 * H, 3 * H)
    u = T.tanh(T.slice_last(z, 3 * H, 4 * H))
    c = T.add(T.mul(f, c), T.mul(i, u))
    h = T.mul(o, T.tanh(c))
    return h, c


def encode_tokens(seq, vocab, params, prefix="tok.", **kw):
    ids = vocab.encode(list(seq))
    if not ids:
        raise EmptySequence("token sequence is empty")
    return lstm_batch(params, prefix, [ids], **kw)


def encode_description(seq, vocab, params, prefix="des.", **kw):
    """Final hidden state (shape ``[H]``) of the description LSTM."""
    ids = vocab.encode(list(seq))
    if not ids:
        raise EmptySequence("description is empty")
    out = lstm_batch(params, prefix, [ids], **kw)
    return T.reshape(out.summary, (out.summary.shape[-1],))


# ---------------------------------------------------------------------------
# binary Tree-LSTM
# ---------------------------------------------------------------------------


def _tree_schedule(trees):
    """Flatten trees and group nodes by height (leaves first).

    Returns ``(labels, left, right, levels, roots, node_rows)`` where ``left``/
    ``right`` hold global child positions (-1 when missing) and ``node_rows``
    lists each tree's global node positions.
    """
    labels, left, right, height, roots, node_rows = [], [], [], [], [], []
    for labels_i, left_i, right_i, root_i in trees:
        base = len(labels)
        n = len(labels_i)
        if n == 0:
            raise EmptyTree("cannot encode an empty tree")
        labels.extend(labels_i)
        left.extend(-1 if c is None else base + c for c in left_i)
        right.extend(-1 if c is None else base + c for c in right_i)
        roots.append(base + root_i)
        node_rows.append(list(range(base, base + n)))
    left = np.array(left, dtype=np.int64)
    right = np.array(right, dtype=np.int64)
    height = np.full(len(labels), -1, dtype=np.int64)

    def h_of(n):
        stack = [n]
        while stack:
            v = stack[-1]
            kids = [k for k in (left[v], right[v]) if k >= 0]
            pending = [k for k in kids if height[k] < 0]
            if pending:
                stack.extend(pending)
                continue
            height[v] = 1 + max((height[k] for k in kids), default=-1)
            stack.pop()

    for r in roots:
        h_of(r)
    levels = [np.flatnonzero(height == lv) for lv in range(int(height.max()) + 1)]
    return np.array(labels, dtype=np.int64), left, right, levels, roots, node_rows


def tree_lstm_batch(params, prefix, trees, dropout=0.0, training=False, rng=None):
    """Bottom-up binary Tree-LSTM over a batch.

    ``trees`` is a list of ``(label_ids, left, right, root)`` with child
    positions local to each tree (``None`` for a missing child).  Missing
    children contribute zero ``h`` and ``c``.
    """
    labels, left, right, levels, roots, node_rows = _tree_schedule(trees)
    W, U, b = params[prefix + "cell.W"], params[prefix + "cell.U"], params[prefix + "cell.b"]
    H = U.shape[0] // 2
    dtype = U.dtype
    emb = T.embedding_lookup(params[prefix + "embed"], labels)
    emb = T.dropout(emb, dropout, training, rng)
    xw = T.add(T.matmul(emb, W), b)

    # state tables: row 0 is the zero state for missing children
    slot = np.zeros(len(labels), dtype=np.int64)
    h_table = T.Tensor(np.zeros((1, H), dtype=dtype))
    c_table = T.Tensor(np.zeros((1, H), dtype=dtype))
    filled = 1
    for nodes in levels:
        li = np.where(left[nodes] >= 0, slot[np.maximum(left[nodes], 0)], 0)
        ri = np.where(right[nodes] >= 0, slot[np.maximum(right[nodes], 0)], 0)
        h_children = T.concat([T.embedding_lookup(h_table, li), T.embedding_lookup(h_table, ri)], axis=-1)
        z = T.add(T.embedding_lookup(xw, nodes), T.matmul(h_children, U))
        gates = T.sigmoid(T.slice_last(z, 0, 4 * H))
        i = T.slice_last(gates, 0, H)
        f_l = T.slice_last(gates, H, 2 * H)
        f_r = T.slice_last(gates, 2 * H, 3 * H)
        o = T.slice_last(gates, 3 * H, 4 * H)
        u = T.tanh(T.slice_last(z, 4 * H, 5 * H))
        c = T.add(
            T.mul(i, u),
            T.add(T.mul(f_l, T.embedding_lookup(c_table, li)), T.mul(f_r, T.embedding_lookup(c_table, ri))),
        )
        h = T.mul(o, T.tanh(c))
        slot[nodes] = np.arange(filled, filled + len(nodes))
        filled += len(nodes)
        h_table = T.concat([h_table, h], axis=0)
        c_table = T.concat([c_table, c], axis=0)

    B = len(trees)
    width = max(len(r) for r in node_rows)
    idx = np.zeros((B, width), dtype=np.int64)
    mask = np.zeros((B, width), dtype=bool)
    for bi, rows in enumerate(node_rows):
        idx[bi, : len(rows)] = slot[rows]
        mask[bi, : len(rows)] = True
    states = T.embedding_lookup(h_table, idx)
    summary = T.embedding_lookup(h_table, slot[roots])
    return EncoderOutput(states, summary, mask)


def ast_arrays(ast, vocab):
    """``(label_ids, left, right, root)`` for a BinaryAst."""
    return (
        [vocab.index(n.label) for n in ast.nodes],
        [n.left for n in ast.nodes],
        [n.right for n in ast.nodes],
        ast.root,
    )


def encode_ast(ast, vocab, params, prefix="ast.", **kw):
    if len(ast.nodes) == 0:
        raise EmptyTree("cannot encode an empty tree")
    return tree_lstm_batch(params, prefix, [ast_arrays(ast, vocab)], **kw)


# ---------------------------------------------------------------------------
# gated graph network
# ---------------------------------------------------------------------------


def cfg_arrays(cfg):
    """``(kind_ids, edges)`` with vertices indexed by list position and edges
    expanded with their reverse-typed mirrors."""
    c = cfg.indexed()
    kinds = [KIND_INDEX[v.kind] for v in c.vertices]
    edges = [(s, d, int(t)) for s, d, t in c.with_reverse_edges()]
    return kinds, edges


def ggnn_batch(params, prefix, graphs, rounds, dropout=0.0, training=False, rng=None, initial=None):
    """Message passing over a batch of graphs given as ``(kind_ids, edges)``.

    Each round, vertex ``v`` receives ``m_v = sum W_type h_src`` over its
    incoming edges (reverse mirrors included) and updates with
    ``z = s(W_z m + U_z h)``, ``r = s(W_r m + U_r h)``,
    ``h~ = tanh(W_h m + U_h (r*h))``, ``h' = (1 - z) h + z h~``.
    ``initial`` optionally overrides the embedded initial states ``[V, H]``.
    """
    offsets, kinds, src, dst, etype = [], [], [], [], []
    for kinds_i, edges_i in graphs:
        if not kinds_i:
            raise EmptyGraph("cannot encode an empty graph")
        base = len(kinds)
        offsets.append(base)
        kinds.extend(kinds_i)
        for s, d, t in edges_i:
            src.append(base + s)
            dst.append(base + d)
            etype.append(t)
    V = len(kinds)
    E_W = params[prefix + "edge.W"]
    H = E_W.shape[0]
    n_types = E_W.shape[1] // H
    dtype = E_W.dtype
    if initial is None:
        h = T.embedding_lookup(params[prefix + "embed"], np.array(kinds, dtype=np.int64))
        h = T.dropout(h, dropout, training, rng)
    else:
        h = T.as_tensor(initial)
    src = np.array(src, dtype=np.int64)
    gather = src * n_types + np.array(etype, dtype=np.int64)
    incidence = np.zeros((V, len(src)), dtype=dtype)
    incidence[np.array(dst, dtype=np.int64), np.arange(len(src))] = 1.0
    incidence = T.Tensor(incidence)
    Wg, Uzr, Uh = params[prefix + "gru.W"], params[prefix + "gru.U_zr"], params[prefix + "gru.U_h"]
    for _ in range(rounds):
        if len(src):
            per_type = T.reshape(T.matmul(h, E_W), (V * n_types, H))
            m = T.matmul(incidence, T.embedding_lookup(per_type, gather))
        else:
            m = T.Tensor(np.zeros((V, H), dtype=dtype))
        mw = T.matmul(m, Wg)
        zr = T.sigmoid(T.add(T.slice_last(mw, 0, 2 * H), T.matmul(h, Uzr)))
        z = T.slice_last(zr, 0, H)
        r = T.slice_last(zr, H, 2 * H)
        cand = T.tanh(T.add(T.slice_last(mw, 2 * H, 3 * H), T.matmul(T.mul(r, h), Uh)))
        h = T.add(h, T.mul(z, T.add(cand, T.neg(h))))

    B = len(graphs)
    sizes = [len(g[0]) for g in graphs]
    width = max(sizes)
    seg = np.zeros((B, V), dtype=dtype)
    idx = np.zeros((B, width), dtype=np.int64)
    mask = np.zeros((B, width), dtype=bool)
    for bi, (off, n) in enumerate(zip(offsets, sizes)):
        seg[bi, off : off + n] = 1.0
        idx[bi, :n] = np.arange(off, off + n) + 1
        mask[bi, :n] = True
    summary = T.matmul(T.Tensor(seg), h)
    table = T.concat([T.Tensor(np.zeros((1, H), dtype=dtype)), h], axis=0)
    states = T.embedding_lookup(table, idx)
    return EncoderOutput(states, summary, mask)


def encode_cfg(cfg, params, rounds=5, prefix="cfg.", **kw):
    if len(cfg.vertices) == 0:
        raise EmptyGraph("cannot encode an empty graph")
    return ggnn_batch(params, prefix, [cfg_arrays(cfg)], rounds, **kw)
