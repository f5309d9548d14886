"""Binary AST and simplified control-flow graph built from a parsed function."""

from __future__ import annotations

import enum
from collections import defaultdict, deque
from dataclasses import dataclass

from .frontend.cparser import decl_stmt_text, expr_text

MAX_CFG_VERTICES = 512
MERGE_SEP = "+"


class UnsupportedConstruct(ValueError):
    pass


class TooLarge(ValueError):
    pass


# ---------------------------------------------------------------------------
# binary AST
# ---------------------------------------------------------------------------


@dataclass
class BinaryNode:
    id: int
    parts: tuple
    left: int | None = None
    right: int | None = None

    @property
    def label(self):
        return MERGE_SEP.join(self.parts)

    @property
    def children(self):
        return [c for c in (self.left, self.right) if c is not None]


@dataclass
class BinaryAst:
    nodes: list
    root: int

    def __len__(self):
        return len(self.nodes)

    def leaves_inorder(self):
        out = []
        stack = [self.root]
        while stack:
            n = self.nodes[stack.pop()]
            if n.left is None and n.right is None:
                out.append(n)
            stack.extend(reversed(n.children))
        return out

    def fringe(self):
        """Original leaf labels, left to right (merged prefixes dropped)."""
        return [n.parts[-1] for n in self.leaves_inorder()]

    def arities(self):
        return [len(n.children) for n in self.nodes]

    def depth(self):
        best = 0
        stack = [(self.root, 1)]
        while stack:
            nid, d = stack.pop()
            best = max(best, d)
            stack.extend((c, d + 1) for c in self.nodes[nid].children)
        return best

    def to_json(self):
        def enc(nid):
            n = self.nodes[nid]
            out = {"parts": list(n.parts)}
            if n.children:
                out["children"] = [enc(n.left) if n.left is not None else None,
                                   enc(n.right) if n.right is not None else None]
            return out

        return enc(self.root)

    @classmethod
    def from_json(cls, obj):
        nodes = []

        def dec(o):
            if o is None:
                return None
            node = BinaryNode(len(nodes), tuple(o["parts"]))
            nodes.append(node)
            kids = o.get("children") or [None, None]
            node.left = dec(kids[0])
            node.right = dec(kids[1])
            return node.id

        root = dec(obj)
        return cls(nodes, root)


def binarize(ast):
    """Split nodes with more than two children, then merge single-child chains."""
    # step (a): top-down split into a nested (parts, children) structure
    def split(nid):
        node = ast.nodes[nid]
        return _split_children((node.label,), node.children)

    def _split_children(parts, kids):
        kids = list(kids)
        if len(kids) > 2:
            # fresh right child reuses the parent's label
            return [parts, [split(kids[0]), _split_children(parts, kids[1:])]]
        return [parts, [split(k) for k in kids]]

    tree = split(ast.root)

    # step (b): merge nodes that have exactly one child into that child
    nodes = []

    def emit(item):
        parts, kids = item
        while len(kids) == 1:
            child_parts, child_kids = kids[0]
            parts = parts + child_parts
            kids = child_kids
        node = BinaryNode(len(nodes), tuple(parts))
        nodes.append(node)
        if kids:
            node.left = emit(kids[0])
            node.right = emit(kids[1])
        return node.id

    root = emit(tree)
    return BinaryAst(nodes, root)


# ---------------------------------------------------------------------------
# control-flow graph
# ---------------------------------------------------------------------------


class EdgeType(enum.IntEnum):
    SEQ = 0
    BRANCH_TRUE = 1
    BRANCH_FALSE = 2
    LOOP_BACK = 3
    SEQ_REV = 4
    BRANCH_TRUE_REV = 5
    BRANCH_FALSE_REV = 6
    LOOP_BACK_REV = 7

    @property
    def label(self):
        return self.name.lower().replace("_rev", "-rev").replace("_", "-")

    @classmethod
    def from_label(cls, label):
        return cls[label.upper().replace("-REV", "_REV").replace("-", "_")]

    def reverse(self):
        return EdgeType((self.value + 4) % 8)

    @property
    def is_reverse(self):
        return self.value >= 4


FORWARD_EDGE_TYPES = tuple(EdgeType(i) for i in range(4))
NUM_EDGE_TYPES = len(EdgeType)

VERTEX_KINDS = ("entry", "exit", "decl", "assign", "call", "return", "branch-cond", "loop-cond")


@dataclass
class CfgVertex:
    id: int
    kind: str
    text: str


@dataclass
class Cfg:
    vertices: list
    edges: list  # (src, dst, EdgeType), forward types only
    entry: int
    exit: int

    def __len__(self):
        return len(self.vertices)

    def vertex(self, vid):
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def successors(self, vid):
        return [d for s, d, _ in self.edges if s == vid]

    def out_degree(self, vid):
        return sum(1 for s, _, _ in self.edges if s == vid)

    def reachable(self):
        adj = defaultdict(list)
        for s, d, _ in self.edges:
            adj[s].append(d)
        seen = {self.entry}
        queue = deque([self.entry])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        return seen

    def has_cycle(self):
        adj = defaultdict(list)
        for s, d, _ in self.edges:
            adj[s].append(d)
        color = {}
        for start in (v.id for v in self.vertices):
            if start in color:
                continue
            stack = [(start, iter(adj[start]))]
            color[start] = 1
            while stack:
                v, it = stack[-1]
                nxt = next(it, None)
                if nxt is None:
                    color[v] = 2
                    stack.pop()
                elif color.get(nxt) == 1:
                    return True
                elif nxt not in color:
                    color[nxt] = 1
                    stack.append((nxt, iter(adj[nxt])))
        return False

    def edge_types(self):
        return {t for _, _, t in self.edges}

    def with_reverse_edges(self):
        """Forward edges followed by their mirrored reverse-typed counterparts."""
        return list(self.edges) + [(d, s, t.reverse()) for s, d, t in self.edges]

    def indexed(self):
        """Vertices renumbered 0..n-1 in list order, with edges remapped."""
        pos = {v.id: i for i, v in enumerate(self.vertices)}
        verts = [CfgVertex(i, v.kind, v.text) for i, v in enumerate(self.vertices)]
        edges = [(pos[s], pos[d], t) for s, d, t in self.edges]
        return Cfg(verts, edges, pos[self.entry], pos[self.exit])

    def to_json(self):
        c = self.indexed()
        return {
            "vertices": [[v.id, v.kind, v.text] for v in c.vertices],
            "edges": [[s, d, t.label] for s, d, t in c.edges],
            "entry": c.entry,
            "exit": c.exit,
        }

    @classmethod
    def from_json(cls, obj):
        verts = [CfgVertex(int(i), k, t) for i, k, t in obj["vertices"]]
        edges = [(int(s), int(d), EdgeType.from_label(t)) for s, d, t in obj["edges"]]
        return cls(verts, edges, int(obj["entry"]), int(obj["exit"]))


def _bare(text):
    """Drop one redundant pair of outer parentheses."""
    if not (text.startswith("(") and text.endswith(")")):
        return text
    depth = 0
    for i, ch in enumerate(text):
        depth += ch == "("
        depth -= ch == ")"
        if depth == 0 and i < len(text) - 1:
            return text
    return text[1:-1]


def _etext(ast, nid):
    return _bare(expr_text(ast, nid))


class _CfgBuilder:
    def __init__(self, ast):
        self.ast = ast
        self.vertices = []
        self.edges = []
        self.loops = []  # (continue target, break list)

    def vertex(self, kind, text):
        v = CfgVertex(len(self.vertices), kind, text)
        self.vertices.append(v)
        return v.id

    def link(self, preds, target, loop_head=None):
        for src, etype in preds:
            if target == loop_head:
                etype = EdgeType.LOOP_BACK
            edge = (src, target, etype)
            if edge not in self.edges:
                self.edges.append(edge)

    def simple(self, preds, kind, text):
        v = self.vertex(kind, text)
        self.link(preds, v)
        return [(v, EdgeType.SEQ)]

    def stmt(self, nid, preds):
        """Wire statement ``nid`` after ``preds``; return the dangling exits."""
        if not preds:
            return []  # unreachable code is dropped
        ast = self.ast
        n = ast.nodes[nid]
        k = n.kind
        kids = n.children
        if k == "Compound":
            for c in kids:
                preds = self.stmt(c, preds)
            return preds
        if k == "NullStmt":
            return preds
        if k == "DeclStmt":
            return self.simple(preds, "decl", decl_stmt_text(ast, nid))
        if k == "Return":
            text = "return " + _etext(ast, kids[0]) + ";" if kids else "return;"
            v = self.vertex("return", text)
            self.link(preds, v)
            self.link([(v, EdgeType.SEQ)], self.exit_id)
            return []
        if k == "If":
            cond = self.vertex("branch-cond", f"if ({_etext(ast, kids[0])})")
            self.link(preds, cond)
            out = self.stmt(kids[1], [(cond, EdgeType.BRANCH_TRUE)])
            if len(kids) == 3:
                out += self.stmt(kids[2], [(cond, EdgeType.BRANCH_FALSE)])
            else:
                out.append((cond, EdgeType.BRANCH_FALSE))
            return out
        if k == "While":
            cond = self.vertex("loop-cond", f"while ({_etext(ast, kids[0])})")
            self.link(preds, cond)
            breaks = []
            self.loops.append((cond, breaks))
            body_out = self.stmt(kids[1], [(cond, EdgeType.BRANCH_TRUE)])
            self.loops.pop()
            self.link(body_out, cond, loop_head=cond)
            return [(cond, EdgeType.BRANCH_FALSE)] + breaks
        if k == "For":
            init, cond_n, inc, body = kids
            if ast.nodes[init].kind != "NullStmt":
                preds = self.stmt_or_expr(init, preds)
            cond_text = "1" if ast.nodes[cond_n].kind == "NullStmt" else _etext(ast, cond_n)
            cond = self.vertex("loop-cond", f"for ({cond_text})")
            self.link(preds, cond)
            breaks = []
            has_inc = ast.nodes[inc].kind != "NullStmt"
            inc_v = self.vertex("assign", _etext(ast, inc) + ";") if has_inc else None
            self.loops.append((inc_v if has_inc else cond, breaks))
            body_out = self.stmt(body, [(cond, EdgeType.BRANCH_TRUE)])
            self.loops.pop()
            if has_inc:
                self.link(body_out, inc_v)
                self.link([(inc_v, EdgeType.SEQ)], cond, loop_head=cond)
            else:
                self.link(body_out, cond, loop_head=cond)
            return [(cond, EdgeType.BRANCH_FALSE)] + breaks
        if k == "Break":
            if not self.loops:
                raise UnsupportedConstruct("break outside of a loop")
            self.loops[-1][1].extend(preds)
            return []
        if k == "Continue":
            if not self.loops:
                raise UnsupportedConstruct("continue outside of a loop")
            target = self.loops[-1][0]
            head = target if self.vertices[target].kind == "loop-cond" else None
            self.link(preds, target, loop_head=head)
            return []
        return self.stmt_or_expr(nid, preds)

    def stmt_or_expr(self, nid, preds):
        n = self.ast.nodes[nid]
        if n.kind == "DeclStmt":
            return self.simple(preds, "decl", decl_stmt_text(self.ast, nid))
        if n.kind in _EXPR_KINDS:
            kind = "call" if n.kind == "Call" else "assign"
            return self.simple(preds, kind, _etext(self.ast, nid) + ";")
        raise UnsupportedConstruct(f"unsupported AST kind {n.kind!r}")

    def build(self):
        root = self.ast.nodes[self.ast.root]
        if root.kind != "FunctionDecl":
            raise UnsupportedConstruct(f"expected FunctionDecl, got {root.kind!r}")
        entry = self.vertex("entry", "")
        self.exit_id = self.vertex("exit", "")
        out = self.stmt(root.children[-1], [(entry, EdgeType.SEQ)])
        self.link(out, self.exit_id)
        # keep exit last for readability
        exit_v = self.vertices.pop(1)
        self.vertices.append(exit_v)
        return Cfg(self.vertices, self.edges, entry, self.exit_id)


_EXPR_KINDS = {
    "BinaryOperator", "UnaryOperator", "Call", "DeclRef", "Literal", "Member",
    "ArraySubscript", "ConditionalOperator", "Cast",
}


def build_cfg(ast):
    """Statement-level control-flow graph of the function in ``ast``."""
    return _CfgBuilder(ast).build()


def simplify_cfg(cfg, max_vertices=MAX_CFG_VERTICES):
    """Drop empty-statement vertices and merge duplicate statements.

    A duplicate vertex is folded into the first vertex carrying the same text;
    an empty vertex is removed and its predecessors linked to its successors
    with the incoming edge's type.
    """
    special = {cfg.entry, cfg.exit}
    first_by_text = {}
    alias = {}
    for v in cfg.vertices:
        if v.id in special or not v.text.strip():
            continue
        if v.text in first_by_text:
            alias[v.id] = first_by_text[v.text]
        else:
            first_by_text[v.text] = v.id

    edges = []
    for s, d, t in cfg.edges:
        edges.append((alias.get(s, s), alias.get(d, d), t))

    empty = [v.id for v in cfg.vertices if v.id not in special and v.id not in alias and not v.text.strip()]
    for e in empty:
        incoming = [(s, t) for s, d, t in edges if d == e and s != e]
        outgoing = [d for s, d, _ in edges if s == e and d != e]
        edges = [x for x in edges if x[0] != e and x[1] != e]
        for s, t in incoming:
            for d in outgoing:
                edges.append((s, d, t))

    removed = set(alias) | set(empty)
    seen = set()
    clean = []
    original = set(cfg.edges)
    for s, d, t in edges:
        if s == d and (s, d, t) not in original:
            continue  # self-loop produced by merging
        if (s, d, t) in seen:
            continue
        seen.add((s, d, t))
        clean.append((s, d, t))
    verts = [CfgVertex(v.id, v.kind, v.text) for v in cfg.vertices if v.id not in removed]
    if len(verts) > max_vertices:
        raise TooLarge(f"CFG has {len(verts)} vertices after simplification (max {max_vertices})")
    return Cfg(verts, clean, cfg.entry, cfg.exit)
