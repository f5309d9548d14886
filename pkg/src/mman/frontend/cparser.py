"""Recursive-descent parser for a single C function in a small C subset.

Supported: declarations (scalars, pointers, arrays, initializer lists),
expression statements, ``if``/``else``, ``while``, ``for``, ``return``,
``break``/``continue``, blocks, and the usual unary/binary/ternary
operators, calls, subscripts, casts, ``sizeof`` and struct member access.
Preprocessor directives, ``switch``, ``goto``, ``do``/``while`` and
function pointers are rejected.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field


class ParseError(SyntaxError):
    def __init__(self, message, line, column):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


@dataclass
class AstNode:
    id: int
    kind: str
    label: str
    children: list = field(default_factory=list)
    type: str | None = None


@dataclass
class RawAst:
    nodes: list
    root: int

    def __len__(self):
        return len(self.nodes)

    def node(self, nid):
        return self.nodes[nid]

    def kinds(self):
        return {n.kind for n in self.nodes}

    def walk(self, nid=None):
        """Pre-order node iterator."""
        stack = [self.root if nid is None else nid]
        while stack:
            n = self.nodes[stack.pop()]
            yield n
            stack.extend(reversed(n.children))

    def leaves(self):
        return [n for n in self.walk() if not n.children]

    @property
    def function_name(self):
        return self.nodes[self.root].label

    def to_json(self):
        def enc(nid):
            n = self.nodes[nid]
            out = {"kind": n.kind, "label": n.label}
            if n.type is not None:
                out["type"] = n.type
            if n.children:
                out["children"] = [enc(c) for c in n.children]
            return out

        return enc(self.root)

    @classmethod
    def from_json(cls, obj):
        nodes = []

        def dec(o):
            nid = len(nodes)
            node = AstNode(nid, o["kind"], o["label"], [], o.get("type"))
            nodes.append(node)
            node.children = [dec(c) for c in o.get("children", [])]
            return nid

        root = dec(obj)
        return cls(nodes, root)


def isomorphic(a, b, na=None, nb=None):
    x = a.nodes[a.root if na is None else na]
    y = b.nodes[b.root if nb is None else nb]
    if (x.kind, x.label, x.type, len(x.children)) != (y.kind, y.label, y.type, len(y.children)):
        return False
    return all(isomorphic(a, b, cx, cy) for cx, cy in zip(x.children, y.children))


# ---------------------------------------------------------------------------
# lexer
# ---------------------------------------------------------------------------

KEYWORDS = {
    "if", "else", "while", "for", "return", "break", "continue", "sizeof",
    "struct", "union", "enum", "const", "volatile", "static", "extern", "inline",
    "register", "unsigned", "signed", "short", "long", "int", "char", "float",
    "double", "void", "switch", "case", "default", "goto", "do", "typedef",
}
TYPE_WORDS = {"unsigned", "signed", "short", "long", "int", "char", "float", "double", "void"}
QUALIFIERS = {"const", "volatile"}
STORAGE = {"static", "extern", "inline", "register"}
KNOWN_TYPEDEFS = {
    "size_t", "ssize_t", "bool", "FILE", "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "int8_t", "int16_t", "int32_t", "int64_t", "uintptr_t", "intptr_t", "ptrdiff_t",
}
REJECTED = {"switch", "case", "default", "goto", "do", "typedef", "union", "enum"}

_PUNCT = sorted(
    """<<= >>= ... -> ++ -- << >> <= >= == != && || += -= *= /= %= &= ^= |=
    + - * / % < > = ! ~ & | ^ ? : ; , . ( ) [ ] { }""".split(),
    key=len,
    reverse=True,
)
_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>/\*.*?\*/|//[^\n]*)
  | (?P<pp>\#)
  | (?P<number>(?:0[xX][0-9A-Fa-f]+|\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)[uUlLfF]*)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<char>'(?:\\.|[^\\'\n])+')
  | (?P<string>"(?:\\.|[^\\"\n])*")
  | (?P<punct>"""
    + "|".join(re.escape(p) for p in _PUNCT)
    + ")",
    re.VERBOSE | re.DOTALL,
)


@dataclass
class Tok:
    kind: str
    text: str
    line: int
    col: int


def tokenize_c(text):
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        chunk = m.group()
        if kind == "pp":
            raise ParseError("preprocessor directives are not supported", line, col)
        if kind not in ("ws", "comment"):
            if kind == "ident" and chunk in KEYWORDS:
                kind = "kw"
            toks.append(Tok(kind, chunk, line, col))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

_BINARY_LEVELS = [
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", ">", "<=", ">="),
    ("<<", ">>"),
    ("+", "-"),
    ("*", "/", "%"),
]
ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "^=", "|=", "<<=", ">>="}
UNARY_OPS = {"-", "+", "!", "~", "*", "&", "++", "--"}


class _Parser:
    def __init__(self, text):
        self.toks = tokenize_c(text)
        self.i = 0
        self.nodes = []

    # -- token helpers -----------------------------------------------------
    @property
    def tok(self):
        return self.toks[self.i]

    def peek(self, k=1):
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text):
        return self.tok.text == text and self.tok.kind in ("punct", "kw")

    def accept(self, text):
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.at(text):
            shown = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {shown!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self):
        if self.tok.kind != "ident":
            raise self.error(f"expected identifier, found {self.tok.text or 'end of input'!r}")
        tok = self.tok
        self.i += 1
        return tok.text

    def new(self, kind, label, children=(), type=None):
        node = AstNode(len(self.nodes), kind, label, list(children), type)
        self.nodes.append(node)
        return node.id

    # -- types -------------------------------------------------------------
    def starts_type(self, k=0):
        tok = self.peek(k)
        if tok.kind == "kw":
            if tok.text in REJECTED:
                raise self.error(f"unsupported construct {tok.text!r}", tok)
            return tok.text in TYPE_WORDS or tok.text in QUALIFIERS or tok.text in STORAGE or tok.text == "struct"
        return tok.kind == "ident" and tok.text in KNOWN_TYPEDEFS

    def starts_declaration(self):
        if self.starts_type():
            return True
        # `name name` can only be a declaration using an unknown typedef
        return self.tok.kind == "ident" and self.peek().kind == "ident"

    def base_type(self):
        words = []
        while True:
            tok = self.tok
            if tok.kind == "kw" and tok.text in REJECTED:
                raise self.error(f"unsupported construct {tok.text!r}")
            if tok.kind == "kw" and tok.text in STORAGE:
                self.i += 1
                continue
            if tok.kind == "kw" and (tok.text in TYPE_WORDS or tok.text in QUALIFIERS):
                words.append(tok.text)
                self.i += 1
            elif tok.kind == "kw" and tok.text == "struct":
                self.i += 1
                words.append("struct " + self.ident())
            elif tok.kind == "ident" and not any(w not in QUALIFIERS for w in words):
                words.append(tok.text)
                self.i += 1
            else:
                break
        if not any(w not in QUALIFIERS for w in words):
            raise self.error("expected a type")
        return " ".join(words)

    def pointers(self):
        stars = ""
        while self.at("*") or (self.tok.kind == "kw" and self.tok.text in QUALIFIERS):
            if self.at("*"):
                stars += "*"
            self.i += 1
        return stars

    def array_dims(self):
        dims = ""
        while self.accept("["):
            start = self.i
            depth = 0
            while not (self.at("]") and depth == 0):
                if self.tok.kind == "eof":
                    raise self.error("unterminated array dimension")
                if self.at("["):
                    depth += 1
                elif self.at("]"):
                    depth -= 1
                self.i += 1
            dims += "[" + " ".join(t.text for t in self.toks[start : self.i]) + "]"
            self.expect("]")
        return dims

    @staticmethod
    def full_type(base, stars, dims):
        t = base + (" " + stars if stars else "")
        return t + (" " + dims if dims else "")

    # -- top level ---------------------------------------------------------
    def function(self):
        ret = self.base_type()
        stars = self.pointers()
        if self.at("("):
            raise self.error("function pointers are not supported")
        name = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            if self.at("void") and self.peek().text == ")":
                self.i += 1
            else:
                while True:
                    if self.at("..."):
                        raise self.error("variadic functions are not supported")
                    base = self.base_type()
                    pstars = self.pointers()
                    if self.at("("):
                        raise self.error("function pointers are not supported")
                    pname = self.ident() if self.tok.kind == "ident" else ""
                    dims = self.array_dims()
                    params.append(self.new("ParmDecl", pname, type=self.full_type(base, pstars, dims)))
                    if not self.accept(","):
                        break
        self.expect(")")
        if not self.at("{"):
            raise self.error("expected a function body")
        body = self.compound()
        root = self.new("FunctionDecl", name, params + [body], type=self.full_type(ret, stars, ""))
        if self.tok.kind != "eof":
            raise self.error("trailing input after function definition")
        return RawAst(self.nodes, root)

    # -- statements --------------------------------------------------------
    def compound(self):
        self.expect("{")
        items = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unbalanced braces: missing '}'")
            items.append(self.statement())
        self.expect("}")
        return self.new("Compound", "Compound", items)

    def statement(self):
        tok = self.tok
        if tok.kind == "kw" and tok.text in REJECTED:
            raise self.error(f"unsupported construct {tok.text!r}")
        if self.at("{"):
            return self.compound()
        if self.at(";"):
            self.i += 1
            return self.new("NullStmt", "NullStmt")
        if self.accept("if"):
            self.expect("(")
            cond = self.expression()
            self.expect(")")
            then = self.statement()
            kids = [cond, then]
            if self.accept("else"):
                kids.append(self.statement())
            return self.new("If", "If", kids)
        if self.accept("while"):
            self.expect("(")
            cond = self.expression()
            self.expect(")")
            return self.new("While", "While", [cond, self.statement()])
        if self.accept("for"):
            self.expect("(")
            if self.at(";"):
                self.i += 1
                init = self.new("NullStmt", "NullStmt")
            elif self.starts_declaration():
                init = self.declaration()
            else:
                init = self.expression()
                self.expect(";")
            cond = self.new("NullStmt", "NullStmt") if self.at(";") else self.expression()
            self.expect(";")
            inc = self.new("NullStmt", "NullStmt") if self.at(")") else self.expression()
            self.expect(")")
            return self.new("For", "For", [init, cond, inc, self.statement()])
        if self.accept("return"):
            kids = [] if self.at(";") else [self.expression()]
            self.expect(";")
            return self.new("Return", "Return", kids)
        if self.accept("break"):
            self.expect(";")
            return self.new("Break", "Break")
        if self.accept("continue"):
            self.expect(";")
            return self.new("Continue", "Continue")
        if self.starts_declaration():
            return self.declaration()
        expr = self.expression()
        self.expect(";")
        return expr

    def declaration(self):
        base = self.base_type()
        decls = []
        while True:
            stars = self.pointers()
            if self.at("("):
                raise self.error("function pointers are not supported")
            name = self.ident()
            dims = self.array_dims()
            kids = []
            if self.accept("="):
                kids.append(self.initializer())
            decls.append(self.new("VarDecl", name, kids, type=self.full_type(base, stars, dims)))
            if not self.accept(","):
                break
        self.expect(";")
        return self.new("DeclStmt", "DeclStmt", decls)

    def initializer(self):
        if self.accept("{"):
            items = []
            while not self.at("}"):
                items.append(self.initializer())
                if not self.accept(","):
                    break
            self.expect("}")
            return self.new("InitList", "InitList", items)
        return self.assignment()

    # -- expressions -------------------------------------------------------
    def expression(self):
        node = self.assignment()
        while self.accept(","):
            node = self.new("BinaryOperator", "BinaryOperator:,", [node, self.assignment()])
        return node

    def assignment(self):
        lhs = self.conditional()
        if self.tok.kind == "punct" and self.tok.text in ASSIGN_OPS:
            op = self.tok.text
            self.i += 1
            return self.new("BinaryOperator", "BinaryOperator:" + op, [lhs, self.assignment()])
        return lhs

    def conditional(self):
        cond = self.binary(0)
        if self.accept("?"):
            a = self.expression()
            self.expect(":")
            b = self.conditional()
            return self.new("ConditionalOperator", "ConditionalOperator", [cond, a, b])
        return cond

    def binary(self, level):
        if level == len(_BINARY_LEVELS):
            return self.unary()
        node = self.binary(level + 1)
        while self.tok.kind == "punct" and self.tok.text in _BINARY_LEVELS[level]:
            op = self.tok.text
            self.i += 1
            node = self.new("BinaryOperator", "BinaryOperator:" + op, [node, self.binary(level + 1)])
        return node

    def is_cast(self):
        return self.at("(") and self.starts_type(1)

    def unary(self):
        tok = self.tok
        if tok.kind == "punct" and tok.text in UNARY_OPS:
            self.i += 1
            return self.new("UnaryOperator", "UnaryOperator:" + tok.text, [self.unary()])
        if self.accept("sizeof"):
            if self.is_cast():
                self.expect("(")
                t = self.full_type(self.base_type(), self.pointers(), "")
                self.expect(")")
                arg = self.new("TypeRef", t)
            else:
                arg = self.unary()
            return self.new("UnaryOperator", "UnaryOperator:sizeof", [arg])
        if self.is_cast():
            self.expect("(")
            t = self.full_type(self.base_type(), self.pointers(), "")
            self.expect(")")
            return self.new("Cast", "Cast", [self.unary()], type=t)
        return self.postfix()

    def postfix(self):
        node = self.primary()
        while True:
            if self.accept("("):
                args = []
                if not self.at(")"):
                    args.append(self.assignment())
                    while self.accept(","):
                        args.append(self.assignment())
                self.expect(")")
                node = self.new("Call", "Call", [node] + args)
            elif self.accept("["):
                idx = self.expression()
                self.expect("]")
                node = self.new("ArraySubscript", "ArraySubscript", [node, idx])
            elif self.at(".") or self.at("->"):
                op = self.tok.text
                self.i += 1
                field_ = self.new("FieldRef", self.ident())
                node = self.new("Member", "Member:" + op, [node, field_])
            elif self.at("++") or self.at("--"):
                op = self.tok.text
                self.i += 1
                node = self.new("UnaryOperator", "UnaryOperator:post" + op, [node])
            else:
                return node

    def primary(self):
        tok = self.tok
        if tok.kind == "ident":
            self.i += 1
            return self.new("DeclRef", tok.text)
        if tok.kind in ("number", "char", "string"):
            self.i += 1
            text = tok.text
            # adjacent string literals concatenate
            while tok.kind == "string" and self.tok.kind == "string":
                text = text[:-1] + self.tok.text[1:]
                self.i += 1
            return self.new("Literal", text)
        if self.accept("("):
            node = self.expression()
            self.expect(")")
            return node
        if tok.kind == "kw" and tok.text in REJECTED:
            raise self.error(f"unsupported construct {tok.text!r}")
        raise self.error(f"unexpected {tok.text or 'end of input'!r}")


def parse(source_text):
    """Parse one function definition into a :class:`RawAst`."""
    return _Parser(source_text).function()


# ---------------------------------------------------------------------------
# pretty printer
# ---------------------------------------------------------------------------


def _split_type(type_):
    """``"int * [10]"`` -> ``("int", "*", "[10]")``."""
    head, _, dims = type_.partition("[")
    dims = "[" + dims if dims else ""
    base = head.rstrip(" *")
    return base, head[len(base):].replace(" ", ""), dims.replace("] [", "][")


def _decl_text(type_, name):
    base, stars, dims = _split_type(type_)
    return f"{base} {stars}{name}{dims}".rstrip()


def expr_text(ast, nid):
    n = ast.nodes[nid]
    k = n.kind
    kids = n.children
    if k in ("DeclRef", "Literal", "FieldRef"):
        return n.label
    if k == "TypeRef":
        return n.label
    if k == "BinaryOperator":
        op = n.label.split(":", 1)[1]
        sep = ", " if op == "," else f" {op} "
        return f"({expr_text(ast, kids[0])}{sep}{expr_text(ast, kids[1])})"
    if k == "UnaryOperator":
        op = n.label.split(":", 1)[1]
        inner = expr_text(ast, kids[0])
        if op.startswith("post"):
            return f"({inner}{op[4:]})"
        if op == "sizeof":
            child = ast.nodes[kids[0]]
            return f"sizeof({inner})" if child.kind == "TypeRef" else f"(sizeof {inner})"
        return f"({op}{inner})"
    if k == "ConditionalOperator":
        a, b, c = (expr_text(ast, x) for x in kids)
        return f"({a} ? {b} : {c})"
    if k == "Cast":
        return f"(({n.type}){expr_text(ast, kids[0])})"
    if k == "Call":
        args = ", ".join(expr_text(ast, x) for x in kids[1:])
        return f"{expr_text(ast, kids[0])}({args})"
    if k == "ArraySubscript":
        return f"{expr_text(ast, kids[0])}[{expr_text(ast, kids[1])}]"
    if k == "Member":
        op = n.label.split(":", 1)[1]
        return f"{expr_text(ast, kids[0])}{op}{expr_text(ast, kids[1])}"
    if k == "InitList":
        return "{" + ", ".join(expr_text(ast, x) for x in kids) + "}"
    raise ValueError(f"not an expression node: {k}")


def decl_stmt_text(ast, nid):
    n = ast.nodes[nid]
    parts = []
    base = None
    for c in n.children:
        v = ast.nodes[c]
        vbase, stars, dims = _split_type(v.type)
        base = base or vbase
        text = f"{stars}{v.label}{dims}"
        if v.children:
            text += " = " + expr_text(ast, v.children[0])
        parts.append(text)
    return f"{base} " + ", ".join(parts) + ";"


def _body_lines(ast, nid, indent):
    if ast.nodes[nid].kind == "Compound":
        return _stmt_lines(ast, nid, indent)
    return _stmt_lines(ast, nid, indent + 1)


def _stmt_lines(ast, nid, indent):
    pad = "    " * indent
    n = ast.nodes[nid]
    k = n.kind
    kids = n.children
    if k == "Compound":
        lines = [pad + "{"]
        for c in kids:
            lines += _stmt_lines(ast, c, indent + 1)
        return lines + [pad + "}"]
    if k == "DeclStmt":
        return [pad + decl_stmt_text(ast, nid)]
    if k == "NullStmt":
        return [pad + ";"]
    if k == "If":
        lines = [pad + f"if ({expr_text(ast, kids[0])})"] + _body_lines(ast, kids[1], indent)
        if len(kids) == 3:
            lines += [pad + "else"] + _body_lines(ast, kids[2], indent)
        return lines
    if k == "While":
        return [pad + f"while ({expr_text(ast, kids[0])})"] + _body_lines(ast, kids[1], indent)
    if k == "For":
        init, cond, inc, body = kids
        init_n = ast.nodes[init]
        if init_n.kind == "NullStmt":
            init_s = ";"
        elif init_n.kind == "DeclStmt":
            init_s = decl_stmt_text(ast, init)
        else:
            init_s = expr_text(ast, init) + ";"
        cond_s = "" if ast.nodes[cond].kind == "NullStmt" else " " + expr_text(ast, cond)
        inc_s = "" if ast.nodes[inc].kind == "NullStmt" else " " + expr_text(ast, inc)
        return [pad + f"for ({init_s}{cond_s};{inc_s})"] + _body_lines(ast, body, indent)
    if k == "Return":
        return [pad + ("return " + expr_text(ast, kids[0]) + ";" if kids else "return;")]
    if k == "Break":
        return [pad + "break;"]
    if k == "Continue":
        return [pad + "continue;"]
    return [pad + expr_text(ast, nid) + ";"]


def pretty_print(ast):
    """Render a RawAst back to C source that parses to an isomorphic tree."""
    fn = ast.nodes[ast.root]
    params = [ast.nodes[c] for c in fn.children[:-1]]
    plist = ", ".join(_decl_text(p.type, p.label) for p in params) or "void"
    lines = [f"{_decl_text(fn.type, fn.label)}({plist})"]
    lines += _stmt_lines(ast, fn.children[-1], 0)
    return "\n".join(lines) + "\n"
