"""Lexer and recursive-descent parser for a small C subset.

The subset covers single function definitions with primitive-typed
parameters, declarations, assignment, if/else, while, for, return, calls,
the usual arithmetic/relational/logical binary operators and unary ``-``/``!``.
Anything else (pointers, structs, switch, goto, casts, preprocessor lines)
is rejected with :class:`ParseError`.

AST node ids are assigned in pre-order once parsing finishes, so ``id`` doubles
as the traversal rank used by the graph and featurization stages.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator

KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool""".split()
)

TYPE_KEYWORDS = frozenset(
    "void char short int long float double signed unsigned const _Bool".split()
)

# Longest first so a plain alternation gives maximal munch.
OPERATORS = [
    "<<=", ">>=", "...",
    "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=",
    "+", "-", "*", "/", "%", "<", ">", "=", "!", "~", "&", "|", "^", "?", ":", "#",
]
PUNCTUATION = ["(", ")", "{", "}", "[", "]", ";", ",", "."]

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n\f\v]+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fFlL]?|\d+[eE][+-]?\d+[fFlL]?)
  | (?P<int>0[xX][0-9a-fA-F]+[uUlL]*|\d+[uUlL]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<char>'(?:[^'\\\n]|\\.)+')
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>"""
    + "|".join(re.escape(o) for o in OPERATORS)
    + r""")
  | (?P<punct>"""
    + "|".join(re.escape(p) for p in PUNCTUATION)
    + r""")
    """,
    re.VERBOSE | re.DOTALL,
)

_KIND_BY_GROUP = {
    "float": "float-literal",
    "int": "integer-literal",
    "char": "integer-literal",
    "string": "string-literal",
    "op": "operator",
    "punct": "punctuation",
}


class LexError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at {line}:{column}")
        self.line = line
        self.column = column


class ParseError(ValueError):
    def __init__(self, token: "Token | None", expected: set[str] | frozenset[str]):
        self.token = token
        self.expected = frozenset(expected)
        where = "end of input" if token is None else f"{token.text!r} at {token.line}:{token.column}"
        super().__init__(f"unexpected {where}; expected one of {sorted(self.expected)}")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int
    offset: int = 0


def lex(source: str) -> list[Token]:
    """Tokenize ``source`` by maximal munch, dropping whitespace and comments."""
    tokens = []
    pos, line, line_start = 0, 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            raise LexError(f"unrecognized character {source[pos]!r}", line, pos - line_start + 1)
        if m.lastgroup == "op" and source.startswith("/*", pos):
            raise LexError("unterminated comment", line, pos - line_start + 1)
        group = m.lastgroup
        text = m.group()
        if group not in ("ws", "comment"):
            if group == "ident":
                kind = "keyword" if text in KEYWORDS else "identifier"
            else:
                kind = _KIND_BY_GROUP[group]
            tokens.append(Token(kind, text, line, pos - line_start + 1, pos))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    return tokens


@dataclass(eq=False)
class AstNode:
    kind: str
    code: str
    children: list["AstNode"] = field(default_factory=list)
    attrs: dict[str, str] = field(default_factory=dict)
    id: int = -1
    span: tuple[int, int] = (0, 0)  # token index range [start, end)

    def walk(self) -> Iterator["AstNode"]:
        """Pre-order traversal."""
        stack = [self]
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    @property
    def child_ids(self) -> list[int]:
        return [c.id for c in self.children]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "code": self.code,
            "attrs": dict(self.attrs),
            "children": [c.to_dict() for c in self.children],
        }

    def __repr__(self) -> str:
        return f"AstNode({self.id}, {self.kind}, {self.code!r})"


def index_nodes(root: AstNode) -> list[AstNode]:
    """Return the nodes of ``root`` indexed by id."""
    return list(root.walk())


@dataclass
class SourceFunction:
    source: str
    label: int | None = None
    name: str = ""

    @cached_property
    def tokens(self) -> list[Token]:
        return lex(self.source)

    @property
    def token_count(self) -> int:
        return len(self.tokens)


def token_count(f: SourceFunction | str) -> int:
    source = f if isinstance(f, str) else f.source
    return len(lex(source))


_BINARY_LEVELS = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]
_ASSIGN_OPS = frozenset({"=", "+=", "-=", "*=", "/=", "%="})
_UNARY_OPS = frozenset({"-", "!"})


class _Parser:
    def __init__(self, tokens: list[Token], source: str | None):
        self.toks = tokens
        self.pos = 0
        self.source = source

    # token helpers
    def peek(self, ahead: int = 0) -> Token | None:
        i = self.pos + ahead
        return self.toks[i] if i < len(self.toks) else None

    def at(self, *texts: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text in texts and tok.kind != "string-literal"

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok is None or tok.text != text or tok.kind == "string-literal":
            raise ParseError(tok, {text})
        self.pos += 1
        return tok

    def expect_kind(self, kind: str) -> Token:
        tok = self.peek()
        if tok is None or tok.kind != kind:
            raise ParseError(tok, {kind})
        self.pos += 1
        return tok

    def node(self, kind: str, start: int, children=(), **attrs) -> AstNode:
        end = self.pos
        return AstNode(kind, self.slice(start, end), list(children), attrs, span=(start, end))

    def slice(self, start: int, end: int) -> str:
        if end <= start:
            return ""
        first, last = self.toks[start], self.toks[end - 1]
        if self.source is not None:
            return self.source[first.offset : last.offset + len(last.text)]
        return " ".join(t.text for t in self.toks[start:end])

    # declarations
    def is_type_start(self) -> bool:
        tok = self.peek()
        if tok is None:
            return False
        if tok.kind == "keyword" and tok.text in TYPE_KEYWORDS:
            return True
        # typedef-style names: `uint32_t x`
        nxt = self.peek(1)
        return tok.kind == "identifier" and nxt is not None and nxt.kind == "identifier"

    def parse_type(self) -> str:
        words = []
        tok = self.peek()
        if tok is not None and tok.kind == "identifier":
            self.pos += 1
            return tok.text
        while tok is not None and tok.kind == "keyword" and tok.text in TYPE_KEYWORDS:
            words.append(tok.text)
            self.pos += 1
            tok = self.peek()
        if not words:
            raise ParseError(tok, {"type"})
        if self.at("*"):
            raise ParseError(self.peek(), {"identifier"})
        return " ".join(words)

    def parse_function(self) -> AstNode:
        start = self.pos
        rtype = self.parse_type()
        name = self.expect_kind("identifier")
        params = self.parse_params()
        body = self.parse_block()
        if self.peek() is not None:
            raise ParseError(self.peek(), {"end of input"})
        return self.node("Function", start, [params, body], name=name.text, type=rtype)

    def parse_params(self) -> AstNode:
        start = self.pos
        self.expect("(")
        params = []
        if self.at("void") and self.peek(1) is not None and self.peek(1).text == ")":
            self.pos += 1
        elif not self.at(")"):
            while True:
                pstart = self.pos
                ptype = self.parse_type()
                id_start = self.pos
                name = self.expect_kind("identifier")
                ident = AstNode("Identifier", name.text, attrs={"name": name.text}, span=(id_start, id_start + 1))
                params.append(self.node("Decl", pstart, [ident], type=ptype, name=name.text))
                if not self.at(","):
                    break
                self.pos += 1
        self.expect(")")
        return self.node("ParamList", start, params)

    def parse_declaration(self, single: bool = False) -> list[AstNode]:
        start = self.pos
        dtype = self.parse_type()
        decls = []
        while True:
            dstart = start if not decls else self.pos
            id_start = self.pos
            name = self.expect_kind("identifier")
            ident = AstNode("Identifier", name.text, attrs={"name": name.text}, span=(id_start, id_start + 1))
            children = [ident]
            if self.at("["):
                raise ParseError(self.peek(), {"=", ",", ";"})
            if self.at("="):
                self.pos += 1
                children.append(self.parse_assignment())
            decls.append(self.node("Decl", dstart, children, type=dtype, name=name.text))
            if single or not self.at(","):
                break
            self.pos += 1
        return decls

    # statements
    def parse_block(self) -> AstNode:
        start = self.pos
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.peek() is None:
                raise ParseError(None, {"}"})
            stmts.extend(self.parse_statement())
        self.expect("}")
        return self.node("Block", start, stmts)

    def parse_statement(self) -> list[AstNode]:
        tok = self.peek()
        if tok is None:
            raise ParseError(None, {"statement"})
        if tok.text == "{" and tok.kind == "punctuation":
            return [self.parse_block()]
        if tok.text == ";" and tok.kind == "punctuation":
            self.pos += 1
            return []
        if tok.kind == "keyword":
            if tok.text == "if":
                return [self.parse_if()]
            if tok.text == "while":
                return [self.parse_while()]
            if tok.text == "for":
                return [self.parse_for()]
            if tok.text == "return":
                start = self.pos
                self.pos += 1
                children = [] if self.at(";") else [self.parse_expression()]
                node = self.node("Return", start, children)
                self.expect(";")
                return [node]
        if self.is_type_start():
            decls = self.parse_declaration()
            self.expect(";")
            return decls
        expr = self.parse_expression()
        self.expect(";")
        return [expr]

    def parse_condition(self) -> AstNode:
        start = self.pos
        expr = self.parse_expression()
        return self.node("Condition", start, [expr])

    def parse_if(self) -> AstNode:
        start = self.pos
        self.expect("if")
        self.expect("(")
        cond = self.parse_condition()
        self.expect(")")
        children = [cond, self.parse_body()]
        if self.at("else"):
            self.pos += 1
            children.append(self.parse_body())
        return self.node("If", start, children)

    def parse_body(self) -> AstNode:
        stmts = self.parse_statement()
        if len(stmts) != 1:
            # `if (c) ;` or `if (c) int a, b;` - wrap so the parent keeps one body slot
            start = self.pos
            return AstNode("Block", "", stmts, span=(start, start)) if not stmts else self._wrap(stmts)
        return stmts[0]

    def _wrap(self, stmts: list[AstNode]) -> AstNode:
        start, end = stmts[0].span[0], stmts[-1].span[1]
        return AstNode("Block", self.slice(start, end), stmts, span=(start, end))

    def parse_while(self) -> AstNode:
        start = self.pos
        self.expect("while")
        self.expect("(")
        cond = self.parse_condition()
        self.expect(")")
        return self.node("While", start, [cond, self.parse_body()])

    def parse_for(self) -> AstNode:
        # children: [init?] Condition [update?] body; the Condition's position
        # tells whether an init part is present.
        start = self.pos
        self.expect("for")
        self.expect("(")
        children = []
        if not self.at(";"):
            if self.is_type_start():
                children.extend(self.parse_declaration(single=True))
            else:
                children.append(self.parse_expression())
        self.expect(";")
        cstart = self.pos
        if self.at(";"):
            children.append(AstNode("Condition", "", [], span=(cstart, cstart)))
        else:
            children.append(self.parse_condition())
        self.expect(";")
        if not self.at(")"):
            children.append(self.parse_expression())
        self.expect(")")
        children.append(self.parse_body())
        return self.node("For", start, children)

    # expressions
    def parse_expression(self) -> AstNode:
        return self.parse_assignment()

    def parse_assignment(self) -> AstNode:
        start = self.pos
        lhs = self.parse_binary(0)
        if self.at(*_ASSIGN_OPS):
            op = self.peek().text
            if lhs.kind != "Identifier":
                raise ParseError(self.peek(), {"operator"})
            self.pos += 1
            rhs = self.parse_assignment()
            return self.node("Assign", start, [lhs, rhs], operator=op)
        return lhs

    def parse_binary(self, level: int) -> AstNode:
        if level == len(_BINARY_LEVELS):
            return self.parse_unary()
        start = self.pos
        lhs = self.parse_binary(level + 1)
        while self.at(*_BINARY_LEVELS[level]):
            op = self.peek().text
            self.pos += 1
            rhs = self.parse_binary(level + 1)
            lhs = self.node("BinaryOp", start, [lhs, rhs], operator=op)
        return lhs

    def parse_unary(self) -> AstNode:
        start = self.pos
        if self.at(*_UNARY_OPS):
            op = self.peek().text
            self.pos += 1
            operand = self.parse_unary()
            return self.node("UnaryOp", start, [operand], operator=op)
        return self.parse_postfix()

    def parse_postfix(self) -> AstNode:
        start = self.pos
        tok = self.peek()
        if tok is None:
            raise ParseError(None, {"expression"})
        if tok.kind == "identifier":
            self.pos += 1
            if self.at("("):
                self.pos += 1
                args = []
                if not self.at(")"):
                    args.append(self.parse_assignment())
                    while self.at(","):
                        self.pos += 1
                        args.append(self.parse_assignment())
                self.expect(")")
                return self.node("Call", start, args, name=tok.text)
            return self.node("Identifier", start, name=tok.text)
        if tok.kind.endswith("-literal"):
            self.pos += 1
            kind = tok.kind.split("-")[0]
            return self.node("Literal", start, value=tok.text, type=kind)
        if tok.text == "(" and tok.kind == "punctuation":
            self.pos += 1
            if self.is_type_start() and self.peek().kind == "keyword":
                raise ParseError(self.peek(), {"expression"})  # casts are out of subset
            inner = self.parse_expression()
            self.expect(")")
            return inner
        raise ParseError(tok, {"identifier", "literal", "(", "-", "!"})


def parse(tokens: list[Token], source: str | None = None) -> AstNode:
    """Parse one function definition into an AST rooted at a ``Function`` node.

    ``source`` is used to slice verbatim node code; without it the code is
    rebuilt by joining token texts with single spaces.
    """
    parser = _Parser(tokens, source)
    if not tokens:
        raise ParseError(None, {"type"})
    root = parser.parse_function()
    for i, node in enumerate(root.walk()):
        node.id = i
    return root


def parse_source(source: str) -> AstNode:
    return parse(lex(source), source)


def ast_to_json(root: AstNode, indent: int | None = 2) -> str:
    return json.dumps(root.to_dict(), indent=indent)


def dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def ast_to_dot(root: AstNode) -> str:
    lines = ["digraph ast {"]
    for node in root.walk():
        lines.append(f'  n{node.id} [label="{dot_escape(node.kind + ":" + node.code)}"];')
    for node in root.walk():
        for child in node.children:
            lines.append(f"  n{node.id} -> n{child.id};")
    lines.append("}")
    return "\n".join(lines) + "\n"
