from __future__ import annotations

import re
from typing import NamedTuple

from hirc.core.diagnostics import Diagnostic, ErrorClass, SourceSpan, error

KEYWORDS = frozenset({
    "def", "extern", "at", "offset", "delay", "by", "for", "unroll_for", "to", "step",
    "iter_time", "yield_result", "accum", "yield", "return", "call", "constant", "time",
    "alloc", "mem_read", "mem_write", "add", "sub", "mult", "bit_slice", "select", "memref",
    "const",
})

PUNCT = ("->", "(", ")", "{", "}", "[", "]", "<", ">", ",", ":", "=")

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<ssa>%[A-Za-z0-9_.$]+)
  | (?P<sym>@[A-Za-z_][A-Za-z0-9_.$]*)
  | (?P<int>-?[0-9]+)
  | (?P<time>!time)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>->|[(){}\[\]<>,:=])
""", re.VERBOSE)


class Token(NamedTuple):
    kind: str  # SSA, SYM, INT, IDENT, KEYWORD, a punctuation string, or EOF
    text: str
    line: int
    col: int

    @property
    def value(self) -> int:
        return int(self.text)

    def span(self, filename: str) -> SourceSpan:
        return SourceSpan(filename, self.line, self.col, self.line, self.col + max(len(self.text), 1) - 1)

    def __repr__(self):
        return f"Token({self.kind!r}, {self.text!r})"


def lex(text: str, filename: str = "<input>") -> tuple[list[Token], list[Diagnostic]]:
    """Split `text` into tokens. Unknown characters become lex-error diagnostics and are skipped."""
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            diags.append(error(ErrorClass.LEX_ERROR, SourceSpan(filename, line, col),
                               f"unexpected character {text[pos]!r}"))
            pos += 1
            continue
        kind = m.lastgroup
        lexeme = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ssa":
            tokens.append(Token("SSA", lexeme, line, col))
        elif kind == "sym":
            tokens.append(Token("SYM", lexeme, line, col))
        elif kind == "int":
            tokens.append(Token("INT", lexeme, line, col))
        elif kind == "time":
            tokens.append(Token("IDENT", lexeme, line, col))
        elif kind == "ident":
            tokens.append(Token("KEYWORD" if lexeme in KEYWORDS else "IDENT", lexeme, line, col))
        elif kind == "punct":
            tokens.append(Token(lexeme, lexeme, line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, pos - line_start + 1))
    return tokens, diags
