"""Grammar-guided generation of game descriptions with iterative grammar and description repair."""

from .earley import EarleyParser, derivation_rules, parse_prefix, recognize
from .grammar import Grammar, RuleAlt, Symbol, parse_grammar, render_grammar
from .lexer import Token, TokenStream, detokenize, tokenize
from .minimal import check_minimality, extract_minimal

__all__ = [
    "EarleyParser",
    "Grammar",
    "RuleAlt",
    "Symbol",
    "Token",
    "TokenStream",
    "check_minimality",
    "derivation_rules",
    "detokenize",
    "extract_minimal",
    "parse_grammar",
    "parse_prefix",
    "recognize",
    "render_grammar",
    "tokenize",
]
