"""
Recursive-descent parser for nuisance-model formulas.

    spec    := sum | "(" names ")" "^" "2"
    sum     := product ("+" product)*
    product := atom ("*" atom)*
    atom    := NAME | "1"
    names   := NAME ("+" NAME)*
"""
import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

Term = Tuple[str, ...]

INTERCEPT: Term = ()


class FormulaSyntaxError(ValueError):
    """Malformed formula text; `offset` is the byte offset of the problem."""

    def __init__(self, message: str, text: str, index: int):
        self.text = text
        self.offset = len(text[:index].encode('utf-8'))
        super().__init__(f"{message} at byte {self.offset} in formula '{text}'")


@dataclass(frozen=True)
class Formula:
    """
    Ordered linear-predictor terms. The intercept `()` is always first; an
    interaction is a tuple of distinct variable names ordered by first
    appearance in the source.
    """
    terms: Tuple[Term, ...]
    source: str = field(default='', compare=False)

    @property
    def variables(self) -> Tuple[str, ...]:
        seen: List[str] = []
        for term in self.terms:
            for name in term:
                if name not in seen:
                    seen.append(name)
        return tuple(seen)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple('*'.join(term) if term else '1' for term in self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __str__(self) -> str:
        return format_formula(self)


def format_formula(formula: Formula) -> str:
    """Canonical text using '+' and '*'; "1" for an intercept-only formula."""
    parts = ['*'.join(term) for term in formula.terms if term]
    return ' + '.join(parts) if parts else '1'


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, message: str, index: Optional[int] = None):
        raise FormulaSyntaxError(message, self.text, self.pos if index is None else index)

    def skip(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ''

    def expect(self, char: str):
        if self.peek() != char:
            found = self.peek() or 'end of input'
            self.error(f"expected '{char}' but found '{found}'")
        self.pos += 1

    def name(self) -> str:
        self.skip()
        start = self.pos
        if self.pos < len(self.text) and (self.text[self.pos].isalpha() or self.text[self.pos] == '_'):
            while self.pos < len(self.text) and (self.text[self.pos].isalnum() or self.text[self.pos] == '_'):
                self.pos += 1
            return self.text[start:self.pos]
        if self.pos < len(self.text) and self.text[self.pos] == '1':
            self.pos += 1
            if self.pos < len(self.text) and self.text[self.pos].isalnum():
                self.error("invalid name", start)
            return '1'
        char = self.text[self.pos] if self.pos < len(self.text) else ''
        if not char:
            self.error("unexpected end of formula")
        if char in '+*()^':
            self.error(f"expected a variable name but found '{char}'")
        self.error(f"unknown operator '{char}'")

    def product(self) -> Term:
        factors = [self.name()]
        while self.peek() == '*':
            self.pos += 1
            factors.append(self.name())
        if '1' in factors and len(factors) > 1:
            self.error("the constant 1 cannot appear in a product")
        return tuple(f for f in factors if f != '1')

    def sum(self) -> List[Term]:
        terms = [self.product()]
        while self.peek() == '+':
            self.pos += 1
            terms.append(self.product())
        return terms

    def finish(self):
        char = self.peek()
        if char:
            if char in '+*()^':
                self.error(f"unexpected '{char}'")
            self.error(f"unknown operator '{char}'")

    def spec(self) -> Tuple[List[Term], bool]:
        if self.peek() == '(':
            open_at = self.pos
            self.pos += 1
            if self.peek() == ')':
                self.error("empty parentheses", open_at)
            terms = self.sum()
            if any(len(term) > 1 for term in terms):
                self.error("products are not allowed inside (...)^2", open_at)
            self.expect(')')
            self.expect('^')
            self.skip()
            start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if self.text[start:self.pos] != '2':
                self.error("only the exponent ^2 is supported", start)
            self.finish()
            return terms, True
        terms = self.sum()
        self.finish()
        return terms, False


def _canonical(raw: Sequence[Term], squared: bool, source: str) -> Formula:
    order: List[str] = []
    for term in raw:
        for name in term:
            if name not in order:
                order.append(name)
    rank = {name: i for i, name in enumerate(order)}
    terms: List[Term] = [INTERCEPT]
    if squared:
        mains = [term[0] for term in raw if term]
        distinct = list(dict.fromkeys(mains))
        candidates = [(v,) for v in distinct] + list(itertools.combinations(distinct, 2))
    else:
        candidates = raw
    for term in candidates:
        canonical = tuple(sorted(set(term), key=rank.__getitem__))
        if canonical not in terms:
            terms.append(canonical)
    return Formula(tuple(terms), source)


def parse_formula(text: str) -> Formula:
    """
    Parse a formula such as "(L1 + L2)^2" or "L1 + L2 + L1*L2 + A0".

    Raises:
        FormulaSyntaxError: with the byte offset of the problem
    """
    if text is None or not str(text).strip():
        raise FormulaSyntaxError("empty formula", str(text or ''), 0)
    parser = _Parser(str(text))
    raw, squared = parser.spec()
    return _canonical(raw, squared, str(text))


def saturated_formula(variables: Sequence[str]) -> Formula:
    """All products of every subset of the variables, one free parameter per stratum of binary inputs."""
    variables = list(dict.fromkeys(variables))
    terms: List[Term] = [INTERCEPT]
    for size in range(1, len(variables) + 1):
        terms.extend(itertools.combinations(variables, size))
    formula = Formula(tuple(terms))
    return Formula(formula.terms, format_formula(formula))
