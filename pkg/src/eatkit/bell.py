"""Parser and evaluator for the textual Bell-expression language.

The grammar covers affine combinations of correlators and probabilities::

    expr   := term (('+' | '-') term)*
    term   := [sign] (number '*'? )* [atom]
    atom   := C(x,y) | P(a,b|x,y) | PA(a|x) | PB(b|y)

Coefficients may be attached by '*' or juxtaposition ("2 C(0,0)").  '-' acts
as a term-level sign only; parentheses appear only around atom arguments.
Indices may have several digits.  Whitespace is ignored everywhere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .scenario import BehaviorDistribution, Scenario

__all__ = [
    "BellAtom",
    "BellExpression",
    "BellParseError",
    "parse_expression",
    "evaluate_expression",
    "expression_to_coefficient_vector",
]


class BellParseError(ValueError):
    """Syntax or validation error, carrying the offending position."""

    def __init__(self, message: str, position: int | None = None):
        self.position = position
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)


@dataclass(frozen=True, order=True)
class BellAtom:
    """One multiplicand: a correlator, joint probability, marginal or constant.

    kind is one of "C", "P", "PA", "PB", "const"; unused index slots are -1.
    """

    kind: str
    a: int = -1
    b: int = -1
    x: int = -1
    y: int = -1

    def validate(self, scenario: Scenario) -> None:
        if self.kind == "const":
            return
        if self.kind in ("C", "P", "PA"):
            if not (0 <= self.x < scenario.settings_a):
                raise BellParseError(
                    f"atom {self} references Alice setting {self.x}, scenario has "
                    f"{scenario.settings_a} settings")
        if self.kind in ("C", "P", "PB"):
            if not (0 <= self.y < scenario.settings_b):
                raise BellParseError(
                    f"atom {self} references Bob setting {self.y}, scenario has "
                    f"{scenario.settings_b} settings")
        if self.kind == "C":
            if scenario.a_config[self.x] != 2 or scenario.b_config[self.y] != 2:
                raise BellParseError(
                    f"correlator C({self.x},{self.y}) needs binary outcomes on both "
                    f"sides, got {scenario.a_config[self.x]}x{scenario.b_config[self.y]}")
        if self.kind in ("P", "PA") and not (0 <= self.a < scenario.a_config[self.x]):
            raise BellParseError(
                f"atom {self} references Alice outcome {self.a}, setting {self.x} has "
                f"{scenario.a_config[self.x]} outcomes")
        if self.kind in ("P", "PB") and not (0 <= self.b < scenario.b_config[self.y]):
            raise BellParseError(
                f"atom {self} references Bob outcome {self.b}, setting {self.y} has "
                f"{scenario.b_config[self.y]} outcomes")

    def __str__(self):
        if self.kind == "const":
            return "1"
        if self.kind == "C":
            return f"C({self.x},{self.y})"
        if self.kind == "P":
            return f"P({self.a},{self.b}|{self.x},{self.y})"
        if self.kind == "PA":
            return f"PA({self.a}|{self.x})"
        return f"PB({self.b}|{self.y})"


CONST_ATOM = BellAtom("const")


class BellExpression:
    """Canonicalized affine expression: sorted unique atoms with coefficients."""

    def __init__(self, terms, scenario: Scenario):
        merged: dict[BellAtom, float] = {}
        for coeff, atom in terms:
            atom.validate(scenario)
            merged[atom] = merged.get(atom, 0.0) + float(coeff)
        kept = [(c, a) for a, c in merged.items() if c != 0.0]
        if not kept:
            kept = [(0.0, CONST_ATOM)]
        self.terms = tuple(sorted(kept, key=lambda t: t[1]))
        self.scenario = scenario

    @property
    def constant(self) -> float:
        return sum(c for c, a in self.terms if a.kind == "const")

    @property
    def atoms(self):
        return tuple(a for _, a in self.terms)

    def __eq__(self, other):
        if not isinstance(other, BellExpression):
            return NotImplemented
        return self.scenario == other.scenario and self.terms == other.terms

    def __hash__(self):
        return hash((self.scenario, self.terms))

    def __str__(self):
        parts = []
        for coeff, atom in self.terms:
            if atom.kind == "const":
                body = repr(abs(coeff))
            elif abs(coeff) == 1.0:
                body = str(atom)
            else:
                body = f"{abs(coeff)!r}*{atom}"
            sign = "-" if coeff < 0 else "+"
            parts.append((sign, body))
        if not parts:
            return "0"
        first_sign, first_body = parts[0]
        out = ("-" if first_sign == "-" else "") + first_body
        for sign, body in parts[1:]:
            out += f" {sign} {body}"
        return out

    def __repr__(self):
        return f"BellExpression({self})"


_NUMBER_RE = re.compile(r"\d+\.\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|\d+([eE][+-]?\d+)?")
_INT_RE = re.compile(r"\d+")


class _Parser:
    def __init__(self, text: str, scenario: Scenario):
        self.text = text
        self.scenario = scenario
        self.pos = 0

    def error(self, message: str):
        raise BellParseError(message, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch: str):
        self.skip_ws()
        if self.peek() != ch:
            self.error(f"expected {ch!r}, found {self.peek()!r}")
        self.pos += 1

    def parse_int(self) -> int:
        self.skip_ws()
        m = _INT_RE.match(self.text, self.pos)
        if not m:
            self.error("expected an index")
        self.pos = m.end()
        return int(m.group())

    def try_number(self) -> float | None:
        self.skip_ws()
        m = _NUMBER_RE.match(self.text, self.pos)
        if not m:
            return None
        self.pos = m.end()
        return float(m.group())

    def try_atom(self) -> BellAtom | None:
        self.skip_ws()
        start = self.pos
        m = re.match(r"(PA|PB|P|C)\s*\(", self.text[self.pos:])
        if not m:
            return None
        head = m.group(1)
        self.pos += m.end()
        try:
            if head == "C":
                x = self.parse_int()
                self.expect(",")
                y = self.parse_int()
                self.expect(")")
                atom = BellAtom("C", x=x, y=y)
            elif head == "P":
                a = self.parse_int()
                self.expect(",")
                b = self.parse_int()
                self.expect("|")
                x = self.parse_int()
                self.expect(",")
                y = self.parse_int()
                self.expect(")")
                atom = BellAtom("P", a=a, b=b, x=x, y=y)
            elif head == "PA":
                a = self.parse_int()
                self.expect("|")
                x = self.parse_int()
                self.expect(")")
                atom = BellAtom("PA", a=a, x=x)
            else:
                b = self.parse_int()
                self.expect("|")
                y = self.parse_int()
                self.expect(")")
                atom = BellAtom("PB", b=b, y=y)
        except BellParseError:
            raise
        except ValueError:
            self.pos = start
            self.error("malformed atom")
        return atom

    def parse_term(self):
        """One signed term: optional numeric factors then at most one atom."""
        coeff = 1.0
        saw_number = False
        atom = None
        while True:
            self.skip_ws()
            n = self.try_number()
            if n is not None:
                coeff *= n
                saw_number = True
                self.skip_ws()
                if self.peek() == "*":
                    self.pos += 1
                continue
            got = self.try_atom()
            if got is not None:
                if atom is not None:
                    self.error("more than one atom in a term (expressions are affine)")
                atom = got
                self.skip_ws()
                if self.peek() == "*":
                    self.error("atom products are not part of the language")
                continue
            break
        if atom is None and not saw_number:
            self.error("expected a coefficient or an atom")
        return coeff, atom if atom is not None else CONST_ATOM

    def parse(self) -> BellExpression:
        terms = []
        self.skip_ws()
        sign = 1.0
        if self.peek() in "+-":
            sign = -1.0 if self.peek() == "-" else 1.0
            self.pos += 1
        coeff, atom = self.parse_term()
        terms.append((sign * coeff, atom))
        while True:
            self.skip_ws()
            if self.pos >= len(self.text):
                break
            op = self.peek()
            if op not in "+-":
                self.error(f"expected '+' or '-', found {op!r}")
            self.pos += 1
            coeff, atom = self.parse_term()
            terms.append((coeff if op == "+" else -coeff, atom))
        return BellExpression(terms, self.scenario)


def parse_expression(text: str, scenario: Scenario) -> BellExpression:
    """Parse an expression string against a scenario; raises BellParseError."""
    if not text or not text.strip():
        raise BellParseError("empty expression")
    return _Parser(text, scenario).parse()


def evaluate_expression(expr: BellExpression, behavior: BehaviorDistribution) -> float:
    """Value of the expression on a behavior (marginals via partner setting 0)."""
    if behavior.scenario != expr.scenario:
        raise ValueError("expression and behavior belong to different scenarios")
    marg = None
    total = 0.0
    for coeff, atom in expr.terms:
        if atom.kind == "const":
            total += coeff
        elif atom.kind == "C":
            total += coeff * behavior.correlator(atom.x, atom.y)
        elif atom.kind == "P":
            total += coeff * behavior.prob(atom.a, atom.b, atom.x, atom.y)
        else:
            if marg is None:
                marg = behavior.marginals()
            if atom.kind == "PA":
                total += coeff * marg.pa_value(atom.a, atom.x)
            else:
                total += coeff * marg.pb_value(atom.b, atom.y)
    return total


def expression_to_coefficient_vector(expr: BellExpression):
    """Lower the expression to (v, const) with value = sum v[a,b,x,y] P(a,b|x,y) + const.

    Marginal atoms are spread through the partner's setting 0, which is
    immaterial once no-signaling holds (the SDP layer enforces it).  The
    vector is a dict keyed by (a, b, x, y); ragged scenarios are respected.
    """
    sc = expr.scenario
    v: dict[tuple[int, int, int, int], float] = {}

    def add(a, b, x, y, c):
        key = (a, b, x, y)
        v[key] = v.get(key, 0.0) + c

    const = 0.0
    for coeff, atom in expr.terms:
        if atom.kind == "const":
            const += coeff
        elif atom.kind == "C":
            for a in range(2):
                for b in range(2):
                    add(a, b, atom.x, atom.y, coeff * (-1.0) ** (a + b))
        elif atom.kind == "P":
            add(atom.a, atom.b, atom.x, atom.y, coeff)
        elif atom.kind == "PA":
            for b in range(sc.b_config[0]):
                add(atom.a, b, atom.x, 0, coeff)
        else:  # PB
            for a in range(sc.a_config[0]):
                add(a, atom.b, 0, atom.y, coeff)
    v = {k: c for k, c in v.items() if c != 0.0}
    return v, const


def coefficient_vector_value(v: dict, const: float, behavior: BehaviorDistribution) -> float:
    """Dot-product evaluation of a lowered expression (testing aid)."""
    return const + sum(c * behavior.prob(a, b, x, y) for (a, b, x, y), c in v.items())
