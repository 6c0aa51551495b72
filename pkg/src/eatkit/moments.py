"""Operator words, projector algebra and moment-matrix assembly.

Generators are the reduced measurement projectors (last outcome of every
setting eliminated through completeness) plus, for entropy relaxations,
auxiliary non-Hermitian operators z_k and their adjoints.  Words are tuples
of letters; the three parties' algebras commute with each other, projectors
of one setting are idempotent and mutually orthogonal, and operators of
different settings of the same party satisfy no relations.

Letters are int tuples (party, index, outcome, dag) with party 0 = Alice
projectors, 1 = Bob projectors, 2 = auxiliary operators (outcome unused,
dag in {0, 1}).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario
from .solver import SdpBlock, SdpProblem

__all__ = ["a_letter", "b_letter", "z_letter", "canonical_word", "word_dagger",
           "moment_key", "generate_basis", "MomentBlocks"]

A_PARTY, B_PARTY, Z_PARTY = 0, 1, 2


def a_letter(x: int, a: int) -> tuple:
    return (A_PARTY, x, a, 0)


def b_letter(y: int, b: int) -> tuple:
    return (B_PARTY, y, b, 0)


def z_letter(k: int, dag: int = 0) -> tuple:
    return (Z_PARTY, k, 0, dag)


def _simplify_projector_word(letters: tuple) -> tuple | None:
    """Idempotence and same-setting orthogonality; None encodes the zero word."""
    out: list = []
    for let in letters:
        if out and out[-1][1] == let[1]:
            if out[-1][2] == let[2]:
                continue
            return None
        out.append(let)
    return tuple(out)


def canonical_word(letters) -> tuple | None:
    """Canonical form: stable partition by party, then per-party rules."""
    a_part = tuple(l for l in letters if l[0] == A_PARTY)
    b_part = tuple(l for l in letters if l[0] == B_PARTY)
    z_part = tuple(l for l in letters if l[0] == Z_PARTY)
    a_part = _simplify_projector_word(a_part)
    if a_part is None:
        return None
    b_part = _simplify_projector_word(b_part)
    if b_part is None:
        return None
    return a_part + b_part + z_part


def word_dagger(word: tuple) -> tuple:
    """Adjoint: reverse each party subword, toggling dag on auxiliary letters."""
    out = []
    for party in (A_PARTY, B_PARTY, Z_PARTY):
        sub = [l for l in word if l[0] == party]
        for l in reversed(sub):
            if party == Z_PARTY:
                out.append((l[0], l[1], l[2], 1 - l[3]))
            else:
                out.append(l)
    return tuple(out)


def moment_key(word: tuple) -> tuple:
    """Representative of the pair {w, w+}; real moment matrices identify them."""
    dag = word_dagger(word)
    return min(word, dag)


def generate_basis(generators, level: int):
    """All distinct canonical words of length <= level, identity first."""
    basis = [()]
    seen = {()}
    frontier = [()]
    for _ in range(level):
        nxt = []
        for word in frontier:
            for gen in generators:
                w = canonical_word(word + (gen,))
                if w is None or w in seen:
                    continue
                seen.add(w)
                basis.append(w)
                nxt.append(w)
        frontier = nxt
    return basis


class Polynomial(dict):
    """Operator polynomial: maps canonical word -> real coefficient."""

    def add_word(self, word, coeff: float):
        if word is None or coeff == 0.0:
            return
        self[word] = self.get(word, 0.0) + coeff
        if self[word] == 0.0:
            del self[word]

    @classmethod
    def one(cls) -> "Polynomial":
        p = cls()
        p.add_word((), 1.0)
        return p

    def __mul__(self, other: "Polynomial") -> "Polynomial":
        out = Polynomial()
        for w1, c1 in self.items():
            for w2, c2 in other.items():
                out.add_word(canonical_word(w1 + w2), c1 * c2)
        return out

    def __add__(self, other: "Polynomial") -> "Polynomial":
        out = Polynomial(self)
        for w, c in other.items():
            out.add_word(w, c)
        return out

    def scaled(self, s: float) -> "Polynomial":
        out = Polynomial()
        for w, c in self.items():
            out.add_word(w, s * c)
        return out


def projector_polynomial(scenario: Scenario, party: int, setting: int,
                         outcome: int) -> Polynomial:
    """Full projector as a polynomial over reduced generators."""
    counts = scenario.a_config if party == A_PARTY else scenario.b_config
    mk = a_letter if party == A_PARTY else b_letter
    n_out = counts[setting]
    p = Polynomial()
    if outcome < n_out - 1:
        p.add_word((mk(setting, outcome),), 1.0)
    else:
        p.add_word((), 1.0)
        for a in range(n_out - 1):
            p.add_word((mk(setting, a),), -1.0)
    return p


@dataclass
class MomentBlocks:
    """Moment matrices for one or more subnormalized state components.

    Each block has its own basis and its own moment variables (keyed by
    block id and adjoint-class representative word); a global registry maps
    them to one flat variable vector.  The identity moment of each block is
    an ordinary variable, pinned by equality rows at problem build time, so
    subnormalized components (guessing-probability decompositions) need no
    special casing.

    ``extra_words`` appends explicit monomials to the generated basis and
    ``word_filter`` drops generated ones; entropy relaxations use these to
    include the measurement-times-auxiliary words their objectives need.
    """

    scenario: Scenario
    level: int
    num_blocks: int = 1
    extra_generators: tuple = ()
    extra_words: tuple = ()
    word_filter: object = None

    def __post_init__(self):
        gens = []
        for x in range(self.scenario.settings_a):
            for a in range(self.scenario.a_config[x] - 1):
                gens.append(a_letter(x, a))
        for y in range(self.scenario.settings_b):
            for b in range(self.scenario.b_config[y] - 1):
                gens.append(b_letter(y, b))
        gens.extend(self.extra_generators)
        self.generators = tuple(gens)
        self.basis = generate_basis(self.generators, self.level)
        if self.word_filter is not None:
            self.basis = [w for w in self.basis if not w or self.word_filter(w)]
        seen = set(self.basis)
        for w in self.extra_words:
            cw = canonical_word(w)
            if cw is not None and cw not in seen:
                seen.add(cw)
                self.basis.append(cw)
        self.index: dict[tuple[int, tuple], int] = {}
        self.entries = []  # per block: list of (var, r, c, coeff)
        for blk in range(self.num_blocks):
            entries = []
            for i, u in enumerate(self.basis):
                du = word_dagger(u)
                for j in range(i, len(self.basis)):
                    w = canonical_word(du + self.basis[j])
                    if w is None:
                        continue
                    var = self.var_id(blk, w)
                    entries.append((var, i, j, 1.0))
            self.entries.append(entries)

    @property
    def num_vars(self) -> int:
        return len(self.index)

    @property
    def block_size(self) -> int:
        return len(self.basis)

    def var_id(self, block: int, word: tuple) -> int:
        key = (block, moment_key(word))
        if key not in self.index:
            self.index[key] = len(self.index)
        return self.index[key]

    def identity_var(self, block: int) -> int:
        return self.var_id(block, ())

    def lower_polynomial(self, poly: Polynomial, block: int) -> np.ndarray:
        """Vector v with <poly> = v . y on this block's moments."""
        v = np.zeros(self.num_vars)
        for word, coeff in poly.items():
            key = (block, moment_key(word))
            if key not in self.index:
                raise KeyError(
                    f"moment of word {word} is outside the level-{self.level} "
                    "relaxation; raise the level")
            v[self.index[key]] += coeff
        return v

    def probability_polynomial(self, a: int, b: int, x: int, y: int) -> Polynomial:
        pa = projector_polynomial(self.scenario, A_PARTY, x, a)
        pb = projector_polynomial(self.scenario, B_PARTY, y, b)
        return pa * pb

    def lower_coefficient_vector(self, v: dict, block: int) -> np.ndarray:
        """Lower a behavior functional sum v[a,b,x,y] P(a,b|x,y) onto moments."""
        poly = Polynomial()
        for (a, b, x, y), coeff in v.items():
            poly = poly + self.probability_polynomial(a, b, x, y).scaled(coeff)
        return self.lower_polynomial(poly, block)

    def sdp_blocks(self) -> list[SdpBlock]:
        n = self.block_size
        return [SdpBlock.from_entries(n, None, ents) for ents in self.entries]

    def behavior_table(self, y_vec: np.ndarray, block: int = 0) -> dict:
        """P(a,b|x,y) reconstructed from a solution's moment vector."""
        table = {}
        sc = self.scenario
        for (x, yy) in sc.setting_pairs():
            mat = np.zeros((sc.a_config[x], sc.b_config[yy]))
            for a in range(sc.a_config[x]):
                for b in range(sc.b_config[yy]):
                    vec = self.lower_polynomial(
                        self.probability_polynomial(a, b, x, yy), block)
                    mat[a, b] = float(vec @ y_vec)
            table[(x, yy)] = mat
        return table
