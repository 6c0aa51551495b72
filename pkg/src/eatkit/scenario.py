"""Bell scenarios, behaviors P(a,b|x,y), marginals, correlators and entropies.

A scenario fixes the number of measurement settings per party and the number
of outcomes per setting.  A behavior is the conditional distribution table
P(a,b|x,y).  Tables are stored ragged (one matrix per setting pair), so
heterogeneous outcome counts never need padding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Scenario",
    "BehaviorDistribution",
    "MarginalSet",
    "NoSignalingReport",
    "uniform_behavior",
    "binary_entropy",
]

NORMALIZATION_TOL = 1e-9
NO_SIGNALING_TOL = 1e-6


def binary_entropy(p: float) -> float:
    """Shannon entropy in bits of a coin with bias p, with 0 log 0 = 0."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class Scenario:
    """Measurement structure: outcome counts per setting for Alice and Bob."""

    a_config: tuple[int, ...]
    b_config: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "a_config", tuple(int(k) for k in self.a_config))
        object.__setattr__(self, "b_config", tuple(int(k) for k in self.b_config))
        if not self.a_config or not self.b_config:
            raise ValueError("each party needs at least one measurement setting")
        if any(k < 2 for k in self.a_config) or any(k < 2 for k in self.b_config):
            raise ValueError("every measurement needs at least 2 outcomes")

    @property
    def settings_a(self) -> int:
        return len(self.a_config)

    @property
    def settings_b(self) -> int:
        return len(self.b_config)

    @property
    def outcomes_a(self) -> int:
        """Maximum outcome count among Alice's measurements (display metadata)."""
        return max(self.a_config)

    @property
    def outcomes_b(self) -> int:
        return max(self.b_config)

    def setting_pairs(self):
        for x in range(self.settings_a):
            for y in range(self.settings_b):
                yield x, y

    def is_binary(self, x: int, y: int) -> bool:
        return self.a_config[x] == 2 and self.b_config[y] == 2

    def to_dict(self) -> dict:
        return {"A_config": list(self.a_config), "B_config": list(self.b_config)}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(tuple(d["A_config"]), tuple(d["B_config"]))


@dataclass(frozen=True)
class NoSignalingReport:
    """Worst no-signaling discrepancy found in a behavior table.

    ``max_discrepancy`` is the largest difference between marginals that
    should agree; ``witness`` names the offending (party, outcome, setting,
    partner settings) combination.
    """

    max_discrepancy: float
    witness: tuple | None

    def ok(self, tol: float = NO_SIGNALING_TOL) -> bool:
        return self.max_discrepancy <= tol


@dataclass(frozen=True)
class MarginalSet:
    """Per-party conditional outcome distributions PA(a|x) and PB(b|y)."""

    pa: tuple[tuple[float, ...], ...]
    pb: tuple[tuple[float, ...], ...]

    def pa_value(self, a: int, x: int) -> float:
        return self.pa[x][a]

    def pb_value(self, b: int, y: int) -> float:
        return self.pb[y][b]


class BehaviorDistribution:
    """Conditional probability table P(a,b|x,y) over a scenario.

    The table is a dict keyed by setting pair (x, y) holding a non-negative
    matrix of shape (outcomes_a(x), outcomes_b(y)) that sums to one.
    Construction validates normalization; no-signaling is checked but only
    flagged (experimental counts never satisfy it exactly) unless
    ``strict_no_signaling`` is set.
    """

    def __init__(self, scenario: Scenario, table: dict, *,
                 no_signaling_tol: float = NO_SIGNALING_TOL,
                 strict_no_signaling: bool = False):
        self.scenario = scenario
        self.table = {}
        for (x, y) in scenario.setting_pairs():
            if (x, y) not in table:
                raise ValueError(f"missing table entry for setting pair {(x, y)}")
            block = np.asarray(table[(x, y)], dtype=float)
            want = (scenario.a_config[x], scenario.b_config[y])
            if block.shape != want:
                raise ValueError(
                    f"setting pair {(x, y)}: table shape {block.shape}, expected {want}")
            if (block < -1e-15).any():
                raise ValueError(f"negative probability at setting pair {(x, y)}")
            s = block.sum()
            if abs(s - 1.0) > NORMALIZATION_TOL:
                raise ValueError(
                    f"setting pair {(x, y)} sums to {s!r}, violates normalization")
            block = np.clip(block, 0.0, None)
            block.flags.writeable = False
            self.table[(x, y)] = block
        self.no_signaling = self._check_no_signaling()
        if strict_no_signaling and not self.no_signaling.ok(no_signaling_tol):
            raise ValueError(
                "no-signaling violated: max discrepancy "
                f"{self.no_signaling.max_discrepancy:.3e} at {self.no_signaling.witness}")

    def _check_no_signaling(self) -> NoSignalingReport:
        sc = self.scenario
        worst, witness = 0.0, None
        for x in range(sc.settings_a):
            for a in range(sc.a_config[x]):
                vals = [self.table[(x, y)][a, :].sum() for y in range(sc.settings_b)]
                for y in range(1, sc.settings_b):
                    d = abs(vals[y] - vals[0])
                    if d > worst:
                        worst, witness = d, ("A", a, x, 0, y)
        for y in range(sc.settings_b):
            for b in range(sc.b_config[y]):
                vals = [self.table[(x, y)][:, b].sum() for x in range(sc.settings_a)]
                for x in range(1, sc.settings_a):
                    d = abs(vals[x] - vals[0])
                    if d > worst:
                        worst, witness = d, ("B", b, y, 0, x)
        return NoSignalingReport(worst, witness)

    def prob(self, a: int, b: int, x: int, y: int) -> float:
        return float(self.table[(x, y)][a, b])

    def marginals(self, *, convention: str = "first") -> MarginalSet:
        """Per-party marginals.

        With signaling present in raw data the marginal of one party depends
        on the partner's setting.  ``convention="first"`` sums against the
        partner's setting 0; ``convention="average"`` averages over partner
        settings.  The choice is immaterial for exactly no-signaling tables.
        """
        if convention not in ("first", "average"):
            raise ValueError(f"unknown marginal convention {convention!r}")
        sc = self.scenario
        pa = []
        for x in range(sc.settings_a):
            if convention == "first":
                row = self.table[(x, 0)].sum(axis=1)
            else:
                row = np.mean(
                    [self.table[(x, y)].sum(axis=1) for y in range(sc.settings_b)],
                    axis=0)
            pa.append(tuple(float(v) for v in row))
        pb = []
        for y in range(sc.settings_b):
            if convention == "first":
                col = self.table[(0, y)].sum(axis=0)
            else:
                col = np.mean(
                    [self.table[(x, y)].sum(axis=0) for x in range(sc.settings_a)],
                    axis=0)
            pb.append(tuple(float(v) for v in col))
        return MarginalSet(tuple(pa), tuple(pb))

    def correlator(self, x: int, y: int) -> float:
        """<(-1)^a (-1)^b> for a binary setting pair; in [-1, 1]."""
        if not self.scenario.is_binary(x, y):
            raise ValueError(
                f"correlator needs binary outcomes at both settings, got "
                f"{self.scenario.a_config[x]}x{self.scenario.b_config[y]} at {(x, y)}")
        t = self.table[(x, y)]
        return float(t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0])

    def conditional_entropy_ab(self, x: int, y: int) -> float:
        """Shannon conditional entropy H(A|B) in bits of P(a,b|x,y)."""
        t = self.table[(x, y)]
        h = 0.0
        for b in range(t.shape[1]):
            pb = t[:, b].sum()
            if pb <= 0.0:
                continue
            for a in range(t.shape[0]):
                p = t[a, b]
                if p > 0.0:
                    h -= p * math.log2(p / pb)
        return h

    def __eq__(self, other):
        if not isinstance(other, BehaviorDistribution):
            return NotImplemented
        return self.scenario == other.scenario and all(
            np.array_equal(self.table[k], other.table[k]) for k in self.table)


def uniform_behavior(scenario: Scenario) -> BehaviorDistribution:
    """Behavior with P(a,b|x,y) = 1/(outcomes_A(x) * outcomes_B(y))."""
    table = {}
    for (x, y) in scenario.setting_pairs():
        na, nb = scenario.a_config[x], scenario.b_config[y]
        table[(x, y)] = np.full((na, nb), 1.0 / (na * nb))
    return BehaviorDistribution(scenario, table)
