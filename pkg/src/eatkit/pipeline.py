"""End-to-end workflow: certificates -> tradeoff function -> finite-size rates.

``calculate_min_tradeoff`` runs the relaxation pipeline:

1. anchor: solve the guessing-probability program with the user certificates
   and extract the adversary's optimal behavior (the anchor statistics);
2. tangent plane: re-solve with the full anchor statistics constrained
   (every outcome cell except one redundant cell per setting pair) and turn
   the dual multipliers into an affine per-round entropy lower bound over
   outcome distributions;
3. range: optimize the plane over the quantum relaxation in both directions,
   giving the diameter that feeds the finite-size corrections.

For von Neumann entropy the plane comes from the node-wise duals of the
Gauss-Radau sequence instead of a log-tangent.  Certificates obtained from
measured counts should be derated by their statistical half-width before
entering here (the data path does this by default).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .bell import BellAtom, BellExpression, parse_expression
from .eat import (DEFAULT_BETA_EXPONENTS, EatSweepResult, spot_check_lift,
                  sweep, tradeoff_stats_from_range)
from .relaxations import (CertificateSet, InfeasibleTargets, RelaxationError,
                          bell_extremum, build_min_entropy_problem,
                          min_entropy, von_neumann_entropy)
from .scenario import Scenario
from .solver import SolverSettings, solve

__all__ = ["MinTradeoffInfo", "calculate_min_tradeoff", "calculate_eat_rates"]

LN2 = math.log(2.0)

ENTROPY_TYPES = ("min-entropy", "von Neumann entropy")
USE_CASES = ("Randomness Generation", "Key Distribution")


@dataclass
class MinTradeoffInfo:
    """Affine per-round entropy bound plus everything needed for rate sweeps.

    The plane is stored per outcome cell: ``cell_slopes`` maps
    "a,b,x,y" -> slope of P(a,b|x,y); the entropy bound for a behavior P is
    ``constant + sum slopes * P``.  ``max_f``/``min_f`` bound the plane over
    the level-``relaxation_level`` quantum set.
    """

    a_config: list
    b_config: list
    spot_setting: tuple
    entropy_type: str
    use_case: str
    certificate_expressions: list
    certificate_values: list
    constant: float
    cell_slopes: dict
    certificate_value: float
    asymptotic_keyrate: float
    max_f: float
    min_f: float
    hab_dict: dict
    relaxation_level: int
    m_radau: int
    guess: str
    setup_nickname: str = ""
    additional_data_dict: dict = field(default_factory=dict)
    anchor_behavior: dict = field(default_factory=dict)
    solver_info: dict = field(default_factory=dict)

    @property
    def scenario(self) -> Scenario:
        return Scenario(tuple(self.a_config), tuple(self.b_config))

    @property
    def diameter(self) -> float:
        return self.max_f - self.min_f

    @property
    def hab_at_spot(self):
        key = tuple(self.spot_setting)
        for k, v in self.hab_dict.items():
            if _parse_pair(k) == key:
                return float(v)
        return None

    def plane_value(self, behavior_table: dict) -> float:
        total = self.constant
        for key, slope in self.cell_slopes.items():
            a, b, x, y = _parse_key(key)
            total += slope * behavior_table[(x, y)][a, b]
        return total

    def vertex_values(self) -> dict:
        """Plane values at point distributions of the test alphabet (a,b,x,y)."""
        sc = self.scenario
        pairs = sc.settings_a * sc.settings_b
        verts = {}
        for (x, y) in sc.setting_pairs():
            for a in range(sc.a_config[x]):
                for b in range(sc.b_config[y]):
                    slope = self.cell_slopes.get(_fmt_key(a, b, x, y), 0.0)
                    verts[(a, b, x, y)] = self.constant + pairs * slope
        return verts

    def to_str(self) -> str:
        payload = asdict(self)
        payload["spot_setting"] = list(self.spot_setting)
        payload["hab_dict"] = {_fmt_pair(k): v for k, v in self.hab_dict.items()}
        return json.dumps(payload, indent=2)

    @classmethod
    def from_str(cls, text: str) -> "MinTradeoffInfo":
        raw = json.loads(text)
        raw["spot_setting"] = tuple(raw["spot_setting"])
        raw["hab_dict"] = {_parse_pair(k): float(v)
                           for k, v in raw.get("hab_dict", {}).items()}
        return cls(**raw)

    def calculate_eat_rates(self, single_data_chunk_generation_time_list,
                            events_per_second_list, epsS_list,
                            confidence_interval_list,
                            test_round_probability_list,
                            switch_delay: float = 0.0,
                            subtract_consumption_for_test_rounds: bool = False,
                            beta_exponents=DEFAULT_BETA_EXPONENTS,
                            alphabet_size_ab: int | None = None) -> EatSweepResult:
        return calculate_eat_rates(
            self, single_data_chunk_generation_time_list,
            events_per_second_list, epsS_list, confidence_interval_list,
            test_round_probability_list, switch_delay=switch_delay,
            subtract_consumption_for_test_rounds=subtract_consumption_for_test_rounds,
            beta_exponents=beta_exponents, alphabet_size_ab=alphabet_size_ab)


def _fmt_key(a, b, x, y) -> str:
    return f"{a},{b},{x},{y}"


def _parse_key(key) -> tuple:
    if isinstance(key, str):
        return tuple(int(v) for v in key.split(","))
    return tuple(key)


def _fmt_pair(k) -> str:
    k = tuple(k)
    return f"{k[0]},{k[1]}"


def _parse_pair(k):
    if isinstance(k, str):
        parts = k.replace("(", "").replace(")", "").split(",")
        return (int(parts[0]), int(parts[1]))
    return tuple(k)


def _full_statistics_certificates(scenario: Scenario, table: dict):
    """One probability expression per cell, dropping the last cell of each
    pair (implied by normalization, and redundant rows break the dual)."""
    exprs, targets = [], []
    for (x, y) in scenario.setting_pairs():
        na, nb = scenario.a_config[x], scenario.b_config[y]
        for a in range(na):
            for b in range(nb):
                if a == na - 1 and b == nb - 1:
                    continue
                exprs.append(BellExpression(
                    [(1.0, BellAtom("P", a=a, b=b, x=x, y=y))], scenario))
                targets.append(float(table[(x, y)][a, b]))
    return CertificateSet(exprs, targets), [
        (a, b, x, y)
        for (x, y) in scenario.setting_pairs()
        for a in range(scenario.a_config[x])
        for b in range(scenario.b_config[y])
        if not (a == scenario.a_config[x] - 1 and b == scenario.b_config[y] - 1)]


def calculate_min_tradeoff(probability_expression_str_list,
                           probability_expression_val_list,
                           A_config, B_config, spot_setting,
                           relaxation_level: int = 2, m_radau: int = 8,
                           additional_data_dict: dict | None = None,
                           entropy_type_str: str = "min-entropy",
                           use_case_str: str = "Randomness Generation",
                           hab_dict: dict | None = None,
                           setup_nickname: str = "",
                           guess: str = "pair",
                           solver_settings: SolverSettings | None = None,
                           progress=None) -> MinTradeoffInfo:
    """Build the affine entropy tradeoff for the given certificates."""
    if entropy_type_str not in ENTROPY_TYPES:
        raise ValueError(f"entropy type must be one of {ENTROPY_TYPES}")
    if use_case_str not in USE_CASES:
        raise ValueError(f"use case must be one of {USE_CASES}")
    hab_dict = {tuple(k) if not isinstance(k, str) else _parse_pair(k): float(v)
                for k, v in (hab_dict or {}).items()}
    spot = (int(spot_setting[0]), int(spot_setting[1]))
    scenario = Scenario(tuple(A_config), tuple(B_config))
    if not (0 <= spot[0] < scenario.settings_a
            and 0 <= spot[1] < scenario.settings_b):
        raise ValueError(f"spot setting {spot} outside the scenario")
    if use_case_str == "Key Distribution" and spot not in hab_dict:
        raise ValueError(
            f"Key Distribution requires an H(A|B) entry for spot setting {spot}")

    exprs = [parse_expression(s, scenario)
             for s in probability_expression_str_list]
    targets = [float(v) for v in probability_expression_val_list]
    certs = CertificateSet(exprs, targets)

    def report(stage):
        if progress is not None:
            progress(stage)

    # anchor statistics: the guessing adversary's optimal behavior
    report("anchor")
    prob_anchor, mb_anchor = build_min_entropy_problem(
        scenario, relaxation_level, certs, spot, guess)
    sol_anchor = solve(prob_anchor, solver_settings)
    if sol_anchor.status == "infeasible":
        raise InfeasibleTargets(
            "certificate values are outside the relaxation's feasible range")
    if sol_anchor.status == "numerical-failure":
        raise RelaxationError("anchor optimization failed")
    n_blocks = len(prob_anchor.blocks)
    anchor = {}
    for pair in scenario.setting_pairs():
        anchor[pair] = sum(mb_anchor.behavior_table(sol_anchor.y, e)[pair]
                           for e in range(n_blocks))
        # wash out solver noise: clip and renormalize each pair
        anchor[pair] = np.clip(anchor[pair], 0.0, None)
        anchor[pair] = anchor[pair] / anchor[pair].sum()

    full_certs, cell_order = _full_statistics_certificates(scenario, anchor)

    report("tangent-plane")
    solver_info = {"anchor_status": sol_anchor.status,
                   "anchor_gap": sol_anchor.gap}
    if entropy_type_str == "min-entropy":
        h_val, (const, lams), sol_plane = min_entropy(
            scenario, relaxation_level, full_certs, spot, guess,
            settings=solver_settings)
        solver_info["plane_status"] = sol_plane.status
        solver_info["plane_gap"] = sol_plane.gap
        cert_value = h_val
        m_radau_used = 0
    else:
        if m_radau < 2:
            raise ValueError("von Neumann entropy needs m_radau >= 2")
        node_stats = []

        def node_log(i, total, t, sol):
            node_stats.append({"node": i, "t": t, "status": sol.status,
                               "gap": sol.gap, "iterations": sol.iterations})
            report(f"node {i + 1}/{total}")

        cert_value, (const, lams), _ = von_neumann_entropy(
            scenario, relaxation_level, full_certs, spot, m_radau,
            settings=solver_settings, node_log=node_log)
        solver_info["nodes"] = node_stats
        m_radau_used = m_radau

    cell_slopes = {_fmt_key(*cell): float(l)
                   for cell, l in zip(cell_order, lams) if l != 0.0}

    # plane range over the quantum relaxation
    report("range")
    plane_expr = BellExpression(
        [(float(l), BellAtom("P", a=c[0], b=c[1], x=c[2], y=c[3]))
         for c, l in zip(cell_order, lams)], scenario)
    lo, sol_lo, _ = bell_extremum(scenario, relaxation_level, plane_expr, "min")
    hi, sol_hi, _ = bell_extremum(scenario, relaxation_level, plane_expr, "max")
    max_f, min_f = const + hi, const + lo
    solver_info["range_status"] = [sol_lo.status, sol_hi.status]

    hab = hab_dict.get(spot)
    asym = cert_value - hab if use_case_str == "Key Distribution" else cert_value
    return MinTradeoffInfo(
        a_config=list(scenario.a_config), b_config=list(scenario.b_config),
        spot_setting=spot, entropy_type=entropy_type_str, use_case=use_case_str,
        certificate_expressions=[str(e) for e in exprs],
        certificate_values=targets,
        constant=float(const), cell_slopes=cell_slopes,
        certificate_value=float(cert_value), asymptotic_keyrate=float(asym),
        max_f=float(max_f), min_f=float(min_f),
        hab_dict=hab_dict, relaxation_level=relaxation_level,
        m_radau=m_radau_used, guess=guess, setup_nickname=setup_nickname,
        additional_data_dict=dict(additional_data_dict or {}),
        anchor_behavior={_fmt_pair(p): anchor[p].tolist() for p in anchor},
        solver_info=solver_info)


def calculate_eat_rates(info: MinTradeoffInfo,
                        single_data_chunk_generation_time_list,
                        events_per_second_list, epsS_list,
                        confidence_interval_list, test_round_probability_list,
                        switch_delay: float = 0.0,
                        subtract_consumption_for_test_rounds: bool = False,
                        beta_exponents=DEFAULT_BETA_EXPONENTS,
                        alphabet_size_ab: int | None = None) -> EatSweepResult:
    """Sweep the finite-size bound over all parameter combinations."""
    sc = info.scenario
    if alphabet_size_ab is None:
        alphabet_size_ab = sc.a_config[info.spot_setting[0]] * \
            sc.b_config[info.spot_setting[1]]
    result = sweep(
        info.asymptotic_keyrate, info.max_f, info.min_f,
        sc.settings_a, sc.settings_b,
        single_data_chunk_generation_time_list, events_per_second_list,
        epsS_list, confidence_interval_list, test_round_probability_list,
        alphabet_size_ab=alphabet_size_ab, switch_delay=switch_delay,
        subtract_consumption=subtract_consumption_for_test_rounds,
        beta_exponents=beta_exponents)
    result.tradeoff_summary.update({
        "diameter_of_min_tradeoff": info.diameter,
        "pxpy_randomness_consumption_per_round": math.log2(
            sc.settings_a * sc.settings_b),
        "hab": info.hab_at_spot if info.use_case == "Key Distribution" else None,
        "subtract_consumption_for_test_rounds": subtract_consumption_for_test_rounds,
        "min-tradeoff certificate value": info.asymptotic_keyrate,
        "entropy_lower_bound_const_values": info.constant,
        "switch delay": switch_delay,
        "setup_nickname": info.setup_nickname,
    })
    return result
