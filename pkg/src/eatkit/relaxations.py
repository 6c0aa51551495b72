"""Semidefinite relaxations for Bell values, guessing probability and entropy.

Three problem families, all built on :class:`~eatkit.moments.MomentBlocks`:

* ``bell_extremum`` — max/min of an affine expression over the level-L
  relaxation of the quantum set (Tsirelson-type bounds).
* ``min_entropy`` — Nieto-Silleras guessing-probability program: one
  subnormalized moment block per adversary guess, constrained so the summed
  behavior reproduces the certificate values.  H_min = -log2 p_guess.
* ``von_neumann_entropy`` — variational lower bound on the conditional
  entropy at the generation setting: a Gauss-Radau node sequence of moment
  problems over auxiliary operators z_ab (one non-Hermitian pair per
  outcome pair), each node minimizing

      sum_ab  <M_a N_b (z_ab + z_ab+ + (1-t) z_ab+ z_ab)> + t <z_ab z_ab+>

  with the node values combined as  sum_i  w_i/(t_i ln 2) * (1 + val_i),
  the final node (t=1) dropped.

Affine min-tradeoff functions come from the equality multipliers of the
duals: weak duality makes ``const + sum_k lambda_k v_k`` a valid bound on
the optimum for *every* constraint vector v, and for min-entropy the
concave -log2 is linearized at the solved point (tangent), preserving the
lower-bound direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .bell import BellExpression, expression_to_coefficient_vector, parse_expression
from .moments import (MomentBlocks, Polynomial, a_letter, b_letter,
                      projector_polynomial, z_letter)
from .quadrature import gauss_radau
from .scenario import Scenario
from .solver import DualSolution, SdpProblem, SolverSettings, solve

__all__ = [
    "RelaxationError",
    "InfeasibleTargets",
    "bell_extremum",
    "build_min_entropy_problem",
    "min_entropy",
    "build_bff_node_problem",
    "von_neumann_entropy",
    "MinTradeoffInfo",
    "calculate_min_tradeoff",
]

LN2 = math.log(2.0)


class RelaxationError(RuntimeError):
    pass


class InfeasibleTargets(RelaxationError):
    """Certificate targets lie outside the relaxation's feasible range."""


def _check(sol: DualSolution, what: str, gap_tol: float = 1e-3) -> DualSolution:
    if sol.status == "infeasible":
        raise InfeasibleTargets(f"{what}: constraint targets are infeasible")
    if sol.status == "numerical-failure":
        raise RelaxationError(f"{what}: solver failed ({sol.status})")
    rel_gap = sol.gap / (1.0 + abs(sol.primal_objective))
    if not math.isfinite(rel_gap) or rel_gap > gap_tol:
        raise RelaxationError(
            f"{what}: duality gap {sol.gap:.2e} above tolerance {gap_tol:.0e}")
    return sol


def _lowered(expr: BellExpression, blocks: MomentBlocks, block: int):
    v, const = expression_to_coefficient_vector(expr)
    return blocks.lower_coefficient_vector(v, block), const


def bell_extremum(scenario: Scenario, level: int, expr: BellExpression,
                  sense: str = "max",
                  settings: SolverSettings | None = None):
    """Extremal value of an expression over the level-L moment relaxation."""
    mb = MomentBlocks(scenario, level)
    vec, const = _lowered(expr, mb, 0)
    m = mb.num_vars
    eq = np.zeros((1, m))
    eq[0, mb.identity_var(0)] = 1.0
    prob = SdpProblem(num_vars=m, blocks=mb.sdp_blocks(),
                      obj=_pad(vec, m), obj_const=const,
                      eq_lhs=eq, eq_rhs=np.array([1.0]), sense=sense,
                      eq_labels=["normalization"])
    sol = _check(solve(prob, settings), f"bell_extremum[{sense}]")
    return sol.primal_objective, sol, mb


def _pad(vec: np.ndarray, m: int) -> np.ndarray:
    if len(vec) == m:
        return vec
    out = np.zeros(m)
    out[: len(vec)] = vec
    return out


@dataclass
class CertificateSet:
    """Expressions with target values; constants folded into the targets."""

    expressions: list[BellExpression]
    targets: list[float]

    def __post_init__(self):
        if len(self.expressions) != len(self.targets):
            raise ValueError("one target per certificate expression")


def build_min_entropy_problem(scenario: Scenario, level: int,
                              certificates: CertificateSet,
                              spot_setting: tuple[int, int],
                              guess: str = "pair") -> tuple[SdpProblem, MomentBlocks]:
    """Guessing-probability SDP (maximization).

    ``guess="pair"`` bounds the adversary's probability of guessing both
    outcomes at the spot setting (one moment block per outcome pair);
    ``guess="alice"`` guesses Alice's outcome only.
    """
    x_star, y_star = spot_setting
    if not (0 <= x_star < scenario.settings_a and 0 <= y_star < scenario.settings_b):
        raise ValueError(f"spot setting {spot_setting} outside scenario")
    if guess == "pair":
        guesses = [(a, b) for a in range(scenario.a_config[x_star])
                   for b in range(scenario.b_config[y_star])]
    elif guess == "alice":
        guesses = [(a, None) for a in range(scenario.a_config[x_star])]
    else:
        raise ValueError(f"guess must be 'pair' or 'alice', got {guess!r}")

    mb = MomentBlocks(scenario, level, num_blocks=len(guesses))
    m = mb.num_vars
    obj = np.zeros(m)
    for e, (ga, gb) in enumerate(guesses):
        poly = projector_polynomial(scenario, 0, x_star, ga)
        if gb is not None:
            poly = poly * projector_polynomial(scenario, 1, y_star, gb)
        obj += _pad(mb.lower_polynomial(poly, e), m)

    rows, rhs, labels = [], [], []
    for k, (expr, target) in enumerate(zip(certificates.expressions,
                                           certificates.targets)):
        row = np.zeros(m)
        const = 0.0
        for e in range(len(guesses)):
            vec, const = _lowered(expr, mb, e)
            row += _pad(vec, m)
        rows.append(row)
        rhs.append(target - const)
        labels.append(f"certificate[{k}]")
    norm_row = np.zeros(m)
    for e in range(len(guesses)):
        norm_row[mb.identity_var(e)] = 1.0
    rows.append(norm_row)
    rhs.append(1.0)
    labels.append("normalization")

    prob = SdpProblem(num_vars=m, blocks=mb.sdp_blocks(), obj=obj,
                      eq_lhs=np.vstack(rows), eq_rhs=np.array(rhs), sense="max",
                      eq_labels=labels,
                      metadata={"kind": "min-entropy", "guess": guess,
                                "spot": list(spot_setting), "level": level})
    return prob, mb


def min_entropy(scenario: Scenario, level: int, certificates: CertificateSet,
                spot_setting: tuple[int, int], guess: str = "pair",
                settings: SolverSettings | None = None):
    """Solve the guessing SDP; returns (h_min_bits, affine tradeoff, solution).

    The tradeoff (const, lambdas) lower-bounds H_min as a function of the
    certificate values: the dual gives an affine over-estimator of p_guess,
    and the tangent of -log2 at the solved point keeps it affine and valid.
    """
    prob, mb = build_min_entropy_problem(scenario, level, certificates,
                                         spot_setting, guess)
    sol = _check(solve(prob, settings), "min_entropy")
    n_cert = len(certificates.expressions)
    # affine over-estimator of p_guess from the dual, as a function of targets
    pg_slopes = sol.multipliers[:n_cert]
    pg_const = sol.bound_const + sol.multipliers[n_cert] * 1.0
    p_hat = pg_const + float(pg_slopes @ np.array(certificates.targets))
    # Degenerate anchors (certificate value at the boundary of the quantum
    # set) leave the dual optimum unattained; the primal value is then the
    # reliable one.  Raising the over-estimator's constant to meet it keeps
    # the affine bound valid everywhere.
    if p_hat < sol.primal_objective:
        pg_const += sol.primal_objective - p_hat
        p_hat = sol.primal_objective
    p_hat = min(max(p_hat, 1e-300), 1.0)
    h_min = -math.log2(p_hat)
    lambdas = [-s / (p_hat * LN2) for s in pg_slopes]
    const = h_min - sum(l * t for l, t in zip(lambdas, certificates.targets))
    return h_min, (const, lambdas), sol


def build_bff_node_problem(scenario: Scenario, level: int,
                           certificates: CertificateSet,
                           spot_setting: tuple[int, int],
                           t_node: float,
                           basis_mode: str = "abz") -> tuple[SdpProblem, MomentBlocks]:
    """Single Gauss-Radau node of the von Neumann entropy relaxation.

    The objective couples measurement words to the auxiliary operators, so
    the basis must contain the level-3 words (A-projector B-projector z);
    without them the relaxation is unbounded below.  ``basis_mode``:

    * "abz": level words plus the A B z / A B z+ monomials, with the pure
      auxiliary-pair words dropped (fast, the default);
    * "abz-full": level words plus A B z monomials (tightest, slowest);
    * "plain": generated level words only (unbounded for pair outputs;
      kept for experiments).
    """
    x_star, y_star = spot_setting
    n_a = scenario.a_config[x_star]
    n_b = scenario.b_config[y_star]
    pairs = [(a, b) for a in range(n_a) for b in range(n_b)]
    extra = tuple(z_letter(k, d) for k in range(len(pairs)) for d in (0, 1))
    abz = []
    if basis_mode in ("abz", "abz-full"):
        for x in range(scenario.settings_a):
            for a in range(scenario.a_config[x] - 1):
                for y in range(scenario.settings_b):
                    for b in range(scenario.b_config[y] - 1):
                        for k in range(len(pairs)):
                            for d in (0, 1):
                                abz.append((a_letter(x, a), b_letter(y, b),
                                            z_letter(k, d)))
    word_filter = None
    if basis_mode == "abz":
        def word_filter(w):
            return sum(1 for l in w if l[0] == 2) < 2
    mb = MomentBlocks(scenario, level, num_blocks=1, extra_generators=extra,
                      extra_words=tuple(abz), word_filter=word_filter)

    objective = Polynomial()
    for k, (a, b) in enumerate(pairs):
        mn = (projector_polynomial(scenario, 0, x_star, a)
              * projector_polynomial(scenario, 1, y_star, b))
        z_word = Polynomial(); z_word.add_word((z_letter(k, 0),), 1.0)
        z_dag = Polynomial(); z_dag.add_word((z_letter(k, 1),), 1.0)
        zdz = Polynomial(); zdz.add_word((z_letter(k, 1), z_letter(k, 0)), 1.0)
        zzd = Polynomial(); zzd.add_word((z_letter(k, 0), z_letter(k, 1)), 1.0)
        inner = z_word + z_dag + zdz.scaled(1.0 - t_node)
        objective = objective + mn * inner + zzd.scaled(t_node)

    m = mb.num_vars
    obj = _pad(mb.lower_polynomial(objective, 0), m)
    rows, rhs, labels = [], [], []
    for k, (expr, target) in enumerate(zip(certificates.expressions,
                                           certificates.targets)):
        vec, const = _lowered(expr, mb, 0)
        rows.append(_pad(vec, m))
        rhs.append(target - const)
        labels.append(f"certificate[{k}]")
    idrow = np.zeros(m)
    idrow[mb.identity_var(0)] = 1.0
    rows.append(idrow)
    rhs.append(1.0)
    labels.append("normalization")
    prob = SdpProblem(num_vars=m, blocks=mb.sdp_blocks(), obj=obj,
                      eq_lhs=np.vstack(rows), eq_rhs=np.array(rhs), sense="min",
                      eq_labels=labels,
                      metadata={"kind": "bff-node", "t": t_node, "level": level,
                                "spot": list(spot_setting)})
    return prob, mb


def von_neumann_entropy(scenario: Scenario, level: int,
                        certificates: CertificateSet,
                        spot_setting: tuple[int, int], m_radau: int,
                        settings: SolverSettings | None = None,
                        node_log=None, basis_mode: str = "abz"):
    """BFF lower bound on H(AB|E) at the spot setting, plus affine tradeoff.

    Returns (entropy_bits, (const, lambdas), per_node_solutions).
    """
    if m_radau < 2:
        raise ValueError("m_radau must be at least 2")
    rule = gauss_radau(m_radau)
    n_cert = len(certificates.expressions)
    targets = np.array(certificates.targets)
    total = 0.0
    const_total = 0.0
    lambdas_total = np.zeros(n_cert)
    node_solutions = []
    if settings is None:
        settings = SolverSettings(gap_tol=1e-6, feas_tol=1e-8, max_iter=100,
                                  stall_iters=25)
    for i in range(rule.m - 1):  # final node dropped
        t_i, w_i = rule.nodes[i], rule.weights[i]
        c_i = w_i / (t_i * LN2)
        prob, _ = build_bff_node_problem(scenario, level, certificates,
                                         spot_setting, t_i,
                                         basis_mode=basis_mode)
        # near-extremal anchors keep strict complementarity out of reach, so
        # nodes may stall at modest gaps; the dual value stays a sound lower
        # bound, the gap only costs tightness (it is recorded per node).
        sol = _check(solve(prob, settings), f"von_neumann node {i}",
                     gap_tol=max(settings.gap_tol * 50, 8e-3))
        node_solutions.append(sol)
        if node_log is not None:
            node_log(i, rule.m - 1, t_i, sol)
        val_const = sol.bound_const + sol.multipliers[n_cert] * 1.0
        val_slopes = sol.multipliers[:n_cert]
        total += c_i * (1.0 + sol.dual_objective)
        const_total += c_i * (1.0 + val_const)
        lambdas_total += c_i * val_slopes
    # affine consistency: f(targets) equals the summed dual values
    f_at_targets = const_total + float(lambdas_total @ targets)
    assert abs(f_at_targets - total) < 1e-6 * max(1.0, abs(total)) + 1e-8
    return total, (const_total, list(lambdas_total)), node_solutions
