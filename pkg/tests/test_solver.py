import math

import numpy as np
import pytest

from eatkit.solver import (DualSolution, SdpBlock, SdpProblem, SolverSettings,
                           problem_to_text, solution_to_json, solve)


def vech_problem(c_diag, sense="max", traces=(1.0,)):
    """Optimize c . diag(X) over PSD X with trace constraints (2x2)."""
    blk = SdpBlock.from_entries(2, None, [(0, 0, 0, 1.0), (1, 0, 1, 1.0),
                                          (2, 1, 1, 1.0)])
    rows = [[1.0, 0.0, 1.0]] * len(traces)
    return SdpProblem(num_vars=3, blocks=[blk],
                      obj=np.array([c_diag[0], 0.0, c_diag[1]]),
                      eq_lhs=np.array(rows), eq_rhs=np.array(traces),
                      sense=sense)


class TestAnalytic:
    def test_trace_one_maximization(self):
        sol = solve(vech_problem((1.0, 0.0)))
        assert sol.status == "optimal"
        assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)
        assert sol.multipliers[0] == pytest.approx(1.0, abs=1e-6)

    def test_minimization_sense(self):
        sol = solve(vech_problem((1.0, 3.0), sense="min"))
        assert sol.primal_objective == pytest.approx(1.0, abs=1e-6)

    def test_conflicting_traces_infeasible(self):
        sol = solve(vech_problem((1.0, 0.0), traces=(1.0, 2.0)))
        assert sol.status == "infeasible"

    def test_weak_duality_direction(self):
        sol = solve(vech_problem((1.0, -1.0)))
        # for maximization the dual is an upper bound up to the gap
        assert sol.dual_objective >= sol.primal_objective - 1e-6

    def test_multiplier_certificate_tracks_target(self):
        base = solve(vech_problem((2.0, 0.5)))
        shifted = solve(vech_problem((2.0, 0.5), traces=(1.3,)))
        predicted = base.bound_const + base.multipliers[0] * 1.3
        # affine over-estimator of a maximization's value
        assert shifted.primal_objective <= predicted + 1e-6


class TestDeterminism:
    def test_repeated_solves_identical(self):
        prob = vech_problem((1.0, 0.25))
        a, b = solve(prob), solve(prob)
        assert a.primal_objective == b.primal_objective
        assert a.iterations == b.iterations
        assert np.array_equal(a.y, b.y)

    def test_objective_scaling(self):
        base = solve(vech_problem((1.0, 0.25)))
        scaled = solve(vech_problem((3.0, 0.75)))
        assert scaled.primal_objective == pytest.approx(
            3.0 * base.primal_objective, rel=1e-6)
        assert scaled.multipliers[0] == pytest.approx(
            3.0 * base.multipliers[0], rel=1e-5)


class TestResiduals:
    def test_kkt_residuals_reported_small(self):
        sol = solve(vech_problem((1.0, 0.0)))
        assert sol.primal_residual < 1e-7
        assert sol.dual_residual < 1e-6
        assert sol.gap < 1e-6

    def test_iteration_cap_gives_partial_result(self):
        sol = solve(vech_problem((1.0, 0.0)),
                    SolverSettings(max_iter=3, stall_iters=50))
        assert sol.status in ("near-optimal", "numerical-failure")
        assert sol.iterations <= 3
        assert math.isfinite(sol.primal_objective)

    def test_status_optimal_means_tolerances(self):
        st = SolverSettings()
        sol = solve(vech_problem((1.0, 0.0)), st)
        assert sol.status == "optimal"
        assert sol.gap <= st.gap_tol * (
            1 + max(abs(sol.primal_objective), abs(sol.dual_objective))) + 1e-12
        assert sol.primal_residual <= st.feas_tol * 10


class TestLargerBlocks:
    def test_max_eigenvalue_problem(self):
        # max <C, X>, tr X = 1 equals the top eigenvalue of C
        rng = np.random.default_rng(7)
        n = 8
        c_mat = rng.normal(size=(n, n))
        c_mat = 0.5 * (c_mat + c_mat.T)
        entries, obj = [], []
        idx = 0
        var_at = {}
        for i in range(n):
            for j in range(i, n):
                entries.append((idx, i, j, 1.0))
                var_at[(i, j)] = idx
                idx += 1
        obj = np.zeros(idx)
        trace_row = np.zeros(idx)
        for i in range(n):
            for j in range(i, n):
                obj[var_at[(i, j)]] = c_mat[i, j] * (2.0 if i != j else 1.0)
            trace_row[var_at[(i, i)]] = 1.0
        blk = SdpBlock.from_entries(n, None, entries)
        prob = SdpProblem(num_vars=idx, blocks=[blk], obj=obj,
                          eq_lhs=trace_row[None, :], eq_rhs=np.array([1.0]),
                          sense="max")
        sol = solve(prob)
        top = np.linalg.eigvalsh(c_mat)[-1]
        assert sol.primal_objective == pytest.approx(top, abs=1e-6)
        assert sol.multipliers[0] == pytest.approx(top, abs=1e-5)


def test_serialization_formats():
    prob = vech_problem((1.0, 0.0))
    text = problem_to_text(prob)
    assert "VARS 3" in text and "SENSE max" in text
    assert "ENTRY 0 1 0 1 1.0" in text
    sol = solve(prob)
    payload = solution_to_json(sol)
    import json
    parsed = json.loads(payload)
    assert parsed["status"] == "optimal"
    assert parsed["multipliers"] == [pytest.approx(1.0, abs=1e-6)]
