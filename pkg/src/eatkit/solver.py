"""Self-contained primal-dual interior-point solver for small SDPs.

Problems arrive in linear-matrix-inequality form over free variables y:

    optimize  c . y + c0
    s.t.      F_b(y) = F_b0 + sum_i y_i F_bi  is PSD   for each block b
              E y = d

which is the natural shape of moment relaxations (y are moments).  The
solver runs an infeasible-start HKM predictor-corrector method on the
primal-dual pair and reports equality multipliers, so affine sensitivity
certificates (value bounds as functions of d) fall out of weak duality.

Blocks are dense and small (moment matrices up to ~150x150); variable
patterns are kept as sparse coordinate lists, and the Schur complement is
assembled by vectorized gathers over pattern-entry pairs.  Moment problems
at degenerate optima (certificate values at the boundary of the quantum
set) stall before reaching full tolerance; the solver then returns its best
iterate with an honest "near-optimal" status instead of failing.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

try:  # optional JIT for the Schur-complement kernel (pure-numpy fallback)
    from numba import njit

    @njit(cache=True)
    def _schur_kernel(vi, rr, cc, ww, x, sinv, t_mat):
        k = vi.shape[0]
        for e in range(k):
            ve = vi[e]
            we = ww[e]
            xrow = x[cc[e]]
            srow = sinv[rr[e]]
            te = t_mat[ve]
            for f in range(k):
                te[vi[f]] += we * ww[f] * xrow[rr[f]] * srow[cc[f]]

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised on minimal installs
    HAVE_NUMBA = False

__all__ = ["SdpBlock", "SdpProblem", "SolverSettings", "DualSolution", "solve",
           "problem_to_text", "solution_to_json"]


@dataclass
class SdpBlock:
    """One PSD block: constant part plus sparse variable patterns.

    Entry lists hold the full symmetric pattern (both (r,c) and (c,r) for
    off-diagonal positions).
    """

    n: int
    const: np.ndarray
    var_idx: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def from_entries(cls, n: int, const: np.ndarray | None,
                     entries: list[tuple[int, int, int, float]]) -> "SdpBlock":
        """Build from upper-triangle entries (var, r, c, coeff) with r <= c."""
        vi, rr, cc, ww = [], [], [], []
        for var, r, c, w in entries:
            vi.append(var); rr.append(r); cc.append(c); ww.append(w)
            if r != c:
                vi.append(var); rr.append(c); cc.append(r); ww.append(w)
        if const is None:
            const = np.zeros((n, n))
        return cls(n=n, const=np.asarray(const, dtype=float),
                   var_idx=np.asarray(vi, dtype=np.int64),
                   rows=np.asarray(rr, dtype=np.int64),
                   cols=np.asarray(cc, dtype=np.int64),
                   coeffs=np.asarray(ww, dtype=float))

    def materialize(self, y: np.ndarray) -> np.ndarray:
        m = self.const.copy()
        np.add.at(m, (self.rows, self.cols), self.coeffs * y[self.var_idx])
        return m

    def adjoint(self, x: np.ndarray, num_vars: int) -> np.ndarray:
        """A(X)_i = <F_i, X> accumulated over this block's entries."""
        vals = self.coeffs * x[self.rows, self.cols]
        return np.bincount(self.var_idx, weights=vals, minlength=num_vars)


@dataclass
class SdpProblem:
    """LMI-form SDP; sense applies to the reported objective."""

    num_vars: int
    blocks: list[SdpBlock]
    obj: np.ndarray
    obj_const: float = 0.0
    eq_lhs: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    sense: str = "min"
    eq_labels: list[str] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.obj = np.asarray(self.obj, dtype=float)
        if self.eq_lhs is not None:
            self.eq_lhs = np.atleast_2d(np.asarray(self.eq_lhs, dtype=float))
            self.eq_rhs = np.atleast_1d(np.asarray(self.eq_rhs, dtype=float))
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")

    @property
    def num_eqs(self) -> int:
        return 0 if self.eq_lhs is None else self.eq_lhs.shape[0]


@dataclass
class SolverSettings:
    feas_tol: float = 1e-8
    gap_tol: float = 1e-7
    max_iter: int = 300
    step_fraction: float = 0.98
    infeasibility_threshold: float = 1e8
    schur_chunk: int = 1200
    near_optimal_slack: float = 1e4
    stall_iters: int = 80


@dataclass
class DualSolution:
    """Solver output: objectives, equality multipliers and health metrics.

    ``multipliers`` are oriented so that for any target vector d' the affine
    form ``bound_const + multipliers . d'`` under-estimates the optimum of a
    minimization problem and over-estimates that of a maximization problem
    (weak duality with the returned dual point).
    """

    status: str
    primal_objective: float
    dual_objective: float
    gap: float
    multipliers: np.ndarray
    bound_const: float
    y: np.ndarray
    iterations: int
    solve_time: float
    primal_residual: float
    dual_residual: float
    block_mats: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _sym(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


def _max_step(mat: np.ndarray, delta: np.ndarray) -> float:
    """Largest alpha keeping mat + alpha*delta PSD (mat assumed PD)."""
    try:
        ell = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        w = np.linalg.eigvalsh(mat)
        shift = max(0.0, -float(w[0])) + 1e-14 * max(1.0, float(w[-1]))
        ell = np.linalg.cholesky(mat + shift * np.eye(mat.shape[0]))
    inv_ell = np.linalg.inv(ell)
    sym = inv_ell @ delta @ inv_ell.T
    lam_min = float(np.linalg.eigvalsh(_sym(sym))[0])
    if lam_min >= -1e-14:
        return 1.0
    return min(1.0, -1.0 / lam_min)


def _min_step(mats, deltas) -> float:
    return min(_max_step(m, d) for m, d in zip(mats, deltas))


class _Workspace:
    """Per-solve state: entry lists sorted by variable for segment reductions."""

    def __init__(self, problem: SdpProblem, settings: SolverSettings):
        self.problem = problem
        self.settings = settings
        self.m = problem.num_vars
        self.sorted_entries = []
        for blk in problem.blocks:
            order = np.argsort(blk.var_idx, kind="stable")
            self.sorted_entries.append((
                blk.var_idx[order], blk.rows[order], blk.cols[order],
                blk.coeffs[order]))

    def schur(self, xs, sinvs) -> np.ndarray:
        """H_ij = 1/2 [ sum_b Tr(F_bi X_b F_bj Sinv_b) + (i<->j) ]."""
        m = self.m
        t_mat = np.zeros((m, m))
        chunk = self.settings.schur_chunk
        for (vi, rr, cc, ww), x, sinv in zip(self.sorted_entries, xs, sinvs):
            k_tot = len(vi)
            if k_tot == 0:
                continue
            if HAVE_NUMBA:
                _schur_kernel(vi, rr, cc, ww,
                              np.ascontiguousarray(x),
                              np.ascontiguousarray(sinv), t_mat)
                continue
            x_cols = x[:, rr]          # X[:, r_f]
            sinv_rows = sinv[cc, :]    # Sinv[c_f, :]
            seg_starts = np.flatnonzero(np.r_[1, np.diff(vi)])
            seg_ids = vi[seg_starts]
            weighted = not np.all(ww == 1.0)
            for lo in range(0, k_tot, chunk):
                hi = min(lo + chunk, k_tot)
                ce, re = cc[lo:hi], rr[lo:hi]
                g = x_cols[ce, :] * sinv_rows[:, re].T
                if weighted:
                    g *= ww[lo:hi][:, None]
                    g *= ww[None, :]
                g_cols = np.add.reduceat(g, seg_starts, axis=1)
                local_starts = np.flatnonzero(np.r_[1, np.diff(vi[lo:hi])])
                g_rows = np.add.reduceat(g_cols, local_starts, axis=0)
                np.add.at(t_mat,
                          (vi[lo:hi][local_starts][:, None], seg_ids[None, :]),
                          g_rows)
        return 0.5 * (t_mat + t_mat.T)

    def adjoint(self, xs) -> np.ndarray:
        out = np.zeros(self.m)
        for blk, x in zip(self.problem.blocks, xs):
            out += blk.adjoint(x, self.m)
        return out

    def materialize(self, y) -> list:
        return [blk.materialize(y) for blk in self.problem.blocks]


def solve(problem: SdpProblem, settings: SolverSettings | None = None) -> DualSolution:
    """Run the interior-point method; deterministic for identical inputs."""
    settings = settings or SolverSettings()
    t0 = time.time()
    sense_flip = -1.0 if problem.sense == "max" else 1.0
    c = sense_flip * problem.obj
    m = problem.num_vars
    p = problem.num_eqs
    eq_a = problem.eq_lhs if p else np.zeros((0, m))
    eq_b = problem.eq_rhs if p else np.zeros(0)

    # equality rows scaled to unit norm for a well-conditioned KKT system;
    # multipliers are mapped back before reporting
    row_scale = np.ones(p)
    if p:
        row_scale = np.maximum(np.linalg.norm(problem.eq_lhs, axis=1), 1e-12)
        eq_a = problem.eq_lhs / row_scale[:, None]
        eq_b = problem.eq_rhs / row_scale

    # inconsistent linear equalities: infeasible before any cone work
    if p:
        y_ls, *_ = np.linalg.lstsq(eq_a, eq_b, rcond=None)
        if np.linalg.norm(eq_a @ y_ls - eq_b) > 1e-7 * (1.0 + np.linalg.norm(eq_b)):
            return _finish(problem, "infeasible", np.zeros(m), None, None,
                           np.zeros(p), 0, t0, math.nan, math.nan)
    else:
        y_ls = np.zeros(m)

    ws = _Workspace(problem, settings)
    y = y_ls.copy()
    f_y = ws.materialize(y)
    scale = max([10.0] + [float(np.abs(f).max()) for f in f_y])
    s_mats = [scale * np.eye(b.n) for b in problem.blocks]
    x_mats = [max(10.0, float(np.abs(c).max() + 1.0)) * np.eye(b.n)
              for b in problem.blocks]
    nu = np.zeros(p)
    n_total = sum(b.n for b in problem.blocks)
    c_scale = 1.0 + (float(np.abs(c).max()) if m else 0.0)
    b_scale = 1.0 + (float(np.abs(eq_b).max()) if p else 0.0)

    status = "numerical-failure"
    best = None  # (merit, y, x_mats, s_mats, nu, pinf, dinf, iters)
    iters = 0
    since_best = 0
    for iters in range(1, settings.max_iter + 1):
        f_y = ws.materialize(y)
        resid_lmi = [f - s for f, s in zip(f_y, s_mats)]
        r_p = eq_b - eq_a @ y if p else np.zeros(0)
        r_d = c - ws.adjoint(x_mats) - (eq_a.T @ nu if p else 0.0)
        mu = sum(np.tensordot(x, s) for x, s in zip(x_mats, s_mats)) / n_total

        primal_obj = float(c @ y)
        dual_obj = float(-sum(np.tensordot(b.const, x)
                              for b, x in zip(problem.blocks, x_mats))
                         + (eq_b @ nu if p else 0.0))
        gap = abs(primal_obj - dual_obj) / (1.0 + max(abs(primal_obj),
                                                      abs(dual_obj)))
        pinf = max([float(np.linalg.norm(r_p, np.inf)) if p else 0.0]
                   + [float(np.abs(r).max()) for r in resid_lmi]) / b_scale
        dinf = float(np.linalg.norm(r_d, np.inf)) / c_scale
        if not all(map(math.isfinite, (gap, pinf, dinf, mu))):
            break
        merit = max(gap, pinf, dinf)
        if best is None or merit < 0.995 * best[0]:
            best = (merit, y.copy(), [x.copy() for x in x_mats],
                    [s.copy() for s in s_mats], nu.copy(), pinf, dinf, iters)
            since_best = 0
        else:
            since_best += 1

        if gap <= settings.gap_tol and pinf <= settings.feas_tol and \
                dinf <= settings.feas_tol:
            status = "optimal"
            break
        if abs(dual_obj) > settings.infeasibility_threshold * c_scale and \
                dinf <= 1e-5 and pinf > settings.feas_tol:
            status = "infeasible"
            break
        if since_best >= settings.stall_iters:
            break

        try:
            sinvs = []
            for s in s_mats:
                ell = np.linalg.cholesky(s)
                inv_ell = np.linalg.inv(ell)
                sinvs.append(inv_ell.T @ inv_ell)
            h_mat = ws.schur(x_mats, sinvs)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(h_mat)):
            break

        diag_scale = float(np.abs(np.diag(h_mat)).max()) + 1.0
        jitter = 1e-14 * diag_scale
        h_chol = None
        for _ in range(16):
            try:
                h_chol = np.linalg.cholesky(h_mat + jitter * np.eye(m))
                break
            except np.linalg.LinAlgError:
                jitter *= 30.0
        if h_chol is None:
            break

        def h_solve(rhs):
            out = solve_triangular(
                h_chol.T, solve_triangular(h_chol, rhs, lower=True), lower=False)
            # iterative refinement recovers accuracy when H turns
            # ill-conditioned near degenerate optima
            for _ in range(2):
                r = rhs - h_mat @ out
                out = out + solve_triangular(
                    h_chol.T, solve_triangular(h_chol, r, lower=True), lower=False)
            return out

        ehet = eq_a @ h_solve(eq_a.T) + 1e-14 * np.eye(p) if p else None

        def direction(sigma_mu, corr_sym=None):
            """Newton step; corr_sym holds sym(DX_aff DS_aff Sinv) per block."""
            g = -r_d + sigma_mu * ws.adjoint(sinvs) - ws.adjoint(x_mats)
            extra = [_sym(x @ r @ si) for x, r, si in zip(x_mats, resid_lmi, sinvs)]
            g -= ws.adjoint(extra)
            if corr_sym is not None:
                g -= ws.adjoint(corr_sym)
            if p:
                hg = h_solve(g)
                d_nu = np.linalg.solve(ehet, r_p - eq_a @ hg)
                d_y = hg + h_solve(eq_a.T @ d_nu)
            else:
                d_nu = np.zeros(0)
                d_y = h_solve(g)
            d_s = [r.copy() for r in resid_lmi]
            for blk, ds in zip(problem.blocks, d_s):
                np.add.at(ds, (blk.rows, blk.cols), blk.coeffs * d_y[blk.var_idx])
            d_x = []
            for idx, (x, s_inv, ds) in enumerate(zip(x_mats, sinvs, d_s)):
                base = sigma_mu * s_inv - x - _sym(x @ ds @ s_inv)
                if corr_sym is not None:
                    base -= corr_sym[idx]
                d_x.append(base)
            return d_y, d_nu, d_s, d_x

        frac = settings.step_fraction if max(pinf, dinf) < 1e-5 else \
            min(settings.step_fraction, 0.93)
        d_y_a, d_nu_a, d_s_a, d_x_a = direction(0.0)
        a_p = min(frac * _min_step(s_mats, d_s_a), 1.0)
        a_d = min(frac * _min_step(x_mats, d_x_a), 1.0)
        mu_aff = sum(np.tensordot(x + a_d * dx, s + a_p * ds)
                     for x, dx, s, ds in zip(x_mats, d_x_a, s_mats, d_s_a)) / n_total
        sigma = min(1.0, max(0.0, (mu_aff / mu)) ** 3)
        # centrality must not outrun feasibility: keep mu at the residual scale
        sigma_mu = max(sigma * mu, min(0.5 * mu, 0.3 * max(pinf, dinf)))

        corr_sym = [_sym((dx @ ds) @ si)
                    for dx, ds, si in zip(d_x_a, d_s_a, sinvs)]
        d_y, d_nu, d_s, d_x = direction(sigma_mu, corr_sym=corr_sym)

        a_p = min(frac * _min_step(s_mats, d_s), 1.0)
        a_d = min(frac * _min_step(x_mats, d_x), 1.0)
        if max(a_p, a_d) < 1e-8:
            break
        y = y + a_p * d_y
        s_mats = [s + a_p * ds for s, ds in zip(s_mats, d_s)]
        x_mats = [x + a_d * dx for x, dx in zip(x_mats, d_x)]
        nu = nu + a_d * d_nu

    if status in ("optimal", "infeasible"):
        return _finish(problem, status, y, x_mats, s_mats, nu, iters, t0,
                       pinf, dinf, row_scale)
    # stalled: fall back to the best iterate seen and classify honestly
    if best is None:
        return _finish(problem, "numerical-failure", y, x_mats, s_mats, nu,
                       iters, t0, math.inf, math.inf, row_scale)
    merit, y, x_mats, s_mats, nu, pinf, dinf, _ = best
    slack = settings.near_optimal_slack
    if merit <= slack * max(settings.gap_tol, settings.feas_tol):
        status = "near-optimal"
    else:
        status = "numerical-failure"
    return _finish(problem, status, y, x_mats, s_mats, nu, iters, t0, pinf, dinf,
                   row_scale)


def _finish(problem, status, y, x_mats, s_mats, nu, iters, t0, pinf, dinf,
            row_scale=None):
    sense_flip = -1.0 if problem.sense == "max" else 1.0
    p = problem.num_eqs
    eq_b = problem.eq_rhs if p else np.zeros(0)
    if p and row_scale is not None and nu is not None:
        nu = nu / row_scale
    if x_mats is None:
        nan = math.nan
        return DualSolution(status=status, primal_objective=nan,
                            dual_objective=nan, gap=nan,
                            multipliers=np.full(p, nan), bound_const=nan,
                            y=y, iterations=iters, solve_time=time.time() - t0,
                            primal_residual=pinf, dual_residual=dinf)
    internal_primal = float((sense_flip * problem.obj) @ y)
    internal_dual = float(-sum(np.tensordot(b.const, x)
                               for b, x in zip(problem.blocks, x_mats))
                          + (eq_b @ nu if p else 0.0))
    user_primal = sense_flip * internal_primal + problem.obj_const
    user_dual = sense_flip * internal_dual + problem.obj_const
    mult = sense_flip * nu
    bound_const = user_dual - (float(mult @ eq_b) if p else 0.0) \
        if p else user_dual
    return DualSolution(
        status=status,
        primal_objective=user_primal,
        dual_objective=user_dual,
        gap=abs(user_primal - user_dual),
        multipliers=mult,
        bound_const=bound_const,
        y=y,
        iterations=iters,
        solve_time=time.time() - t0,
        primal_residual=pinf,
        dual_residual=dinf,
        block_mats=[blk.materialize(y) for blk in problem.blocks],
    )


def problem_to_text(problem: SdpProblem) -> str:
    """Documented sparse interchange format (one coefficient triplet per line).

    Header lines: VARS m, SENSE, OBJCONST, OBJ i coeff, EQ row rhs, EQC row i
    coeff, BLOCK b n, CONST b r c v, ENTRY b i r c v (upper triangle).
    """
    lines = [f"VARS {problem.num_vars}", f"SENSE {problem.sense}",
             f"OBJCONST {problem.obj_const!r}"]
    for i, v in enumerate(problem.obj):
        if v != 0.0:
            lines.append(f"OBJ {i} {v!r}")
    for r in range(problem.num_eqs):
        lines.append(f"EQ {r} {problem.eq_rhs[r]!r}")
        for i, v in enumerate(problem.eq_lhs[r]):
            if v != 0.0:
                lines.append(f"EQC {r} {i} {v!r}")
    for b, blk in enumerate(problem.blocks):
        lines.append(f"BLOCK {b} {blk.n}")
        rr, cc = np.nonzero(np.triu(np.abs(blk.const) > 0))
        for r, c_ in zip(rr, cc):
            lines.append(f"CONST {b} {r} {c_} {blk.const[r, c_]!r}")
        for vi, r, c_, w in zip(blk.var_idx, blk.rows, blk.cols, blk.coeffs):
            if r <= c_:
                lines.append(f"ENTRY {b} {vi} {r} {c_} {w!r}")
    return "\n".join(lines) + "\n"


def solution_to_json(sol: DualSolution) -> str:
    return json.dumps({
        "status": sol.status,
        "primal_objective": sol.primal_objective,
        "dual_objective": sol.dual_objective,
        "gap": sol.gap,
        "multipliers": [float(v) for v in sol.multipliers],
        "bound_const": sol.bound_const,
        "iterations": sol.iterations,
        "solve_time": sol.solve_time,
        "primal_residual": sol.primal_residual,
        "dual_residual": sol.dual_residual,
    }, indent=2)
