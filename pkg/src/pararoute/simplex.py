"""Bounded-variable simplex on a dense tableau.

Every variable carries finite bounds ``[lower, upper]``; nonbasic variables sit
at one of them. Rows get a slack column (``<=`` rows a non-negative slack,
``>=`` rows a non-positive one, ``=`` rows a slack fixed at zero), and rows whose
slack cannot absorb the starting residual get an artificial column for phase 1.

Primal pricing is Dantzig's largest reduced cost. After ``BLAND_AFTER``
consecutive pivots that leave the objective unchanged, the engine switches to
Bland's smallest-index rule until the objective moves again.

:class:`SimplexWorkspace` keeps the tableau alive between solves so that a
branch-and-bound search can tighten bounds and re-optimise with the dual
simplex from the previous optimal basis.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .milp import MilpModel

log = logging.getLogger(__name__)

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
OPT_TOL = 1e-9
BLAND_AFTER = 1000
REFACTOR_EVERY = 100
DEADLINE_CHECK_EVERY = 10
MAX_ITERATIONS = 200_000

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    senses: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    infeasible: bool = False  # set when bound fixings already conflict

    def __post_init__(self):
        m, n = self.A.shape
        if self.c.shape != (n,) or self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("objective/bounds do not match the column count")
        if self.b.shape != (m,) or self.senses.shape != (m,):
            raise ValueError("right-hand side/senses do not match the row count")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("all variable bounds must be finite")
        if np.any(self.lower > self.upper):
            self.infeasible = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpSolution:
    status: str
    objective: float
    x: np.ndarray
    iterations: int
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    timed_out: bool = False

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass(frozen=True)
class Basis:
    basic: np.ndarray
    at_upper: np.ndarray


def relax(model: MilpModel, fixings: Mapping | None = None) -> LpProblem:
    """LP relaxation of ``model`` with arc bounds tightened by ``fixings``.

    ``fixings`` maps an arc ``(i, j)`` or a flat variable index to ``(lb, ub)``.
    """
    A, senses, b = model.dense
    lower = np.array(model.lower, dtype=float)
    upper = np.array(model.upper, dtype=float)
    for key, (lb, ub) in (fixings or {}).items():
        k = model.arc_index[key] if isinstance(key, tuple) else int(key)
        lower[k] = max(lower[k], lb)
        upper[k] = min(upper[k], ub)
    return LpProblem(np.array(model.objective, dtype=float), A, senses, b, lower, upper)


class SimplexWorkspace:
    """Tableau state for one LP; owned by a single caller at a time."""

    def __init__(self, problem: LpProblem):
        self.problem = problem
        A, b, senses = problem.A, problem.b, problem.senses
        m, n = A.shape
        self.m, self.n = m, n
        slack_lo = np.where(senses == ">=", -np.inf, 0.0)
        slack_hi = np.where(senses == "<=", np.inf, 0.0)

        x_struct = problem.lower.copy()
        resid = b - A @ x_struct
        need_art = (resid < slack_lo - FEAS_TOL) | (resid > slack_hi + FEAS_TOL)
        art_rows = np.nonzero(need_art)[0]
        k = len(art_rows)
        self.n_total = n + m + k
        self.art_start = n + m

        self.lo = np.concatenate([problem.lower, slack_lo, np.zeros(k)])
        self.hi = np.concatenate([problem.upper, slack_hi, np.full(k, np.inf)])
        full = np.zeros((m, self.n_total))
        full[:, :n] = A
        full[:, n : n + m] = np.eye(m)
        self.basis = np.arange(n, n + m)
        self.value = np.concatenate([x_struct, np.zeros(m + k)])
        self.at_upper = np.zeros(self.n_total, dtype=bool)
        for t, r in enumerate(art_rows):
            target = slack_lo[r] if resid[r] < slack_lo[r] else slack_hi[r]
            full[r, n + m + t] = 1.0 if resid[r] - target > 0 else -1.0
            self.basis[r] = n + m + t
            self.value[n + r] = target
            self.at_upper[n + r] = senses[r] == ">="
        self.full = full
        self.rhs = b.astype(float)
        self.is_basic = np.zeros(self.n_total, dtype=bool)
        self.is_basic[self.basis] = True
        self.allowed = np.ones(self.n_total, dtype=bool)

        self.scale = float(np.max(np.abs(problem.c))) if n else 1.0
        if self.scale == 0.0:
            self.scale = 1.0
        self.cost = np.zeros(self.n_total)
        self.cost[:n] = problem.c / self.scale
        self.phase1_done = k == 0
        self.iterations = 0
        self._refactor()

    # -- linear algebra ---------------------------------------------------

    def _refactor(self):
        B = self.full[:, self.basis]
        nonbasic_val = np.where(self.is_basic, 0.0, self.value)
        rhs = self.rhs - self.full @ nonbasic_val
        sol = np.linalg.solve(B, np.column_stack([self.full, rhs]))
        self.T = sol[:, :-1]
        self.value[self.basis] = sol[:, -1]
        self._since_refactor = 0

    def _pivot(self, r: int, j: int, d: np.ndarray) -> np.ndarray:
        old = self.basis[r]
        self.is_basic[old] = False
        self.is_basic[j] = True
        self.at_upper[j] = False
        self.basis[r] = j
        prow = self.T[r] / self.T[r, j]
        colj = self.T[:, j].copy()
        self.T -= np.outer(colj, prow)
        self.T[r] = prow
        d = d - d[j] * prow
        self._since_refactor += 1
        return d

    def _reduced(self, cost: np.ndarray) -> np.ndarray:
        return cost - cost[self.basis] @ self.T

    # -- primal simplex ----------------------------------------------------

    def _primal(self, cost: np.ndarray, budget: int, deadline: float | None) -> str:
        d = self._reduced(cost)
        stall = 0
        bland = False
        while True:
            if self.iterations >= budget:
                return ITERATION_LIMIT
            if deadline is not None and self.iterations % DEADLINE_CHECK_EVERY == 0 and time.monotonic() > deadline:
                return ITERATION_LIMIT

            movable = self.allowed & ~self.is_basic & (self.hi > self.lo)
            gain = np.where(self.at_upper, d, -d)
            eligible = movable & (gain > OPT_TOL)
            if not eligible.any():
                if self._since_refactor:
                    self._refactor()
                    d = self._reduced(cost)
                    continue
                return OPTIMAL
            if bland:
                j = int(np.argmax(eligible))
            else:
                j = int(np.argmax(np.where(eligible, gain, -np.inf)))
            direction = -1.0 if self.at_upper[j] else 1.0

            alpha = direction * self.T[:, j]
            xb = self.value[self.basis]
            lb = self.lo[self.basis]
            ub = self.hi[self.basis]
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            ratio = np.full(self.m, np.inf)
            relaxed = np.full(self.m, np.inf)
            ratio[dec] = (xb[dec] - lb[dec]) / alpha[dec]
            ratio[inc] = (ub[inc] - xb[inc]) / (-alpha[inc])
            # Harris pass: bounds relaxed by the feasibility tolerance
            relaxed[dec] = (xb[dec] - lb[dec] + FEAS_TOL) / alpha[dec]
            relaxed[inc] = (ub[inc] - xb[inc] + FEAS_TOL) / (-alpha[inc])
            ratio = np.maximum(ratio, 0.0)
            span = self.hi[j] - self.lo[j]
            t_max = relaxed.min()
            if span <= ratio.min():
                step, leave = span, -1
            else:
                if not np.isfinite(t_max):
                    raise RuntimeError("unbounded direction in a bounded LP")
                cand = np.nonzero(ratio <= t_max)[0]
                if bland:
                    leave = int(cand[np.argmin(self.basis[cand])])
                else:
                    leave = int(cand[np.argmax(np.abs(alpha[cand]))])
                step = ratio[leave]

            self.iterations += 1
            if abs(d[j]) * step > OPT_TOL * 1e-3:
                stall, bland = 0, False
            else:
                stall += 1
                if stall >= BLAND_AFTER and not bland:
                    log.debug("primal: Bland's rule after %d stalled pivots", stall)
                    bland = True

            self.value[self.basis] = xb - step * alpha
            if leave < 0:
                self.at_upper[j] = not self.at_upper[j]
                self.value[j] = self.hi[j] if self.at_upper[j] else self.lo[j]
                continue
            self.value[j] += direction * step
            old = self.basis[leave]
            hit_lower = alpha[leave] > 0
            d = self._pivot(leave, j, d)
            self.value[old] = self.lo[old] if hit_lower else self.hi[old]
            self.at_upper[old] = not hit_lower
            if self._since_refactor >= REFACTOR_EVERY:
                self._refactor()
                d = self._reduced(cost)

    # -- dual simplex ------------------------------------------------------

    def _dual(self, budget: int, deadline: float | None) -> str:
        """Restore primal feasibility from a dual-feasible basis."""
        cost = self.cost
        d = self._reduced(cost)
        stall = 0
        bland = False
        while True:
            if self.iterations >= budget:
                return ITERATION_LIMIT
            if deadline is not None and self.iterations % DEADLINE_CHECK_EVERY == 0 and time.monotonic() > deadline:
                return ITERATION_LIMIT

            xb = self.value[self.basis]
            below = self.lo[self.basis] - xb
            above = xb - self.hi[self.basis]
            infeas = np.maximum(below, above)
            bad = infeas > FEAS_TOL
            if not bad.any():
                if self._since_refactor:
                    self._refactor()
                    d = self._reduced(cost)
                    xb = self.value[self.basis]
                    infeas = np.maximum(self.lo[self.basis] - xb, xb - self.hi[self.basis])
                    if (infeas > FEAS_TOL).any():
                        continue
                return OPTIMAL
            if bland:
                rows = np.nonzero(bad)[0]
                r = int(rows[np.argmin(self.basis[rows])])
            else:
                r = int(np.argmax(infeas))
            if below[r] > FEAS_TOL:
                target, sgn = self.lo[self.basis[r]], 1.0
            else:
                target, sgn = self.hi[self.basis[r]], -1.0

            alpha_r = self.T[r]
            a = sgn * alpha_r
            movable = self.allowed & ~self.is_basic & (self.hi > self.lo)
            elig = movable & np.where(self.at_upper, a > PIVOT_TOL, a < -PIVOT_TOL)
            if not elig.any():
                if self._since_refactor:
                    self._refactor()
                    d = self._reduced(cost)
                    continue
                return INFEASIBLE
            idx = np.nonzero(elig)[0]
            dj = np.abs(d[idx])
            aj = np.abs(a[idx])
            ratio = dj / aj
            t_max = ((dj + OPT_TOL) / aj).min()
            cand = ratio <= t_max
            if bland:
                j = int(idx[cand][0])
            else:
                j = int(idx[cand][np.argmax(aj[cand])])

            theta = (xb[r] - target) / alpha_r[j]
            self.iterations += 1
            if abs(d[j] * theta) > OPT_TOL * 1e-3:
                stall, bland = 0, False
            else:
                stall += 1
                if stall >= BLAND_AFTER and not bland:
                    log.debug("dual: Bland's rule after %d stalled pivots", stall)
                    bland = True

            self.value[self.basis] = xb - theta * self.T[:, j]
            self.value[j] += theta
            old = self.basis[r]
            d = self._pivot(r, j, d)
            self.value[old] = target
            self.at_upper[old] = sgn < 0
            if self._since_refactor >= REFACTOR_EVERY:
                self._refactor()
                d = self._reduced(cost)

    # -- public API --------------------------------------------------------

    def solve(self, max_iterations: int = MAX_ITERATIONS, deadline: float | None = None) -> LpSolution:
        """Two-phase primal simplex from the current basis."""
        self.iterations = 0
        if np.any(self.lo[: self.n] > self.hi[: self.n]):
            return self._result(INFEASIBLE, deadline)
        if not self.phase1_done:
            cost1 = np.zeros(self.n_total)
            cost1[self.art_start :] = 1.0
            status = self._primal(cost1, max_iterations, deadline)
            if status != OPTIMAL:
                return self._result(status, deadline)
            if self.value[self.art_start :].sum() > FEAS_TOL:
                return self._result(INFEASIBLE, deadline)
            self._drive_out_artificials()
            self.hi[self.art_start :] = 0.0
            self.allowed[self.art_start :] = False
            self.phase1_done = True
        status = self._primal(self.cost, max_iterations, deadline)
        return self._result(status, deadline)

    def reoptimize(self, max_iterations: int = MAX_ITERATIONS, deadline: float | None = None) -> LpSolution:
        """Dual simplex after a bound change, then a primal clean-up pass."""
        if not self.phase1_done:
            return self.solve(max_iterations, deadline)
        self.iterations = 0
        if np.any(self.lo[: self.n] > self.hi[: self.n]):
            return self._result(INFEASIBLE, deadline)
        status = self._dual(max_iterations, deadline)
        if status == OPTIMAL:
            status = self._primal(self.cost, max_iterations, deadline)
        return self._result(status, deadline)

    def set_bounds(self, lower: np.ndarray, upper: np.ndarray) -> None:
        """Replace structural bounds; nonbasic variables move onto their new bound."""
        n = self.n
        self.lo[:n] = lower
        self.hi[:n] = upper
        nb = np.nonzero(~self.is_basic[:n])[0]
        new = np.where(self.at_upper[nb], self.hi[nb], self.lo[nb])
        delta = new - self.value[nb]
        moved = np.nonzero(delta != 0)[0]
        if len(moved):
            cols = nb[moved]
            self.value[self.basis] -= self.T[:, cols] @ delta[moved]
            self.value[cols] = new[moved]

    def snapshot(self) -> Basis:
        return Basis(self.basis.copy(), self.at_upper.copy())

    def restore(self, basis: Basis, lower: np.ndarray, upper: np.ndarray) -> None:
        n = self.n
        self.lo[:n] = lower
        self.hi[:n] = upper
        self.basis = basis.basic.copy()
        self.at_upper = basis.at_upper.copy()
        self.is_basic[:] = False
        self.is_basic[self.basis] = True
        nb = ~self.is_basic
        self.value[nb] = np.where(self.at_upper[nb], self.hi[nb], self.lo[nb])
        self._refactor()

    def _drive_out_artificials(self) -> None:
        d = np.zeros(self.n_total)
        for r in range(self.m):
            if self.basis[r] < self.art_start:
                continue
            row = self.T[r, : self.art_start].copy()
            row[self.is_basic[: self.art_start]] = 0.0
            cand = np.nonzero(np.abs(row) > 1e-7)[0]
            if len(cand) == 0:
                continue  # redundant row; artificial stays basic at zero
            j = int(cand[np.argmax(np.abs(row[cand]))])
            old = self.basis[r]
            d = self._pivot(r, j, d)
            self.value[old] = 0.0
        self._refactor()

    def _result(self, status: str, deadline: float | None) -> LpSolution:
        p = self.problem
        x = self.value[: self.n].copy()
        timed_out = status == ITERATION_LIMIT and deadline is not None and time.monotonic() > deadline
        if status == INFEASIBLE:
            return LpSolution(INFEASIBLE, np.inf, x, self.iterations)
        if status != OPTIMAL:
            return LpSolution(status, float(p.c @ x), x, self.iterations, timed_out=timed_out)
        B = self.full[:, self.basis]
        duals = np.linalg.solve(B.T, self.cost[self.basis]) * self.scale
        reduced = p.c - p.A.T @ duals
        return LpSolution(OPTIMAL, float(p.c @ x), x, self.iterations, duals, reduced)


def solve_lp(
    problem: LpProblem,
    max_iterations: int = MAX_ITERATIONS,
    deadline: float | None = None,
) -> LpSolution:
    """Minimise ``c @ x`` subject to the rows and bounds of ``problem``.

    ``deadline`` is a ``time.monotonic()`` instant; hitting it (or the iteration
    cap) returns status ``iteration-limit`` with ``timed_out`` set accordingly.
    """
    m, n = problem.A.shape
    if problem.infeasible:
        return LpSolution(INFEASIBLE, np.inf, problem.lower.copy(), 0)
    if m == 0:
        x = np.where(problem.c < 0, problem.upper, problem.lower)
        return LpSolution(OPTIMAL, float(problem.c @ x), x, 0, np.zeros(0), problem.c.copy())
    return SimplexWorkspace(problem).solve(max_iterations, deadline)


def primal_residuals(problem: LpProblem, x: np.ndarray) -> np.ndarray:
    """Positive entries are row or bound violations at ``x``."""
    act = problem.A @ x
    s = problem.senses
    rows = np.where(s == "<=", act - problem.b, np.where(s == ">=", problem.b - act, np.abs(act - problem.b)))
    bounds = np.maximum(problem.lower - x, x - problem.upper)
    return np.concatenate([rows, bounds])
