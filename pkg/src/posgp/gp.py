"""Standard-form geometric programs and a self-contained log-barrier solver.

A problem holds a posynomial objective, posynomial constraints f(v) <= 1,
monomial equalities h(v) = 1 and, for the delay formulations, extended
constraints containing (e^{rho*h} - 1) factors.  ``normalize`` tightens every
inequality by a multiplicative strict-feasibility margin and replaces the
exponential terms by truncated power series, after which the problem is a
plain GP.  ``solve`` runs a phase-I / phase-II barrier method on the convex
log-domain transform; every returned optimum is strictly feasible for the
original strict-inequality problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .posy import (
    Monomial,
    Posynomial,
    VarSpace,
    as_posynomial,
    eval_monomial,
    eval_posynomial,
    log_domain_eval,
)

__all__ = [
    "ExpTerm",
    "ExpConstraint",
    "GpProblem",
    "SolveOptions",
    "SolveStatus",
    "SolveResult",
    "FeasibilityReport",
    "normalize",
    "log_transform",
    "solve",
    "check_feasibility",
]


@dataclass(frozen=True)
class ExpTerm:
    """One term coeff * (exp(rho(v) * h) - 1) * factor(v) with monomial rho, factor."""

    coeff: float
    rho: Monomial
    h: float
    factor: Monomial

    def __post_init__(self):
        if not (self.coeff > 0.0):
            raise ValueError("ExpTerm coefficient must be positive")
        if not (self.h > 0.0):
            raise ValueError("ExpTerm delay h must be positive")

    def series(self, order):
        """Truncated posynomial sum_{l=1..order} coeff * (rho*h)^l / l! * factor."""
        terms = []
        fact = 1.0
        for l in range(1, order + 1):
            fact *= l
            terms.append((self.rho**l) * self.factor * (self.coeff * self.h**l / fact))
        return Posynomial(terms)

    def exact_value(self, point):
        r = eval_monomial(self.rho, point)
        return self.coeff * math.expm1(r * self.h) * eval_monomial(self.factor, point)


@dataclass(frozen=True)
class ExpConstraint:
    """Extended constraint base(v) + sum of exp terms <= 1."""

    base: Posynomial
    terms: tuple

    def __post_init__(self):
        object.__setattr__(self, "base", as_posynomial(self.base))
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.terms:
            raise ValueError("ExpConstraint without exp terms is a plain posynomial")

    def series_posynomial(self, order):
        out = self.base
        for t in self.terms:
            out = out + t.series(order)
        return out

    def exact_value(self, point):
        return eval_posynomial(self.base, point) + sum(
            t.exact_value(point) for t in self.terms
        )

    def variables(self):
        out = self.base.variables()
        for t in self.terms:
            out |= t.rho.variables() | t.factor.variables()
        return out


class GpProblem:
    """minimize f0(v) s.t. f_i(v) <= 1, h_j(v) = 1, v > 0 (plus exp extensions)."""

    __slots__ = ("vars", "objective", "posy_constraints", "mono_equalities", "exp_terms", "normalized")

    def __init__(self, vars, objective, posy_constraints=(), mono_equalities=(), exp_terms=(), normalized=False):
        if not isinstance(vars, VarSpace):
            raise TypeError("vars must be a VarSpace")
        self.vars = vars
        self.objective = as_posynomial(objective)
        self.posy_constraints = tuple(as_posynomial(f) for f in posy_constraints)
        self.mono_equalities = tuple(mono_equalities)
        self.exp_terms = tuple(exp_terms)
        self.normalized = bool(normalized)
        for m in self.mono_equalities:
            if not isinstance(m, Monomial):
                raise TypeError("mono_equalities must contain Monomial")
        for e in self.exp_terms:
            if not isinstance(e, ExpConstraint):
                raise TypeError("exp_terms must contain ExpConstraint")
        if self.normalized and self.exp_terms:
            raise ValueError("a normalized problem cannot carry exp_terms")
        self._check_vars()

    def _check_vars(self):
        used = self.objective.variables()
        for f in self.posy_constraints:
            used |= f.variables()
        for m in self.mono_equalities:
            used |= m.variables()
        for e in self.exp_terms:
            used |= e.variables()
        unknown = sorted(nm for nm in used if nm not in self.vars)
        if unknown:
            raise ValueError(f"expressions reference variables outside the VarSpace: {unknown}")

    @property
    def n_vars(self):
        return len(self.vars)


@dataclass
class SolveOptions:
    """Solver knobs.

    strict_margin is the multiplicative slack used to relax strict
    inequalities (f < 1 becomes f <= 1 - strict_margin).  max_iters caps the
    Newton iterations of a single centering stage; a stage that exhausts it
    is resumed with a fresh budget and gentler t-growth, and only repeated
    exhaustion surfaces as MaxIters.  delay_series_order is the truncation
    order for (e^{rho h} - 1) terms.  var_bound is an internal safety box
    keeping each v_k within [1/var_bound, var_bound] so the barrier stays
    bounded along directions the problem leaves free.
    """

    strict_margin: float = 1e-4
    tol_kkt: float = 1e-8
    max_iters: int = 200
    delay_series_order: int = 20
    barrier_t0: float = 1.0
    barrier_mu: float = 20.0
    barrier_gap: float = 1e-9
    var_bound: float = 1e9

    def __post_init__(self):
        if not (0.0 < self.strict_margin < 0.5):
            raise ValueError("strict_margin must lie in (0, 0.5)")
        if self.tol_kkt <= 0 or self.barrier_gap <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1 or self.delay_series_order < 1:
            raise ValueError("iteration counts must be >= 1")
        if self.barrier_t0 <= 0 or self.barrier_mu <= 1.0:
            raise ValueError("need barrier_t0 > 0 and barrier_mu > 1")
        if self.var_bound <= 1.0:
            raise ValueError("var_bound must exceed 1")


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    MAX_ITERS = "max_iters"
    NUMERIC_FAILURE = "numeric_failure"


@dataclass
class SolveResult:
    status: SolveStatus
    point: dict
    objective_value: float
    constraint_values: list
    kkt_residual: float
    iterations: int
    infeasibility_gap: float | None = None
    message: str = ""
    stage_objectives: list = field(default_factory=list)


@dataclass
class FeasibilityReport:
    posy_values: list
    equality_logs: list
    margin: float
    strictly_feasible: bool


def normalize(p, opts=None):
    """Tighten strict inequalities and expand exponential terms to series.

    Every posynomial constraint f <= 1 becomes f / (1 - strict_margin) <= 1;
    extended exp constraints are replaced by their truncated-series
    posynomials first.  The result is a pure GP flagged as normalized;
    already-normalized problems pass through unchanged.
    """
    if p.normalized:
        return p
    opts = opts or SolveOptions()
    scale = 1.0 / (1.0 - opts.strict_margin)
    cons = [f * scale for f in p.posy_constraints]
    for e in p.exp_terms:
        cons.append(e.series_posynomial(opts.delay_series_order) * scale)
    return GpProblem(
        p.vars,
        p.objective,
        cons,
        p.mono_equalities,
        (),
        normalized=True,
    )


# ---------------------------------------------------------------------------
# compiled log-domain form


class _Compiled:
    """Flat term tables for all pieces (objective first, then constraints)."""

    def __init__(self, vs, pieces, equalities):
        self.vs = vs
        n = len(vs)
        self.n = n
        logc, tptr, tvar, texp, piece_ptr = [], [0], [], [], [0]
        pair_term, pair_i, pair_j, pair_val = [], [], [], []
        t_index = 0
        for f in pieces:
            for mono in f.terms:
                logc.append(math.log(mono.coeff))
                idx = sorted(vs.index(nm) for nm in mono.exponents)
                exps = [mono.exponents[vs.names[i]] for i in idx]
                tvar.extend(idx)
                texp.extend(exps)
                tptr.append(len(tvar))
                for a, ea in zip(idx, exps):
                    for b, eb in zip(idx, exps):
                        pair_term.append(t_index)
                        pair_i.append(a)
                        pair_j.append(b)
                        pair_val.append(ea * eb)
                t_index += 1
            piece_ptr.append(t_index)
        self.P = len(pieces)
        self.logc = np.array(logc, dtype=np.float64)
        self.tptr = np.array(tptr, dtype=np.int64)
        self.tvar = np.array(tvar, dtype=np.int64)
        self.texp = np.array(texp, dtype=np.float64)
        self.piece_ptr = np.array(piece_ptr, dtype=np.int64)
        self.piece_of_term = np.repeat(
            np.arange(self.P, dtype=np.int64), np.diff(self.piece_ptr)
        )
        self.nnz_term = np.repeat(
            np.arange(len(self.logc), dtype=np.int64), np.diff(self.tptr)
        )
        self.pair_term = np.array(pair_term, dtype=np.int64)
        self.pair_i = np.array(pair_i, dtype=np.int64)
        self.pair_j = np.array(pair_j, dtype=np.int64)
        self.pair_val = np.array(pair_val, dtype=np.float64)
        if equalities:
            E = np.zeros((len(equalities), n))
            d = np.zeros(len(equalities))
            for r, m in enumerate(equalities):
                for nm, a in m.exponents.items():
                    E[r, vs.index(nm)] = a
                d[r] = -math.log(m.coeff)
            self.E, self.d = E, d
        else:
            self.E, self.d = None, None

    def eval(self, z):
        """Values of all pieces and softmax term weights at z."""
        return kernels.eval_pieces(
            self.logc, self.tptr, self.tvar, self.texp, self.piece_ptr, self.nnz_term, z
        )

    def grads(self, w):
        return kernels.piece_grads(
            self.tptr, self.tvar, self.texp, self.piece_ptr, self.nnz_term, w, self.n
        )

    def gram(self, w, outer):
        return kernels.weighted_gram(
            self.pair_term, self.pair_i, self.pair_j, self.pair_val,
            self.piece_of_term, w, outer, self.n,
        )


class LogDomainGp:
    """Convex log-domain view of a normalized GP.

    The objective and constraints are F(z) = log f(exp(z)); monomial
    equalities become the affine system E z = d.  Per-piece evaluation
    delegates to the exact softmax formulas of ``posy.log_domain_eval``;
    the solver uses batched kernels over the same term tables.
    """

    def __init__(self, problem):
        if not problem.normalized:
            raise ValueError("log_transform expects a normalized problem")
        self.problem = problem
        self.compiled = _Compiled(
            problem.vars,
            (problem.objective,) + problem.posy_constraints,
            problem.mono_equalities,
        )

    @property
    def n_constraints(self):
        return len(self.problem.posy_constraints)

    def objective_eval(self, z):
        return log_domain_eval(self.problem.objective, self.problem.vars, z)

    def constraint_eval(self, i, z):
        return log_domain_eval(self.problem.posy_constraints[i], self.problem.vars, z)

    def equality_system(self):
        return self.compiled.E, self.compiled.d


def log_transform(p, opts=None):
    """Transform a GP into its convex log-domain form (normalizing first if needed)."""
    if not p.normalized:
        p = normalize(p, opts)
    return LogDomainGp(p)


# ---------------------------------------------------------------------------
# barrier solver


class _Numerics(Exception):
    pass


def _solve_spd(H, g):
    """Newton step -H^{-1} g with escalating ridge on factorization failure."""
    n = H.shape[0]
    ridge = 0.0
    scale = max(np.trace(H) / n, 1.0)
    for _ in range(12):
        try:
            L = np.linalg.cholesky(H + ridge * np.eye(n))
            step = -np.linalg.solve(L.T, np.linalg.solve(L, g))
            if np.all(np.isfinite(step)):
                return step
        except np.linalg.LinAlgError:
            pass
        ridge = scale * 1e-14 if ridge == 0.0 else ridge * 100.0
    raise _Numerics("Newton system could not be factorized")


class _Barrier:
    """Shared state for phase-I / phase-II centering on the reduced variable y."""

    def __init__(self, comp, opts, z_part, basis):
        self.comp = comp
        self.opts = opts
        self.z_part = z_part          # particular solution of the equalities
        self.basis = basis            # nullspace basis (None means identity)
        self.zbound = math.log(opts.var_bound)
        self.newton_iters = 0

    def z_of(self, y):
        if self.basis is None:
            return self.z_part + y
        return self.z_part + self.basis @ y

    def reduce_vec(self, g):
        return g if self.basis is None else self.basis.T @ g

    def reduce_mat(self, H):
        if self.basis is None:
            return H
        return self.basis.T @ H @ self.basis

    def rail_parts(self, z):
        hi = self.zbound - z
        lo = z + self.zbound
        if np.any(hi <= 0) or np.any(lo <= 0):
            return None
        psi = -np.log(hi).sum() - np.log(lo).sum()
        grad = 1.0 / hi - 1.0 / lo
        hdiag = 1.0 / hi**2 + 1.0 / lo**2
        return psi, grad, hdiag

    def center(self, y0, eval_fn):
        """Damped Newton with Armijo backtracking.  eval_fn(y) -> state or None."""
        opts = self.opts
        y = y0
        state = eval_fn(y)
        if state is None:
            raise _Numerics("centering started at an infeasible point")
        stall = 0
        for _ in range(opts.max_iters):
            psi, g, H = state
            step = _solve_spd(H, g)
            decrement = -float(g @ step)
            if not math.isfinite(decrement):
                raise _Numerics("non-finite Newton decrement")
            if decrement / 2.0 <= 1e-11:
                return y, state, True
            alpha = 1.0
            accepted = False
            for _ in range(60):
                cand = y + alpha * step
                cstate = eval_fn(cand)
                if cstate is not None and cstate[0] <= psi - 0.01 * alpha * decrement:
                    y, state = cand, cstate
                    accepted = True
                    break
                alpha *= 0.5
            self.newton_iters += 1
            if not accepted:
                # no step improves psi at machine precision
                return y, state, decrement / 2.0 <= 1e-7
            if psi - state[0] <= 1e-12 * max(1.0, abs(psi)):
                stall += 1
                if stall >= 3:
                    # objective decrease is below float resolution; centered
                    return y, state, True
            else:
                stall = 0
        return y, state, False


def _phase2_eval(bar, t):
    comp = bar.comp

    def eval_fn(y):
        z = bar.z_of(y)
        rails = bar.rail_parts(z)
        if rails is None:
            return None
        vals, w = comp.eval(z)
        if not np.all(np.isfinite(vals)):
            return None
        cons = vals[1:]
        if cons.size and cons.max() >= 0.0:
            return None
        slack = -cons
        sinv = 1.0 / slack
        rail_psi, rail_g, rail_h = rails
        psi = t * vals[0] - np.log(slack).sum() + rail_psi
        G = comp.grads(w)
        outer = np.concatenate(([t], sinv))
        gz = t * G[0] + (G[1:].T @ sinv if cons.size else 0.0) + rail_g
        Hz = comp.gram(w, outer)
        coef = np.concatenate(([-t], sinv**2 - sinv))
        Hz += (G * coef[:, None]).T @ G
        Hz[np.diag_indices_from(Hz)] += rail_h
        return psi, bar.reduce_vec(gz), bar.reduce_mat(Hz)

    return eval_fn


def _phase1_eval(bar, t):
    comp = bar.comp

    def eval_fn(ys):
        y, s = ys[:-1], ys[-1]
        z = bar.z_of(y)
        rails = bar.rail_parts(z)
        if rails is None:
            return None
        vals, w = comp.eval(z)
        if not np.all(np.isfinite(vals)):
            return None
        sigma = s - vals[1:]
        if sigma.size and sigma.min() <= 0.0:
            return None
        rail_psi, rail_g, rail_h = rails
        psi = t * s - np.log(sigma).sum() + rail_psi
        sinv = 1.0 / sigma
        G = comp.grads(w)
        Gc = G[1:]
        gz = Gc.T @ sinv + rail_g
        gs = t - sinv.sum()
        outer = np.concatenate(([0.0], sinv))
        Hz = comp.gram(w, outer)
        coef = sinv**2
        Hz += (Gc * (coef - sinv)[:, None]).T @ Gc
        Hz[np.diag_indices_from(Hz)] += rail_h
        hzs = -(Gc.T @ coef)
        hss = coef.sum()
        gy = bar.reduce_vec(gz)
        Hy = bar.reduce_mat(Hz)
        r = gy.shape[0]
        g = np.concatenate((gy, [gs]))
        H = np.empty((r + 1, r + 1))
        H[:r, :r] = Hy
        H[:r, r] = bar.reduce_vec(hzs)
        H[r, :r] = H[:r, r]
        H[r, r] = hss
        return psi, g, H

    return eval_fn


def _run_phase1(bar):
    """Find a strictly feasible reduced point, or the best infeasibility gap."""
    comp, opts = bar.comp, bar.opts
    r = comp.n if bar.basis is None else bar.basis.shape[1]
    y = np.zeros(r)
    vals, _ = comp.eval(bar.z_of(y))
    cons = vals[1:]
    if cons.size == 0 or cons.max() < -1e-9:
        return y, None
    s = float(cons.max()) + 1.0
    ys = np.concatenate((y, [s]))
    m = cons.size + 2 * comp.n
    t = opts.barrier_t0
    mu = opts.barrier_mu
    retries = 0
    s_best = s
    while True:
        ys, state, converged = bar.center(ys, _phase1_eval(bar, t))
        s_best = float(ys[-1])
        if s_best <= -0.05:
            return ys[:-1], None
        if not converged:
            # hard stage: re-center at the same t, then step more gently
            retries += 1
            if retries > 8:
                break
            mu = max(math.sqrt(mu), 1.5)
            continue
        if m / t <= 1e-10:
            break
        t *= mu
    if s_best < -1e-9:
        return ys[:-1], None
    return None, s_best


def _run_phase2(bar, y, stage_objectives):
    """Follow the central path, shrinking the t-multiplier on hard stages.

    A centering stage that exhausts its Newton budget (long valleys appear
    near degenerate optima under long steps) is resumed at the same t with a
    fresh budget, and subsequent stages grow t more gently; only repeated
    failures surface as MaxIters.
    """
    comp, opts = bar.comp, bar.opts
    m = (comp.P - 1) + 2 * comp.n
    t = opts.barrier_t0
    mu = opts.barrier_mu
    retries = 0
    state = None
    while True:
        y, state, converged = bar.center(y, _phase2_eval(bar, t))
        vals, _ = comp.eval(bar.z_of(y))
        stage_objectives.append(math.exp(vals[0]))
        if not converged:
            retries += 1
            if retries > 8:
                return y, t, state, False
            mu = max(math.sqrt(mu), 1.5)
            continue
        if m / t <= opts.barrier_gap:
            return y, t, state, True
        t *= mu


def _kkt_residual(bar, t, y):
    """Dual-stationarity residual with least-squares-optimal multipliers.

    The centering duals 1/(t * slack) certify the duality gap; the reported
    stationarity residual uses nonnegative least-squares multipliers over all
    constraint and rail gradients, the natural measure of how close the
    point is to satisfying the KKT conditions.
    """
    from scipy.optimize import nnls

    comp = bar.comp
    z = bar.z_of(y)
    vals, w = comp.eval(z)
    G = comp.grads(w)
    g0 = bar.reduce_vec(G[0])
    n = comp.n
    cols = []
    for i in range(1, comp.P):
        cols.append(bar.reduce_vec(G[i]))
    eye = np.eye(n)
    for k in range(n):
        cols.append(bar.reduce_vec(eye[k]))
        cols.append(bar.reduce_vec(-eye[k]))
    if not cols:
        return float(np.max(np.abs(g0))) if g0.size else 0.0
    A = np.column_stack(cols)
    try:
        lam, _res = nnls(A, -g0)
        r = g0 + A @ lam
    except RuntimeError:
        # NNLS iteration cap on very large systems: fall back to the
        # centrality duals, whose residual is the scaled barrier gradient
        slack = -vals[1:]
        hi = bar.zbound - z
        lo = z + bar.zbound
        r_full = G[0] + 1.0 / (t * hi) - 1.0 / (t * lo)
        if slack.size:
            r_full = r_full + G[1:].T @ (1.0 / (t * slack))
        r = bar.reduce_vec(r_full)
    return float(np.max(np.abs(r))) if r.size else 0.0


def solve(p, opts=None):
    """Solve a GP; returns a SolveResult with a strictly feasible optimum.

    The input may be raw (it is normalized internally) or already
    normalized.  The method is deterministic: identical problem and options
    yield identical iterates.
    """
    opts = opts or SolveOptions()
    original = p
    if not p.normalized:
        p = normalize(p, opts)
    if len(p.vars) == 0:
        raise ValueError("problem has no variables")
    comp = _Compiled(p.vars, (p.objective,) + p.posy_constraints, p.mono_equalities)

    stage_objectives = []

    def result(status, z, iters, kkt=math.inf, gap=None, msg=""):
        point = {nm: math.exp(z[i]) for i, nm in enumerate(p.vars.names)}
        return SolveResult(
            status=status,
            point=point,
            objective_value=eval_posynomial(original.objective, point),
            constraint_values=_constraint_values(original, point),
            kkt_residual=kkt,
            iterations=iters,
            infeasibility_gap=gap,
            message=msg,
            stage_objectives=stage_objectives,
        )

    # eliminate monomial equalities by affine substitution in z
    z_part = np.zeros(comp.n)
    basis = None
    if comp.E is not None:
        E, d = comp.E, comp.d
        z_part, *_ = np.linalg.lstsq(E, d, rcond=None)
        if np.max(np.abs(E @ z_part - d)) > 1e-9:
            return result(
                SolveStatus.INFEASIBLE, z_part, 0, gap=float(np.max(np.abs(E @ z_part - d))),
                msg="inconsistent monomial equalities",
            )
        _u, sv, vt = np.linalg.svd(E)
        rank = int(np.sum(sv > 1e-12 * max(sv[0], 1.0)))
        basis = vt[rank:].T
        if basis.shape[1] == 0:
            vals, _ = comp.eval(z_part)
            feasible = vals[1:].size == 0 or vals[1:].max() < 0.0
            status = SolveStatus.OPTIMAL if feasible else SolveStatus.INFEASIBLE
            return result(status, z_part, 0, kkt=0.0 if feasible else math.inf,
                          msg="equalities determine the point")

    bar = _Barrier(comp, opts, z_part, basis)
    try:
        y, gap = _run_phase1(bar)
        if y is None:
            zlast = bar.z_of(np.zeros(comp.n if basis is None else basis.shape[1]))
            return result(SolveStatus.INFEASIBLE, zlast, bar.newton_iters, gap=gap,
                          msg="phase-I optimum above zero")
        y, t, state, converged = _run_phase2(bar, y, stage_objectives)
        z = bar.z_of(y)
        if not converged:
            return result(SolveStatus.MAX_ITERS, z, bar.newton_iters,
                          msg="centering stage exhausted max_iters")
        kkt = _kkt_residual(bar, t, y)
        if kkt > opts.tol_kkt:
            return result(SolveStatus.MAX_ITERS, z, bar.newton_iters, kkt=kkt,
                          msg="KKT residual above tol_kkt")
        return result(SolveStatus.OPTIMAL, z, bar.newton_iters, kkt=kkt)
    except (_Numerics, np.linalg.LinAlgError, FloatingPointError) as exc:
        zlast = bar.z_of(np.zeros(comp.n if basis is None else basis.shape[1]))
        return result(SolveStatus.NUMERIC_FAILURE, zlast, bar.newton_iters, msg=str(exc))


def _constraint_values(p, point):
    vals = [eval_posynomial(f, point) for f in p.posy_constraints]
    vals.extend(e.exact_value(point) for e in p.exp_terms)
    return vals


def check_feasibility(p, point, margin=None, eq_tol=1e-8):
    """Evaluate every constraint of ``p`` at a positive assignment.

    Strict feasibility holds when every posynomial (and exact exponential)
    constraint value is at most 1 - margin and every monomial equality has
    |log h| <= eq_tol.  The default margin is half the default strict margin,
    matching the self-certification contract of ``solve``.
    """
    if margin is None:
        margin = SolveOptions().strict_margin / 2.0
    vals = _constraint_values(p, point)
    eq_logs = [math.log(eval_monomial(m, point)) for m in p.mono_equalities]
    ok = all(v <= 1.0 - margin for v in vals) and all(abs(e) <= eq_tol for e in eq_logs)
    return FeasibilityReport(vals, eq_logs, margin, ok)
