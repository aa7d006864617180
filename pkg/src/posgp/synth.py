"""GP builders for norm- and robustness-constrained parameter synthesis.

Each builder wires a parametrized positive system, a cost and a parameter
constraint set into one geometric program whose feasibility certifies the
requested bound:

* ``build_h2_gp``       -- impulse-response energy below gamma2
* ``build_hinf_gp``     -- L2-induced gain below gamma_inf
* ``build_mixed_gp``    -- a monotone tradeoff of both norms below gamma
* ``build_hankel_gp``   -- largest Hankel singular value below gamma
* ``build_schatten_gp`` -- Schatten p-norm (even p) below gamma
* ``build_robust_gp``   -- worst-case abscissa under structured nonnegative
                           uncertainty below -gamma
* ``build_robust_epsmax`` -- maximize the admissible uncertainty size
* ``build_delay_gp``    -- joint decay-rate / L1-gain / Linf-gain tradeoff
                           for delay systems

Auxiliary certificate variables are prefixed with an underscore so they can
never collide with user parameter names; all are initialized at one by the
solver.  Rows of matrix constraints that are structurally zero are dropped
(a posynomial cannot be zero, and an all-zero row is trivially satisfied).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .gp import ExpConstraint, ExpTerm, GpProblem, SolveOptions, SolveStatus, solve
from .posy import (
    Monomial,
    Posynomial,
    PosyMatrix,
    as_posynomial,
    bar_factors,
    build_h2_vectors,
    kron_sum_padded,
    kron_sum_symbolic,
)

__all__ = [
    "CostSpec",
    "ThetaSet",
    "TradeoffFn",
    "UncertaintyStructure",
    "build_h2_gp",
    "build_hinf_gp",
    "build_mixed_gp",
    "build_hankel_gp",
    "build_schatten_gp",
    "build_robust_gp",
    "build_robust_epsmax",
    "build_delay_gp",
    "minimize_gamma",
    "MinimizeGammaResult",
    "GAMMA_VAR",
]

GAMMA_VAR = "_gamma"


@dataclass(frozen=True)
class CostSpec:
    """Cost L(theta) = Ltilde(theta) - L0 with posynomial Ltilde."""

    Ltilde: Posynomial
    L0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "Ltilde", as_posynomial(self.Ltilde))
        if not math.isfinite(self.L0):
            raise ValueError("L0 must be finite")

    def cost_value(self, point):
        return self.Ltilde(point) - self.L0


@dataclass(frozen=True)
class ThetaSet:
    """Admissible parameter set {theta > 0 : f_i(theta) <= 1}."""

    constraints: tuple = ()

    def __post_init__(self):
        object.__setattr__(
            self, "constraints", tuple(as_posynomial(f) for f in self.constraints)
        )

    def __iter__(self):
        return iter(self.constraints)


@dataclass(frozen=True)
class TradeoffFn:
    """Posynomial tradeoff with structural monotonicity tags.

    A variable tagged nondecreasing may only carry nonnegative exponents and
    one tagged nonincreasing only nonpositive ones; this is checked term by
    term, which is exactly the condition under which the tradeoff bound
    transfers to the certified quantities.
    """

    expr: Posynomial
    nondecreasing: tuple = ()
    nonincreasing: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "expr", as_posynomial(self.expr))
        object.__setattr__(self, "nondecreasing", tuple(self.nondecreasing))
        object.__setattr__(self, "nonincreasing", tuple(self.nonincreasing))
        tagged = set(self.nondecreasing) | set(self.nonincreasing)
        untagged = self.expr.variables() - tagged
        if untagged:
            raise ValueError(f"tradeoff variables without monotonicity tag: {sorted(untagged)}")
        for term in self.expr.terms:
            for name, a in term.exponents.items():
                if name in self.nondecreasing and a < 0:
                    raise ValueError(f"{name!r} tagged nondecreasing but has exponent {a}")
                if name in self.nonincreasing and a > 0:
                    raise ValueError(f"{name!r} tagged nonincreasing but has exponent {a}")

    def substituted(self, mapping):
        """Expression with variables renamed via ``mapping`` (name -> name)."""
        terms = []
        for t in self.expr.terms:
            exps = {mapping.get(nm, nm): a for nm, a in t.exponents.items()}
            terms.append(Monomial(t.coeff, exps))
        return Posynomial(terms)


@dataclass(frozen=True)
class UncertaintyStructure:
    """Block pattern of the nonnegative structured uncertainty.

    full_blocks lists the orders of the full nonnegative blocks; scalar_blocks
    counts trailing scalar perturbations.  eps bounds the spectral norm of
    each block (None when the size itself is the decision variable).
    """

    full_blocks: tuple = ()
    scalar_blocks: int = 0
    eps: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "full_blocks", tuple(int(b) for b in self.full_blocks))
        if any(b < 1 for b in self.full_blocks) or self.scalar_blocks < 0:
            raise ValueError("invalid uncertainty block structure")
        if self.m == 0:
            raise ValueError("uncertainty structure covers no channels")
        if self.eps is not None and self.eps < 0:
            raise ValueError("eps must be nonnegative")

    @property
    def m(self):
        return sum(self.full_blocks) + self.scalar_blocks

    @property
    def n_blocks(self):
        return len(self.full_blocks) + self.scalar_blocks

    def block_sizes(self):
        return list(self.full_blocks) + [1] * self.scalar_blocks

    def block_of_channel(self):
        out = []
        for k, sz in enumerate(self.block_sizes()):
            out.extend([k] * sz)
        return out


# ---------------------------------------------------------------------------
# shared assembly helpers


def _names(prefix, count):
    return [f"{prefix}{i}" for i in range(count)]


def _matvec_rows(M, names):
    """Rows of M @ diag-vector-of-variables as posynomials (absent rows omitted)."""
    rows = {}
    for (i, j), f in M.entries.items():
        term = f * Monomial.var(names[j])
        rows[i] = term if i not in rows else rows[i] + term
    return rows


def _add_column(rows, col, col_index=0):
    """Accumulate a column PosyMatrix into a row->posynomial dict."""
    out = dict(rows)
    for (i, j), f in col.entries.items():
        if j != col_index:
            continue
        out[i] = f if i not in out else out[i] + f
    return out


def _scaled_rows(rows, n_rows, scale_of_row):
    """Constraints rows[i] * scale_of_row(i) <= 1, skipping structural zeros."""
    cons = []
    for i in range(n_rows):
        f = rows.get(i)
        if f is not None:
            cons.append(f * scale_of_row(i))
    return cons


def _gamma_mono(gamma, extra_names):
    """Monomial for a gamma bound; None turns it into the decision variable."""
    if gamma is None:
        extra_names.append(GAMMA_VAR)
        return Monomial.var(GAMMA_VAR)
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return Monomial.const(gamma)


def _require_r0(ps, what):
    if not ps.has_r0_factorization:
        raise ValueError(f"{what} requires the R(theta) = r(theta) * R0 factorization")


def _theta_constraints(theta):
    return list(theta)


# ---------------------------------------------------------------------------
# builders


def build_h2_gp(ps, cost, theta, gamma):
    """GP certifying impulse-response energy below gamma.

    Decision variables are theta plus one positive certificate vector of
    length nx^2 coupling the Kronecker-sum inequality to the output energy
    form.  gamma=None makes the bound itself a decision variable.
    """
    _require_r0(ps, "the energy-norm builder")
    nx = ps.nx
    w = _names("_w", nx * nx)
    extra = list(w)
    g2 = _gamma_mono(gamma, extra)
    vs = ps.vars.extended(extra)

    ksum = kron_sum_symbolic(ps.Atilde)
    btil, ctil = build_h2_vectors(ps.B, ps.C)

    cons = []
    energy = None
    for (_, j), f in ctil.entries.items():
        term = f * Monomial.var(w[j])
        energy = term if energy is None else energy + term
    if energy is not None:
        cons.append(energy * (g2**-2.0))

    rows = _add_column(_matvec_rows(ksum, w), btil)
    r0sum = ps.R0[:, None] + ps.R0[None, :]
    rinv = ps.r.reciprocal()

    def scale(i):
        return Monomial.var(w[i], -1.0) * rinv * (1.0 / r0sum[i // nx, i % nx])

    cons.extend(_scaled_rows(rows, nx * nx, scale))
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, cost.Ltilde, cons)


def _hinf_block(ps, gamma_mono, u, v, xi, zeta):
    """The four gain/stability inequalities shared by the H-infinity forms."""
    nx = ps.nx
    cons = []
    ginv = gamma_mono**-1.0
    rows = _matvec_rows(ps.C, xi)
    cons.extend(_scaled_rows(rows, ps.ny, lambda i: Monomial.var(v[i], -1.0) * ginv))
    rows = _add_column(_matvec_rows(ps.Atilde, xi), _matvec_rows_as_col(ps.B, u))
    cons.extend(_scaled_rows(rows, nx, lambda i: Monomial.var(xi[i], -1.0) * ps.R.diagonals[i].reciprocal()))
    rows = _matvec_rows(ps.B.transpose(), zeta)
    cons.extend(_scaled_rows(rows, ps.nw, lambda j: Monomial.var(u[j], -1.0) * ginv))
    rows = _add_column(_matvec_rows(ps.Atilde.transpose(), zeta), _matvec_rows_as_col(ps.C.transpose(), v))
    cons.extend(_scaled_rows(rows, nx, lambda i: Monomial.var(zeta[i], -1.0) * ps.R.diagonals[i].reciprocal()))
    return cons


def _matvec_rows_as_col(M, names):
    """M @ vector-of-variables as a column PosyMatrix (for _add_column)."""
    col = PosyMatrix(M.rows, 1)
    for (i, j), f in M.entries.items():
        col.add_at(i, 0, f * Monomial.var(names[j]))
    return col


def build_hinf_gp(ps, cost, theta, gamma):
    """GP certifying the L2-induced gain below gamma_inf.

    Uses the static-gain characterization of the norm for positive systems:
    two resolvent certificates (state and adjoint) plus scaled input/output
    vectors.  Works with any monomial-diagonal damping R(theta).
    """
    nx = ps.nx
    u = _names("_u", ps.nw)
    v = _names("_v", ps.ny)
    xi = _names("_xi", nx)
    zeta = _names("_zeta", nx)
    extra = u + v + xi + zeta
    gm = _gamma_mono(gamma, extra)
    vs = ps.vars.extended(extra)
    cons = _hinf_block(ps, gm, u, v, xi, zeta)
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, cost.Ltilde, cons)


def build_mixed_gp(ps, cost, theta, alpha, gamma):
    """GP bounding a monotone tradeoff of the energy and induced-gain norms.

    alpha is a TradeoffFn over the names 'g2' and 'ginf', both of which must
    be tagged nondecreasing; the two norm bounds become decision variables
    tied together by gamma^{-1} alpha(g2, ginf) <= 1.
    """
    _require_r0(ps, "the mixed-norm builder")
    used = alpha.expr.variables()
    if not used <= {"g2", "ginf"}:
        raise ValueError("mixed tradeoff must be over the variables 'g2' and 'ginf'")
    bad = used & set(alpha.nonincreasing)
    if bad or not used <= set(alpha.nondecreasing):
        raise ValueError("mixed tradeoff must be nondecreasing in both norms")

    nx = ps.nx
    w = _names("_w", nx * nx)
    u = _names("_u", ps.nw)
    v = _names("_v", ps.ny)
    xi = _names("_xi", nx)
    zeta = _names("_zeta", nx)
    extra = w + u + v + xi + zeta + ["_g2", "_ginf"]
    gm = _gamma_mono(gamma, extra)
    vs = ps.vars.extended(extra)

    cons = [alpha.substituted({"g2": "_g2", "ginf": "_ginf"}) * (gm**-1.0)]

    g2m = Monomial.var("_g2")
    ksum = kron_sum_symbolic(ps.Atilde)
    btil, ctil = build_h2_vectors(ps.B, ps.C)
    energy = None
    for (_, j), f in ctil.entries.items():
        term = f * Monomial.var(w[j])
        energy = term if energy is None else energy + term
    if energy is not None:
        cons.append(energy * (g2m**-2.0))
    rows = _add_column(_matvec_rows(ksum, w), btil)
    r0sum = ps.R0[:, None] + ps.R0[None, :]
    rinv = ps.r.reciprocal()
    cons.extend(
        _scaled_rows(
            rows, nx * nx,
            lambda i: Monomial.var(w[i], -1.0) * rinv * (1.0 / r0sum[i // nx, i % nx]),
        )
    )
    cons.extend(_hinf_block(ps, Monomial.var("_ginf"), u, v, xi, zeta))
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, cost.Ltilde, cons)


def _grammian_chain_matrices(ps):
    """Symbolic pieces shared by the Hankel and Schatten builders."""
    b1, b2 = bar_factors(ps.B)
    c1, c2 = bar_factors(ps.C.transpose())
    at = ps.Atilde.transpose()
    mc = kron_sum_padded(ps.Atilde, ps.nw, at)          # controllability space
    mo = kron_sum_padded(at, ps.ny, ps.Atilde)          # observability space
    return b1, b2, c1, c2, mc, mo


def _padded_r0_sum(R0, mid):
    """Diagonal of R0 (+) O_mid (+) R0 as a flat vector."""
    nx = len(R0)
    out = []
    for i in range(nx):
        for _ in range(mid):
            for k in range(nx):
                out.append(R0[i] + R0[k])
    return out


def build_hankel_gp(ps, cost, theta, gamma):
    """GP certifying the largest Hankel singular value below gamma.

    Chains two padded-Kronecker resolvent certificates (one per Grammian)
    through the bar-factor couplings; the zero middle blocks of the padded
    sums contribute nothing and are never materialized.
    """
    _require_r0(ps, "the Hankel-norm builder")
    nx, nw, ny = ps.nx, ps.nw, ps.ny
    v = _names("_v", nx)
    w1 = _names("_w1_", nx * nx * nw)
    w2 = _names("_w2_", nx * nx * ny)
    extra = v + w1 + w2
    gm = _gamma_mono(gamma, extra)
    vs = ps.vars.extended(extra)

    b1, b2, c1, c2, mc, mo = _grammian_chain_matrices(ps)
    rinv = ps.r.reciprocal()
    rc = _padded_r0_sum(ps.R0, nw)
    ro = _padded_r0_sum(ps.R0, ny)

    cons = []
    g2inv = gm**-2.0
    rows = _matvec_rows(b1, w1)
    cons.extend(_scaled_rows(rows, nx, lambda i: Monomial.var(v[i], -1.0) * g2inv))

    rows = _add_column(_matvec_rows(mc, w1), _matvec_rows_as_col(b2 @ c1, w2))
    cons.extend(
        _scaled_rows(rows, nx * nx * nw, lambda i: Monomial.var(w1[i], -1.0) * rinv * (1.0 / rc[i]))
    )

    rows = _add_column(_matvec_rows(mo, w2), _matvec_rows_as_col(c2, v))
    cons.extend(
        _scaled_rows(rows, nx * nx * ny, lambda i: Monomial.var(w2[i], -1.0) * rinv * (1.0 / ro[i]))
    )
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, cost.Ltilde, cons)


def build_schatten_gp(ps, cost, theta, p, gamma):
    """GP certifying the Schatten p-norm below gamma for an even order p.

    One certificate chain of length p per state bounds the corresponding
    diagonal entry of the Grammian-product power; their sum is tied to
    gamma^p.  Odd chain links live in the observability Kronecker space and
    even links in the controllability space.
    """
    if p < 2 or p % 2 != 0:
        raise ValueError(f"Schatten order must be an even integer >= 2, got {p}")
    _require_r0(ps, "the Schatten-norm builder")
    nx, nw, ny = ps.nx, ps.nw, ps.ny
    dim_o = nx * nx * ny
    dim_c = nx * nx * nw
    gi = _names("_gi", nx)
    chains = []
    extra = list(gi)
    for i in range(nx):
        links = []
        for k in range(1, p + 1):
            dim = dim_o if k % 2 == 1 else dim_c
            nm = _names(f"_om{i}_{k}_", dim)
            links.append(nm)
            extra.extend(nm)
        chains.append(links)
    gm = _gamma_mono(gamma, extra)
    vs = ps.vars.extended(extra)

    b1, b2, c1, c2, mc, mo = _grammian_chain_matrices(ps)
    c2b1 = c2 @ b1
    b2c1 = b2 @ c1
    rinv = ps.r.reciprocal()
    rc = _padded_r0_sum(ps.R0, nw)
    ro = _padded_r0_sum(ps.R0, ny)

    cons = []
    total = Posynomial([Monomial.var(g) for g in gi]) * (gm ** float(-p))
    cons.append(total)

    for i in range(nx):
        links = chains[i]
        gi_inv = Monomial.var(gi[i], -1.0)
        head = None
        for (r, j), f in c1.entries.items():
            if r != i:
                continue
            term = f * Monomial.var(links[0][j])
            head = term if head is None else head + term
        if head is not None:
            cons.append(head * gi_inv)
        for k in range(1, p + 1):
            odd = k % 2 == 1
            names_k = links[k - 1]
            if odd:
                rows = _matvec_rows(mo, names_k)
                rows = _add_column(rows, _matvec_rows_as_col(c2b1, links[k]))
                rsum = ro
            else:
                rows = _matvec_rows(mc, names_k)
                if k < p:
                    rows = _add_column(rows, _matvec_rows_as_col(b2c1, links[k]))
                else:
                    tail = PosyMatrix(dim_c, 1)
                    for (rr, j), f in b2.entries.items():
                        if j == i:
                            tail.add_at(rr, 0, f)
                    rows = _add_column(rows, tail)
                rsum = rc
            dim = dim_o if odd else dim_c
            cons.extend(
                _scaled_rows(
                    rows, dim,
                    lambda r_, nk=names_k, rs=rsum: Monomial.var(nk[r_], -1.0) * rinv * (1.0 / rs[r_]),
                )
            )
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, cost.Ltilde, cons)


def _robust_block(ps, U, sqrt_eps, gamma_term, pi_names, u, v, xi, zeta):
    """Scaled small-gain inequalities for structured nonnegative uncertainty."""
    nx, m = ps.nx, U.m
    blk = U.block_of_channel()
    cons = []

    def pi_pow(ch, power):
        return Monomial.var(pi_names[blk[ch]], power)

    rows = _matvec_rows(ps.C, xi)
    for i in range(m):
        f = rows.get(i)
        if f is not None and sqrt_eps is not None:
            cons.append(f * sqrt_eps * pi_pow(i, 0.5) * Monomial.var(v[i], -1.0))

    for i in range(nx):
        acc = None
        for (r, j), f in ps.Atilde.entries.items():
            if r == i:
                term = f * Monomial.var(xi[j])
                acc = term if acc is None else acc + term
        if gamma_term is not None:
            term = gamma_term * Monomial.var(xi[i])
            acc = term if acc is None else acc + term
        if sqrt_eps is not None:
            for (r, j), f in ps.B.entries.items():
                if r == i:
                    term = f * sqrt_eps * pi_pow(j, -0.5) * Monomial.var(u[j])
                    acc = term if acc is None else acc + term
        if acc is not None:
            cons.append(acc * Monomial.var(xi[i], -1.0) * ps.R.diagonals[i].reciprocal())

    bt = ps.B.transpose()
    rows = _matvec_rows(bt, zeta)
    for j in range(m):
        f = rows.get(j)
        if f is not None and sqrt_eps is not None:
            cons.append(f * sqrt_eps * pi_pow(j, -0.5) * Monomial.var(u[j], -1.0))

    ct = ps.C.transpose()
    at_t = ps.Atilde.transpose()
    for i in range(nx):
        acc = None
        for (r, j), f in at_t.entries.items():
            if r == i:
                term = f * Monomial.var(zeta[j])
                acc = term if acc is None else acc + term
        if gamma_term is not None:
            term = gamma_term * Monomial.var(zeta[i])
            acc = term if acc is None else acc + term
        if sqrt_eps is not None:
            for (r, j), f in ct.entries.items():
                if r == i:
                    term = f * sqrt_eps * pi_pow(j, 0.5) * Monomial.var(v[j])
                    acc = term if acc is None else acc + term
        if acc is not None:
            cons.append(acc * Monomial.var(zeta[i], -1.0) * ps.R.diagonals[i].reciprocal())
    return cons


def _check_robust_dims(ps, U):
    if ps.nw != U.m or ps.ny != U.m:
        raise ValueError(
            f"uncertainty covers {U.m} channels but the system has n_w={ps.nw}, n_y={ps.ny}"
        )


def build_robust_gp(ps, cost, theta, U, gamma):
    """GP certifying worst-case abscissa below -gamma under structured uncertainty.

    Positive block scalings (one variable per block, repeated over full
    blocks) conjugate the loop gain; eps enters only through its square root
    so the uncertainty size can later become a decision variable.  eps = 0
    degenerates to the plain decay-rate condition.
    """
    _check_robust_dims(ps, U)
    if U.eps is None:
        raise ValueError("UncertaintyStructure.eps is required (use build_robust_epsmax otherwise)")
    if gamma is not None and float(gamma) < 0:
        raise ValueError("gamma must be nonnegative")
    nx, m = ps.nx, U.m
    pi_names = _names("_pi", U.n_blocks)
    u = _names("_u", m)
    v = _names("_v", m)
    xi = _names("_xi", nx)
    zeta = _names("_zeta", nx)
    extra = pi_names + u + v + xi + zeta
    if gamma is None:
        extra.append(GAMMA_VAR)
        gamma_term = Monomial.var(GAMMA_VAR)
    elif float(gamma) == 0.0:
        gamma_term = None
    else:
        gamma_term = Monomial.const(float(gamma))
    vs = ps.vars.extended(extra)
    sqrt_eps = None if U.eps == 0.0 else Monomial.const(math.sqrt(U.eps))
    cons = _robust_block(ps, U, sqrt_eps, gamma_term, pi_names, u, v, xi, zeta)
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, cost.Ltilde, cons)


def build_robust_epsmax(ps, theta, U, gamma):
    """GP maximizing the admissible uncertainty size (objective 1/eps)."""
    _check_robust_dims(ps, U)
    if gamma is None or float(gamma) < 0:
        raise ValueError("epsmax needs a fixed nonnegative gamma")
    nx, m = ps.nx, U.m
    pi_names = _names("_pi", U.n_blocks)
    u = _names("_u", m)
    v = _names("_v", m)
    xi = _names("_xi", nx)
    zeta = _names("_zeta", nx)
    extra = pi_names + u + v + xi + zeta + ["_eps"]
    vs = ps.vars.extended(extra)
    sqrt_eps = Monomial.var("_eps", 0.5)
    gamma_term = None if float(gamma) == 0.0 else Monomial.const(float(gamma))
    cons = _robust_block(ps, U, sqrt_eps, gamma_term, pi_names, u, v, xi, zeta)
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, Posynomial.var("_eps", -1.0), cons)


def build_delay_gp(ps, cost, theta, beta, gamma, rho_cap=20.0):
    """GP for the joint decay-rate / L1-gain / Linf-gain tradeoff of a delay system.

    beta is a TradeoffFn over 'rho' (nonincreasing), 'g1' and 'ginf'
    (nondecreasing).  The delayed coupling contributes (e^{rho h} - 1) terms
    that stay exact in the problem and are series-expanded by normalize();
    rho is capped so that e^{rho h} <= rho_cap, keeping the truncation sharp.
    """
    if not ps.has_delay:
        raise ValueError("the delay builder needs delay blocks (Ad, h)")
    used = beta.expr.variables()
    if not used <= {"rho", "g1", "ginf"}:
        raise ValueError("delay tradeoff must be over 'rho', 'g1', 'ginf'")
    if "rho" in used and "rho" not in beta.nonincreasing:
        raise ValueError("delay tradeoff must be nonincreasing in 'rho'")
    for g in ("g1", "ginf"):
        if g in used and g not in beta.nondecreasing:
            raise ValueError(f"delay tradeoff must be nondecreasing in {g!r}")
    if rho_cap <= 1.0:
        raise ValueError("rho_cap must exceed 1")

    nx = ps.nx
    xi = _names("_xi", nx)
    u = _names("_u", nx)
    v = _names("_v", nx)
    extra = xi + u + v + ["_rho", "_g1", "_ginf"]
    gm = _gamma_mono(gamma, extra)
    vs = ps.vars.extended(extra)
    rho = Monomial.var("_rho")
    g1_inv = Monomial.var("_g1", -1.0)
    ginf_inv = Monomial.var("_ginf", -1.0)

    cons = [beta.substituted({"rho": "_rho", "g1": "_g1", "ginf": "_ginf"}) * (gm**-1.0)]
    exp_cons = []

    # decay certificate rows, exact exponential coupling on the delayed part
    for i in range(nx):
        scale = Monomial.var(xi[i], -1.0) * ps.R.diagonals[i].reciprocal()
        base = Posynomial([rho * Monomial.var(xi[i]) * scale])
        for (r, j), f in ps.Atilde.entries.items():
            if r == i:
                base = base + f * Monomial.var(xi[j]) * scale
        terms = []
        for (r, j), f in ps.Ad.entries.items():
            if r == i:
                for mono in f.terms:
                    terms.append(
                        ExpTerm(1.0, rho, ps.h, mono * Monomial.var(xi[j]) * scale)
                    )
        if terms:
            exp_cons.append(ExpConstraint(base, terms))
        else:
            cons.append(base)

    # integrable-signal gain certificate
    atd_t = ps.Atilde.transpose()
    csum = {}
    for M in (ps.C, ps.Cd):
        for (o, i), f in M.entries.items():
            csum[i] = f if i not in csum else csum[i] + f
    for i in range(nx):
        acc = None
        for (r, j), f in atd_t.entries.items():
            if r == i:
                term = f * Monomial.var(u[j])
                acc = term if acc is None else acc + term
        if i in csum:
            acc = csum[i] if acc is None else acc + csum[i]
        if acc is not None:
            cons.append(acc * Monomial.var(u[i], -1.0) * ps.R.diagonals[i].reciprocal())
    bt = ps.B.transpose()
    rows = _matvec_rows(bt, u)
    for j in range(ps.nw):
        f = rows.get(j)
        if f is not None:
            cons.append(f * g1_inv)

    # bounded-signal gain certificate
    bsum = {}
    for (i, j), f in ps.B.entries.items():
        bsum[i] = f if i not in bsum else bsum[i] + f
    for i in range(nx):
        acc = None
        for (r, j), f in ps.Atilde.entries.items():
            if r == i:
                term = f * Monomial.var(v[j])
                acc = term if acc is None else acc + term
        if i in bsum:
            acc = bsum[i] if acc is None else acc + bsum[i]
        if acc is not None:
            cons.append(acc * Monomial.var(v[i], -1.0) * ps.R.diagonals[i].reciprocal())
    for o in range(ps.ny):
        acc = None
        for M in (ps.C, ps.Cd):
            for (r, j), f in M.entries.items():
                if r == o:
                    term = f * Monomial.var(v[j])
                    acc = term if acc is None else acc + term
        if acc is not None:
            cons.append(acc * ginf_inv)

    cons.append(Posynomial([rho * (ps.h / math.log(rho_cap))]))
    cons.extend(_theta_constraints(theta))
    return GpProblem(vs, cost.Ltilde, cons, exp_terms=exp_cons)


# ---------------------------------------------------------------------------
# min-gamma / cost-budget wrapper


@dataclass
class MinimizeGammaResult:
    gamma: float | None
    theta: dict | None
    result: object


def minimize_gamma(builder, ps, cost, theta, budget=None, opts=None, **builder_kwargs):
    """Minimize the certified bound itself, optionally under a cost budget.

    Rebuilds the GP with the bound as a decision variable, swaps the
    objective for it and, when ``budget`` is given, adds
    Ltilde(theta) <= budget + L0.  Returns the minimal certified bound, the
    synthesized parameters and the full solve result.
    """
    problem = builder(ps, cost, theta, gamma=None, **builder_kwargs)
    if GAMMA_VAR not in problem.vars:
        raise ValueError(f"{getattr(builder, '__name__', builder)!r} does not support a gamma variable")
    cons = list(problem.posy_constraints)
    if budget is not None:
        denom = float(budget) + cost.L0
        if denom <= 0:
            raise ValueError("budget + L0 must be positive")
        cons.append(cost.Ltilde * (1.0 / denom))
    wrapped = GpProblem(
        problem.vars,
        Posynomial.var(GAMMA_VAR),
        cons,
        problem.mono_equalities,
        problem.exp_terms,
    )
    res = solve(wrapped, opts or SolveOptions())
    if res.status is not SolveStatus.OPTIMAL:
        return MinimizeGammaResult(None, None, res)
    point = res.point
    theta_star = {nm: point[nm] for nm in ps.vars.names}
    return MinimizeGammaResult(point[GAMMA_VAR], theta_star, res)
