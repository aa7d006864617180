"""Concrete positive LTI systems and the independent verification oracles.

Every synthesized parameter point is instantiated into a NumericSystem and
checked here against norm computations that do not share code with the GP
builders: Lyapunov-equation Grammians (scipy Bartels-Stewart), Kronecker
resolvent formulas, frequency sweeps, eigenvalue computations and sampled
worst-case perturbations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .posy import DiagMonoMatrix, Monomial, PosyMatrix, bar_factors

__all__ = [
    "NumericSystem",
    "ParamSystem",
    "NormReport",
    "instantiate",
    "spectral_abscissa",
    "h2_norm",
    "hinf_norm",
    "hinf_freq_sweep",
    "grammians",
    "grammians_kron",
    "hankel_singular_values",
    "schatten_norm",
    "build_bar_matrices",
    "robust_abscissa_estimate",
    "delay_gains",
    "delay_decay_check",
    "simulate_delay_decay",
    "certified_decay_rate",
    "norm_report",
]

_HURWITZ_TOL = -1e-12


def _as_matrix(a, name):
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a matrix")
    return arr


@dataclass
class NumericSystem:
    """dx/dt = F x + G w, y = H x, optionally with a delayed state term.

    F must be Metzler and G, H (and the delay blocks) entrywise nonnegative,
    which is what makes the system internally positive.
    """

    F: np.ndarray
    G: np.ndarray
    H: np.ndarray
    Ad: np.ndarray | None = None
    Cd: np.ndarray | None = None
    h: float | None = None

    def __post_init__(self):
        self.F = _as_matrix(self.F, "F")
        self.G = _as_matrix(self.G, "G")
        self.H = _as_matrix(self.H, "H")
        n = self.F.shape[0]
        if self.F.shape != (n, n):
            raise ValueError("F must be square")
        if self.G.shape[0] != n or self.H.shape[1] != n:
            raise ValueError("G/H dimensions inconsistent with F")
        off = self.F - np.diag(np.diag(self.F))
        if off.min(initial=0.0) < _HURWITZ_TOL:
            raise ValueError("F is not Metzler (negative off-diagonal entry)")
        for M, name in ((self.G, "G"), (self.H, "H")):
            if M.min(initial=0.0) < _HURWITZ_TOL:
                raise ValueError(f"{name} must be entrywise nonnegative")
        if (self.Ad is None) != (self.h is None):
            raise ValueError("delay systems need both Ad and h")
        if self.Ad is not None:
            self.Ad = _as_matrix(self.Ad, "Ad")
            if self.Ad.shape != (n, n):
                raise ValueError("Ad must match F")
            if self.Ad.min(initial=0.0) < _HURWITZ_TOL:
                raise ValueError("Ad must be entrywise nonnegative")
            self.Cd = (
                np.zeros_like(self.H) if self.Cd is None else _as_matrix(self.Cd, "Cd")
            )
            if self.Cd.shape != self.H.shape:
                raise ValueError("Cd must match H")
            if self.Cd.min(initial=0.0) < _HURWITZ_TOL:
                raise ValueError("Cd must be entrywise nonnegative")
            if not (self.h > 0):
                raise ValueError("delay h must be positive")

    @property
    def nx(self):
        return self.F.shape[0]

    @property
    def has_delay(self):
        return self.Ad is not None


class ParamSystem:
    """Positive system with posynomial-parametrized coefficient matrices.

    The state matrix is stored split as Atilde - R where Atilde has
    posynomial-or-zero entries and R is diagonal with monomial diagonals, so
    the Metzler structure holds for every positive parameter point.  For
    delay systems Atilde absorbs the delayed coupling as well
    (Atilde = A + Ad + R) and instantiation subtracts Ad back out.

    When R factors as r(theta) * R0 for a single monomial r and a constant
    positive diagonal R0, pass (r, R0); this enables the Grammian-based
    builders (impulse-energy, Hankel, Schatten).
    """

    def __init__(self, vars, Atilde, R=None, B=None, C=None, *, r=None, R0=None,
                 Ad=None, Cd=None, h=None):
        self.vars = vars
        self.Atilde = Atilde
        nx = Atilde.rows
        if Atilde.cols != nx:
            raise ValueError("Atilde must be square")
        if r is not None or R0 is not None:
            if r is None or R0 is None:
                raise ValueError("r and R0 must be given together")
            if not isinstance(r, Monomial):
                raise TypeError("r must be a Monomial")
            R0 = np.asarray(R0, dtype=float).reshape(-1)
            if R0.shape != (nx,) or R0.min() <= 0:
                raise ValueError("R0 must be a positive diagonal of length nx")
            derived = DiagMonoMatrix(tuple(r * float(R0[i]) for i in range(nx)))
            if R is not None and tuple(R.diagonals) != tuple(derived.diagonals):
                raise ValueError("R does not equal r(theta) * R0")
            R = derived
        if R is None:
            raise ValueError("R (or an r, R0 factorization) is required")
        if R.n != nx:
            raise ValueError("R dimension mismatch")
        self.R = R
        self.r = r
        self.R0 = None if R0 is None else np.asarray(R0, dtype=float)
        self.B = B if B is not None else PosyMatrix(nx, 0)
        self.C = C if C is not None else PosyMatrix(0, nx)
        if self.B.rows != nx or self.C.cols != nx:
            raise ValueError("B/C dimensions inconsistent with Atilde")
        if (Ad is None) != (h is None):
            raise ValueError("delay systems need both Ad and h")
        self.Ad = Ad
        self.Cd = Cd
        self.h = None if h is None else float(h)
        if Ad is not None:
            if Ad.shape != (nx, nx):
                raise ValueError("Ad must be nx x nx")
            if self.Cd is None:
                self.Cd = PosyMatrix(self.C.rows, nx)
            if self.Cd.shape != self.C.shape:
                raise ValueError("Cd must match C")
            if not (self.h > 0):
                raise ValueError("delay h must be positive")
        used = self.Atilde.variables() | self.R.variables() | self.B.variables() | self.C.variables()
        if self.Ad is not None:
            used |= self.Ad.variables() | self.Cd.variables()
        if self.r is not None:
            used |= self.r.variables()
        unknown = sorted(nm for nm in used if nm not in self.vars)
        if unknown:
            raise ValueError(f"system references variables outside the VarSpace: {unknown}")

    @property
    def nx(self):
        return self.Atilde.rows

    @property
    def nw(self):
        return self.B.cols

    @property
    def ny(self):
        return self.C.rows

    @property
    def has_delay(self):
        return self.Ad is not None

    @property
    def has_r0_factorization(self):
        return self.r is not None


@dataclass
class NormReport:
    """Oracle-computed norms of one concrete numeric system."""

    spectral_abscissa: float
    h2: float | None = None
    hinf: float | None = None
    hankel_sv: list | None = None
    schatten: dict | None = None
    l1_gain: float | None = None
    linf_gain: float | None = None
    decay_rate_lb: float | None = None


def instantiate(ps, point):
    """Evaluate a ParamSystem at a positive parameter assignment."""
    At = ps.Atilde.evaluate(point)
    Rv = ps.R.evaluate(point)
    if ps.has_delay:
        Adv = ps.Ad.evaluate(point)
        F = At - Adv - Rv
        return NumericSystem(
            F, ps.B.evaluate(point), ps.C.evaluate(point),
            Ad=Adv, Cd=ps.Cd.evaluate(point), h=ps.h,
        )
    F = At - Rv
    return NumericSystem(F, ps.B.evaluate(point), ps.C.evaluate(point))


def spectral_abscissa(M):
    """Largest real part of the eigenvalues (the Perron root for Metzler M)."""
    M = _as_matrix(M, "M")
    return float(np.max(np.linalg.eigvals(M).real))


def _require_hurwitz(F, what="F"):
    lam = spectral_abscissa(F)
    if lam >= _HURWITZ_TOL:
        raise ValueError(f"{what} is not Hurwitz (spectral abscissa {lam:.3e})")
    return lam


def _h2_vectors_numeric(G, H):
    nx = G.shape[0]
    gt = np.zeros(nx * nx)
    for j in range(G.shape[1]):
        gt += np.kron(G[:, j], G[:, j])
    ht = np.zeros(nx * nx)
    for i in range(H.shape[0]):
        ht += np.kron(H[i, :], H[i, :])
    return gt, ht


def h2_norm(S, cross_check=True, rtol=1e-8):
    """Impulse-response energy, sqrt(-Htilde (F (+) F)^{-1} Gtilde).

    Cross-checked against the Lyapunov route tr(H W_C H^T) with W_C from a
    Bartels-Stewart solve; disagreement beyond rtol signals a bug.
    """
    _require_hurwitz(S.F)
    nx = S.nx
    gt, ht = _h2_vectors_numeric(S.G, S.H)
    ks = np.kron(S.F, np.eye(nx)) + np.kron(np.eye(nx), S.F)
    val = float(-ht @ np.linalg.solve(ks, gt))
    val = math.sqrt(max(val, 0.0))
    if cross_check:
        wc = scipy.linalg.solve_continuous_lyapunov(S.F, -S.G @ S.G.T)
        alt = math.sqrt(max(float(np.trace(S.H @ wc @ S.H.T)), 0.0))
        if abs(val - alt) > rtol * max(1.0, val):
            raise ArithmeticError(
                f"H2 route disagreement: kron {val:.12g} vs lyapunov {alt:.12g}"
            )
    return val


def hinf_norm(S):
    """L2-induced gain; equals the static-gain spectral norm for positive systems."""
    _require_hurwitz(S.F)
    M = S.H @ np.linalg.solve(-S.F, S.G)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def hinf_freq_sweep(S, n_points=201, w_lo=1e-3, w_hi=1e3):
    """sup over a log-spaced frequency grid of the transfer-matrix gain."""
    _require_hurwitz(S.F)
    nx = S.nx
    best = 0.0
    for w in np.logspace(math.log10(w_lo), math.log10(w_hi), n_points):
        Mw = S.H @ np.linalg.solve(1j * w * np.eye(nx) - S.F, S.G)
        best = max(best, float(np.linalg.norm(Mw, 2)))
    return best


def grammians(S):
    """Controllability and observability Grammians via Lyapunov solves."""
    _require_hurwitz(S.F)
    wc = scipy.linalg.solve_continuous_lyapunov(S.F, -S.G @ S.G.T)
    wo = scipy.linalg.solve_continuous_lyapunov(S.F.T, -S.H.T @ S.H)
    return wc, wo


def grammians_kron(S):
    """Grammians from the padded-Kronecker resolvent representation.

    W_C = -B1 (F (+) O_nw (+) F^T)^{-1} B2 with (B1, B2) the bar factors of
    G, and the observability counterpart from the bar factors of H^T.
    """
    _require_hurwitz(S.F)
    nx, nw = S.nx, S.G.shape[1]
    ny = S.H.shape[0]
    b1, b2 = _bar_factors_numeric(S.G)
    mc = np.kron(S.F, np.eye(nw * nx)) + np.kron(np.eye(nx * nw), S.F.T)
    wc = -b1 @ np.linalg.solve(mc, b2)
    c1, c2 = _bar_factors_numeric(S.H.T)
    mo = np.kron(S.F.T, np.eye(ny * nx)) + np.kron(np.eye(nx * ny), S.F)
    wo = -c1 @ np.linalg.solve(mo, c2)
    return wc, wo


def _bar_factors_numeric(M):
    n, k = M.shape
    m1 = np.zeros((n, n * n * k))
    m2 = np.zeros((n * n * k, n))
    for r in range(n):
        for j in range(k):
            if M[r, j] != 0.0:
                for i in range(n):
                    m1[i, (i * k + j) * n + r] = M[r, j]
                    m2[(r * k + j) * n + i, i] = M[r, j]
    return m1, m2


def build_bar_matrices(B, C):
    """Bar factors (B1, B2, C1, C2) for numeric arrays or posynomial matrices."""
    if isinstance(B, PosyMatrix) or isinstance(C, PosyMatrix):
        b1, b2 = bar_factors(B)
        c1, c2 = bar_factors(C.transpose())
        return b1, b2, c1, c2
    b1, b2 = _bar_factors_numeric(np.asarray(B, dtype=float))
    c1, c2 = _bar_factors_numeric(np.asarray(C, dtype=float).T)
    return b1, b2, c1, c2


def hankel_singular_values(S, route_tol=1e-8):
    """Descending Hankel singular values sqrt(eig(W_O W_C)).

    The Grammians are computed by both the Lyapunov and the Kronecker route;
    a disagreement larger than route_tol (relative to the Grammian scale)
    raises, because it can only come from a bug.
    """
    wc, wo = grammians(S)
    wck, wok = grammians_kron(S)
    scale = max(1.0, float(np.abs(wc).max()), float(np.abs(wo).max()))
    err = max(float(np.abs(wc - wck).max()), float(np.abs(wo - wok).max()))
    if err > route_tol * scale:
        raise ArithmeticError(f"Grammian route disagreement: {err:.3e}")
    wc = 0.5 * (wc + wc.T)
    wo = 0.5 * (wo + wo.T)
    eigc = np.linalg.eigvalsh(wc)
    if eigc.min() > 1e-12 * max(eigc.max(), 1e-300):
        # symmetrized similarity keeps the spectrum real and nonnegative
        half = scipy.linalg.sqrtm(wc).real
        lam = np.linalg.eigvalsh(half @ wo @ half)
    else:
        lam = np.linalg.eigvals(wo @ wc).real
    lam = np.where(lam < 0.0, np.where(lam >= -1e-10, 0.0, lam), lam)
    if lam.min() < 0.0:
        raise ArithmeticError(f"negative Grammian-product eigenvalue {lam.min():.3e}")
    sv = np.sqrt(lam)
    return sorted((float(s) for s in sv), reverse=True)


def schatten_norm(S_or_sv, p):
    """(sum sigma_i^p)^(1/p) over the Hankel singular values."""
    if p <= 0:
        raise ValueError("Schatten order must be positive")
    sv = S_or_sv if isinstance(S_or_sv, (list, tuple, np.ndarray)) else hankel_singular_values(S_or_sv)
    return float(sum(s**p for s in sv) ** (1.0 / p))


def robust_abscissa_estimate(S, block_sizes, eps, samples=2000, seed=0):
    """Sampled lower bound on the worst-case abscissa over structured feedback.

    The uncertainty is block-diagonal nonnegative with spectral norm at most
    eps per block; the estimate maximizes lambda_max(F + G Delta H) over
    deterministic extreme candidates (rank-one blocks built from canonical
    and uniform directions) plus ``samples`` random rank-one draws.  It is
    monotone nondecreasing in ``samples``.
    """
    m = S.G.shape[1]
    if S.H.shape[0] != m:
        raise ValueError("robust estimate needs n_w == n_y")
    if sum(block_sizes) != m:
        raise ValueError(f"block sizes {block_sizes} do not partition {m} channels")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps == 0.0 or m == 0:
        return spectral_abscissa(S.F)

    offs = np.cumsum([0] + list(block_sizes))

    def abscissa_for(blocks):
        delta = np.zeros((m, m))
        for k, blk in enumerate(blocks):
            a, b = offs[k], offs[k + 1]
            delta[a:b, a:b] = blk
        return spectral_abscissa(S.F + S.G @ (eps * delta) @ S.H)

    def rank_one(u, v):
        u = u / np.linalg.norm(u)
        v = v / np.linalg.norm(v)
        return np.outer(u, v)

    best = spectral_abscissa(S.F)
    # deterministic extremes: canonical directions and the uniform direction
    per_block_cands = []
    for sz in block_sizes:
        cands = [rank_one(np.ones(sz), np.ones(sz))]
        for i in range(sz):
            for j in range(sz):
                e_i = np.zeros(sz)
                e_i[i] = 1.0
                e_j = np.zeros(sz)
                e_j[j] = 1.0
                cands.append(rank_one(e_i, e_j))
        per_block_cands.append(cands)
    # all blocks at the uniform extreme, plus each block cycled through its extremes
    uniform = [c[0] for c in per_block_cands]
    best = max(best, abscissa_for(uniform))
    for k, cands in enumerate(per_block_cands):
        for cand in cands:
            blocks = list(uniform)
            blocks[k] = cand
            best = max(best, abscissa_for(blocks))

    rng = np.random.default_rng(seed)
    for _ in range(samples):
        blocks = []
        for sz in block_sizes:
            u = np.abs(rng.standard_normal(sz)) + 1e-12
            v = np.abs(rng.standard_normal(sz)) + 1e-12
            blocks.append(rank_one(u, v))
        best = max(best, abscissa_for(blocks))
    return best


def delay_gains(S):
    """(L1 gain, Linf gain) of a positive delay system.

    Both equal induced norms of the static gain (H + Cd)(-F - Ad)^{-1} G:
    the maximum column sum and the maximum row sum respectively.
    """
    if not S.has_delay:
        raise ValueError("delay_gains needs a delay system")
    _require_hurwitz(S.F + S.Ad, "F + Ad")
    M = (S.H + S.Cd) @ np.linalg.solve(-(S.F + S.Ad), S.G)
    if M.size == 0:
        return 0.0, 0.0
    l1 = float(np.abs(M).sum(axis=0).max())
    linf = float(np.abs(M).sum(axis=1).max())
    return l1, linf


def delay_decay_check(S, rho):
    """True iff F + rho I + e^{rho h} Ad is Hurwitz, certifying decay rate > rho."""
    if not S.has_delay:
        raise ValueError("delay_decay_check needs a delay system")
    if rho <= 0:
        raise ValueError("rho must be positive")
    if rho * S.h > 700.0:
        # e^{rho h} overflows; with any delayed coupling the shifted matrix
        # cannot be Hurwitz, without one the delay-free test decides
        if S.Ad.max(initial=0.0) > 0.0:
            return False
        return spectral_abscissa(S.F) < -rho
    M = S.F + rho * np.eye(S.nx) + math.exp(rho * S.h) * S.Ad
    return spectral_abscissa(M) < 0.0


def simulate_delay_decay(S, t_final, steps_per_delay=200):
    """Crude decay-rate estimate by method-of-steps forward integration.

    Secondary sanity check only: integrates the unforced system from an
    all-ones history and fits the log-norm slope over the second half.
    """
    if not S.has_delay:
        raise ValueError("needs a delay system")
    dt = S.h / steps_per_delay
    n_steps = int(t_final / dt)
    hist = [np.ones(S.nx)] * (steps_per_delay + 1)
    norms = []
    x = hist[-1]
    for k in range(n_steps):
        xd = hist[-steps_per_delay - 1]
        x = x + dt * (S.F @ x + S.Ad @ xd)
        hist.append(x)
        norms.append(float(np.linalg.norm(x)))
    half = len(norms) // 2
    ts = dt * np.arange(1, n_steps + 1)
    slope = np.polyfit(ts[half:], np.log(np.maximum(norms[half:], 1e-300)), 1)[0]
    return -float(slope)


def certified_decay_rate(M, tol=1e-9, rho_hi=None):
    """Largest rho certified by a positive vector with (M + rho I) xi < 0.

    Bisection over the resolvent certificate xi = (-M - rho I)^{-1} 1 > 0;
    equals -lambda_max(M) up to tol and provides the eigenvalue-free route
    used to confirm decay certificates.
    """
    M = _as_matrix(M, "M")
    n = M.shape[0]

    def certifies(rho):
        A = -(M + rho * np.eye(n))
        try:
            xi = np.linalg.solve(A, np.ones(n))
        except np.linalg.LinAlgError:
            return False
        return bool(np.all(xi > 0) and np.all((M + rho * np.eye(n)) @ xi < 0))

    lo = 0.0
    if not certifies(tol):
        return 0.0
    hi = rho_hi if rho_hi is not None else 1.0
    while certifies(hi):
        lo = hi
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("decay rate appears unbounded")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if certifies(mid):
            lo = mid
        else:
            hi = mid
    return lo


def norm_report(S, schatten_orders=(1, 2, 4)):
    """Full oracle report for one numeric system."""
    lam = spectral_abscissa(S.F)
    rep = NormReport(spectral_abscissa=lam)
    if lam < 0.0:
        rep.h2 = h2_norm(S)
        rep.hinf = hinf_norm(S)
        sv = hankel_singular_values(S)
        rep.hankel_sv = sv
        rep.schatten = {int(p): schatten_norm(sv, p) for p in schatten_orders}
    if S.has_delay and spectral_abscissa(S.F + S.Ad) < 0.0:
        rep.l1_gain, rep.linf_gain = delay_gains(S)
        rep.decay_rate_lb = certified_decay_rate_delay(S)
    return rep


def certified_decay_rate_delay(S, tol=1e-9):
    """Largest rho with F + rho I + e^{rho h} Ad Hurwitz, by bisection."""
    if not S.has_delay:
        raise ValueError("needs a delay system")
    if spectral_abscissa(S.F + S.Ad) >= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while delay_decay_check(S, hi):
        lo = hi
        hi *= 2.0
        if hi > 1e6:
            raise ArithmeticError("delay decay rate appears unbounded")
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if mid <= 0.0:
            break
        if delay_decay_check(S, mid):
            lo = mid
        else:
            hi = mid
    return lo
