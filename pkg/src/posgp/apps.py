"""Domain builders: dynamical buffer networks and networked SIS epidemics.

These translate the two application models into parametrized positive
systems plus cost and constraint data consumable by the synthesis builders.
Graph input is an explicit edge list; file parsing lives in the CLI.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .posy import DiagMonoMatrix, Monomial, PosyMatrix, Posynomial, VarSpace
from .sysmodel import ParamSystem
from .synth import CostSpec, ThetaSet, UncertaintyStructure

__all__ = [
    "BufferNetwork",
    "BufferProblem",
    "SisNetwork",
    "SisProblem",
    "build_buffer_network",
    "build_sis_problem",
    "pagerank",
]


@dataclass
class BufferNetwork:
    """Weighted directed flow network with origin and destination nodes.

    Edges are (src, dst, weight) with 0-based node indices; a None weight
    means the default 1/outdegree(src).  Destinations are nodes with empty
    out-neighborhood; origins have empty in-neighborhood and at least one
    outgoing edge.  alpha weighs the flow part of the measured output;
    phi_bar / psi_bar are upper bounds on the tunable drain and routing
    rates (scalar or per-node dict).
    """

    n_nodes: int
    edges: list
    alpha: float = 0.1
    phi_bar: object = 5.0
    psi_bar: object = 5.0

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("a buffer network needs at least two nodes")
        seen = set()
        norm = []
        for e in self.edges:
            src, dst = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) > 2 and e[2] is not None else None
            if src == dst:
                raise ValueError(f"self-loop on node {src}")
            if not (0 <= src < self.n_nodes and 0 <= dst < self.n_nodes):
                raise ValueError(f"edge ({src},{dst}) outside node range")
            if (src, dst) in seen:
                raise ValueError(f"duplicate edge ({src},{dst})")
            if w is not None and w <= 0:
                raise ValueError(f"edge ({src},{dst}) has non-positive weight")
            seen.add((src, dst))
            norm.append((src, dst, w))
        self.edges = norm
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    def bound(self, which, i):
        b = self.phi_bar if which == "phi" else self.psi_bar
        val = float(b[i]) if isinstance(b, dict) else float(b)
        if val <= 0:
            raise ValueError(f"{which}_bar for node {i} must be positive")
        return val


@dataclass
class BufferProblem:
    system: ParamSystem
    cost: CostSpec
    theta: ThetaSet
    origins: list
    destinations: list
    resolved_edges: list
    warnings: list = field(default_factory=list)


def build_buffer_network(bn):
    """Assemble the tunable buffer-network system.

    State matrix: routing inflows A_G * Psi off the diagonal, total outflow
    rates (routing plus destination drains) on the diagonal; inputs select
    the origins, outputs stack the buffer contents and the alpha-weighted
    flows.  Variables are phi_i on destinations and psi_i elsewhere, with
    box upper bounds from the network data.
    """
    n = bn.n_nodes
    out_nbrs = {i: [] for i in range(n)}
    in_nbrs = {i: [] for i in range(n)}
    for src, dst, _ in bn.edges:
        out_nbrs[src].append(dst)
        in_nbrs[dst].append(src)

    destinations = sorted(i for i in range(n) if not out_nbrs[i])
    origins = sorted(i for i in range(n) if not in_nbrs[i] and out_nbrs[i])
    warnings = [
        f"node {i} is isolated; treated as a destination with drain bound {bn.bound('phi', i)}"
        for i in destinations
        if not in_nbrs[i]
    ]
    if not origins:
        raise ValueError("network has no origin (a node with no inflow and some outflow)")
    if not destinations:
        raise ValueError("network has no destination (a node with no outflow)")
    dest_set = set(destinations)

    edges = [
        (src, dst, w if w is not None else 1.0 / len(out_nbrs[src]))
        for src, dst, w in bn.edges
    ]

    names = [f"phi{i}" if i in dest_set else f"psi{i}" for i in range(n)]
    vs = VarSpace(names)

    atilde = PosyMatrix(n, n)
    for src, dst, w in edges:
        atilde.add_at(dst, src, Monomial(w, {names[src]: 1.0}))
    diags = []
    for i in range(n):
        if i in dest_set:
            diags.append(Monomial.var(names[i]))
        else:
            wsum = sum(w for src, _, w in edges if src == i)
            diags.append(Monomial(wsum, {names[i]: 1.0}))
    R = DiagMonoMatrix(tuple(diags))

    B = PosyMatrix(n, len(origins))
    for k, node in enumerate(origins):
        B.set(node, k, Posynomial.const(1.0))

    m_edges = len(edges)
    ny = n if bn.alpha == 0.0 else n + m_edges
    C = PosyMatrix(ny, n)
    for i in range(n):
        C.set(i, i, Posynomial.const(1.0))
    if bn.alpha > 0.0:
        for l, (src, _, w) in enumerate(edges):
            C.set(n + l, src, Monomial(bn.alpha * w, {names[src]: 1.0}))

    system = ParamSystem(vs, atilde, R, B, C)
    cost = CostSpec(Posynomial([Monomial.var(nm) for nm in names]), 0.0)
    theta = ThetaSet(
        tuple(
            Posynomial.var(names[i]) * (1.0 / bn.bound("phi" if i in dest_set else "psi", i))
            for i in range(n)
        )
    )
    return BufferProblem(system, cost, theta, origins, destinations, edges, warnings)


@dataclass
class SisNetwork:
    """Networked SIS epidemic with an uncertain contact graph.

    adjacency is the nominal nonnegative weight matrix; eps bounds the
    spectral norm of the additive uncertainty.  Infection rates are tunable
    in [beta_min, beta_max] and recovery rates in [delta_min, delta_max];
    cost_p and cost_q shape the investment curves; gamma is the required
    decay rate of the infection upper bound.
    """

    adjacency: np.ndarray
    eps: float = 0.0
    beta_min: float = 0.1
    beta_max: float = 0.2
    delta_min: float = 1.0
    delta_max: float = 2.0
    cost_p: float = 0.1
    cost_q: float = 1.0
    gamma: float = 0.01

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=float)
        n = self.adjacency.shape[0]
        if self.adjacency.shape != (n, n) or n < 1:
            raise ValueError("adjacency must be a square matrix")
        if self.adjacency.min(initial=0.0) < 0:
            raise ValueError("adjacency must be entrywise nonnegative")
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if not (0 < self.beta_min < self.beta_max):
            raise ValueError("need 0 < beta_min < beta_max")
        if not (0 < self.delta_min < self.delta_max):
            raise ValueError("need 0 < delta_min < delta_max")
        if self.cost_p <= 0 or self.cost_q <= 0:
            raise ValueError("cost exponents must be positive")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def n(self):
        return self.adjacency.shape[0]


@dataclass
class SisProblem:
    system: ParamSystem
    cost: CostSpec
    theta: ThetaSet
    uncertainty: UncertaintyStructure
    network: SisNetwork
    reparametrized: bool

    def delta_values(self, point):
        """Recovery rates at a solved point, undoing the reparametrization."""
        n = self.network.n
        if not self.reparametrized:
            return {f"delta{i}": point[f"delta{i}"] for i in range(n)}
        dbar = self.network.delta_max
        return {
            f"delta{i}": dbar + 1.0 - 1.0 / point[f"dc{i}"] for i in range(n)
        }

    def reparam_point(self, plain_point):
        """Map a (beta, delta) assignment onto the reparametrized variables."""
        if not self.reparametrized:
            return dict(plain_point)
        n = self.network.n
        dbar = self.network.delta_max
        out = {f"beta{i}": plain_point[f"beta{i}"] for i in range(n)}
        for i in range(n):
            out[f"dc{i}"] = 1.0 / (dbar + 1.0 - plain_point[f"delta{i}"])
        return out

    def investment_table(self, point, damping=0.85):
        """Per-node investments f(beta_i), g(delta_i) plus centrality columns."""
        sn = self.network
        n = sn.n
        deltas = self.delta_values(point)
        fb_den = sn.beta_min**-sn.cost_p - sn.beta_max**-sn.cost_p
        gd_den = sn.delta_max**sn.cost_q - sn.delta_min**sn.cost_q
        pr = pagerank(sn.adjacency, damping=damping)
        rows = []
        for i in range(n):
            beta = point[f"beta{i}"]
            delta = deltas[f"delta{i}"]
            rows.append(
                {
                    "node": i,
                    "beta": beta,
                    "delta": delta,
                    "f_beta": (beta**-sn.cost_p - sn.beta_max**-sn.cost_p) / fb_den,
                    "g_delta": (delta**sn.cost_q - sn.delta_min**sn.cost_q) / gd_den,
                    "pagerank": float(pr[i]),
                }
            )
        return rows


def build_sis_problem(sn, reparametrize=False):
    """Assemble the SIS resource-allocation problem.

    The infection upper bound is the positive linear system with state matrix
    diag(beta) A - diag(delta), inputs diag(beta) and identity outputs; the
    uncertain adjacency enters as one full nonnegative m x m block with
    m = n nodes.  Costs are normalized so the zero-investment corner
    (beta_max, delta_min) costs exactly zero.

    With ``reparametrize`` the recovery variables become dc_i in
    [1/(delta_max - delta_min + 1), 1] via delta = delta_max + 1 - 1/dc,
    which turns the damping into the constant (delta_max + 1) I and unlocks
    the Grammian-based builders.  The exact recovery cost is not a
    posynomial in dc, so the recovery side then uses the monotone surrogate
    (dc^q - dc_min^q) / (1 - dc_min^q), which keeps the same normalized
    endpoints (0 at delta_min, 1 at delta_max).
    """
    n = sn.n
    A = sn.adjacency
    beta_names = [f"beta{i}" for i in range(n)]

    fb_den = sn.beta_min**-sn.cost_p - sn.beta_max**-sn.cost_p
    beta_cost_terms = [
        Monomial(1.0 / fb_den, {nm: -sn.cost_p}) for nm in beta_names
    ]
    beta_l0 = n * sn.beta_max**-sn.cost_p / fb_den

    beta_boxes = []
    for nm in beta_names:
        beta_boxes.append(Posynomial.var(nm) * (1.0 / sn.beta_max))
        beta_boxes.append(Posynomial([Monomial(sn.beta_min, {nm: -1.0})]))

    if not reparametrize:
        delta_names = [f"delta{i}" for i in range(n)]
        vs = VarSpace(beta_names + delta_names)
        atilde = PosyMatrix(n, n)
        for i in range(n):
            for j in range(n):
                if A[i, j] != 0.0:
                    atilde.add_at(i, j, Monomial(A[i, j], {beta_names[i]: 1.0}))
        R = DiagMonoMatrix(tuple(Monomial.var(nm) for nm in delta_names))
        r = R0 = None
        gd_den = sn.delta_max**sn.cost_q - sn.delta_min**sn.cost_q
        delta_cost_terms = [
            Monomial(1.0 / gd_den, {nm: sn.cost_q}) for nm in delta_names
        ]
        delta_l0 = n * sn.delta_min**sn.cost_q / gd_den
        delta_boxes = []
        for nm in delta_names:
            delta_boxes.append(Posynomial.var(nm) * (1.0 / sn.delta_max))
            delta_boxes.append(Posynomial([Monomial(sn.delta_min, {nm: -1.0})]))
    else:
        dc_names = [f"dc{i}" for i in range(n)]
        vs = VarSpace(beta_names + dc_names)
        atilde = PosyMatrix(n, n)
        for i in range(n):
            for j in range(n):
                if A[i, j] != 0.0:
                    atilde.add_at(i, j, Monomial(A[i, j], {beta_names[i]: 1.0}))
            atilde.add_at(i, i, Monomial.var(dc_names[i], -1.0))
        r = Monomial.const(sn.delta_max + 1.0)
        R0 = np.ones(n)
        R = None
        dc_min = 1.0 / (sn.delta_max - sn.delta_min + 1.0)
        sur_den = 1.0 - dc_min**sn.cost_q
        delta_cost_terms = [
            Monomial(1.0 / sur_den, {nm: sn.cost_q}) for nm in dc_names
        ]
        delta_l0 = n * dc_min**sn.cost_q / sur_den
        delta_boxes = []
        for nm in dc_names:
            delta_boxes.append(Posynomial.var(nm))
            delta_boxes.append(Posynomial([Monomial(dc_min, {nm: -1.0})]))

    B = PosyMatrix(n, n)
    for i in range(n):
        B.set(i, i, Posynomial.var(beta_names[i]))
    C = PosyMatrix.identity(n)

    if r is not None:
        system = ParamSystem(vs, atilde, B=B, C=C, r=r, R0=R0)
    else:
        system = ParamSystem(vs, atilde, R, B=B, C=C)
    cost = CostSpec(Posynomial(beta_cost_terms + delta_cost_terms), beta_l0 + delta_l0)
    theta = ThetaSet(tuple(beta_boxes + delta_boxes))
    uncertainty = UncertaintyStructure(full_blocks=(n,), scalar_blocks=0, eps=sn.eps)
    return SisProblem(system, cost, theta, uncertainty, sn, reparametrize)


def pagerank(adjacency, damping=0.85, tol=1e-12, max_iter=10000):
    """PageRank by power iteration on the out-weight-normalized walk."""
    A = np.asarray(adjacency, dtype=float)
    n = A.shape[0]
    out = A.sum(axis=1)
    P = np.zeros_like(A)
    nz = out > 0
    P[nz] = A[nz] / out[nz, None]
    r = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        dangling = r[~nz].sum() / n
        r_new = (1.0 - damping) / n + damping * (P.T @ r + dangling)
        if np.abs(r_new - r).max() < tol:
            return r_new
        r = r_new
    return r
