"""Problem-file and expression parsing for the command line front end.

A problem file is a line-oriented document of ``[section]`` blocks; matrix
sections hold one row per line with comma-separated posynomial entries, and
the expression grammar is

    expr   := term ('+' term)*
    term   := factor (('*' | '/') factor)*
    factor := atom ('^' NUMBER)?
    atom   := NUMBER | NAME | '(' expr ')'

with positive number literals only: unary minus does not exist, so negative
coefficients are unrepresentable by construction (scientific notation like
1e-3 is a single literal).  Negative powers are written with division
(``2*b1^0.5/d2``).  Inside matrix sections the bare literal ``0`` denotes a
structural zero entry.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .posy import DiagMonoMatrix, Posynomial, PosyMatrix, VarSpace
from .sysmodel import ParamSystem
from .synth import CostSpec, ThetaSet

__all__ = [
    "ParseError",
    "ProblemBundle",
    "parse_problem",
    "parse_problem_text",
    "parse_expression",
    "serialize_bundle",
    "posy_to_str",
    "mono_to_str",
]


class ParseError(ValueError):
    """Syntax or validation error with source location."""

    def __init__(self, message, line=None, col=None):
        self.message = message
        self.line = line
        self.col = col
        loc = ""
        if line is not None:
            loc = f"line {line}" + (f", col {col}" if col is not None else "") + ": "
        super().__init__(loc + message)


# ---------------------------------------------------------------------------
# expression grammar

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z][A-Za-z0-9_]*)"
    r"|(?P<op>[+*/^()]))"
)


def _tokenize(text, line_no):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ch = text[pos:].lstrip()[:1]
            col = pos + 1
            if ch == "-":
                raise ParseError(
                    "negative coefficients are not representable in a posynomial "
                    "(unary minus is not part of the grammar)",
                    line_no, col,
                )
            if ch == "":
                break
            raise ParseError(f"unexpected character {ch!r}", line_no, col)
        out.append((m.lastgroup, m.group(m.lastgroup), line_no, m.start(m.lastgroup) + 1))
        pos = m.end()
    return out


class _ExprParser:
    def __init__(self, tokens, line_no):
        self.tokens = tokens
        self.i = 0
        self.line = line_no

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression", self.line)
        self.i += 1
        return tok

    def expect_op(self, op):
        tok = self.take()
        if tok[0] != "op" or tok[1] != op:
            raise ParseError(f"expected {op!r}, got {tok[1]!r}", tok[2], tok[3])

    def parse(self):
        f = self.expr()
        tok = self.peek()
        if tok is not None:
            raise ParseError(f"unexpected trailing token {tok[1]!r}", tok[2], tok[3])
        return f

    def expr(self):
        f = self.term()
        while True:
            tok = self.peek()
            if tok is not None and tok[0] == "op" and tok[1] == "+":
                self.take()
                f = f + self.term()
            else:
                return f

    def term(self):
        f = self.factor()
        while True:
            tok = self.peek()
            if tok is None or tok[0] != "op" or tok[1] not in "*/":
                return f
            op = self.take()
            g = self.factor()
            if op[1] == "*":
                f = f * g
            else:
                if not g.is_monomial():
                    raise ParseError("division requires a monomial divisor", op[2], op[3])
                f = f / g

    def factor(self):
        base = self.atom()
        tok = self.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self.take()
            num = self.take()
            if num[0] != "num":
                raise ParseError("exponent must be a number literal", num[2], num[3])
            power = float(num[1])
            if base.is_monomial():
                return Posynomial([base.as_monomial() ** power])
            if power != int(power):
                raise ParseError(
                    "fractional power of a multi-term posynomial is not posynomial",
                    num[2], num[3],
                )
            return base ** int(power)
        return base

    def atom(self):
        tok = self.take()
        kind, text, ln, col = tok
        if kind == "num":
            val = float(text)
            if val == 0.0:
                raise ParseError("zero coefficient (zeros are structural, not terms)", ln, col)
            return Posynomial.const(val)
        if kind == "name":
            return Posynomial.var(text)
        if kind == "op" and text == "(":
            f = self.expr()
            self.expect_op(")")
            return f
        raise ParseError(f"unexpected token {text!r}", ln, col)


def parse_expression(text, line_no=None):
    """Parse one posynomial expression; raises ParseError with location."""
    tokens = _tokenize(text, line_no)
    if not tokens:
        raise ParseError("empty expression", line_no)
    return _ExprParser(tokens, line_no).parse()


def _parse_entry(text, line_no):
    """Matrix entry: the bare literal 0 is a structural zero, else a posynomial."""
    if text.strip() in ("0", "0.0", "0."):
        return None
    return parse_expression(text, line_no)


# ---------------------------------------------------------------------------
# problem files


@dataclass
class ProblemBundle:
    """Parsed problem: system data plus the problem-specific sections."""

    system: ParamSystem
    cost: CostSpec
    theta: ThetaSet
    gamma: float | None = None
    schatten_p: int | None = None
    eps: float | None = None
    tradeoff: Posynomial | None = None
    uncertainty_blocks: tuple | None = None   # (full_blocks tuple, scalar count)
    options: dict = field(default_factory=dict)

    @property
    def vars(self):
        return self.system.vars


_MATRIX_SECTIONS = ("Atilde", "R", "R0", "B", "C", "Ad", "Cd")
_KNOWN_SECTIONS = set(_MATRIX_SECTIONS) | {
    "vars", "r", "cost", "L0", "theta", "gamma", "p", "eps", "h",
    "tradeoff", "uncertainty", "options",
}


def _split_sections(text):
    sections = {}
    current = None
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        m = re.match(r"\s*\[([A-Za-z0-9_]+)\]\s*(.*)$", line)
        if m:
            name, rest = m.group(1), m.group(2)
            if name not in _KNOWN_SECTIONS:
                raise ParseError(f"unknown section [{name}]", ln)
            if name in sections:
                raise ParseError(f"duplicate section [{name}]", ln)
            sections[name] = []
            current = name
            if rest.strip():
                sections[name].append((ln, rest.strip()))
        else:
            if current is None:
                raise ParseError("content before any [section] header", ln)
            sections[current].append((ln, line.strip()))
    return sections


def _section_scalar(sections, name, conv=float):
    if name not in sections:
        return None
    lines = sections[name]
    if len(lines) != 1:
        ln = lines[1][0] if len(lines) > 1 else None
        raise ParseError(f"section [{name}] expects a single value", ln)
    ln, text = lines[0]
    try:
        return conv(text)
    except ValueError:
        raise ParseError(f"invalid value {text!r} for [{name}]", ln) from None


def _parse_matrix(sections, name, n_cols=None):
    if name not in sections:
        return None
    rows = []
    for ln, line in sections[name]:
        entries = [e.strip() for e in line.split(",")]
        rows.append([(ln, e) for e in entries])
    width = len(rows[0])
    for row in rows:
        if len(row) != width:
            raise ParseError(f"ragged rows in [{name}]", row[0][0])
    if n_cols is not None and width != n_cols:
        raise ParseError(f"[{name}] has {width} columns, expected {n_cols}", rows[0][0][0])
    m = PosyMatrix(len(rows), width)
    for i, row in enumerate(rows):
        for j, (ln, text) in enumerate(row):
            f = _parse_entry(text, ln)
            if f is not None:
                m.set(i, j, f)
    return m


def parse_problem_text(text, source="<string>"):
    """Parse problem text into a validated ProblemBundle."""
    sections = _split_sections(text)
    if "vars" not in sections:
        raise ParseError("missing [vars] section")
    names = []
    for ln, line in sections["vars"]:
        for piece in re.split(r"[\s,]+", line):
            if piece:
                if not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", piece):
                    raise ParseError(f"invalid variable name {piece!r}", ln)
                names.append(piece)
    try:
        vs = VarSpace(names)
    except ValueError as exc:
        raise ParseError(str(exc)) from None

    atilde = _parse_matrix(sections, "Atilde")
    if atilde is None:
        raise ParseError("missing [Atilde] section")
    nx = atilde.rows
    if atilde.cols != nx:
        raise ParseError(f"[Atilde] must be square, got {atilde.rows}x{atilde.cols}")

    r_mono = None
    r0 = None
    R = None
    if "r" in sections and "R" in sections:
        raise ParseError("give either [R] or the [r]/[R0] factorization, not both")
    if "r" in sections:
        ln, text_r = sections["r"][0]
        f = parse_expression(text_r, ln)
        if not f.is_monomial():
            raise ParseError("[r] must be a monomial", ln)
        r_mono = f.as_monomial()
        if "R0" not in sections:
            raise ParseError("[r] requires an [R0] diagonal")
        lines = sections["R0"]
        vals = []
        for ln0, line in lines:
            for piece in re.split(r"[\s,]+", line):
                if piece:
                    try:
                        vals.append(float(piece))
                    except ValueError:
                        raise ParseError(f"invalid R0 entry {piece!r}", ln0) from None
        if len(vals) != nx:
            raise ParseError(f"[R0] has {len(vals)} entries, expected {nx}")
        if min(vals) <= 0:
            raise ParseError("[R0] entries must be positive")
        r0 = np.array(vals)
    elif "R" in sections:
        entries = []
        for ln, line in sections["R"]:
            for piece in line.split(","):
                piece = piece.strip()
                if piece:
                    f = parse_expression(piece, ln)
                    if not f.is_monomial():
                        raise ParseError("[R] diagonals must be monomials", ln)
                    entries.append(f.as_monomial())
        if len(entries) != nx:
            raise ParseError(f"[R] has {len(entries)} diagonals, expected {nx}")
        R = DiagMonoMatrix(tuple(entries))
    else:
        raise ParseError("missing damping: provide [R] or [r] with [R0]")

    B = _parse_matrix(sections, "B")
    C = _parse_matrix(sections, "C")
    if B is None or C is None:
        raise ParseError("missing [B] or [C] section")
    if B.rows != nx:
        raise ParseError(f"[B] has {B.rows} rows, expected {nx}")
    if C.cols != nx:
        raise ParseError(f"[C] has {C.cols} columns, expected {nx}")

    Ad = _parse_matrix(sections, "Ad", n_cols=None)
    Cd = _parse_matrix(sections, "Cd")
    h = _section_scalar(sections, "h")
    if Ad is not None:
        if Ad.rows != nx or Ad.cols != nx:
            raise ParseError(f"[Ad] must be {nx}x{nx}")
        if h is None:
            raise ParseError("[Ad] requires a delay [h]")
        if Cd is not None and Cd.shape != C.shape:
            raise ParseError("[Cd] must match [C] dimensions")
    elif h is not None or Cd is not None:
        raise ParseError("[h]/[Cd] require an [Ad] block")

    if "cost" not in sections:
        raise ParseError("missing [cost] section")
    ln_cost = sections["cost"][0][0]
    cost_text = " + ".join(t for _, t in sections["cost"])
    ltilde = parse_expression(cost_text, ln_cost)
    l0 = _section_scalar(sections, "L0")
    cost = CostSpec(ltilde, 0.0 if l0 is None else l0)

    theta_cons = []
    for ln, line in sections.get("theta", []):
        theta_cons.append(parse_expression(line, ln))
    theta = ThetaSet(tuple(theta_cons))

    try:
        if r_mono is not None:
            system = ParamSystem(vs, atilde, B=B, C=C, r=r_mono, R0=r0,
                                 Ad=Ad, Cd=Cd, h=h)
        else:
            system = ParamSystem(vs, atilde, R, B=B, C=C, Ad=Ad, Cd=Cd, h=h)
    except (ValueError, KeyError) as exc:
        raise ParseError(f"invalid system: {exc}") from None

    used = ltilde.variables()
    for f in theta_cons:
        used |= f.variables()
    unknown = sorted(nm for nm in used if nm not in vs)
    if unknown:
        raise ParseError(f"cost/theta reference undeclared variables: {unknown}")

    tradeoff = None
    if "tradeoff" in sections:
        ln, text_t = sections["tradeoff"][0]
        tradeoff = parse_expression(" + ".join(t for _, t in sections["tradeoff"]), ln)

    unc = None
    if "uncertainty" in sections:
        full = []
        scalars = 0
        for ln, line in sections["uncertainty"]:
            for piece in re.split(r"[\s,]+", line):
                if not piece:
                    continue
                m = re.fullmatch(r"(full|scalar)=(\d+(?:,\d+)*)", piece)
                if m is None:
                    raise ParseError(f"invalid uncertainty item {piece!r} "
                                     "(use full=SIZE or scalar=COUNT)", ln)
                if m.group(1) == "full":
                    full.extend(int(x) for x in m.group(2).split(","))
                else:
                    scalars += int(m.group(2))
        unc = (tuple(full), scalars)

    options = {}
    for ln, line in sections.get("options", []):
        for piece in re.split(r"\s+", line.strip()):
            if not piece:
                continue
            if "=" not in piece:
                raise ParseError(f"options are key=value pairs, got {piece!r}", ln)
            key, val = piece.split("=", 1)
            if key not in ("strict_margin", "series_order", "max_iters"):
                raise ParseError(f"unknown option {key!r}", ln)
            try:
                options[key] = int(val) if key in ("series_order", "max_iters") else float(val)
            except ValueError:
                raise ParseError(f"invalid value for option {key!r}", ln) from None

    p_val = _section_scalar(sections, "p", conv=int)
    return ProblemBundle(
        system=system,
        cost=cost,
        theta=theta,
        gamma=_section_scalar(sections, "gamma"),
        schatten_p=p_val,
        eps=_section_scalar(sections, "eps"),
        tradeoff=tradeoff,
        uncertainty_blocks=unc,
        options=options,
    )


def parse_problem(path):
    """Parse a problem file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem_text(fh.read(), source=str(path))


# ---------------------------------------------------------------------------
# canonical serialization (report echo; reparses to the same bundle)


def _num_to_str(x):
    return repr(float(x))


def mono_to_str(m):
    parts = [_num_to_str(m.coeff)]
    denom = []
    for name, a in sorted(m.exponents.items()):
        if a > 0:
            parts.append(name if a == 1.0 else f"{name}^{_num_to_str(a)}")
        else:
            denom.append(name if a == -1.0 else f"{name}^{_num_to_str(-a)}")
    out = "*".join(parts)
    for d in denom:
        out += "/" + d
    return out


def posy_to_str(f):
    return " + ".join(mono_to_str(t) for t in f.canonical_terms())


def _matrix_lines(m):
    lines = []
    for i in range(m.rows):
        entries = []
        for j in range(m.cols):
            f = m.get(i, j)
            entries.append("0" if f is None else posy_to_str(f))
        lines.append(", ".join(entries))
    return lines


def serialize_bundle(b):
    """Canonical problem text; parsing it again reproduces the bundle."""
    out = ["[vars] " + " ".join(b.vars.names)]
    out.append("[Atilde]")
    out.extend(_matrix_lines(b.system.Atilde))
    if b.system.has_r0_factorization:
        out.append("[r] " + mono_to_str(b.system.r))
        out.append("[R0] " + ", ".join(_num_to_str(x) for x in b.system.R0))
    else:
        out.append("[R] " + ", ".join(mono_to_str(d) for d in b.system.R.diagonals))
    out.append("[B]")
    out.extend(_matrix_lines(b.system.B))
    out.append("[C]")
    out.extend(_matrix_lines(b.system.C))
    if b.system.has_delay:
        out.append("[Ad]")
        out.extend(_matrix_lines(b.system.Ad))
        out.append("[Cd]")
        out.extend(_matrix_lines(b.system.Cd))
        out.append("[h] " + _num_to_str(b.system.h))
    out.append("[cost] " + posy_to_str(b.cost.Ltilde))
    out.append("[L0] " + _num_to_str(b.cost.L0))
    if b.theta.constraints:
        out.append("[theta]")
        out.extend(posy_to_str(f) for f in b.theta.constraints)
    if b.gamma is not None:
        out.append("[gamma] " + _num_to_str(b.gamma))
    if b.schatten_p is not None:
        out.append(f"[p] {b.schatten_p}")
    if b.eps is not None:
        out.append("[eps] " + _num_to_str(b.eps))
    if b.tradeoff is not None:
        out.append("[tradeoff] " + posy_to_str(b.tradeoff))
    if b.uncertainty_blocks is not None:
        full, scalars = b.uncertainty_blocks
        items = [f"full={sz}" for sz in full]
        if scalars:
            items.append(f"scalar={scalars}")
        out.append("[uncertainty] " + " ".join(items))
    if b.options:
        out.append("[options] " + " ".join(f"{k}={v}" for k, v in sorted(b.options.items())))
    return "\n".join(out) + "\n"
