"""Exhaustive optimum for small instances, and the full MIP written in LP format.

Variable names (0-based; query index 0 is the offline load, queries are 1..m):
``save_j``, ``raw_i``, ``t_i_j``, ``p_i_j``, ``read_i_j`` and, for the pipelined
model, ``cpu_i``, ``io_i``, ``cpuraw_i``, ``ioraw_i``, ``cput_i_j``, ``iot_i_j``,
``cpup_i_j``, ``iop_i_j``.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from .costs import PIPELINED, SERIAL, WorkloadCost, parse_threshold
from .model import CostParams, CostReport, ModeError, TokenizationMode, Workload

MAX_CANDIDATES = 24


class InstanceTooLarge(ValueError):
    pass


# -- brute force ---------------------------------------------------------------


def _search(wc: WorkloadCost, cands: list[int], budget: float, fixed: int, start: int):
    """Best (objective, sorted attrs) over extensions of ``fixed`` by ``cands[start:]``."""
    col = wc.col_bytes
    weights = wc.weights
    n_q = len(weights)
    best = [math.inf, ()]
    load = wc.model.load_seconds  # uncached: the load memo would hold every subset

    def evaluate(mask):
        key = tuple(wc.bits(mask))
        obj = load(key)
        for i in range(n_q):
            obj += weights[i] * wc.query_seconds(i, mask)
        if obj < best[0] or (obj == best[0] and key < best[1]):
            best[0], best[1] = obj, key

    def walk(pos, mask, used):
        if pos == len(cands):
            evaluate(mask)
            return
        j = cands[pos]
        if used + col[j] <= budget:
            walk(pos + 1, mask | 1 << j, used + col[j])
        walk(pos + 1, mask, used)

    fixed_used = sum(col[j] for j in wc.bits(fixed))
    if fixed_used <= budget:
        walk(start, fixed, fixed_used)
    return best[0], best[1]


def _worker(args):
    params, workload, mode, cands, budget, fixed, start = args
    wc = WorkloadCost(params, workload, mode)
    return _search(wc, cands, budget, fixed, start)


def brute_force(
    params: CostParams, workload: Workload, budget: float, mode: str = SERIAL, workers: int = 1
) -> tuple[frozenset[int], CostReport]:
    """Global optimum over all budget-feasible subsets of the referenced attributes.

    Ties go to the lexicographically smallest attribute tuple.
    """
    wc = WorkloadCost(params, workload, mode)
    cands = wc.referenced
    if len(cands) > MAX_CANDIDATES:
        raise InstanceTooLarge(
            f"{len(cands)} referenced attributes; exhaustive search is capped at {MAX_CANDIDATES}"
        )
    if workers <= 1 or len(cands) < 8:
        results = [_search(wc, cands, budget, 0, 0)]
    else:
        # fix the first few include/exclude decisions, one task per prefix
        depth = min(len(cands) - 1, max(1, (workers * 4 - 1).bit_length()))
        tasks = []
        for prefix in range(1 << depth):
            fixed = 0
            for b in range(depth):
                if prefix >> b & 1:
                    fixed |= 1 << cands[b]
            tasks.append((params, workload, mode, cands, budget, fixed, depth))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, tasks))
    obj, key = min(results, key=lambda r: (r[0], r[1]))
    loaded = frozenset(key)
    return loaded, wc.report(loaded)


# -- MIP in LP format ----------------------------------------------------------


@dataclass
class MipModel:
    objective: dict[str, float] = field(default_factory=dict)
    constraints: list[tuple[str, dict[str, float], str, float]] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)

    def var(self, name: str) -> str:
        self.binaries.append(name)
        return name

    def add(self, name: str, terms: dict[str, float], sense: str, rhs: float) -> None:
        self.constraints.append((name, terms, sense, rhs))


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def build_mip(params: CostParams, workload: Workload, budget: float, mode: str = SERIAL) -> MipModel:
    if mode not in (SERIAL, PIPELINED):
        raise ValueError(f"unknown mode {mode!r}")
    atomic = params.tokenization_mode is not TokenizationMode.PREFIX
    if mode == PIPELINED and not atomic:
        raise ModeError("the pipelined MIP needs atomic or no tokenization")
    n, m = params.n, workload.m
    rows = params.row_count
    band = params.bandwidth
    raw_t = params.raw_size / band
    attrs = params.attributes
    mip = MipModel()
    obj = mip.objective

    save = [mip.var(f"save_{j}") for j in range(n)]
    raw = [mip.var(f"raw_{i}") for i in range(m + 1)]
    t = [[mip.var(f"t_{i}_{j}") for j in range(n)] for i in range(m + 1)]
    p = [[mip.var(f"p_{i}_{j}") for j in range(n)] for i in range(m + 1)]
    read = [None] + [[mip.var(f"read_{i}_{j}") for j in range(n)] for i in range(1, m + 1)]

    # load (query 0) is never pipelined
    obj[raw[0]] = raw_t
    for j, a in enumerate(attrs):
        obj[t[0][j]] = rows * a.t_tok
        obj[p[0][j]] = rows * a.t_parse
        obj[save[j]] = rows * a.spf / band
    for i, q in enumerate(workload.queries, start=1):
        w = q.weight
        for j, a in enumerate(attrs):
            obj[read[i][j]] = w * rows * a.spf / band
        if mode == SERIAL:
            obj[raw[i]] = w * raw_t
            for j, a in enumerate(attrs):
                obj[t[i][j]] = w * rows * a.t_tok
                obj[p[i][j]] = w * rows * a.t_parse

    mip.add("c1", {save[j]: rows * attrs[j].spf for j in range(n)}, "<=", budget)
    for i in range(1, m + 1):
        for j in range(n):
            mip.add(f"c2_{i}_{j}", {read[i][j]: 1, save[j]: -1}, "<=", 0)
    for j in range(n):
        mip.add(f"c3a_{j}", {save[j]: 1, p[0][j]: -1}, "<=", 0)
        mip.add(f"c3b_{j}", {p[0][j]: 1, t[0][j]: -1}, "<=", 0)
        mip.add(f"c3c_{j}", {t[0][j]: 1, raw[0]: -1}, "<=", 0)
    for i in range(1, m + 1):
        for j in range(n):
            mip.add(f"c4a_{i}_{j}", {p[i][j]: 1, t[i][j]: -1}, "<=", 0)
            mip.add(f"c4b_{i}_{j}", {t[i][j]: 1, raw[i]: -1}, "<=", 0)
    for i in range(m + 1):
        if atomic:
            for j in range(1, n):
                mip.add(f"c5_{i}_{j}", {t[i][j]: 1, t[i][0]: -1}, "=", 0)
        else:
            for j in range(1, n):
                for k in range(j):
                    mip.add(f"c5_{i}_{j}_{k}", {t[i][j]: 1, t[i][k]: -1}, "<=", 0)
    for i, q in enumerate(workload.queries, start=1):
        for j in sorted(q.attrs):
            mip.add(f"c6_{i}_{j}", {read[i][j]: 1, p[i][j]: 1}, "=", 1)

    if mode == PIPELINED:
        pt = parse_threshold(params).pt
        # big-M of n+1 (and PT capped at n+1) keeps C17/C18 feasible at PT = 0 and PT > n
        big = n + 1
        pt_eff = min(pt, big)
        for i, q in enumerate(workload.queries, start=1):
            w = q.weight
            cpu, io = mip.var(f"cpu_{i}"), mip.var(f"io_{i}")
            cpuraw, ioraw = mip.var(f"cpuraw_{i}"), mip.var(f"ioraw_{i}")
            cput = [mip.var(f"cput_{i}_{j}") for j in range(n)]
            iot = [mip.var(f"iot_{i}_{j}") for j in range(n)]
            cpup = [mip.var(f"cpup_{i}_{j}") for j in range(n)]
            iop = [mip.var(f"iop_{i}_{j}") for j in range(n)]
            obj[ioraw] = w * raw_t
            for j, a in enumerate(attrs):
                obj[cput[j]] = w * rows * a.t_tok
                obj[cpup[j]] = w * rows * a.t_parse
            mip.add(f"c7_{i}", {cpu: 1, io: 1}, "=", 1)
            mip.add(f"c8_{i}", {cpuraw: 1, ioraw: 1, raw[i]: -1}, "=", 0)
            for j in range(n):
                mip.add(f"c9_{i}_{j}", {cput[j]: 1, iot[j]: 1, t[i][j]: -1}, "=", 0)
                mip.add(f"c10_{i}_{j}", {cpup[j]: 1, iop[j]: 1, p[i][j]: -1}, "=", 0)
            mip.add(f"c11_{i}", {cpuraw: 1, cpu: -1}, "<=", 0)
            for j in range(n):
                mip.add(f"c12_{i}_{j}", {cput[j]: 1, cpu: -1}, "<=", 0)
                mip.add(f"c13_{i}_{j}", {cpup[j]: 1, cpu: -1}, "<=", 0)
            mip.add(f"c14_{i}", {ioraw: 1, io: -1}, "<=", 0)
            for j in range(n):
                mip.add(f"c15_{i}_{j}", {iot[j]: 1, io: -1}, "<=", 0)
                mip.add(f"c16_{i}_{j}", {iop[j]: 1, io: -1}, "<=", 0)
            # strict "sum p - PT < cpu * M" over integers: sum p - M * cpu <= PT - 1
            c17 = {p[i][j]: 1 for j in range(n)}
            c17[cpu] = -big
            mip.add(f"c17_{i}", c17, "<=", pt_eff - 1)
            c18 = {p[i][j]: -1 for j in range(n)}
            c18[io] = -big
            mip.add(f"c18_{i}", c18, "<=", -pt_eff)
    return mip


def _expr(terms: dict[str, float], per_line: int = 6) -> list[str]:
    parts = []
    for name, coef in terms.items():
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {name}")
    if not parts:
        return []
    if parts[0].startswith("+ "):
        parts[0] = parts[0][2:]
    return [" ".join(parts[k : k + per_line]) for k in range(0, len(parts), per_line)]


def to_lp(mip: MipModel, comment: str | None = None) -> str:
    out = []
    if comment:
        out += [f"\\ {line}" for line in comment.splitlines()]
    out.append("Minimize")
    obj_lines = _expr(mip.objective) or [f"0 {mip.binaries[0]}"]
    out.append(" obj: " + obj_lines[0])
    out += ["   " + line for line in obj_lines[1:]]
    out.append("Subject To")
    for name, terms, sense, rhs in mip.constraints:
        lines = _expr(terms)
        out.append(f" {name}: " + lines[0])
        out += ["   " + line for line in lines[1:]]
        out[-1] += f" {sense} {_num(rhs)}"
    out.append("Binaries")
    for k in range(0, len(mip.binaries), 10):
        out.append(" " + " ".join(mip.binaries[k : k + 10]))
    out.append("End")
    return "\n".join(out) + "\n"


def export_mip_lp(params: CostParams, workload: Workload, budget: float, mode: str = SERIAL) -> str:
    mip = build_mip(params, workload, budget, mode)
    comment = (
        f"partial loading MIP, {mode} mode, tokenization {params.tokenization_mode.value}\n"
        f"n={params.n} m={workload.m} budget={_num(budget)} bytes"
    )
    return to_lp(mip, comment)


# -- LP grammar check ----------------------------------------------------------


class LPFormatError(ValueError):
    pass


@dataclass
class ParsedLP:
    sense: str
    objective: dict[str, float]
    constraints: list[tuple[str, dict[str, float], str, float]]
    binaries: list[str]
    generals: list[str]
    bounds: list[str]

    @property
    def variables(self) -> set[str]:
        names = set(self.objective) | set(self.binaries) | set(self.generals)
        for _, terms, _, _ in self.constraints:
            names |= set(terms)
        return names


_SECTION = {
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "maximize": "obj", "maximum": "obj", "max": "obj",
    "subject to": "st", "such that": "st", "st": "st", "s.t.": "st",
    "bounds": "bounds", "bound": "bounds",
    "binaries": "bin", "binary": "bin", "bin": "bin",
    "generals": "gen", "general": "gen", "gen": "gen",
    "end": "end",
}
_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_NUMBER = r"(?:\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|inf(?:inity)?)"
_TOKEN = re.compile(rf"\s*(?:(?P<num>{_NUMBER})|(?P<name>{_NAME})|(?P<op><=|>=|=<|=>|<|>|=)|(?P<sign>[+-])|(?P<colon>:))", re.I)


def _tokens(text: str, where: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise LPFormatError(f"{where}: unexpected text {text[pos:pos + 20]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def _linear(tokens, where: str) -> dict[str, float]:
    terms: dict[str, float] = {}
    k = 0
    expect_sign = False
    while k < len(tokens):
        sign = 1.0
        if tokens[k][0] == "sign":
            sign = -1.0 if tokens[k][1] == "-" else 1.0
            k += 1
        elif expect_sign:
            raise LPFormatError(f"{where}: missing operator between terms")
        coef = 1.0
        if k < len(tokens) and tokens[k][0] == "num":
            coef = float(tokens[k][1])
            k += 1
        if k >= len(tokens) or tokens[k][0] != "name":
            raise LPFormatError(f"{where}: expected a variable name")
        name = tokens[k][1]
        if name.lower() in ("inf", "infinity") or re.fullmatch(r"[eE]\d.*", name):
            raise LPFormatError(f"{where}: invalid variable name {name!r}")
        terms[name] = terms.get(name, 0.0) + sign * coef
        k += 1
        expect_sign = True
    return terms


def parse_lp(text: str) -> ParsedLP:
    """Parse (a subset of) the LP text format, raising ``LPFormatError`` on bad syntax."""
    section = None
    sense = None
    obj_buf: list[str] = []
    cons_buf: list[str] = []
    binaries: list[str] = []
    generals: list[str] = []
    bounds: list[str] = []
    ended = False
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("\\", 1)[0].strip()
        if not line:
            continue
        if ended:
            raise LPFormatError(f"line {lineno}: content after End")
        key = line.lower()
        if key in _SECTION:
            new = _SECTION[key]
            if new == "obj":
                if sense is not None:
                    raise LPFormatError(f"line {lineno}: second objective section")
                sense = "max" if key.startswith("max") else "min"
            elif sense is None:
                raise LPFormatError(f"line {lineno}: {line!r} before the objective sense")
            if new == "end":
                ended = True
            section = new
            continue
        if section is None:
            raise LPFormatError(f"line {lineno}: text before the objective sense")
        if section == "obj":
            obj_buf.append(line)
        elif section == "st":
            cons_buf.append(line)
        elif section == "bin":
            binaries += line.split()
        elif section == "gen":
            generals += line.split()
        elif section == "bounds":
            bounds.append(line)
    if sense is None:
        raise LPFormatError("no objective section")
    if not ended:
        raise LPFormatError("missing End")

    obj_toks = _tokens(" ".join(obj_buf), "objective")
    if len(obj_toks) >= 2 and obj_toks[0][0] == "name" and obj_toks[1][0] == "colon":
        obj_toks = obj_toks[2:]
    objective = _linear(obj_toks, "objective") if obj_toks else {}

    # constraints may span lines; each ends with "<sense> <rhs>"
    constraints = []
    names = set()
    pending: list = []
    for line in cons_buf:
        pending += _tokens(line, "constraint")
        if len(pending) >= 2 and pending[-2][0] == "op" and pending[-1][0] in ("num",):
            constraints.append(pending)
            pending = []
        elif len(pending) >= 3 and pending[-3][0] == "op" and pending[-2][0] == "sign" and pending[-1][0] == "num":
            constraints.append(pending)
            pending = []
    if pending:
        raise LPFormatError("unterminated constraint")
    parsed = []
    for k, toks in enumerate(constraints):
        name = f"R{k}"
        if len(toks) >= 2 and toks[0][0] == "name" and toks[1][0] == "colon":
            name = toks[0][1]
            toks = toks[2:]
        if name in names:
            raise LPFormatError(f"duplicate constraint name {name!r}")
        names.add(name)
        ops = [i for i, tk in enumerate(toks) if tk[0] == "op"]
        if len(ops) != 1:
            raise LPFormatError(f"{name}: expected exactly one relational operator")
        op_at = ops[0]
        op = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">="}.get(toks[op_at][1], toks[op_at][1])
        rhs_toks = toks[op_at + 1 :]
        rhs = float(rhs_toks[-1][1]) * (-1 if rhs_toks[0] == ("sign", "-") else 1)
        terms = _linear(toks[:op_at], name)
        if not terms:
            raise LPFormatError(f"{name}: empty left-hand side")
        parsed.append((name, terms, op, rhs))
    for v in binaries + generals:
        if not re.fullmatch(_NAME, v):
            raise LPFormatError(f"invalid variable name {v!r} in a declaration section")
    return ParsedLP(sense, objective, parsed, binaries, generals, bounds)


def validate_lp(text: str) -> ParsedLP:
    """Grammar check plus: every variable used is declared binary, and no duplicates."""
    lp = parse_lp(text)
    declared = set(lp.binaries) | set(lp.generals)
    if len(declared) != len(lp.binaries) + len(lp.generals):
        raise LPFormatError("a variable is declared twice")
    undeclared = lp.variables - declared
    if undeclared:
        raise LPFormatError(f"undeclared variables, e.g. {sorted(undeclared)[0]!r}")
    return lp
