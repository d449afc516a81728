"""CPLEX-LP text export and a reader for the same subset.

The subset covers a linear objective, named rows with <=, >= or = and a
constant right-hand side, and a Bounds section. Every column is listed in the
objective (zero coefficients included) so the column order survives a round trip.
"""
import logging
import math
import re
from pathlib import Path
from typing import Dict, List, Tuple

from app.core.errors import LpError
from app.core.lp import LpProblem

logger = logging.getLogger(__name__)

_BAD_CHARS = re.compile(r"[^A-Za-z0-9!\"#$%&()/,.;?@_`'{}|~]")
_TERMS_PER_LINE = 6
_SECTIONS = {
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "maximize": "obj", "maximum": "obj", "max": "obj",
    "subject to": "rows", "such that": "rows", "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "bound": "bounds", "end": "end",
}


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "+inf" if v > 0 else "-inf"
    return f"{v:.17g}"


def _safe_names(names: List[str]) -> List[str]:
    out, seen = [], set()
    for name in names:
        safe = _BAD_CHARS.sub("_", name)
        if not safe or safe[0].isdigit() or safe[0] in ".eE":
            safe = "v" + safe
        base, k = safe, 1
        while safe in seen:
            safe = f"{base}~{k}"
            k += 1
        seen.add(safe)
        out.append(safe)
    return out


def _expression(coeffs: List[Tuple[float, str]]) -> str:
    chunks, line = [], []
    for n, (v, name) in enumerate(coeffs):
        sign = "-" if v < 0 else "+"
        term = f"{sign} {_fmt(abs(v))} {name}"
        if n == 0 and sign == "+":
            term = f"{_fmt(abs(v))} {name}"
        line.append(term)
        if len(line) == _TERMS_PER_LINE:
            chunks.append(" ".join(line))
            line = []
    if line:
        chunks.append(" ".join(line))
    return "\n   ".join(chunks)


def export_lp(problem: LpProblem, path) -> Path:
    if problem.n_vars == 0:
        raise LpError(f"refusing to export {problem.name}: no variables")
    names = _safe_names(problem.names)
    rows = _safe_names([r.name for r in problem.rows])

    lines = [f"\\ Problem: {problem.name}", "Maximize" if problem.sense == "max" else "Minimize"]
    lines.append(" obj: " + _expression([(problem.cost[i], names[i]) for i in range(problem.n_vars)]))
    lines.append("Subject To")
    for label, row in zip(rows, problem.rows):
        terms = [(v, names[c]) for c, v in sorted(row.coeffs.items())]
        if not terms:
            continue
        lines.append(f" {label}: {_expression(terms)} {row.sense} {_fmt(row.rhs)}")

    lines.append("Bounds")
    for name, lo, hi in zip(names, problem.lower, problem.upper):
        if lo == hi:
            lines.append(f" {name} = {_fmt(lo)}")
        elif math.isinf(lo) and math.isinf(hi):
            lines.append(f" {name} free")
        else:
            lines.append(f" {_fmt(lo)} <= {name} <= {_fmt(hi)}")
    lines.append("End")

    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise LpError(f"cannot write {target}: {e}")
    logger.info("[LP] exported %s (%d columns, %d rows) to %s", problem.name, problem.n_vars, problem.n_rows, target)
    return target


_TOKEN = re.compile(r"<=|>=|=<|=>|[<>=:]|[+-]|(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|[^\s<>=:+-]+")
_RELATIONS = ("<=", ">=", "=", "<", ">", "=<", "=>")


def _merge_signs(tokens: List[str]) -> List[str]:
    """Fold a sign into the number after it when it opens a bound or follows a relation"""
    out: List[str] = []
    for tok in tokens:
        if out and out[-1] in "+-" and (len(out) == 1 or out[-2] in _RELATIONS) and _is_number(tok):
            out[-1] = out[-1] + tok
        else:
            out.append(tok)
    return out


def _number(token: str) -> float:
    low = token.lower()
    if low in ("inf", "infinity"):
        return math.inf
    return float(token)


def _is_number(token: str) -> bool:
    try:
        _number(token)
        return True
    except ValueError:
        return False


def _parse_terms(tokens: List[str]) -> Dict[str, float]:
    """Sum of [sign] [coefficient] name terms"""
    out: Dict[str, float] = {}
    sign, coeff = 1.0, None
    for tok in tokens:
        if tok in "+-":
            sign = -sign if tok == "-" else sign
        elif _is_number(tok) and coeff is None:
            coeff = _number(tok)
        else:
            out[tok] = out.get(tok, 0.0) + sign * (1.0 if coeff is None else coeff)
            sign, coeff = 1.0, None
    return out


def read_lp(path) -> LpProblem:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise LpError(f"cannot read {path}: {e}")

    sections: Dict[str, List[str]] = {"obj": [], "rows": [], "bounds": []}
    current, sense, name = None, "min", Path(path).stem
    for raw in text.splitlines():
        line = raw.split("\\", 1)[0].strip()
        if raw.startswith("\\ Problem:"):
            name = raw.split(":", 1)[1].strip()
        if not line:
            continue
        key = line.lower()
        if key in _SECTIONS:
            current = _SECTIONS[key]
            if key.startswith("max"):
                sense = "max"
            if current == "end":
                break
            continue
        if current is None:
            raise LpError(f"{path}: text before the objective section: {line!r}")
        sections[current].append(line)

    problem = LpProblem(name, sense=sense)
    columns: Dict[str, int] = {}

    def col(var: str) -> int:
        if var not in columns:
            columns[var] = problem.add_var(var)
        return columns[var]

    obj_text = " ".join(sections["obj"])
    if ":" in obj_text:
        obj_text = obj_text.split(":", 1)[1]
    for var, v in _parse_terms(_TOKEN.findall(obj_text)).items():
        problem.cost[col(var)] += v

    # Rows may wrap; a row ends at its relation and right-hand side
    tokens = _TOKEN.findall(" ".join(sections["rows"]).replace(":", " : "))
    pending, label, count = [], None, 0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if i + 1 < len(tokens) and tokens[i + 1] == ":" and not pending:
            label = tok
            i += 2
            continue
        if tok in ("<=", ">=", "=", "<", ">", "=<", "=>"):
            rhs = tokens[i + 1]
            if rhs in "+-":
                rhs = rhs + tokens[i + 2]
                i += 1
            relation = {"<": "<=", "=<": "<=", ">": ">=", "=>": ">="}.get(tok, tok)
            coeffs = {col(var): v for var, v in _parse_terms(pending).items()}
            count += 1
            problem.add_row(label or f"r{count}", coeffs, relation, _number(rhs))
            pending, label = [], None
            i += 2
            continue
        pending.append(tok)
        i += 1
    if pending:
        raise LpError(f"{path}: row {label or count + 1} has no relation")

    for line in sections["bounds"]:
        _apply_bound(problem, col, _merge_signs(_TOKEN.findall(line)), path)

    if problem.n_vars == 0:
        raise LpError(f"{path}: no variables")
    return problem


def _apply_bound(problem: LpProblem, col, parts: List[str], path):
    if len(parts) == 2 and parts[1].lower() == "free":
        idx = col(parts[0])
        problem.lower[idx], problem.upper[idx] = -math.inf, math.inf
    elif len(parts) == 5 and parts[1] in ("<=", "<") and parts[3] in ("<=", "<"):
        idx = col(parts[2])
        problem.lower[idx], problem.upper[idx] = _number(parts[0]), _number(parts[4])
    elif len(parts) == 3 and parts[1] == "=":
        idx = col(parts[0])
        problem.lower[idx] = problem.upper[idx] = _number(parts[2])
    elif len(parts) == 3 and parts[1] in ("<=", ">="):
        if _is_number(parts[0]):
            idx, v, rel = col(parts[2]), _number(parts[0]), {"<=": ">=", ">=": "<="}[parts[1]]
        else:
            idx, v, rel = col(parts[0]), _number(parts[2]), parts[1]
        if rel == "<=":
            problem.upper[idx] = v
        else:
            problem.lower[idx] = v
    else:
        raise LpError(f"{path}: cannot parse bound {' '.join(parts)!r}")
