"""Minimal linear model container with CPLEX-LP text I/O and a scipy bridge."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Iterable, Mapping

import numpy as np

BINARY = "B"
CONTINUOUS = "C"


class ModelTooLarge(RuntimeError):
    pass


@dataclass
class Var:
    name: str
    kind: str = CONTINUOUS
    lb: float = 0.0
    ub: float = math.inf


@dataclass
class Constraint:
    name: str
    family: str
    terms: dict[str, float]
    sense: str  # "<=", ">=" or "="
    rhs: float

    def activity(self, values: Mapping[str, float]) -> float:
        return sum(c * values.get(v, 0.0) for v, c in self.terms.items())

    def violation(self, values: Mapping[str, float]) -> float:
        lhs = self.activity(values)
        if self.sense == "<=":
            return max(lhs - self.rhs, 0.0)
        if self.sense == ">=":
            return max(self.rhs - lhs, 0.0)
        return abs(lhs - self.rhs)


@dataclass
class Model:
    name: str = "model"
    vars: dict[str, Var] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[str, float] = field(default_factory=dict)
    max_vars: int | None = None

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0, ub: float = math.inf) -> str:
        if name in self.vars:
            raise ValueError(f"duplicate variable {name}")
        if self.max_vars is not None and len(self.vars) >= self.max_vars:
            raise ModelTooLarge(f"more than {self.max_vars} variables")
        if kind == BINARY:
            lb, ub = 0.0, 1.0
        self.vars[name] = Var(name, kind, lb, ub)
        return name

    def add_constr(
        self, family: str, terms: Mapping[str, float] | Iterable[tuple[str, float]],
        sense: str, rhs: float = 0.0,
    ) -> Constraint:
        merged: dict[str, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for v, c in items:
            if v not in self.vars:
                raise KeyError(f"unknown variable {v}")
            merged[v] = merged.get(v, 0.0) + c
        merged = {v: c for v, c in merged.items() if c != 0.0}
        con = Constraint(f"c{len(self.constraints) + 1}", family, merged, sense, float(rhs))
        self.constraints.append(con)
        return con

    def binaries(self) -> list[str]:
        return [v.name for v in self.vars.values() if v.kind == BINARY]

    def family_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for c in self.constraints:
            out[c.family] = out.get(c.family, 0) + 1
        return out

    def violations(self, values: Mapping[str, float], tol: float = 1e-7) -> list[Constraint]:
        return [c for c in self.constraints if c.violation(values) > tol]

    # ---- scipy --------------------------------------------------------------------

    def to_arrays(self):
        """(names, c, A (csr), lower, upper, integrality, var lb, var ub) for scipy.optimize.milp."""
        from scipy.sparse import csr_matrix

        names = list(self.vars)
        index = {n: i for i, n in enumerate(names)}
        c = np.zeros(len(names))
        for v, coef in self.objective.items():
            c[index[v]] = coef
        rows, cols, data = [], [], []
        lower = np.empty(len(self.constraints))
        upper = np.empty(len(self.constraints))
        for k, con in enumerate(self.constraints):
            for v, coef in con.terms.items():
                rows.append(k)
                cols.append(index[v])
                data.append(coef)
            lower[k] = con.rhs if con.sense in (">=", "=") else -np.inf
            upper[k] = con.rhs if con.sense in ("<=", "=") else np.inf
        a = csr_matrix((data, (rows, cols)), shape=(len(self.constraints), len(names)))
        integrality = np.array([1 if self.vars[n].kind == BINARY else 0 for n in names])
        lb = np.array([self.vars[n].lb for n in names])
        ub = np.array([self.vars[n].ub for n in names])
        return names, c, a, lower, upper, integrality, lb, ub


# ---- LP text ------------------------------------------------------------------------


def _fmt(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _expr(terms: Mapping[str, float], per_line: int = 8) -> str:
    if not terms:
        return "0"
    parts = []
    for k, (v, c) in enumerate(terms.items()):
        sign = "-" if c < 0 else "+"
        piece = f"{sign} {_fmt(abs(c))} {v}"
        if k == 0 and sign == "+":
            piece = f"{_fmt(c)} {v}"
        parts.append(piece)
    lines = [" ".join(parts[i:i + per_line]) for i in range(0, len(parts), per_line)]
    return "\n   ".join(lines)


def dumps_lp(model: Model) -> str:
    out = [f"\\ {model.name}", "Minimize"]
    out.append(f" obj: {_expr(model.objective)}")
    out.append("Subject To")
    for con in model.constraints:
        out.append(f" {con.name}: {_expr(con.terms)} {con.sense} {_fmt(con.rhs)}")
    out.append("Bounds")
    for v in model.vars.values():
        if v.kind == BINARY:
            continue
        lo = "-inf" if v.lb == -math.inf else _fmt(v.lb)
        hi = "+inf" if v.ub == math.inf else _fmt(v.ub)
        out.append(f" {lo} <= {v.name} <= {hi}")
    out.append("Binaries")
    bins = model.binaries()
    for i in range(0, len(bins), 8):
        out.append(" " + " ".join(bins[i:i + 8]))
    out.append("End")
    return "\n".join(out) + "\n"


def emit_lp(model: Model, path: str | FilePath) -> None:
    FilePath(path).write_text(dumps_lp(model))


_SECTIONS = {"minimize": "obj", "subject to": "st", "bounds": "bounds", "binaries": "bin", "end": "end"}


def _parse_expr(text: str) -> dict[str, float]:
    text = text.strip()
    terms: dict[str, float] = {}
    if text == "0":
        return terms
    tokens = text.split()
    sign, coef = 1.0, None
    for tok in tokens:
        if tok in "+-":
            sign = -1.0 if tok == "-" else 1.0
            continue
        try:
            coef = float(tok)
            continue
        except ValueError:
            pass
        c = sign * (coef if coef is not None else 1.0)
        terms[tok] = terms.get(tok, 0.0) + c
        sign, coef = 1.0, None
    return terms


def loads_lp(text: str, family_of: Mapping[str, str] | None = None) -> Model:
    """Parse the subset of CPLEX-LP that :func:`dumps_lp` writes."""
    model = Model()
    section = None
    statements: dict[str, list[str]] = {"obj": [], "st": [], "bounds": [], "bin": []}
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            if section is None:
                model.name = line[1:].strip()
            continue
        key = _SECTIONS.get(line.lower())
        if key is not None:
            section = key
            continue
        if section in ("obj", "st") and raw.startswith("   ") and statements[section]:
            statements[section][-1] += " " + line
        elif section in statements:
            statements[section].append(line)

    bounds: dict[str, tuple[float, float]] = {}
    for line in statements["bounds"]:
        lo, _, name, _, hi = line.split()
        bounds[name] = (float(lo), float(hi))
    binaries = {name for line in statements["bin"] for name in line.split()}

    parsed = []
    for line in statements["st"]:
        name, _, body = line.partition(":")
        m = re.search(r"(<=|>=|=)\s*(\S+)\s*$", body)
        if m is None:
            raise ValueError(f"bad constraint line: {line}")
        parsed.append((name.strip(), _parse_expr(body[: m.start()]), m.group(1), float(m.group(2))))
    obj = _parse_expr(statements["obj"][0].partition(":")[2]) if statements["obj"] else {}

    order: list[str] = []
    seen: set[str] = set()

    def note(names: Iterable[str]) -> None:
        for n in names:
            if n not in seen:
                seen.add(n)
                order.append(n)

    note(obj)
    for _, terms, _, _ in parsed:
        note(terms)
    note(bounds)
    for line in statements["bin"]:
        note(line.split())
    for n in order:
        if n in binaries:
            model.add_var(n, BINARY)
        else:
            lo, hi = bounds.get(n, (0.0, math.inf))
            model.add_var(n, CONTINUOUS, lo, hi)
    model.objective = obj
    for name, terms, sense, rhs in parsed:
        fam = family_of.get(name, "") if family_of else ""
        model.constraints.append(Constraint(name, fam, terms, sense, rhs))
    return model


def read_lp(path: str | FilePath) -> Model:
    return loads_lp(FilePath(path).read_text())


def loads_solution(text: str) -> dict[str, float]:
    """``<name> <value>`` per line."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"solution line {lineno}: expected '<name> <value>'")
        values[parts[0]] = float(parts[1])
    return values


def dumps_solution(values: Mapping[str, float]) -> str:
    return "".join(f"{k} {_fmt(v)}\n" for k, v in values.items())
