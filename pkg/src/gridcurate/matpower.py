"""MATPOWER case files (``.m`` function syntax): parse, lower to a Network, write.

Only the text form is supported::

    function mpc = case3
    mpc.baseMVA = 100;
    mpc.bus = [ 1 3 0 0 ... ; ... ];

Numeric tables other than bus/gen/branch/gencost are kept verbatim in
``CaseFile.extra`` and cell arrays of strings in ``CaseFile.cells`` so that
``parse(write_case(c)) == c``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

from .network import Branch, Bus, BusKind, CostPoly, FuelCategory, Generator, Network

Row = tuple[float, ...]

BUS_COLS = 13
GEN_COLS = 21
GEN_LEGACY_COLS = 10
BRANCH_COLS = 13
GENCOST_MIN_COLS = 4

_TABLE_MIN = {"bus": BUS_COLS, "branch": BRANCH_COLS, "gencost": GENCOST_MIN_COLS}

BUS_HEADER = "bus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin"
GEN_HEADER = ("bus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\tPc1\tPc2\t"
              "Qc1min\tQc1max\tQc2min\tQc2max\tramp_agc\tramp_10\tramp_30\tramp_q\tapf")
BRANCH_HEADER = "fbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax"

# genfuel labels: our category codes plus the names MATPOWER itself uses.
_FUEL_ALIASES = {
    "coal": FuelCategory.COW, "oil": FuelCategory.PEL, "ng": FuelCategory.NG,
    "nuclear": FuelCategory.NUC, "syncgen": FuelCategory.SYNC, "biomass": FuelCategory.BIO,
    "hydro": FuelCategory.DRN, "geothermal": FuelCategory.DRN, "wind": FuelCategory.RN,
    "solar": FuelCategory.RN,
}


class CaseFileError(ValueError):
    """Base class for case file problems."""


class CaseSyntaxError(CaseFileError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CaseFormatError(CaseFileError):
    def __init__(self, message: str, table: str = "", row: Optional[int] = None):
        where = f"{table} row {row}: " if row is not None else (f"{table}: " if table else "")
        super().__init__(where + message)
        self.table = table
        self.row = row


@dataclass(frozen=True)
class CaseFile:
    name: str
    base_mva: float
    bus: tuple[Row, ...]
    gen: tuple[Row, ...] = ()
    branch: tuple[Row, ...] = ()
    gencost: tuple[Row, ...] = ()
    comments: tuple[str, ...] = ()
    extra: tuple[tuple[str, tuple[Row, ...]], ...] = ()
    cells: tuple[tuple[str, tuple[str, ...]], ...] = ()
    version: str = "2"

    def cell(self, key: str) -> Optional[tuple[str, ...]]:
        for k, v in self.cells:
            if k == key:
                return v
        return None


# ---------------------------------------------------------------------------
# parsing

_NUM_RE = re.compile(r"[+-]?(?:(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?|Inf|inf|NaN|nan)")
_ASSIGN_RE = re.compile(r"\s*mpc\.(\w+)\s*=\s*")
_FUNC_RE = re.compile(r"\s*function\s+(?:\w+\s*=\s*)?(\w+)")


def _strip_comment(line: str) -> str:
    # '%' inside quoted strings is not a comment
    out, quoted = [], False
    for ch in line:
        if ch == "'":
            quoted = not quoted
        if ch == "%" and not quoted:
            break
        out.append(ch)
    return "".join(out)


def _parse_number(tok: str, line: int, col: int) -> float:
    if not _NUM_RE.fullmatch(tok):
        raise CaseSyntaxError(f"non-numeric entry {tok!r}", line, col)
    val = float(tok)
    if math.isnan(val):
        raise CaseSyntaxError("NaN entry", line, col)
    return val


def parse(text: str) -> CaseFile:
    """Parse MATPOWER case text into a :class:`CaseFile`."""
    lines = text.splitlines()
    name = "case"
    base_mva: Optional[float] = None
    version = "2"
    tables: dict[str, list[Row]] = {}
    order: list[str] = []
    cells: dict[str, list[str]] = {}
    comments: list[str] = []
    seen_assignment = False

    i = 0
    while i < len(lines):
        raw = lines[i]
        lineno = i + 1
        stripped = raw.strip()
        if not stripped:
            i += 1
            continue
        if stripped.startswith("%"):
            if not seen_assignment:
                comments.append(stripped[1:].lstrip(" ") if stripped.startswith("% ") else stripped[1:])
            i += 1
            continue
        m = _FUNC_RE.match(raw)
        if m and stripped.startswith("function"):
            name = m.group(1)
            i += 1
            continue
        m = _ASSIGN_RE.match(raw)
        if not m:
            code = _strip_comment(raw).strip()
            if code in ("", "end", "return"):
                i += 1
                continue
            raise CaseSyntaxError(f"unexpected statement {code!r}", lineno, len(raw) - len(raw.lstrip()) + 1)
        seen_assignment = True
        key = m.group(1)
        rest = _strip_comment(raw[m.end():])
        col0 = m.end() + 1
        rhs = rest.strip()
        if rhs.startswith("["):
            rows, i = _parse_matrix(lines, i, m.end(), "[", "]", key)
            if key in tables:
                raise CaseSyntaxError(f"duplicate table mpc.{key}", lineno, 1)
            tables[key] = rows
            order.append(key)
            continue
        if rhs.startswith("{"):
            vals, i = _parse_cells(lines, i, m.end(), key)
            cells[key] = vals
            continue
        val = rhs.rstrip(";").strip()
        if key == "version":
            version = val.strip("'\"")
        elif key == "baseMVA":
            base_mva = _parse_number(val, lineno, col0)
        else:
            tables[key] = [(_parse_number(val, lineno, col0),)]
            order.append(key)
        i += 1

    if base_mva is None:
        raise CaseFormatError("missing mpc.baseMVA")
    if "bus" not in tables:
        raise CaseFormatError("missing mpc.bus table")

    def take(key: str) -> tuple[Row, ...]:
        return tuple(tables.get(key, ()))

    case = CaseFile(
        name=name,
        base_mva=base_mva,
        bus=take("bus"),
        gen=take("gen"),
        branch=take("branch"),
        gencost=take("gencost"),
        comments=tuple(comments),
        extra=tuple((k, tuple(tables[k])) for k in order if k not in ("bus", "gen", "branch", "gencost")),
        cells=tuple((k, tuple(v)) for k, v in cells.items()),
        version=version,
    )
    check_columns(case)
    return case


def _parse_matrix(lines: list[str], i: int, start: int, open_: str, close: str, key: str):
    """Read a ``[ ... ];`` block starting at ``lines[i][start:]``."""
    rows: list[Row] = []
    current: list[float] = []
    first = True
    while i < len(lines):
        raw = lines[i]
        lineno = i + 1
        seg_start = start if first else 0
        body = _strip_comment(raw[seg_start:])
        offset = seg_start
        if first:
            pos = body.index(open_)
            body = body[pos + 1:]
            offset += pos + 1
            first = False
        closed = False
        if close in body:
            end = body.index(close)
            tail = body[end + 1:].strip()
            if tail not in ("", ";"):
                raise CaseSyntaxError(f"unexpected text after '{close}'", lineno, offset + end + 2)
            body = body[:end]
            closed = True
        for piece_m in re.finditer(r"[^;]+|;", body):
            piece = piece_m.group(0)
            if piece == ";":
                if current:
                    rows.append(tuple(current))
                    current = []
                continue
            for tok_m in re.finditer(r"[^\s,]+", piece):
                current.append(_parse_number(tok_m.group(0), lineno, offset + piece_m.start() + tok_m.start() + 1))
        if current:
            rows.append(tuple(current))
            current = []
        i += 1
        if closed:
            return rows, i
    raise CaseSyntaxError(f"unterminated matrix mpc.{key}", len(lines), 1)


def _parse_cells(lines: list[str], i: int, start: int, key: str):
    buf = []
    first_line = i + 1
    while i < len(lines):
        seg = lines[i][start:] if not buf else lines[i]
        buf.append(_strip_comment(seg))
        i += 1
        if "}" in buf[-1]:
            text = " ".join(buf)
            inner = text[text.index("{") + 1:text.index("}")]
            return re.findall(r"'([^']*)'", inner), i
    raise CaseSyntaxError(f"unterminated cell array mpc.{key}", first_line, 1)


def check_columns(case: CaseFile) -> None:
    for table, rows in (("bus", case.bus), ("branch", case.branch), ("gencost", case.gencost)):
        need = _TABLE_MIN[table]
        for k, row in enumerate(rows):
            if len(row) < need:
                raise CaseFormatError(f"expected at least {need} columns, found {len(row)}", table, k)
    for k, row in enumerate(case.gen):
        if len(row) != GEN_LEGACY_COLS and len(row) < GEN_COLS:
            raise CaseFormatError(f"expected {GEN_LEGACY_COLS} or at least {GEN_COLS} columns, found {len(row)}", "gen", k)
    for k, row in enumerate(case.gencost):
        if int(row[0]) == 2 and len(row) < 4 + int(row[3]):
            raise CaseFormatError(f"polynomial with {int(row[3])} coefficients needs {4 + int(row[3])} columns", "gencost", k)
        if int(row[0]) == 1 and len(row) < 4 + 2 * int(row[3]):
            raise CaseFormatError("piecewise-linear row too short", "gencost", k)


# ---------------------------------------------------------------------------
# lowering to the semantic model

def _angle_bound(value_deg: float, lower: bool) -> float:
    if abs(value_deg) >= 360:
        return -math.inf if lower else math.inf
    return math.radians(value_deg)


def _fuel_from_label(label: str) -> Optional[FuelCategory]:
    low = label.strip().lower()
    if low in ("", "unknown", "none"):
        return None
    if low in _FUEL_ALIASES:
        return _FUEL_ALIASES[low]
    try:
        return FuelCategory(label.strip().upper())
    except ValueError:
        raise CaseFormatError(f"unknown fuel label {label!r}", "genfuel") from None


def lower(case: CaseFile) -> Network:
    """Convert raw MATPOWER tables into a per-unit :class:`Network`."""
    base = case.base_mva
    if not base > 0:
        raise CaseFormatError(f"baseMVA must be positive, got {base}")
    buses = []
    for k, r in enumerate(case.bus):
        code = int(r[1])
        if code not in (1, 2, 3, 4) or code != r[1]:
            raise CaseFormatError(f"unsupported bus type {r[1]}", "bus", k)
        buses.append(Bus(
            id=int(r[0]), kind=BusKind(code), pd=r[2] / base, qd=r[3] / base,
            gs=r[4] / base, bs=r[5] / base, area=int(r[6]), v_init=r[7],
            theta_init=math.radians(r[8]), base_kv=r[9], zone=int(r[10]),
            v_max=r[11], v_min=r[12],
        ))

    fuels = case.cell("genfuel")
    costs = _lower_costs(case)
    gens = []
    for k, r in enumerate(case.gen):
        r = tuple(r) + (0.0,) * max(0, GEN_COLS - len(r))
        fuel = _fuel_from_label(fuels[k]) if fuels is not None and k < len(fuels) else None
        gens.append(Generator(
            bus=int(r[0]), pg=r[1] / base, qg=r[2] / base, q_max=r[3] / base,
            q_min=r[4] / base, v_set=r[5], mbase=r[6], status=r[7] > 0,
            p_max=r[8] / base, p_min=r[9] / base, cost=costs[k] if k < len(costs) else CostPoly(),
            fuel=fuel,
        ))

    branches = []
    for k, r in enumerate(case.branch):
        if r[3] == 0:
            raise CaseFormatError("zero series reactance", "branch", k)
        amin, amax = r[11], r[12]
        if amin == 0 and amax == 0:
            lo, hi = -math.inf, math.inf
        else:
            lo, hi = _angle_bound(amin, True), _angle_bound(amax, False)
        branches.append(Branch(
            from_bus=int(r[0]), to_bus=int(r[1]), r=r[2], x=r[3], b_charge=r[4],
            rate_a=(r[5] / base) if r[5] > 0 else None,
            tap=r[8] if r[8] != 0 else 1.0, shift=math.radians(r[9]),
            status=r[10] > 0, angle_min=lo, angle_max=hi,
        ))
    return Network(base_mva=base, buses=tuple(buses), branches=tuple(branches),
                   generators=tuple(gens), name=case.name)


def _lower_costs(case: CaseFile) -> list[CostPoly]:
    out = []
    for k, r in enumerate(case.gencost[: len(case.gen)]):
        model = int(r[0])
        if model == 1:
            raise CaseFormatError("piecewise-linear cost model is not supported", "gencost", k)
        if model != 2:
            raise CaseFormatError(f"unknown cost model {r[0]}", "gencost", k)
        n = int(r[3])
        coeffs = list(r[4:4 + n])
        if n > 3:
            if any(c != 0 for c in coeffs[: n - 3]):
                raise CaseFormatError(f"polynomial of degree {n - 1} is not supported", "gencost", k)
            coeffs = coeffs[n - 3:]
        coeffs = [0.0] * (3 - len(coeffs)) + coeffs
        out.append(CostPoly(c2=coeffs[0], c1=coeffs[1], c0=coeffs[2]))
    return out


# ---------------------------------------------------------------------------
# building and writing

def _deg(rad: float) -> float:
    # prefer a short decimal when it maps back to the same radian value
    d = math.degrees(rad)
    short = float(f"{d:.12g}")
    return short if math.radians(short) == rad else d


def build(net: Network) -> CaseFile:
    """Inverse of :func:`lower`: express a Network as raw MATPOWER tables."""
    base = net.base_mva
    bus = tuple(
        (float(b.id), float(int(b.kind)), b.pd * base, b.qd * base, b.gs * base, b.bs * base,
         float(b.area), b.v_init, _deg(b.theta_init), b.base_kv, float(b.zone), b.v_max, b.v_min)
        for b in net.buses
    )
    gen = tuple(
        (float(g.bus), g.pg * base, g.qg * base, g.q_max * base, g.q_min * base, g.v_set,
         g.mbase, 1.0 if g.status else 0.0, g.p_max * base, g.p_min * base) + (0.0,) * 11
        for g in net.generators
    )
    branch = tuple(
        (float(br.from_bus), float(br.to_bus), br.r, br.x, br.b_charge,
         *(3 * ((br.rate_a * base) if br.rate_a is not None else 0.0,)),
         br.tap if br.tap != 1.0 else 0.0, _deg(br.shift), 1.0 if br.status else 0.0,
         -360.0 if math.isinf(br.angle_min) else _deg(br.angle_min),
         360.0 if math.isinf(br.angle_max) else _deg(br.angle_max))
        for br in net.branches
    )
    gencost = tuple((2.0, 0.0, 0.0, 3.0, g.cost.c2, g.cost.c1, g.cost.c0) for g in net.generators)
    cells: tuple = ()
    if any(g.fuel is not None for g in net.generators):
        cells = (("genfuel", tuple(g.fuel.value if g.fuel else "unknown" for g in net.generators)),)
    return CaseFile(name=net.name, base_mva=base, bus=bus, gen=gen, branch=branch,
                    gencost=gencost, cells=cells)


def format_number(v: float) -> str:
    """Shortest decimal that re-parses to exactly ``v``."""
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    if v == 0:
        return "0"
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _format_table(key: str, rows, header: Optional[str]) -> list[str]:
    out = []
    if header:
        out.append("%\t" + header)
    out.append(f"mpc.{key} = [")
    for row in rows:
        out.append("\t" + "\t".join(format_number(v) for v in row) + ";")
    out.append("];")
    return out


def write_case(case: CaseFile) -> str:
    lines = [f"function mpc = {case.name}"]
    lines += ["%" + (" " + c if c else "") for c in case.comments]
    lines += [f"mpc.version = '{case.version}';", "", "%% system MVA base",
              f"mpc.baseMVA = {format_number(case.base_mva)};", "", "%% bus data"]
    lines += _format_table("bus", case.bus, BUS_HEADER)
    if case.gen:
        lines += ["", "%% generator data"] + _format_table("gen", case.gen, GEN_HEADER)
    if case.branch:
        lines += ["", "%% branch data"] + _format_table("branch", case.branch, BRANCH_HEADER)
    if case.gencost:
        lines += ["", "%% generator cost data", "%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0"]
        lines += _format_table("gencost", case.gencost, None)
    for key, rows in case.extra:
        lines += [""] + _format_table(key, rows, None)
    for key, vals in case.cells:
        lines += ["", f"mpc.{key} = {{"] + [f"\t'{v}';" for v in vals] + ["};"]
    return "\n".join(lines) + "\n"


def write(net: Network, provenance: list[str] | tuple[str, ...] = ()) -> str:
    """Serialize ``net`` as case text with ``provenance`` lines as header comments."""
    case = build(net)
    case = CaseFile(**{**case.__dict__, "comments": tuple(provenance)})
    return write_case(case)


def read_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return lower(parse(fh.read()))
