"""Optimality gaps between the AC heuristic and convex relaxations."""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from ..matpower import CaseFileError, read_network
from ..network import Network
from .formulations import Model, NotApplicable, solve_opf
from .ipm import IpmOptions

SCHEMA_VERSION = 1
RELAXATIONS = (Model.CP, Model.NFLL, Model.SOC)
NOT_APPLICABLE = "---"
FAILED = "err."


def gap(ac_obj: float, relax_obj: float) -> float:
    """Relative gap in percent, ``100 * (ac - relax) / ac``."""
    if not ac_obj > 0:
        raise ValueError(f"AC objective must be positive, got {ac_obj}")
    return 100.0 * (ac_obj - relax_obj) / ac_obj


@dataclass
class ModelEntry:
    model: str
    status: str  # solver status, "not-applicable" or "error"
    objective: Optional[float] = None
    gap: Optional[float] = None
    message: str = ""

    @property
    def solved(self) -> bool:
        return self.status == "optimal"

    def cell(self, show_gap: bool) -> str:
        if self.status == "not-applicable":
            return NOT_APPLICABLE
        if not self.solved:
            return FAILED
        if show_gap:
            return "n/a" if self.gap is None else f"{self.gap:.2f}"
        return f"{self.objective:.2f}"


@dataclass
class GapReport:
    case: str
    ac: ModelEntry
    relaxations: list[ModelEntry] = field(default_factory=list)
    error: str = ""

    def entry(self, model: Model | str) -> Optional[ModelEntry]:
        model = Model(model).value
        if self.ac.model == model:
            return self.ac
        return next((e for e in self.relaxations if e.model == model), None)

    def to_dict(self) -> dict:
        return asdict(self)


def _solve_entry(net: Network, model: Model, options: Optional[IpmOptions]) -> ModelEntry:
    try:
        res = solve_opf(net, model, options)
    except NotApplicable as exc:
        return ModelEntry(model.value, "not-applicable", message=str(exc))
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        return ModelEntry(model.value, "error", message=str(exc))
    obj = res.objective if math.isfinite(res.objective) else None
    return ModelEntry(model.value, res.status.value, obj, message=res.outcome.message)


def gap_report(net: Network, models: Sequence[Model | str] = RELAXATIONS,
               options: Optional[IpmOptions] = None, name: Optional[str] = None) -> GapReport:
    """AC heuristic followed by each selected relaxation on one network."""
    ac = _solve_entry(net, Model.AC, options)
    report = GapReport(case=name or net.name, ac=ac)
    for m in models:
        m = Model(m)
        if m == Model.AC:
            continue
        e = _solve_entry(net, m, options)
        if e.solved and ac.solved and ac.objective and ac.objective > 0:
            e.gap = gap(ac.objective, e.objective)
        report.relaxations.append(e)
    return report


def _report_for_path(args) -> GapReport:
    path, models, options = args
    name = Path(path).stem
    try:
        net = read_network(path)
    except (OSError, CaseFileError) as exc:
        failed = ModelEntry(Model.AC.value, "error", message=str(exc))
        return GapReport(case=name, ac=failed,
                         relaxations=[ModelEntry(Model(m).value, "error") for m in models if Model(m) != Model.AC],
                         error=str(exc))
    return gap_report(net, models, options, name=name)


def gap_table(paths: Iterable[str | os.PathLike], models: Sequence[Model | str] = RELAXATIONS,
              jobs: Optional[int] = None, options: Optional[IpmOptions] = None) -> list[GapReport]:
    """One report per case, in input order; per-case failures are recorded, not raised."""
    tasks = [(str(p), tuple(Model(m) for m in models), options) for p in paths]
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        return [_report_for_path(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_report_for_path, tasks))


_LABELS = {Model.AC: "AC", Model.CP: "CP", Model.NFLL: "NF+LL", Model.SOC: "SOC"}


def to_markdown(reports: Sequence[GapReport], models: Sequence[Model | str] = RELAXATIONS) -> str:
    rel = [Model(m) for m in models if Model(m) != Model.AC]
    head = ["Case", "AC ($/h)"] + [f"{_LABELS[m]} gap (%)" for m in rel]
    lines = ["| " + " | ".join(head) + " |", "|" + "|".join(["---"] * len(head)) + "|"]
    for r in reports:
        cells = [r.case, r.ac.cell(show_gap=False)]
        for m in rel:
            e = r.entry(m)
            cells.append(e.cell(show_gap=True) if e else "")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def to_json(reports: Sequence[GapReport]) -> str:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "gap-table", "reports": [r.to_dict() for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
