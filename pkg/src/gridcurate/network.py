"""Per-unit network data model.

All electrical quantities are stored in per unit on ``Network.base_mva``;
angles are radians.  Conversion to MW/MVA/degrees happens only when reading
or writing case files.  Instances are frozen; derive modified networks with
:func:`dataclasses.replace` or the ``with_*`` helpers.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional


class BusKind(enum.IntEnum):
    PQ = 1
    PV = 2
    SLACK = 3
    INACTIVE = 4


class FuelCategory(str, enum.Enum):
    COW = "COW"
    PEL = "PEL"
    NG = "NG"
    NUC = "NUC"
    BIO = "BIO"
    DRN = "DRN"
    RN = "RN"
    SYNC = "SYNC"


# Categories the augmentation models know how to handle.
MODELLED_FUELS = frozenset(
    {FuelCategory.COW, FuelCategory.PEL, FuelCategory.NG, FuelCategory.NUC, FuelCategory.SYNC}
)


@dataclass(frozen=True)
class CostPoly:
    """Quadratic generation cost on MW: c2*P^2 + c1*P + c0 in $/h."""

    c2: float = 0.0
    c1: float = 0.0
    c0: float = 0.0

    def __call__(self, p_mw: float) -> float:
        return self.c2 * p_mw * p_mw + self.c1 * p_mw + self.c0


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind = BusKind.PQ
    pd: float = 0.0
    qd: float = 0.0
    gs: float = 0.0
    bs: float = 0.0
    v_min: float = 0.9
    v_max: float = 1.1
    base_kv: float = 0.0  # 0 = unknown
    v_init: float = 1.0
    theta_init: float = 0.0
    area: int = 1
    zone: int = 1

    @property
    def active(self) -> bool:
        return self.kind != BusKind.INACTIVE


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float = 0.0
    rate_a: Optional[float] = None  # None = unlimited
    tap: float = 1.0
    shift: float = 0.0
    angle_min: float = -math.inf
    angle_max: float = math.inf
    status: bool = True

    @property
    def admittance(self) -> float:
        """Series admittance magnitude 1/|r + jx|."""
        return 1.0 / math.hypot(self.r, self.x)

    @property
    def is_transformer(self) -> bool:
        return self.tap != 1.0 or self.shift != 0.0


@dataclass(frozen=True)
class Generator:
    bus: int
    pg: float = 0.0
    qg: float = 0.0
    p_min: float = 0.0
    p_max: float = math.inf
    q_min: float = -math.inf
    q_max: float = math.inf
    v_set: float = 1.0
    status: bool = True
    cost: CostPoly = field(default_factory=CostPoly)
    fuel: Optional[FuelCategory] = None
    mbase: float = 100.0


@dataclass(frozen=True)
class Violation:
    """A structural or operational problem, reported as data."""

    kind: str
    element: str  # "bus", "branch", "gen"
    index: int
    reason: str
    magnitude: float = 0.0

    def __str__(self) -> str:
        return f"{self.kind} {self.element}[{self.index}]: {self.reason}"


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...] = ()
    generators: tuple[Generator, ...] = ()
    name: str = "case"

    def __post_init__(self) -> None:
        # Accept lists for convenience, store tuples so the value stays hashable-ish and immutable.
        for attr in ("buses", "branches", "generators"):
            val = getattr(self, attr)
            if not isinstance(val, tuple):
                object.__setattr__(self, attr, tuple(val))

    @property
    def bus_index(self) -> dict[int, int]:
        return {b.id: k for k, b in enumerate(self.buses)}

    def with_buses(self, buses: Iterable[Bus]) -> "Network":
        return replace(self, buses=tuple(buses))

    def with_branches(self, branches: Iterable[Branch]) -> "Network":
        return replace(self, branches=tuple(branches))

    def with_generators(self, generators: Iterable[Generator]) -> "Network":
        return replace(self, generators=tuple(generators))

    def slack_buses(self) -> list[int]:
        return [k for k, b in enumerate(self.buses) if b.kind == BusKind.SLACK]

    def active_branches(self) -> list[int]:
        """Indices of in-service branches whose endpoints are both active."""
        idx = self.bus_index
        out = []
        for k, br in enumerate(self.branches):
            if not br.status:
                continue
            fi, ti = idx.get(br.from_bus), idx.get(br.to_bus)
            if fi is None or ti is None:
                continue
            if self.buses[fi].active and self.buses[ti].active:
                out.append(k)
        return out

    def active_generators(self) -> list[int]:
        idx = self.bus_index
        return [
            k
            for k, g in enumerate(self.generators)
            if g.status and g.bus in idx and self.buses[idx[g.bus]].active
        ]


def to_per_unit(value: float, base_mva: float) -> float:
    if not base_mva > 0:
        raise ValueError(f"base_mva must be positive, got {base_mva}")
    return value / base_mva


def from_per_unit(value: float, base_mva: float) -> float:
    if not base_mva > 0:
        raise ValueError(f"base_mva must be positive, got {base_mva}")
    return value * base_mva


def validate(net: Network) -> list[Violation]:
    """Return every invariant violation of ``net``; empty means structurally sound."""
    out: list[Violation] = []
    if not (isinstance(net.base_mva, (int, float)) and net.base_mva > 0):
        out.append(Violation("structure", "network", 0, f"base_mva must be > 0 (got {net.base_mva})"))

    seen: dict[int, int] = {}
    for k, b in enumerate(net.buses):
        if b.id in seen:
            out.append(Violation("structure", "bus", k, f"duplicate bus id {b.id} (first at {seen[b.id]})"))
        else:
            seen[b.id] = k
        if not (0 < b.v_min <= b.v_max):
            out.append(Violation("structure", "bus", k, f"voltage bounds must satisfy 0 < v_min <= v_max ({b.v_min}, {b.v_max})"))
        if not b.base_kv >= 0:
            out.append(Violation("structure", "bus", k, f"negative base_kv {b.base_kv}"))
        for name in ("pd", "qd", "gs", "bs", "v_init", "theta_init"):
            if not math.isfinite(getattr(b, name)):
                out.append(Violation("structure", "bus", k, f"{name} is not finite"))

    for k, br in enumerate(net.branches):
        for end in (br.from_bus, br.to_bus):
            if end not in seen:
                out.append(Violation("structure", "branch", k, f"endpoint bus {end} does not exist"))
        if br.from_bus == br.to_bus:
            out.append(Violation("structure", "branch", k, f"self-loop at bus {br.from_bus}"))
        if br.x == 0:
            out.append(Violation("structure", "branch", k, "zero series reactance"))
        if not br.tap > 0:
            out.append(Violation("structure", "branch", k, f"tap ratio must be > 0 (got {br.tap})"))
        if not (br.angle_min <= 0 <= br.angle_max):
            out.append(Violation("structure", "branch", k, "angle bounds must bracket 0"))
        if br.rate_a is not None and not br.rate_a > 0:
            out.append(Violation("structure", "branch", k, f"thermal limit must be > 0 or unlimited (got {br.rate_a})"))

    for k, g in enumerate(net.generators):
        if g.bus not in seen:
            out.append(Violation("structure", "gen", k, f"bus {g.bus} does not exist"))
        if not g.p_min <= g.p_max:
            out.append(Violation("structure", "gen", k, f"p_min > p_max ({g.p_min} > {g.p_max})"))
        if not g.q_min <= g.q_max:
            out.append(Violation("structure", "gen", k, f"q_min > q_max ({g.q_min} > {g.q_max})"))
        c = g.cost
        if not all(math.isfinite(v) for v in (c.c2, c.c1, c.c0)):
            out.append(Violation("structure", "gen", k, "cost coefficients must be finite"))
        elif c.c2 < 0:
            out.append(Violation("structure", "gen", k, "negative quadratic cost coefficient"))
    return out
