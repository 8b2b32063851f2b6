"""
Static model of a radial distribution network: buses, branches, device placement and zones.

All electrical quantities are per-unit. The base values in the file are carried through for
reporting only.
"""

import json
import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

SLACK_BUS = 0


class NetworkError(ValueError):
    pass


class CycleError(NetworkError):
    pass


class DisconnectedError(NetworkError):
    pass


class ZeroImpedanceError(NetworkError):
    pass


class ZoneError(NetworkError):
    pass


class UnknownBus(NetworkError):
    pass


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class BranchSpec(_StrictModel):
    from_bus: int = Field(alias="from")
    to_bus: int = Field(alias="to")
    r_pu: float
    x_pu: float


class LoadSpec(_StrictModel):
    bus: int
    column: str


class PvSpec(_StrictModel):
    bus: int
    column: str
    s_rating_pu: Optional[float] = None


class SlackSpec(_StrictModel):
    bus: int = SLACK_BUS
    v0_pu: float = 1.0


class BasesSpec(_StrictModel):
    base_mva: float = 1.0
    base_kv: float = 12.66


class NetworkSpec(_StrictModel):
    """Parsed network file. Zone keys are bus ids written as strings, as JSON requires."""

    name: str = "network"
    buses: List[int]
    branches: List[BranchSpec]
    loads: List[LoadSpec] = Field(default_factory=list)
    pvs: List[PvSpec] = Field(default_factory=list)
    zones: Dict[int, str]
    slack: SlackSpec = Field(default_factory=SlackSpec)
    bases: BasesSpec = Field(default_factory=BasesSpec)


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float

    @property
    def z(self) -> complex:
        return complex(self.r, self.x)

    @property
    def y(self) -> complex:
        return 1.0 / self.z

    @property
    def g(self) -> float:
        return self.y.real

    @property
    def b(self) -> float:
        # y = g - i*b
        return -self.y.imag


@dataclass(frozen=True)
class LoadSite:
    bus: int
    column: str


@dataclass(frozen=True)
class PvSite:
    bus: int
    column: str
    s_rating: Optional[float] = None


@dataclass(frozen=True)
class NetworkModel:
    name: str
    n_bus: int
    branches: Tuple[Branch, ...]
    loads: Tuple[LoadSite, ...]
    pvs: Tuple[PvSite, ...]
    zones: Tuple[Tuple[int, str], ...]
    v0: float = 1.0
    base_mva: float = 1.0
    base_kv: float = 12.66
    ybus: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=complex), compare=False, repr=False)
    graph: nx.MultiGraph = field(default_factory=nx.MultiGraph, compare=False, repr=False)

    @property
    def buses(self) -> List[int]:
        return list(range(self.n_bus))

    @property
    def non_slack(self) -> List[int]:
        return list(range(1, self.n_bus))

    @property
    def zone_of(self) -> Mapping[int, str]:
        return MappingProxyType(dict(self.zones))

    @property
    def zone_names(self) -> List[str]:
        return sorted({zone for _, zone in self.zones})

    @property
    def resistances(self) -> np.ndarray:
        return np.array([br.r for br in self.branches])

    def buses_in_zone(self, zone: str) -> List[int]:
        return sorted(bus for bus, z in self.zones if z == zone)


def _check_bus(bus: int, n_bus: int, what: str) -> None:
    if not 0 <= bus < n_bus:
        raise UnknownBus(f"{what} refers to bus {bus}, which is not in 0..{n_bus - 1}")


def _build_graph(n_bus: int, branches: Tuple[Branch, ...]) -> nx.MultiGraph:
    """Bus graph of the feeder; parallel branches and self-loops are kept so the tree check sees them."""
    graph = nx.MultiGraph()
    graph.add_nodes_from(range(n_bus))
    graph.add_edges_from((br.from_bus, br.to_bus) for br in branches)
    if not nx.is_forest(graph):
        cycle = sorted({bus for edge in nx.find_cycle(graph) for bus in edge[:2]})
        raise CycleError(f"Branches close a cycle through buses {cycle}")
    reachable = nx.node_connected_component(graph, SLACK_BUS)
    unreachable = [bus for bus in range(n_bus) if bus not in reachable]
    if unreachable:
        raise DisconnectedError(f"Buses {unreachable} are not reachable from the slack bus")
    return graph


def _build_ybus(n_bus: int, branches: Tuple[Branch, ...]) -> np.ndarray:
    ybus = np.zeros((n_bus, n_bus), dtype=complex)
    for br in branches:
        i, j, y = br.from_bus, br.to_bus, br.y
        ybus[i, i] += y
        ybus[j, j] += y
        ybus[i, j] -= y
        ybus[j, i] -= y
    ybus.setflags(write=False)
    return ybus


def build_network(spec: NetworkSpec) -> NetworkModel:
    n_bus = len(spec.buses)
    if n_bus == 0:
        raise NetworkError("Network has no buses")
    if sorted(spec.buses) != list(range(n_bus)):
        raise NetworkError(f"Bus ids must be exactly 0..{n_bus - 1}, got {sorted(spec.buses)}")
    if spec.slack.bus != SLACK_BUS:
        raise NetworkError(f"The slack bus must be bus {SLACK_BUS}, got {spec.slack.bus}")

    branches = []
    for br in spec.branches:
        _check_bus(br.from_bus, n_bus, "Branch")
        _check_bus(br.to_bus, n_bus, "Branch")
        if br.r_pu < 0 or br.x_pu < 0:
            raise NetworkError(f"Branch ({br.from_bus}, {br.to_bus}) has negative impedance")
        if br.r_pu == 0 and br.x_pu == 0:
            raise ZeroImpedanceError(f"Branch ({br.from_bus}, {br.to_bus}) has r = x = 0")
        branches.append(Branch(br.from_bus, br.to_bus, br.r_pu, br.x_pu))
    branch_tuple = tuple(branches)
    graph = _build_graph(n_bus, branch_tuple)

    if SLACK_BUS in spec.zones:
        raise ZoneError("The slack bus must not belong to a zone")
    for bus in spec.zones:
        _check_bus(bus, n_bus, "Zone entry")
    missing = [bus for bus in range(1, n_bus) if bus not in spec.zones]
    if missing:
        raise ZoneError(f"Buses {missing} have no zone")

    for kind, sites in (("Load", spec.loads), ("PV", spec.pvs)):
        seen = set()
        for site in sites:
            _check_bus(site.bus, n_bus, kind)
            if site.bus == SLACK_BUS:
                raise NetworkError(f"{kind} on bus {site.bus}: devices cannot sit on the slack bus")
            if site.bus in seen:
                raise NetworkError(f"{kind}: more than one device on bus {site.bus}")
            seen.add(site.bus)
    for pv in spec.pvs:
        if pv.s_rating_pu is not None and pv.s_rating_pu <= 0:
            raise NetworkError(f"PV on bus {pv.bus} has a non-positive rating")

    model = NetworkModel(
        name=spec.name,
        n_bus=n_bus,
        branches=branch_tuple,
        loads=tuple(LoadSite(site.bus, site.column) for site in spec.loads),
        pvs=tuple(PvSite(site.bus, site.column, site.s_rating_pu) for site in spec.pvs),
        zones=tuple(sorted(spec.zones.items())),
        v0=spec.slack.v0_pu,
        base_mva=spec.bases.base_mva,
        base_kv=spec.bases.base_kv,
        ybus=_build_ybus(n_bus, branch_tuple),
        graph=graph,
    )
    logger.debug(f"Built network {model.name}: {n_bus} buses, {len(model.pvs)} PVs, {len(model.zone_names)} zones")
    return model


def neighbors(network: NetworkModel, i: int) -> FrozenSet[int]:
    _check_bus(i, network.n_bus, "Neighbor query")
    return frozenset(network.graph.neighbors(i))


def to_spec(network: NetworkModel) -> NetworkSpec:
    return NetworkSpec(
        name=network.name,
        buses=network.buses,
        branches=[BranchSpec(from_bus=br.from_bus, to_bus=br.to_bus, r_pu=br.r, x_pu=br.x) for br in network.branches],
        loads=[LoadSpec(bus=site.bus, column=site.column) for site in network.loads],
        pvs=[PvSpec(bus=site.bus, column=site.column, s_rating_pu=site.s_rating) for site in network.pvs],
        zones=dict(network.zones),
        slack=SlackSpec(bus=SLACK_BUS, v0_pu=network.v0),
        bases=BasesSpec(base_mva=network.base_mva, base_kv=network.base_kv),
    )


def load_network(path: str) -> NetworkModel:
    with open(path, "r") as f:
        spec = NetworkSpec.model_validate(json.load(f))
    return build_network(spec)


def save_network(network: NetworkModel, path: str) -> None:
    with open(path, "w") as f:
        f.write(to_spec(network).model_dump_json(by_alias=True, indent=2))
