"""Switch topology: line cards, their PCI-e backplane links, and ports.

Link bandwidth follows the published PCI-e generation/width matrix (GB/s,
treated as exact configuration constants). By default a link's rated
bandwidth is available per direction (dual simplex); set
link_semantics="aggregate" to split it across the two directions instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

# GB/s by (generation, lane count).
PCIE_BANDWIDTH_GBPS = {
    (1, 1): 0.5, (1, 2): 1.0, (1, 4): 2.0, (1, 8): 4.0, (1, 16): 8.0,
    (2, 1): 1.0, (2, 2): 2.0, (2, 4): 4.0, (2, 8): 8.0, (2, 16): 16.0,
    (3, 1): 2.0, (3, 2): 4.0, (3, 4): 8.0, (3, 8): 16.0, (3, 16): 32.0,
}

PER_DIRECTION = "per_direction"
AGGREGATE = "aggregate"

# Global port ids live in one octet so they fit in a MAC address byte;
# 255 is reserved as the fabric pseudo-port on every card.
MAX_GLOBAL_PORT = 254
FABRIC_PORT = 255


class TopologyError(ValueError):
    pass


def link_bandwidth(generation: int, lanes: int) -> float:
    """Rated link bandwidth in GB/s for a generation/lane-count pair."""
    try:
        return PCIE_BANDWIDTH_GBPS[(generation, lanes)]
    except KeyError:
        raise TopologyError(f"unsupported PCI-e combination gen{generation} x{lanes}") from None


@dataclass(frozen=True)
class PcieLink:
    generation: int
    lanes: int

    @property
    def bandwidth_gbytes(self) -> float:
        return link_bandwidth(self.generation, self.lanes)

    def capacity_gbits(self, semantics: str = PER_DIRECTION) -> float:
        """Usable capacity per direction, in Gb/s."""
        gbps = self.bandwidth_gbytes * 8.0
        return gbps if semantics == PER_DIRECTION else gbps / 2.0

    def bytes_per_ns(self, semantics: str = PER_DIRECTION) -> float:
        # 1 GB/s is exactly 1 byte/ns
        return self.bandwidth_gbytes if semantics == PER_DIRECTION else self.bandwidth_gbytes / 2.0


@dataclass(frozen=True)
class PortSpec:
    global_id: int
    rate_gbps: float


@dataclass
class LineCardSpec:
    card_id: int
    link: PcieLink
    ports: list[PortSpec]


@dataclass
class Topology:
    cards: list[LineCardSpec]
    link_semantics: str = PER_DIRECTION

    @property
    def n(self) -> int:
        return len(self.cards)

    def validate(self) -> None:
        if not 2 <= self.n <= 8:
            raise TopologyError(f"topology needs 2..8 cards, got {self.n}")
        ids = [c.card_id for c in self.cards]
        if ids != list(range(self.n)):
            raise TopologyError("card ids must be 0..N-1 in order")
        seen: set[int] = set()
        for c in self.cards:
            if not c.ports:
                raise TopologyError(f"card {c.card_id} has no ports")
            link_bandwidth(c.link.generation, c.link.lanes)
            for p in c.ports:
                if not 0 <= p.global_id <= MAX_GLOBAL_PORT:
                    raise TopologyError(
                        f"global port {p.global_id} outside 0..{MAX_GLOBAL_PORT}"
                    )
                if p.global_id in seen:
                    raise TopologyError(f"duplicate global port {p.global_id}")
                if p.rate_gbps <= 0:
                    raise TopologyError(f"port {p.global_id} has non-positive rate")
                seen.add(p.global_id)
        if self.link_semantics not in (PER_DIRECTION, AGGREGATE):
            raise TopologyError(f"unknown link semantics {self.link_semantics!r}")

    def port_map(self) -> "PortMap":
        return PortMap.from_topology(self)


@dataclass
class PortMap:
    """Bijection between global port ids and (card id, local port index)."""

    to_local: dict[int, tuple[int, int]] = field(default_factory=dict)
    to_global: dict[tuple[int, int], int] = field(default_factory=dict)

    @staticmethod
    def from_topology(topo: Topology) -> "PortMap":
        pm = PortMap()
        for c in topo.cards:
            for idx, p in enumerate(c.ports):
                pm.to_local[p.global_id] = (c.card_id, idx)
                pm.to_global[(c.card_id, idx)] = p.global_id
        return pm

    def card_of(self, global_id: int) -> int:
        return self.to_local[global_id][0]

    def local_of(self, global_id: int) -> tuple[int, int]:
        return self.to_local[global_id]

    def global_of(self, card_id: int, local_idx: int) -> int:
        return self.to_global[(card_id, local_idx)]

    def __contains__(self, global_id: int) -> bool:
        return global_id in self.to_local

    def global_ports(self) -> list[int]:
        return sorted(self.to_local)


def load_topology(doc: str | dict | Path) -> Topology:
    """Parse the topology JSON:
    {"cards": [{"id", "link": {"gen", "lanes"}, "ports": [{"global_id",
    "rate_gbps"}]}], "link_semantics"?: "per_direction" | "aggregate"}"""
    if isinstance(doc, Path):
        doc = doc.read_text()
    if isinstance(doc, str):
        doc = json.loads(doc)
    if not isinstance(doc, dict) or "cards" not in doc:
        raise TopologyError("topology document needs a 'cards' list")
    extra = set(doc) - {"cards", "link_semantics"}
    if extra:
        raise TopologyError(f"unknown topology keys: {sorted(extra)}")
    cards = []
    for c in doc["cards"]:
        extra = set(c) - {"id", "link", "ports"}
        if extra:
            raise TopologyError(f"unknown card keys: {sorted(extra)}")
        link = c.get("link")
        if not isinstance(link, dict) or "gen" not in link or "lanes" not in link:
            raise TopologyError(f"card {c.get('id')}: link needs 'gen' and 'lanes'")
        ports = [
            PortSpec(int(p["global_id"]), float(p["rate_gbps"])) for p in c.get("ports", [])
        ]
        cards.append(LineCardSpec(int(c["id"]), PcieLink(int(link["gen"]), int(link["lanes"])), ports))
    topo = Topology(cards, doc.get("link_semantics", PER_DIRECTION))
    topo.validate()
    return topo


def load_topology_file(path: str | Path) -> Topology:
    return load_topology(Path(path))


@dataclass(frozen=True)
class CardCapacity:
    card_id: int
    port_gbps: float
    link_gbps: float
    utilization: float
    blocking: bool


@dataclass
class CapacityReport:
    per_card: list[CardCapacity]

    @property
    def all_nonblocking(self) -> bool:
        return not any(c.blocking for c in self.per_card)


def check_nonblocking(topo: Topology) -> CapacityReport:
    """Compare each card's aggregate port rate against its backplane link
    capacity per direction; a card is non-blocking when the link can carry
    every local port at line rate."""
    rows = []
    for c in topo.cards:
        port_gbps = sum(p.rate_gbps for p in c.ports)
        link_gbps = c.link.capacity_gbits(topo.link_semantics)
        util = port_gbps / link_gbps if link_gbps > 0 else float("inf")
        rows.append(CardCapacity(c.card_id, port_gbps, link_gbps, util, port_gbps > link_gbps))
    return CapacityReport(rows)
