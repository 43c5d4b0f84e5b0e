"""Addressing and reachability: which endpoint a node advertises and whether
two nodes can talk.

Reachability is a pure predicate, not packet simulation; message latency is
folded into install/dispatch latencies elsewhere.
"""

import enum
from dataclasses import dataclass


class NetworkMode(enum.Enum):
    PRIVATE = "private"
    HYBRID = "hybrid"


class NoPublicIp(Exception):
    """Hybrid addressing requested on a node without a public IP."""


@dataclass(frozen=True)
class NetworkLocation:
    """Where a node sits: its network, addresses, and open inbound ports."""

    network_id: str
    private_ip: str
    public_ip: str | None = None
    open_ports: frozenset[int] = frozenset()


@dataclass(frozen=True)
class Endpoint:
    host: str
    port: int

    def __str__(self) -> str:
        return f"{self.host}:{self.port}"


def advertise_endpoint(loc: NetworkLocation, mode: NetworkMode, port: int) -> Endpoint:
    """The address a container advertises for the given network mode."""
    if mode is NetworkMode.PRIVATE:
        return Endpoint(loc.private_ip, port)
    if loc.public_ip is None:
        raise NoPublicIp(f"hybrid mode needs a public IP (network {loc.network_id})")
    return Endpoint(loc.public_ip, port)


def reachable(src: NetworkLocation, dst: NetworkLocation, endpoint: Endpoint) -> bool:
    """True iff src can reach dst at the given advertised endpoint.

    Private addresses work only inside one network; public addresses work from
    anywhere provided the inbound port has been opened on the destination.
    """
    if endpoint.host == dst.private_ip:
        return src.network_id == dst.network_id
    if dst.public_ip is not None and endpoint.host == dst.public_ip:
        return endpoint.port in dst.open_ports
    return False
