"""Pool manager: registers provider pools, picks a pool per strategy, enforces
capacity, and drives provision/release calls over the provider wire protocol.

Strategy contract: a function from the registered pool states to the chosen
pool id (or None when nothing has remaining capacity). The shipped strategy
prefers the highest priority number, breaking ties by ascending pool id; new
strategies register by name.
"""

import enum
from collections.abc import Callable
from dataclasses import dataclass, field, fields
from fractions import Fraction

from . import events, wire
from .deploy import InstallScript
from .kernel import SimKernel, to_fraction
from .netmodel import NetworkMode


class ProviderKind(enum.Enum):
    AZURE_SIM = "azure_sim"
    EC2_SIM = "ec2_sim"


class InstallMode(enum.Enum):
    FULL = "full"          # download + install on every fresh VM
    IMAGE = "image"        # preconfigured image; only dynamic config remains


REQUIRED_CREDENTIALS = {
    ProviderKind.AZURE_SIM: ("subscription_id", "certificate_token"),
    ProviderKind.EC2_SIM: ("access_key", "secret_key"),
}


class DuplicatePool(Exception):
    pass


class UnknownPool(Exception):
    pass


class MalformedCredentials(Exception):
    pass


class UnknownNode(Exception):
    pass


class RefusedMasterRelease(Exception):
    """The master node is never dynamically released."""


@dataclass
class PoolConfig:
    """One provider connection: credentials, capacity, priority, prices,
    latencies, and network mode."""

    pool_id: str
    provider: ProviderKind
    credentials: dict[str, str]
    capacity: int
    priority: int
    price_per_hour: Fraction = Fraction(0)
    billing_quantum_s: Fraction = Fraction(3600)
    region: str = "default"
    vm_template: str = "small"
    network_mode: NetworkMode = NetworkMode.PRIVATE
    boot_latency_s: Fraction = Fraction(0)
    boot_jitter_s: Fraction = Fraction(0)
    install_latency_s: Fraction = Fraction(0)
    install_mode: InstallMode = InstallMode.FULL
    image_config_latency_s: Fraction = Fraction(0)
    custom_script: InstallScript | None = None
    azure_service: str | None = None
    azure_storage: str | None = None
    static_workers: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name.endswith("_s") or f.name == "price_per_hour":
                setattr(self, f.name, to_fraction(getattr(self, f.name)))
        self.validate()

    def validate(self) -> None:
        if self.capacity < 0:
            raise ValueError(f"pool {self.pool_id}: capacity must be >= 0")
        for name in ("boot_latency_s", "boot_jitter_s", "install_latency_s",
                     "image_config_latency_s", "billing_quantum_s", "price_per_hour"):
            if getattr(self, name) < 0:
                raise ValueError(f"pool {self.pool_id}: {name} must be >= 0")
        if self.billing_quantum_s == 0:
            raise ValueError(f"pool {self.pool_id}: billing_quantum_s must be > 0")
        if self.static_workers < 0:
            raise ValueError(f"pool {self.pool_id}: static_workers must be >= 0")
        missing = [k for k in REQUIRED_CREDENTIALS[self.provider]
                   if not self.credentials.get(k)]
        if missing:
            raise MalformedCredentials(
                f"pool {self.pool_id} ({self.provider.value}) missing: {', '.join(missing)}"
            )

    @property
    def service_name(self) -> str:
        return self.azure_service or f"svc-{self.pool_id}"

    @property
    def storage_name(self) -> str:
        return self.azure_storage or f"st-{self.pool_id}"


class TicketStatus(enum.Enum):
    PENDING = "pending"
    ACTIVE = "active"
    REJECTED = "rejected"
    CLOSED = "closed"


@dataclass
class Ticket:
    """One unit of provisioning work, from request to node teardown."""

    ticket_id: int
    pool_id: str
    issued_at: Fraction
    status: TicketStatus = TicketStatus.PENDING
    node_id: str | None = None
    reject_code: str | None = None
    private_ip: str = ""
    public_ip: str | None = None
    network_id: str = ""


@dataclass
class PoolState:
    config: PoolConfig
    active: set[str] = field(default_factory=set)
    pending: set[int] = field(default_factory=set)

    def remaining(self) -> int:
        return self.config.capacity - len(self.active) - len(self.pending)


def select_pool(pools: list[PoolState]) -> str | None:
    """Highest priority among pools with remaining capacity; ties go to the
    lexicographically smallest pool id; None when everything is full."""
    candidates = [p for p in pools if p.remaining() > 0]
    if not candidates:
        return None
    best = min(candidates, key=lambda p: (-p.config.priority, p.config.pool_id))
    return best.config.pool_id


Strategy = Callable[[list[PoolState]], str | None]

STRATEGIES: dict[str, Strategy] = {"priority": select_pool}


def register_strategy(name: str, fn: Strategy) -> None:
    if name in STRATEGIES:
        raise ValueError(f"strategy {name!r} already registered")
    STRATEGIES[name] = fn


@dataclass
class ProvisionResult:
    tickets: list[Ticket]
    no_capacity: bool = False


class PoolManager:
    """Owns pool state and tickets; all mutation happens on the event thread."""

    def __init__(self, kernel: SimKernel, strategy: str = "priority"):
        self.kernel = kernel
        self.strategy_name = strategy
        self.pools: dict[str, PoolState] = {}
        self.backends: dict[str, object] = {}
        self.tickets: dict[int, Ticket] = {}
        self._ticket_counter = 0
        self._node_ticket: dict[str, int] = {}
        self._releasing: set[str] = set()

    # -- registration -------------------------------------------------------

    def register_pool(self, config: PoolConfig, backend) -> str:
        if config.pool_id in self.pools:
            raise DuplicatePool(config.pool_id)
        config.validate()
        self.pools[config.pool_id] = PoolState(config=config)
        self.backends[config.pool_id] = backend
        self.kernel.emit(events.POOL_REGISTERED, {
            "capacity": config.capacity,
            "pool": config.pool_id,
            "price_per_hour": config.price_per_hour,
            "priority": config.priority,
            "provider": config.provider.value,
            "quantum_s": config.billing_quantum_s,
            "region": config.region,
        })
        return config.pool_id

    def pool(self, pool_id: str) -> PoolState:
        try:
            return self.pools[pool_id]
        except KeyError:
            raise UnknownPool(pool_id) from None

    def pool_states(self) -> list[PoolState]:
        return [self.pools[k] for k in sorted(self.pools)]

    def total_remaining(self) -> int:
        return sum(p.remaining() for p in self.pools.values())

    def pool_of(self, node_id: str) -> str | None:
        tid = self._node_ticket.get(node_id)
        return self.tickets[tid].pool_id if tid is not None else None

    # -- provisioning -------------------------------------------------------

    def provision(self, count: int) -> ProvisionResult:
        """Provision `count` units, re-selecting the pool after every unit so a
        single pool is never over-committed."""
        if count < 1:
            raise ValueError("provision count must be >= 1")
        strategy = STRATEGIES[self.strategy_name]
        result = ProvisionResult(tickets=[])
        for _ in range(count):
            pool_id = strategy(self.pool_states())
            if pool_id is None:
                result.no_capacity = True
                break
            result.tickets.append(self._provision_one(self.pools[pool_id]))
        return result

    def provision_into(self, pool_id: str, count: int) -> ProvisionResult:
        """Provision `count` units from one specific pool (static clouds)."""
        pool = self.pool(pool_id)
        result = ProvisionResult(tickets=[])
        for _ in range(count):
            if pool.remaining() <= 0:
                result.no_capacity = True
                break
            result.tickets.append(self._provision_one(pool))
        return result

    def _provision_one(self, pool: PoolState) -> Ticket:
        cfg = pool.config
        backend = self.backends[cfg.pool_id]
        ticket = Ticket(ticket_id=self._ticket_counter, pool_id=cfg.pool_id,
                        issued_at=self.kernel.now)
        self._ticket_counter += 1
        self.tickets[ticket.ticket_id] = ticket

        if cfg.provider is ProviderKind.AZURE_SIM:
            self._ensure_azure_defaults(pool, backend)
            response = backend.handle(wire.request(
                "POST", f"/services/{cfg.service_name}/vms",
                storage=cfg.storage_name, template=cfg.vm_template,
                **cfg.credentials,
            ))
            node_key = "vm_id"
        else:
            response = backend.handle(wire.request(
                "POST", "/instances", template=cfg.vm_template, **cfg.credentials,
            ))
            node_key = "instance_id"

        if response.status != wire.STATUS_OK:
            ticket.status = TicketStatus.REJECTED
            ticket.reject_code = response.code
            self.kernel.emit(events.PROVIDER_REJECTED, {
                "code": response.code, "pool": cfg.pool_id, "ticket": ticket.ticket_id,
            })
            return ticket

        ticket.node_id = response[node_key]
        ticket.private_ip = response["private_ip"]
        ticket.public_ip = response.get("public_ip")
        ticket.network_id = response["network_id"]
        pool.pending.add(ticket.ticket_id)
        self._node_ticket[ticket.node_id] = ticket.ticket_id
        self.kernel.emit(events.VM_REQUESTED, {
            "node": ticket.node_id, "pool": cfg.pool_id, "ticket": ticket.ticket_id,
        })
        return ticket

    def _ensure_azure_defaults(self, pool: PoolState, backend) -> None:
        """Create the default cloud service/storage on first use. Explicitly
        named ones are reused as-is, so a missing one surfaces as a provider
        rejection rather than being silently created."""
        cfg = pool.config
        if cfg.azure_service is None:
            backend.handle(wire.request("POST", "/services",
                                        name=cfg.service_name, **cfg.credentials))
        if cfg.azure_storage is None:
            backend.handle(wire.request("POST", "/storages",
                                        name=cfg.storage_name, **cfg.credentials))

    # -- release and lifecycle notifications ---------------------------------

    def release(self, node_id: str) -> None:
        tid = self._node_ticket.get(node_id)
        if tid is None or node_id in self._releasing:
            raise UnknownNode(node_id)
        ticket = self.tickets[tid]
        pool = self.pools[ticket.pool_id]
        if node_id not in pool.active:
            raise UnknownNode(node_id)
        cfg = pool.config
        backend = self.backends[cfg.pool_id]
        if cfg.provider is ProviderKind.AZURE_SIM:
            doc = wire.request("DELETE", f"/vms/{node_id}", **cfg.credentials)
        else:
            doc = wire.request("DELETE", f"/instances/{node_id}", **cfg.credentials)
        response = backend.handle(doc)
        if response.status != wire.STATUS_OK:
            raise UnknownNode(f"{node_id}: provider said {response.code}")
        self._releasing.add(node_id)
        self.kernel.emit(events.RELEASE_REQUESTED, {"node": node_id, "pool": cfg.pool_id})

    def on_vm_ready(self, node_id: str) -> None:
        tid = self._node_ticket.get(node_id)
        if tid is None:
            raise UnknownNode(node_id)
        ticket = self.tickets[tid]
        pool = self.pools[ticket.pool_id]
        pool.pending.discard(tid)
        pool.active.add(node_id)
        ticket.status = TicketStatus.ACTIVE

    def on_node_gone(self, node_id: str) -> None:
        """Terminated or failed: capacity is freed and the ticket closed."""
        tid = self._node_ticket.get(node_id)
        if tid is None:
            return
        ticket = self.tickets[tid]
        pool = self.pools[ticket.pool_id]
        pool.pending.discard(tid)
        pool.active.discard(node_id)
        self._releasing.discard(node_id)
        ticket.status = TicketStatus.CLOSED

    def ticket_counts(self) -> dict[str, int]:
        counts = {s.value: 0 for s in TicketStatus}
        for t in self.tickets.values():
            counts[t.status.value] += 1
        return counts
