"""Monitoring and accounting: per-node utilization, per-pool cost, per-app
makespan, all derived from the deterministic event trace.

Billing is ceil-quantized: uptime is rounded up to whole billing quanta (one
hour by default) and charged at the pool price. The report consumes only the
trace, so the same aggregation serves live runs and exported trace files.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import events
from .core import NodeRecord
from .kernel import SimEvent, fmt_quantity, to_fraction, to_seconds


class NodeStillRunning(Exception):
    """Billing requested for a node without an end timestamp."""


@dataclass(frozen=True)
class BillingRecord:
    node_id: str
    pool_id: str
    start_s: Fraction
    end_s: Fraction
    quanta: int
    cost: Fraction


def bill(node: NodeRecord, price_per_hour, quantum_s=3600) -> BillingRecord:
    """Ceil-quantized cost of one node from provisioning to termination."""
    if node.provisioned_at is None or node.released_at is None:
        raise NodeStillRunning(node.node_id)
    price = to_fraction(price_per_hour)
    quantum = to_seconds(quantum_s)
    if quantum <= 0:
        raise ValueError("billing quantum must be > 0")
    uptime = node.released_at - node.provisioned_at
    quanta = math.ceil(uptime / quantum)
    return BillingRecord(
        node_id=node.node_id,
        pool_id=node.pool_id or "",
        start_s=node.provisioned_at,
        end_s=node.released_at,
        quanta=quanta,
        cost=quanta * price * quantum / 3600,
    )


@dataclass
class NodeUsage:
    node_id: str
    pool_id: str
    provisioned_at: Fraction | None = None
    ready_at: Fraction | None = None
    end_at: Fraction | None = None
    busy_s: Fraction = Fraction(0)
    tasks_done: int = 0
    quanta: int = 0
    cost: Fraction = Fraction(0)

    def uptime_s(self) -> Fraction:
        if self.provisioned_at is None or self.end_at is None:
            return Fraction(0)
        return self.end_at - self.provisioned_at

    def utilization(self) -> float:
        uptime = self.uptime_s()
        return float(self.busy_s / uptime) if uptime > 0 else 0.0


@dataclass
class PoolUsage:
    pool_id: str
    provider: str
    capacity: int
    priority: int
    price_per_hour: Fraction
    quantum_s: Fraction
    nodes: int = 0
    cost: Fraction = Fraction(0)


@dataclass
class AppUsage:
    app_id: str
    tasks: int
    submitted_at: Fraction
    completed: int = 0
    failed: bool = False
    finished_at: Fraction | None = None

    def makespan_s(self) -> Fraction | None:
        if self.finished_at is None:
            return None
        return self.finished_at - self.submitted_at


@dataclass
class Report:
    nodes: list[NodeUsage] = field(default_factory=list)
    pools: list[PoolUsage] = field(default_factory=list)
    apps: list[AppUsage] = field(default_factory=list)

    def total_cost(self) -> Fraction:
        return sum((p.cost for p in self.pools), Fraction(0))

    def to_csv(self) -> str:
        lines = ["record,id,pool,provisioned_s,ready_s,end_s,uptime_s,busy_s,"
                 "utilization,tasks,quanta,cost"]
        for n in self.nodes:
            lines.append(",".join([
                "node", n.node_id, n.pool_id or "-",
                _opt(n.provisioned_at), _opt(n.ready_at), _opt(n.end_at),
                fmt_quantity(n.uptime_s()), fmt_quantity(n.busy_s),
                f"{n.utilization():.6f}", str(n.tasks_done),
                str(n.quanta), fmt_quantity(n.cost),
            ]))
        for p in self.pools:
            lines.append(",".join([
                "pool", p.pool_id, p.provider, "", "", "", "", "",
                "", str(p.nodes), "", fmt_quantity(p.cost),
            ]))
        for a in self.apps:
            makespan = a.makespan_s()
            lines.append(",".join([
                "app", a.app_id, "", fmt_quantity(a.submitted_at), "",
                _opt(a.finished_at), _opt(makespan), "",
                "", f"{a.completed}/{a.tasks}", "",
                "failed" if a.failed else "completed" if makespan is not None else "running",
            ]))
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = ["NODES"]
        header = f"  {'node':<16} {'pool':<10} {'uptime_s':>12} {'busy_s':>12} {'util':>6} {'tasks':>5} {'cost':>10}"
        out.append(header)
        for n in self.nodes:
            out.append(f"  {n.node_id:<16} {n.pool_id or '-':<10} "
                       f"{fmt_quantity(n.uptime_s()):>12} {fmt_quantity(n.busy_s):>12} "
                       f"{n.utilization():>6.2f} {n.tasks_done:>5} {fmt_quantity(n.cost):>10}")
        out.append("POOLS")
        for p in self.pools:
            out.append(f"  {p.pool_id:<16} {p.provider:<10} nodes={p.nodes} "
                       f"cost={fmt_quantity(p.cost)}")
        out.append("APPLICATIONS")
        for a in self.apps:
            makespan = a.makespan_s()
            status = "FAILED" if a.failed else ("done" if makespan is not None else "running")
            out.append(f"  {a.app_id:<16} tasks={a.completed}/{a.tasks} {status} "
                       f"makespan_s={_opt(makespan) or '-'}")
        out.append(f"TOTAL COST {fmt_quantity(self.total_cost())}")
        return "\n".join(out) + "\n"


def _opt(value: Fraction | None) -> str:
    return "" if value is None else fmt_quantity(value)


def report(trace: list[SimEvent]) -> Report:
    """Aggregate a trace into the monitoring/accounting report.

    Nodes without a termination event are costed up to the last trace
    timestamp (shown as still running by the missing end column).
    """
    nodes: dict[str, NodeUsage] = {}
    pools: dict[str, PoolUsage] = {}
    apps: dict[str, AppUsage] = {}
    dispatch_at: dict[str, Fraction] = {}
    last_time = Fraction(0)

    for ev in trace:
        p = ev.payload
        last_time = max(last_time, ev.time_s)
        kind = ev.kind
        if kind == events.POOL_REGISTERED:
            pools[str(p["pool"])] = PoolUsage(
                pool_id=str(p["pool"]), provider=str(p["provider"]),
                capacity=int(p["capacity"]), priority=int(p["priority"]),
                price_per_hour=to_fraction(p["price_per_hour"]),
                quantum_s=to_fraction(p["quantum_s"]),
            )
        elif kind == events.MASTER_ATTACHED:
            nodes[str(p["node"])] = NodeUsage(node_id=str(p["node"]), pool_id="",
                                              provisioned_at=ev.time_s)
        elif kind == events.VM_REQUESTED:
            node_id = str(p["node"])
            usage = NodeUsage(node_id=node_id, pool_id=str(p["pool"]),
                              provisioned_at=ev.time_s)
            nodes[node_id] = usage
            pools[usage.pool_id].nodes += 1
        elif kind == events.VM_READY:
            usage = nodes[str(p["node"])]
            if usage.end_at is None:   # ignore boot completions after failure
                usage.ready_at = ev.time_s
        elif kind in (events.TERMINATED, events.NODE_LOST):
            usage = nodes.get(str(p["node"]))
            if usage is not None and usage.end_at is None:
                usage.end_at = ev.time_s
        elif kind == events.TASK_DISPATCHED:
            dispatch_at[str(p["task"])] = ev.time_s
        elif kind == events.TASK_DONE:
            node_id, task_id = str(p["node"]), str(p["task"])
            usage = nodes[node_id]
            usage.busy_s += ev.time_s - dispatch_at[task_id]
            usage.tasks_done += 1
            app = apps[str(p["app"])]
            app.completed += 1
            app.finished_at = ev.time_s
        elif kind == events.APP_SUBMITTED:
            apps[str(p["app"])] = AppUsage(
                app_id=str(p["app"]), tasks=int(p["tasks"]), submitted_at=ev.time_s,
            )
        elif kind == events.APP_FAILED:
            app = apps[str(p["app"])]
            app.failed = True
            app.finished_at = ev.time_s

    for usage in nodes.values():
        if usage.pool_id and usage.provisioned_at is not None:
            pool = pools[usage.pool_id]
            end = usage.end_at if usage.end_at is not None else last_time
            uptime = end - usage.provisioned_at
            usage.quanta = math.ceil(uptime / pool.quantum_s)
            usage.cost = usage.quanta * pool.price_per_hour * pool.quantum_s / 3600
            pool.cost += usage.cost

    return Report(
        nodes=sorted(nodes.values(), key=lambda n: n.node_id),
        pools=sorted(pools.values(), key=lambda p: p.pool_id),
        apps=sorted(apps.values(), key=lambda a: a.app_id),
    )
