"""Cross-module invariant suites: capacity safety, protocol integrity, the
homogeneous makespan law, and the deadline oracle.

Each suite runs seeded randomized scenarios and returns a CheckResult; the
trace checks replay the event log from scratch rather than trusting live
engine state, so they catch bookkeeping bugs in the pool manager itself.
"""

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import events
from .core import make_application
from .engine import CloudEngine
from .kernel import SimEvent, SimKernel, SplitMix64
from .netmodel import NetworkMode
from .providers import AzureBackend
from .provisioning import PoolConfig, ProviderKind
from .scheduler import Algorithm, Scheduler, SchedulerConfig
from . import wire


@dataclass
class CheckResult:
    name: str
    passed: int = 0
    failed: int = 0
    failures: list[str] = field(default_factory=list)

    def ok(self) -> bool:
        return self.failed == 0

    def record(self, errors: list[str], context: str) -> None:
        if errors:
            self.failed += 1
            self.failures.extend(f"{context}: {e}" for e in errors[:5])
        else:
            self.passed += 1


# -- trace replays -------------------------------------------------------------

def replay_capacity(trace: list[SimEvent]) -> list[str]:
    """Re-derive per-pool active/pending from the trace and check the cap at
    every event timestamp."""
    caps: dict[str, int] = {}
    pending: dict[str, set] = {}
    active: dict[str, set] = {}
    node_pool: dict[str, str] = {}
    gone: set[str] = set()
    errors = []
    for ev in trace:
        p = ev.payload
        if ev.kind == events.POOL_REGISTERED:
            pool = str(p["pool"])
            caps[pool] = int(p["capacity"])
            pending[pool] = set()
            active[pool] = set()
        elif ev.kind == events.VM_REQUESTED:
            pool, node = str(p["pool"]), str(p["node"])
            node_pool[node] = pool
            pending[pool].add(node)
        elif ev.kind == events.VM_READY:
            pool, node = str(p["pool"]), str(p["node"])
            if node not in gone:   # boot completions may race a node failure
                pending[pool].discard(node)
                active[pool].add(node)
        elif ev.kind in (events.TERMINATED, events.NODE_LOST):
            node = str(p["node"])
            gone.add(node)
            pool = node_pool.get(node)
            if pool is not None:
                pending[pool].discard(node)
                active[pool].discard(node)
        for pool, cap in caps.items():
            load = len(pending[pool]) + len(active[pool])
            if load > cap:
                errors.append(
                    f"t={ev.time_s} pool {pool}: active+pending={load} > capacity={cap}")
    return errors


def replay_conservation(trace: list[SimEvent], ticket_counts: dict[str, int]) -> list[str]:
    """Issued tickets must equal pending + active + rejected + closed, and the
    pool manager's own books must agree with the trace."""
    requested: set[str] = set()
    ready: set[str] = set()
    gone: set[str] = set()
    rejected = 0
    for ev in trace:
        if ev.kind == events.VM_REQUESTED:
            requested.add(str(ev.payload["node"]))
        elif ev.kind == events.PROVIDER_REJECTED:
            rejected += 1
        elif ev.kind == events.VM_READY:
            ready.add(str(ev.payload["node"]))
        elif ev.kind in (events.TERMINATED, events.NODE_LOST):
            gone.add(str(ev.payload["node"]))
    errors = []
    pending_end = requested - ready - gone
    active_end = ready - gone
    issued = len(requested) + rejected
    if issued != len(pending_end) + len(active_end) + rejected + len(gone & requested):
        errors.append("ticket conservation violated in trace")
    expect = {
        "pending": len(pending_end),
        "active": len(active_end),
        "rejected": rejected,
        "closed": len(gone & requested),
    }
    got = {k: ticket_counts.get(k, 0) for k in expect}
    if got != expect:
        errors.append(f"pool manager books {got} != trace {expect}")
    return errors


def replay_completions(trace: list[SimEvent], n_tasks: int) -> list[str]:
    """Every task completes exactly once, unless the application failed."""
    done: dict[str, int] = {}
    app_failed = False
    for ev in trace:
        if ev.kind == events.TASK_DONE:
            task = str(ev.payload["task"])
            done[task] = done.get(task, 0) + 1
        elif ev.kind == events.APP_FAILED:
            app_failed = True
    errors = [f"task {t} completed {c} times" for t, c in done.items() if c > 1]
    if not app_failed and len(done) != n_tasks:
        errors.append(f"{len(done)}/{n_tasks} tasks completed and app not failed")
    return errors


def replay_install_chain(trace: list[SimEvent]) -> list[str]:
    """VmReady -> InstallStarted -> InstallDone -> ConfigDone -> ContainerStarted
    in order, with no stage skipped, for every node that reached a stage."""
    stages = [events.VM_READY, events.INSTALL_STARTED, events.INSTALL_DONE,
              events.CONFIG_DONE, events.CONTAINER_STARTED]
    seen: dict[str, int] = {}
    skipped: dict[str, set[str]] = {}
    errors = []
    for ev in trace:
        if ev.kind == events.INSTALL_FAILED or ev.kind == events.RELEASE_REQUESTED:
            skipped.setdefault(str(ev.payload["node"]), set()).add(ev.kind)
        if ev.kind in stages:
            node = str(ev.payload["node"])
            want = seen.get(node, -1) + 1
            if stages.index(ev.kind) != want and not skipped.get(node):
                errors.append(f"node {node}: {ev.kind} out of order")
            seen[node] = stages.index(ev.kind)
    return errors


# -- randomized dynamic scenarios ----------------------------------------------

def _random_pool(rng: SplitMix64, index: int, provider: ProviderKind) -> PoolConfig:
    creds = ({"subscription_id": "sub", "certificate_token": "tok"}
             if provider is ProviderKind.AZURE_SIM
             else {"access_key": "ak", "secret_key": "sk"})
    return PoolConfig(
        pool_id=f"p{index}",
        provider=provider,
        credentials=creds,
        capacity=1 + rng.randrange(4),
        priority=rng.randrange(5),
        price_per_hour=Fraction(9, 100),
        network_mode=NetworkMode.HYBRID,
        boot_latency_s=Fraction(rng.randrange(20)),
        boot_jitter_s=Fraction(rng.randrange(3)),
        install_latency_s=Fraction(rng.randrange(10)),
    )


def run_random_dynamic(seed: int, tamper=None) -> CloudEngine:
    """One randomized dynamic run with injected node failures; returns the
    engine after completion (possibly with a failed application)."""
    rng = SplitMix64(seed ^ 0xD1CE)
    n_pools = 1 + rng.randrange(3)
    pools = [
        _random_pool(rng, i,
                     ProviderKind.AZURE_SIM if rng.randrange(2) else ProviderKind.EC2_SIM)
        for i in range(n_pools)
    ]
    algorithm = Algorithm.FIXED_QUEUE if rng.randrange(2) else Algorithm.DEADLINE_PRIORITY
    overhead = max(p.boot_latency_s + p.install_latency_s for p in pools)
    sched = SchedulerConfig(
        algorithm=algorithm,
        fixed_queue_threshold=1 + rng.randrange(4),
        est_task_time_s=Fraction(5 + rng.randrange(10)),
        provision_overhead_s=overhead,
        eval_period_s=Fraction(1 + rng.randrange(5)),
        idle_release_s=Fraction(rng.randrange(10)),
    )
    kernel = SimKernel(seed)
    engine = CloudEngine(kernel, scheduler_cfg=sched, dynamic=True)
    engine.attach_master()
    for pool in pools:
        engine.add_pool(pool)
    if tamper is not None:
        tamper(engine)

    n_tasks = 3 + rng.randrange(18)
    durations = [Fraction(2 + rng.randrange(9)) for _ in range(n_tasks)]
    deadline = None
    if algorithm is Algorithm.DEADLINE_PRIORITY:
        deadline = overhead + Fraction((1 + rng.randrange(6)) * 60)
    app = make_application("app", durations, deadline_s=deadline,
                           max_retries=rng.randrange(3))
    for _ in range(rng.randrange(4)):
        engine.inject_node_failure(Fraction(rng.randrange(120)), rng.randrange(8))
    engine.submit(app)
    kernel.run_until(engine.scheduler.all_done, horizon_s=100_000)
    engine.begin_cleanup()
    kernel.run_until(lambda: not engine.alive_worker_nodes())
    return engine


def capacity_suite(n_traces: int = 100, seed: int = 2024, tamper=None) -> CheckResult:
    result = CheckResult("capacity")
    for i in range(n_traces):
        engine = run_random_dynamic(seed + i, tamper=tamper)
        trace = engine.kernel.trace
        errors = replay_capacity(trace)
        errors += replay_conservation(trace, engine.pool_manager.ticket_counts())
        errors += replay_completions(trace, len(engine.scheduler.tasks))
        errors += replay_install_chain(trace)
        result.record(errors, f"seed={seed + i}")
    return result


# -- provider protocol fuzz ------------------------------------------------------

def azure_graph_errors(snapshot: dict) -> list[str]:
    """Referential integrity of an Azure account snapshot."""
    errors = []
    services = snapshot["services"]
    storages = set(snapshot["storages"])
    for vm_id, vm in snapshot["vms"].items():
        if vm["service"] not in services:
            errors.append(f"vm {vm_id} references missing service {vm['service']}")
        elif vm_id not in services[vm["service"]]["vm_ids"]:
            errors.append(f"vm {vm_id} not listed in its service")
        elif vm["public_ip"] != services[vm["service"]]["public_ip"]:
            errors.append(f"vm {vm_id} public ip differs from its cloud service")
        if vm["storage"] not in storages:
            errors.append(f"vm {vm_id} references missing storage {vm['storage']}")
    for name, svc in services.items():
        for vm_id in svc["vm_ids"]:
            if vm_id not in snapshot["vms"]:
                errors.append(f"service {name} lists missing vm {vm_id}")
    return errors


_AZ_CREDS = {"subscription_id": "sub", "certificate_token": "tok"}


def fuzz_azure_once(seed: int, ops: int = 15) -> list[str]:
    rng = SplitMix64(seed)
    kernel = SimKernel(seed)
    backend = AzureBackend(kernel, "az", _AZ_CREDS, "region-1", boot_latency_s=5)
    names = ["a", "b", "c"]
    vm_ids: list[str] = []
    errors = []
    for _ in range(ops):
        op = rng.randrange(6)
        if op == 0:
            backend.handle(wire.request("POST", "/storages",
                                        name=rng.choice(names), **_AZ_CREDS))
        elif op == 1:
            backend.handle(wire.request("POST", "/services",
                                        name=rng.choice(names), **_AZ_CREDS))
        elif op == 2:
            resp = backend.handle(wire.request(
                "POST", f"/services/{rng.choice(names)}/vms",
                storage=rng.choice(names), template="small", **_AZ_CREDS))
            if resp.status == wire.STATUS_OK:
                vm_ids.append(resp["vm_id"])
        elif op == 3 and vm_ids:
            backend.handle(wire.request(
                "DELETE", f"/vms/{rng.choice(vm_ids)}", **_AZ_CREDS))
        elif op == 4:
            backend.handle(wire.request(
                "DELETE", f"/services/{rng.choice(names)}", **_AZ_CREDS))
        else:
            backend.handle(wire.request(
                "DELETE", f"/storages/{rng.choice(names)}", **_AZ_CREDS))
        errors.extend(azure_graph_errors(backend.snapshot()))
        if errors:
            break
    return errors


def _random_wire_doc(rng: SplitMix64) -> wire.WireDoc:
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789_."
    keys = sorted({"".join(rng.choice(alphabet) for _ in range(1 + rng.randrange(8)))
                   for _ in range(rng.randrange(5))} - {"status", "code"})
    body = {k: "".join(rng.choice(alphabet + "=/: ") for _ in range(rng.randrange(12)))
            for k in keys}
    kind = rng.randrange(3)
    if kind == 0:
        return wire.request(rng.choice(wire.VERBS), "/" + rng.choice(["vms", "x/y", "a"]), **body)
    if kind == 1:
        return wire.ok(**body)
    return wire.error("SOME_CODE", **body)


def protocol_suite(n_sequences: int = 300, seed: int = 7) -> CheckResult:
    result = CheckResult("protocol")
    rng = SplitMix64(seed)
    for i in range(n_sequences):
        errors = fuzz_azure_once(seed * 1000 + i)
        doc = _random_wire_doc(rng)
        round_tripped = wire.decode(wire.encode(doc))
        if round_tripped != doc:
            errors.append(f"wire round-trip mismatch for {doc}")
        result.record(errors, f"seq={i}")
    return result


# -- makespan law ------------------------------------------------------------------

def scheduler_makespan(n_tasks: int, workers: int, duration) -> Fraction:
    """Makespan of n identical tasks on w pre-ready workers, scheduler only."""
    sched = Scheduler(SchedulerConfig())
    for i in range(workers):
        sched.add_worker(f"w{i:03d}", 0)
    app = make_application("m", [duration] * n_tasks)
    sched.submit(app, 0)
    heap: list[tuple[Fraction, int, str, str]] = []
    counter = 0
    last = Fraction(0)
    for a in sched.dispatch(Fraction(0)):
        heapq.heappush(heap, (a.complete_at, counter, a.task_id, a.node_id))
        counter += 1
    while heap:
        now, _, task_id, node_id = heapq.heappop(heap)
        sched.on_task_complete(task_id, node_id, now)
        last = max(last, now)
        for a in sched.dispatch(now):
            heapq.heappush(heap, (a.complete_at, counter, a.task_id, a.node_id))
            counter += 1
    return last


def makespan_suite(max_tasks: int = 200, max_workers: int = 8,
                   duration=Fraction("7.3")) -> CheckResult:
    result = CheckResult("makespan")
    for n in range(1, max_tasks + 1):
        for w in range(1, max_workers + 1):
            got = scheduler_makespan(n, w, duration)
            want = math.ceil(n / w) * duration
            errors = [] if got == want else [f"got {got}, law says {want}"]
            result.record(errors, f"n={n} w={w}")
    return result


# -- deadline oracle ------------------------------------------------------------------

def minimal_static_workers(n_tasks: int, est: Fraction, overhead: Fraction,
                           deadline: Fraction, capacity: int) -> int | None:
    """Brute force: smallest worker count whose static makespan meets the
    deadline (homogeneous law), or None if even full capacity misses."""
    for w in range(1, capacity + 1):
        if overhead + math.ceil(n_tasks / w) * est <= deadline:
            return w
    return None


def run_deadline_instance(seed: int) -> tuple[int | None, Fraction | None, Fraction]:
    """One random instance. Returns (oracle minimal workers or None,
    completion time of the dynamic run or None, deadline)."""
    rng = SplitMix64(seed)
    n_tasks = 1 + rng.randrange(40)
    est = Fraction(50 + rng.randrange(151), 10)          # 5.0 .. 20.0
    overhead = Fraction(rng.randrange(121))              # 0 .. 120
    capacity = 1 + rng.randrange(8)
    target_w = 1 + rng.randrange(capacity + 2)           # sometimes infeasible
    slack = Fraction(rng.randrange(int(est * 10))) / 10
    deadline = overhead + math.ceil(Fraction(n_tasks, target_w)) * est + slack

    oracle = minimal_static_workers(n_tasks, est, overhead, deadline, capacity)
    if oracle is None:
        return None, None, deadline

    kernel = SimKernel(seed)
    engine = CloudEngine(kernel, scheduler_cfg=SchedulerConfig(
        algorithm=Algorithm.DEADLINE_PRIORITY,
        est_task_time_s=est,
        provision_overhead_s=overhead,
        eval_period_s=Fraction(1),
        idle_release_s=2 * est,
    ), dynamic=True)
    engine.attach_master()
    engine.add_pool(PoolConfig(
        pool_id="pool", provider=ProviderKind.EC2_SIM,
        credentials={"access_key": "ak", "secret_key": "sk"},
        capacity=capacity, priority=1, network_mode=NetworkMode.HYBRID,
        boot_latency_s=overhead, install_latency_s=0,
    ))
    app = make_application("app", [est] * n_tasks, deadline_s=deadline)
    engine.submit(app)
    kernel.run_until(engine.scheduler.all_done, horizon_s=deadline * 4 + 1000)
    state = engine.scheduler.app_state("app")
    done_at = state.completed_at
    engine.begin_cleanup()
    kernel.run_until(lambda: not engine.alive_worker_nodes())
    return oracle, done_at, deadline


def deadline_suite(n_instances: int = 100, seed: int = 424242) -> CheckResult:
    """Whenever the brute-force minimal worker count fits in capacity, the
    deadline-driven run must meet its deadline; infeasible instances are skipped."""
    result = CheckResult("deadline")
    feasible = 0
    i = 0
    while feasible < n_instances:
        oracle, done_at, deadline = run_deadline_instance(seed + i)
        i += 1
        if oracle is None:
            continue
        feasible += 1
        errors = []
        if done_at is None:
            errors.append("run did not complete")
        elif done_at > deadline:
            errors.append(f"finished {done_at} after deadline {deadline}")
        result.record(errors, f"instance seed={seed + i - 1}")
    return result


SUITES = {
    "capacity": capacity_suite,
    "protocol": protocol_suite,
    "makespan": makespan_suite,
    "deadline": deadline_suite,
}

_QUICK_SIZES = {
    "capacity": {"n_traces": 40},
    "protocol": {"n_sequences": 100},
    "makespan": {"max_tasks": 60},
    "deadline": {"n_instances": 25},
}


def run_suites(names: list[str] | None = None, quick: bool = True) -> list[CheckResult]:
    selected = names or sorted(SUITES)
    results = []
    for name in selected:
        if name not in SUITES:
            raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
        kwargs = _QUICK_SIZES[name] if quick else {}
        results.append(SUITES[name](**kwargs))
    return results
