"""Shared domain model: node/task identities and lifecycle state machines.

The full transition table lives in docs/lifecycle.md and is frozen by a golden
test; every (state, event) pair outside the table is a hard error, because a
silently tolerated illegal transition is an orchestration bug.
"""

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction


class VmState(enum.Enum):
    REQUESTED = "Requested"
    BOOTING = "Booting"
    RUNNING = "Running"
    RELEASING = "Releasing"
    TERMINATED = "Terminated"
    FAILED = "Failed"


class DaemonState(enum.Enum):
    NOT_INSTALLED = "NotInstalled"
    INSTALLING = "Installing"
    CONFIGURED = "Configured"
    CONTAINER_RUNNING = "ContainerRunning"
    STOPPED = "Stopped"
    UNREACHABLE = "Unreachable"


class NodeRole(enum.Enum):
    MASTER = "Master"
    WORKER = "Worker"


class LifecycleEvent(enum.Enum):
    VM_READY = "VmReady"
    INSTALL_DONE = "InstallDone"
    CONFIG_DONE = "ConfigDone"
    CONTAINER_STARTED = "ContainerStarted"
    STOP_REQUESTED = "StopRequested"
    RELEASE_REQUESTED = "ReleaseRequested"
    TERMINATED = "Terminated"
    PROBE_FAILED = "ProbeFailed"


class IllegalTransition(Exception):
    """A (state, event) pair outside the documented lifecycle table."""

    def __init__(self, vm_state: VmState, daemon_state: DaemonState, event: LifecycleEvent):
        self.vm_state = vm_state
        self.daemon_state = daemon_state
        self.event = event
        super().__init__(
            f"no transition for ({vm_state.value}, {daemon_state.value}) on {event.value}"
        )


@dataclass(frozen=True)
class NodeRecord:
    """One provisioned VM plus the container daemon living on it."""

    node_id: str
    pool_id: str | None
    role: NodeRole = NodeRole.WORKER
    vm_state: VmState = VmState.REQUESTED
    daemon_state: DaemonState = DaemonState.NOT_INSTALLED
    private_ip: str = ""
    public_ip: str | None = None
    open_ports: frozenset[int] = frozenset()
    provisioned_at: Fraction | None = None
    ready_at: Fraction | None = None
    released_at: Fraction | None = None

    def check_times(self) -> None:
        if self.ready_at is not None and self.provisioned_at is not None:
            assert self.ready_at >= self.provisioned_at
        if self.released_at is not None and self.ready_at is not None:
            assert self.released_at >= self.ready_at


def successor(
    vm: VmState, daemon: DaemonState, event: LifecycleEvent
) -> tuple[VmState, DaemonState] | None:
    """Successor of (vm, daemon) under event, or None if the pair is illegal.

    Terminated and Failed are absorbing; daemon progress events are only legal
    while the VM is Running. ProbeFailed models losing the node: daemon becomes
    Unreachable only if it had left NotInstalled territory (i.e. the VM was
    running), so the "daemon leaves NotInstalled only while Running" invariant
    holds on every path.
    """
    if event is LifecycleEvent.VM_READY:
        if vm in (VmState.REQUESTED, VmState.BOOTING) and daemon is DaemonState.NOT_INSTALLED:
            return VmState.RUNNING, daemon
        return None
    if event is LifecycleEvent.INSTALL_DONE:
        if vm is VmState.RUNNING and daemon is DaemonState.NOT_INSTALLED:
            return vm, DaemonState.INSTALLING
        return None
    if event is LifecycleEvent.CONFIG_DONE:
        if vm is VmState.RUNNING and daemon is DaemonState.INSTALLING:
            return vm, DaemonState.CONFIGURED
        return None
    if event is LifecycleEvent.CONTAINER_STARTED:
        if vm is VmState.RUNNING and daemon in (DaemonState.CONFIGURED, DaemonState.STOPPED):
            return vm, DaemonState.CONTAINER_RUNNING
        return None
    if event is LifecycleEvent.STOP_REQUESTED:
        if vm is VmState.RUNNING and daemon is DaemonState.CONTAINER_RUNNING:
            return vm, DaemonState.STOPPED
        return None
    if event is LifecycleEvent.RELEASE_REQUESTED:
        if vm is VmState.RUNNING:
            return VmState.RELEASING, daemon
        return None
    if event is LifecycleEvent.TERMINATED:
        if vm in (VmState.REQUESTED, VmState.BOOTING, VmState.RELEASING):
            return VmState.TERMINATED, daemon
        return None
    if event is LifecycleEvent.PROBE_FAILED:
        if vm in (VmState.RUNNING, VmState.RELEASING):
            return VmState.FAILED, DaemonState.UNREACHABLE
        if vm in (VmState.REQUESTED, VmState.BOOTING):
            return VmState.FAILED, daemon
        return None
    raise TypeError(f"unknown lifecycle event {event!r}")


def transition(node: NodeRecord, event: LifecycleEvent) -> NodeRecord:
    """Apply a lifecycle event; raises IllegalTransition outside the table."""
    nxt = successor(node.vm_state, node.daemon_state, event)
    if nxt is None:
        raise IllegalTransition(node.vm_state, node.daemon_state, event)
    return replace(node, vm_state=nxt[0], daemon_state=nxt[1])


class TaskState(enum.Enum):
    QUEUED = "Queued"
    DISPATCHED = "Dispatched"
    COMPLETED = "Completed"
    FAILED = "Failed"


@dataclass
class TaskRecord:
    """One independent work unit with a simulated service time."""

    task_id: str
    duration_s: Fraction
    state: TaskState = TaskState.QUEUED
    assigned_node: str | None = None
    attempts: int = 0


@dataclass
class Application:
    """A bag of independent tasks, optionally with a completion deadline."""

    app_id: str
    tasks: list[TaskRecord] = field(default_factory=list)
    deadline_s: Fraction | None = None
    max_retries: int = 0

    def validate(self) -> None:
        ids = [t.task_id for t in self.tasks]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate task ids in application {self.app_id}")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def make_application(
    app_id: str, durations, deadline_s=None, max_retries: int = 0
) -> Application:
    """Build an application with tasks t000, t001, ... of the given durations."""
    from .kernel import to_seconds

    tasks = [
        TaskRecord(task_id=f"{app_id}-t{i:03d}", duration_s=to_seconds(d))
        for i, d in enumerate(durations)
    ]
    app = Application(
        app_id=app_id,
        tasks=tasks,
        deadline_s=None if deadline_s is None else to_seconds(deadline_s),
        max_retries=max_retries,
    )
    app.validate()
    return app
