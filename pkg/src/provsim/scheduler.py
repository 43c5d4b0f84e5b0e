"""Bag-of-tasks scheduling and the two dynamic provisioning policies.

Dispatch is FIFO: every idle ready worker gets at most one task. The decision
functions are pure so they can be tested against brute-force oracles without
running the event loop.

The deadline policy sizes the worker set with the discrete makespan law
(ceil(units / w) * est must fit in the remaining budget) rather than the fluid
rate units*est/budget: the fluid count can be one worker short for the entire
run (each worker would need a fractional task), which provably misses tight
deadlines, while the discrete count equals the brute-force minimum whenever
work units are uniform.
"""

import enum
import math
from collections import deque
from dataclasses import dataclass, fields
from fractions import Fraction

from .core import Application, TaskRecord, TaskState
from .kernel import to_fraction, to_seconds


class Algorithm(enum.Enum):
    FIXED_QUEUE = "fixed_queue"
    DEADLINE_PRIORITY = "deadline_priority"


class EmptyApplication(Exception):
    pass


class DuplicateApplication(Exception):
    pass


class UnknownTask(Exception):
    pass


@dataclass
class SchedulerConfig:
    algorithm: Algorithm = Algorithm.FIXED_QUEUE
    fixed_queue_threshold: int = 1
    est_task_time_s: Fraction = Fraction(10)
    provision_overhead_s: Fraction = Fraction(0)
    eval_period_s: Fraction = Fraction(10)
    idle_release_s: Fraction = Fraction(0)

    def __post_init__(self):
        for f in fields(self):
            if f.name.endswith("_s"):
                setattr(self, f.name, to_fraction(getattr(self, f.name)))
        if self.fixed_queue_threshold < 1:
            raise ValueError("fixed_queue_threshold must be >= 1")
        if self.est_task_time_s <= 0:
            raise ValueError("est_task_time_s must be > 0")
        if self.eval_period_s <= 0:
            raise ValueError("eval_period_s must be > 0")
        if self.provision_overhead_s < 0 or self.idle_release_s < 0:
            raise ValueError("overhead/idle_release must be >= 0")


class DecisionKind(enum.Enum):
    PROVISION = "Provision"
    RELEASE = "Release"
    NOOP = "NoOp"


@dataclass(frozen=True)
class Decision:
    kind: DecisionKind
    count: int = 0
    needed: int = 0
    note: str = ""

    @staticmethod
    def provision(count: int, needed: int, note: str = "") -> "Decision":
        if count <= 0:
            return Decision(DecisionKind.NOOP, needed=needed, note=note)
        return Decision(DecisionKind.PROVISION, count, needed, note)

    @staticmethod
    def release(count: int, needed: int) -> "Decision":
        if count <= 0:
            return Decision(DecisionKind.NOOP, needed=needed)
        return Decision(DecisionKind.RELEASE, count, needed)


def fixed_queue_decision(queued: int, active: int, pending: int,
                         idle_eligible: int, threshold: int,
                         capacity_remaining: int) -> Decision:
    """Hold one worker per `threshold` queued tasks."""
    target = math.ceil(queued / threshold)
    have = active + pending
    if target > have:
        return Decision.provision(min(target - have, capacity_remaining), needed=target)
    if target < have:
        return Decision.release(min(idle_eligible, have - target), needed=target)
    return Decision(DecisionKind.NOOP, needed=target)


def minimal_workers(units: int, est_s: Fraction, budget_s: Fraction) -> int:
    """Smallest w with ceil(units / w) * est <= budget; units when budget < est."""
    if units <= 0:
        return 0
    if budget_s < est_s:
        return units
    per_worker = int(budget_s // est_s)          # tasks one worker can finish
    return math.ceil(units / per_worker)


def deadline_decision(now: Fraction, deadline: Fraction, queued: int,
                      running_remaining_s: Fraction, est_s: Fraction,
                      active: int, pending: int, busy: int,
                      idle_eligible: int, overhead_s: Fraction,
                      capacity_remaining: int) -> Decision:
    """Provision the minimal worker set that still finishes by the deadline.

    Remaining work is expressed in est-sized units (queued tasks plus the
    in-flight remainder rounded up); new workers only contribute after
    `overhead_s`, so the budget excludes it. A deadline already in the past
    degenerates to max provisioning.
    """
    if queued == 0:
        # Running tasks are pinned to their workers; extra machines cannot help.
        return Decision.release(min(idle_eligible, active - busy), needed=busy)
    budget = deadline - now - overhead_s
    note = ""
    if budget <= 0:
        needed = active + pending + capacity_remaining
        note = "deadline_impossible"
    else:
        units = queued + math.ceil(running_remaining_s / est_s)
        needed = minimal_workers(units, est_s, budget)
    have = active + pending
    if needed > have:
        return Decision.provision(min(needed - have, capacity_remaining), needed, note)
    if needed < active:
        return Decision.release(min(idle_eligible, active - needed), needed)
    return Decision(DecisionKind.NOOP, needed=needed, note=note)


@dataclass
class _AppState:
    app: Application
    submitted_at: Fraction
    completed: int = 0
    failed: bool = False
    completed_at: Fraction | None = None

    @property
    def done(self) -> bool:
        return self.failed or self.completed == len(self.app.tasks)


@dataclass(frozen=True)
class Assignment:
    task_id: str
    node_id: str
    app_id: str
    complete_at: Fraction


class Scheduler:
    """FIFO dispatcher over the ready worker set.

    Kernel-free by design: callers pass `now` in and act on the returned
    assignments/verdicts, so every method is directly testable.
    """

    def __init__(self, cfg: SchedulerConfig):
        self.cfg = cfg
        self.apps: dict[str, _AppState] = {}
        self.tasks: dict[str, TaskRecord] = {}
        self.task_app: dict[str, str] = {}
        self.queue: deque[str] = deque()
        self.ready: set[str] = set()
        self.idle: dict[str, Fraction] = {}
        self.busy: dict[str, str] = {}
        self.finish_at: dict[str, Fraction] = {}
        self._done_durations_total = Fraction(0)
        self._done_count = 0

    # -- applications ---------------------------------------------------------

    def submit(self, app: Application, now) -> str:
        now = to_seconds(now)
        if not app.tasks:
            raise EmptyApplication(app.app_id)
        if app.app_id in self.apps:
            raise DuplicateApplication(app.app_id)
        app.validate()
        for task in app.tasks:
            if task.task_id in self.tasks:
                raise ValueError(f"task id {task.task_id} already known")
        self.apps[app.app_id] = _AppState(app=app, submitted_at=now)
        for task in app.tasks:
            self.tasks[task.task_id] = task
            self.task_app[task.task_id] = app.app_id
            self.queue.append(task.task_id)
        return app.app_id

    def app_state(self, app_id: str) -> _AppState:
        return self.apps[app_id]

    def all_done(self) -> bool:
        return bool(self.apps) and all(a.done for a in self.apps.values())

    def any_failed(self) -> bool:
        return any(a.failed for a in self.apps.values())

    # -- workers ----------------------------------------------------------------

    def add_worker(self, node_id: str, now) -> None:
        self.ready.add(node_id)
        self.idle[node_id] = to_seconds(now)

    def remove_worker(self, node_id: str) -> str | None:
        """Drop a worker from the ready set; returns its in-flight task, if any."""
        self.ready.discard(node_id)
        self.idle.pop(node_id, None)
        return self.busy.pop(node_id, None)

    def is_ready(self, node_id: str) -> bool:
        return node_id in self.ready

    # -- dispatch and completions -------------------------------------------------

    def dispatch(self, now) -> list[Assignment]:
        now = to_seconds(now)
        assignments: list[Assignment] = []
        while self.queue and self.idle:
            task_id = self.queue.popleft()
            task = self.tasks[task_id]
            app = self.apps[self.task_app[task_id]]
            if app.failed or task.state is not TaskState.QUEUED:
                continue
            node_id = min(self.idle)
            del self.idle[node_id]
            self.busy[node_id] = task_id
            task.state = TaskState.DISPATCHED
            task.assigned_node = node_id
            task.attempts += 1
            complete_at = now + task.duration_s
            self.finish_at[task_id] = complete_at
            assignments.append(Assignment(task_id, node_id, app.app.app_id, complete_at))
        return assignments

    def _assignment_is_current(self, task_id: str, node_id: str) -> bool:
        task = self.tasks.get(task_id)
        return (task is not None
                and task.state is TaskState.DISPATCHED
                and task.assigned_node == node_id
                and self.busy.get(node_id) == task_id)

    def on_task_complete(self, task_id: str, node_id: str, now) -> str:
        """Returns 'completed' or 'stale' (a completion superseded by failure)."""
        now = to_seconds(now)
        if not self._assignment_is_current(task_id, node_id):
            return "stale"
        task = self.tasks[task_id]
        task.state = TaskState.COMPLETED
        del self.busy[node_id]
        self.finish_at.pop(task_id, None)
        if node_id in self.ready:
            self.idle[node_id] = now
        self._done_durations_total += task.duration_s
        self._done_count += 1
        app = self.apps[self.task_app[task_id]]
        app.completed += 1
        if app.completed == len(app.app.tasks):
            app.completed_at = now
        return "completed"

    def on_task_failed(self, task_id: str, node_id: str, now) -> str:
        """Returns 'requeued', 'app_failed', or 'stale'."""
        if task_id not in self.tasks:
            raise UnknownTask(task_id)
        if not self._assignment_is_current(task_id, node_id):
            return "stale"
        task = self.tasks[task_id]
        app = self.apps[self.task_app[task_id]]
        del self.busy[node_id]
        self.finish_at.pop(task_id, None)
        task.assigned_node = None
        if task.attempts >= app.app.max_retries + 1:
            task.state = TaskState.FAILED
            app.failed = True
            return "app_failed"
        task.state = TaskState.QUEUED
        self.queue.appendleft(task_id)
        return "requeued"

    def on_worker_stopped(self, node_id: str) -> str | None:
        """Administrative stop: the aborted run does not count as an attempt."""
        task_id = self.remove_worker(node_id)
        if task_id is None:
            return None
        task = self.tasks[task_id]
        task.state = TaskState.QUEUED
        task.assigned_node = None
        task.attempts -= 1
        self.finish_at.pop(task_id, None)
        self.queue.appendleft(task_id)
        return task_id

    def on_node_failed(self, node_id: str, now) -> tuple[str, str | None]:
        task_id = self.busy.get(node_id)
        if task_id is None:
            self.remove_worker(node_id)
            return "none", None
        verdict = self.on_task_failed(task_id, node_id, now)
        self.remove_worker(node_id)
        return verdict, task_id

    # -- decision inputs -----------------------------------------------------------

    def queued_count(self) -> int:
        return sum(
            1 for t in self.queue
            if self.tasks[t].state is TaskState.QUEUED
            and not self.apps[self.task_app[t]].failed
        )

    def running_remaining(self, now) -> Fraction:
        now = to_seconds(now)
        return sum((max(Fraction(0), f - now) for f in self.finish_at.values()),
                   Fraction(0))

    def est_current(self) -> Fraction:
        if self._done_count == 0:
            return self.cfg.est_task_time_s
        return self._done_durations_total / self._done_count

    def idle_eligible(self, now) -> list[str]:
        """Idle workers past the release grace period, longest idle first."""
        now = to_seconds(now)
        eligible = [(since, node) for node, since in self.idle.items()
                    if now - since >= self.cfg.idle_release_s]
        return [node for _, node in sorted(eligible)]

    def decision(self, now, active: int, pending: int, capacity_remaining: int) -> Decision:
        now = to_seconds(now)
        queued = self.queued_count()
        idle_ok = len(self.idle_eligible(now))
        if self.cfg.algorithm is Algorithm.FIXED_QUEUE:
            return fixed_queue_decision(queued, active, pending, idle_ok,
                                        self.cfg.fixed_queue_threshold,
                                        capacity_remaining)
        deadline = self._current_deadline()
        if deadline is None:
            return fixed_queue_decision(queued, active, pending, idle_ok,
                                        self.cfg.fixed_queue_threshold,
                                        capacity_remaining)
        return deadline_decision(
            now=now, deadline=deadline, queued=queued,
            running_remaining_s=self.running_remaining(now),
            est_s=self.est_current(), active=active, pending=pending,
            busy=len(self.busy), idle_eligible=idle_ok,
            overhead_s=self.cfg.provision_overhead_s,
            capacity_remaining=capacity_remaining,
        )

    def _current_deadline(self) -> Fraction | None:
        for state in self.apps.values():
            if not state.done and state.app.deadline_s is not None:
                return state.submitted_at + state.app.deadline_s
        return None
