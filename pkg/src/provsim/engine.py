"""CloudEngine: wires kernel, pools, backends, deploy, and scheduler into one
orchestrated cloud.

Every asynchronous completion is a kernel event, so the full provisioning
chain for a dynamic node shows up in the trace in order:

    VmRequested -> VmReady -> InstallStarted -> InstallDone -> ConfigDone
                -> ContainerStarted -> WorkerReady -> TaskDispatched ...

The master is a pre-existing node: it is attached, never provisioned, and a
release attempt on it is refused.
"""

from dataclasses import replace

from . import events
from .core import (Application, LifecycleEvent, NodeRecord, NodeRole, VmState,
                   transition)
from .deploy import (CONTAINER_PORT, MANAGEMENT_PORT, ControlAction,
                     DeployService, RepoKind, Repository, RepoUnreachable)
from .kernel import SimKernel
from .netmodel import (NetworkLocation, NetworkMode, NoPublicIp,
                       advertise_endpoint, reachable)
from .providers import AzureBackend, Ec2Backend
from .provisioning import (PoolConfig, PoolManager, ProviderKind,
                           ProvisionResult, RefusedMasterRelease, UnknownNode)
from .scheduler import DecisionKind, Scheduler, SchedulerConfig

MASTER_NODE_ID = "master"

DEFAULT_REPOSITORY = Repository(kind=RepoKind.REMOTE_FTP, address="ftp://repo/containers")


class CloudEngine:
    """Single-owner orchestration state, mutated only by the event thread."""

    def __init__(self, kernel: SimKernel, scheduler_cfg: SchedulerConfig | None = None,
                 repository: Repository = DEFAULT_REPOSITORY, dynamic: bool = False):
        self.kernel = kernel
        self.dynamic = dynamic
        self.repository = repository
        self.pool_manager = PoolManager(kernel)
        self.scheduler = Scheduler(scheduler_cfg or SchedulerConfig())
        self.deploy = DeployService(kernel, self)
        self.nodes: dict[str, NodeRecord] = {}
        self.networks: dict[str, str] = {}
        self.finishing = False
        self._deadline_noted = False
        self._ip_spaces = 0

        on = kernel.on
        on(events.VM_READY, self._on_vm_ready)
        on(events.INSTALL_DONE, self._on_install_done)
        on(events.CONFIG_DONE, self._on_config_done)
        on(events.CONTAINER_STARTED, self._on_container_started)
        on(events.CONTAINER_STOPPED, self._on_container_stopped)
        on(events.CONTAINER_RESTARTED, self._on_container_restarted)
        on(events.TASK_COMPLETE, self._on_task_complete)
        on(events.NODE_FAILED, self._on_node_failed)
        on(events.TERMINATED, self._on_terminated)
        on(events.EVAL_PROVISIONING, self._on_eval)

    # -- cloud context used by DeployService ---------------------------------

    def node(self, node_id: str) -> NodeRecord:
        return self.nodes[node_id]

    def location(self, node_id: str) -> NetworkLocation:
        rec = self.nodes[node_id]
        return NetworkLocation(
            network_id=self.networks[node_id],
            private_ip=rec.private_ip,
            public_ip=rec.public_ip,
            open_ports=rec.open_ports,
        )

    def master_location(self) -> NetworkLocation:
        return self.location(MASTER_NODE_ID)

    def network_mode_of(self, node_id: str) -> NetworkMode:
        if node_id == MASTER_NODE_ID:
            return NetworkMode.PRIVATE
        return self.pool_config_of(node_id).network_mode

    def pool_config_of(self, node_id: str) -> PoolConfig:
        pool_id = self.pool_manager.pool_of(node_id)
        return self.pool_manager.pool(pool_id).config

    def open_port(self, node_id: str, port: int) -> None:
        rec = self.nodes[node_id]
        self._update(node_id, open_ports=rec.open_ports | {port})

    def close_port(self, node_id: str, port: int) -> None:
        rec = self.nodes[node_id]
        self._update(node_id, open_ports=rec.open_ports - {port})

    def reset_daemon(self, node_id: str) -> None:
        from .core import DaemonState
        self._update(node_id, daemon_state=DaemonState.NOT_INSTALLED)

    def _update(self, node_id: str, **changes) -> NodeRecord:
        rec = replace(self.nodes[node_id], **changes)
        self.nodes[node_id] = rec
        return rec

    def _apply(self, node_id: str, event: LifecycleEvent) -> NodeRecord:
        rec = transition(self.nodes[node_id], event)
        self.nodes[node_id] = rec
        return rec

    # -- setup ----------------------------------------------------------------

    def attach_master(self, network_id: str = "master-net",
                      private_ip: str = "10.255.0.1",
                      public_ip: str | None = "40.0.0.1") -> None:
        from .core import DaemonState
        rec = NodeRecord(
            node_id=MASTER_NODE_ID, pool_id=None, role=NodeRole.MASTER,
            vm_state=VmState.RUNNING, daemon_state=DaemonState.CONTAINER_RUNNING,
            private_ip=private_ip, public_ip=public_ip,
            open_ports=frozenset({MANAGEMENT_PORT, CONTAINER_PORT}),
            provisioned_at=self.kernel.now, ready_at=self.kernel.now,
        )
        self.nodes[MASTER_NODE_ID] = rec
        self.networks[MASTER_NODE_ID] = network_id
        self.kernel.emit(events.MASTER_ATTACHED, {
            "network": network_id, "node": MASTER_NODE_ID,
            "private_ip": private_ip, "public_ip": public_ip or "",
        })

    def add_pool(self, config: PoolConfig) -> str:
        space = self._ip_spaces
        self._ip_spaces += 1
        if config.provider is ProviderKind.AZURE_SIM:
            backend = AzureBackend(self.kernel, config.pool_id, config.credentials,
                                   config.region, config.boot_latency_s,
                                   config.boot_jitter_s, ip_space=space)
        else:
            backend = Ec2Backend(self.kernel, config.pool_id, config.credentials,
                                 config.region, config.boot_latency_s,
                                 config.boot_jitter_s, ip_space=space)
        return self.pool_manager.register_pool(config, backend)

    # -- provisioning ------------------------------------------------------------

    def provision(self, count: int) -> ProvisionResult:
        result = self.pool_manager.provision(count)
        self._adopt_tickets(result)
        return result

    def provision_into(self, pool_id: str, count: int) -> ProvisionResult:
        result = self.pool_manager.provision_into(pool_id, count)
        self._adopt_tickets(result)
        return result

    def _adopt_tickets(self, result: ProvisionResult) -> None:
        for ticket in result.tickets:
            if ticket.node_id is None:
                continue
            self.nodes[ticket.node_id] = NodeRecord(
                node_id=ticket.node_id, pool_id=ticket.pool_id,
                private_ip=ticket.private_ip, public_ip=ticket.public_ip,
                open_ports=frozenset({MANAGEMENT_PORT}),
                provisioned_at=self.kernel.now,
            )
            self.networks[ticket.node_id] = ticket.network_id

    def release(self, node_id: str) -> None:
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        rec = self.nodes[node_id]
        if rec.role is NodeRole.MASTER:
            raise RefusedMasterRelease(node_id)
        requeued = self.scheduler.on_worker_stopped(node_id)
        if requeued is not None:
            self.kernel.emit(events.TASK_REQUEUED,
                             {"reason": "released", "task": requeued})
        self._apply(node_id, LifecycleEvent.RELEASE_REQUESTED)
        self.pool_manager.release(node_id)
        if requeued is not None:
            self._dispatch()

    def inject_node_failure(self, at_s, pick: int) -> None:
        """Schedule a NodeFailed event; the pick selects among the workers
        alive at firing time (modulo), so tests can inject blind."""
        self.kernel.schedule(at_s, events.NODE_FAILED, {"pick": pick})

    # -- application lifecycle ------------------------------------------------------

    def submit(self, app: Application) -> str:
        app_id = self.scheduler.submit(app, self.kernel.now)
        self.kernel.emit(events.APP_SUBMITTED, {
            "app": app_id,
            "deadline_s": app.deadline_s if app.deadline_s is not None else "",
            "max_retries": app.max_retries,
            "tasks": len(app.tasks),
        })
        if self.dynamic:
            self.kernel.schedule(self.kernel.now, events.EVAL_PROVISIONING, {})
        self._dispatch()
        return app_id

    def workers_ready(self) -> int:
        return len(self.scheduler.ready)

    def alive_worker_nodes(self) -> list[str]:
        terminal = (VmState.TERMINATED, VmState.FAILED)
        return sorted(
            nid for nid, rec in self.nodes.items()
            if rec.role is NodeRole.WORKER and rec.vm_state not in terminal
        )

    def begin_cleanup(self) -> None:
        """Release every remaining worker; pending boots are released on arrival."""
        self.finishing = True
        for node_id in self.alive_worker_nodes():
            if self.nodes[node_id].vm_state is VmState.RUNNING:
                self.release(node_id)

    # -- event handlers ----------------------------------------------------------

    def _is_terminal(self, node_id: str) -> bool:
        rec = self.nodes.get(node_id)
        return rec is None or rec.vm_state in (VmState.TERMINATED, VmState.FAILED)

    def _on_vm_ready(self, ev) -> None:
        node_id = ev.payload["node"]
        if self._is_terminal(node_id):
            return  # boot completion raced a node failure
        self._apply(node_id, LifecycleEvent.VM_READY)
        self._update(node_id, ready_at=self.kernel.now)
        self.pool_manager.on_vm_ready(node_id)
        if self.finishing:
            self.release(node_id)
            return
        cfg = self.pool_config_of(node_id)
        try:
            self.deploy.install(node_id, self.repository, cfg.custom_script)
        except (RepoUnreachable, NoPublicIp) as exc:
            self.kernel.emit(events.INSTALL_FAILED,
                             {"node": node_id, "reason": type(exc).__name__})
            self.release(node_id)

    def _on_install_done(self, ev) -> None:
        node_id = ev.payload["node"]
        if self._is_terminal(node_id):
            return
        self._apply(node_id, LifecycleEvent.INSTALL_DONE)
        cfg = self.pool_config_of(node_id)
        self.deploy.finish_install(node_id, cfg.custom_script)
        mode = cfg.network_mode
        try:
            master_ep = advertise_endpoint(self.master_location(), mode, CONTAINER_PORT)
            self.deploy.configure(node_id, master_ep, mode)
        except NoPublicIp as exc:
            self.kernel.emit(events.INSTALL_FAILED,
                             {"node": node_id, "reason": type(exc).__name__})
            self.release(node_id)

    def _on_config_done(self, ev) -> None:
        node_id = ev.payload["node"]
        if self._is_terminal(node_id):
            return
        self._apply(node_id, LifecycleEvent.CONFIG_DONE)
        self.deploy.control(node_id, ControlAction.START)

    def _on_container_started(self, ev) -> None:
        node_id = ev.payload["node"]
        if self._is_terminal(node_id):
            return
        self._apply(node_id, LifecycleEvent.CONTAINER_STARTED)
        self._register_worker(node_id)

    def _register_worker(self, node_id: str) -> None:
        if self._master_reachable(node_id):
            self.scheduler.add_worker(node_id, self.kernel.now)
            self.kernel.emit(events.WORKER_READY, {"node": node_id})
            self._dispatch()
        else:
            self.kernel.emit(events.WORKER_UNREACHABLE, {"node": node_id})

    def _master_reachable(self, node_id: str) -> bool:
        """Both directions must hold before a worker joins the ready set."""
        mode = self.network_mode_of(node_id)
        loc = self.location(node_id)
        master = self.master_location()
        try:
            worker_ep = advertise_endpoint(loc, mode, CONTAINER_PORT)
            master_ep = advertise_endpoint(master, mode, CONTAINER_PORT)
        except NoPublicIp:
            return False
        return reachable(master, loc, worker_ep) and reachable(loc, master, master_ep)

    def _on_container_stopped(self, ev) -> None:
        node_id = ev.payload["node"]
        if self._is_terminal(node_id):
            return
        self._apply(node_id, LifecycleEvent.STOP_REQUESTED)
        requeued = self.scheduler.on_worker_stopped(node_id)
        if requeued is not None:
            self.kernel.emit(events.TASK_REQUEUED, {"reason": "stopped", "task": requeued})
            self._dispatch()

    def _on_container_restarted(self, ev) -> None:
        node_id = ev.payload["node"]
        if self._is_terminal(node_id):
            return
        rec = self._apply(node_id, LifecycleEvent.STOP_REQUESTED)
        requeued = self.scheduler.on_worker_stopped(node_id)
        if requeued is not None:
            self.kernel.emit(events.TASK_REQUEUED, {"reason": "restarted", "task": requeued})
        self.nodes[node_id] = transition(rec, LifecycleEvent.CONTAINER_STARTED)
        self._register_worker(node_id)

    def _dispatch(self) -> None:
        for a in self.scheduler.dispatch(self.kernel.now):
            self.kernel.emit(events.TASK_DISPATCHED,
                             {"app": a.app_id, "node": a.node_id, "task": a.task_id})
            self.kernel.schedule(a.complete_at, events.TASK_COMPLETE,
                                 {"app": a.app_id, "node": a.node_id, "task": a.task_id})

    def _on_task_complete(self, ev) -> None:
        task_id, node_id = ev.payload["task"], ev.payload["node"]
        verdict = self.scheduler.on_task_complete(task_id, node_id, self.kernel.now)
        if verdict != "completed":
            return
        app_id = ev.payload["app"]
        self.kernel.emit(events.TASK_DONE,
                         {"app": app_id, "node": node_id, "task": task_id})
        state = self.scheduler.app_state(app_id)
        if state.completed_at is not None:
            self.kernel.emit(events.APP_COMPLETED, {
                "app": app_id,
                "makespan_s": state.completed_at - state.submitted_at,
            })
        else:
            self._dispatch()

    def _on_node_failed(self, ev) -> None:
        node_id = self._resolve_victim(ev.payload)
        if node_id is None:
            return
        self._apply(node_id, LifecycleEvent.PROBE_FAILED)
        self._update(node_id, released_at=self.kernel.now)
        self.pool_manager.on_node_gone(node_id)
        self.kernel.emit(events.NODE_LOST, {
            "node": node_id, "pool": self.pool_manager.pool_of(node_id) or "",
        })
        verdict, task_id = self.scheduler.on_node_failed(node_id, self.kernel.now)
        if verdict == "requeued":
            self.kernel.emit(events.TASK_REQUEUED,
                             {"reason": "node_failed", "task": task_id})
            self._dispatch()
        elif verdict == "app_failed":
            app_id = self.scheduler.task_app[task_id]
            self.kernel.emit(events.APP_FAILED, {"app": app_id, "task": task_id})

    def _resolve_victim(self, payload) -> str | None:
        terminal = (VmState.TERMINATED, VmState.FAILED)
        if "node" in payload:
            node_id = payload["node"]
            rec = self.nodes.get(node_id)
            if rec is None or rec.vm_state in terminal or rec.role is NodeRole.MASTER:
                return None
            return node_id
        candidates = self.alive_worker_nodes()
        if not candidates:
            return None
        return candidates[int(payload["pick"]) % len(candidates)]

    def _on_terminated(self, ev) -> None:
        node_id = ev.payload["node"]
        if self._is_terminal(node_id):
            return  # teardown confirmation raced a node failure
        self._apply(node_id, LifecycleEvent.TERMINATED)
        self._update(node_id, released_at=self.kernel.now)
        self.pool_manager.on_node_gone(node_id)
        self.scheduler.remove_worker(node_id)

    def _on_eval(self, ev) -> None:
        if self.finishing or self.scheduler.all_done():
            return
        active = sum(len(p.active) for p in self.pool_manager.pool_states())
        pending = sum(len(p.pending) for p in self.pool_manager.pool_states())
        decision = self.scheduler.decision(
            self.kernel.now, active=active, pending=pending,
            capacity_remaining=self.pool_manager.total_remaining(),
        )
        if decision.note == "deadline_impossible" and not self._deadline_noted:
            self._deadline_noted = True
            self.kernel.emit(events.DEADLINE_IMPOSSIBLE, {})
        self.kernel.emit(events.EVAL_DECISION, {
            "action": decision.kind.value,
            "algorithm": self.scheduler.cfg.algorithm.value,
            "count": decision.count,
            "needed": decision.needed,
        })
        if decision.kind is DecisionKind.PROVISION:
            self.provision(decision.count)
        elif decision.kind is DecisionKind.RELEASE:
            for node_id in self.scheduler.idle_eligible(self.kernel.now)[:decision.count]:
                self.release(node_id)
        self.kernel.schedule_in(self.scheduler.cfg.eval_period_s,
                                events.EVAL_PROVISIONING, {})
