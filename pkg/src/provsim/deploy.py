"""Remote installation and management of containers on provisioned nodes:
probe, install from a repository, configure against the master, start/stop/
restart, uninstall, plus declarative post-install scripts.

Install scripts are data, not code: a named delay plus config mutations over a
whitelisted key set. That reproduces scripted-install behaviour (extra setup
time, tweaked container settings) without embedding an interpreter.
"""

import enum
from dataclasses import dataclass
from fractions import Fraction

from . import events
from .core import DaemonState, VmState
from .kernel import to_seconds
from .netmodel import Endpoint, NetworkLocation, NetworkMode, advertise_endpoint, reachable

#: provider-side remote management port, open from VM boot
MANAGEMENT_PORT = 9000
#: container service port, opened during install
CONTAINER_PORT = 9090

ALLOWED_SCRIPT_KEYS = frozenset({"group", "home_dir", "log_level", "platform", "tag"})


class RepoKind(enum.Enum):
    SHARED_PATH = "shared_path"    # in-network file share
    REMOTE_FTP = "remote_ftp"      # reachable from anywhere with egress


class RepoUnreachable(Exception):
    pass


class AlreadyInstalled(Exception):
    pass


class NotInstalled(Exception):
    pass


class NotConfigured(Exception):
    pass


class StillRunning(Exception):
    pass


@dataclass(frozen=True)
class Repository:
    """Where container artifacts live; shared paths only work in-network."""

    kind: RepoKind
    address: str
    network_id: str | None = None
    artifacts: tuple[tuple[str, int], ...] = (("container", 48_000_000),)

    def reachable_from(self, loc: NetworkLocation) -> bool:
        if self.kind is RepoKind.SHARED_PATH:
            return loc.network_id == self.network_id
        # Simulated VMs always have outbound internet access.
        return True


@dataclass(frozen=True)
class InstallScript:
    """Custom post-install step: a delay plus container-config mutations."""

    name: str
    delay_s: Fraction = Fraction(0)
    mutations: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "delay_s", to_seconds(self.delay_s))
        if self.delay_s < 0:
            raise ValueError(f"script {self.name}: delay_s must be >= 0")
        bad = [k for k, _ in self.mutations if k not in ALLOWED_SCRIPT_KEYS]
        if bad:
            raise ValueError(
                f"script {self.name}: keys not in whitelist: {', '.join(sorted(bad))}"
            )


class ProbeResult(enum.Enum):
    NOT_INSTALLED = "NotInstalled"
    INSTALLED = "Installed"
    RUNNING = "Running"
    UNREACHABLE = "Unreachable"


class ControlAction(enum.Enum):
    START = "Start"
    STOP = "Stop"
    RESTART = "Restart"


_PROBE_BY_DAEMON = {
    DaemonState.NOT_INSTALLED: ProbeResult.NOT_INSTALLED,
    DaemonState.INSTALLING: ProbeResult.INSTALLED,
    DaemonState.CONFIGURED: ProbeResult.INSTALLED,
    DaemonState.STOPPED: ProbeResult.INSTALLED,
    DaemonState.CONTAINER_RUNNING: ProbeResult.RUNNING,
    DaemonState.UNREACHABLE: ProbeResult.UNREACHABLE,
}


class DeployService:
    """Deploy operations against a cloud context.

    The context supplies node records and network locations (see CloudEngine);
    all completions are kernel events so traces capture the install chain.
    """

    def __init__(self, kernel, cloud):
        self.kernel = kernel
        self.cloud = cloud
        self._installing: set[str] = set()
        self.container_config: dict[str, dict[str, str]] = {}

    # -- probing --------------------------------------------------------------

    def probe(self, node_id: str) -> ProbeResult:
        record = self.cloud.node(node_id)
        if record.vm_state is not VmState.RUNNING:
            return ProbeResult.UNREACHABLE
        loc = self.cloud.location(node_id)
        mode = self.cloud.network_mode_of(node_id)
        try:
            mgmt = advertise_endpoint(loc, mode, MANAGEMENT_PORT)
        except Exception:
            return ProbeResult.UNREACHABLE
        if not reachable(self.cloud.master_location(), loc, mgmt):
            return ProbeResult.UNREACHABLE
        return _PROBE_BY_DAEMON[record.daemon_state]

    # -- install / configure ---------------------------------------------------

    def install(self, node_id: str, repo: Repository,
                script: InstallScript | None = None) -> None:
        record = self.cloud.node(node_id)
        if record.daemon_state is not DaemonState.NOT_INSTALLED or node_id in self._installing:
            raise AlreadyInstalled(node_id)
        if self.probe(node_id) is ProbeResult.UNREACHABLE:
            raise RepoUnreachable(f"{node_id}: management endpoint unreachable")
        loc = self.cloud.location(node_id)
        if not repo.reachable_from(loc):
            raise RepoUnreachable(
                f"{node_id}: {repo.kind.value} repository {repo.address} "
                f"not reachable from network {loc.network_id}"
            )
        cfg = self.cloud.pool_config_of(node_id)
        latency = (cfg.install_latency_s if cfg.install_mode.value == "full"
                   else cfg.image_config_latency_s)
        if script is not None:
            latency += script.delay_s
        self._installing.add(node_id)
        self.container_config[node_id] = {"repo": repo.address}
        self.kernel.emit(events.INSTALL_STARTED, {
            "node": node_id, "repo": repo.address, "script": script.name if script else "",
        })
        self.kernel.schedule_in(latency, events.INSTALL_DONE, {"node": node_id})

    def finish_install(self, node_id: str, script: InstallScript | None) -> None:
        """Called by the InstallDone handler: apply script mutations and open
        the container port."""
        self._installing.discard(node_id)
        config = self.container_config.setdefault(node_id, {})
        if script is not None:
            config.update(script.mutations)
        self.cloud.open_port(node_id, CONTAINER_PORT)

    def configure(self, node_id: str, master_endpoint: Endpoint, mode: NetworkMode) -> None:
        record = self.cloud.node(node_id)
        if record.daemon_state is not DaemonState.INSTALLING:
            raise NotInstalled(node_id)
        own = advertise_endpoint(self.cloud.location(node_id), mode, CONTAINER_PORT)
        config = self.container_config.setdefault(node_id, {})
        config["master"] = str(master_endpoint)
        config["own_endpoint"] = str(own)
        config["network_mode"] = mode.value
        self.kernel.schedule(self.kernel.now, events.CONFIG_DONE, {"node": node_id})

    # -- control ----------------------------------------------------------------

    def control(self, node_id: str, action: ControlAction) -> None:
        record = self.cloud.node(node_id)
        daemon = record.daemon_state
        if action is ControlAction.START:
            if daemon not in (DaemonState.CONFIGURED, DaemonState.STOPPED):
                raise NotConfigured(node_id)
            self.kernel.schedule(self.kernel.now, events.CONTAINER_STARTED, {"node": node_id})
        elif action is ControlAction.STOP:
            if daemon is not DaemonState.CONTAINER_RUNNING:
                raise NotConfigured(node_id)
            self.kernel.schedule(self.kernel.now, events.CONTAINER_STOPPED, {"node": node_id})
        else:
            if daemon is not DaemonState.CONTAINER_RUNNING:
                raise NotConfigured(node_id)
            self.kernel.schedule(self.kernel.now, events.CONTAINER_RESTARTED, {"node": node_id})

    def uninstall(self, node_id: str) -> None:
        record = self.cloud.node(node_id)
        daemon = record.daemon_state
        if daemon in (DaemonState.CONTAINER_RUNNING, DaemonState.INSTALLING):
            raise StillRunning(node_id)
        if daemon is not DaemonState.STOPPED and daemon is not DaemonState.CONFIGURED:
            raise NotInstalled(node_id)
        # Uninstall is an administrative reset, not a lifecycle event; the
        # record drops straight back to NotInstalled (see docs/lifecycle.md).
        self.cloud.reset_daemon(node_id)
        self.container_config.pop(node_id, None)
        self.cloud.close_port(node_id, CONTAINER_PORT)
        self.kernel.emit(events.UNINSTALLED, {"node": node_id})
