"""Experiment configuration: INI-style sections with strictly validated keys.

Sections: [experiment], [master], [repository], [application], [scheduler],
and one [pool.<id>] per provider connection. Unknown sections or keys are
rejected; an empty value means "unset". `script.set` is the one repeatable
key (each occurrence adds one container-config mutation).
"""

import enum
from dataclasses import dataclass, field
from fractions import Fraction

from .deploy import InstallScript, RepoKind, Repository
from .netmodel import NetworkMode
from .provisioning import InstallMode, MalformedCredentials, PoolConfig, ProviderKind
from .scheduler import Algorithm, SchedulerConfig


class ParseError(Exception):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class ValidationError(Exception):
    def __init__(self, fieldname: str, message: str):
        self.fieldname = fieldname
        super().__init__(f"{fieldname}: {message}")


class Mode(enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


_EXPERIMENT_KEYS = {"mode", "seed", "horizon_s"}
_MASTER_KEYS = {"network_id", "private_ip", "public_ip"}
_REPO_KEYS = {"kind", "address", "network_id"}
_APP_KEYS = {"tasks", "task_duration_s", "task_jitter_s", "deadline_s", "max_retries"}
_SCHED_KEYS = {"algorithm", "fixed_queue_threshold", "est_task_time_s",
               "provision_overhead_s", "eval_period_s", "idle_release_s"}
_POOL_KEYS = {"provider", "capacity", "priority", "price_per_hour",
              "billing_quantum_s", "region", "vm_template", "network_mode",
              "boot_latency_s", "boot_jitter_s", "install_latency_s",
              "install_mode", "image_config_latency_s", "static_workers",
              "azure_service", "azure_storage", "subscription_id",
              "certificate_token", "access_key", "secret_key",
              "script.name", "script.delay_s", "script.set"}

_CREDENTIAL_KEYS = ("subscription_id", "certificate_token", "access_key", "secret_key")


@dataclass
class ApplicationSpec:
    tasks: int = 0
    task_duration_s: Fraction = Fraction(10)
    task_jitter_s: Fraction = Fraction(0)
    deadline_s: Fraction | None = None
    max_retries: int = 0


@dataclass
class MasterSpec:
    network_id: str = "master-net"
    private_ip: str = "10.255.0.1"
    public_ip: str | None = "40.0.0.1"


@dataclass
class ExperimentConfig:
    mode: Mode
    seed: int = 0
    horizon_s: Fraction = Fraction(10**9)
    master: MasterSpec = field(default_factory=MasterSpec)
    repository: Repository = field(
        default_factory=lambda: Repository(RepoKind.REMOTE_FTP, "ftp://repo/containers"))
    application: ApplicationSpec = field(default_factory=ApplicationSpec)
    scheduler: SchedulerConfig | None = None
    pools: list[PoolConfig] = field(default_factory=list)

    def total_static_workers(self) -> int:
        return sum(p.static_workers for p in self.pools)


def _parse_sections(text: str):
    """Raw pass: section order, (lineno, key, value) triples, duplicate checks."""
    sections: dict[str, list[tuple[int, str, str]]] = {}
    order: list[str] = []
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(lineno, f"malformed section header {line!r}")
            current = line[1:-1].strip()
            if not current:
                raise ParseError(lineno, "empty section name")
            if current in sections:
                raise ParseError(lineno, f"duplicate section [{current}]")
            sections[current] = []
            order.append(current)
            continue
        if current is None:
            raise ParseError(lineno, "key outside any section")
        key, sep, value = line.partition("=")
        if not sep:
            raise ParseError(lineno, f"expected 'key = value', got {line!r}")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ParseError(lineno, "empty key")
        if key != "script.set" and any(k == key for _, k, _ in sections[current]):
            raise ParseError(lineno, f"duplicate key {key!r} in [{current}]")
        sections[current].append((lineno, key, value))
    return sections, order


class _Section:
    """Typed access to one section with unknown-key rejection."""

    def __init__(self, name: str, entries, allowed: set[str]):
        self.name = name
        self.entries = entries
        for lineno, key, _ in entries:
            if key not in allowed:
                raise ParseError(lineno, f"unknown key {key!r} in [{name}]")

    def get(self, key: str, default: str | None = None) -> str | None:
        for _, k, v in self.entries:
            if k == key and v != "":
                return v
        return default

    def get_all(self, key: str) -> list[str]:
        return [v for _, k, v in self.entries if k == key and v != ""]

    def has(self, key: str) -> bool:
        return self.get(key) is not None

    def _convert(self, key: str, caster, default):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return caster(raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"{self.name}.{key}", str(exc)) from None

    def get_int(self, key: str, default: int | None = None) -> int | None:
        return self._convert(key, int, default)

    def get_fraction(self, key: str, default=None):
        return self._convert(key, Fraction, default)

    def get_enum(self, key: str, enum_cls, default=None):
        raw = self.get(key)
        if raw is None:
            return default
        try:
            return enum_cls(raw)
        except ValueError:
            choices = ", ".join(e.value for e in enum_cls)
            raise ValidationError(f"{self.name}.{key}",
                                  f"expected one of: {choices}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    sections, order = _parse_sections(text)

    known = {"experiment", "master", "repository", "application", "scheduler"}
    for name in order:
        if name not in known and not name.startswith("pool."):
            raise ValidationError(name, "unknown section")

    def section(name: str, allowed: set[str]) -> _Section:
        return _Section(name, sections.get(name, []), allowed)

    exp = section("experiment", _EXPERIMENT_KEYS)
    mode = exp.get_enum("mode", Mode)
    if mode is None:
        raise ValidationError("experiment.mode", "required (static or dynamic)")
    cfg = ExperimentConfig(
        mode=mode,
        seed=exp.get_int("seed", 0),
        horizon_s=exp.get_fraction("horizon_s", Fraction(10**9)),
    )

    master = section("master", _MASTER_KEYS)
    cfg.master = MasterSpec(
        network_id=master.get("network_id", "master-net"),
        private_ip=master.get("private_ip", "10.255.0.1"),
        public_ip=master.get("public_ip", "40.0.0.1"),
    )

    repo = section("repository", _REPO_KEYS)
    kind = repo.get_enum("kind", RepoKind, RepoKind.REMOTE_FTP)
    repo_network = repo.get("network_id")
    if kind is RepoKind.SHARED_PATH and repo_network is None:
        raise ValidationError("repository.network_id", "required for shared_path")
    cfg.repository = Repository(
        kind=kind,
        address=repo.get("address", "ftp://repo/containers"),
        network_id=repo_network,
    )

    app = section("application", _APP_KEYS)
    cfg.application = ApplicationSpec(
        tasks=app.get_int("tasks", 0),
        task_duration_s=app.get_fraction("task_duration_s", Fraction(10)),
        task_jitter_s=app.get_fraction("task_jitter_s", Fraction(0)),
        deadline_s=app.get_fraction("deadline_s"),
        max_retries=app.get_int("max_retries", 0),
    )
    if cfg.application.tasks < 0:
        raise ValidationError("application.tasks", "must be >= 0")
    if cfg.application.task_duration_s <= 0:
        raise ValidationError("application.task_duration_s", "must be > 0")
    if cfg.application.max_retries < 0:
        raise ValidationError("application.max_retries", "must be >= 0")

    sched = section("scheduler", _SCHED_KEYS)
    algorithm = sched.get_enum("algorithm", Algorithm)
    if algorithm is not None:
        try:
            cfg.scheduler = SchedulerConfig(
                algorithm=algorithm,
                fixed_queue_threshold=sched.get_int("fixed_queue_threshold", 1),
                est_task_time_s=sched.get_fraction("est_task_time_s", Fraction(10)),
                provision_overhead_s=sched.get_fraction("provision_overhead_s", Fraction(0)),
                eval_period_s=sched.get_fraction("eval_period_s", Fraction(10)),
                idle_release_s=sched.get_fraction("idle_release_s", Fraction(0)),
            )
        except ValueError as exc:
            raise ValidationError("scheduler", str(exc)) from None

    for name in order:
        if name.startswith("pool."):
            cfg.pools.append(_parse_pool(name, sections[name]))
    pool_ids = [p.pool_id for p in cfg.pools]
    if len(pool_ids) != len(set(pool_ids)):
        raise ValidationError("pool", "duplicate pool ids")

    _validate_mode(cfg)
    return cfg


def _parse_pool(section_name: str, entries) -> PoolConfig:
    sec = _Section(section_name, entries, _POOL_KEYS)
    pool_id = section_name[len("pool."):]
    if not pool_id:
        raise ValidationError(section_name, "empty pool id")
    provider = sec.get_enum("provider", ProviderKind)
    if provider is None:
        raise ValidationError(f"{section_name}.provider", "required")
    credentials = {k: sec.get(k) for k in _CREDENTIAL_KEYS if sec.has(k)}

    script = None
    if sec.has("script.name") or sec.has("script.delay_s") or sec.get_all("script.set"):
        mutations = []
        for raw in sec.get_all("script.set"):
            key, sep, value = raw.partition("=")
            if not sep:
                raise ValidationError(f"{section_name}.script.set",
                                      f"expected key=value, got {raw!r}")
            mutations.append((key.strip(), value.strip()))
        try:
            script = InstallScript(
                name=sec.get("script.name", "script"),
                delay_s=sec.get_fraction("script.delay_s", Fraction(0)),
                mutations=tuple(mutations),
            )
        except ValueError as exc:
            raise ValidationError(f"{section_name}.script", str(exc)) from None

    try:
        return PoolConfig(
            pool_id=pool_id,
            provider=provider,
            credentials=credentials,
            capacity=sec.get_int("capacity", 0),
            priority=sec.get_int("priority", 0),
            price_per_hour=sec.get_fraction("price_per_hour", Fraction(0)),
            billing_quantum_s=sec.get_fraction("billing_quantum_s", Fraction(3600)),
            region=sec.get("region", "default"),
            vm_template=sec.get("vm_template", "small"),
            network_mode=sec.get_enum("network_mode", NetworkMode, NetworkMode.PRIVATE),
            boot_latency_s=sec.get_fraction("boot_latency_s", Fraction(0)),
            boot_jitter_s=sec.get_fraction("boot_jitter_s", Fraction(0)),
            install_latency_s=sec.get_fraction("install_latency_s", Fraction(0)),
            install_mode=sec.get_enum("install_mode", InstallMode, InstallMode.FULL),
            image_config_latency_s=sec.get_fraction("image_config_latency_s", Fraction(0)),
            custom_script=script,
            azure_service=sec.get("azure_service"),
            azure_storage=sec.get("azure_storage"),
            static_workers=sec.get_int("static_workers", 0),
        )
    except MalformedCredentials as exc:
        raise ValidationError(f"{section_name}.credentials", str(exc)) from None
    except ValueError as exc:
        raise ValidationError(section_name, str(exc)) from None


def _validate_mode(cfg: ExperimentConfig) -> None:
    if not cfg.pools:
        raise ValidationError("pool", "at least one [pool.<id>] section required")
    if cfg.mode is Mode.STATIC:
        if cfg.total_static_workers() < 1:
            raise ValidationError(
                "static_workers",
                "static mode needs static_workers >= 1 in at least one pool")
        for pool in cfg.pools:
            if pool.static_workers > pool.capacity:
                raise ValidationError(
                    f"pool.{pool.pool_id}.static_workers", "exceeds capacity")
    else:
        if cfg.scheduler is None:
            raise ValidationError("scheduler.algorithm",
                                  "dynamic mode needs a scheduler algorithm")
        if (cfg.scheduler.algorithm is Algorithm.DEADLINE_PRIORITY
                and cfg.application.deadline_s is None):
            raise ValidationError("application.deadline_s",
                                  "required by deadline_priority")


def parse_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())
