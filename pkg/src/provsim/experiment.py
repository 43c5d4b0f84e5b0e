"""Experiment front-end: run one configuration to completion, or sweep a
worker plan into a CSV shaped like a total-execution-time table.

Sweep CSV columns are fixed: tasks,azure_workers,ec2_workers,total_workers,
makespan_s,cost with LF line endings; `run` output adds a trace_hash column.
"""

from dataclasses import dataclass, replace
from fractions import Fraction

from .config import ExperimentConfig, Mode, ValidationError
from .core import make_application
from .engine import CloudEngine
from .kernel import SimKernel, fmt_quantity
from .provisioning import ProviderKind
from .telemetry import Report, report

SWEEP_CSV_HEADER = "tasks,azure_workers,ec2_workers,total_workers,makespan_s,cost"
RUN_CSV_HEADER = SWEEP_CSV_HEADER + ",trace_hash"


class AppFailed(Exception):
    """Retries exhausted; the application did not complete."""


class NonTermination(Exception):
    """The run hit its horizon (or stalled) before completing."""


@dataclass
class RunResult:
    status: str                      # ok | app_failed
    tasks: int
    azure_workers: int
    ec2_workers: int
    makespan_s: Fraction | None
    cost: Fraction
    trace_hash: str
    report: Report
    kernel: SimKernel
    engine: CloudEngine

    @property
    def total_workers(self) -> int:
        return self.azure_workers + self.ec2_workers

    def csv_row(self, with_hash: bool = False) -> str:
        cells = [
            str(self.tasks), str(self.azure_workers), str(self.ec2_workers),
            str(self.total_workers),
            "" if self.makespan_s is None else fmt_quantity(self.makespan_s),
            fmt_quantity(self.cost),
        ]
        if with_hash:
            cells.append(self.trace_hash)
        return ",".join(cells)


def build_engine(config: ExperimentConfig, seed: int) -> CloudEngine:
    kernel = SimKernel(seed)
    engine = CloudEngine(
        kernel,
        scheduler_cfg=config.scheduler,
        repository=config.repository,
        dynamic=config.mode is Mode.DYNAMIC,
    )
    engine.attach_master(
        network_id=config.master.network_id,
        private_ip=config.master.private_ip,
        public_ip=config.master.public_ip,
    )
    for pool in config.pools:
        engine.add_pool(pool)
    return engine


def _build_application(config: ExperimentConfig, kernel: SimKernel):
    spec = config.application
    durations = [
        spec.task_duration_s + kernel.rand_delay(0, spec.task_jitter_s)
        for _ in range(spec.tasks)
    ]
    return make_application("app", durations, deadline_s=spec.deadline_s,
                            max_retries=spec.max_retries)


def run_experiment(config: ExperimentConfig, seed: int | None = None,
                   raise_on_failure: bool = True) -> RunResult:
    """Build the cloud, run the application to completion, aggregate results.

    Static mode provisions and installs the fixed worker counts before the
    application is submitted; dynamic mode submits first and lets the
    provisioning algorithm drive the worker set.
    """
    effective_seed = config.seed if seed is None else seed
    engine = build_engine(config, effective_seed)
    kernel = engine.kernel
    app = _build_application(config, kernel)

    if config.mode is Mode.STATIC:
        expected = config.total_static_workers()
        for pool in config.pools:
            if pool.static_workers:
                engine.provision_into(pool.pool_id, pool.static_workers)
        kernel.run_until(lambda: engine.workers_ready() >= expected,
                         horizon_s=config.horizon_s)
        if engine.workers_ready() < expected:
            raise NonTermination(
                f"only {engine.workers_ready()}/{expected} static workers became ready")

    engine.submit(app)
    kernel.run_until(engine.scheduler.all_done, horizon_s=config.horizon_s)
    if not engine.scheduler.all_done():
        raise NonTermination(f"horizon {config.horizon_s}s reached")

    failed = engine.scheduler.any_failed()
    engine.begin_cleanup()
    kernel.run_until(lambda: not engine.alive_worker_nodes())

    rep = report(kernel.trace)
    by_provider = {ProviderKind.AZURE_SIM.value: 0, ProviderKind.EC2_SIM.value: 0}
    for pool in rep.pools:
        by_provider[pool.provider] = by_provider.get(pool.provider, 0) + pool.nodes
    app_usage = rep.apps[0] if rep.apps else None
    result = RunResult(
        status="app_failed" if failed else "ok",
        tasks=len(app.tasks),
        azure_workers=by_provider[ProviderKind.AZURE_SIM.value],
        ec2_workers=by_provider[ProviderKind.EC2_SIM.value],
        makespan_s=None if failed or app_usage is None else app_usage.makespan_s(),
        cost=rep.total_cost(),
        trace_hash=kernel.trace_hash(),
        report=rep,
        kernel=kernel,
        engine=engine,
    )
    if failed and raise_on_failure:
        raise AppFailed(app.app_id)
    return result


def parse_plan(text: str) -> list[tuple[int, int]]:
    """Parse a worker plan like "1:0,2:0,3:0,3:1,3:2,3:3" into (azure, ec2) pairs."""
    plan = []
    for chunk in text.split(","):
        azure, sep, ec2 = chunk.strip().partition(":")
        if not sep:
            raise ValidationError("plan", f"expected azure:ec2, got {chunk!r}")
        try:
            plan.append((int(azure), int(ec2)))
        except ValueError:
            raise ValidationError("plan", f"bad counts in {chunk!r}") from None
    if not plan:
        raise ValidationError("plan", "empty plan")
    return plan


def _with_static_allocation(config: ExperimentConfig, azure: int, ec2: int) -> ExperimentConfig:
    """Clone the config with the plan entry's per-provider worker counts
    assigned to the highest-priority pool of each provider."""
    wanted = {ProviderKind.AZURE_SIM: azure, ProviderKind.EC2_SIM: ec2}
    pools = []
    assigned = {ProviderKind.AZURE_SIM: False, ProviderKind.EC2_SIM: False}
    for pool in sorted(config.pools, key=lambda p: (-p.priority, p.pool_id)):
        count = wanted[pool.provider] if not assigned[pool.provider] else 0
        assigned[pool.provider] = True
        if count > pool.capacity:
            raise ValidationError(
                f"pool.{pool.pool_id}", f"plan wants {count} workers, capacity {pool.capacity}")
        pools.append(replace(pool, static_workers=count))
    for kind, count in wanted.items():
        if count > 0 and not assigned[kind]:
            raise ValidationError("plan", f"no {kind.value} pool configured")
    pools.sort(key=lambda p: [c.pool_id for c in config.pools].index(p.pool_id))
    return replace(config, pools=pools)


def sweep(config: ExperimentConfig, plan: list[tuple[int, int]],
          seed: int | None = None) -> list[RunResult]:
    """One static run per plan entry, every run with the same seed."""
    if config.mode is not Mode.STATIC:
        raise ValidationError("experiment.mode", "sweep requires static mode")
    results = []
    for azure, ec2 in plan:
        entry_cfg = _with_static_allocation(config, azure, ec2)
        results.append(run_experiment(entry_cfg, seed=seed))
    return results


def results_to_csv(results: list[RunResult], with_hash: bool = False) -> str:
    header = RUN_CSV_HEADER if with_hash else SWEEP_CSV_HEADER
    lines = [header] + [r.csv_row(with_hash) for r in results]
    return "\n".join(lines) + "\n"
