"""provsim: deterministic simulator for multi-cloud resource provisioning and
bag-of-tasks execution.

The package models the middleware stack end to end: provider resource pools
with priority-based selection, Azure/EC2-style provisioning protocols over a
canonical wire format, remote container installation with public/private
addressing, FIFO bag-of-tasks scheduling with failed-task reallocation, and
fixed-queue / deadline-driven dynamic provisioning - all on a reproducible
discrete-event kernel.
"""

from .core import (Application, DaemonState, IllegalTransition, LifecycleEvent,
                   NodeRecord, NodeRole, TaskRecord, TaskState, VmState,
                   make_application, transition)
from .engine import CloudEngine
from .kernel import SimEvent, SimKernel, SplitMix64, TimeTravel
from .netmodel import (Endpoint, NetworkLocation, NetworkMode, NoPublicIp,
                       advertise_endpoint, reachable)
from .provisioning import (InstallMode, PoolConfig, PoolManager, ProviderKind,
                           select_pool)
from .scheduler import (Algorithm, Decision, DecisionKind, Scheduler,
                        SchedulerConfig, deadline_decision, fixed_queue_decision)
from .telemetry import BillingRecord, Report, bill, report

__version__ = "0.1.0"

__all__ = [
    "Application", "Algorithm", "BillingRecord", "CloudEngine", "DaemonState",
    "Decision", "DecisionKind", "Endpoint", "IllegalTransition", "InstallMode",
    "LifecycleEvent", "NetworkLocation", "NetworkMode", "NodeRecord", "NodeRole",
    "NoPublicIp", "PoolConfig", "PoolManager", "ProviderKind", "Report",
    "Scheduler", "SchedulerConfig", "SimEvent", "SimKernel", "SplitMix64",
    "TaskRecord", "TaskState", "TimeTravel", "VmState", "advertise_endpoint",
    "bill", "deadline_decision", "fixed_queue_decision", "make_application",
    "reachable", "report", "select_pool", "transition",
]
