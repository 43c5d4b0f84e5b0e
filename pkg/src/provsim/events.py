"""Kernel event kinds used across the orchestration modules.

Scheduled kinds fire later through the event queue; emitted kinds are trace
records written at the moment the action happens.
"""

# scheduled by provider backends
VM_READY = "VmReady"
TERMINATED = "Terminated"

# scheduled by deploy / scheduler / engine
INSTALL_DONE = "InstallDone"
CONFIG_DONE = "ConfigDone"
CONTAINER_STARTED = "ContainerStarted"
CONTAINER_STOPPED = "ContainerStopped"
CONTAINER_RESTARTED = "ContainerRestarted"
TASK_COMPLETE = "TaskComplete"
NODE_FAILED = "NodeFailed"
EVAL_PROVISIONING = "EvalProvisioning"

# emitted trace records
TASK_DONE = "TaskDone"
NODE_LOST = "NodeLost"
POOL_REGISTERED = "PoolRegistered"
MASTER_ATTACHED = "MasterAttached"
VM_REQUESTED = "VmRequested"
PROVIDER_REJECTED = "ProviderRejected"
INSTALL_STARTED = "InstallStarted"
INSTALL_FAILED = "InstallFailed"
WORKER_READY = "WorkerReady"
WORKER_UNREACHABLE = "WorkerUnreachable"
TASK_DISPATCHED = "TaskDispatched"
TASK_REQUEUED = "TaskRequeued"
RELEASE_REQUESTED = "ReleaseRequested"
UNINSTALLED = "Uninstalled"
EVAL_DECISION = "EvalDecision"
DEADLINE_IMPOSSIBLE = "DeadlineImpossible"
APP_SUBMITTED = "AppSubmitted"
APP_COMPLETED = "AppCompleted"
APP_FAILED = "AppFailed"
