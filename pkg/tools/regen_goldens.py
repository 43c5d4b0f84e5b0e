#!/usr/bin/env python3
"""Regenerate the golden files under tests/golden/.

Run from the repo root after an intentional format change, then review the
diff: every golden is a frozen contract (wire encoding, trace export, CSV
schema, lifecycle table, RNG stream), so unexplained diffs are bugs.
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from provsim import wire
from provsim.config import parse_config_text
from provsim.core import DaemonState, LifecycleEvent, VmState, successor
from provsim.experiment import results_to_csv, run_experiment, sweep
from provsim.telemetry import report

GOLDEN = pathlib.Path(__file__).resolve().parents[1] / "tests" / "golden"

STATIC_CONFIG = """
[experiment]
mode = static
seed = 7

[application]
tasks = 6
task_duration_s = 30.5

[pool.az]
provider = azure_sim
subscription_id = sub-1
certificate_token = cert-1
capacity = 2
priority = 5
price_per_hour = 0.09
network_mode = hybrid
boot_latency_s = 90
install_latency_s = 45
static_workers = 2

[pool.ec2]
provider = ec2_sim
access_key = AK
secret_key = SK
capacity = 2
priority = 3
price_per_hour = 0.085
network_mode = hybrid
boot_latency_s = 75
install_latency_s = 45
static_workers = 1
"""

SWEEP_CONFIG = """
[experiment]
mode = static
seed = 42

[application]
tasks = 80
task_duration_s = 11.9125

[pool.azure]
provider = azure_sim
subscription_id = sub-1
certificate_token = cert-1
capacity = 3
priority = 2
price_per_hour = 0.09
network_mode = hybrid
static_workers = 1

[pool.ec2]
provider = ec2_sim
access_key = AK
secret_key = SK
capacity = 3
priority = 1
price_per_hour = 0.09
network_mode = hybrid
"""


def splitmix_reference(seed: int, n: int) -> list[int]:
    # Independent transcription of the SplitMix64 recurrence.
    mask = (1 << 64) - 1
    state = seed & mask
    out = []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        out.append(z ^ (z >> 31))
    return out


def gen_splitmix() -> str:
    lines = ["# seed<TAB>first three uint64 draws of the SplitMix64 stream"]
    for seed in (0, 1, 42, 123456789):
        draws = splitmix_reference(seed, 3)
        lines.append(f"{seed}\t{draws[0]}\t{draws[1]}\t{draws[2]}")
    return "\n".join(lines) + "\n"


def gen_lifecycle_table() -> str:
    lines = ["# vm_state | daemon_state | event -> vm_state' | daemon_state'  (- = rejected)"]
    for vm in VmState:
        for daemon in DaemonState:
            for event in LifecycleEvent:
                nxt = successor(vm, daemon, event)
                result = "-" if nxt is None else f"{nxt[0].value}|{nxt[1].value}"
                lines.append(f"{vm.value}|{daemon.value}|{event.value} -> {result}")
    return "\n".join(lines) + "\n"


def gen_wire_docs() -> str:
    docs = [
        wire.request("POST", "/storages", name="st1",
                     subscription_id="sub-1", certificate_token="cert-1"),
        wire.request("POST", "/services/svc1/vms", storage="st1", template="small",
                     subscription_id="sub-1", certificate_token="cert-1"),
        wire.request("GET", "/vms/az000"),
        wire.request("DELETE", "/instances/i000", access_key="AK", secret_key="SK"),
        wire.ok(private_ip="10.0.0.2", public_ip="52.0.0.10", vm_id="az000"),
        wire.error("STORAGE_NOT_FOUND", storage="missing"),
    ]
    return "".join(wire.encode(d) for d in docs)


def main() -> None:
    GOLDEN.mkdir(parents=True, exist_ok=True)
    (GOLDEN / "splitmix64.txt").write_text(gen_splitmix(), encoding="utf-8")
    (GOLDEN / "lifecycle_table.txt").write_text(gen_lifecycle_table(), encoding="utf-8")
    (GOLDEN / "wire_docs.txt").write_text(gen_wire_docs(), encoding="utf-8")

    result = run_experiment(parse_config_text(STATIC_CONFIG))
    (GOLDEN / "static_small.trace").write_text(result.kernel.export_trace(),
                                               encoding="utf-8")
    (GOLDEN / "report_static.csv").write_text(report(result.kernel.trace).to_csv(),
                                              encoding="utf-8")

    plan = [(1, 0), (2, 0), (3, 0), (3, 1), (3, 2), (3, 3)]
    rows = sweep(parse_config_text(SWEEP_CONFIG), plan)
    (GOLDEN / "sweep_80.csv").write_text(results_to_csv(rows), encoding="utf-8")
    print(f"regenerated goldens under {GOLDEN}")


if __name__ == "__main__":
    main()
