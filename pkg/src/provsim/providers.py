"""Deterministic simulated IaaS backends behind the key=value wire protocol.

The Azure-style backend keeps the storage / cloud-service / VM resource graph
with its preconditions (a VM needs both a service and a storage; members of
one cloud service share one public IP). The EC2-style backend is flat:
credentialed instances, one unique public IP each.

Each backend instance is one provider account owned by one pool; requests and
responses are WireDoc values, and VM boot/termination completions are kernel
events.
"""

from dataclasses import dataclass, field
from fractions import Fraction

from . import events, wire
from .kernel import SimKernel

AUTH_FAILED = "AUTH_FAILED"
BAD_ROUTE = "BAD_ROUTE"
NOT_FOUND = "NOT_FOUND"
IN_USE = "IN_USE"
STORAGE_EXISTS = "STORAGE_EXISTS"
SERVICE_EXISTS = "SERVICE_EXISTS"
STORAGE_NOT_FOUND = "STORAGE_NOT_FOUND"
SERVICE_NOT_FOUND = "SERVICE_NOT_FOUND"
MISSING_FIELD = "MISSING_FIELD"


class _WireBackend:
    """Dispatch plumbing shared by the provider backends."""

    #: body keys that must match the account configuration
    auth_keys: tuple[str, ...] = ()

    def __init__(self, kernel: SimKernel, tag: str, credentials: dict[str, str],
                 boot_latency_s, boot_jitter_s=0):
        from .kernel import to_seconds

        self.kernel = kernel
        self.tag = tag
        self.credentials = dict(credentials)
        self.boot_latency_s = to_seconds(boot_latency_s)
        self.boot_jitter_s = to_seconds(boot_jitter_s)

    def handle(self, doc: wire.WireDoc) -> wire.WireDoc:
        if not doc.is_request:
            return wire.error(wire.MALFORMED_DOC)
        for key in self.auth_keys:
            if doc.get(key) != self.credentials.get(key):
                return wire.error(AUTH_FAILED)
        route = self._route(doc.verb, doc.path.strip("/").split("/"))
        if route is None:
            return wire.error(BAD_ROUTE)
        handler, args = route
        return handler(doc, *args)

    def handle_text(self, text: str) -> str:
        """Byte-level entry point: decode, dispatch, encode."""
        try:
            doc = wire.decode(text)
        except wire.WireFormatError:
            return wire.encode(wire.error(wire.MALFORMED_DOC))
        return wire.encode(self.handle(doc))

    def _route(self, verb, segments):
        raise NotImplementedError

    def _boot_delay(self) -> Fraction:
        return self.boot_latency_s + self.kernel.rand_delay(0, self.boot_jitter_s)

    def _schedule_ready(self, vm_id: str) -> Fraction:
        ready_at = self.kernel.now + self._boot_delay()
        self.kernel.schedule(ready_at, events.VM_READY, {"node": vm_id, "pool": self.tag})
        return ready_at

    def _schedule_terminated(self, vm_id: str) -> None:
        self.kernel.schedule(self.kernel.now, events.TERMINATED,
                             {"node": vm_id, "pool": self.tag})


@dataclass
class _AzureService:
    subnet: int
    public_ip: str
    vm_ids: set[str] = field(default_factory=set)
    next_host: int = 2


@dataclass
class _AzureVm:
    service: str
    storage: str
    template: str
    private_ip: str
    public_ip: str
    ready_at: Fraction


class AzureBackend(_WireBackend):
    """Azure-style account: storages, cloud services, VMs.

    Routes:
      POST   /storages            {name}
      POST   /services            {name}
      POST   /services/<svc>/vms  {storage, template}
      GET    /vms/<id>
      DELETE /vms/<id> | /services/<name> | /storages/<name>
    """

    auth_keys = ("subscription_id", "certificate_token")
    provider_name = "azure_sim"

    def __init__(self, kernel, tag, credentials, region, boot_latency_s,
                 boot_jitter_s=0, ip_space: int = 0):
        super().__init__(kernel, tag, credentials, boot_latency_s, boot_jitter_s)
        self.region = region
        self.ip_space = ip_space
        self.storages: set[str] = set()
        self.services: dict[str, _AzureService] = {}
        self.vms: dict[str, _AzureVm] = {}
        self._vm_counter = 0

    def _route(self, verb, segments):
        match (verb, segments):
            case ("POST", ["storages"]):
                return self._create_storage, ()
            case ("POST", ["services"]):
                return self._create_service, ()
            case ("POST", ["services", svc, "vms"]):
                return self._create_vm, (svc,)
            case ("GET", ["vms", vm_id]):
                return self._get_vm, (vm_id,)
            case ("DELETE", ["vms", vm_id]):
                return self._delete_vm, (vm_id,)
            case ("DELETE", ["services", svc]):
                return self._delete_service, (svc,)
            case ("DELETE", ["storages", name]):
                return self._delete_storage, (name,)
        return None

    def network_id(self, service: str) -> str:
        return f"azure:{self.tag}:{service}"

    # -- storages / services -------------------------------------------------

    def _create_storage(self, doc):
        name = doc.get("name")
        if not name:
            return wire.error(MISSING_FIELD, field="name")
        if name in self.storages:
            return wire.error(STORAGE_EXISTS, name=name)
        self.storages.add(name)
        return wire.ok(name=name)

    def _create_service(self, doc):
        name = doc.get("name")
        if not name:
            return wire.error(MISSING_FIELD, field="name")
        if name in self.services:
            return wire.error(SERVICE_EXISTS, name=name)
        subnet = len(self.services)
        svc = _AzureService(subnet=subnet, public_ip=f"52.{self.ip_space}.{subnet}.10")
        self.services[name] = svc
        return wire.ok(name=name, public_ip=svc.public_ip, region=self.region)

    def _delete_storage(self, doc, name):
        if name not in self.storages:
            return wire.error(NOT_FOUND, name=name)
        if any(vm.storage == name for vm in self.vms.values()):
            return wire.error(IN_USE, name=name)
        self.storages.remove(name)
        return wire.ok(name=name)

    def _delete_service(self, doc, name):
        svc = self.services.get(name)
        if svc is None:
            return wire.error(NOT_FOUND, name=name)
        if svc.vm_ids:
            return wire.error(IN_USE, name=name)
        del self.services[name]
        return wire.ok(name=name)

    # -- virtual machines ------------------------------------------------------

    def _create_vm(self, doc, service_name):
        svc = self.services.get(service_name)
        if svc is None:
            return wire.error(SERVICE_NOT_FOUND, service=service_name)
        storage = doc.get("storage", "")
        if storage not in self.storages:
            return wire.error(STORAGE_NOT_FOUND, storage=storage)
        vm_id = f"{self.tag}-az{self._vm_counter:03d}"
        self._vm_counter += 1
        private_ip = f"10.{svc.subnet}.0.{svc.next_host}"
        svc.next_host += 1
        svc.vm_ids.add(vm_id)
        ready_at = self._schedule_ready(vm_id)
        self.vms[vm_id] = _AzureVm(
            service=service_name,
            storage=storage,
            template=doc.get("template", "default"),
            private_ip=private_ip,
            public_ip=svc.public_ip,
            ready_at=ready_at,
        )
        return wire.ok(
            network_id=self.network_id(service_name),
            private_ip=private_ip,
            public_ip=svc.public_ip,
            vm_id=vm_id,
        )

    def _vm_state(self, vm: _AzureVm) -> str:
        return "Booting" if self.kernel.now < vm.ready_at else "Running"

    def _get_vm(self, doc, vm_id):
        vm = self.vms.get(vm_id)
        if vm is None:
            return wire.error(NOT_FOUND, vm_id=vm_id)
        return wire.ok(
            private_ip=vm.private_ip,
            public_ip=vm.public_ip,
            service=vm.service,
            state=self._vm_state(vm),
            storage=vm.storage,
            template=vm.template,
            vm_id=vm_id,
        )

    def _delete_vm(self, doc, vm_id):
        vm = self.vms.pop(vm_id, None)
        if vm is None:
            return wire.error(NOT_FOUND, vm_id=vm_id)
        self.services[vm.service].vm_ids.discard(vm_id)
        self._schedule_terminated(vm_id)
        return wire.ok(vm_id=vm_id)

    def snapshot(self) -> dict:
        """Plain-data view of the resource graph, for integrity checking."""
        return {
            "storages": sorted(self.storages),
            "services": {
                name: {"public_ip": svc.public_ip, "vm_ids": sorted(svc.vm_ids)}
                for name, svc in sorted(self.services.items())
            },
            "vms": {
                vm_id: {
                    "service": vm.service,
                    "storage": vm.storage,
                    "private_ip": vm.private_ip,
                    "public_ip": vm.public_ip,
                }
                for vm_id, vm in sorted(self.vms.items())
            },
        }


@dataclass
class _Ec2Vm:
    template: str
    private_ip: str
    public_ip: str
    ready_at: Fraction


class Ec2Backend(_WireBackend):
    """EC2-style account: keyed instances, unique public IP per instance.

    Routes:
      POST   /instances        {template}
      GET    /instances/<id>
      DELETE /instances/<id>
    """

    auth_keys = ("access_key", "secret_key")
    provider_name = "ec2_sim"

    def __init__(self, kernel, tag, credentials, region, boot_latency_s,
                 boot_jitter_s=0, ip_space: int = 0):
        super().__init__(kernel, tag, credentials, boot_latency_s, boot_jitter_s)
        self.region = region
        self.ip_space = ip_space
        self.instances: dict[str, _Ec2Vm] = {}
        self._counter = 0

    def _route(self, verb, segments):
        match (verb, segments):
            case ("POST", ["instances"]):
                return self._run_instance, ()
            case ("GET", ["instances", vm_id]):
                return self._get_instance, (vm_id,)
            case ("DELETE", ["instances", vm_id]):
                return self._terminate, (vm_id,)
        return None

    def network_id(self) -> str:
        return f"ec2:{self.region}:{self.tag}"

    def _run_instance(self, doc):
        n = self._counter
        self._counter += 1
        vm_id = f"{self.tag}-i{n:03d}"
        private_ip = f"172.16.{n // 250}.{2 + n % 250}"
        public_ip = f"54.{self.ip_space}.{n // 250}.{2 + n % 250}"
        ready_at = self._schedule_ready(vm_id)
        self.instances[vm_id] = _Ec2Vm(
            template=doc.get("template", "default"),
            private_ip=private_ip,
            public_ip=public_ip,
            ready_at=ready_at,
        )
        return wire.ok(
            instance_id=vm_id,
            network_id=self.network_id(),
            private_ip=private_ip,
            public_ip=public_ip,
        )

    def _get_instance(self, doc, vm_id):
        vm = self.instances.get(vm_id)
        if vm is None:
            return wire.error(NOT_FOUND, instance_id=vm_id)
        state = "Booting" if self.kernel.now < vm.ready_at else "Running"
        return wire.ok(
            instance_id=vm_id,
            private_ip=vm.private_ip,
            public_ip=vm.public_ip,
            state=state,
            template=vm.template,
        )

    def _terminate(self, doc, vm_id):
        vm = self.instances.pop(vm_id, None)
        if vm is None:
            return wire.error(NOT_FOUND, instance_id=vm_id)
        self._schedule_terminated(vm_id)
        return wire.ok(instance_id=vm_id)
