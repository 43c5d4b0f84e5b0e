"""Deterministic discrete-event kernel: virtual clock, event queue, seeded RNG, trace.

Simulation time is kept as exact rationals (fractions.Fraction) so that runs are
bit-reproducible and makespans derived from decimal configuration values (e.g.
a task duration of 11.9125 s) come out exact instead of drifting through
iterated float addition.
"""

import hashlib
import heapq
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from fractions import Fraction

_MASK64 = (1 << 64) - 1

# Jitter draws are snapped to this grid so event times stay short decimals.
MICROSECOND = Fraction(1, 10**6)


class TimeTravel(Exception):
    """Raised when an event is scheduled before the current virtual time."""


class SplitMix64:
    """SplitMix64 generator (Steele/Lea/Vigna recurrence), 64-bit state.

    Chosen because the recurrence is trivial to reimplement exactly in any
    language, so golden sequences survive reimplementation.
    """

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_uint64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        if lo == hi:
            return lo
        return lo + (hi - lo) * self.random()

    def randrange(self, n: int) -> int:
        """Uniform-ish integer in [0, n). Fine for test workloads."""
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        return self.next_uint64() % n

    def choice(self, seq):
        return seq[self.randrange(len(seq))]


def to_seconds(value) -> Fraction:
    """Coerce a user-supplied duration/time into an exact Fraction.

    Floats are interpreted by their shortest decimal repr (11.9125 means the
    decimal 11.9125, not its binary approximation); use Fraction directly for
    binary-exact values.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a duration")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as seconds")


# Same coercion, readable name for non-time quantities (prices, thresholds).
to_fraction = to_seconds


def fmt_quantity(x: Fraction) -> str:
    """Render a rational as a minimal exact decimal ("953", "166.775").

    Falls back to the float repr for non-terminating decimals (only reachable
    for quantities that never feed golden files, e.g. utilization ratios).
    """
    n, d = x.numerator, x.denominator
    if d == 1:
        return str(n)
    e2 = e5 = 0
    dd = d
    while dd % 2 == 0:
        dd //= 2
        e2 += 1
    while dd % 5 == 0:
        dd //= 5
        e5 += 1
    if dd != 1:
        return repr(float(x))
    k = max(e2, e5)
    scaled = abs(n) * 10**k // d
    digits = str(scaled).rjust(k + 1, "0")
    int_part, frac_part = digits[:-k], digits[-k:].rstrip("0")
    sign = "-" if n < 0 else ""
    return sign + int_part + ("." + frac_part if frac_part else "")


def _render_value(v) -> str:
    if isinstance(v, Fraction):
        s = fmt_quantity(v)
    elif isinstance(v, bool):
        s = "true" if v else "false"
    elif isinstance(v, (int, str)):
        s = str(v)
    elif isinstance(v, float):
        s = repr(v)
    elif v is None:
        s = ""
    else:
        raise TypeError(f"unsupported payload value type: {type(v).__name__}")
    if any(c in s for c in "\t\n,="):
        raise ValueError(f"payload value {s!r} contains reserved characters")
    return s


@dataclass(frozen=True)
class SimEvent:
    """One timestamped kernel event; (time_s, seq) is the total order."""

    time_s: Fraction
    seq: int
    kind: str
    payload: Mapping[str, object] = field(default_factory=dict)

    def export_line(self) -> str:
        items = ",".join(
            f"{k}={_render_value(v)}" for k, v in sorted(self.payload.items())
        )
        return f"{fmt_quantity(self.time_s)}\t{self.seq}\t{self.kind}\t{items}"


class SimKernel:
    """Single-threaded virtual-time engine.

    Events fire in (time, seq) order; seq is the global insertion counter, so
    simultaneous events fire in scheduling order. Every processed or emitted
    event is appended to the trace, whose hash is a pure function of
    (config, seed) for a deterministic experiment.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = SplitMix64(seed)
        self.now = Fraction(0)
        self.trace: list[SimEvent] = []
        self._queue: list[tuple[Fraction, int, str, Mapping[str, object]]] = []
        self._seq = 0
        self._handlers: dict[str, list[Callable[[SimEvent], None]]] = {}

    # -- scheduling ---------------------------------------------------------

    def schedule(self, at_s, kind: str, payload: Mapping[str, object] | None = None) -> int:
        at = to_seconds(at_s)
        if at < self.now:
            raise TimeTravel(f"schedule at {at} before now {self.now}")
        seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (at, seq, kind, dict(payload or {})))
        return seq

    def schedule_in(self, delay_s, kind: str, payload: Mapping[str, object] | None = None) -> int:
        return self.schedule(self.now + to_seconds(delay_s), kind, payload)

    def emit(self, kind: str, payload: Mapping[str, object] | None = None) -> SimEvent:
        """Record an already-performed action in the trace at the current time."""
        ev = SimEvent(self.now, self._seq, kind, dict(payload or {}))
        self._seq += 1
        self.trace.append(ev)
        return ev

    def on(self, kind: str, handler: Callable[[SimEvent], None]) -> None:
        self._handlers.setdefault(kind, []).append(handler)

    # -- execution ----------------------------------------------------------

    def run_until(self, predicate: Callable[[], bool] | None = None, horizon_s=None) -> list[SimEvent]:
        """Process events in order until the predicate holds, the queue
        empties, or the horizon is reached; returns the full trace so far."""
        horizon = None if horizon_s is None else to_seconds(horizon_s)
        if predicate is not None and predicate():
            return self.trace
        while self._queue:
            at = self._queue[0][0]
            if horizon is not None and at > horizon:
                self.now = horizon
                return self.trace
            at, seq, kind, payload = heapq.heappop(self._queue)
            self.now = at
            ev = SimEvent(at, seq, kind, payload)
            self.trace.append(ev)
            for handler in self._handlers.get(kind, ()):
                handler(ev)
            if predicate is not None and predicate():
                return self.trace
        if horizon is not None and horizon > self.now:
            self.now = horizon
        return self.trace

    def queued_events(self) -> list[tuple[Fraction, int, str]]:
        """Snapshot of still-pending (time, seq, kind), for conservation checks."""
        return sorted((t, s, k) for t, s, k, _ in self._queue)

    # -- randomness ---------------------------------------------------------

    def rand_uniform(self, lo: float, hi: float) -> float:
        return self.rng.uniform(lo, hi)

    def rand_delay(self, lo, hi) -> Fraction:
        """Uniform delay in [lo, hi] snapped down to the microsecond grid."""
        lo_f, hi_f = to_seconds(lo), to_seconds(hi)
        if lo_f == hi_f:
            return lo_f
        u = Fraction(self.rng.random())
        span = hi_f - lo_f
        raw = lo_f + span * u
        return (raw // MICROSECOND) * MICROSECOND

    # -- trace export -------------------------------------------------------

    def export_trace(self) -> str:
        return "".join(ev.export_line() + "\n" for ev in self.trace)

    def trace_hash(self) -> str:
        return hashlib.sha256(self.export_trace().encode("utf-8")).hexdigest()


def parse_trace(text: str) -> list[SimEvent]:
    """Parse an exported trace back into events (payload values as strings)."""
    events = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ValueError(f"trace line {lineno}: expected 4 tab-separated fields")
        time_s, seq, kind, items = parts
        payload: dict[str, object] = {}
        if items:
            for item in items.split(","):
                k, _, v = item.partition("=")
                payload[k] = v
        events.append(SimEvent(Fraction(time_s), int(seq), kind, payload))
    return events
