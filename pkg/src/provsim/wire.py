"""Canonical key=value wire documents for the simulated provider protocol.

One strict encoding for requests and responses: a header line, then body lines
as "key=value" sorted ascending by key, then a terminating blank line. Decode
accepts exactly the canonical form (encode(decode(text)) == text byte for
byte), which is what makes cross-implementation golden tests possible.
"""

from dataclasses import dataclass, field

VERBS = ("GET", "POST", "DELETE")
STATUS_OK = "OK"
STATUS_ERROR = "ERROR"

# Error code for documents rejected by the codec itself.
MALFORMED_DOC = "MALFORMED_DOC"

_RESERVED_KEYS = ("status", "code")


class WireFormatError(Exception):
    """Document violates the canonical encoding; maps to MALFORMED_DOC."""


def _check_key(key: str) -> None:
    if not key or any(c in key for c in "=\n\t ") or not key.isascii():
        raise WireFormatError(f"bad body key {key!r}")
    if key in _RESERVED_KEYS:
        raise WireFormatError(f"reserved key {key!r} in body")


def _check_value(value: str) -> None:
    if "\n" in value:
        raise WireFormatError("newline in body value")


@dataclass(frozen=True)
class WireDoc:
    """A request (verb+path) or response (status [+code]) with a sorted body."""

    verb: str | None = None
    path: str | None = None
    status: str | None = None
    code: str | None = None
    body: dict[str, str] = field(default_factory=dict)

    @property
    def is_request(self) -> bool:
        return self.verb is not None

    def __getitem__(self, key: str) -> str:
        return self.body[key]

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.body.get(key, default)


def request(verb: str, path: str, **body: str) -> WireDoc:
    return WireDoc(verb=verb, path=path, body={k: str(v) for k, v in body.items()})


def ok(**body: str) -> WireDoc:
    return WireDoc(status=STATUS_OK, body={k: str(v) for k, v in body.items()})


def error(code: str, **body: str) -> WireDoc:
    return WireDoc(status=STATUS_ERROR, code=code, body={k: str(v) for k, v in body.items()})


def encode(doc: WireDoc) -> str:
    """Encode to the canonical text form; rejects invalid documents."""
    lines = []
    if doc.is_request:
        if doc.verb not in VERBS:
            raise WireFormatError(f"bad verb {doc.verb!r}")
        if doc.status is not None or doc.code is not None:
            raise WireFormatError("request carries response fields")
        if not doc.path or not doc.path.startswith("/") or any(c in doc.path for c in " \n\t"):
            raise WireFormatError(f"bad path {doc.path!r}")
        lines.append(f"{doc.verb} {doc.path}")
    else:
        if doc.status not in (STATUS_OK, STATUS_ERROR):
            raise WireFormatError(f"bad status {doc.status!r}")
        if doc.path is not None:
            raise WireFormatError("response carries a path")
        if (doc.status == STATUS_ERROR) != (doc.code is not None):
            raise WireFormatError("code present iff status is ERROR")
        lines.append(f"status={doc.status}")
        if doc.code is not None:
            if not doc.code or not doc.code.replace("_", "").isalnum():
                raise WireFormatError(f"bad code {doc.code!r}")
            lines.append(f"code={doc.code}")
    for key in sorted(doc.body):
        _check_key(key)
        value = doc.body[key]
        _check_value(value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n\n"


def decode(text: str) -> WireDoc:
    """Parse canonical text; anything non-canonical raises WireFormatError."""
    if not text.endswith("\n\n"):
        raise WireFormatError("missing terminating blank line")
    payload = text[:-2]
    if "\n\n" in payload:
        raise WireFormatError("embedded blank line")
    lines = payload.split("\n")
    head, rest = lines[0], lines[1:]

    verb = path = status = code = None
    if head.startswith("status="):
        status = head[len("status="):]
        if status not in (STATUS_OK, STATUS_ERROR):
            raise WireFormatError(f"bad status {status!r}")
        if rest and rest[0].startswith("code="):
            code = rest[0][len("code="):]
            rest = rest[1:]
        if (status == STATUS_ERROR) != (code is not None):
            raise WireFormatError("code present iff status is ERROR")
    else:
        verb, sep, path = head.partition(" ")
        if verb not in VERBS or not sep or not path.startswith("/"):
            raise WireFormatError(f"bad request line {head!r}")

    body: dict[str, str] = {}
    prev_key: str | None = None
    for line in rest:
        key, sep, value = line.partition("=")
        if not sep:
            raise WireFormatError(f"body line without '=': {line!r}")
        _check_key(key)
        _check_value(value)
        if prev_key is not None and key <= prev_key:
            raise WireFormatError(f"body keys not strictly ascending at {key!r}")
        prev_key = key
        body[key] = value

    doc = WireDoc(verb=verb, path=path, status=status, code=code, body=body)
    if encode(doc) != text:
        raise WireFormatError("document is not in canonical form")
    return doc
