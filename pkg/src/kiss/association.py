"""Association provisioning and lifecycle.

An association is the provisioned relationship between two endpoints:
identity, the seed/root secrets, one chain per direction, and the
anti-replay policy. Key distribution is realized as a pair of
out-of-band provisioning files; the generate/load split keeps the
carrier replaceable by a networked distributor later.

Provisioning file format (bit-exact): UTF-8, LF line endings, lines of
``key = value`` in the order assoc_id, role, mode, seed, root,
resync_window; hex lowercase; ``#`` starts a comment line.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field

from .errors import InvalidParameterError, OutOfWindowError, ProvisionError, ReplayError
from .idvv import IdvvState, Root, Seed, idvv_init

LABEL_C2S = b"c2s"
LABEL_S2C = b"s2c"

ASSOC_ID_LEN = 8
DEFAULT_RESYNC_WINDOW = 1024
MAX_RESYNC_WINDOW = 2**32 - 1


class Role(enum.Enum):
    INITIATOR = "initiator"
    RESPONDER = "responder"


class Mode(enum.Enum):
    AUTH_ONLY = "auth"
    AEAD = "aead"


_FIELD_ORDER = ("assoc_id", "role", "mode", "seed", "root", "resync_window")


@dataclass(frozen=True)
class ProvisionFile:
    """Parsed provisioning document for one endpoint."""

    assoc_id: bytes
    role: Role
    mode: Mode
    seed: bytes
    root: bytes
    resync_window: int = DEFAULT_RESYNC_WINDOW

    def to_text(self) -> str:
        return (
            f"assoc_id = {self.assoc_id.hex()}\n"
            f"role = {self.role.value}\n"
            f"mode = {self.mode.value}\n"
            f"seed = {self.seed.hex()}\n"
            f"root = {self.root.hex()}\n"
            f"resync_window = {self.resync_window}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "ProvisionFile":
        return _parse_provision(text)


@dataclass
class Association:
    """Live endpoint state for one provisioned pair.

    Single-owner mutation contract, same as the chains it holds: one
    connection, one logical thread of control per direction.
    """

    assoc_id: bytes
    role: Role
    seed: Seed
    root: Root
    send_chain: IdvvState
    recv_chain: IdvvState
    mode: Mode
    resync_window: int = DEFAULT_RESYNC_WINDOW
    highest_accepted_seq: int = field(default=0)


def generate_provision(
    rng=None,
    mode: Mode = Mode.AUTH_ONLY,
    resync_window: int = DEFAULT_RESYNC_WINDOW,
) -> tuple[ProvisionFile, ProvisionFile]:
    """Draw fresh association material and return (initiator, responder) files.

    ``rng`` is a ``bytes = rng(n)`` entropy source, ``os.urandom`` by default.
    """
    if not 1 <= resync_window <= MAX_RESYNC_WINDOW:
        raise InvalidParameterError(
            f"resync_window must be 1..{MAX_RESYNC_WINDOW}, got {resync_window}"
        )
    if not isinstance(mode, Mode):
        raise InvalidParameterError(f"unknown mode {mode!r}")
    if rng is None:
        rng = os.urandom
    try:
        assoc_id = bytes(rng(ASSOC_ID_LEN))
        seed = bytes(rng(32))
        root = bytes(rng(32))
    except Exception as exc:
        raise ProvisionError(f"entropy source failed: {exc}") from exc
    if len(assoc_id) != ASSOC_ID_LEN or len(seed) != 32 or len(root) != 32:
        raise ProvisionError("entropy source returned wrong length")
    if seed == root:
        # 2^-256 from a sane source; a constant source must not slip through
        raise ProvisionError("entropy source produced seed == root")
    return (
        ProvisionFile(assoc_id, Role.INITIATOR, mode, seed, root, resync_window),
        ProvisionFile(assoc_id, Role.RESPONDER, mode, seed, root, resync_window),
    )


def load_association(pf: ProvisionFile) -> Association:
    """Build live chains from a provisioning file.

    The initiator sends on "c2s" and receives on "s2c"; the responder is
    the mirror. Loading the same file twice yields bit-identical chains.
    """
    seed = Seed(pf.seed)
    root = Root(pf.root)
    if pf.role is Role.INITIATOR:
        send_label, recv_label = LABEL_C2S, LABEL_S2C
    else:
        send_label, recv_label = LABEL_S2C, LABEL_C2S
    return Association(
        assoc_id=pf.assoc_id,
        role=pf.role,
        seed=seed,
        root=root,
        send_chain=idvv_init(seed, root, send_label),
        recv_chain=idvv_init(seed, root, recv_label),
        mode=pf.mode,
        resync_window=pf.resync_window,
    )


def accept_seq(assoc: Association, seq: int) -> int:
    """Gate an incoming sequence number; return the gap to fast-forward.

    Does not commit: the caller advances ``highest_accepted_seq`` only
    after the record's tag verifies, so garbage cannot burn the window.
    """
    if seq <= assoc.highest_accepted_seq:
        raise ReplayError(
            f"seq {seq} at or below highest accepted {assoc.highest_accepted_seq}"
        )
    gap = seq - assoc.highest_accepted_seq
    if gap > assoc.resync_window:
        raise OutOfWindowError(f"gap {gap} exceeds window {assoc.resync_window}")
    return gap


def write_provision_file(pf: ProvisionFile, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(pf.to_text())


def read_provision_file(path) -> ProvisionFile:
    with open(path, "r", encoding="utf-8") as fh:
        return ProvisionFile.from_text(fh.read())


def _parse_provision(text: str) -> ProvisionFile:
    seen: dict[str, str] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ProvisionError(f"line {lineno}: expected 'key = value'", field=line)
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _FIELD_ORDER:
            raise ProvisionError(f"unknown field {key!r}", field=key)
        if key in seen:
            raise ProvisionError(f"duplicate field {key!r}", field=key)
        seen[key] = value

    for key in ("assoc_id", "role", "mode", "seed", "root"):
        if key not in seen:
            raise ProvisionError(f"missing field {key!r}", field=key)

    assoc_id = _parse_hex("assoc_id", seen["assoc_id"], ASSOC_ID_LEN)
    seed = _parse_hex("seed", seen["seed"], 32)
    root = _parse_hex("root", seen["root"], 32)

    try:
        role = Role(seen["role"])
    except ValueError:
        raise ProvisionError(f"unknown role {seen['role']!r}", field="role") from None
    try:
        mode = Mode(seen["mode"])
    except ValueError:
        raise ProvisionError(f"unknown mode {seen['mode']!r}", field="mode") from None

    window = DEFAULT_RESYNC_WINDOW
    if "resync_window" in seen:
        try:
            window = int(seen["resync_window"], 10)
        except ValueError:
            raise ProvisionError(
                f"resync_window is not a decimal integer: {seen['resync_window']!r}",
                field="resync_window",
            ) from None
        if not 1 <= window <= MAX_RESYNC_WINDOW:
            raise ProvisionError(
                f"resync_window out of range: {window}", field="resync_window"
            )

    return ProvisionFile(assoc_id, role, mode, seed, root, window)


def _parse_hex(name: str, value: str, want_len: int) -> bytes:
    try:
        data = bytes.fromhex(value)
    except ValueError:
        raise ProvisionError(f"field {name!r} is not valid hex", field=name) from None
    if len(data) != want_len:
        raise ProvisionError(
            f"field {name!r} must be {want_len} bytes ({2 * want_len} hex chars), "
            f"got {len(value)} chars",
            field=name,
        )
    return data
