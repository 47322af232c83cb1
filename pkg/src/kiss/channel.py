"""Authenticated record layer over per-record chain keys.

Every record, in either mode, is protected by keys derived from a fresh
chain value: the sender steps its send chain once per record and the
sequence number in the header tells the receiver how far to fast-forward
its receive chain before verifying. No key ever covers two records.

Wire layout: ``header(25) || payload || tag``. Header fields, big
endian: magic ``KI``, version, msg_type, mode, assoc_id(8), seq(8),
payload_len(4). In auth-only mode the tag is a 32-byte HMAC-SHA-256
over header and payload; in AEAD mode the payload field carries the
AES-256-GCM ciphertext and the tag field its 16-byte GCM tag, with the
header as associated data.

Receive-side rule: nothing is committed until the tag verifies. The
fast-forward happens on a scratch clone of the chain, so a flood of
garbage cannot desynchronize the endpoint or burn window state.
"""

from __future__ import annotations

import enum
import hmac
import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .association import Association, Mode, Role, accept_seq
from .errors import (
    AssociationError,
    AuthenticationError,
    ChannelAlert,
    ChannelStateError,
    FrameError,
    HandshakeError,
    InvalidParameterError,
    KissError,
    TransportError,
)
from .idvv import (
    KEY_LABEL_ENC,
    KEY_LABEL_MAC,
    KEY_LABEL_NONCE,
    IdvvValue,
    derive_key,
    idvv_fast_forward,
    idvv_next,
)

MAGIC = b"KI"
VERSION = 0x01
HEADER_LEN = 25
MAX_PAYLOAD = 2**20

_HEADER = struct.Struct(">2sBBB8sQI")
assert _HEADER.size == HEADER_LEN

TAG_LEN = {Mode.AUTH_ONLY: 32, Mode.AEAD: 16}
_MODE_WIRE = {Mode.AUTH_ONLY: 0x01, Mode.AEAD: 0x02}
_WIRE_MODE = {v: k for k, v in _MODE_WIRE.items()}

HELLO_NONCE_LEN = 16

# Test hook: called as hook(op, seq, label, key) for every derived record
# key. Left at None in production; never part of the public API.
_key_trace_hook = None


class MsgType(enum.IntEnum):
    HELLO = 0x01
    HELLO_ACK = 0x02
    DATA = 0x03
    CLOSE = 0x04
    ALERT = 0x05


class ChannelState(enum.Enum):
    NEW = "new"
    HANDSHAKING = "handshaking"
    ESTABLISHED = "established"
    CLOSED = "closed"


@dataclass(frozen=True)
class Record:
    msg_type: MsgType
    mode: Mode
    assoc_id: bytes
    seq: int
    payload: bytes
    tag: bytes

    def header(self) -> bytes:
        return _HEADER.pack(
            MAGIC,
            VERSION,
            int(self.msg_type),
            _MODE_WIRE[self.mode],
            self.assoc_id,
            self.seq,
            len(self.payload),
        )


def encode_record(record: Record) -> bytes:
    if len(record.payload) > MAX_PAYLOAD:
        raise FrameError(
            f"payload {len(record.payload)} exceeds cap {MAX_PAYLOAD}",
            field="payload_len",
        )
    if len(record.tag) != TAG_LEN[record.mode]:
        raise FrameError(
            f"tag must be {TAG_LEN[record.mode]} bytes in {record.mode.value} mode",
            field="tag",
        )
    return record.header() + record.payload + record.tag


def decode_header(buf: bytes) -> tuple[MsgType, Mode, bytes, int, int]:
    """Parse and validate the fixed 25-byte header."""
    if len(buf) < HEADER_LEN:
        raise FrameError(f"header truncated: {len(buf)} < {HEADER_LEN}")
    magic, version, mt_raw, mode_raw, assoc_id, seq, payload_len = _HEADER.unpack_from(
        buf
    )
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}", field="magic")
    if version != VERSION:
        raise FrameError(f"unsupported version {version:#04x}", field="version")
    try:
        msg_type = MsgType(mt_raw)
    except ValueError:
        raise FrameError(f"unknown msg_type {mt_raw:#04x}", field="msg_type") from None
    mode = _WIRE_MODE.get(mode_raw)
    if mode is None:
        raise FrameError(f"unknown mode {mode_raw:#04x}", field="mode")
    if payload_len > MAX_PAYLOAD:
        raise FrameError(
            f"payload_len {payload_len} exceeds cap {MAX_PAYLOAD}", field="payload_len"
        )
    return msg_type, mode, assoc_id, seq, payload_len


def decode_record(buf: bytes) -> Record:
    msg_type, mode, assoc_id, seq, payload_len = decode_header(buf)
    want = HEADER_LEN + payload_len + TAG_LEN[mode]
    if len(buf) != want:
        raise FrameError(
            f"record length {len(buf)} does not match header (want {want})",
            field="payload_len",
        )
    payload = buf[HEADER_LEN : HEADER_LEN + payload_len]
    tag = buf[HEADER_LEN + payload_len :]
    return Record(msg_type, mode, assoc_id, seq, payload, tag)


def _record_keys(value: IdvvValue, mode: Mode, op: str):
    """Derive this record's key material from one chain value."""
    k_mac = k_enc = nonce = None
    if mode is Mode.AUTH_ONLY:
        k_mac = derive_key(value, KEY_LABEL_MAC, 32)
    else:
        k_enc = derive_key(value, KEY_LABEL_ENC, 32)
        nonce = derive_key(value, KEY_LABEL_NONCE, 12)
    if _key_trace_hook is not None:
        if k_mac is not None:
            _key_trace_hook(op, value.counter, KEY_LABEL_MAC, k_mac)
        if k_enc is not None:
            _key_trace_hook(op, value.counter, KEY_LABEL_ENC, k_enc)
    return k_mac, k_enc, nonce


def seal(assoc: Association, msg_type: MsgType, payload: bytes) -> Record:
    """Protect one outgoing record, advancing the send chain by one step.

    In AEAD mode the returned record's payload field is the ciphertext.
    """
    payload = bytes(payload)
    if len(payload) > MAX_PAYLOAD:
        raise InvalidParameterError(
            f"payload {len(payload)} exceeds cap {MAX_PAYLOAD}"
        )
    value = idvv_next(assoc.send_chain)
    try:
        k_mac, k_enc, nonce = _record_keys(value, assoc.mode, "seal")
        # Ciphertext length equals plaintext length in GCM, so the header
        # (which doubles as the AAD) can be built before protecting.
        stub = Record(msg_type, assoc.mode, assoc.assoc_id, value.counter, payload, b"")
        header = stub.header()
        if assoc.mode is Mode.AUTH_ONLY:
            tag = hmac.digest(k_mac, header + payload, "sha256")
            return Record(
                msg_type, assoc.mode, assoc.assoc_id, value.counter, payload, tag
            )
        ct_and_tag = AESGCM(k_enc).encrypt(nonce, payload, header)
        return Record(
            msg_type,
            assoc.mode,
            assoc.assoc_id,
            value.counter,
            ct_and_tag[:-16],
            ct_and_tag[-16:],
        )
    finally:
        value.wipe()


def open_record(assoc: Association, wire: bytes) -> tuple[MsgType, bytes]:
    """Verify and decode one incoming record; commit state only on success."""
    record = decode_record(wire)
    if record.assoc_id != assoc.assoc_id:
        raise AssociationError("record addressed to a different association")
    if record.mode is not assoc.mode:
        raise FrameError(
            f"record mode {record.mode.value} does not match association "
            f"{assoc.mode.value}",
            field="mode",
        )
    accept_seq(assoc, record.seq)

    scratch = assoc.recv_chain.clone()
    value = idvv_fast_forward(scratch, record.seq, assoc.resync_window)
    try:
        k_mac, k_enc, nonce = _record_keys(value, assoc.mode, "open")
        header = wire[:HEADER_LEN]
        if assoc.mode is Mode.AUTH_ONLY:
            want = hmac.digest(k_mac, header + record.payload, "sha256")
            if not hmac.compare_digest(want, record.tag):
                raise AuthenticationError("record tag verification failed")
            plaintext = record.payload
        else:
            try:
                plaintext = AESGCM(k_enc).decrypt(
                    nonce, record.payload + record.tag, header
                )
            except InvalidTag:
                raise AuthenticationError("record tag verification failed") from None
    finally:
        value.wipe()

    assoc.recv_chain = scratch
    assoc.highest_accepted_seq = record.seq
    return record.msg_type, plaintext


def read_record(read) -> bytes:
    """Pull exactly one framed record from ``read(n) -> bytes``.

    Returns the raw record bytes, or b"" on a clean EOF at a record
    boundary. EOF anywhere else raises TransportError.
    """
    header = _read_exact(read, HEADER_LEN, allow_eof=True)
    if not header:
        return b""
    _, mode, _, _, payload_len = decode_header(header)
    rest = _read_exact(read, payload_len + TAG_LEN[mode])
    return header + rest


def _read_exact(read, n: int, allow_eof: bool = False) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = read(n - got)
        if not chunk:
            if allow_eof and got == 0:
                return b""
            raise TransportError(f"connection closed mid-record ({got}/{n} bytes)")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


class ChannelEndpoint:
    """One side of an established channel over a stream transport.

    ``transport`` needs ``sendall(data)`` and ``recv(n)``; a connected
    TCP socket fits. The endpoint owns the association state but not
    the transport lifetime.
    """

    def __init__(self, assoc: Association, transport, rng=os.urandom):
        self.assoc = assoc
        self.transport = transport
        self.state = ChannelState.NEW
        self._rng = rng

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if self.state is ChannelState.ESTABLISHED:
            try:
                self.close()
            except (KissError, OSError):
                pass
        return False

    # -- handshake ---------------------------------------------------

    def handshake(self) -> None:
        """Run the two-record liveness handshake for this endpoint's role."""
        if self.state is not ChannelState.NEW:
            raise ChannelStateError(f"handshake in state {self.state.value}")
        self.state = ChannelState.HANDSHAKING
        try:
            if self.assoc.role is Role.INITIATOR:
                nonce = bytes(self._rng(HELLO_NONCE_LEN))
                self._send(MsgType.HELLO, nonce)
                msg_type, echoed = self._recv()
                if msg_type is not MsgType.HELLO_ACK:
                    raise HandshakeError(
                        f"expected hello-ack, got {msg_type.name.lower()}"
                    )
                if not hmac.compare_digest(echoed, nonce):
                    raise HandshakeError("hello-ack echo mismatch")
            else:
                msg_type, nonce = self._recv()
                if msg_type is not MsgType.HELLO:
                    raise HandshakeError(f"expected hello, got {msg_type.name.lower()}")
                if len(nonce) != HELLO_NONCE_LEN:
                    raise HandshakeError(
                        f"hello payload must be {HELLO_NONCE_LEN} bytes"
                    )
                self._send(MsgType.HELLO_ACK, nonce)
        except KissError:
            self._fail()
            raise
        self.state = ChannelState.ESTABLISHED

    # -- data traffic ------------------------------------------------

    def send(self, payload: bytes) -> None:
        if self.state is not ChannelState.ESTABLISHED:
            raise ChannelStateError(f"send in state {self.state.value}")
        try:
            self._send(MsgType.DATA, payload)
        except KissError:
            self._fail()
            raise

    def receive(self):
        """Next data payload, or None once the peer has closed."""
        if self.state is not ChannelState.ESTABLISHED:
            raise ChannelStateError(f"receive in state {self.state.value}")
        try:
            msg_type, payload = self._recv()
        except ChannelAlert:
            self.state = ChannelState.CLOSED
            raise
        except KissError:
            self._fail()
            raise
        if msg_type is MsgType.DATA:
            return payload
        if msg_type is MsgType.CLOSE:
            self.state = ChannelState.CLOSED
            return None
        self._fail()
        raise ChannelStateError(
            f"unexpected {msg_type.name.lower()} record on established channel"
        )

    def close(self) -> None:
        """Announce an orderly shutdown. Idempotent once closed."""
        if self.state is ChannelState.CLOSED:
            return
        if self.state is not ChannelState.ESTABLISHED:
            raise ChannelStateError(f"close in state {self.state.value}")
        try:
            self._send(MsgType.CLOSE, b"")
        finally:
            self.state = ChannelState.CLOSED

    # -- internals ---------------------------------------------------

    def _send(self, msg_type: MsgType, payload: bytes) -> None:
        wire = encode_record(seal(self.assoc, msg_type, payload))
        try:
            self.transport.sendall(wire)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _recv(self) -> tuple[MsgType, bytes]:
        try:
            wire = read_record(self.transport.recv)
        except OSError as exc:
            raise TransportError(f"receive failed: {exc}") from exc
        if not wire:
            raise TransportError("connection closed without a close record")
        msg_type, payload = open_record(self.assoc, wire)
        if msg_type is MsgType.ALERT:
            raise ChannelAlert("peer reported a protocol failure")
        return msg_type, payload

    def _fail(self) -> None:
        """Best-effort generic alert, then close. One alert type on the
        wire regardless of cause, so failures are not an oracle."""
        if self.state is not ChannelState.CLOSED:
            try:
                self._send(MsgType.ALERT, b"")
            except (KissError, OSError):
                pass
            self.state = ChannelState.CLOSED
