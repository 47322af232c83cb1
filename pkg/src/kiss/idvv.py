"""Deterministic key-chain state machine.

Both ends of a channel hold the same (seed, root) pair and derive an
identical sequence of 32-byte values, one per message, by iterating a
keyed one-way function. No key material ever crosses the wire: a
receiver that falls behind simply replays the recurrence forward.

Construction (PRF = HMAC-SHA-256 throughout):

    value_0     = PRF(key = seed, msg = root || direction_label)
    value_{i+1} = PRF(key = value_i, msg = seed || BE64(i))

Chaining through the value makes earlier values unrecoverable from a
captured state (forward secrecy); mixing the seed every step ties the
chain to the long-term secret; the explicit counter rules out cycles.

Ownership contract: a state is single-owner. Exactly one logical thread
of control may step it at a time; hand states off between threads, never
share them. Nothing here locks.
"""

from __future__ import annotations

import hmac
import struct

from .errors import (
    ChainExhaustedError,
    InvalidParameterError,
    OutOfWindowError,
    ReplayError,
)

SECRET_LEN = 32
MAX_LABEL_LEN = 16
MAX_COUNTER = 2**64 - 1

# Per-message key derivation labels (domain separation).
KEY_LABEL_MAC = b"kiss-mac"
KEY_LABEL_ENC = b"kiss-enc"
KEY_LABEL_NONCE = b"kiss-nonce"

_ZEROS = bytes(SECRET_LEN)
_KEY_LABELS = frozenset((KEY_LABEL_MAC, KEY_LABEL_ENC, KEY_LABEL_NONCE))

_U64 = struct.Struct(">Q")


def _prf(key: bytes, message: bytes) -> bytes:
    return hmac.digest(key, message, "sha256")


class _Secret:
    """32-byte secret in a wipeable buffer.

    Python cannot scrub immutable ``bytes``, so the canonical storage is a
    bytearray that ``wipe()`` (and garbage collection) zeroes. Copies handed
    out via ``.bytes`` are the caller's responsibility.
    """

    __slots__ = ("_buf",)

    def __init__(self, data: bytes):
        if not isinstance(data, (bytes, bytearray, memoryview)):
            raise InvalidParameterError(f"{type(self).__name__} wants bytes")
        if len(data) != SECRET_LEN:
            raise InvalidParameterError(
                f"{type(self).__name__} must be {SECRET_LEN} bytes, got {len(data)}"
            )
        self._buf = bytearray(data)

    @property
    def bytes(self) -> bytes:
        return bytes(self._buf)

    def wipe(self) -> None:
        self._buf[:] = _ZEROS

    def __del__(self):  # best effort; wipe() is the reliable path
        try:
            self.wipe()
        except Exception:
            pass

    def __repr__(self) -> str:
        return f"{type(self).__name__}(<{SECRET_LEN} bytes>)"

    def __eq__(self, other) -> bool:
        if isinstance(other, _Secret):
            return hmac.compare_digest(self._buf, other._buf)
        return NotImplemented

    def __hash__(self):
        raise TypeError(f"{type(self).__name__} is not hashable")


class Seed(_Secret):
    """Long-term chain secret. Serialized only by the provisioning module."""


class Root(_Secret):
    """Second bootstrap secret; independent of the seed."""


class IdvvValue:
    """One chain output: 32 value bytes plus the step index that produced them.

    Immutable once produced; ``wipe()`` when done with it.
    """

    __slots__ = ("_buf", "_counter")

    def __init__(self, value: bytes, counter: int):
        self._buf = bytearray(value)
        self._counter = counter

    @property
    def bytes(self) -> bytes:
        return bytes(self._buf)

    @property
    def counter(self) -> int:
        return self._counter

    def wipe(self) -> None:
        self._buf[:] = _ZEROS

    def __del__(self):
        try:
            self.wipe()
        except Exception:
            pass

    def __repr__(self) -> str:
        return f"IdvvValue(counter={self._counter}, <32 bytes>)"


class IdvvState:
    """One direction's chain position: current value plus step counter.

    Construct via :func:`idvv_init` or :meth:`from_snapshot`. The previous
    value is zeroed on every step and never retained. Single-owner; see the
    module docstring.
    """

    __slots__ = ("_seed", "_value", "_counter", "_label")

    def __init__(self, seed: Seed, value: bytes, counter: int, label: bytes):
        self._seed = seed
        self._value = bytearray(value)
        self._counter = counter
        self._label = bytes(label)

    @property
    def value(self) -> bytes:
        return bytes(self._value)

    @property
    def counter(self) -> int:
        return self._counter

    @property
    def direction_label(self) -> bytes:
        return self._label

    def clone(self) -> "IdvvState":
        """Independent copy sharing the seed reference.

        Used to trial-advance a receive chain; commit by replacing the
        original, discard on verification failure.
        """
        return IdvvState(self._seed, bytes(self._value), self._counter, self._label)

    def snapshot(self) -> dict:
        """Persistable position. Excludes the seed, which the caller must
        re-attach on restore."""
        return {
            "counter": self._counter,
            "value": bytes(self._value).hex(),
            "label": self._label.hex(),
        }

    @classmethod
    def from_snapshot(cls, seed: Seed | bytes, snap: dict) -> "IdvvState":
        seed = _as_secret(seed, Seed)
        value = bytes.fromhex(snap["value"])
        if len(value) != SECRET_LEN:
            raise InvalidParameterError("snapshot value must be 32 bytes")
        counter = int(snap["counter"])
        if not 0 <= counter <= MAX_COUNTER:
            raise InvalidParameterError("snapshot counter out of range")
        label = bytes.fromhex(snap["label"])
        _check_label(label)
        return cls(seed, value, counter, label)

    def __repr__(self) -> str:
        return f"IdvvState(label={self._label!r}, counter={self._counter})"


def _as_secret(secret, cls):
    if isinstance(secret, cls):
        return secret
    return cls(secret)


def _check_label(label: bytes) -> None:
    if not isinstance(label, (bytes, bytearray)):
        raise InvalidParameterError("direction label must be bytes")
    if not 0 < len(label) <= MAX_LABEL_LEN:
        raise InvalidParameterError(
            f"direction label must be 1..{MAX_LABEL_LEN} bytes, got {len(label)}"
        )


def idvv_init(seed: Seed | bytes, root: Root | bytes, direction_label: bytes) -> IdvvState:
    """Start a chain: counter 0, value = PRF(seed, root || label).

    Deterministic: identical inputs always produce an identical state.
    Distinct labels yield independent chains from the same secrets.
    """
    seed = _as_secret(seed, Seed)
    root = _as_secret(root, Root)
    _check_label(direction_label)
    value = _prf(seed.bytes, root.bytes + bytes(direction_label))
    return IdvvState(seed, value, 0, bytes(direction_label))


def idvv_next(state: IdvvState) -> IdvvValue:
    """Advance the chain one step and return the new value.

    The step from counter i keys the PRF with value_i over seed || BE64(i);
    value_i is destroyed by overwriting the state buffer in place. The
    returned value carries the post-increment counter i+1.
    """
    if state._counter >= MAX_COUNTER:
        raise ChainExhaustedError("chain counter exhausted; re-provision the association")
    # hmac.digest takes the live buffers directly; no secret copies made here
    new = _prf(state._value, state._seed._buf + _U64.pack(state._counter))
    state._value[:] = new
    state._counter += 1
    return IdvvValue(new, state._counter)


def idvv_fast_forward(state: IdvvState, target_counter: int, max_steps: int) -> IdvvValue:
    """Advance to ``target_counter``, discarding intermediate values.

    Refuses to go backwards or sideways (replay) and refuses gaps beyond
    ``max_steps`` (out of window) before touching the state.
    """
    if target_counter <= state.counter:
        raise ReplayError(
            f"target counter {target_counter} not beyond current {state.counter}"
        )
    gap = target_counter - state.counter
    if gap > max_steps:
        raise OutOfWindowError(f"gap {gap} exceeds window {max_steps}")
    pack, prf = _U64.pack, _prf
    for _ in range(gap - 1):
        state._value[:] = prf(state._value, state._seed._buf + pack(state._counter))
        state._counter += 1
    return idvv_next(state)


def derive_key(value: IdvvValue, label: bytes, out_len: int) -> bytes:
    """Derive a use-specific key from one chain value.

    Only the fixed labels are accepted; output is the PRF prefix, at most
    32 bytes. Deterministic.
    """
    if bytes(label) not in _KEY_LABELS:
        raise InvalidParameterError(f"unknown key derivation label {label!r}")
    if not 0 <= out_len <= SECRET_LEN:
        raise InvalidParameterError(f"out_len must be 0..{SECRET_LEN}, got {out_len}")
    return _prf(value.bytes, bytes(label))[:out_len]
