"""Simulation-grade hash, signature, KES and VRF primitives.

These are deterministic stand-ins with the interfaces a real deployment
would use (Schnorr signatures, an EC-VRF, a key evolving signature scheme).
They are *not* secure: verification consults a :class:`KeyRegistry` that
maps public identifiers back to secrets, playing the role of the PKI.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

DIGEST_SIZE = 32
VRF_OUTPUT_BITS = 64

_KES_CHECKPOINT_EVERY = 1024


def hash(message: bytes) -> bytes:  # noqa: A001 - mirrors the protocol name
    """BLAKE2b-256 digest."""
    return hashlib.blake2b(message, digest_size=DIGEST_SIZE).digest()


def _tagged(tag: bytes, *parts: bytes) -> bytes:
    h = hashlib.blake2b(digest_size=DIGEST_SIZE, person=tag.ljust(16, b"\0")[:16])
    for part in parts:
        h.update(struct.pack("<I", len(part)))
        h.update(part)
    return h.digest()


@dataclass(frozen=True)
class KeyPair:
    sk: bytes
    pk: bytes

    @classmethod
    def from_secret(cls, sk: bytes) -> "KeyPair":
        return cls(sk=sk, pk=_tagged(b"densepos.pk", sk))

    @classmethod
    def from_seed(cls, seed: bytes | str) -> "KeyPair":
        if isinstance(seed, str):
            seed = seed.encode()
        return cls.from_secret(_tagged(b"densepos.sk", seed))


@dataclass
class KeyRegistry:
    """Public-key directory used by simulated verifiers."""

    secrets: dict[bytes, bytes] = field(default_factory=dict)
    kes_roots: dict[bytes, bytes] = field(default_factory=dict)
    _kes_cache: dict[bytes, dict[int, bytes]] = field(default_factory=dict, repr=False)

    def register(self, keypair: KeyPair) -> bytes:
        self.secrets[keypair.pk] = keypair.sk
        return keypair.pk

    def register_kes(self, key: "KesKey") -> bytes:
        pk = kes_public_key(key)
        self.kes_roots[pk] = key.current_sk
        self._kes_cache[pk] = {key.period: key.current_sk}
        return pk

    def kes_period_key(self, pk: bytes, period: int) -> bytes | None:
        cache = self._kes_cache.get(pk)
        if cache is None:
            return None
        if period in cache:
            return cache[period]
        start = max((p for p in cache if p <= period), default=None)
        if start is None:
            return None
        sk = cache[start]
        for p in range(start + 1, period + 1):
            sk = _ratchet(sk)
            if p % _KES_CHECKPOINT_EVERY == 0:
                cache[p] = sk
        cache[period] = sk
        return sk


# -- signatures ---------------------------------------------------------------


def sign(sk: bytes, message: bytes) -> bytes:
    return _tagged(b"densepos.sig", sk, message)


def verify(pk: bytes, message: bytes, signature: bytes, registry: KeyRegistry) -> bool:
    """Check ``signature`` over ``message`` for ``pk``; malformed input is just False."""
    if not isinstance(signature, (bytes, bytearray)) or len(signature) != DIGEST_SIZE:
        return False
    sk = registry.secrets.get(pk)
    if sk is None:
        return False
    return sign(sk, message) == bytes(signature)


# -- key evolving signatures -------------------------------------------------


def _ratchet(sk: bytes) -> bytes:
    return _tagged(b"densepos.kes.next", sk)


@dataclass(frozen=True)
class KesKey:
    """One-way ratcheting signing key.

    ``current_sk`` signs for ``period`` only; older period keys cannot be
    recomputed from it.
    """

    current_sk: bytes
    period: int = 0
    ratchet_chain_digest: bytes = b"\0" * DIGEST_SIZE

    @classmethod
    def from_seed(cls, seed: bytes | str, period: int = 0) -> "KesKey":
        if isinstance(seed, str):
            seed = seed.encode()
        return cls(current_sk=_tagged(b"densepos.kes.root", seed), period=period)

    def evolve(self) -> "KesKey":
        return KesKey(
            current_sk=_ratchet(self.current_sk),
            period=self.period + 1,
            ratchet_chain_digest=_tagged(
                b"densepos.kes.log", self.ratchet_chain_digest, struct.pack("<Q", self.period)
            ),
        )


@dataclass(frozen=True)
class KesSignature:
    period: int
    tag: bytes

    def to_bytes(self) -> bytes:
        return struct.pack("<Q", self.period) + self.tag

    @classmethod
    def from_bytes(cls, raw: bytes) -> "KesSignature | None":
        if len(raw) != 8 + DIGEST_SIZE:
            return None
        (period,) = struct.unpack_from("<Q", raw)
        return cls(period=period, tag=bytes(raw[8:]))


def kes_public_key(root: KesKey) -> bytes:
    """Public identifier for a KES key chain, computed from its period-0 key."""
    if root.period != 0:
        raise ValueError("KES public key is derived from the period 0 key")
    return _tagged(b"densepos.kes.pk", root.current_sk)


def kes_evolve_to(key: KesKey, period: int) -> KesKey:
    if period < key.period:
        raise ValueError(f"cannot rewind KES key from period {key.period} to {period}")
    while key.period < period:
        key = key.evolve()
    return key


def kes_sign(key: KesKey, message: bytes) -> tuple[KesSignature, KesKey]:
    """Sign for ``key.period`` and return the ratcheted key for the next period."""
    tag = _tagged(b"densepos.kes.sig", key.current_sk, struct.pack("<Q", key.period), message)
    return KesSignature(key.period, tag), key.evolve()


def kes_verify(
    pk: bytes,
    message: bytes,
    signature: KesSignature | bytes,
    registry: KeyRegistry,
    expected_period: int | None = None,
) -> bool:
    if isinstance(signature, (bytes, bytearray)):
        parsed = KesSignature.from_bytes(bytes(signature))
        if parsed is None:
            return False
        signature = parsed
    if expected_period is not None and signature.period != expected_period:
        return False
    sk = registry.kes_period_key(pk, signature.period)
    if sk is None:
        return False
    expected = _tagged(
        b"densepos.kes.sig", sk, struct.pack("<Q", signature.period), message
    )
    return expected == signature.tag


class DuplicateSignatureTracker:
    """Remembers which (key, period) pairs already signed an accepted message."""

    def __init__(self) -> None:
        self._seen: dict[tuple[bytes, int], bytes] = {}

    def check(self, pk: bytes, period: int, message_id: bytes) -> bool:
        """True if this is the first message for (pk, period) or the same one again."""
        prior = self._seen.get((pk, period))
        return prior is None or prior == message_id

    def record(self, pk: bytes, period: int, message_id: bytes) -> None:
        self._seen.setdefault((pk, period), message_id)


# -- VRF ------------------------------------------------------------------------


@dataclass(frozen=True)
class VrfEvaluation:
    output: int  # numerator over 2**64
    proof: bytes


def vrf_input(randomness: bytes, slot: int, pool_id: str) -> bytes:
    """Canonical encoding of the leader-election VRF input."""
    pid = pool_id.encode()
    return (
        struct.pack("<I", len(randomness))
        + randomness
        + struct.pack("<Q", slot)
        + struct.pack("<I", len(pid))
        + pid
    )


def _vrf_output(sk: bytes, message: bytes) -> int:
    return int.from_bytes(_tagged(b"densepos.vrf.out", sk, message)[:8], "little")


def _vrf_proof(pk: bytes, message: bytes, output: int) -> bytes:
    return _tagged(b"densepos.vrf.prf", pk, message, output.to_bytes(8, "little"))


def vrf_output(keypair: KeyPair, message: bytes) -> int:
    """The output alone, for callers that only need a proof when they win."""
    return _vrf_output(keypair.sk, message)


def vrf_prove(keypair: KeyPair, message: bytes, output: int) -> VrfEvaluation:
    return VrfEvaluation(output, _vrf_proof(keypair.pk, message, output))


def vrf_eval(keypair: KeyPair, message: bytes) -> VrfEvaluation:
    return vrf_prove(keypair, message, vrf_output(keypair, message))


def vrf_verify(
    pk: bytes,
    message: bytes,
    evaluation: VrfEvaluation,
    registry: KeyRegistry | None = None,
) -> bool:
    """Check the proof equation; with a registry also recompute the output."""
    if not 0 <= evaluation.output < (1 << VRF_OUTPUT_BITS):
        return False
    if _vrf_proof(pk, message, evaluation.output) != evaluation.proof:
        return False
    if registry is not None:
        sk = registry.secrets.get(pk)
        if sk is None or _vrf_output(sk, message) != evaluation.output:
            return False
    return True
