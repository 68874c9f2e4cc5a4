"""Blocks, canonical header encoding, validation and the in-memory block tree."""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterator, Mapping, Optional

from . import crypto
from .election import leader_threshold
from .selection import (
    ChainTrust,
    SelectionParams,
    extend_trust,
    prune_finalized,
    select_chain,
    tip_eligibility,
)

log = logging.getLogger(__name__)

MAX_BLOCK_SIZE = 1_000_000
ZERO_ID = b"\0" * crypto.DIGEST_SIZE
GENESIS_POOL = "genesis"


class RejectReason(enum.Enum):
    BAD_PARENT = "BadParent"
    TIMESTAMP_ORDER = "TimestampOrder"
    BAD_SIGNATURE = "BadSignature"
    DUPLICATE_SIGNATURE = "DuplicateSignature"
    BAD_VRF = "BadVRF"
    BAD_TARGET = "BadTarget"
    REORG_TOO_DEEP = "ReorgTooDeep"
    TOO_LARGE = "TooLarge"
    BAD_MERKLE = "BadMerkle"
    BAD_REWARD = "BadReward"


@dataclass(frozen=True)
class Verdict:
    reason: Optional[RejectReason] = None
    detail: str = ""

    @property
    def accepted(self) -> bool:
        return self.reason is None

    def __bool__(self) -> bool:
        return self.accepted

    def __str__(self) -> str:
        if self.accepted:
            return "Accept"
        return f"Reject({self.reason.value}{': ' + self.detail if self.detail else ''})"


ACCEPT = Verdict()


def reject(reason: RejectReason, detail: str = "") -> Verdict:
    return Verdict(reason, detail)


class BlockRejected(Exception):
    def __init__(self, reason: RejectReason, detail: str = "") -> None:
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


# -- data model -------------------------------------------------------------------


@dataclass(frozen=True)
class BlockHeader:
    signature: bytes
    vrf_output: int
    vrf_proof: bytes
    pool_id: str
    target: int
    prev_id: bytes
    timestamp: int
    slot: int
    merkle_root: bytes
    witness_merkle_root: bytes

    def to_bytes(self) -> bytes:
        return serialize_header(self)

    def signing_bytes(self) -> bytes:
        return serialize_header(replace(self, signature=b""))

    @cached_property
    def id(self) -> bytes:
        return crypto.hash(serialize_header(self))


@dataclass(frozen=True)
class Reward:
    pool_id: str
    amount: int


@dataclass(frozen=True)
class Body:
    transactions: tuple[bytes, ...] = ()
    reward: Optional[Reward] = None

    @property
    def size(self) -> int:
        return sum(len(tx) for tx in self.transactions)


@dataclass(frozen=True)
class Block:
    header: BlockHeader
    body: Body = field(default_factory=Body)

    @property
    def id(self) -> bytes:
        return self.header.id

    @property
    def slot(self) -> int:
        return self.header.slot

    @property
    def pool_id(self) -> str:
        return self.header.pool_id


# -- canonical encoding ---------------------------------------------------------
# Field order follows BlockHeader; integers are little-endian fixed width,
# byte strings and text carry a u32 length prefix.


def _bytes(b: bytes) -> bytes:
    return struct.pack("<I", len(b)) + b


def serialize_header(h: BlockHeader) -> bytes:
    if not 0 <= h.target < 1 << 128:
        raise ValueError("target does not fit in u128")
    return b"".join(
        [
            _bytes(h.signature),
            struct.pack("<Q", h.vrf_output),
            _bytes(h.vrf_proof),
            _bytes(h.pool_id.encode()),
            h.target.to_bytes(16, "little"),
            _bytes(h.prev_id),
            struct.pack("<Q", h.timestamp),
            struct.pack("<Q", h.slot),
            _bytes(h.merkle_root),
            _bytes(h.witness_merkle_root),
        ]
    )


class _Reader:
    def __init__(self, raw: bytes) -> None:
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ValueError("truncated header")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())


def parse_header(raw: bytes) -> BlockHeader:
    r = _Reader(raw)
    header = BlockHeader(
        signature=r.blob(),
        vrf_output=r.u64(),
        vrf_proof=r.blob(),
        pool_id=r.blob().decode(),
        target=int.from_bytes(r.take(16), "little"),
        prev_id=r.blob(),
        timestamp=r.u64(),
        slot=r.u64(),
        merkle_root=r.blob(),
        witness_merkle_root=r.blob(),
    )
    if r.pos != len(raw):
        raise ValueError("trailing bytes after header")
    return header


def merkle_root(leaves: list[bytes]) -> bytes:
    """Bitcoin-style binary merkle root over leaf digests (last node duplicated)."""
    if not leaves:
        return crypto.hash(b"")
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        level = [crypto.hash(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def body_roots(body: Body) -> tuple[bytes, bytes]:
    txs = [crypto.hash(tx) for tx in body.transactions]
    if body.reward is not None:
        rec = body.reward.pool_id.encode() + struct.pack("<Q", body.reward.amount)
        txs.insert(0, crypto.hash(b"reward" + rec))
    witnesses = [crypto.hash(b"witness" + leaf) for leaf in txs]
    return merkle_root(txs), merkle_root(witnesses)


# -- validation -------------------------------------------------------------------


@dataclass(frozen=True)
class PoolKeys:
    sign_pk: bytes
    vrf_pk: bytes


@dataclass
class ValidationContext:
    """What a node knows when judging a header for one slot on one branch.

    ``tau`` is the threshold the node computed for the block's slot,
    ``weights`` the election weights (64.64 fractions) of the epoch snapshot.
    With ``kes_period_length`` set, signatures are KES signatures whose
    period must match the block's slot.
    """

    tau: int
    randomness: bytes
    weights: Mapping[str, int]
    pool_keys: Mapping[str, PoolKeys]
    registry: crypto.KeyRegistry
    finalized_height: int = 0
    parent_height: int = 0
    reward: int = 0
    max_block_size: int = MAX_BLOCK_SIZE
    kes_period_length: Optional[int] = None


def validate_header(header: BlockHeader, parent: BlockHeader, ctx: ValidationContext) -> Verdict:
    if header.prev_id != parent.id:
        return reject(RejectReason.BAD_PARENT, "prev_id does not match parent")
    if ctx.parent_height < ctx.finalized_height:
        return reject(
            RejectReason.REORG_TOO_DEEP,
            f"parent height {ctx.parent_height} below finalized {ctx.finalized_height}",
        )
    if header.timestamp <= parent.timestamp:
        return reject(RejectReason.TIMESTAMP_ORDER, "timestamp not after parent")
    if header.slot <= parent.slot:
        return reject(RejectReason.TIMESTAMP_ORDER, "slot not after parent")
    keys = ctx.pool_keys.get(header.pool_id)
    if keys is None:
        return reject(RejectReason.BAD_SIGNATURE, f"unknown pool {header.pool_id!r}")
    message = header.signing_bytes()
    if ctx.kes_period_length:
        ok = crypto.kes_verify(
            keys.sign_pk,
            message,
            header.signature,
            ctx.registry,
            expected_period=header.slot // ctx.kes_period_length,
        )
    else:
        ok = crypto.verify(keys.sign_pk, message, header.signature, ctx.registry)
    if not ok:
        return reject(RejectReason.BAD_SIGNATURE)
    if header.target != ctx.tau:
        return reject(RejectReason.BAD_TARGET, f"expected {ctx.tau}, got {header.target}")
    vrf_msg = crypto.vrf_input(ctx.randomness, header.slot, header.pool_id)
    evaluation = crypto.VrfEvaluation(header.vrf_output, header.vrf_proof)
    if not crypto.vrf_verify(keys.vrf_pk, vrf_msg, evaluation, ctx.registry):
        return reject(RejectReason.BAD_VRF, "proof does not verify")
    threshold = leader_threshold(ctx.tau, ctx.weights.get(header.pool_id, 0))
    if header.vrf_output >= threshold:
        return reject(RejectReason.BAD_VRF, "output above leader threshold")
    return ACCEPT


def validate_block(block: Block, ctx: ValidationContext) -> Verdict:
    if block.body.size > ctx.max_block_size:
        return reject(RejectReason.TOO_LARGE, f"{block.body.size} > {ctx.max_block_size}")
    root, witness_root = body_roots(block.body)
    if root != block.header.merkle_root or witness_root != block.header.witness_merkle_root:
        return reject(RejectReason.BAD_MERKLE)
    reward = block.body.reward
    if reward is not None and (reward.amount > ctx.reward or reward.amount < 0):
        return reject(RejectReason.BAD_REWARD, f"{reward.amount} > {ctx.reward}")
    return ACCEPT


# -- chain store ------------------------------------------------------------------


def make_genesis(target: int, timestamp: int = 0, seed: bytes = b"") -> Block:
    body = Body(transactions=(seed,) if seed else ())
    root, wroot = body_roots(body)
    header = BlockHeader(
        signature=b"",
        vrf_output=0,
        vrf_proof=b"",
        pool_id=GENESIS_POOL,
        target=target,
        prev_id=ZERO_ID,
        timestamp=timestamp,
        slot=0,
        merkle_root=root,
        witness_merkle_root=wroot,
    )
    return Block(header, body)


class ChainState:
    """Block tree rooted at genesis with cached per-block trust.

    Single writer.  After every connection the canonical tip is re-selected
    and finality advanced, so branches forking more than
    ``params.max_reorg_depth`` blocks behind the canonical tip disappear.
    """

    def __init__(self, genesis: Block, params: Optional[SelectionParams] = None) -> None:
        self.params = params or SelectionParams()
        self.genesis_id = genesis.id
        self.blocks: dict[bytes, Block] = {genesis.id: genesis}
        self.children: dict[bytes, set[bytes]] = {genesis.id: set()}
        self.tips: dict[bytes, ChainTrust] = {genesis.id: ChainTrust(0)}
        self.finalized_height = 0
        self.finalized_id = genesis.id
        self.canonical = genesis.id
        self.last_reorg_depth = 0
        # derived values keyed by consumers (targets, randomness)
        self.memo: dict = {}
        self._height = {genesis.id: 0}
        self._trust = {genesis.id: ChainTrust(0)}
        self._arrival = {genesis.id: 0}
        self._cp_ok = {genesis.id: self._checkpoint_ok(0, genesis.id, True)}
        self._skip: dict[bytes, bytes] = {}
        self._seq = 0

    # queries
    def __contains__(self, block_id: bytes) -> bool:
        return block_id in self.blocks

    def __len__(self) -> int:
        return len(self.blocks)

    def block(self, block_id: bytes) -> Block:
        return self.blocks[block_id]

    def header(self, block_id: bytes) -> BlockHeader:
        return self.blocks[block_id].header

    def height(self, block_id: bytes) -> int:
        return self._height[block_id]

    def trust(self, block_id: bytes) -> ChainTrust:
        return self._trust[block_id]

    def arrival(self, block_id: bytes) -> int:
        return self._arrival[block_id]

    def parent(self, block_id: bytes) -> Optional[bytes]:
        if block_id == self.genesis_id:
            return None
        return self.blocks[block_id].header.prev_id

    def checkpoint_consistent(self, block_id: bytes) -> bool:
        return self._cp_ok[block_id]

    def ancestors(self, block_id: bytes) -> Iterator[bytes]:
        """``block_id`` and its ancestors, newest first."""
        cur: Optional[bytes] = block_id
        while cur is not None:
            yield cur
            cur = self.parent(cur)

    def ancestor_at(self, block_id: bytes, height: int) -> Optional[bytes]:
        h = self._height[block_id]
        if height > h or height < 0:
            return None
        cur = block_id
        while h > height:
            skip = self._skip.get(cur)
            if skip is not None and _skip_height(h) >= height:
                cur, h = skip, _skip_height(h)
            else:
                cur, h = self.blocks[cur].header.prev_id, h - 1
        return cur

    def path(self, block_id: bytes) -> list[bytes]:
        """Ids from genesis to ``block_id``."""
        return list(reversed(list(self.ancestors(block_id))))

    def occupancy(self, block_id: bytes) -> list[int]:
        slots = {self.blocks[b].header.slot for b in self.ancestors(block_id)}
        tip_slot = self.blocks[block_id].header.slot
        return [1 if s in slots else 0 for s in range(1, tip_slot + 1)]

    def fork_point(self, a: bytes, b: bytes) -> bytes:
        ha, hb = self._height[a], self._height[b]
        if ha > hb:
            a = self.ancestor_at(a, hb)
        elif hb > ha:
            b = self.ancestor_at(b, ha)
        while a != b:
            a, b = self.parent(a), self.parent(b)
        return a

    # mutation
    def _checkpoint_ok(self, height: int, block_id: bytes, parent_ok: bool) -> bool:
        want = self.params.checkpoints.get(height)
        return parent_ok and (want is None or want == block_id)

    def connect(self, block: Block) -> bytes:
        """Index ``block`` and re-select the canonical tip, which is returned."""
        bid = block.id
        if bid in self.blocks:
            return self.canonical
        parent_id = block.header.prev_id
        if parent_id not in self.blocks:
            raise BlockRejected(RejectReason.BAD_PARENT, "unknown parent")
        ph = self._height[parent_id]
        if ph < self.finalized_height:
            raise BlockRejected(
                RejectReason.REORG_TOO_DEEP,
                f"attaches at height {ph}, finalized height is {self.finalized_height}",
            )
        parent = self.blocks[parent_id]
        gap = block.header.slot - parent.header.slot - 1
        if gap < 0:
            raise BlockRejected(RejectReason.TIMESTAMP_ORDER, "slot not after parent")
        self._seq += 1
        self.blocks[bid] = block
        self.children[bid] = set()
        self.children[parent_id].add(bid)
        self._height[bid] = ph + 1
        self._trust[bid] = extend_trust(self.params, self._trust[parent_id], gap)
        self._arrival[bid] = self._seq
        self._cp_ok[bid] = self._checkpoint_ok(ph + 1, bid, self._cp_ok[parent_id])
        self._skip[bid] = self.ancestor_at(parent_id, _skip_height(ph + 1))
        self.tips.pop(parent_id, None)
        self.tips[bid] = self._trust[bid]
        self._reselect(bid)
        return self.canonical

    def _reselect(self, added: bytes) -> None:
        old = self.canonical
        if tip_eligibility(self, old, self.params):
            new = select_chain(self)
        else:
            # other tips are unchanged, so only the new block can overtake;
            # being the latest arrival it must do so strictly
            new = old
            if not tip_eligibility(self, added, self.params) and self._trust[added] > self._trust[old]:
                new = added
        self.last_reorg_depth = 0
        if new != old:
            fork = self.fork_point(old, new)
            self.last_reorg_depth = self._height[old] - self._height[fork]
        self.canonical = new
        prune_finalized(self)

    def advance_finality(self, height: int) -> None:
        """Finalize the canonical ancestor at ``height`` and drop conflicting branches."""
        if height <= self.finalized_height:
            return
        keep = self.ancestor_at(self.canonical, height)
        self.finalized_id = keep
        for _ in range(height - self.finalized_height):
            parent = self.blocks[keep].header.prev_id
            for child in list(self.children[parent]):
                if child != keep:
                    self._drop_subtree(child)
            keep = parent
        self.finalized_height = height

    def _drop_subtree(self, root: bytes) -> None:
        stack = [root]
        parent = self.blocks[root].header.prev_id
        self.children[parent].discard(root)
        while stack:
            bid = stack.pop()
            stack.extend(self.children.pop(bid, ()))
            self.blocks.pop(bid, None)
            self.tips.pop(bid, None)
            for d in (self._height, self._trust, self._arrival, self._cp_ok, self._skip):
                d.pop(bid, None)
            log.debug("pruned %s below finality", bid.hex()[:12])


def _skip_height(height: int) -> int:
    """Jump target for a block at ``height``, as in Bitcoin's skip list."""
    if height < 2:
        return 0

    def drop_lowest_bit(n: int) -> int:
        return n & (n - 1)

    if height & 1:
        return drop_lowest_bit(drop_lowest_bit(height - 1)) + 1
    return drop_lowest_bit(height)


def connect_block(state: ChainState, block: Block) -> ChainState:
    state.connect(block)
    return state
