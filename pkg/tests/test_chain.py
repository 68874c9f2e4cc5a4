import hashlib
import json
import random
import struct
from dataclasses import replace

import pytest

from densepos import crypto
from densepos.chain import (
    Block,
    BlockHeader,
    BlockRejected,
    Body,
    ChainState,
    PoolKeys,
    RejectReason,
    Reward,
    ValidationContext,
    body_roots,
    make_genesis,
    merkle_root,
    parse_header,
    validate_block,
    validate_header,
)
from densepos.election import calibrate_tau, leader_threshold
from densepos.fixedpoint import ONE
from densepos.selection import SelectionParams

from helpers import branch, state_with

HEADER = BlockHeader(
    signature=b"\x01" * 32,
    vrf_output=0x0123456789ABCDEF,
    vrf_proof=b"\x02" * 32,
    pool_id="pool-7",
    target=(1 << 70) + 5,
    prev_id=b"\x03" * 32,
    timestamp=1_700_000_123,
    slot=123,
    merkle_root=b"\x04" * 32,
    witness_merkle_root=b"\x05" * 32,
)
HEADER_HEX = (
    "20000000" + "01" * 32 + "efcdab8967452301" + "20000000" + "02" * 32
    + "06000000" + b"pool-7".hex() + "0500000000000000" + "4000000000000000"
    + "20000000" + "03" * 32 + "7bf1536500000000" + "7b00000000000000"
    + "20000000" + "04" * 32 + "20000000" + "05" * 32
)


def test_header_golden_encoding():
    assert HEADER.to_bytes().hex() == HEADER_HEX


def test_header_id_is_hash_of_encoding():
    assert HEADER.id == hashlib.blake2b(bytes.fromhex(HEADER_HEX), digest_size=32).digest()


def test_header_encoding_matches_struct_layout():
    def blob(b):
        return struct.pack("<I", len(b)) + b

    h = HEADER
    manual = (
        blob(h.signature) + struct.pack("<Q", h.vrf_output) + blob(h.vrf_proof) + blob(h.pool_id.encode())
        + struct.pack("<QQ", h.target & (2**64 - 1), h.target >> 64) + blob(h.prev_id)
        + struct.pack("<QQ", h.timestamp, h.slot) + blob(h.merkle_root) + blob(h.witness_merkle_root)
    )
    assert manual == h.to_bytes()


def test_parse_roundtrip_and_trailing_bytes():
    raw = HEADER.to_bytes()
    assert parse_header(raw) == HEADER
    with pytest.raises(ValueError):
        parse_header(raw + b"\0")
    with pytest.raises(ValueError):
        parse_header(raw[:-1])


def test_signing_bytes_blank_the_signature():
    assert HEADER.signing_bytes() == replace(HEADER, signature=b"").to_bytes()


def test_merkle_root_duplicates_last_leaf():
    a, b, c = (crypto.hash(x) for x in (b"a", b"b", b"c"))
    ab = crypto.hash(a + b)
    cc = crypto.hash(c + c)
    assert merkle_root([a, b, c]) == crypto.hash(ab + cc)
    assert merkle_root([a]) == a
    assert merkle_root([]) == crypto.hash(b"")


# -- validation -----------------------------------------------------------------


class Producer:
    """A pool that can always lead, for building valid blocks by hand."""

    def __init__(self, kes=False):
        self.reg = crypto.KeyRegistry()
        self.vrf = crypto.KeyPair.from_seed("vrf")
        self.reg.register(self.vrf)
        self.kes = kes
        if kes:
            self.kes_key = crypto.KesKey.from_seed("kes")
            self.sign_pk = self.reg.register_kes(self.kes_key)
        else:
            self.signer = crypto.KeyPair.from_seed("sign")
            self.sign_pk = self.reg.register(self.signer)
        self.weights = {"p": ONE // 10}
        self.tau = 2 * calibrate_tau(self.weights.values(), 1)
        self.genesis = make_genesis(self.tau, timestamp=100)

    def ctx(self, **kw):
        base = dict(
            tau=self.tau,
            randomness=b"r",
            weights=self.weights,
            pool_keys={"p": PoolKeys(self.sign_pk, self.vrf.pk)},
            registry=self.reg,
            reward=5,
            kes_period_length=1 if self.kes else None,
        )
        base.update(kw)
        return ValidationContext(**base)

    def block(self, parent, slot, *, reward=5, txs=(b"tx",), target=None, sign_with=None, pool="p", ts=None):
        body = Body(tuple(txs), Reward(pool, reward))
        root, wroot = body_roots(body)
        ev = crypto.vrf_eval(self.vrf, crypto.vrf_input(b"r", slot, pool))
        header = BlockHeader(
            b"", ev.output, ev.proof, pool, self.tau if target is None else target, parent.id,
            parent.header.timestamp + (slot - parent.header.slot) if ts is None else ts, slot, root, wroot,
        )
        if self.kes:
            key = crypto.kes_evolve_to(sign_with or self.kes_key, slot)
            sig = crypto.kes_sign(key, header.signing_bytes())[0].to_bytes()
        else:
            sig = crypto.sign((sign_with or self.signer).sk, header.signing_bytes())
        return Block(replace(header, signature=sig), body)


@pytest.fixture
def prod():
    return Producer()


def test_valid_block_accepted(prod):
    b = prod.block(prod.genesis, 1)
    assert validate_header(b.header, prod.genesis.header, prod.ctx())
    assert validate_block(b, prod.ctx())
    assert str(validate_header(b.header, prod.genesis.header, prod.ctx())) == "Accept"


def _reason(v):
    return v.reason


def test_bad_parent(prod):
    b = prod.block(prod.genesis, 1)
    other = make_genesis(prod.tau, timestamp=50, seed=b"x")
    assert _reason(validate_header(b.header, other.header, prod.ctx())) is RejectReason.BAD_PARENT


def test_timestamp_order(prod):
    b = prod.block(prod.genesis, 1, ts=100)
    assert _reason(validate_header(b.header, prod.genesis.header, prod.ctx())) is RejectReason.TIMESTAMP_ORDER


def test_bad_signature(prod):
    b = prod.block(prod.genesis, 1, sign_with=crypto.KeyPair.from_seed("intruder"))
    assert _reason(validate_header(b.header, prod.genesis.header, prod.ctx())) is RejectReason.BAD_SIGNATURE


def test_unknown_pool(prod):
    b = prod.block(prod.genesis, 1, pool="nobody")
    assert _reason(validate_header(b.header, prod.genesis.header, prod.ctx())) is RejectReason.BAD_SIGNATURE


def test_bad_target(prod):
    b = prod.block(prod.genesis, 1, target=prod.tau + 1)
    assert _reason(validate_header(b.header, prod.genesis.header, prod.ctx())) is RejectReason.BAD_TARGET


def test_bad_vrf_when_not_leader(prod):
    b = prod.block(prod.genesis, 1)
    ctx = prod.ctx(weights={"p": 1})
    assert leader_threshold(prod.tau, 1) <= b.header.vrf_output
    assert _reason(validate_header(b.header, prod.genesis.header, ctx)) is RejectReason.BAD_VRF


def test_bad_vrf_wrong_randomness(prod):
    b = prod.block(prod.genesis, 1)
    assert _reason(validate_header(b.header, prod.genesis.header, prod.ctx(randomness=b"q"))) is RejectReason.BAD_VRF


def test_reorg_too_deep_in_context(prod):
    b = prod.block(prod.genesis, 1)
    ctx = prod.ctx(finalized_height=5, parent_height=0)
    assert _reason(validate_header(b.header, prod.genesis.header, ctx)) is RejectReason.REORG_TOO_DEEP


def test_body_checks(prod):
    too_big = prod.block(prod.genesis, 1, txs=(b"x" * 11,))
    assert _reason(validate_block(too_big, prod.ctx(max_block_size=10))) is RejectReason.TOO_LARGE
    greedy = prod.block(prod.genesis, 1, reward=6)
    assert _reason(validate_block(greedy, prod.ctx())) is RejectReason.BAD_REWARD
    b = prod.block(prod.genesis, 1)
    tampered = Block(b.header, Body((b"other",), b.body.reward))
    assert _reason(validate_block(tampered, prod.ctx())) is RejectReason.BAD_MERKLE


def test_kes_signature_period_must_match_slot():
    prod = Producer(kes=True)
    good = prod.block(prod.genesis, 3)
    assert validate_header(good.header, prod.genesis.header, prod.ctx())
    # signed for period 3 but claims slot 4
    bad = prod.block(prod.genesis, 4, sign_with=None)
    forged_sig = good.header.signature
    moved = replace(bad.header, signature=forged_sig)
    assert _reason(validate_header(moved, prod.genesis.header, prod.ctx())) is RejectReason.BAD_SIGNATURE


# -- chain state ------------------------------------------------------------------


def test_unknown_parent_rejected():
    g, state = state_with()
    orphan = branch(make_genesis(1, seed=b"other"), [1])[0]
    with pytest.raises(BlockRejected) as exc:
        state.connect(orphan)
    assert exc.value.reason is RejectReason.BAD_PARENT


def test_connect_is_idempotent():
    g, state = state_with()
    b = branch(g, [1])[0]
    state.connect(b)
    state.connect(b)
    assert len(state) == 2


def test_finality_rejects_deep_fork_at_scaled_depth():
    params = SelectionParams(max_reorg_depth=10)
    g, state = state_with(params)
    main = branch(g, range(1, 31), "main")
    for b in main:
        state.connect(b)
    assert state.finalized_height == 20
    # a denser fork from height 15 would otherwise win
    fork = branch(main[14], range(16, 60), "fork")
    with pytest.raises(BlockRejected) as exc:
        state.connect(fork[0])
    assert exc.value.reason is RejectReason.REORG_TOO_DEEP
    # a fork from just above finality is still fine
    ok = branch(main[20], [30], "late")
    state.connect(ok[0])


def test_finality_prunes_stale_branches():
    params = SelectionParams(max_reorg_depth=5)
    g, state = state_with(params)
    main = branch(g, range(1, 21), "main")
    side = branch(main[2], [5], "side")
    for blk in main[:3] + side:
        state.connect(blk)
    assert side[0].id in state.tips
    for b in main[3:]:
        state.connect(b)
    assert side[0].id not in state
    assert list(state.tips) == [main[-1].id]


def test_ancestor_at_agrees_with_walking():
    rng = random.Random(9)
    g, state = state_with(SelectionParams(max_reorg_depth=10_000))
    blocks = branch(g, range(1, 600))
    for b in blocks:
        state.connect(b)
    path = state.path(blocks[-1].id)
    for _ in range(200):
        tip = rng.randrange(len(blocks))
        h = rng.randrange(tip + 2)
        assert state.ancestor_at(blocks[tip].id, h) == path[h]
    assert state.ancestor_at(blocks[5].id, 7) is None


def test_fork_point():
    g, state = state_with()
    a = branch(g, [1, 2, 3], "a")
    b = branch(a[0], [2, 5], "b")
    for blk in a + b:
        state.connect(blk)
    assert state.fork_point(a[-1].id, b[-1].id) == a[0].id
