"""Seeded discrete-event simulation of pools producing blocks over a Δ-bounded network.

Time advances in whole slots.  In each slot every agent runs its strategy
(in pool-id order), then block arrivals due in that slot are delivered in a
seeded order.  A block emitted in slot ``t`` is therefore visible to every
honest node from slot ``t + Δ + 1`` on.  Adversarial nodes are rushing: they
see honest blocks without delay.

A passive observer node receives everything subject to Δ and is where
fork-head counts, reorg depths and ε_cons are measured.
"""

from __future__ import annotations

import enum
import heapq
import json
import logging
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from . import crypto
from .chain import (
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
    validate_block,
    validate_header,
)
from .election import (
    RetargetParams,
    calibrate_tau,
    child_target,
    epoch_of,
    epoch_randomness,
    is_slot_leader,
)
from .scenario import AgentSpec, ScenarioConfig
from .selection import SelectionParams, tip_eligibility
from .staking import IncentiveParams, StakeLedger

log = logging.getLogger(__name__)

GENESIS_TIME = 1_700_000_000
MOVING_AVERAGE_BLOCKS = 1000


class EventKind(enum.Enum):
    BLOCK_ARRIVAL = "block-arrival"
    SLOT_TICK = "slot-tick"
    STRATEGY_WAKE = "strategy-wake"


@dataclass(order=True)
class SimEvent:
    at_slot: int
    tiebreak: int
    seq: int
    kind: EventKind = field(compare=False)
    node: int = field(compare=False, default=-1)
    block: Optional[Block] = field(compare=False, default=None)


class StrategyKind(enum.Enum):
    HONEST = "honest"
    PRIVATE_FORK = "private_fork"
    EQUIVOCATOR = "equivocator"
    EQUIVOCATOR_WITH_KES = "equivocator_kes"


@dataclass
class AgentStrategy:
    kind: StrategyKind = StrategyKind.HONEST
    target_length: int = 2
    k: int = 1

    @property
    def adversarial(self) -> bool:
        return self.kind is not StrategyKind.HONEST

    @classmethod
    def from_spec(cls, spec: AgentSpec) -> "AgentStrategy":
        return cls(StrategyKind(spec.strategy), spec.target_length, spec.k)


@dataclass
class Attempt:
    """One private-fork try: started on a foreign tip, resolved by release or abandonment."""

    start_slot: int
    base: bytes
    private: list[bytes] = field(default_factory=list)
    released: bool = False
    end_slot: Optional[int] = None


@dataclass
class RunMetrics:
    seed: int
    slots: int
    blocks_by_pool: dict[str, int]
    canonical_blocks_by_pool: dict[str, int]
    head_count_by_slot: list[int]
    reorg_depth_histogram: dict[int, int]
    competing_block_rate: float
    utilities_by_agent: dict[str, int]
    rejected_by_reason: dict[str, int]
    canonical_tip: str
    canonical_height: int
    canonical_trust: int
    honest_tips_agree: bool
    mean_block_interval: Optional[float]
    final_tau: int
    max_reorg_depth_seen: int
    leader_slots_by_pool: dict[str, int]
    unexplained_deep_reorgs: int = 0
    blocks_emitted_by_pool: dict[str, int] = field(default_factory=dict)
    accepted_by_observer: int = 0
    attempts_by_agent: dict[str, list[dict]] = field(default_factory=dict)
    series: list[tuple[int, int, int, int]] = field(default_factory=list)
    trace: list[dict] = field(default_factory=list)

    def summary_record(self) -> dict:
        return {
            "type": "summary",
            "seed": self.seed,
            "slots": self.slots,
            "blocks_by_pool": self.blocks_by_pool,
            "canonical_blocks_by_pool": self.canonical_blocks_by_pool,
            "leader_slots_by_pool": self.leader_slots_by_pool,
            "blocks_emitted_by_pool": self.blocks_emitted_by_pool,
            "accepted_by_observer": self.accepted_by_observer,
            "utilities_by_agent": self.utilities_by_agent,
            "reorg_depth_histogram": {str(k): v for k, v in sorted(self.reorg_depth_histogram.items())},
            "max_reorg_depth_seen": self.max_reorg_depth_seen,
            "unexplained_deep_reorgs": self.unexplained_deep_reorgs,
            "competing_block_rate": self.competing_block_rate,
            "rejected_by_reason": self.rejected_by_reason,
            "canonical_tip": self.canonical_tip,
            "canonical_height": self.canonical_height,
            "canonical_trust": self.canonical_trust,
            "honest_tips_agree": self.honest_tips_agree,
            "mean_block_interval": self.mean_block_interval,
            "final_tau": self.final_tau,
            "max_head_count": max(self.head_count_by_slot, default=1),
        }

    def records(self) -> list[dict]:
        out = [self.summary_record()]
        for agent, attempts in sorted(self.attempts_by_agent.items()):
            for a in attempts:
                out.append({"type": "attempt", "agent": agent, **a})
        return out

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


# -- network-wide constants for one run ---------------------------------------------


@dataclass
class Environment:
    scenario: ScenarioConfig
    seed: int
    registry: crypto.KeyRegistry
    pool_keys: dict[str, PoolKeys]
    ledger: StakeLedger
    selection: SelectionParams
    retarget: RetargetParams
    genesis_seed: bytes
    genesis: Block
    _weights: dict[int, dict[str, int]] = field(default_factory=dict)

    @property
    def kes_period_length(self) -> Optional[int]:
        p = self.scenario.protocol
        return p.kes_period_length if p.kes else None

    def weights(self, epoch: int) -> dict[str, int]:
        w = self._weights.get(epoch)
        if w is None:
            w = self._weights[epoch] = self.ledger.election_weights(epoch)
        return w

    def context(self, state: ChainState, parent_id: bytes, slot: int) -> ValidationContext:
        p = self.scenario.protocol
        epoch = epoch_of(slot, p.slots_per_epoch)
        return ValidationContext(
            tau=child_target(state, parent_id, self.retarget),
            randomness=epoch_randomness(state, parent_id, epoch, self.genesis_seed, p.slots_per_epoch),
            weights=self.weights(epoch),
            pool_keys=self.pool_keys,
            registry=self.registry,
            finalized_height=state.finalized_height,
            parent_height=state.height(parent_id),
            reward=p.reward,
            max_block_size=p.max_block_size,
            kes_period_length=self.kes_period_length,
        )


def build_ledger(scenario: ScenarioConfig) -> StakeLedger:
    p = scenario.protocol
    params = IncentiveParams(p.total_supply, k=p.k, a=p.a, min_pledge=p.min_pledge)
    ledger = StakeLedger(params, cooldown_blocks=p.cooldown_blocks)
    for a in scenario.agents:
        ledger.create_pool(a.id, a.pledge, a.fee, genesis=True)
        for delegator, amount in sorted(a.delegations.items()):
            ledger.delegate(a.id, delegator, amount, genesis=True)
    return ledger


def make_environment(scenario: ScenarioConfig, seed: int) -> Environment:
    p = scenario.protocol
    registry = crypto.KeyRegistry()
    pool_keys = {}
    for a in scenario.agents:
        vrf = crypto.KeyPair.from_seed(f"{seed}:{a.id}:vrf")
        registry.register(vrf)
        if p.kes:
            sign_pk = registry.register_kes(crypto.KesKey.from_seed(f"{seed}:{a.id}:kes"))
        else:
            sign_pk = registry.register(crypto.KeyPair.from_seed(f"{seed}:{a.id}:sign"))
        pool_keys[a.id] = PoolKeys(sign_pk, vrf.pk)
    ledger = build_ledger(scenario)
    weights = ledger.election_weights(0)
    tau0 = calibrate_tau(weights.values(), p.t_target)
    scale = Fraction(p.tau_scale)
    tau0 = tau0 * scale.numerator // scale.denominator
    genesis_seed = crypto.hash(f"densepos-genesis:{scenario.name}:{seed}".encode())
    genesis = make_genesis(tau0, GENESIS_TIME, genesis_seed)
    selection = SelectionParams(
        alpha=p.alpha,
        block_trust=p.block_trust,
        max_reorg_depth=p.max_reorg_depth,
        checkpoints=scenario.checkpoints,
    )
    retarget = RetargetParams(p.t_target, p.retarget_window, p.clamp_divisor, p.retarget)
    env = Environment(scenario, seed, registry, pool_keys, ledger, selection, retarget, genesis_seed, genesis)
    env._weights[0] = weights
    return env


# -- nodes --------------------------------------------------------------------------


class Node:
    """One participant's view of the block tree plus its acceptance rules."""

    def __init__(self, name: str, env: Environment) -> None:
        self.name = name
        self.env = env
        self.state = ChainState(env.genesis, env.selection)
        self.signatures = crypto.DuplicateSignatureTracker()
        self.orphans: dict[bytes, list[Block]] = {}
        self.rejected: Counter = Counter()
        self.blocks_at_height: dict[int, set[bytes]] = {}
        self.reorgs: Counter = Counter()
        # deep reorgs where an abandoned block had no same-slot rival on the winner
        self.unexplained_deep_reorgs = 0
        self.accepted = 0

    def _kes_period(self, header: BlockHeader) -> Optional[tuple[bytes, int]]:
        length = self.env.kes_period_length
        if not length:
            return None
        return self.env.pool_keys[header.pool_id].sign_pk, header.slot // length

    def receive(self, block: Block) -> bool:
        """Validate and connect ``block`` (and any orphans waiting on it)."""
        accepted = self._receive_one(block)
        if accepted:
            queue = [block.id]
            while queue:
                waiting = self.orphans.pop(queue.pop(), [])
                for child in waiting:
                    if self._receive_one(child):
                        queue.append(child.id)
        return accepted

    def _receive_one(self, block: Block) -> bool:
        state = self.state
        bid = block.id
        if bid in state:
            return False
        parent_id = block.header.prev_id
        if parent_id not in state:
            self.orphans.setdefault(parent_id, []).append(block)
            return False
        ctx = self.env.context(state, parent_id, block.header.slot)
        verdict = validate_header(block.header, state.header(parent_id), ctx)
        if verdict:
            verdict = validate_block(block, ctx)
        if not verdict:
            self.rejected[verdict.reason.value] += 1
            log.debug("%s rejected %s: %s", self.name, bid.hex()[:12], verdict)
            return False
        kes = self._kes_period(block.header)
        if kes is not None and not self.signatures.check(kes[0], kes[1], bid):
            self.rejected[RejectReason.DUPLICATE_SIGNATURE.value] += 1
            return False
        return self._connect(block, kes)

    def _connect(self, block: Block, kes: Optional[tuple[bytes, int]] = None) -> bool:
        old = self.state.canonical
        try:
            self.state.connect(block)
        except BlockRejected as exc:
            self.rejected[exc.reason.value] += 1
            return False
        if kes is not None:
            self.signatures.record(kes[0], kes[1], block.id)
        self.accepted += 1
        self.blocks_at_height.setdefault(self.state.height(block.id), set()).add(block.id)
        depth = self.state.last_reorg_depth
        if depth:
            self.reorgs[depth] += 1
            if depth > 1 and not self._rivalled(old, self.state.canonical):
                self.unexplained_deep_reorgs += 1
        return True

    def _rivalled(self, old: bytes, new: bytes) -> bool:
        state = self.state
        fork = state.fork_point(old, new)

        def slots(tip: bytes) -> set[int]:
            out = set()
            while tip != fork:
                header = state.header(tip)
                out.add(header.slot)
                tip = header.prev_id
            return out

        return slots(old) <= slots(new)

    def adopt_own(self, block: Block) -> bool:
        """Connect a block this node produced itself (already known valid)."""
        if block.id in self.state:
            return False
        return self._connect(block, self._kes_period(block.header))


# -- agents --------------------------------------------------------------------------


class Agent:
    def __init__(self, spec: AgentSpec, env: Environment, index: int) -> None:
        self.spec = spec
        self.pool_id = spec.id
        self.index = index
        self.env = env
        self.strategy = AgentStrategy.from_spec(spec)
        self.node = Node(spec.id, env)
        self.vrf = crypto.KeyPair.from_seed(f"{env.seed}:{spec.id}:vrf")
        self.signer = crypto.KeyPair.from_seed(f"{env.seed}:{spec.id}:sign")
        self.kes_key = crypto.KesKey.from_seed(f"{env.seed}:{spec.id}:kes")
        self.produced = 0
        self.emitted = 0
        self.leader_slots = 0
        self.attempts: list[Attempt] = []
        self.attempt: Optional[Attempt] = None
        self.public: set[bytes] = set()

    # block construction
    def leadership(self, parent_id: bytes, slot: int) -> Optional[tuple[crypto.VrfEvaluation, int]]:
        env, state = self.env, self.node.state
        p = env.scenario.protocol
        if p.kes and self.kes_key.period > slot // p.kes_period_length:
            # the key for this period already signed and has ratcheted past it
            return None
        epoch = epoch_of(slot, p.slots_per_epoch)
        tau = child_target(state, parent_id, env.retarget)
        rand = epoch_randomness(state, parent_id, epoch, env.genesis_seed, p.slots_per_epoch)
        weight = env.weights(epoch).get(self.pool_id, 0)
        ev = is_slot_leader(self.vrf, self.pool_id, weight, slot, rand, tau)
        return (ev, tau) if ev is not None else None

    def make_block(
        self,
        parent_id: bytes,
        slot: int,
        ev: crypto.VrfEvaluation,
        tau: int,
        variant: int = 0,
        kes_key: Optional[crypto.KesKey] = None,
    ) -> tuple[Block, Optional[crypto.KesKey]]:
        """Assemble and sign a block; returns the evolved KES key when one was used."""
        p = self.env.scenario.protocol
        body = Body(
            transactions=(f"{self.pool_id}:{slot}:{variant}".encode(),),
            reward=Reward(self.pool_id, p.reward),
        )
        root, wroot = body_roots(body)
        header = BlockHeader(
            signature=b"",
            vrf_output=ev.output,
            vrf_proof=ev.proof,
            pool_id=self.pool_id,
            target=tau,
            prev_id=parent_id,
            timestamp=GENESIS_TIME + slot,
            slot=slot,
            merkle_root=root,
            witness_merkle_root=wroot,
        )
        message = header.signing_bytes()
        next_key = None
        if p.kes:
            key = crypto.kes_evolve_to(kes_key or self.kes_key, slot // p.kes_period_length)
            sig, next_key = crypto.kes_sign(key, message)
            signature = sig.to_bytes()
        else:
            signature = crypto.sign(self.signer.sk, message)
        return Block(replace(header, signature=signature), body), next_key

    def sign_block(self, parent_id: bytes, slot: int, ev, tau, variant: int = 0) -> Block:
        block, next_key = self.make_block(parent_id, slot, ev, tau, variant)
        if next_key is not None:
            self.kes_key = next_key
        return block

    # strategies
    def step(self, slot: int) -> list[Block]:
        kind = self.strategy.kind
        if kind is StrategyKind.HONEST:
            return self.honest_step(slot)
        if kind is StrategyKind.PRIVATE_FORK:
            return self.private_fork_step(slot)
        return self.equivocate_step(slot)

    def honest_step(self, slot: int) -> list[Block]:
        """At most one block, extending this node's selected tip."""
        parent = self.node.state.canonical
        lead = self.leadership(parent, slot)
        if lead is None:
            return []
        self.leader_slots += 1
        block = self.sign_block(parent, slot, *lead)
        self.node.adopt_own(block)
        self.public.add(block.id)
        self.produced += 1
        return [block]

    def _public_tip(self) -> bytes:
        # the node's canonical tip only moves onto a withheld block when that
        # block wins, which releases it at once; walk back anyway to be safe
        state = self.node.state
        private = set(self.attempt.private) if self.attempt else ()
        cur = state.canonical
        while cur in private:
            cur = state.parent(cur)
        return cur

    def private_fork_step(self, slot: int) -> list[Block]:
        """Withhold blocks on a fork that tries to replace the last public blocks.

        An attempt targets the newest ``target_length - 1`` public blocks made
        by others.  It is abandoned once the public branch is
        ``target_length`` blocks past the fork base, and released as soon as
        the private branch out-trusts the public one.
        """
        state = self.node.state
        n = self.strategy.target_length
        pub = self._public_tip()
        att = self.attempt
        if att is not None:
            if att.base not in state or state.height(pub) - state.height(att.base) >= n:
                att.end_slot = slot
                self.attempt = att = None
        if att is None:
            pub_header = state.header(pub)
            if pub == state.genesis_id or pub_header.pool_id == self.pool_id:
                return self.honest_step(slot)
            base = state.ancestor_at(pub, max(state.height(pub) - (n - 1), 0))
            if base is None or base not in state or state.height(base) < state.finalized_height:
                return self.honest_step(slot)
            att = self.attempt = Attempt(slot, base)
            self.attempts.append(att)
        parent = att.private[-1] if att.private else att.base
        lead = self.leadership(parent, slot)
        if lead is None:
            return []
        self.leader_slots += 1
        block = self.sign_block(parent, slot, *lead)
        self.produced += 1
        att.private.append(block.id)
        self.node.adopt_own(block)
        if state.trust(block.id) > state.trust(pub):
            att.released = True
            att.end_slot = slot
            self.attempt = None
            released = [state.block(b) for b in att.private]
            self.public.update(att.private)
            return released
        return []

    def equivocate_step(self, slot: int) -> list[Block]:
        """Extend every held head with up to ``k`` distinct blocks.

        Under KES only the first block of the slot carries a fresh signature;
        the rest are signed with a stale copy of the period key and are
        broadcast anyway (honest nodes reject them as duplicates).
        """
        state = self.node.state
        k = self.strategy.k
        kes = self.strategy.kind is StrategyKind.EQUIVOCATOR_WITH_KES
        heads = sorted(state.tips, key=state.arrival)
        out: list[Block] = []
        led = False
        for head in heads:
            if tip_eligibility(state, head, state.params):
                continue
            lead = self.leadership(head, slot)
            if lead is None:
                continue
            led = True
            for variant in range(k):
                if kes and out:
                    # stale copy of the key for this period: signs, but duplicates
                    block, _ = self.make_block(head, slot, *lead, variant=variant, kes_key=stale)
                    out.append(block)
                    continue
                if kes:
                    p = self.env.scenario.protocol
                    stale = crypto.kes_evolve_to(self.kes_key, slot // p.kes_period_length)
                block = self.sign_block(head, slot, *lead, variant=variant)
                out.append(block)
        if led:
            self.leader_slots += 1
        for i, block in enumerate(out):
            if kes and i > 0:
                continue
            self.node.adopt_own(block)
        self.produced += len(out) if not kes else min(len(out), 1)
        self.public.update(b.id for b in out)
        return out


# -- the event loop ---------------------------------------------------------------------


class Simulation:
    def __init__(self, scenario: ScenarioConfig, seed: int, trace: bool = False) -> None:
        scenario.validate()
        self.scenario = scenario
        self.seed = seed
        self.env = make_environment(scenario, seed)
        self.agents = [Agent(spec, self.env, i) for i, spec in enumerate(sorted(scenario.agents, key=lambda a: a.id))]
        self.observer = Node("observer", self.env)
        self.rng = random.Random(seed)
        self.queue: list[SimEvent] = []
        self._seq = 0
        self.trace_enabled = trace
        self.head_counts: list[int] = []
        self.series: list[tuple[int, int, int, int]] = []
        self.trace: list[dict] = []
        # node index -1 is the observer
        self._nodes = {a.index: a.node for a in self.agents}
        self._nodes[-1] = self.observer

    def _delay(self) -> int:
        net = self.scenario.network
        if net.latency_mode == "uniform" and net.delta > 0:
            return self.rng.randint(0, net.delta)
        return net.delta

    def broadcast(self, sender: Agent, blocks: list[Block], slot: int) -> None:
        """Queue deliveries; one sender's batch keeps its emission order."""
        tiebreak = self.rng.getrandbits(48)
        for block in blocks:
            for idx in self._nodes:
                if idx == sender.index:
                    continue
                receiver = self.agents[idx] if idx >= 0 else None
                rushing = (
                    receiver is not None
                    and receiver.strategy.adversarial
                    and not sender.strategy.adversarial
                )
                delay = 0 if rushing else self._delay()
                self._seq += 1
                heapq.heappush(
                    self.queue,
                    SimEvent(slot + delay, tiebreak, self._seq, EventKind.BLOCK_ARRIVAL, idx, block),
                )

    def deliver(self, slot: int) -> None:
        while self.queue and self.queue[0].at_slot <= slot:
            ev = heapq.heappop(self.queue)
            self._nodes[ev.node].receive(ev.block)

    def run(self) -> RunMetrics:
        slots = self.scenario.run.slots
        for slot in range(1, slots + 1):
            for agent in self.agents:
                blocks = agent.step(slot)
                agent.emitted += len(blocks)
                if blocks:
                    self.broadcast(agent, blocks, slot)
            self.deliver(slot)
            self._observe(slot)
        self.deliver(slots + self.scenario.network.delta)
        return self.metrics()

    def _observe(self, slot: int) -> None:
        state = self.observer.state
        self.head_counts.append(len(state.tips))
        self.series.append((slot, len(state.tips), state.height(state.canonical), state.trust(state.canonical).value))
        if self.trace_enabled:
            from .selection import select_chain

            reports: list = []
            select_chain(state, trace=reports)
            self.trace.append({"slot": slot, "canonical": state.canonical.hex(), "tips": [r.as_record() for r in reports]})

    def metrics(self) -> RunMetrics:
        obs = self.observer
        state = obs.state
        p = self.scenario.protocol
        chain = state.path(state.canonical)
        canonical_counts = Counter(state.header(b).pool_id for b in chain[1:])
        ids = sorted(a.pool_id for a in self.agents)
        canon = {pid: canonical_counts.get(pid, 0) for pid in ids}
        height = len(chain) - 1
        competing = sum(1 for h in range(1, height + 1) if len(obs.blocks_at_height.get(h, ())) > 1)
        eps = competing / height if height else 0.0
        honest_tips = {a.node.state.canonical for a in self.agents if not a.strategy.adversarial}
        honest_tips.add(state.canonical)
        window = chain[-(MOVING_AVERAGE_BLOCKS + 1):]
        mean_interval = None
        if len(window) >= 2:
            span = state.header(window[-1]).timestamp - state.header(window[0]).timestamp
            mean_interval = span / (len(window) - 1)
        canonical_set = set(chain)
        attempts = {}
        for a in self.agents:
            if a.strategy.kind is StrategyKind.PRIVATE_FORK:
                attempts[a.pool_id] = [
                    {
                        "start_slot": t.start_slot,
                        "end_slot": t.end_slot,
                        "released": t.released,
                        "private_blocks": len(t.private),
                        "canonical_blocks": sum(1 for b in t.private if b in canonical_set),
                        "utility": p.reward * sum(1 for b in t.private if b in canonical_set),
                    }
                    for t in a.attempts
                    if t.end_slot is not None
                ]
        return RunMetrics(
            seed=self.seed,
            slots=self.scenario.run.slots,
            blocks_by_pool={a.pool_id: a.produced for a in sorted(self.agents, key=lambda a: a.pool_id)},
            canonical_blocks_by_pool=canon,
            head_count_by_slot=self.head_counts,
            reorg_depth_histogram=dict(sorted(obs.reorgs.items())),
            competing_block_rate=eps,
            utilities_by_agent={pid: canon[pid] * p.reward for pid in ids},
            rejected_by_reason=dict(sorted(obs.rejected.items())),
            canonical_tip=state.canonical.hex(),
            canonical_height=height,
            canonical_trust=state.trust(state.canonical).value,
            honest_tips_agree=len(honest_tips) == 1,
            mean_block_interval=mean_interval,
            final_tau=state.header(state.canonical).target,
            max_reorg_depth_seen=max(obs.reorgs, default=0),
            unexplained_deep_reorgs=obs.unexplained_deep_reorgs,
            leader_slots_by_pool={a.pool_id: a.leader_slots for a in sorted(self.agents, key=lambda a: a.pool_id)},
            blocks_emitted_by_pool={a.pool_id: a.emitted for a in sorted(self.agents, key=lambda a: a.pool_id)},
            accepted_by_observer=obs.accepted,
            attempts_by_agent=attempts,
            series=self.series,
            trace=self.trace,
        )


def run_simulation(scenario: ScenarioConfig, seed: int, trace: bool = False) -> RunMetrics:
    """Run one seeded simulation; identical inputs give identical metrics."""
    return Simulation(scenario, seed, trace=trace).run()


# -- MEV fork revenue --------------------------------------------------------------------

MEV_FAMILIES = ("sparse-exponential", "exponential", "pareto")


def _draw(rng: np.random.Generator, family: str, size: tuple[int, int], q: float, shape: float) -> np.ndarray:
    if family == "sparse-exponential":
        hits = rng.random(size) < q
        return np.where(hits, rng.exponential(1.0 / q, size), 0.0)
    if family == "exponential":
        return rng.exponential(1.0, size)
    if family == "pareto":
        # Lomax scaled to unit mean
        return rng.pareto(shape, size) * (shape - 1.0)
    raise ValueError(f"unknown MEV family {family!r}; expected one of {MEV_FAMILIES}")


def mev_fork_revenue(
    k: int,
    family: str = "sparse-exponential",
    seed: int = 0,
    samples: int = 100_000,
    q: float = 0.01,
    shape: float = 2.5,
) -> float:
    """Monte Carlo estimate of E[max of k unit-mean revenue draws].

    The default family is a rare opportunity (probability ``q``) with an
    exponential payout of mean ``1/q``.  Its expected maximum grows close to
    linearly in ``k`` while ``k*q`` stays small.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    draws = _draw(rng, family, (samples, k), q, shape)
    return float(draws.max(axis=1).mean())


def expected_max_sparse_exponential(k: int, q: float = 0.01) -> float:
    """Closed form of the default family's expected maximum."""
    from math import comb

    total = 0.0
    harmonic = 0.0
    for n in range(1, k + 1):
        harmonic += 1.0 / n
        total += comb(k, n) * q**n * (1 - q) ** (k - n) * harmonic / q
    return total
