"""Hand-built block trees for checking fork choice on small, named branches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .chain import Block, BlockHeader, Body, ChainState, body_roots, make_genesis
from .scenario import ScenarioConfig
from .selection import SelectionParams, TipReport, select_chain


def fixture_block(parent: Block, slot: int, label: str) -> Block:
    """A structurally valid block at ``slot``; selection never looks at signatures."""
    body = Body(transactions=(f"{label}:{slot}".encode(),))
    root, wroot = body_roots(body)
    header = BlockHeader(
        signature=b"",
        vrf_output=0,
        vrf_proof=b"",
        pool_id=label,
        target=parent.header.target,
        prev_id=parent.id,
        timestamp=parent.header.timestamp + (slot - parent.header.slot),
        slot=slot,
        merkle_root=root,
        witness_merkle_root=wroot,
    )
    return Block(header, body)


@dataclass
class ForkChoiceResult:
    canonical_chain: str
    canonical_tip: str
    canonical_after_extra: Optional[str]
    trust_by_chain: dict[str, int]
    trust_after_extra: dict[str, int]
    reports: list[TipReport] = field(default_factory=list)

    def records(self) -> list[dict]:
        out = [
            {
                "type": "fork_choice",
                "canonical_chain": self.canonical_chain,
                "canonical_after_extra": self.canonical_after_extra,
                "trust_by_chain": self.trust_by_chain,
                "trust_after_extra": self.trust_after_extra,
                "canonical_tip": self.canonical_tip,
            }
        ]
        out.extend({"type": "tip", **r.as_record()} for r in self.reports)
        return out


def _build_branches(scenario: ScenarioConfig) -> tuple[Block, dict[str, list[Block]], dict[str, list[Block]]]:
    genesis = make_genesis(target=1, timestamp=0, seed=scenario.name.encode())
    main: dict[str, list[Block]] = {"genesis": [genesis]}
    extra: dict[str, list[Block]] = {}
    for spec in scenario.fork_choice.chains:
        parent_chain = main[spec.parent]
        if not 0 <= spec.fork_height < len(parent_chain):
            raise ValueError(f"chain {spec.name}: fork height {spec.fork_height} not on {spec.parent}")
        # a branch shares its parent's blocks up to the fork height
        blocks = list(parent_chain[: spec.fork_height + 1])
        for slot in spec.slots:
            blocks.append(fixture_block(blocks[-1], slot, spec.name))
        main[spec.name] = blocks
        tail = [blocks[-1]]
        for slot in spec.extra:
            tail.append(fixture_block(tail[-1], slot, spec.name))
        extra[spec.name] = tail[1:]
    return genesis, main, extra


def run_fork_choice(scenario: ScenarioConfig) -> ForkChoiceResult:
    """Connect every branch in file order, then the ``extra`` blocks, and report the winners."""
    fc = scenario.fork_choice
    genesis, main, extra = _build_branches(scenario)
    checkpoints = dict(scenario.checkpoints)
    if fc.checkpoint is not None:
        name, height = fc.checkpoint
        checkpoints[height] = main[name][height].id
    p = scenario.protocol
    params = SelectionParams(
        alpha=p.alpha, block_trust=p.block_trust, max_reorg_depth=p.max_reorg_depth, checkpoints=checkpoints
    )
    state = ChainState(genesis, params)
    names = [c.name for c in fc.chains]

    def winner() -> str:
        owner = state.header(state.canonical).pool_id
        return owner if owner in names else "genesis"

    def trusts() -> dict[str, int]:
        out = {}
        for name in names:
            tip = (main[name] + extra[name])[-1]
            if tip.id not in state:
                tip = main[name][-1]
            out[name] = state.trust(tip.id).value
        return out

    for name in names:
        for block in main[name][1:]:
            state.connect(block)
    first, first_trust = winner(), trusts()
    after, after_trust = None, {}
    if any(extra.values()):
        for name in names:
            for block in extra[name]:
                state.connect(block)
        after, after_trust = winner(), trusts()
    reports: list[TipReport] = []
    select_chain(state, trace=reports)
    return ForkChoiceResult(first, state.canonical.hex(), after, first_trust, after_trust, reports)
