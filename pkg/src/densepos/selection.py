"""Density-based fork choice.

A chain earns ``block_trust`` per block and loses ``f(t) = 1 - e**(-alpha*t)``
for every maximal run of ``t`` empty slots between consecutive blocks.  Since
``f(t) < 1 <= block_trust`` a chain's trust can never go negative.

``alpha = 0`` degenerates to counting blocks; a large ``alpha`` charges
(almost) one full unit per gap regardless of its length.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from .fixedpoint import (
    FRAC_BITS,
    ONE,
    WIDE_BITS,
    WIDE_ONE,
    Number,
    exp_neg_wide,
    round_wide,
    to_fixed,
)

if TYPE_CHECKING:  # pragma: no cover
    from .chain import ChainState

log = logging.getLogger(__name__)

DEFAULT_ALPHA = "0.025"
DEFAULT_MAX_REORG_DEPTH = 1000
_WIDEN = WIDE_BITS - FRAC_BITS


@dataclass(frozen=True)
class SelectionParams:
    """Fork-choice tuning.

    ``alpha`` and ``block_trust`` accept any number and are stored as 64.64
    raw integers in ``alpha_raw`` / ``block_trust_raw``.
    """

    alpha: Number = DEFAULT_ALPHA
    block_trust: Number = 1
    max_reorg_depth: int = DEFAULT_MAX_REORG_DEPTH
    checkpoints: dict[int, bytes] = field(default_factory=dict)
    alpha_raw: int = field(init=False, repr=False)
    block_trust_raw: int = field(init=False, repr=False)

    def __post_init__(self) -> None:
        alpha_raw = to_fixed(self.alpha)
        trust_raw = to_fixed(self.block_trust)
        if alpha_raw < 0:
            raise ValueError("alpha must be >= 0")
        if trust_raw < ONE:
            # a single gap may cost up to (almost) 1 unit
            raise ValueError("block_trust must be >= 1")
        if self.max_reorg_depth < 1:
            raise ValueError("max_reorg_depth must be >= 1")
        object.__setattr__(self, "alpha_raw", alpha_raw)
        object.__setattr__(self, "block_trust_raw", trust_raw)
        object.__setattr__(self, "checkpoints", dict(self.checkpoints))

    @property
    def block_trust_wide(self) -> int:
        return self.block_trust_raw << _WIDEN

    @property
    def max_checkpoint_height(self) -> int:
        return max(self.checkpoints, default=-1)


@dataclass(frozen=True, order=True)
class ChainTrust:
    """Accumulated trust with 128 fraction bits; ``value`` is the 64.64 view."""

    wide: int

    @property
    def value(self) -> int:
        return round_wide(self.wide)

    def __float__(self) -> float:
        return self.wide / WIDE_ONE


def gap_penalty_wide(params: SelectionParams, t: int) -> int:
    if t < 0:
        raise ValueError("gap length must be >= 0")
    if t == 0 or params.alpha_raw == 0:
        return 0
    penalty = WIDE_ONE - exp_neg_wide(params.alpha_raw * t)
    return min(penalty, WIDE_ONE - 1)


def gap_penalty(params: SelectionParams, t: int) -> int:
    """Trust deducted for a run of ``t`` empty slots, as 64.64 raw."""
    return min(round_wide(gap_penalty_wide(params, t)), ONE - 1)


def weight(params: SelectionParams, t: int) -> int:
    """``e**(-alpha*t)`` as 64.64 raw; strictly decreasing in ``t`` for alpha > 0."""
    return round_wide(exp_neg_wide(params.alpha_raw * t))


def gaps_of(occupancy: Sequence[int | bool]) -> tuple[int, list[int]]:
    """Block count and inter-block gap lengths; trailing empty slots are ignored."""
    blocks = 0
    gaps = []
    run = 0
    for filled in occupancy:
        if filled:
            blocks += 1
            if run:
                gaps.append(run)
            run = 0
        else:
            run += 1
    return blocks, gaps


def chain_trust(params: SelectionParams, occupancy: Sequence[int | bool]) -> ChainTrust:
    """Trust of a chain given its per-slot occupancy after genesis."""
    blocks, gaps = gaps_of(occupancy)
    total = blocks * params.block_trust_wide
    for t in gaps:
        total -= gap_penalty_wide(params, t)
    return ChainTrust(total)


def extend_trust(params: SelectionParams, parent: ChainTrust, gap: int) -> ChainTrust:
    """Trust after appending one block ``gap`` empty slots past the parent."""
    return ChainTrust(parent.wide + params.block_trust_wide - gap_penalty_wide(params, gap))


# -- selection over a chain store -------------------------------------------------


@dataclass(frozen=True)
class TipReport:
    tip: str
    height: int
    trust: int
    eligible: bool
    reason: str = ""

    def as_record(self) -> dict:
        return {
            "tip": self.tip,
            "height": self.height,
            "trust": self.trust,
            "eligible": self.eligible,
            "reason": self.reason,
        }


def tip_eligibility(state: "ChainState", tip: bytes, params: SelectionParams) -> str:
    """Empty string if ``tip`` may become canonical, else the reason it may not."""
    if not state.checkpoint_consistent(tip):
        return "checkpoint-conflict"
    if state.height(tip) < params.max_checkpoint_height:
        return "checkpoint-missing"
    if state.height(tip) < state.finalized_height:
        return "below-finality"
    if state.ancestor_at(tip, state.finalized_height) != state.finalized_id:
        return "forks-below-finality"
    return ""


def select_chain(
    state: "ChainState",
    params: Optional[SelectionParams] = None,
    trace: Optional[list] = None,
) -> bytes:
    """Pick the eligible tip with most trust; ties go to the first-seen tip."""
    params = params or state.params
    best: Optional[bytes] = None
    best_key = None
    syncing = True
    for tip in state.tips:
        reason = tip_eligibility(state, tip, params)
        syncing = syncing and reason == "checkpoint-missing"
        trust = state.trust(tip)
        if trace is not None:
            trace.append(
                TipReport(tip.hex(), state.height(tip), trust.value, not reason, reason)
            )
        if reason:
            continue
        key = (trust.wide, -state.arrival(tip))
        if best_key is None or key > best_key:
            best, best_key = tip, key
    if best is None:
        # tips still short of the last checkpoint are normal while syncing
        (log.debug if syncing else log.warning)(
            "no eligible tip among %d; keeping canonical %s",
            len(state.tips),
            state.canonical.hex()[:12],
        )
        return state.canonical
    return best


def prune_finalized(state: "ChainState", params: Optional[SelectionParams] = None) -> "ChainState":
    """Advance finality behind the canonical tip and drop branches that fork below it."""
    params = params or state.params
    target = state.height(state.canonical) - params.max_reorg_depth
    if target > state.finalized_height:
        state.advance_finality(target)
    return state


def compare_tips(params: SelectionParams, occupancies: Iterable[Sequence[int]]) -> int:
    """Index of the winning occupancy string (first wins ties)."""
    best, best_trust = -1, None
    for i, occ in enumerate(occupancies):
        trust = chain_trust(params, occ).wide
        if best_trust is None or trust > best_trust:
            best, best_trust = i, trust
    return best
