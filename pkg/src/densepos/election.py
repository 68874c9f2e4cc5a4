"""Slot leadership, per-block threshold retargeting and epoch randomness."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Iterable, Optional, Union

from . import crypto
from .fixedpoint import FRAC_BITS, ONE

if TYPE_CHECKING:  # pragma: no cover
    from .chain import ChainState

SLOTS_PER_EPOCH = 432_000  # 5 days of one-second slots
TARGET_BLOCK_INTERVAL = 120
RETARGET_WINDOW = 100
CLAMP_DIVISOR = 1000


@dataclass(frozen=True)
class RetargetParams:
    t_target: int = TARGET_BLOCK_INTERVAL
    window: int = RETARGET_WINDOW
    clamp_divisor: int = CLAMP_DIVISOR
    enabled: bool = True

    def __post_init__(self) -> None:
        if self.t_target <= 0 or self.window < 2 or self.clamp_divisor <= 0:
            raise ValueError(f"invalid retarget parameters {self}")


@dataclass(frozen=True)
class EpochSchedule:
    epoch_index: int
    randomness: bytes
    slots_per_epoch: int = SLOTS_PER_EPOCH
    target_block_interval: int = TARGET_BLOCK_INTERVAL

    def contains(self, slot: int) -> bool:
        return epoch_of(slot, self.slots_per_epoch) == self.epoch_index


def epoch_of(slot: int, slots_per_epoch: int = SLOTS_PER_EPOCH) -> int:
    return slot // slots_per_epoch


def leader_threshold(tau: int, weight: int) -> int:
    """VRF outputs strictly below this value win; ``1 << 64`` means always."""
    return min((tau * weight) >> FRAC_BITS, ONE)


def is_slot_leader(
    keypair: crypto.KeyPair,
    pool_id: str,
    weight: int,
    slot: int,
    randomness: bytes,
    tau: int,
) -> Optional[crypto.VrfEvaluation]:
    """The VRF evaluation if the pool leads ``slot``, else None.

    ``weight`` is the pool's election weight as a 64.64 fraction of supply
    and ``tau`` the 64.64 threshold valid for the slot.
    """
    if weight <= 0:
        return None
    message = crypto.vrf_input(randomness, slot, pool_id)
    output = crypto.vrf_output(keypair, message)
    if output < leader_threshold(tau, weight):
        return crypto.vrf_prove(keypair, message, output)
    return None


def adjust_threshold(
    tau_prev: int,
    t_actual: Union[int, Fraction],
    t_target: Union[int, Fraction],
    clamp_divisor: int = CLAMP_DIVISOR,
) -> int:
    """One retarget step, moving at most ``tau_prev / clamp_divisor``.

    Slow blocks (``t_actual > t_target``) raise the threshold.  All values
    are exact; the unclamped result is ``floor(tau_prev * t_actual / t_target)``.
    """
    if tau_prev <= 0:
        raise ValueError("tau_prev must be positive")
    t_actual = Fraction(t_actual)
    t_target = Fraction(t_target)
    if t_actual <= 0 or t_target <= 0:
        raise ValueError("block times must be positive")
    d = tau_prev // clamp_divisor
    scaled = tau_prev * t_actual / t_target
    tau_new = scaled.numerator // scaled.denominator
    if tau_new < tau_prev - d:
        tau_new = tau_prev - d
    elif tau_new > tau_prev + d:
        tau_new = tau_prev + d
    return tau_new


def mean_block_time(timestamps: Iterable[int], t_target: int) -> Fraction:
    """Mean interval over the given (newest-first or oldest-first) timestamps."""
    ts = list(timestamps)
    if len(ts) < 2:
        return Fraction(t_target)
    return Fraction(abs(ts[0] - ts[-1]), len(ts) - 1)


def calibrate_tau(weights: Iterable[int], t_target: int, slot_seconds: int = 1) -> int:
    """Threshold giving ``slot_seconds / t_target`` expected leaders per slot."""
    total = sum(weights)
    if total <= 0:
        raise ValueError("cannot calibrate tau without stake")
    return (ONE * ONE * slot_seconds) // (t_target * total)


def child_target(state: "ChainState", parent_id: bytes, params: RetargetParams) -> int:
    """Threshold carried by any block built on ``parent_id``.

    Uses the parent's own target adjusted by the mean interval of the last
    ``params.window`` blocks ending at the parent (genesis included).
    """
    key = ("target", parent_id)
    hit = state.memo.get(key)
    if hit is not None:
        return hit
    tau_prev = state.header(parent_id).target
    if not params.enabled:
        state.memo[key] = tau_prev
        return tau_prev
    stamps = []
    for bid in state.ancestors(parent_id):
        stamps.append(state.header(bid).timestamp)
        if len(stamps) == params.window:
            break
    t_actual = mean_block_time(stamps, params.t_target)
    tau = adjust_threshold(tau_prev, t_actual, params.t_target, params.clamp_divisor)
    state.memo[key] = tau
    return tau


def _last_block_before_epoch(
    state: "ChainState", block_id: bytes, epoch: int, slots_per_epoch: int
) -> bytes:
    """Newest ancestor of ``block_id`` (inclusive) whose slot lies in an epoch <= ``epoch``."""
    cur = block_id
    while epoch_of(state.header(cur).slot, slots_per_epoch) > epoch:
        cur = state.parent(cur)
    return cur


def epoch_randomness(
    state: "ChainState",
    parent_id: bytes,
    epoch_index: int,
    genesis_seed: bytes,
    slots_per_epoch: int = SLOTS_PER_EPOCH,
) -> bytes:
    """Randomness for ``epoch_index`` as seen by a block built on ``parent_id``.

    Epochs 0 and 1 use the genesis seed; later epochs hash the VRF outputs of
    the blocks of epoch ``epoch_index - 2`` on the parent's branch.
    """
    if epoch_index < 2:
        return genesis_seed
    outer = ("randomness-for", parent_id, epoch_index)
    hit = state.memo.get(outer)
    if hit is not None:
        return hit
    source = epoch_index - 2
    tail = _last_block_before_epoch(state, parent_id, source, slots_per_epoch)
    key = ("randomness", tail, source)
    hit = state.memo.get(key)
    if hit is not None:
        state.memo[outer] = hit
        return hit
    outputs = []
    cur: Optional[bytes] = tail
    while cur is not None and cur != state.genesis_id:
        h = state.header(cur)
        if epoch_of(h.slot, slots_per_epoch) != source:
            break
        outputs.append(h.vrf_output.to_bytes(8, "little"))
        cur = state.parent(cur)
    outputs.reverse()
    digest = crypto.hash(b"".join(outputs))
    state.memo[key] = state.memo[outer] = digest
    return digest
