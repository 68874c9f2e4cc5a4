"""Pool and delegation ledger with pledge-weighted election weights.

Amounts are integer coin units.  Stake fractions handed to leader election
are 64.64 raw fractions of the total *final* supply.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional

from .fixedpoint import ONE, Number

DEFAULT_K = 1000
DEFAULT_A = "0.07537578"
DEFAULT_COOLDOWN_BLOCKS = 7200
MIN_PLEDGE_FRACTION = Fraction(1, 10_000)  # 0.01% of supply


class StakingError(ValueError):
    pass


class PledgeTooSmall(StakingError):
    pass


class DuplicatePool(StakingError):
    pass


class UnknownPool(StakingError):
    pass


class InvalidAmount(StakingError):
    pass


class PoolInactive(StakingError):
    pass


def _exact(x: Number) -> Fraction:
    return Fraction(repr(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class IncentiveParams:
    total_final_supply: int
    k: int = DEFAULT_K
    a: Number = DEFAULT_A
    min_pledge: Optional[int] = None

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.total_final_supply <= 0:
            raise ValueError("total_final_supply must be positive")
        if self.a_exact < 0:
            raise ValueError("a must be >= 0")
        if self.min_pledge is None:
            mp = self.total_final_supply * MIN_PLEDGE_FRACTION
            object.__setattr__(self, "min_pledge", mp.numerator // mp.denominator)

    @property
    def a_exact(self) -> Fraction:
        return _exact(self.a)

    @property
    def z(self) -> Fraction:
        """Saturation size as a fraction of the final supply."""
        return Fraction(1, self.k)

    @property
    def saturation_cap(self) -> int:
        return self.total_final_supply // self.k


def saturate(params: IncentiveParams, pool_stake: int) -> int:
    return min(pool_stake, params.saturation_cap)


def effective_weight_exact(params: IncentiveParams, s: Fraction, sigma: Fraction) -> Fraction:
    """Pledge-adjusted pool weight for pledge ``s`` and pool stake ``sigma``.

    Both arguments are fractions of the final supply; each is capped at the
    saturation size ``z`` first.  ``a = 0`` returns ``sigma`` unchanged.
    """
    if s < 0 or sigma < 0:
        raise ValueError("stake fractions must be non-negative")
    if s > sigma:
        raise ValueError("pledge cannot exceed pool stake")
    a, z = params.a_exact, params.z
    sig = min(sigma, z)
    s = min(s, z)
    return (sig + s * a * (sig - s * (z - sig) / z) / z) / (1 + a)


def effective_weight(params: IncentiveParams, s: int, sigma: int) -> int:
    """64.64 version of :func:`effective_weight_exact`, rounded down once."""
    w = effective_weight_exact(params, Fraction(s, ONE), Fraction(sigma, ONE))
    return w.numerator * ONE // w.denominator


def supply_fraction(amount: int, supply: int) -> int:
    return amount * ONE // supply


class PoolStatus(enum.Enum):
    ACTIVE = "active"
    DECOMMISSIONING = "decommissioning"


@dataclass
class Deposit:
    delegator: str
    amount: int
    eligible_epoch: int


@dataclass
class Pool:
    pool_id: str
    pledge: int
    fee: Fraction = Fraction(0)
    owner: str = ""
    deposits: list[Deposit] = field(default_factory=list)
    status: PoolStatus = PoolStatus.ACTIVE
    cooldown_end_block: Optional[int] = None
    eligible_epoch: int = 0

    def __post_init__(self) -> None:
        self.owner = self.owner or self.pool_id
        self.fee = _exact(self.fee)

    @property
    def delegations(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for d in self.deposits:
            out[d.delegator] = out.get(d.delegator, 0) + d.amount
        return out

    @property
    def total_stake(self) -> int:
        return self.pledge + sum(d.amount for d in self.deposits)

    def stake_at(self, epoch: int) -> int:
        """Stake that counts for election in ``epoch``."""
        if self.status is not PoolStatus.ACTIVE or epoch < self.eligible_epoch:
            return 0
        return self.pledge + sum(d.amount for d in self.deposits if d.eligible_epoch <= epoch)


@dataclass
class Withdrawal:
    owner: str
    amount: int
    unlock_block: int


@dataclass
class StakeLedger:
    params: IncentiveParams
    cooldown_blocks: int = DEFAULT_COOLDOWN_BLOCKS
    pools: dict[str, Pool] = field(default_factory=dict)
    pending_withdrawals: list[Withdrawal] = field(default_factory=list)
    balances: dict[str, int] = field(default_factory=dict)

    @property
    def total_supply(self) -> int:
        return self.params.total_final_supply

    @property
    def total_network_stake(self) -> int:
        return sum(p.total_stake for p in self.pools.values() if p.status is PoolStatus.ACTIVE)

    def pool(self, pool_id: str) -> Pool:
        try:
            return self.pools[pool_id]
        except KeyError:
            raise UnknownPool(pool_id) from None

    def _active(self, pool_id: str) -> Pool:
        pool = self.pool(pool_id)
        if pool.status is not PoolStatus.ACTIVE:
            raise PoolInactive(f"pool {pool_id} is decommissioning")
        return pool

    # -- operations ------------------------------------------------------------
    def create_pool(
        self,
        pool_id: str,
        pledge: int,
        fee: Number = 0,
        owner: str = "",
        epoch: int = 0,
        genesis: bool = False,
    ) -> "StakeLedger":
        """Register a pool; it is electable from the next epoch (or at once at genesis)."""
        if pool_id in self.pools:
            raise DuplicatePool(pool_id)
        if pledge < self.params.min_pledge:
            raise PledgeTooSmall(f"pledge {pledge} < minimum {self.params.min_pledge}")
        fee = _exact(fee)
        if not 0 <= fee <= 1:
            raise StakingError("fee must lie in [0, 1]")
        self.pools[pool_id] = Pool(
            pool_id, pledge, fee, owner, eligible_epoch=epoch if genesis else epoch + 1
        )
        return self

    def increase_pledge(self, pool_id: str, amount: int) -> "StakeLedger":
        if amount <= 0:
            raise InvalidAmount("amount must be positive")
        self._active(pool_id).pledge += amount
        return self

    def delegate(
        self, pool_id: str, delegator: str, amount: int, epoch: int = 0, genesis: bool = False
    ) -> "StakeLedger":
        if amount <= 0:
            raise InvalidAmount("delegation must be positive")
        pool = self._active(pool_id)
        pool.deposits.append(Deposit(delegator, amount, epoch if genesis else epoch + 1))
        return self

    def undelegate(
        self,
        pool_id: str,
        delegator: str,
        current_block: int,
        amount: Optional[int] = None,
    ) -> "StakeLedger":
        """Move a delegation (all of it by default) into a cooling-down withdrawal."""
        pool = self.pool(pool_id)
        held = pool.delegations.get(delegator, 0)
        amount = held if amount is None else amount
        if amount <= 0 or held == 0:
            raise InvalidAmount(f"{delegator} has nothing delegated to {pool_id}")
        if amount > held:
            raise InvalidAmount(f"cannot undelegate {amount}, only {held} delegated")
        remaining = amount
        for dep in reversed(pool.deposits):
            if dep.delegator != delegator or remaining == 0:
                continue
            take = min(dep.amount, remaining)
            dep.amount -= take
            remaining -= take
        pool.deposits = [d for d in pool.deposits if d.amount > 0]
        self.pending_withdrawals.append(
            Withdrawal(delegator, amount, current_block + self.cooldown_blocks)
        )
        return self

    def decommission_pool(self, pool_id: str, current_block: int) -> "StakeLedger":
        pool = self._active(pool_id)
        unlock = current_block + self.cooldown_blocks
        pool.status = PoolStatus.DECOMMISSIONING
        pool.cooldown_end_block = unlock
        self.pending_withdrawals.append(Withdrawal(pool.owner, pool.pledge, unlock))
        for delegator, amount in pool.delegations.items():
            self.pending_withdrawals.append(Withdrawal(delegator, amount, unlock))
        pool.pledge = 0
        pool.deposits = []
        return self

    def release_withdrawals(self, current_block: int) -> list[Withdrawal]:
        """Pay out withdrawals whose cooldown has ended."""
        due = [w for w in self.pending_withdrawals if w.unlock_block <= current_block]
        self.pending_withdrawals = [w for w in self.pending_withdrawals if w.unlock_block > current_block]
        for w in due:
            self.balances[w.owner] = self.balances.get(w.owner, 0) + w.amount
        return due

    # -- queries -----------------------------------------------------------------
    def relative_stake(self, pool_id: str) -> Fraction:
        pool = self.pool(pool_id)
        total = self.total_network_stake
        if total == 0:
            raise StakingError("network has no stake")
        return Fraction(pool.total_stake if pool.status is PoolStatus.ACTIVE else 0, total)

    def election_weight(self, pool_id: str, epoch: int = 0) -> int:
        """64.64 election weight of a pool for ``epoch``."""
        pool = self.pool(pool_id)
        stake = pool.stake_at(epoch)
        if stake == 0:
            return 0
        supply = self.total_supply
        pledge = min(pool.pledge, stake)
        w = effective_weight_exact(self.params, Fraction(pledge, supply), Fraction(stake, supply))
        return w.numerator * ONE // w.denominator

    def election_weights(self, epoch: int = 0) -> dict[str, int]:
        return {pid: self.election_weight(pid, epoch) for pid in sorted(self.pools)}

    def distribute_epoch_rewards(self, epoch_blocks: Mapping[str, int], r: int) -> dict[str, int]:
        """Split ``blocks * r`` per pool among owner and delegators; credits balances.

        The owner keeps ``floor(gross * fee)``; the rest is shared pro rata
        over pledge and delegations, rounding each delegator down and giving
        the dust to the owner.
        """
        payouts: dict[str, int] = {}

        def pay(account: str, amount: int) -> None:
            if amount:
                payouts[account] = payouts.get(account, 0) + amount

        for pool_id in sorted(epoch_blocks):
            blocks = epoch_blocks[pool_id]
            if blocks < 0:
                raise InvalidAmount("negative block count")
            gross = blocks * r
            if gross == 0:
                continue
            pool = self.pool(pool_id)
            fee = gross * pool.fee.numerator // pool.fee.denominator
            rest = gross - fee
            stake = pool.total_stake
            paid = 0
            if stake:
                for delegator, amount in sorted(pool.delegations.items()):
                    share = rest * amount // stake
                    pay(delegator, share)
                    paid += share
            pay(pool.owner, gross - paid)
        for account, amount in payouts.items():
            self.balances[account] = self.balances.get(account, 0) + amount
        return payouts

    # -- snapshot ------------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "params": {
                "total_final_supply": self.params.total_final_supply,
                "k": self.params.k,
                "a": str(self.params.a),
                "min_pledge": self.params.min_pledge,
            },
            "cooldown_blocks": self.cooldown_blocks,
            "pools": [
                {
                    "pool_id": p.pool_id,
                    "owner": p.owner,
                    "pledge": p.pledge,
                    "fee": str(p.fee),
                    "status": p.status.value,
                    "cooldown_end_block": p.cooldown_end_block,
                    "eligible_epoch": p.eligible_epoch,
                    "deposits": [
                        {"delegator": d.delegator, "amount": d.amount, "eligible_epoch": d.eligible_epoch}
                        for d in p.deposits
                    ],
                }
                for p in self.pools.values()
            ],
            "pending_withdrawals": [
                {"owner": w.owner, "amount": w.amount, "unlock_block": w.unlock_block}
                for w in self.pending_withdrawals
            ],
            "balances": dict(sorted(self.balances.items())),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "StakeLedger":
        params = IncentiveParams(**doc["params"])
        ledger = cls(params, cooldown_blocks=doc.get("cooldown_blocks", DEFAULT_COOLDOWN_BLOCKS))
        for p in doc.get("pools", []):
            ledger.pools[p["pool_id"]] = Pool(
                pool_id=p["pool_id"],
                pledge=p["pledge"],
                fee=Fraction(p.get("fee", "0")),
                owner=p.get("owner", ""),
                deposits=[Deposit(**d) for d in p.get("deposits", [])],
                status=PoolStatus(p.get("status", "active")),
                cooldown_end_block=p.get("cooldown_end_block"),
                eligible_epoch=p.get("eligible_epoch", 0),
            )
        ledger.pending_withdrawals = [Withdrawal(**w) for w in doc.get("pending_withdrawals", [])]
        ledger.balances = dict(doc.get("balances", {}))
        return ledger

    @classmethod
    def loads(cls, text: str) -> "StakeLedger":
        return cls.from_dict(json.loads(text))
