"""Scenario documents: TOML in, validated :class:`ScenarioConfig` out."""

from __future__ import annotations

import re
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .staking import DEFAULT_A, DEFAULT_COOLDOWN_BLOCKS, DEFAULT_K

KINDS = ("simulation", "fork_choice", "ne_sweep")
STRATEGIES = ("honest", "private_fork", "equivocator", "equivocator_kes")
LATENCY_MODES = ("constant", "uniform")


class ScenarioError(ValueError):
    """Invalid scenario document; the message names the file and line when known."""


@dataclass
class ProtocolParams:
    t_target: int = 120
    slots_per_epoch: int = 432_000
    alpha: str = "0.025"
    block_trust: int = 1
    max_reorg_depth: int = 1000
    k: int = DEFAULT_K
    a: str = DEFAULT_A
    min_pledge: Optional[int] = None
    cooldown_blocks: int = DEFAULT_COOLDOWN_BLOCKS
    reward: int = 1
    total_supply: int = 400_000_000
    max_block_size: int = 1_000_000
    retarget: bool = True
    retarget_window: int = 100
    clamp_divisor: int = 1000
    tau_scale: str = "1"
    kes: bool = False
    kes_period_length: int = 1


@dataclass
class NetworkParams:
    delta: int = 0
    latency_mode: str = "constant"


@dataclass
class AgentSpec:
    id: str
    pledge: int
    delegations: dict[str, int] = field(default_factory=dict)
    fee: str = "0"
    strategy: str = "honest"
    target_length: int = 2
    k: int = 1

    @property
    def stake(self) -> int:
        return self.pledge + sum(self.delegations.values())


@dataclass
class RunParams:
    slots: int = 10_000
    seeds: list[int] = field(default_factory=lambda: [0])
    checkpoints: Optional[str] = None


@dataclass
class ChainSpec:
    """A hand-written branch for fork-choice fixtures."""

    name: str
    parent: str = "genesis"
    fork_height: int = 0
    slots: list[int] = field(default_factory=list)
    extra: list[int] = field(default_factory=list)


@dataclass
class ForkChoiceSpec:
    chains: list[ChainSpec] = field(default_factory=list)
    checkpoint: Optional[tuple[str, int]] = None
    expect: Optional[str] = None
    expect_after_extra: Optional[str] = None


@dataclass
class NeSweepSpec:
    phi_m: list[str] = field(default_factory=lambda: ["0.1", "0.2", "0.3", "0.4", "0.45", "0.55", "0.6"])
    slots: int = 200_000
    alpha: str = "0"


@dataclass
class ExpectSpec:
    """Assertions gated by ``--check``; unset fields are not checked."""

    canonical_chain: Optional[str] = None
    max_head_count: Optional[int] = None
    min_head_count: Optional[int] = None
    min_duplicate_rejections: Optional[int] = None
    all_duplicates_rejected: bool = False
    honest_tips_agree: Optional[bool] = None
    mean_interval_tolerance: Optional[str] = None


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    kind: str = "simulation"
    protocol: ProtocolParams = field(default_factory=ProtocolParams)
    network: NetworkParams = field(default_factory=NetworkParams)
    agents: list[AgentSpec] = field(default_factory=list)
    run: RunParams = field(default_factory=RunParams)
    checkpoints: dict[int, bytes] = field(default_factory=dict)
    fork_choice: Optional[ForkChoiceSpec] = None
    ne_sweep: Optional[NeSweepSpec] = None
    expect: ExpectSpec = field(default_factory=ExpectSpec)
    source: Optional[str] = None

    def validate(self) -> "ScenarioConfig":
        p, n = self.protocol, self.network
        _check(self.kind in KINDS, f"kind must be one of {KINDS}")
        _check(p.t_target > 0, "protocol.t_target must be positive")
        _check(p.slots_per_epoch > 0, "protocol.slots_per_epoch must be positive")
        _check(Fraction(p.alpha) >= 0, "protocol.alpha must be >= 0")
        _check(p.block_trust >= 1, "protocol.block_trust must be >= 1")
        _check(p.max_reorg_depth >= 1, "protocol.max_reorg_depth must be >= 1")
        _check(p.k >= 1, "protocol.k must be >= 1")
        _check(Fraction(p.a) >= 0, "protocol.a must be >= 0")
        _check(p.reward >= 0, "protocol.reward must be >= 0")
        _check(p.total_supply > 0, "protocol.total_supply must be positive")
        _check(p.cooldown_blocks >= 0, "protocol.cooldown_blocks must be >= 0")
        _check(p.retarget_window >= 2, "protocol.retarget_window must be >= 2")
        _check(p.clamp_divisor >= 1, "protocol.clamp_divisor must be >= 1")
        _check(Fraction(p.tau_scale) > 0, "protocol.tau_scale must be positive")
        _check(p.kes_period_length >= 1, "protocol.kes_period_length must be >= 1")
        _check(n.delta >= 0, "network.delta must be >= 0")
        _check(n.latency_mode in LATENCY_MODES, f"network.latency_mode must be one of {LATENCY_MODES}")
        _check(self.run.slots >= 0, "run.slots must be >= 0")
        _check(len(self.run.seeds) > 0, "run.seeds must not be empty")
        ids = [a.id for a in self.agents]
        _check(len(ids) == len(set(ids)), "agent ids must be unique")
        for a in self.agents:
            _check(a.strategy in STRATEGIES, f"agent {a.id}: strategy must be one of {STRATEGIES}")
            _check(a.pledge >= 0, f"agent {a.id}: pledge must be >= 0")
            _check(all(v > 0 for v in a.delegations.values()), f"agent {a.id}: delegations must be positive")
            _check(0 <= Fraction(a.fee) <= 1, f"agent {a.id}: fee must lie in [0, 1]")
            _check(a.k >= 1, f"agent {a.id}: k must be >= 1")
            _check(a.target_length >= 1, f"agent {a.id}: target_length must be >= 1")
        _check(
            sum(a.stake for a in self.agents) <= p.total_supply,
            "agent stakes exceed total supply",
        )
        if self.kind == "simulation":
            _check(bool(self.agents), "a simulation needs at least one agent")
        if self.kind == "fork_choice":
            _check(self.fork_choice is not None, "kind fork_choice needs a [fork_choice] table")
            names = {"genesis"}
            for c in self.fork_choice.chains:
                _check(c.parent in names, f"chain {c.name}: parent {c.parent!r} must be defined earlier")
                _check(c.name not in names, f"chain {c.name}: duplicate name")
                names.add(c.name)
            cp = self.fork_choice.checkpoint
            _check(cp is None or cp[0] in names, "fork_choice.checkpoint names an unknown chain")
        if self.kind == "ne_sweep":
            _check(self.ne_sweep is not None, "kind ne_sweep needs a [ne_sweep] table")
            _check(all(0 < Fraction(x) < 1 for x in self.ne_sweep.phi_m), "ne_sweep.phi_m values must lie in (0, 1)")
        return self


def _check(cond: bool, message: str) -> None:
    if not cond:
        raise ScenarioError(message)


# -- loading ----------------------------------------------------------------------


def _line_of(text: str, key: str) -> Optional[int]:
    pattern = re.compile(rf"^\s*\"?{re.escape(key)}\"?\s*=", re.M)
    m = pattern.search(text)
    if m is None:
        pattern = re.compile(rf"^\s*\[+\s*{re.escape(key)}\s*\]+", re.M)
        m = pattern.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _where(path: str, text: str, key: str) -> str:
    line = _line_of(text, key)
    return f"{path}:{line}" if line else path


def _build(cls, data: Any, section: str, path: str, text: str):
    if not isinstance(data, dict):
        raise ScenarioError(f"{_where(path, text, section)}: [{section}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        key = unknown[0]
        raise ScenarioError(f"{_where(path, text, key)}: unknown key {section}.{key}")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        value = data[f.name]
        if f.type in ("str", "Optional[str]") and isinstance(value, (int, float)):
            value = repr(value) if isinstance(value, float) else str(value)
        kwargs[f.name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ScenarioError(f"{_where(path, text, section)}: {exc}") from None


def parse_hex_id(token: str, where: str) -> bytes:
    if not re.fullmatch(r"(?:[0-9a-fA-F]{2})+", token):
        raise ScenarioError(f"{where}: malformed block id hex {token!r}")
    return bytes.fromhex(token)


def load_checkpoints(path: str | Path) -> dict[int, bytes]:
    """Read ``height hex-id`` pairs, one per line; ``#`` starts a comment."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read checkpoint file ({exc.strerror})") from None
    out: dict[int, bytes] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{path}:{lineno}"
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ScenarioError(f"{where}: expected '<height> <block-id-hex>'")
        try:
            height = int(parts[0])
        except ValueError:
            raise ScenarioError(f"{where}: bad height {parts[0]!r}") from None
        if height < 0:
            raise ScenarioError(f"{where}: height must be >= 0")
        if height in out:
            raise ScenarioError(f"{where}: duplicate checkpoint height {height}")
        out[height] = parse_hex_id(parts[1], where)
    return out


def scenario_from_dict(doc: dict, path: str = "<scenario>", text: str = "") -> ScenarioConfig:
    top = {"name", "kind", "protocol", "network", "agents", "run", "fork_choice", "ne_sweep", "expect"}
    unknown = sorted(set(doc) - top)
    if unknown:
        raise ScenarioError(f"{_where(path, text, unknown[0])}: unknown key {unknown[0]}")
    cfg = ScenarioConfig(
        name=str(doc.get("name", Path(path).stem)),
        kind=str(doc.get("kind", "simulation")),
        protocol=_build(ProtocolParams, doc.get("protocol", {}), "protocol", path, text),
        network=_build(NetworkParams, doc.get("network", {}), "network", path, text),
        run=_build(RunParams, doc.get("run", {}), "run", path, text),
        expect=_build(ExpectSpec, doc.get("expect", {}), "expect", path, text),
        source=path,
    )
    agents = doc.get("agents", [])
    if not isinstance(agents, list):
        raise ScenarioError(f"{_where(path, text, 'agents')}: agents must be an array of tables")
    cfg.agents = [_build(AgentSpec, a, "agents", path, text) for a in agents]
    if "fork_choice" in doc:
        fc = dict(doc["fork_choice"])
        chains = fc.pop("chains", [])
        spec = _build(ForkChoiceSpec, fc, "fork_choice", path, text)
        spec.chains = [_build(ChainSpec, c, "fork_choice.chains", path, text) for c in chains]
        if spec.checkpoint is not None:
            spec.checkpoint = (str(spec.checkpoint[0]), int(spec.checkpoint[1]))
        cfg.fork_choice = spec
    if "ne_sweep" in doc:
        sweep = _build(NeSweepSpec, doc["ne_sweep"], "ne_sweep", path, text)
        sweep.phi_m = [str(x) for x in sweep.phi_m]
        cfg.ne_sweep = sweep
    if cfg.run.checkpoints:
        cp_path = Path(cfg.run.checkpoints)
        if not cp_path.is_absolute() and path not in ("<scenario>", ""):
            cp_path = Path(path).parent / cp_path
        cfg.checkpoints = load_checkpoints(cp_path)
    try:
        return cfg.validate()
    except ScenarioError as exc:
        key = str(exc).split(" ", 1)[0].split(".")[-1].rstrip(":")
        raise ScenarioError(f"{_where(path, text, key)}: {exc}") from None


def load_scenario(path: str | Path) -> ScenarioConfig:
    """Parse and validate a TOML scenario; defaults follow the protocol constants."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario ({exc.strerror})") from None
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return scenario_from_dict(doc, str(path), text)
