"""Builders for hand-made block trees in tests."""

from densepos.chain import Block, ChainState, make_genesis
from densepos.forkchoice import fixture_block
from densepos.selection import SelectionParams


def branch(parent: Block, slots, label="x"):
    out = []
    for s in slots:
        parent = fixture_block(parent, s, label)
        out.append(parent)
    return out


def state_with(params: SelectionParams = None, seed=b"t"):
    g = make_genesis(target=1, seed=seed)
    return g, ChainState(g, params or SelectionParams())


def occupancy_to_slots(occ):
    return [i + 1 for i, x in enumerate(occ) if x]
