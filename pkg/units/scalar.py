"""Scalar core: integer arithmetic, scalar operand loads and loop control."""

import logging

import numpy as np

from model_core import Boundary

logger = logging.getLogger("mxsim.units.scalar")


def li(state, instruction):
    rd, value = instruction.operands
    state.set_x(rd.value, value.value)


def add(state, instruction):
    rd, rs1, rs2 = instruction.operands
    state.set_x(rd.value, state.x[rs1.value] + state.x[rs2.value])


def addi(state, instruction):
    rd, rs1, value = instruction.operands
    state.set_x(rd.value, state.x[rs1.value] + value.value)


def mv(state, instruction):
    rd, rs = instruction.operands
    state.set_x(rd.value, state.x[rs.value])


def fld(state, instruction):
    """Load one A element into the scalar register file (booked as MEM->VRF A traffic)."""
    fd, src = instruction.operands
    state.f[fd.value] = state.memory.read_scalar(state.address(src), state.dtype)
    state.ledger.add(Boundary.MEM_VRF, a=1)


def lw(state, instruction):
    rd, src = instruction.operands
    state.set_x(rd.value, int(state.memory.read_scalar(state.address(src), np.int32)))
    state.ledger.add(Boundary.MEM_VRF, a=1)


def bnez(state, instruction):
    rs, target = instruction.operands
    if state.x[rs.value] != 0:
        return state.labels[target.label]
    return None


def bne(state, instruction):
    rs1, rs2, target = instruction.operands
    if state.x[rs1.value] != state.x[rs2.value]:
        return state.labels[target.label]
    return None


def j(state, instruction):
    return state.labels[instruction.operands[0].label]


def register(registry):
    for name, func in (("li", li), ("add", add), ("addi", addi), ("mv", mv), ("fld", fld),
                       ("lw", lw), ("bnez", bnez), ("bne", bne), ("j", j)):
        registry.register(name, func)
    logger.debug("Registered scalar unit")
