"""RVV-style vector subset used by the scalar-vector baseline kernel."""

import logging

import numpy as np

from machine import SimulationError, VlUnset
from model_core import Boundary

logger = logging.getLogger("mxsim.units.vector")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _vl(state) -> int:
    if state.csrs.vl <= 0:
        raise VlUnset("vector length is not configured (vsetvl first)")
    return state.csrs.vl


def vsetvl(state, instruction):
    """Grant vl = min(AVL, VLMAX at the largest LMUL) and pick the smallest LMUL holding it."""
    rd, avl = instruction.operands
    requested = state.operand_value(avl)
    granted = max(0, min(requested, state.cfg.vlmax()))
    state.csrs.vl = granted
    state.csrs.lmul = state.cfg.group_regs(granted) if granted else 1
    state.set_x(rd.value, granted)


def vle(state, instruction):
    vd, src = instruction.operands
    vl = _vl(state)
    values = state.memory.view(state.address(src), 1, vl, vl * state.cfg.width, state.dtype)
    state.vgroup(vd.value, vl)[:] = values[0]
    state.ledger.add(Boundary.MEM_VRF, b=vl)
    state.timing.vector("vlsu", _ceil_div(vl, state.cfg.mem_ports), writes=state.group_regs(vd.value, vl))


def vlse(state, instruction):
    vd, src, stride = instruction.operands
    vl = _vl(state)
    values = state.memory.view(state.address(src), vl, 1, state.operand_value(stride), state.dtype)
    state.vgroup(vd.value, vl)[:] = values[:, 0]
    state.ledger.add(Boundary.MEM_VRF, b=vl)
    state.timing.vector("vlsu", _ceil_div(vl, state.cfg.mem_ports), writes=state.group_regs(vd.value, vl))


def vse(state, instruction):
    vs, dst = instruction.operands
    vl = _vl(state)
    target = state.memory.view(state.address(dst), 1, vl, vl * state.cfg.width, state.dtype)
    target[0] = state.vgroup(vs.value, vl)
    state.ledger.add(Boundary.MEM_VRF, d=vl)
    state.timing.vector("vlsu", _ceil_div(vl, state.cfg.mem_ports), reads=state.group_regs(vs.value, vl))


def _scalar_vector_macc(state, vd, scalar, vs2):
    vl = _vl(state)
    acc = state.vgroup(vd.value, vl)
    state.broadcast_reg = state.dtype.type(scalar)
    with np.errstate(over="ignore"):
        products = state.broadcast_reg * state.vgroup(vs2.value, vl)
        acc[:] = acc + products
    fpus = state.cfg.fpus
    state.ledger.add(Boundary.VRF_FPU, b=vl, cd=vl, d=vl)
    state.ledger.add(Boundary.SRF_FPU, a=_ceil_div(vl, fpus))
    state.macs += vl
    regs = list(state.group_regs(vd.value, vl))
    state.timing.vector("vfu", _ceil_div(vl, fpus),
                        reads=regs + list(state.group_regs(vs2.value, vl)), writes=regs)


def vfmacc_vf(state, instruction):
    vd, fs, vs2 = instruction.operands
    if not state.cfg.element.is_float:
        raise SimulationError("vfmacc.vf needs a floating-point element type")
    _scalar_vector_macc(state, vd, state.f[fs.value], vs2)


def vmacc_vx(state, instruction):
    vd, rs, vs2 = instruction.operands
    if state.cfg.element.is_float:
        raise SimulationError("vmacc.vx needs an integer element type")
    _scalar_vector_macc(state, vd, np.array(state.x[rs.value]).astype(np.int32), vs2)


def vmv_zero(state, instruction):
    vd = instruction.operands[0]
    vl = _vl(state)
    state.vgroup(vd.value, vl)[:] = 0
    state.timing.vector("vfu", _ceil_div(vl, state.cfg.fpus), writes=state.group_regs(vd.value, vl))


def register(registry):
    registry.register("vsetvl", vsetvl)
    registry.register("vle", vle)
    registry.register("vlse", vlse)
    registry.register("vse", vse)
    registry.register("vfmacc.vf", vfmacc_vf)
    registry.register("vmacc.vx", vmacc_vx)
    registry.register("vmv.zero", vmv_zero)
    logger.debug("Registered vector unit")
