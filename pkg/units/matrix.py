"""
MX matrix extension: sub-tile configuration, tile loads/stores and the
tile multiply-accumulate that runs through the near-FPU accumulator buffer.

Every mxfmacc moves its operands and accumulator VRF->buffer once; the k'
inner products then run buffer->FPU with A elements broadcast across F-wide
groups of the B row.
"""

import logging

import numpy as np

from isa import grant_tile_dim
from machine import BufferOverflow, CsrUnset, OverlapError, SimulationError, VlMismatch
from model_core import Boundary

logger = logging.getLogger("mxsim.units.matrix")


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def _settile(dim):
    def handler(state, instruction):
        rd, request = instruction.operands
        granted = grant_tile_dim(state.operand_value(request), dim, state.cfg)
        if getattr(state.csrs, f"tile_{dim}") != granted:
            state.flush_buffer()
        setattr(state.csrs, f"tile_{dim}", granted)
        state.set_x(rd.value, granted)
    return handler


def _tiles(state):
    csrs = state.csrs
    if not csrs.tiles_set:
        raise CsrUnset("sub-tile sizes are not configured (msettilem/n/k first)")
    return csrs.tile_m, csrs.tile_n, csrs.tile_k


def _load(state, instruction, rows, cols, term):
    vd, src, stride = instruction.operands
    elements = rows * cols
    values = state.memory.view(state.address(src), rows, cols, state.operand_value(stride), state.dtype)
    state.vgroup(vd.value, elements)[:] = values.reshape(-1)
    state.ledger.add(Boundary.MEM_VRF, **{term: elements})
    state.timing.vector("vlsu", _ceil_div(elements, state.cfg.mem_ports),
                        writes=state.group_regs(vd.value, elements))


def mld_a(state, instruction):
    m_p, _, k_p = _tiles(state)
    _load(state, instruction, m_p, k_p, "a")


def mld_b(state, instruction):
    _, n_p, k_p = _tiles(state)
    _load(state, instruction, k_p, n_p, "b")


def mst_c(state, instruction):
    m_p, n_p, _ = _tiles(state)
    vs, dst, stride = instruction.operands
    row_stride = state.operand_value(stride)
    row_bytes = n_p * state.cfg.width
    if m_p > 1 and row_stride < row_bytes:
        raise OverlapError(f"row stride {row_stride} B overlaps {row_bytes} B rows")
    elements = m_p * n_p
    target = state.memory.view(state.address(dst), m_p, n_p, row_stride, state.dtype)
    target[...] = state.vgroup(vs.value, elements).reshape(m_p, n_p)
    state.ledger.add(Boundary.MEM_VRF, d=elements)
    state.timing.vector("vlsu", _ceil_div(elements, state.cfg.mem_ports),
                        reads=state.group_regs(vs.value, elements))


def _tile_macc(state, instruction):
    m_p, n_p, k_p = _tiles(state)
    vd, vs1, vs2 = instruction.operands
    cfg = state.cfg
    if state.csrs.vl != m_p * k_p:
        raise VlMismatch(f"vl={state.csrs.vl} but m'k'={m_p * k_p}")
    acc_bytes = m_p * n_p * cfg.width
    if acc_bytes > cfg.buffer_bytes:
        raise BufferOverflow(f"{m_p}x{n_p} accumulator needs {acc_bytes} B, buffer holds {cfg.buffer_bytes} B")

    a = state.vgroup(vs1.value, m_p * k_p).reshape(m_p, k_p)
    b = state.vgroup(vs2.value, k_p * n_p).reshape(k_p, n_p)
    out = state.vgroup(vd.value, m_p * n_p)
    acc = state.tile_buffer[:acc_bytes].view(state.dtype).reshape(m_p, n_p)

    resident = cfg.buffer_resident_accumulation
    if resident and state.buffer_owner is not None and state.buffer_owner != vd.value:
        state.flush_buffer()
    if not (resident and state.buffer_owner == vd.value):
        acc[...] = out.reshape(m_p, n_p)
        state.ledger.add(Boundary.VRF_BUF, cd=m_p * n_p)

    with np.errstate(over="ignore"):
        for p in range(k_p):
            acc[...] = acc + np.outer(a[:, p], b[p, :])
    out[:] = acc.reshape(-1)

    if resident:
        state.buffer_owner = vd.value
        state.ledger.add(Boundary.VRF_BUF, a=m_p * k_p, b=k_p * n_p)
    else:
        state.ledger.add(Boundary.VRF_BUF, a=m_p * k_p, b=k_p * n_p, d=m_p * n_p)

    fpus = cfg.fpus
    macs = m_p * n_p * k_p
    state.ledger.add(Boundary.BUF_FPU, a=m_p * k_p * _ceil_div(n_p, fpus),
                     b=k_p * n_p * _ceil_div(m_p, fpus), cd=macs, d=macs)
    state.macs += macs
    acc_regs = list(state.group_regs(vd.value, m_p * n_p))
    reads = list(state.group_regs(vs1.value, m_p * k_p)) + list(state.group_regs(vs2.value, k_p * n_p)) + acc_regs
    state.timing.vector("vfu", _ceil_div(macs, fpus), reads=reads, writes=acc_regs)


def mxfmacc(state, instruction):
    if not state.cfg.element.is_float:
        raise SimulationError("mxfmacc needs a floating-point element type")
    _tile_macc(state, instruction)


def mxmacc(state, instruction):
    if state.cfg.element.is_float:
        raise SimulationError("mxmacc needs an integer element type")
    _tile_macc(state, instruction)


def register(registry):
    registry.register("msettilem", _settile("m"))
    registry.register("msettilen", _settile("n"))
    registry.register("msettilek", _settile("k"))
    registry.register("mld.a", mld_a)
    registry.register("mld.b", mld_b)
    registry.register("mst.c", mst_c)
    registry.register("mxfmacc", mxfmacc)
    registry.register("mxmacc", mxmacc)
    logger.debug("Registered matrix unit")
