#!/usr/bin/env python3
"""
Functional interpreter for MX programs.

Executes a Program against a MachineState with exact per-boundary transfer
counting, bit-reproducible arithmetic (each product and each sum rounded to the
element type, accumulation order fixed) and a coarse two-unit occupancy model
for cycles.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from isa import SIGNATURES, MxCsrState, OperandKind, Program, is_vector_unit
from model_core import (
    Boundary,
    BoundaryCounts,
    MachineConfig,
    MxSimError,
    TransferLedger,
)
from units import normalize_next_pc, registry

logger = logging.getLogger("mxsim.machine")

DEFAULT_STEP_LIMIT = 50_000_000


class SimulationError(MxSimError):
    pass


class OutOfBoundsAccess(SimulationError):
    pass


class MisalignedAccess(SimulationError):
    pass


class OverlapError(SimulationError):
    pass


class CsrUnset(SimulationError):
    pass


class VlMismatch(SimulationError):
    pass


class VlUnset(SimulationError):
    pass


class BufferOverflow(SimulationError):
    pass


class RegisterGroupError(SimulationError):
    pass


class StepLimitExceeded(SimulationError):
    pass


class ExecutionAborted(SimulationError):
    """An instruction failed; carries the trace position."""

    def __init__(self, pc: int, line: int, text: str, cause: Exception):
        self.pc = pc
        self.line = line
        self.text = text
        self.cause = cause
        super().__init__(f"pc {pc} (line {line}) '{text}': {type(cause).__name__}: {cause}")


class Memory:
    """Byte-addressed memory image with typed, strided matrix views."""

    def __init__(self, size: int = 0, data: Optional[np.ndarray] = None):
        if data is not None:
            self.data = np.ascontiguousarray(data, dtype=np.uint8)
        else:
            self.data = np.zeros(size, dtype=np.uint8)

    @classmethod
    def from_bytes(cls, raw: bytes, size: Optional[int] = None) -> "Memory":
        memory = cls(max(size or 0, len(raw)))
        memory.data[:len(raw)] = np.frombuffer(raw, dtype=np.uint8)
        return memory

    @property
    def size(self) -> int:
        return int(self.data.size)

    def view(self, addr: int, rows: int, cols: int, row_stride: int, dtype: np.dtype) -> np.ndarray:
        """rows x cols elements starting at addr, rows row_stride bytes apart."""
        dtype = np.dtype(dtype)
        width = dtype.itemsize
        if addr % width or row_stride % width:
            raise MisalignedAccess(f"address {addr:#x} / stride {row_stride} not aligned to {width} B")
        if rows > 1 and row_stride < 0:
            raise MisalignedAccess(f"negative row stride {row_stride}")
        last = addr + (rows - 1) * row_stride + cols * width if rows > 0 else addr
        if addr < 0 or last > self.size:
            raise OutOfBoundsAccess(f"access {addr:#x}..{last:#x} outside memory of {self.size} B")
        return np.ndarray((rows, cols), dtype=dtype, buffer=self.data, offset=addr, strides=(row_stride, width))

    def read_scalar(self, addr: int, dtype: np.dtype) -> Any:
        return self.view(addr, 1, 1, 0, dtype)[0, 0]

    def write_matrix(self, addr: int, values: np.ndarray, row_stride: Optional[int] = None) -> None:
        values = np.atleast_2d(values)
        stride = row_stride if row_stride is not None else values.shape[1] * values.dtype.itemsize
        self.view(addr, values.shape[0], values.shape[1], stride, values.dtype)[...] = values

    def read_matrix(self, addr: int, rows: int, cols: int, dtype: np.dtype, row_stride: Optional[int] = None) -> np.ndarray:
        stride = row_stride if row_stride is not None else cols * np.dtype(dtype).itemsize
        return self.view(addr, rows, cols, stride, dtype).copy()


class LedgerCounter:
    """Mutable four-term counters per boundary; frozen into a TransferLedger."""

    def __init__(self):
        self.terms: Dict[Boundary, List[int]] = {b: [0, 0, 0, 0] for b in Boundary}

    def add(self, boundary: Boundary, a: int = 0, b: int = 0, cd: int = 0, d: int = 0) -> None:
        terms = self.terms[boundary]
        terms[0] += a
        terms[1] += b
        terms[2] += cd
        terms[3] += d

    def freeze(self) -> TransferLedger:
        return TransferLedger(**{b.value: BoundaryCounts(*terms) for b, terms in self.terms.items()})


class Scoreboard:
    """Coarse timing: in-order single issue, one load/store unit, one functional unit.

    A vector instruction starts once issued, its unit is free and the registers it
    touches are ready. A fraction (1 - overlap) of every memory instruction also
    blocks the functional unit.
    """

    def __init__(self, cfg: MachineConfig):
        self.overlap = cfg.overlap
        self.issue = 0
        self.unit_free = {"vlsu": 0, "vfu": 0}
        self.write_ready = [0] * cfg.num_vregs
        self.read_done = [0] * cfg.num_vregs
        self.end = 0

    def scalar(self) -> None:
        self.issue += 1

    def vector(self, unit: str, occupancy: int, reads: Iterable[int] = (), writes: Iterable[int] = ()) -> None:
        reads = list(reads)
        writes = list(writes)
        start = max(self.issue, self.unit_free[unit])
        for r in reads:
            start = max(start, self.write_ready[r])
        for r in writes:
            start = max(start, self.write_ready[r], self.read_done[r])
        finish = start + occupancy
        self.unit_free[unit] = finish
        if unit == "vlsu" and self.overlap < 1.0:
            exposed = int(np.ceil((1.0 - self.overlap) * occupancy))
            self.unit_free["vfu"] = max(self.unit_free["vfu"], start + exposed)
        for r in writes:
            self.write_ready[r] = finish
        for r in reads:
            self.read_done[r] = max(self.read_done[r], finish)
        self.issue += 1
        self.end = max(self.end, finish)

    @property
    def cycles(self) -> int:
        return max(self.end, self.issue)


@dataclass
class MachineState:
    """Architectural state of one core plus its counters."""
    cfg: MachineConfig
    memory: Memory
    core_id: int = 0
    x: List[int] = field(default_factory=lambda: [0] * 32)
    f: List[Any] = field(default_factory=list)
    vrf: np.ndarray = None  # type: ignore[assignment]
    csrs: MxCsrState = field(default_factory=MxCsrState)
    tile_buffer: np.ndarray = None  # type: ignore[assignment]
    broadcast_reg: Any = 0
    ledger: LedgerCounter = field(default_factory=LedgerCounter)
    macs: int = 0
    buffer_owner: Optional[int] = None
    labels: Dict[str, int] = field(default_factory=dict)
    timing: Scoreboard = None  # type: ignore[assignment]

    def __post_init__(self):
        zero = self.dtype.type(0)
        if not self.f:
            self.f = [zero] * 32
        if self.vrf is None:
            self.vrf = np.zeros(self.cfg.num_vregs * self.cfg.vreg_bytes, dtype=np.uint8)
        if self.tile_buffer is None:
            self.tile_buffer = np.zeros(self.cfg.buffer_bytes, dtype=np.uint8)
        if self.timing is None:
            self.timing = Scoreboard(self.cfg)
        self.broadcast_reg = zero

    @property
    def dtype(self) -> np.dtype:
        return self.cfg.element.dtype

    def set_x(self, index: int, value: int) -> None:
        if index != 0:
            self.x[index] = int(value)

    def operand_value(self, operand) -> int:
        """Integer value of an XREG-or-immediate operand."""
        if operand.kind is OperandKind.IMM:
            return operand.value
        return self.x[operand.value]

    def address(self, operand) -> int:
        return self.x[operand.value] + operand.offset

    def group_regs(self, index: int, elements: int) -> range:
        group = self.cfg.group_regs(elements)
        if index % group or index + group > self.cfg.num_vregs:
            raise RegisterGroupError(f"v{index} cannot hold a {group}-register group of {elements} elements")
        return range(index, index + group)

    def vgroup(self, index: int, elements: int) -> np.ndarray:
        """Typed view of the first `elements` elements of the group starting at v<index>."""
        self.group_regs(index, elements)
        start = index * self.cfg.vreg_bytes
        return self.vrf[start:start + elements * self.cfg.width].view(self.dtype)

    def read_vreg(self, index: int, elements: int) -> np.ndarray:
        return self.vgroup(index, elements).copy()

    def flush_buffer(self) -> None:
        """Write the resident accumulator sub-tile back to the VRF."""
        if self.buffer_owner is None:
            return
        self.ledger.add(Boundary.VRF_BUF, d=self.csrs.tile_m * self.csrs.tile_n)
        logger.debug(f"core {self.core_id}: flushed buffer-resident v{self.buffer_owner}")
        self.buffer_owner = None

    def owner_touched(self, vregs: Sequence[int]) -> bool:
        if self.buffer_owner is None:
            return False
        owner = self.group_regs(self.buffer_owner, self.csrs.tile_m * self.csrs.tile_n)
        return any(r in owner for r in vregs)


@dataclass(frozen=True)
class RunReport:
    ledger: TransferLedger
    census: Dict[str, int]
    macs: int
    cycles: int
    fpus: int
    cores: int = 1

    @property
    def total_insns(self) -> int:
        return sum(self.census.values())

    @property
    def vector_insns(self) -> int:
        return sum(count for name, count in self.census.items() if is_vector_unit(name))

    @property
    def computational_insns(self) -> int:
        return sum(count for name, count in self.census.items() if SIGNATURES[name].category == "compute")

    @property
    def simd_ratio_comp(self) -> float:
        """FLOPs (2 per MAC) per computational instruction."""
        return 2 * self.macs / self.computational_insns if self.computational_insns else 0.0

    @property
    def simd_ratio_all(self) -> float:
        """FLOPs (2 per MAC) per vector-unit instruction, memory and moves included."""
        return 2 * self.macs / self.vector_insns if self.vector_insns else 0.0

    @property
    def utilization(self) -> float:
        if self.cycles == 0:
            return 0.0
        return (self.macs / self.fpus) / (self.cycles * self.cores)

    def merge(self, other: "RunReport") -> "RunReport":
        census = Counter(self.census)
        census.update(other.census)
        return RunReport(
            ledger=self.ledger + other.ledger,
            census=dict(census),
            macs=self.macs + other.macs,
            cycles=max(self.cycles, other.cycles),
            fpus=self.fpus,
            cores=self.cores + other.cores,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ledgers": self.ledger.to_dict(),
            "macs": self.macs,
            "insns": {
                "total": self.total_insns,
                "vector": self.vector_insns,
                "computational": self.computational_insns,
                "by_mnemonic": dict(sorted(self.census.items())),
            },
            "cycles": self.cycles,
            "cores": self.cores,
            "utilization": self.utilization,
            "simd_ratio_comp": self.simd_ratio_comp,
            "simd_ratio_all": self.simd_ratio_all,
        }


def _vreg_operands(instruction) -> List[int]:
    return [op.value for op in instruction.operands if op.kind is OperandKind.VREG]


def run(program: Program, state: MachineState, step_limit: int = DEFAULT_STEP_LIMIT) -> RunReport:
    """Execute a program to completion; deterministic for a given initial state."""
    instructions = program.instructions
    handlers = [registry.resolve(instruction.mnemonic) for instruction in instructions]
    scalar_like = [SIGNATURES[i.mnemonic].category in ("scalar", "control", "config") for i in instructions]
    compute_mx = [i.mnemonic in ("mxfmacc", "mxmacc") for i in instructions]
    vregs = [_vreg_operands(i) for i in instructions]
    executed = [0] * len(instructions)
    state.labels = dict(program.labels)
    resident = state.cfg.buffer_resident_accumulation

    logger.debug(f"core {state.core_id}: running {program.name or 'program'} ({len(instructions)} instructions)")
    pc = 0
    steps = 0
    count = len(instructions)
    while 0 <= pc < count:
        steps += 1
        if steps > step_limit:
            raise StepLimitExceeded(f"program exceeded {step_limit} steps")
        instruction = instructions[pc]
        try:
            if resident and not compute_mx[pc] and vregs[pc] and state.owner_touched(vregs[pc]):
                state.flush_buffer()
            next_pc = handlers[pc](state, instruction)
        except SimulationError as err:
            raise ExecutionAborted(pc, instruction.line, str(instruction), err) from err
        if scalar_like[pc]:
            state.timing.scalar()
        executed[pc] += 1
        pc = normalize_next_pc(next_pc, pc)
    state.flush_buffer()

    census: Counter = Counter()
    for instruction, times in zip(instructions, executed):
        if times:
            census[instruction.mnemonic] += times
    report = RunReport(
        ledger=state.ledger.freeze(),
        census=dict(census),
        macs=state.macs,
        cycles=state.timing.cycles,
        fpus=state.cfg.fpus,
    )
    logger.debug(f"core {state.core_id}: {report.total_insns} instructions, {report.macs} MACs, {report.cycles} cycles")
    return report


def run_cluster(programs: Sequence[Program], memory: Memory, cfg: MachineConfig,
                step_limit: int = DEFAULT_STEP_LIMIT) -> Tuple[List[MachineState], RunReport]:
    """Run one core per program on a shared memory image and merge the reports.

    Cores own disjoint output rows, so sequential execution gives the same memory
    image as any interleaving.
    """
    states: List[MachineState] = []
    merged: Optional[RunReport] = None
    for core_id, program in enumerate(programs):
        state = MachineState(cfg, memory, core_id=core_id)
        report = run(program, state, step_limit)
        states.append(state)
        merged = report if merged is None else merged.merge(report)
    if merged is None:
        merged = RunReport(TransferLedger(), {}, 0, 0, cfg.fpus, cores=0)
    logger.info(f"Cluster of {len(programs)} core(s): mem_vrf {merged.ledger.mem_vrf.total}, "
                f"{merged.macs} MACs, {merged.cycles} cycles")
    return states, merged
