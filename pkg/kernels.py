#!/usr/bin/env python3
"""
MATMUL kernel generators and the golden reference.

Both generators emit output-tile-major loop nests (tile rows outer, tile
columns inner, K innermost) and split the tile rows across cores in
contiguous blocks. Kernels apply the C-tile reset: accumulators start at
zero, so D = A.B.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from isa import Instruction, Program, freg, imm, insn, label_ref, mem, vreg, xreg, X_NAMES
from machine import Memory, MachineState, RunReport, run_cluster
from model_core import (
    ElementType,
    MachineConfig,
    ProblemShape,
    ShapeMismatch,
    SubTileConfig,
    TileConfig,
    baseline_register_plan,
    mx_register_plan,
    validate,
)

logger = logging.getLogger("mxsim.kernels")

REGION_ALIGN = 64

T0, T1, T2, T3, T5 = (X_NAMES[name] for name in ("t0", "t1", "t2", "t3", "t5"))
S0, S1, S2 = X_NAMES["s0"], X_NAMES["s1"], X_NAMES["s2"]
A0, A2, A3, A4, A6, A7 = (X_NAMES[name] for name in ("a0", "a2", "a3", "a4", "a6", "a7"))


def _align(value: int) -> int:
    return -(-value // REGION_ALIGN) * REGION_ALIGN


@dataclass(frozen=True)
class MatrixLayout:
    """Row-major placement of A (MxK), B (KxN) and D (MxN, holding C before the run)."""
    problem: ProblemShape
    element: ElementType
    a_addr: int
    b_addr: int
    d_addr: int
    size: int

    @classmethod
    def for_problem(cls, problem: ProblemShape, element: ElementType, base: int = 0) -> "MatrixLayout":
        width = element.width_bytes
        a_addr = _align(base)
        b_addr = _align(a_addr + problem.M * problem.K * width)
        d_addr = _align(b_addr + problem.K * problem.N * width)
        size = _align(d_addr + problem.M * problem.N * width)
        return cls(problem, element, a_addr, b_addr, d_addr, size)

    @property
    def a_stride(self) -> int:
        return self.problem.K * self.element.width_bytes

    @property
    def b_stride(self) -> int:
        return self.problem.N * self.element.width_bytes

    @property
    def d_stride(self) -> int:
        return self.problem.N * self.element.width_bytes


def random_matrix(rng: np.random.Generator, rows: int, cols: int, element: ElementType) -> np.ndarray:
    if element.is_float:
        return rng.uniform(-1.0, 1.0, size=(rows, cols)).astype(element.dtype)
    return rng.integers(-8, 8, size=(rows, cols)).astype(element.dtype)


def build_workload(problem: ProblemShape, element: ElementType, seed: int = 0,
                   A: Optional[np.ndarray] = None, B: Optional[np.ndarray] = None,
                   C: Optional[np.ndarray] = None) -> Tuple[Memory, MatrixLayout, np.ndarray, np.ndarray, np.ndarray]:
    """Place (given or seeded random) A and B plus C (zero unless given) in a fresh memory image."""
    rng = np.random.default_rng(seed)
    A = random_matrix(rng, problem.M, problem.K, element) if A is None else np.asarray(A, dtype=element.dtype)
    B = random_matrix(rng, problem.K, problem.N, element) if B is None else np.asarray(B, dtype=element.dtype)
    C = np.zeros((problem.M, problem.N), dtype=element.dtype) if C is None else np.asarray(C, dtype=element.dtype)
    if A.shape != (problem.M, problem.K) or B.shape != (problem.K, problem.N) or C.shape != (problem.M, problem.N):
        raise ShapeMismatch(f"matrices {A.shape}, {B.shape}, {C.shape} do not fit problem {problem}")
    layout = MatrixLayout.for_problem(problem, element)
    memory = Memory(layout.size)
    memory.write_matrix(layout.a_addr, A)
    memory.write_matrix(layout.b_addr, B)
    memory.write_matrix(layout.d_addr, C)
    return memory, layout, A, B, C


def read_result(memory: Memory, layout: MatrixLayout) -> np.ndarray:
    problem = layout.problem
    return memory.read_matrix(layout.d_addr, problem.M, problem.N, layout.element.dtype)


def partition_rows(tiles: int, cores: int) -> List[Tuple[int, int]]:
    """Contiguous [start, stop) blocks of tile rows, sizes differing by at most one."""
    base, extra = divmod(tiles, cores)
    blocks = []
    start = 0
    for core in range(cores):
        stop = start + base + (1 if core < extra else 0)
        blocks.append((start, stop))
        start = stop
    return blocks


class _Emitter:
    def __init__(self):
        self.instructions: List[Instruction] = []
        self.labels = {}

    def __call__(self, mnemonic, *operands):
        self.instructions.append(insn(mnemonic, *operands))

    def label(self, name: str) -> None:
        self.labels[name] = len(self.instructions)

    def countdown(self, counter: int, target: str) -> None:
        self("addi", xreg(counter), xreg(counter), imm(-1))
        self("bnez", xreg(counter), label_ref(target))

    def program(self, element: ElementType, name: str) -> Program:
        return Program(tuple(self.instructions), dict(self.labels), element.kind, name)


def _outer_loops_open(emit: _Emitter, layout: MatrixLayout, tile: TileConfig, rows: Tuple[int, int]) -> None:
    start, stop = rows
    emit("li", xreg(A0), imm(layout.a_addr + start * tile.m * layout.a_stride))
    emit("li", xreg(A2), imm(layout.d_addr + start * tile.m * layout.d_stride))
    emit("li", xreg(S0), imm(stop - start))
    emit.label("tile_row")
    emit("li", xreg(A3), imm(layout.b_addr))
    emit("mv", xreg(A4), xreg(A2))
    emit("li", xreg(S1), imm(layout.problem.N // tile.n))
    emit.label("tile_col")


def _outer_loops_close(emit: _Emitter, layout: MatrixLayout, tile: TileConfig) -> None:
    width = layout.element.width_bytes
    emit("addi", xreg(A3), xreg(A3), imm(tile.n * width))
    emit("addi", xreg(A4), xreg(A4), imm(tile.n * width))
    emit.countdown(S1, "tile_col")
    emit("addi", xreg(A0), xreg(A0), imm(tile.m * layout.a_stride))
    emit("addi", xreg(A2), xreg(A2), imm(tile.m * layout.d_stride))
    emit.countdown(S0, "tile_row")


def _baseline_program(layout: MatrixLayout, tile: TileConfig, cfg: MachineConfig,
                      rows: Tuple[int, int], name: str) -> Program:
    emit = _Emitter()
    if rows[1] <= rows[0]:
        return emit.program(cfg.element, name)
    width = cfg.width
    integer = not cfg.element.is_float
    plan = baseline_register_plan(cfg, tile)
    v_b, accumulators = plan[0], plan[1:]

    emit("vsetvl", xreg(T0), imm(tile.n))
    _outer_loops_open(emit, layout, tile, rows)
    for acc in accumulators:
        emit("vmv.zero", vreg(acc))
    emit("mv", xreg(A6), xreg(A0))
    emit("mv", xreg(A7), xreg(A3))
    emit("li", xreg(S2), imm(layout.problem.K))
    emit.label("k_step")
    emit("vle", vreg(v_b), mem(A7))
    for r, acc in enumerate(accumulators):
        if integer:
            emit("lw", xreg(T5), mem(A6, r * layout.a_stride))
            emit("vmacc.vx", vreg(acc), xreg(T5), vreg(v_b))
        else:
            emit("fld", freg(r), mem(A6, r * layout.a_stride))
            emit("vfmacc.vf", vreg(acc), freg(r), vreg(v_b))
    emit("addi", xreg(A6), xreg(A6), imm(width))
    emit("addi", xreg(A7), xreg(A7), imm(layout.b_stride))
    emit.countdown(S2, "k_step")
    for r, acc in enumerate(accumulators):
        emit("vse", vreg(acc), mem(A4, r * layout.d_stride))
    _outer_loops_close(emit, layout, tile)
    return emit.program(cfg.element, name)


def _mx_program(layout: MatrixLayout, tile: TileConfig, sub: SubTileConfig, cfg: MachineConfig,
                rows: Tuple[int, int], name: str) -> Program:
    emit = _Emitter()
    if rows[1] <= rows[0]:
        return emit.program(cfg.element, name)
    width = cfg.width
    macc = "mxfmacc" if cfg.element.is_float else "mxmacc"
    plan = mx_register_plan(cfg, sub)
    v_a, v_b, accumulators = plan[0], plan[1], plan[2:]

    emit("msettilem", xreg(T0), imm(sub.m_p))
    emit("msettilen", xreg(T0), imm(sub.n_p))
    emit("msettilek", xreg(T0), imm(sub.k_p))
    emit("li", xreg(T1), imm(layout.a_stride))
    emit("li", xreg(T2), imm(layout.b_stride))
    emit("li", xreg(T3), imm(layout.d_stride))
    _outer_loops_open(emit, layout, tile, rows)
    emit("vsetvl", xreg(T0), imm(sub.m_p * sub.n_p))
    for acc in accumulators:
        emit("vmv.zero", vreg(acc))
    emit("vsetvl", xreg(T0), imm(sub.m_p * sub.k_p))
    emit("mv", xreg(A6), xreg(A0))
    emit("mv", xreg(A7), xreg(A3))
    emit("li", xreg(S2), imm(layout.problem.K // sub.k_p))
    emit.label("k_step")
    emit("mld.a", vreg(v_a), mem(A6), xreg(T1))
    for b, acc in enumerate(accumulators):
        emit("mld.b", vreg(v_b), mem(A7, b * sub.n_p * width), xreg(T2))
        emit(macc, vreg(acc), vreg(v_a), vreg(v_b))
    emit("addi", xreg(A6), xreg(A6), imm(sub.k_p * width))
    emit("addi", xreg(A7), xreg(A7), imm(sub.k_p * layout.b_stride))
    emit.countdown(S2, "k_step")
    for b, acc in enumerate(accumulators):
        emit("mst.c", vreg(acc), mem(A4, b * sub.n_p * width), xreg(T3))
    _outer_loops_close(emit, layout, tile)
    return emit.program(cfg.element, name)


def gen_baseline(problem: ProblemShape, tile: TileConfig, cfg: MachineConfig,
                 layout: Optional[MatrixLayout] = None) -> List[Program]:
    """Scalar-vector kernel: per K step one B-row vle, then m (fld, vfmacc.vf) pairs. One program per core."""
    checked = validate(problem, tile, None, cfg)
    tile = checked.kernel_tile
    layout = layout or MatrixLayout.for_problem(problem, cfg.element)
    blocks = partition_rows(problem.M // tile.m, cfg.cores)
    logger.debug(f"baseline {problem} tile {tile}: {len(blocks)} core(s)")
    return [_baseline_program(layout, tile, cfg, rows, f"baseline-{problem}-core{core}")
            for core, rows in enumerate(blocks)]


def gen_mx(problem: ProblemShape, tile: TileConfig, sub: SubTileConfig, cfg: MachineConfig,
           layout: Optional[MatrixLayout] = None) -> List[Program]:
    """MX kernel: per k' step one mld.a shared by B (mld.b, mxfmacc) pairs. One program per core."""
    checked = validate(problem, tile, sub, cfg)
    tile = checked.kernel_tile
    layout = layout or MatrixLayout.for_problem(problem, cfg.element)
    blocks = partition_rows(problem.M // tile.m, cfg.cores)
    logger.debug(f"mx {problem} tile {tile} sub {sub} B={sub.broadcast_B}: {len(blocks)} core(s)")
    return [_mx_program(layout, tile, sub, cfg, rows, f"mx-{problem}-core{core}")
            for core, rows in enumerate(blocks)]


def generate(problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig], cfg: MachineConfig,
             layout: Optional[MatrixLayout] = None) -> List[Program]:
    if sub is None:
        return gen_baseline(problem, tile, cfg, layout)
    return gen_mx(problem, tile, sub, cfg, layout)


def golden_matmul(A: np.ndarray, B: np.ndarray, C: np.ndarray, order: str = "defined") -> np.ndarray:
    """D = A.B + C.

    "defined" accumulates k ascending into C with every product and sum rounded
    to the element type, the order the simulated machine uses. "free" leaves
    the summation order to numpy.
    """
    A, B, C = np.asarray(A), np.asarray(B), np.asarray(C)
    if A.ndim != 2 or B.ndim != 2 or C.ndim != 2:
        raise ShapeMismatch("golden_matmul needs 2-D matrices")
    M, K = A.shape
    if B.shape[0] != K or C.shape != (M, B.shape[1]):
        raise ShapeMismatch(f"cannot multiply {A.shape} by {B.shape} into {C.shape}")
    with np.errstate(over="ignore"):
        if order == "free":
            return (A @ B + C).astype(C.dtype)
        if order != "defined":
            raise ValueError(f"unknown summation order '{order}'")
        acc = C.copy()
        for p in range(K):
            acc = acc + np.outer(A[:, p], B[p, :])
    return acc


@dataclass
class KernelRun:
    report: RunReport
    states: List[MachineState]
    layout: MatrixLayout
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def check(self) -> bool:
        """Bit-exact comparison against the golden result in the machine's summation order."""
        expected = golden_matmul(self.A, self.B, np.zeros_like(self.C))
        return bool(np.array_equal(self.D, expected))

    def close_to_free(self) -> bool:
        """Relative agreement with the order-free result (1e-12 for f64, 1e-5 for f32, exact for int32)."""
        expected = golden_matmul(self.A, self.B, np.zeros_like(self.C), order="free")
        if not self.layout.element.is_float:
            return bool(np.array_equal(self.D, expected))
        rtol = 1e-12 if self.layout.element.width_bytes == 8 else 1e-5
        scale = float(np.abs(expected).max()) if expected.size else 0.0
        return bool(np.allclose(self.D, expected, rtol=rtol, atol=rtol * scale))


def simulate_kernel(problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig], cfg: MachineConfig,
                    seed: int = 0, programs: Optional[Sequence[Program]] = None) -> KernelRun:
    """Generate (unless given), run on a fresh seeded workload and read D back."""
    memory, layout, A, B, C = build_workload(problem, cfg.element, seed)
    if programs is None:
        programs = generate(problem, tile, sub, cfg, layout)
    states, report = run_cluster(programs, memory, cfg)
    return KernelRun(report, states, layout, A, B, C, read_result(memory, layout))
