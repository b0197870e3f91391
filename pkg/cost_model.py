#!/usr/bin/env python3
"""
Closed-form transfer counts for tiled MATMUL over a memory / VRF / buffer / FPU
hierarchy, plus the derived metrics: arithmetic intensity, SIMD ratio,
instruction census and a relative energy estimate.

All ratios are evaluated with exact rational arithmetic, so a tile wider than
its problem dimension yields the same fractional factor the closed forms do.
"""

import logging
from dataclasses import dataclass, field, fields
from fractions import Fraction
from typing import Any, Dict, List, Mapping, Optional, Union

from model_core import (
    BaselineRequiresKEquals1,
    Boundary,
    BoundaryCounts,
    Count,
    MachineConfig,
    ProblemShape,
    SubTileConfig,
    TileConfig,
    TransferLedger,
    Violation,
    exact,
)

logger = logging.getLogger("mxsim.cost_model")


@dataclass(frozen=True)
class BufferingOptions:
    interk_vrf: bool = False
    interk_buf: bool = False
    c_is_zero: bool = False
    interk_buf_scope: str = "K"
    zero_in_buffer: bool = False

    def check(self, cfg: MachineConfig, sub: Optional[SubTileConfig]) -> List[Violation]:
        found = []
        if self.interk_buf_scope not in ("k", "K"):
            found.append(Violation("BufferingOptions", f"interk_buf_scope must be 'k' or 'K', got '{self.interk_buf_scope}'"))
        if self.interk_buf and sub is not None and sub.m_p * sub.n_p * cfg.width > cfg.buffer_bytes:
            found.append(Violation("BufferOverflow", "inter-k buffering needs room for one m'n' sub-tile in the buffer"))
        return found

    @classmethod
    def from_names(cls, names: Union[str, List[str], None]) -> "BufferingOptions":
        """Parse flags like 'interk_vrf,c_zero,interk_buf=k'."""
        if not names:
            return cls()
        if isinstance(names, str):
            names = [part for part in names.replace(" ", ",").split(",") if part]
        values: Dict[str, Any] = {}
        for name in names:
            key, _, scope = name.partition("=")
            key = {"c_zero": "c_is_zero", "zero_buf": "zero_in_buffer"}.get(key, key)
            if key not in {f.name for f in fields(cls)}:
                raise ValueError(f"Unknown buffering option '{name}'")
            if key == "interk_buf" and scope:
                values["interk_buf_scope"] = scope
            values[key] = scope if key == "interk_buf_scope" else True
        return cls(**values)


# The generated kernels keep each output tile in the VRF across the whole K
# and zero-initialise it instead of loading C.
KERNEL_OPTIONS = BufferingOptions(interk_vrf=True, c_is_zero=True)


@dataclass(frozen=True)
class EnergyCoefficients:
    """Energy per element crossing a boundary, in arbitrary relative units."""
    e_mem: float = 10.0
    e_vrf: float = 3.0
    e_buf: float = 1.0
    e_fpu: float = 0.0
    e_srf: float = 1.0
    e_insn: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"Energy coefficient {f.name} must be >= 0")

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]]) -> "EnergyCoefficients":
        known = {f.name for f in fields(cls)}
        return cls(**{k: float(v) for k, v in (data or {}).items() if k in known})

    def for_boundary(self, boundary: Boundary) -> float:
        # A boundary is charged at its upper (source) level.
        return {
            Boundary.MEM_VRF: self.e_mem,
            Boundary.VRF_BUF: self.e_vrf,
            Boundary.VRF_FPU: self.e_vrf,
            Boundary.BUF_FPU: self.e_buf,
            Boundary.SRF_FPU: self.e_srf,
        }[boundary]


def _r(num: int, den: int) -> Fraction:
    return Fraction(num, den)


def mem_vrf_transfers(problem: ProblemShape, tile: TileConfig,
                      opts: BufferingOptions = BufferingOptions()) -> BoundaryCounts:
    """Elements moved between memory and the VRF."""
    M, N, K = problem.M, problem.N, problem.K
    MN = M * N
    visits = Fraction(1) if opts.interk_vrf else _r(K, tile.k)
    a = _r(N, tile.n) * M * K
    b = _r(M, tile.m) * N * K
    cd = (visits - 1) * MN if opts.c_is_zero else visits * MN
    return BoundaryCounts(exact(a), exact(b), exact(max(cd, Fraction(0))), exact(visits * MN))


def vrf_buf_transfers(problem: ProblemShape, tile: TileConfig, sub: SubTileConfig,
                      opts: BufferingOptions = BufferingOptions()) -> BoundaryCounts:
    """Elements exchanged between the VRF and the near-FPU buffer."""
    M, N, K = problem.M, problem.N, problem.K
    MN = M * N
    if opts.interk_buf:
        visits = _r(K, tile.k) if opts.interk_buf_scope == "k" else Fraction(1)
    else:
        visits = _r(K, tile.k) * _r(tile.k, sub.k_p)
    a = _r(N, sub.n_p) * M * K
    b = _r(M, sub.m_p) * N * K
    zeroed = opts.c_is_zero and opts.zero_in_buffer
    cd = (visits - 1) * MN if zeroed else visits * MN
    return BoundaryCounts(exact(a), exact(b), exact(max(cd, Fraction(0))), exact(visits * MN))


def _groups(width: int, per_fetch: int) -> int:
    return -(-width // per_fetch)


def buf_fpu_transfers(problem: ProblemShape, tile: TileConfig, sub: SubTileConfig,
                      tA: int, tB: int) -> BoundaryCounts:
    """Elements exchanged between the buffer and the FPUs.

    Every A element feeds up to tB FPUs per fetch and every B element up to tA,
    so a sub-tile row of n' outputs costs ceil(n'/tB) fetches of its A element.
    """
    if tA < 1 or tB < 1:
        raise ValueError("tA and tB must be >= 1")
    M, N, K = problem.M, problem.N, problem.K
    kmn = K * M * N
    a = _r(N, sub.n_p) * _groups(sub.n_p, tB) * M * K
    b = _r(M, sub.m_p) * _groups(sub.m_p, tA) * N * K
    return BoundaryCounts(exact(a), exact(b), kmn, kmn)


def baseline_transfers(problem: ProblemShape, tile: TileConfig, F: int,
                       opts: BufferingOptions = KERNEL_OPTIONS) -> TransferLedger:
    """Scalar-vector baseline: A as scalars through the SRF, B rows as vectors."""
    if tile.k != 1:
        raise BaselineRequiresKEquals1(f"baseline algorithm needs tile k = 1, got {tile.k}")
    M, N, K = problem.M, problem.N, problem.K
    kmn = K * M * N
    return TransferLedger(
        mem_vrf=mem_vrf_transfers(problem, tile, opts),
        vrf_fpu=BoundaryCounts(0, kmn, kmn, kmn),
        srf_fpu=BoundaryCounts(exact(_r(N, tile.n) * _groups(tile.n, F) * M * K), 0, 0, 0),
    )


def mx_transfers(problem: ProblemShape, tile: TileConfig, sub: SubTileConfig, F: int,
                 opts: BufferingOptions = KERNEL_OPTIONS) -> TransferLedger:
    """MX kernel: A tiles reused over B n'-sub-tiles, accumulation in the buffer."""
    M, N, K = problem.M, problem.N, problem.K
    MN = M * N
    if opts == KERNEL_OPTIONS:
        mem_vrf = BoundaryCounts(
            exact(_r(N, sub.broadcast_B * sub.n_p) * M * K),
            exact(_r(M, sub.m_p) * N * K),
            0,
            MN,
        )
    else:
        mem_vrf = mem_vrf_transfers(problem, tile, opts)
    return TransferLedger(
        mem_vrf=mem_vrf,
        vrf_buf=vrf_buf_transfers(problem, tile, sub, opts),
        buf_fpu=buf_fpu_transfers(problem, tile, sub, F, F),
    )


def arithmetic_intensity(problem: ProblemShape, mem_vrf_total_elements: Count, element_width: int) -> float:
    """FLOP per byte moved between memory and the core (one MAC = 2 FLOP)."""
    if mem_vrf_total_elements <= 0 or element_width <= 0:
        raise ValueError("transfer count and element width must be positive")
    return float(Fraction(problem.flops) / (Fraction(mem_vrf_total_elements) * element_width))


def predicted_simd_ratio(kind: str, tile: TileConfig, sub: Optional[SubTileConfig] = None) -> int:
    """MACs per computational instruction."""
    if kind == "baseline":
        return tile.n
    if kind == "mx":
        if sub is None:
            raise ValueError("MX SIMD ratio needs a sub-tile")
        return sub.macs
    raise ValueError(f"Unknown kernel kind '{kind}'")


def energy_estimate(ledger: TransferLedger, instruction_counts: Union[int, Mapping[str, int]],
                    coeffs: EnergyCoefficients = EnergyCoefficients(), macs: int = 0) -> float:
    """Relative energy: elements per boundary times their coefficient, plus instructions."""
    if isinstance(instruction_counts, Mapping):
        instructions = sum(instruction_counts.values())
    else:
        instructions = int(instruction_counts)
    energy = Fraction(0)
    for boundary, counts in ledger.items():
        energy += Fraction(counts.total) * Fraction(coeffs.for_boundary(boundary))
    energy += instructions * Fraction(coeffs.e_insn)
    energy += macs * Fraction(coeffs.e_fpu)
    return float(energy)


def analytic_census(kind: str, problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig],
                    cfg: MachineConfig) -> Dict[str, int]:
    """Vector-unit and scalar-operand instruction counts the kernel generators emit.

    Counts use the tile the kernels execute, i.e. wide tiles clamped to the problem.
    """
    kt = tile.clamp(problem)
    M, N, K = problem.M, problem.N, problem.K
    integer = not cfg.element.is_float
    if kind == "baseline":
        tiles = (M // kt.m) * (N // kt.n)
        return {
            "vmv.zero": tiles * kt.m,
            "vle": tiles * K,
            ("lw" if integer else "fld"): tiles * K * kt.m,
            ("vmacc.vx" if integer else "vfmacc.vf"): tiles * K * kt.m,
            "vse": tiles * kt.m,
        }
    if sub is None:
        raise ValueError("MX census needs a sub-tile")
    B = sub.broadcast_B
    tiles = (M // sub.m_p) * (N // (B * sub.n_p))
    steps = tiles * (K // sub.k_p)
    return {
        "vmv.zero": tiles * B,
        "mld.a": steps,
        "mld.b": steps * B,
        ("mxmacc" if integer else "mxfmacc"): steps * B,
        "mst.c": tiles * B,
    }


VECTOR_UNIT_MNEMONICS = frozenset({
    "vmv.zero", "vle", "vse", "vlse", "vfmacc.vf", "vmacc.vx",
    "mld.a", "mld.b", "mst.c", "mxfmacc", "mxmacc",
})
COMPUTE_MNEMONICS = frozenset({"vfmacc.vf", "vmacc.vx", "mxfmacc", "mxmacc"})


def vector_instruction_count(census: Mapping[str, int]) -> int:
    return sum(count for name, count in census.items() if name in VECTOR_UNIT_MNEMONICS)


def roofline_bound(intensity: float, peak_flop_per_cycle: float, bytes_per_cycle: float) -> float:
    """Attainable FLOP/cycle: min(peak, intensity * bandwidth)."""
    return min(peak_flop_per_cycle, intensity * bytes_per_cycle)


def vrf_cd_reduction(baseline: TransferLedger, mx: TransferLedger) -> Fraction:
    """Ratio of baseline VRF C/D traffic (VRF<->FPU) to MX VRF C/D traffic (VRF<->BUF)."""
    mx_cd = Fraction(mx.vrf_buf.cd_down + mx.vrf_buf.d_up)
    if mx_cd == 0:
        raise ValueError("MX ledger has no VRF C/D traffic")
    return Fraction(baseline.vrf_fpu.cd_down + baseline.vrf_fpu.d_up) / mx_cd


@dataclass(frozen=True)
class Prediction:
    kind: str
    problem: ProblemShape
    tile: TileConfig
    sub: Optional[SubTileConfig]
    ledger: TransferLedger
    intensity: float
    simd_ratio_comp: int  # MACs per computational instruction
    simd_ratio_all: float  # FLOPs per vector-unit instruction, as RunReport measures it
    census: Dict[str, int] = field(default_factory=dict)
    energy: float = 0.0

    @property
    def macs(self) -> int:
        return self.problem.macs

    @property
    def mem_vrf_total(self) -> Count:
        return self.ledger.mem_vrf.total

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kind": self.kind,
            "problem": str(self.problem),
            "tile": str(self.tile),
            "subtile": str(self.sub) if self.sub else None,
            "bcast": self.sub.broadcast_B if self.sub else None,
            "ledgers": self.ledger.to_dict(),
            "mem_vrf_total": float(self.mem_vrf_total) if isinstance(self.mem_vrf_total, Fraction) else self.mem_vrf_total,
            "macs": self.macs,
            "arithmetic_intensity": self.intensity,
            "simd_ratio_comp": self.simd_ratio_comp,
            "simd_ratio_all": self.simd_ratio_all,
            "insns": dict(self.census),
            "energy": self.energy,
        }
        return data


def predict(problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig], cfg: MachineConfig,
            opts: BufferingOptions = KERNEL_OPTIONS,
            coeffs: EnergyCoefficients = EnergyCoefficients()) -> Prediction:
    """Evaluate every closed form for one configuration."""
    kind = "baseline" if sub is None else "mx"
    if kind == "baseline":
        ledger = baseline_transfers(problem, tile, cfg.fpus, opts)
    else:
        ledger = mx_transfers(problem, tile, sub, cfg.fpus, opts)
    census = analytic_census(kind, problem, tile, sub, cfg)
    vector_insns = vector_instruction_count(census)
    intensity = arithmetic_intensity(problem, ledger.mem_vrf.total, cfg.width)
    energy = energy_estimate(ledger, vector_insns, coeffs, problem.macs)
    logger.debug(f"{kind} {problem} tile {tile} sub {sub}: mem_vrf {ledger.mem_vrf.total}, AI {intensity:.4f}")
    return Prediction(
        kind=kind,
        problem=problem,
        tile=tile,
        sub=sub,
        ledger=ledger,
        intensity=intensity,
        simd_ratio_comp=predicted_simd_ratio(kind, tile, sub),
        simd_ratio_all=problem.flops / vector_insns if vector_insns else 0.0,
        census=census,
        energy=energy,
    )
