#!/usr/bin/env python3
"""
Shared domain records for the MX simulator.

Problem/tile/sub-tile shapes, the machine configuration, per-boundary
transfer ledgers, configuration validation and config-file loading.
"""

import copy
import json
import logging
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

CONFIG_PATH = Path(__file__).parent / "config.json"

logger = logging.getLogger("mxsim.model_core")

Count = Union[int, Fraction]

STRICT_SUBTILE_SIZES = (4, 8)
STRICT_BROADCAST_FACTORS = (1, 2, 4, 8)


class MxSimError(Exception):
    """Root of every error raised by the simulator."""


class ConfigError(MxSimError):
    pass


class ShapeMismatch(MxSimError):
    pass


class BaselineRequiresKEquals1(MxSimError):
    pass


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    dim: Optional[str] = None

    def __str__(self) -> str:
        where = f"[{self.dim}] " if self.dim else ""
        return f"{self.kind}: {where}{self.message}"


class ValidationError(MxSimError):
    """Carries the complete list of violations found by validate()."""

    def __init__(self, violations: Sequence[Violation]):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))

    @property
    def kinds(self) -> List[str]:
        return [v.kind for v in self.violations]


class ElementType(Enum):
    FLOAT64 = ("float64", 8)
    FLOAT32 = ("float32", 4)
    INT32 = ("int32", 4)

    def __init__(self, kind: str, width_bytes: int):
        self.kind = kind
        self.width_bytes = width_bytes

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(self.kind)

    @property
    def is_float(self) -> bool:
        return self is not ElementType.INT32

    @classmethod
    def parse(cls, value: Union[str, int, "ElementType"]) -> "ElementType":
        """Accept a kind name ('float64', 'f32', 'int32') or a byte width (8, 4)."""
        if isinstance(value, ElementType):
            return value
        if isinstance(value, int) or (isinstance(value, str) and value.isdigit()):
            width = int(value)
            for member in cls:
                if member.is_float and member.width_bytes == width:
                    return member
            raise ConfigError(f"No floating-point element type is {width} bytes wide")
        aliases = {"f64": "float64", "f32": "float32", "i32": "int32", "double": "float64", "float": "float32"}
        name = aliases.get(str(value).lower(), str(value).lower())
        for member in cls:
            if member.kind == name:
                return member
        raise ConfigError(f"Unknown element type '{value}'")


def _parse_dims(text: str, count: int, separators: str) -> Tuple[int, ...]:
    cleaned = str(text).strip()
    for sep in separators:
        cleaned = cleaned.replace(sep, " ")
    try:
        dims = tuple(int(part) for part in cleaned.split())
    except ValueError:
        raise ConfigError(f"Cannot parse '{text}' as {count} integers")
    if len(dims) != count:
        raise ConfigError(f"Expected {count} dimensions in '{text}', got {len(dims)}")
    return dims


@dataclass(frozen=True)
class ProblemShape:
    """D[M x N] = A[M x K] . B[K x N] + C[M x N]"""
    M: int
    N: int
    K: int

    def __post_init__(self):
        for name in ("M", "N", "K"):
            if getattr(self, name) < 1:
                raise ConfigError(f"Problem dimension {name} must be >= 1, got {getattr(self, name)}")

    @classmethod
    def parse(cls, text: str) -> "ProblemShape":
        return cls(*_parse_dims(text, 3, "x×X,"))

    @property
    def macs(self) -> int:
        return self.M * self.N * self.K

    @property
    def flops(self) -> int:
        return 2 * self.macs

    def __str__(self) -> str:
        return f"{self.M}x{self.N}x{self.K}"


@dataclass(frozen=True)
class TileConfig:
    m: int
    n: int
    k: int

    def __post_init__(self):
        for name in ("m", "n", "k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"Tile dimension {name} must be >= 1")

    @classmethod
    def parse(cls, text: str) -> "TileConfig":
        return cls(*_parse_dims(text, 3, ",x"))

    @property
    def is_baseline(self) -> bool:
        """Shape a baseline kernel can run: A is consumed one scalar at a time."""
        return self.k == 1

    def clamp(self, problem: ProblemShape) -> "TileConfig":
        return TileConfig(min(self.m, problem.M), min(self.n, problem.N), min(self.k, problem.K))

    def __str__(self) -> str:
        return f"{self.m},{self.n},{self.k}"


@dataclass(frozen=True)
class SubTileConfig:
    m_p: int
    n_p: int
    k_p: int
    broadcast_B: int = 1

    def __post_init__(self):
        for name in ("m_p", "n_p", "k_p", "broadcast_B"):
            if getattr(self, name) < 1:
                raise ConfigError(f"Sub-tile field {name} must be >= 1")

    @classmethod
    def parse(cls, text: str, broadcast_B: int = 1) -> "SubTileConfig":
        return cls(*_parse_dims(text, 3, ",x"), broadcast_B=broadcast_B)

    @property
    def vl(self) -> int:
        return self.m_p * self.k_p

    @property
    def macs(self) -> int:
        return self.m_p * self.n_p * self.k_p

    def __str__(self) -> str:
        return f"{self.m_p},{self.n_p},{self.k_p}"


@dataclass(frozen=True)
class MachineConfig:
    vrf_bytes: int = 2048
    vreg_bits: int = 512
    num_vregs: int = 32
    fpus: int = 4
    mem_ports: int = 4
    buffer_bytes: int = 256
    cores: int = 1
    element: ElementType = ElementType.FLOAT64
    strict_subtile_sizes: bool = True
    buffer_resident_accumulation: bool = False
    lmul_max: int = 8
    overlap: float = 1.0

    @property
    def vreg_bytes(self) -> int:
        return self.vreg_bits // 8

    @property
    def width(self) -> int:
        return self.element.width_bytes

    def vlmax(self, lmul: Optional[int] = None) -> int:
        lmul = self.lmul_max if lmul is None else lmul
        return self.vreg_bytes * lmul // self.width

    def group_regs(self, elements: int) -> int:
        """Power-of-two register group holding `elements` elements."""
        regs = max(1, -(-elements * self.width // self.vreg_bytes))
        group = 1
        while group < regs:
            group *= 2
        return group

    def check(self) -> List[Violation]:
        found = []
        if self.vreg_bits * self.num_vregs != 8 * self.vrf_bytes:
            found.append(Violation("MachineConfig", f"vreg_bits*num_vregs ({self.vreg_bits * self.num_vregs}) != 8*vrf_bytes ({8 * self.vrf_bytes})"))
        if self.fpus < 1:
            found.append(Violation("MachineConfig", "at least one FPU is required"))
        if self.mem_ports < 1:
            found.append(Violation("MachineConfig", "at least one memory port is required"))
        if self.cores < 1:
            found.append(Violation("MachineConfig", "at least one core is required"))
        if self.strict_subtile_sizes and self.buffer_bytes > self.vrf_bytes // 8:
            found.append(Violation("BufferOverflow", f"buffer of {self.buffer_bytes} B exceeds 1/8 of the VRF ({self.vrf_bytes // 8} B)"))
        if not 0.0 <= self.overlap <= 1.0:
            found.append(Violation("MachineConfig", f"overlap fraction {self.overlap} outside [0, 1]"))
        return found

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["element"] = self.element.kind
        return data


MACHINE_PRESETS: Dict[str, MachineConfig] = {
    "dual-core": MachineConfig(cores=2, element=ElementType.FLOAT64),
    "64-core": MachineConfig(cores=64, element=ElementType.FLOAT32),
    "single": MachineConfig(),
}


def presets() -> Dict[str, MachineConfig]:
    return dict(MACHINE_PRESETS)


def machine_config_from_dict(data: Dict[str, Any], base: Optional[MachineConfig] = None) -> MachineConfig:
    """Build a MachineConfig from a `machine.*` mapping, ignoring unknown keys."""
    base = base or MachineConfig()
    data = dict(data or {})
    if "preset" in data:
        preset = data.pop("preset")
        if preset not in MACHINE_PRESETS:
            raise ConfigError(f"Unknown machine preset '{preset}'")
        base = MACHINE_PRESETS[preset]
    known = {f.name for f in fields(MachineConfig)}
    updates = {}
    for key, value in data.items():
        if key == "element" or key == "ew":
            updates["element"] = ElementType.parse(value)
        elif key == "F":
            updates["fpus"] = int(value)
        elif key in known:
            updates[key] = value
        else:
            logger.warning(f"Ignoring unknown machine key '{key}'")
    cfg = replace(base, **updates)
    if "buffer_bytes" not in data and "vrf_bytes" in data:
        cfg = replace(cfg, buffer_bytes=cfg.vrf_bytes // 8)
    return cfg


class Boundary(Enum):
    MEM_VRF = "mem_vrf"
    VRF_BUF = "vrf_buf"
    VRF_FPU = "vrf_fpu"
    BUF_FPU = "buf_fpu"
    SRF_FPU = "srf_fpu"


TERMS = ("a_down", "b_down", "cd_down", "d_up")


def exact(value: Union[int, Fraction]) -> Count:
    """Collapse integral fractions to int so ledgers print as integers."""
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value)
    return value


@dataclass(frozen=True)
class BoundaryCounts:
    """Four-term element counts across one boundary: A down, B down, C/D down, D up."""
    a_down: Count = 0
    b_down: Count = 0
    cd_down: Count = 0
    d_up: Count = 0

    def __post_init__(self):
        for name in TERMS:
            value = getattr(self, name)
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")
            object.__setattr__(self, name, exact(Fraction(value)) if isinstance(value, Fraction) else value)

    @property
    def total(self) -> Count:
        return exact(self.a_down + self.b_down + self.cd_down + self.d_up)

    def as_tuple(self) -> Tuple[Count, Count, Count, Count]:
        return (self.a_down, self.b_down, self.cd_down, self.d_up)

    def __add__(self, other: "BoundaryCounts") -> "BoundaryCounts":
        return BoundaryCounts(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def to_dict(self) -> Dict[str, Any]:
        return {"a": _jsonable(self.a_down), "b": _jsonable(self.b_down),
                "cd_down": _jsonable(self.cd_down), "d_up": _jsonable(self.d_up)}


def _jsonable(value: Count) -> Union[int, float]:
    return value if isinstance(value, int) else float(value)


ZERO_COUNTS = BoundaryCounts()


@dataclass(frozen=True)
class TransferLedger:
    """Per-boundary transfer counts; absent boundaries are zero."""
    mem_vrf: BoundaryCounts = ZERO_COUNTS
    vrf_buf: BoundaryCounts = ZERO_COUNTS
    vrf_fpu: BoundaryCounts = ZERO_COUNTS
    buf_fpu: BoundaryCounts = ZERO_COUNTS
    srf_fpu: BoundaryCounts = ZERO_COUNTS

    def __getitem__(self, boundary: Union[Boundary, str]) -> BoundaryCounts:
        key = boundary.value if isinstance(boundary, Boundary) else boundary
        return getattr(self, key)

    def items(self) -> Iterator[Tuple[Boundary, BoundaryCounts]]:
        for boundary in Boundary:
            yield boundary, getattr(self, boundary.value)

    def __add__(self, other: "TransferLedger") -> "TransferLedger":
        return TransferLedger(**{b.value: self[b] + other[b] for b in Boundary})

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {b.value: counts.to_dict() for b, counts in self.items()}


# --- validation -------------------------------------------------------------

@dataclass(frozen=True)
class ValidatedConfig:
    problem: ProblemShape
    tile: TileConfig
    sub: Optional[SubTileConfig]
    cfg: MachineConfig
    warnings: Tuple[str, ...] = ()

    @property
    def kind(self) -> str:
        return "baseline" if self.sub is None else "mx"

    @property
    def kernel_tile(self) -> TileConfig:
        """Tile the kernel generators execute (wide tiles clamped to the problem)."""
        return self.tile.clamp(self.problem)


def _is_power_of_two(value: int) -> bool:
    return value >= 1 and value & (value - 1) == 0


def allocate_groups(cfg: MachineConfig, element_counts: Sequence[int]) -> Optional[List[int]]:
    """Place register groups for the given element counts, each aligned to its size.

    Returns the first register of every group or None when the VRF is too small.
    """
    starts = []
    cursor = 0
    for count in element_counts:
        group = cfg.group_regs(count)
        cursor = -(-cursor // group) * group
        if cursor + group > cfg.num_vregs:
            return None
        starts.append(cursor)
        cursor += group
    return starts


def baseline_register_plan(cfg: MachineConfig, tile: TileConfig) -> Optional[List[int]]:
    """B-row vector first, then one accumulator group per output row."""
    return allocate_groups(cfg, [tile.n] + [tile.n] * tile.m)


def mx_register_plan(cfg: MachineConfig, sub: SubTileConfig) -> Optional[List[int]]:
    """A sub-tile group, B sub-tile group, then B accumulator groups."""
    counts = [sub.m_p * sub.k_p, sub.k_p * sub.n_p] + [sub.m_p * sub.n_p] * sub.broadcast_B
    return allocate_groups(cfg, counts)


def check(problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig], cfg: MachineConfig,
          *, for_kernel: bool = True, whole_k_buffering: bool = False) -> Tuple[List[Violation], List[str]]:
    """Collect every violation (and wide-tile warnings) for a configuration."""
    violations = list(cfg.check())
    warnings: List[str] = []

    for dim, size, t in (("m", problem.M, tile.m), ("n", problem.N, tile.n), ("k", problem.K, tile.k)):
        if size % t == 0:
            continue
        if t % size == 0:
            warnings.append(f"tile {dim}={t} is wider than the problem ({size}); kernels clamp it")
            continue
        violations.append(Violation("NonDivisible", f"tile {dim}={t} does not divide {size}", dim))

    if sub is not None:
        allowed = "power of two >= 2"
        for dim, value, parent in (("m'", sub.m_p, tile.m), ("n'", sub.n_p, tile.n), ("k'", sub.k_p, tile.k)):
            if cfg.strict_subtile_sizes:
                if value not in STRICT_SUBTILE_SIZES:
                    violations.append(Violation("SubTileOutOfRange", f"{dim}={value} not in {STRICT_SUBTILE_SIZES}", dim))
            elif not (_is_power_of_two(value) and value >= 2):
                violations.append(Violation("SubTileOutOfRange", f"{dim}={value} is not a {allowed}", dim))
            if parent % value != 0:
                violations.append(Violation("NonDivisible", f"sub-tile {dim}={value} does not divide tile dimension {parent}", dim))
        if cfg.strict_subtile_sizes and sub.broadcast_B not in STRICT_BROADCAST_FACTORS:
            violations.append(Violation("SubTileOutOfRange", f"B={sub.broadcast_B} not in {STRICT_BROADCAST_FACTORS}", "B"))
        buffer_need = sub.m_p * sub.n_p * cfg.width
        if buffer_need > cfg.buffer_bytes:
            violations.append(Violation("BufferOverflow", f"m'n' sub-tile needs {buffer_need} B, buffer holds {cfg.buffer_bytes} B"))
        if sub.vl > cfg.vlmax():
            violations.append(Violation("VlMismatch", f"m'k'={sub.vl} exceeds VLMAX {cfg.vlmax()} at LMUL {cfg.lmul_max}"))
        if sub.m_p * sub.n_p > sub.vl:
            violations.append(Violation("VlMismatch", f"m'n'={sub.m_p * sub.n_p} exceeds vl=m'k'={sub.vl}"))
        if whole_k_buffering and (tile.m != sub.m_p or tile.n != sub.n_p):
            violations.append(Violation("BufferResidency", "whole-K buffer residency needs m = m' and n = n'"))
        if not _mx_shape_matches(tile, sub):
            violations.append(Violation("MxShape", f"MX tiles need m=m', k=k', n=B*n' (tile {tile}, sub-tile {sub}, B={sub.broadcast_B})"))

    if for_kernel:
        violations.extend(_kernel_violations(problem, tile, sub, cfg))
    return violations, warnings


def _mx_shape_matches(tile: TileConfig, sub: SubTileConfig) -> bool:
    return tile.m == sub.m_p and tile.k == sub.k_p and tile.n == sub.broadcast_B * sub.n_p


def _kernel_violations(problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig],
                       cfg: MachineConfig) -> List[Violation]:
    found = []
    kt = tile.clamp(problem)
    if sub is None:
        if not tile.is_baseline:
            found.append(Violation("BaselineRequiresKEquals1", f"baseline kernel consumes A as scalars, tile k={tile.k}", "k"))
        if kt.n > cfg.vlmax():
            found.append(Violation("VlMismatch", f"n={kt.n} exceeds VLMAX {cfg.vlmax()} at LMUL {cfg.lmul_max}", "n"))
        elif baseline_register_plan(cfg, kt) is None:
            found.append(Violation("RegisterPressure", f"{kt.m} accumulators of {kt.n} elements plus a B row do not fit {cfg.num_vregs} vregs"))
        return found
    if _mx_shape_matches(tile, sub) and mx_register_plan(cfg, sub) is None:
        found.append(Violation("RegisterPressure", f"A, B and {sub.broadcast_B} accumulator groups do not fit {cfg.num_vregs} vregs"))
    return found


def validate(problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig], cfg: MachineConfig,
             *, for_kernel: bool = True, whole_k_buffering: bool = False) -> ValidatedConfig:
    """Return a validated bundle or raise ValidationError listing every violation."""
    violations, warnings = check(problem, tile, sub, cfg, for_kernel=for_kernel, whole_k_buffering=whole_k_buffering)
    if violations:
        raise ValidationError(violations)
    for warning in warnings:
        logger.warning(warning)
    return ValidatedConfig(problem, tile, sub, cfg, tuple(warnings))


# --- configuration files ----------------------------------------------------

DEFAULT_CONFIG: Dict[str, Any] = {
    "machine": {},
    "energy": {},
    "timing": {"overlap": 1.0},
    "explore": {"workers": 0},
    "logging": {"level": "INFO", "file": None},
}


def load_config(path: Optional[Path] = None) -> Dict[str, Any]:
    """Load the tool configuration, filling defaults for every missing key."""
    path = Path(path) if path else CONFIG_PATH
    try:
        with open(path, 'r') as f:
            config = json.load(f)
    except FileNotFoundError:
        logger.debug(f"No config at {path}, using defaults")
        config = {}
    except Exception as e:
        logger.error(f"Failed to load config {path}: {e}")
        config = {}
    for key, default in DEFAULT_CONFIG.items():
        config.setdefault(key, copy.deepcopy(default))
        if isinstance(default, dict):
            for sub_key, sub_default in default.items():
                config[key].setdefault(sub_key, sub_default)
    return config


@dataclass(frozen=True)
class RunConfig:
    """One problem/tile/sub-tile/machine bundle, as stored in a .cfg file."""
    problem: ProblemShape
    tile: TileConfig
    sub: Optional[SubTileConfig]
    machine: MachineConfig
    options: Dict[str, Any] = field(default_factory=dict)
    expected: Dict[str, Any] = field(default_factory=dict)
    name: str = ""

    @property
    def kind(self) -> str:
        return "baseline" if self.sub is None else "mx"


def _dims(section: Dict[str, Any], keys: Sequence[str], what: str) -> List[int]:
    try:
        return [int(section[key]) for key in keys]
    except KeyError as err:
        raise ConfigError(f"{what} is missing key {err}")


def run_config_from_dict(data: Dict[str, Any], name: str = "", base_machine: Optional[MachineConfig] = None) -> RunConfig:
    if "problem" not in data or "tile" not in data:
        raise ConfigError("run config needs 'problem' and 'tile' sections")
    problem = ProblemShape(*_dims(data["problem"], ("m", "n", "k"), "problem"))
    tile = TileConfig(*_dims(data["tile"], ("m", "n", "k"), "tile"))
    sub = None
    if data.get("subtile"):
        section = data["subtile"]
        sub = SubTileConfig(*_dims(section, ("m", "n", "k"), "subtile"), broadcast_B=int(section.get("b", 1)))
    machine = machine_config_from_dict(data.get("machine", {}), base_machine)
    return RunConfig(problem, tile, sub, machine, dict(data.get("options", {})), dict(data.get("expected", {})), name)


def load_run_config(path: Union[str, Path], base_machine: Optional[MachineConfig] = None) -> RunConfig:
    path = Path(path)
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read run config {path}: {e}")
    return run_config_from_dict(data, name=path.stem, base_machine=base_machine)


def run_config_to_dict(run: RunConfig) -> Dict[str, Any]:
    data: Dict[str, Any] = {
        "problem": {"m": run.problem.M, "n": run.problem.N, "k": run.problem.K},
        "tile": {"m": run.tile.m, "n": run.tile.n, "k": run.tile.k},
        "machine": run.machine.to_dict(),
    }
    if run.sub is not None:
        data["subtile"] = {"m": run.sub.m_p, "n": run.sub.n_p, "k": run.sub.k_p, "b": run.sub.broadcast_B}
    if run.options:
        data["options"] = dict(run.options)
    if run.expected:
        data["expected"] = dict(run.expected)
    return data
