#!/usr/bin/env python3
"""
Instruction set: a small RVV-style subset, the eight MX matrix instructions and
enough scalar instructions to write self-contained loop nests.

Programs exist only as text (.mxasm) and as the parsed form below; there are
no binary encodings.
"""

import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from model_core import MachineConfig, MxSimError, STRICT_SUBTILE_SIZES

logger = logging.getLogger("mxsim.isa")


class OperandKind(Enum):
    XREG = "xreg"
    FREG = "freg"
    VREG = "vreg"
    IMM = "imm"
    MEM = "mem"
    LABEL = "label"


X_ABI = ["zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1",
         "a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7",
         "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11",
         "t3", "t4", "t5", "t6"]
F_ABI = ["ft0", "ft1", "ft2", "ft3", "ft4", "ft5", "ft6", "ft7", "fs0", "fs1",
         "fa0", "fa1", "fa2", "fa3", "fa4", "fa5", "fa6", "fa7",
         "fs2", "fs3", "fs4", "fs5", "fs6", "fs7", "fs8", "fs9", "fs10", "fs11",
         "ft8", "ft9", "ft10", "ft11"]

X_NAMES: Dict[str, int] = {name: i for i, name in enumerate(X_ABI)}
X_NAMES.update({f"x{i}": i for i in range(32)})
X_NAMES["fp"] = 8
F_NAMES: Dict[str, int] = {name: i for i, name in enumerate(F_ABI)}
F_NAMES.update({f"f{i}": i for i in range(32)})
V_NAMES: Dict[str, int] = {f"v{i}": i for i in range(32)}


@dataclass(frozen=True)
class Operand:
    kind: OperandKind
    value: int = 0
    offset: int = 0
    label: str = ""

    def __str__(self) -> str:
        if self.kind is OperandKind.XREG:
            return X_ABI[self.value]
        if self.kind is OperandKind.FREG:
            return F_ABI[self.value]
        if self.kind is OperandKind.VREG:
            return f"v{self.value}"
        if self.kind is OperandKind.IMM:
            return str(self.value)
        if self.kind is OperandKind.MEM:
            base = X_ABI[self.value]
            return f"({base})" if self.offset == 0 else f"{self.offset}({base})"
        return self.label


def xreg(index: int) -> Operand:
    return Operand(OperandKind.XREG, index)


def freg(index: int) -> Operand:
    return Operand(OperandKind.FREG, index)


def vreg(index: int) -> Operand:
    return Operand(OperandKind.VREG, index)


def imm(value: int) -> Operand:
    return Operand(OperandKind.IMM, int(value))


def mem(base: int, offset: int = 0) -> Operand:
    return Operand(OperandKind.MEM, base, offset)


def label_ref(name: str) -> Operand:
    return Operand(OperandKind.LABEL, label=name)


X = frozenset({OperandKind.XREG})
XI = frozenset({OperandKind.XREG, OperandKind.IMM})
F = frozenset({OperandKind.FREG})
V = frozenset({OperandKind.VREG})
I = frozenset({OperandKind.IMM})
MEM = frozenset({OperandKind.MEM})
LBL = frozenset({OperandKind.LABEL})


@dataclass(frozen=True)
class Signature:
    operands: Tuple[FrozenSet[OperandKind], ...]
    category: str
    unit: str


SIGNATURES: Dict[str, Signature] = {
    # MX: configure, memory, compute
    "msettilem": Signature((X, XI), "config", "matrix"),
    "msettilen": Signature((X, XI), "config", "matrix"),
    "msettilek": Signature((X, XI), "config", "matrix"),
    "mld.a": Signature((V, MEM, XI), "memory", "matrix"),
    "mld.b": Signature((V, MEM, XI), "memory", "matrix"),
    "mst.c": Signature((V, MEM, XI), "memory", "matrix"),
    "mxmacc": Signature((V, V, V), "compute", "matrix"),
    "mxfmacc": Signature((V, V, V), "compute", "matrix"),
    # RVV subset
    "vsetvl": Signature((X, XI), "config", "vector"),
    "vle": Signature((V, MEM), "memory", "vector"),
    "vse": Signature((V, MEM), "memory", "vector"),
    "vlse": Signature((V, MEM, XI), "memory", "vector"),
    "vfmacc.vf": Signature((V, F, V), "compute", "vector"),
    "vmacc.vx": Signature((V, X, V), "compute", "vector"),
    "vmv.zero": Signature((V,), "vector", "vector"),
    # scalar core
    "fld": Signature((F, MEM), "scalar", "scalar"),
    "lw": Signature((X, MEM), "scalar", "scalar"),
    "li": Signature((X, I), "scalar", "scalar"),
    "add": Signature((X, X, X), "scalar", "scalar"),
    "addi": Signature((X, X, I), "scalar", "scalar"),
    "mv": Signature((X, X), "scalar", "scalar"),
    "bnez": Signature((X, LBL), "control", "scalar"),
    "bne": Signature((X, X, LBL), "control", "scalar"),
    "j": Signature((LBL,), "control", "scalar"),
}

VECTOR_UNIT_CATEGORIES = frozenset({"memory", "compute", "vector"})


def is_vector_unit(mnemonic: str) -> bool:
    return SIGNATURES[mnemonic].category in VECTOR_UNIT_CATEGORIES


@dataclass(frozen=True)
class Instruction:
    mnemonic: str
    operands: Tuple[Operand, ...] = ()
    line: int = field(default=0, compare=False)

    def __str__(self) -> str:
        if not self.operands:
            return self.mnemonic
        return f"{self.mnemonic} " + ", ".join(str(op) for op in self.operands)


def insn(mnemonic: str, *operands: Operand) -> Instruction:
    return Instruction(mnemonic, tuple(operands))


@dataclass(frozen=True)
class Program:
    instructions: Tuple[Instruction, ...]
    labels: Dict[str, int] = field(default_factory=dict)
    element: Optional[str] = None
    name: str = ""

    def __len__(self) -> int:
        return len(self.instructions)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Program):
            return NotImplemented
        return (self.instructions == other.instructions and self.labels == other.labels
                and self.element == other.element)

    def labels_at(self, index: int) -> List[str]:
        return [name for name, target in self.labels.items() if target == index]


@dataclass
class MxCsrState:
    """Granted sub-tile sizes and vector length; 0 means not yet configured."""
    tile_m: int = 0
    tile_n: int = 0
    tile_k: int = 0
    vl: int = 0
    lmul: int = 1

    @property
    def tiles_set(self) -> bool:
        return self.tile_m > 0 and self.tile_n > 0 and self.tile_k > 0


@dataclass(frozen=True)
class AsmDiagnostic:
    kind: str
    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.kind}: {self.message}"


class AssemblyError(MxSimError):
    """Raised with every diagnostic found while parsing a program."""

    def __init__(self, diagnostics: Sequence[AsmDiagnostic]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(str(d) for d in self.diagnostics))

    @property
    def kind(self) -> str:
        return self.diagnostics[0].kind

    @property
    def line(self) -> int:
        return self.diagnostics[0].line


_LABEL_RE = re.compile(r"^([A-Za-z_.][\w.]*):")
_MEM_RE = re.compile(r"^(-?(?:0x[0-9a-fA-F]+|\d+))?\(\s*([\w]+)\s*\)$")
_INT_RE = re.compile(r"^-?(?:0x[0-9a-fA-F]+|0b[01]+|\d+)$")
_IDENT_RE = re.compile(r"^[A-Za-z_.][\w.]*$")


def _parse_int(text: str) -> int:
    return int(text, 0)


def _classify(token: str) -> Optional[Operand]:
    """Map a token to an operand, None when it is not recognisable at all."""
    if token in X_NAMES:
        return xreg(X_NAMES[token])
    if token in F_NAMES:
        return freg(F_NAMES[token])
    if token in V_NAMES:
        return vreg(V_NAMES[token])
    if _INT_RE.match(token):
        return imm(_parse_int(token))
    match = _MEM_RE.match(token)
    if match:
        offset, base = match.groups()
        if base not in X_NAMES:
            return Operand(OperandKind.MEM, -1, label=base)
        return mem(X_NAMES[base], _parse_int(offset) if offset else 0)
    if _IDENT_RE.match(token):
        return label_ref(token)
    return None


def _looks_like_register(token: str) -> bool:
    return bool(re.match(r"^[xfv]\d+$", token))


def parse_assembly(text: str, name: str = "") -> Program:
    """Parse .mxasm text: `mnemonic op, op, ...`, `label:`, `# comments`, `.element <type>`."""
    instructions: List[Instruction] = []
    labels: Dict[str, int] = {}
    element: Optional[str] = None
    diagnostics: List[AsmDiagnostic] = []
    pending_refs: List[Tuple[str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        while line:
            match = _LABEL_RE.match(line)
            if not match:
                break
            label = match.group(1)
            if label in labels:
                diagnostics.append(AsmDiagnostic("DuplicateLabel", lineno, f"label '{label}' defined twice"))
            labels[label] = len(instructions)
            line = line[match.end():].strip()
        if not line:
            continue
        if line.startswith(".element"):
            parts = line.split()
            if len(parts) != 2:
                diagnostics.append(AsmDiagnostic("BadDirective", lineno, "'.element' takes one type name"))
            else:
                element = parts[1]
            continue

        parts = line.split(None, 1)
        mnemonic = parts[0].lower()
        tokens = [tok.strip() for tok in parts[1].split(",")] if len(parts) > 1 else []
        signature = SIGNATURES.get(mnemonic)
        if signature is None:
            diagnostics.append(AsmDiagnostic("UnknownMnemonic", lineno, f"unknown mnemonic '{mnemonic}'"))
            continue
        if len(tokens) != len(signature.operands) or any(not tok for tok in tokens):
            diagnostics.append(AsmDiagnostic(
                "ArityMismatch", lineno,
                f"'{mnemonic}' takes {len(signature.operands)} operand(s), got {len([t for t in tokens if t])}"))
            continue

        operands: List[Operand] = []
        ok = True
        for position, (token, allowed) in enumerate(zip(tokens, signature.operands), start=1):
            operand = _classify(token)
            if operand is not None and operand.kind is OperandKind.MEM and operand.value < 0:
                diagnostics.append(AsmDiagnostic("BadRegister", lineno, f"unknown base register in '{token}'"))
                ok = False
                break
            if operand is not None and operand.kind is OperandKind.LABEL and _looks_like_register(token):
                diagnostics.append(AsmDiagnostic("BadRegister", lineno, f"register '{token}' out of range"))
                ok = False
                break
            if operand is None or operand.kind not in allowed:
                wanted = "/".join(sorted(kind.value for kind in allowed))
                kind = "BadRegister" if operand is not None and operand.kind in (
                    OperandKind.XREG, OperandKind.FREG, OperandKind.VREG, OperandKind.LABEL) else "BadOperand"
                diagnostics.append(AsmDiagnostic(kind, lineno, f"operand {position} '{token}' of '{mnemonic}' must be {wanted}"))
                ok = False
                break
            if operand.kind is OperandKind.LABEL:
                pending_refs.append((operand.label, lineno))
            operands.append(operand)
        if ok:
            instructions.append(Instruction(mnemonic, tuple(operands), lineno))

    for label, lineno in pending_refs:
        if label not in labels:
            diagnostics.append(AsmDiagnostic("UnresolvedLabel", lineno, f"label '{label}' is never defined"))

    if diagnostics:
        raise AssemblyError(diagnostics)
    logger.debug(f"Parsed {len(instructions)} instruction(s), {len(labels)} label(s) from {name or '<text>'}")
    return Program(tuple(instructions), labels, element, name)


def format_program(program: Program) -> str:
    """Pretty-print a program; parse_assembly(format_program(p)) == p."""
    lines: List[str] = []
    if program.name:
        lines.append(f"# {program.name}")
    if program.element:
        lines.append(f".element {program.element}")
    for index, instruction in enumerate(program.instructions):
        for name in program.labels_at(index):
            lines.append(f"{name}:")
        lines.append(f"    {instruction}")
    for name in program.labels_at(len(program.instructions)):
        lines.append(f"{name}:")
    return "\n".join(lines) + "\n"


def load_program(path: Union[str, Path]) -> Program:
    path = Path(path)
    return parse_assembly(path.read_text(encoding="utf-8"), name=path.stem)


def grant_tile_dim(requested: int, dim: str, cfg: MachineConfig) -> int:
    """Largest supported sub-tile size not above the request (vsetvl-style granting)."""
    if requested < 1:
        raise ValueError(f"requested {dim} must be >= 1, got {requested}")
    if cfg.strict_subtile_sizes:
        supported = [size for size in STRICT_SUBTILE_SIZES if size <= requested]
        granted = max(supported) if supported else min(STRICT_SUBTILE_SIZES)
    else:
        granted = 2
        while granted * 2 <= requested:
            granted *= 2
    if granted != requested:
        logger.debug(f"msettile{dim}: requested {requested}, granted {granted}")
    return granted
