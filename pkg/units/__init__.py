"""Instruction semantics for the simulated core, grouped by execution unit."""

from importlib import import_module
from typing import Any, Callable, Dict, Optional

from isa import SIGNATURES

# A handler executes one instruction against a MachineState and returns the
# next program counter, or None to fall through to the next instruction.
Handler = Callable[[Any, Any], Optional[int]]


class UnitRegistry:
    def __init__(self):
        self._handlers: Dict[str, Handler] = {}

    def register(self, mnemonic: str, func: Handler) -> None:
        self._handlers[mnemonic] = func

    def resolve(self, mnemonic: str) -> Handler:
        if mnemonic in self._handlers:
            return self._handlers[mnemonic]
        signature = SIGNATURES.get(mnemonic)
        if signature is None:
            raise KeyError(f"No instruction '{mnemonic}'")
        module = import_module(f"units.{signature.unit}")
        if hasattr(module, "register"):
            module.register(self)
        if mnemonic not in self._handlers:
            raise KeyError(f"Unit '{signature.unit}' did not register '{mnemonic}'")
        return self._handlers[mnemonic]


def normalize_next_pc(result: Optional[int], pc: int) -> int:
    """Handlers return a branch target or None for fall-through."""
    return pc + 1 if result is None else int(result)


registry = UnitRegistry()
