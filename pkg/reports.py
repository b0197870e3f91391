"""Rendering of predictions, run reports and verification rows as json, csv or a text table."""

import json
from fractions import Fraction
from typing import Any, Dict, Iterable, Optional, Sequence

import pandas as pd

from model_core import Boundary, MachineConfig, ProblemShape, SubTileConfig, TileConfig, TransferLedger

FORMATS = ("json", "csv", "table")

CONFIG_COLUMNS = ["name", "kind", "problem", "tile", "subtile", "bcast", "element", "cores"]
TERM_KEYS = ("a", "b", "cd_down", "d_up")
LEDGER_COLUMNS = [f"{boundary.value}.{term}" for boundary in Boundary for term in TERM_KEYS]
METRIC_COLUMNS = ["mem_vrf_total", "arithmetic_intensity", "simd_ratio_comp", "simd_ratio_all",
                  "energy", "macs", "cycles", "utilization", "verdict"]
COLUMNS = CONFIG_COLUMNS + LEDGER_COLUMNS + METRIC_COLUMNS


def config_fields(problem: ProblemShape, tile: TileConfig, sub: Optional[SubTileConfig],
                  cfg: MachineConfig, name: str = "") -> Dict[str, Any]:
    return {
        "name": name,
        "kind": "baseline" if sub is None else "mx",
        "problem": str(problem),
        "tile": str(tile),
        "subtile": str(sub) if sub else "",
        "bcast": sub.broadcast_B if sub else "",
        "element": cfg.element.kind,
        "cores": cfg.cores,
    }


def ledger_fields(ledger: TransferLedger) -> Dict[str, Any]:
    row = {}
    for boundary, terms in ledger.to_dict().items():
        for term in TERM_KEYS:
            row[f"{boundary}.{term}"] = terms[term]
    return row


def _jsonable(value: Any) -> Any:
    if isinstance(value, Fraction):
        return int(value) if value.denominator == 1 else float(value)
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def to_json(document: Any) -> str:
    return json.dumps(document, indent=2, default=_jsonable)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}".rstrip("0").rstrip(".") if value != int(value) else str(int(value))
    return str(value)


def _frame(rows: Iterable[Dict[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    return pd.DataFrame([{key: _cell(row.get(key)) for key in columns} for row in rows], columns=list(columns))


def to_csv(rows: Iterable[Dict[str, Any]]) -> str:
    return _frame(rows, COLUMNS).to_csv(index=False, lineterminator="\n")


def to_table(rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> str:
    """Aligned text table; columns empty in every row are left out."""
    rows = list(rows)
    if columns is None:
        columns = [c for c in COLUMNS if any(row.get(c) not in (None, "", 0) for row in rows)]
    return _frame(rows, columns).to_string(index=False) + "\n"


def render(documents: Sequence[Dict[str, Any]], rows: Sequence[Dict[str, Any]], fmt: str) -> str:
    """json renders the full documents (one object, or a list), csv/table the flat rows."""
    if fmt == "json":
        return to_json(documents[0] if len(documents) == 1 else list(documents)) + "\n"
    if fmt == "csv":
        return to_csv(rows)
    if fmt == "table":
        return to_table(rows)
    raise ValueError(f"Unknown output format '{fmt}'")
