#!/usr/bin/env python3
"""
mx-sim - cost model and functional simulator for a matrix extension of a
RISC-V vector core.

Subcommands: predict (closed forms), simulate (run a generated kernel or an
.mxasm file), verify (simulate vs predict vs golden result), explore (rank a
tiling search space), assemble (dump a generated kernel) and table3 (verify
every fixture under fixtures/table3).
"""

import argparse
import logging
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import psutil

import reports
from cost_model import (
    KERNEL_OPTIONS,
    BufferingOptions,
    EnergyCoefficients,
    Prediction,
    energy_estimate,
    predict,
    roofline_bound,
)
from isa import AssemblyError, Program, format_program, load_program
from kernels import KernelRun, generate, simulate_kernel
from machine import Memory, RunReport, SimulationError, run_cluster
from model_core import (
    MACHINE_PRESETS,
    ConfigError,
    ElementType,
    MachineConfig,
    MxSimError,
    ProblemShape,
    RunConfig,
    SubTileConfig,
    TileConfig,
    ValidationError,
    check,
    exact,
    load_config,
    load_run_config,
    machine_config_from_dict,
    run_config_to_dict,
    validate,
)

FIXTURES_DIR = Path(__file__).parent / "fixtures" / "table3"
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_SIMULATION = 2
EXIT_MISMATCH = 3

logger = logging.getLogger("mxsim")


def setup_logging(level: int, log_file: Optional[str] = None) -> None:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(Path(log_file).expanduser()))
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)


# --- run configuration -------------------------------------------------------

def base_machine(config: Dict[str, Any], preset: Optional[str] = None) -> MachineConfig:
    """Machine from config.json, optionally replaced by a named preset (timing kept)."""
    machine = machine_config_from_dict(config.get("machine", {}))
    overlap = float(config.get("timing", {}).get("overlap", machine.overlap))
    if preset:
        if preset not in MACHINE_PRESETS:
            raise ConfigError(f"Unknown machine preset '{preset}' (known: {', '.join(MACHINE_PRESETS)})")
        machine = MACHINE_PRESETS[preset]
    return replace(machine, overlap=overlap)


def resolve_run(args: argparse.Namespace, config: Dict[str, Any]) -> RunConfig:
    """Combine config.json, an optional .cfg file and explicit flags (flags win)."""
    machine = base_machine(config, getattr(args, "preset", None))
    run = load_run_config(args.config, machine) if getattr(args, "config", None) else None

    if args.problem:
        problem = ProblemShape.parse(args.problem)
    elif run:
        problem = run.problem
    else:
        raise ConfigError("--problem (or --config) is required")
    if args.tile:
        tile = TileConfig.parse(args.tile)
    elif run:
        tile = run.tile
    else:
        raise ConfigError("--tile (or --config) is required")

    if args.subtile:
        sub: Optional[SubTileConfig] = SubTileConfig.parse(args.subtile, args.bcast or 1)
    else:
        sub = run.sub if run else None
        if sub is not None and args.bcast:
            sub = replace(sub, broadcast_B=args.bcast)
    kernel = getattr(args, "kernel", None)
    if kernel == "baseline":
        sub = None
    elif kernel == "mx" and sub is None:
        raise ConfigError("--kernel mx needs --subtile")

    if run:
        machine = run.machine
    updates: Dict[str, Any] = {}
    if args.ew:
        updates["element"] = ElementType.parse(args.ew)
    if args.cores:
        updates["cores"] = args.cores
    if args.no_strict:
        updates["strict_subtile_sizes"] = False
    if args.resident:
        updates["buffer_resident_accumulation"] = True
    if args.overlap is not None:
        updates["overlap"] = args.overlap
    machine = replace(machine, **updates)

    options = dict(run.options) if run else {}
    if args.opts:
        options["buffering"] = args.opts
    name = run.name if run else ""
    return RunConfig(problem, tile, sub, machine, options, dict(run.expected) if run else {}, name)


def buffering_options(run: RunConfig) -> BufferingOptions:
    names = run.options.get("buffering")
    if not names:
        return KERNEL_OPTIONS
    try:
        return BufferingOptions.from_names(names)
    except ValueError as e:
        raise ConfigError(str(e))


def energy_coefficients(config: Dict[str, Any]) -> EnergyCoefficients:
    try:
        return EnergyCoefficients.from_dict(config.get("energy"))
    except ValueError as e:
        raise ConfigError(str(e))


def emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
        logger.info(f"Wrote {output}")
    else:
        sys.stdout.write(text)


# --- predict -----------------------------------------------------------------

def prediction_for(run: RunConfig, coeffs: EnergyCoefficients,
                   opts: Optional[BufferingOptions] = None) -> Prediction:
    opts = opts or buffering_options(run)
    violations, warnings = check(run.problem, run.tile, run.sub, run.machine, for_kernel=False,
                                 whole_k_buffering=opts.interk_buf and opts.interk_buf_scope == "K")
    violations += opts.check(run.machine, run.sub)
    if violations:
        raise ValidationError(violations)
    for warning in warnings:
        logger.warning(warning)
    return predict(run.problem, run.tile, run.sub, run.machine, opts, coeffs)


def prediction_row(run: RunConfig, pred: Prediction) -> Dict[str, Any]:
    row = reports.config_fields(run.problem, run.tile, run.sub, run.machine, run.name)
    row.update(reports.ledger_fields(pred.ledger))
    row.update({
        "mem_vrf_total": pred.mem_vrf_total,
        "arithmetic_intensity": pred.intensity,
        "simd_ratio_comp": pred.simd_ratio_comp,
        "simd_ratio_all": pred.simd_ratio_all,
        "energy": pred.energy,
        "macs": pred.macs,
    })
    return row


def cmd_predict(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    run = resolve_run(args, config)
    pred = prediction_for(run, energy_coefficients(config))
    cfg = run.machine
    doc = {"config": run_config_to_dict(run), **pred.to_dict()}
    doc["roofline_flop_per_cycle"] = roofline_bound(pred.intensity, 2 * cfg.fpus * cfg.cores,
                                                    cfg.mem_ports * cfg.width * cfg.cores)
    emit(reports.render([doc], [prediction_row(run, pred)], args.format), args.output)
    return EXIT_OK


# --- simulate ----------------------------------------------------------------

def report_row(run: RunConfig, report: RunReport, energy: float) -> Dict[str, Any]:
    row = reports.config_fields(run.problem, run.tile, run.sub, run.machine, run.name)
    row.update(reports.ledger_fields(report.ledger))
    row.update({
        "mem_vrf_total": report.ledger.mem_vrf.total,
        "simd_ratio_comp": report.simd_ratio_comp,
        "simd_ratio_all": report.simd_ratio_all,
        "energy": energy,
        "macs": report.macs,
        "cycles": report.cycles,
        "utilization": report.utilization,
    })
    if report.macs and report.ledger.mem_vrf.total:
        row["arithmetic_intensity"] = 2 * report.macs / (report.ledger.mem_vrf.total * run.machine.width)
    return row


def simulated_energy(report: RunReport, coeffs: EnergyCoefficients) -> float:
    return energy_estimate(report.ledger, report.vector_insns, coeffs, report.macs)


def simulate_asm(args: argparse.Namespace, machine: MachineConfig) -> Tuple[RunReport, Program]:
    program = load_program(args.asm)
    if program.element:
        machine = replace(machine, element=ElementType.parse(program.element))
    machine = replace(machine, cores=1)
    if args.init:
        memory = Memory.from_bytes(Path(args.init).read_bytes(), size=args.mem_size)
    else:
        memory = Memory(args.mem_size)
    _, report = run_cluster([program], memory, machine, args.step_limit)
    return report, program


def cmd_simulate(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    coeffs = energy_coefficients(config)
    if args.asm:
        machine = base_machine(config, args.preset)
        report, program = simulate_asm(args, machine)
        doc = report.to_dict()
        doc["energy"] = simulated_energy(report, coeffs)
        row = {"name": program.name, "kind": "asm", "element": program.element or machine.element.kind,
               **reports.ledger_fields(report.ledger), "mem_vrf_total": report.ledger.mem_vrf.total,
               "macs": report.macs, "cycles": report.cycles, "utilization": report.utilization,
               "simd_ratio_comp": report.simd_ratio_comp, "simd_ratio_all": report.simd_ratio_all,
               "energy": doc["energy"]}
        emit(reports.render([doc], [row], args.format), args.output)
        return EXIT_OK

    run = resolve_run(args, config)
    validate(run.problem, run.tile, run.sub, run.machine)
    result = simulate_kernel(run.problem, run.tile, run.sub, run.machine, seed=args.seed)
    energy = simulated_energy(result.report, coeffs)
    doc = {"config": run_config_to_dict(run), **result.report.to_dict(), "energy": energy}
    row = report_row(run, result.report, energy)
    status = EXIT_OK
    if args.check:
        exact_ok, close_ok = result.check(), result.close_to_free()
        doc["check"] = {"bit_exact": exact_ok, "within_tolerance": close_ok}
        row["verdict"] = "PASS" if exact_ok and close_ok else "FAIL"
        if not (exact_ok and close_ok):
            logger.error(f"Result check failed: bit_exact={exact_ok} within_tolerance={close_ok}")
            status = EXIT_MISMATCH
    emit(reports.render([doc], [row], args.format), args.output)
    return status


# --- verify ------------------------------------------------------------------

@dataclass
class Verification:
    run: RunConfig
    prediction: Prediction
    result: Optional[KernelRun] = None
    diffs: List[Tuple[str, str, Any, Any]] = field(default_factory=list)
    explained: List[str] = field(default_factory=list)
    alternate_diffs: Optional[List[Tuple[str, str, Any, Any]]] = None
    expectation_failures: List[str] = field(default_factory=list)
    bit_exact: bool = True
    within_tolerance: bool = True

    @property
    def unexplained(self) -> List[Tuple[str, str, Any, Any]]:
        return [d for d in self.diffs if not self._explains(d)]

    def _explains(self, diff: Tuple[str, str, Any, Any]) -> bool:
        boundary = diff[0]
        if boundary == "mem_vrf" and self.run.tile != self.run.tile.clamp(self.run.problem):
            return True
        return boundary == "vrf_buf" and self.run.machine.buffer_resident_accumulation

    @property
    def verdict(self) -> str:
        if self.expectation_failures or not (self.bit_exact and self.within_tolerance) or self.unexplained:
            return "FAIL"
        return "EXPECTED" if self.diffs else "PASS"

    def to_dict(self) -> Dict[str, Any]:
        def listing(diffs):
            return [{"boundary": b, "term": t, "predicted": p, "measured": m} for b, t, p, m in diffs]

        doc: Dict[str, Any] = {
            "name": self.run.name,
            "config": run_config_to_dict(self.run),
            "verdict": self.verdict,
            "prediction": self.prediction.to_dict(),
            "diffs": listing(self.diffs),
            "explained": self.explained,
            "expectation_failures": self.expectation_failures,
        }
        if self.alternate_diffs is not None:
            doc["alternate_model_diffs"] = listing(self.alternate_diffs)
        if self.result is not None:
            doc["simulation"] = self.result.report.to_dict()
            doc["check"] = {"bit_exact": self.bit_exact, "within_tolerance": self.within_tolerance}
        return doc


def ledger_diffs(predicted, measured) -> List[Tuple[str, str, Any, Any]]:
    diffs = []
    for (boundary, want), (_, got) in zip(predicted.items(), measured.items()):
        for term, p, m in zip(reports.TERM_KEYS, want.as_tuple(), got.as_tuple()):
            if exact(p) != m:
                diffs.append((boundary.value, term, p, m))
    return diffs


def expectation_failures(run: RunConfig, pred: Prediction) -> List[str]:
    """Compare a prediction with a fixture's `expected` block."""
    failures = []
    expected = run.expected
    if "mem_vrf_total" in expected and pred.mem_vrf_total != expected["mem_vrf_total"]:
        failures.append(f"mem_vrf_total {pred.mem_vrf_total} != {expected['mem_vrf_total']}")
    if "arithmetic_intensity" in expected and abs(round(pred.intensity, 2) - expected["arithmetic_intensity"]) > 0.01:
        failures.append(f"arithmetic_intensity {pred.intensity:.2f} != {expected['arithmetic_intensity']}")
    if "simd_ratio_comp" in expected and pred.simd_ratio_comp != expected["simd_ratio_comp"]:
        failures.append(f"simd_ratio_comp {pred.simd_ratio_comp} != {expected['simd_ratio_comp']}")
    return failures


def verify_run(run: RunConfig, coeffs: EnergyCoefficients, seed: int = 0, simulate: bool = True,
               programs: Optional[Sequence[Program]] = None) -> Verification:
    """Predict with the kernels' buffering model, simulate, and compare term by term."""
    pred = prediction_for(run, coeffs, KERNEL_OPTIONS)
    outcome = Verification(run, pred, expectation_failures=expectation_failures(run, pred))
    if not simulate:
        return outcome

    validate(run.problem, run.tile, run.sub, run.machine)
    result = simulate_kernel(run.problem, run.tile, run.sub, run.machine, seed=seed, programs=programs)
    outcome.result = result
    outcome.diffs = ledger_diffs(pred.ledger, result.report.ledger)
    outcome.bit_exact = result.check()
    outcome.within_tolerance = result.close_to_free()
    if run.tile != run.tile.clamp(run.problem):
        outcome.explained.append(f"tile {run.tile} executes as {run.tile.clamp(run.problem)}")
    if run.machine.buffer_resident_accumulation:
        outcome.explained.append("buffer-resident accumulation changes the VRF<->buffer C/D traffic")
    if run.options.get("buffering"):
        alternate = prediction_for(run, coeffs)
        outcome.alternate_diffs = ledger_diffs(alternate.ledger, result.report.ledger)

    for boundary, term, p, m in outcome.diffs:
        level = logging.INFO if outcome._explains((boundary, term, p, m)) else logging.WARNING
        logger.log(level, f"{run.name or 'run'}: {boundary}.{term} predicted {p}, measured {m}")
    if not outcome.bit_exact:
        logger.warning(f"{run.name or 'run'}: result differs from the golden product")
    return outcome


def verification_row(outcome: Verification) -> Dict[str, Any]:
    if outcome.result is not None:
        report = outcome.result.report
        row = report_row(outcome.run, report, outcome.prediction.energy)
        row["arithmetic_intensity"] = outcome.prediction.intensity
    else:
        row = prediction_row(outcome.run, outcome.prediction)
    row["verdict"] = outcome.verdict
    return row


def cmd_verify(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    run = resolve_run(args, config)
    outcome = verify_run(run, energy_coefficients(config), seed=args.seed)
    emit(reports.render([outcome.to_dict()], [verification_row(outcome)], args.format), args.output)
    logger.info(f"verify {run.name or run.problem}: {outcome.verdict}")
    return EXIT_MISMATCH if outcome.verdict == "FAIL" else EXIT_OK


def cmd_table3(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    coeffs = energy_coefficients(config)
    directory = Path(args.fixtures)
    paths = sorted(directory.glob("*.cfg"))
    if not paths:
        raise ConfigError(f"No fixtures in {directory}")
    outcomes = []
    for path in paths:
        run = load_run_config(path, base_machine(config))
        outcome = verify_run(run, coeffs, seed=args.seed, simulate=not args.predict_only)
        logger.info(f"{run.name}: {outcome.verdict}")
        outcomes.append(outcome)
    emit(reports.render([o.to_dict() for o in outcomes], [verification_row(o) for o in outcomes], args.format),
         args.output)
    failed = [o.run.name for o in outcomes if o.verdict == "FAIL"]
    if failed:
        logger.error(f"{len(failed)} fixture(s) failed: {', '.join(failed)}")
        return EXIT_MISMATCH
    return EXIT_OK


# --- explore -----------------------------------------------------------------

def _ints(text: str) -> List[int]:
    try:
        return sorted({int(part) for part in str(text).replace(" ", ",").split(",") if part})
    except ValueError:
        raise ConfigError(f"Cannot parse '{text}' as a list of integers")


def candidate_space(problem: ProblemShape, machine: MachineConfig, args: argparse.Namespace
                    ) -> List[Tuple[TileConfig, Optional[SubTileConfig]]]:
    """Every kernel-valid configuration in the flag-defined space."""
    candidates: List[Tuple[TileConfig, Optional[SubTileConfig]]] = []
    rejected = 0
    if args.kind in ("baseline", "all"):
        for m, n in product(_ints(args.m_values), _ints(args.n_values)):
            tile = TileConfig(m, n, 1)
            if check(problem, tile, None, machine)[0]:
                rejected += 1
                continue
            candidates.append((tile, None))
    if args.kind in ("mx", "all"):
        for m, n, k, n_p in product(_ints(args.m_values), _ints(args.n_values), _ints(args.k_values),
                                    _ints(args.sub_n_values)):
            if m not in _ints(args.sub_m_values) or k not in _ints(args.sub_k_values) or n % n_p:
                continue
            tile = TileConfig(m, n, k)
            sub = SubTileConfig(m, n_p, k, broadcast_B=n // n_p)
            if check(problem, tile, sub, machine)[0]:
                rejected += 1
                continue
            candidates.append((tile, sub))
    logger.debug(f"explore: {len(candidates)} candidate(s), {rejected} rejected by validation")
    return candidates


def config_key(pred: Prediction) -> Tuple:
    sub = pred.sub
    return (pred.kind, pred.tile.m, pred.tile.n, pred.tile.k,
            sub.m_p if sub else 0, sub.n_p if sub else 0, sub.k_p if sub else 0, sub.broadcast_B if sub else 0)


def rank_predictions(predictions: Sequence[Prediction], rank: str) -> List[Prediction]:
    """Deterministic ranking; ties go to fewer memory transfers, then the lexicographic config."""
    if rank == "energy":
        def primary(p): return p.energy
    elif rank == "ai":
        def primary(p): return -p.intensity
    elif rank == "transfers":
        def primary(p): return p.mem_vrf_total
    else:
        raise ConfigError(f"Unknown ranking '{rank}'")
    return sorted(predictions, key=lambda p: (primary(p), p.mem_vrf_total, config_key(p)))


def explore_workers(requested: int, config: Dict[str, Any]) -> int:
    workers = requested or int(config.get("explore", {}).get("workers") or 0)
    if workers <= 0:
        workers = psutil.cpu_count(logical=False) or psutil.cpu_count() or 1
    return workers


def cmd_explore(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    if not args.problem:
        raise ConfigError("--problem is required")
    problem = ProblemShape.parse(args.problem)
    machine = base_machine(config, args.preset)
    if args.ew:
        machine = replace(machine, element=ElementType.parse(args.ew))
    if args.cores:
        machine = replace(machine, cores=args.cores)
    if args.no_strict:
        machine = replace(machine, strict_subtile_sizes=False)
    coeffs = energy_coefficients(config)

    candidates = candidate_space(problem, machine, args)
    if not candidates:
        logger.warning(f"Empty search space for {problem}")
        raise ConfigError("search space has no valid configuration")

    workers = explore_workers(args.workers, config)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        predictions = list(pool.map(lambda c: predict(problem, c[0], c[1], machine, KERNEL_OPTIONS, coeffs),
                                    candidates))
    ranked = rank_predictions(predictions, args.rank)
    if args.top:
        ranked = ranked[:args.top]
    logger.info(f"explore {problem}: best {ranked[0].tile} / {ranked[0].sub} by {args.rank}")

    rows = []
    for pred in ranked:
        run = RunConfig(problem, pred.tile, pred.sub, machine)
        rows.append(prediction_row(run, pred))
    emit(reports.render([{"rank": args.rank, "results": [p.to_dict() for p in ranked]}], rows, args.format),
         args.output)
    return EXIT_OK


# --- assemble ----------------------------------------------------------------

def cmd_assemble(args: argparse.Namespace, config: Dict[str, Any]) -> int:
    run = resolve_run(args, config)
    programs = generate(run.problem, run.tile, run.sub, run.machine)
    if args.core is not None:
        if not 0 <= args.core < len(programs):
            raise ConfigError(f"--core {args.core} outside 0..{len(programs) - 1}")
        programs = [programs[args.core]]
    emit("\n".join(format_program(p) for p in programs), args.output)
    return EXIT_OK


# --- argument parsing --------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    common.add_argument("--log-file", help="also log to this file")
    common.add_argument("--machine-config", help="tool configuration (default: config.json next to this script)")
    common.add_argument("--preset", choices=sorted(MACHINE_PRESETS), help="named machine configuration")
    common.add_argument("--format", choices=reports.FORMATS, help="json, csv or table (default: json, table for table3)")
    common.add_argument("--output", "-o", help="write the report here instead of stdout")

    shape = argparse.ArgumentParser(add_help=False)
    shape.add_argument("--config", help="run configuration (.cfg JSON)")
    shape.add_argument("--problem", help="MxNxK")
    shape.add_argument("--tile", help="m,n,k")
    shape.add_argument("--subtile", help="m',n',k' (MX only)")
    shape.add_argument("--bcast", type=int, help="broadcast factor B (n = B*n')")
    shape.add_argument("--ew", help="element width in bytes (4, 8) or type name (float64, float32, int32)")
    shape.add_argument("--cores", type=int)
    shape.add_argument("--opts", help="buffering options, e.g. interk_vrf,c_zero,interk_buf=K")
    shape.add_argument("--no-strict", action="store_true", help="allow any power-of-two sub-tile size")
    shape.add_argument("--resident", action="store_true", help="keep the accumulator in the buffer across mxfmacc")
    shape.add_argument("--overlap", type=float, help="fraction of memory time hidden behind compute")

    parser = argparse.ArgumentParser(prog="mx_sim", description="MX cost model and simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", parents=[common, shape], help="closed-form ledgers and metrics")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", parents=[common, shape], help="run a kernel on the simulated machine")
    p.add_argument("--kernel", choices=("baseline", "mx"))
    p.add_argument("--asm", help="run this .mxasm program instead of a generated kernel")
    p.add_argument("--init", help="raw memory image for --asm")
    p.add_argument("--mem-size", type=int, default=1 << 16, help="memory bytes for --asm")
    p.add_argument("--step-limit", type=int, default=50_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--check", action="store_true", help="compare D with the golden product")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common, shape], help="simulate vs predict vs golden product")
    p.add_argument("--kernel", choices=("baseline", "mx"))
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("explore", parents=[common], help="rank a tiling search space")
    p.add_argument("--problem", required=True)
    p.add_argument("--ew")
    p.add_argument("--cores", type=int)
    p.add_argument("--no-strict", action="store_true")
    p.add_argument("--kind", choices=("mx", "baseline", "all"), default="mx")
    p.add_argument("--m-values", default="4,8")
    p.add_argument("--n-values", default="8,16")
    p.add_argument("--k-values", default="4")
    p.add_argument("--sub-m-values", default="4,8")
    p.add_argument("--sub-n-values", default="4")
    p.add_argument("--sub-k-values", default="4")
    p.add_argument("--rank", choices=("energy", "ai", "transfers"), default="energy")
    p.add_argument("--top", type=int, default=0)
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("assemble", parents=[common, shape], help="print a generated kernel as .mxasm")
    p.add_argument("--kernel", choices=("baseline", "mx"))
    p.add_argument("--core", type=int, help="only this core's program")
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("table3", parents=[common], help="verify every fixture")
    p.add_argument("--fixtures", default=str(FIXTURES_DIR))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--predict-only", action="store_true", help="skip simulation")
    p.set_defaults(func=cmd_table3)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INVALID
    if args.format is None:
        args.format = "table" if args.command == "table3" else "json"

    config = load_config(Path(args.machine_config) if args.machine_config else None)
    if args.verbose:
        level = logging.DEBUG
    elif args.quiet:
        level = logging.WARNING
    else:
        level = getattr(logging, str(config["logging"]["level"]).upper(), logging.INFO)
    setup_logging(level, args.log_file or config["logging"]["file"])

    try:
        return args.func(args, config)
    except (MxSimError, OSError) as e:
        if isinstance(e, SimulationError):
            logger.error(f"Simulation failed: {e}")
            status = EXIT_SIMULATION
        elif isinstance(e, AssemblyError):
            logger.error(f"Assembly failed: {e}")
            status = EXIT_INVALID
        elif isinstance(e, ValidationError):
            logger.error(f"Invalid configuration: {e}")
            status = EXIT_INVALID
        else:
            logger.error(f"{type(e).__name__}: {e}")
            status = EXIT_INVALID
        if args.verbose:
            logger.debug(traceback.format_exc())
        return status


if __name__ == "__main__":
    sys.exit(main())
