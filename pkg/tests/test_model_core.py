import json
import tempfile
import unittest
from pathlib import Path

from model_core import (
    MACHINE_PRESETS,
    ConfigError,
    ElementType,
    MachineConfig,
    ProblemShape,
    SubTileConfig,
    TileConfig,
    ValidationError,
    allocate_groups,
    baseline_register_plan,
    check,
    load_config,
    load_run_config,
    machine_config_from_dict,
    mx_register_plan,
    presets,
    run_config_from_dict,
    run_config_to_dict,
    validate,
)

DUAL = MACHINE_PRESETS["dual-core"]
MANY = MACHINE_PRESETS["64-core"]


class ShapeParsingTests(unittest.TestCase):
    def test_problem_parse_and_counts(self):
        problem = ProblemShape.parse("64x32x16")

        self.assertEqual((problem.M, problem.N, problem.K), (64, 32, 16))
        self.assertEqual(problem.macs, 64 * 32 * 16)
        self.assertEqual(problem.flops, 2 * problem.macs)

    def test_tile_parse_accepts_commas(self):
        self.assertEqual(TileConfig.parse("8,16,4"), TileConfig(8, 16, 4))
        self.assertTrue(TileConfig.parse("8x16x1").is_baseline)
        self.assertFalse(TileConfig(8, 16, 4).is_baseline)

    def test_bad_dimensions_raise_config_error(self):
        with self.assertRaises(ConfigError):
            ProblemShape.parse("64x64")
        with self.assertRaises(ConfigError):
            TileConfig(0, 4, 4)
        with self.assertRaises(ConfigError):
            SubTileConfig(4, 4, 4, broadcast_B=0)

    def test_element_type_aliases(self):
        self.assertIs(ElementType.parse("8"), ElementType.FLOAT64)
        self.assertIs(ElementType.parse(4), ElementType.FLOAT32)
        self.assertIs(ElementType.parse("i32"), ElementType.INT32)
        with self.assertRaises(ConfigError):
            ElementType.parse("float16")


class MachineConfigTests(unittest.TestCase):
    def test_presets_share_the_vrf_geometry(self):
        for cfg in (DUAL, MANY):
            self.assertEqual(cfg.vrf_bytes, 2048)
            self.assertEqual(cfg.vreg_bits, 512)
            self.assertEqual(cfg.fpus, 4)
            self.assertEqual(cfg.mem_ports, 4)
            self.assertEqual(cfg.buffer_bytes, 256)
            self.assertEqual(cfg.check(), [])
        self.assertEqual((DUAL.cores, DUAL.element), (2, ElementType.FLOAT64))
        self.assertEqual((MANY.cores, MANY.element), (64, ElementType.FLOAT32))

    def test_presets_returns_a_copy(self):
        table = presets()
        table.pop("single")

        self.assertIn("single", presets())
        self.assertEqual(set(table), {"dual-core", "64-core"})

    def test_vlmax_and_group_sizes(self):
        self.assertEqual(DUAL.vlmax(1), 8)
        self.assertEqual(DUAL.vlmax(), 64)
        self.assertEqual(DUAL.group_regs(16), 2)
        self.assertEqual(DUAL.group_regs(24), 4)
        self.assertEqual(MANY.group_regs(32), 2)

    def test_inconsistent_vrf_is_reported(self):
        kinds = [v.kind for v in MachineConfig(vrf_bytes=4096).check()]
        self.assertIn("MachineConfig", kinds)

    def test_from_dict_aliases_and_preset(self):
        cfg = machine_config_from_dict({"preset": "64-core", "ew": 8, "F": 8})

        self.assertEqual(cfg.cores, 64)
        self.assertEqual(cfg.element, ElementType.FLOAT64)
        self.assertEqual(cfg.fpus, 8)

    def test_unknown_preset(self):
        with self.assertRaises(ConfigError):
            machine_config_from_dict({"preset": "quad-core"})


class RegisterPlanTests(unittest.TestCase):
    def test_groups_are_aligned_to_their_size(self):
        self.assertEqual(allocate_groups(DUAL, [8, 32, 16]), [0, 4, 8])

    def test_plans_for_table_rows(self):
        self.assertEqual(len(baseline_register_plan(DUAL, TileConfig(8, 16, 1))), 9)
        self.assertEqual(mx_register_plan(DUAL, SubTileConfig(8, 4, 4, 4)), [0, 4, 8, 12, 16, 20])

    def test_plan_overflow_returns_none(self):
        self.assertIsNone(baseline_register_plan(DUAL, TileConfig(16, 32, 1)))


class ValidationTests(unittest.TestCase):
    def setUp(self):
        self.problem = ProblemShape(64, 64, 64)

    def kinds(self, tile, sub=None, cfg=DUAL, **kwargs):
        return {v.kind for v in check(self.problem, tile, sub, cfg, **kwargs)[0]}

    def test_table_rows_are_valid(self):
        validate(self.problem, TileConfig(8, 16, 4), SubTileConfig(8, 4, 4, 4), DUAL)
        validate(self.problem, TileConfig(4, 32, 1), None, DUAL)

    def test_non_divisible_tile(self):
        self.assertIn("NonDivisible", self.kinds(TileConfig(6, 16, 1)))

    def test_strict_subtile_sizes(self):
        self.assertIn("SubTileOutOfRange", self.kinds(TileConfig(16, 16, 4), SubTileConfig(16, 4, 4, 4)))
        relaxed = MachineConfig(strict_subtile_sizes=False)
        self.assertNotIn("SubTileOutOfRange", self.kinds(TileConfig(2, 4, 2), SubTileConfig(2, 2, 2, 2), relaxed))

    def test_buffer_overflow(self):
        self.assertIn("BufferOverflow", self.kinds(TileConfig(8, 8, 8), SubTileConfig(8, 8, 8, 1)))

    def test_vl_mismatch_when_output_exceeds_vl(self):
        self.assertIn("VlMismatch", self.kinds(TileConfig(4, 8, 4), SubTileConfig(4, 8, 4, 1)))

    def test_baseline_needs_k_one(self):
        self.assertIn("BaselineRequiresKEquals1", self.kinds(TileConfig(8, 16, 4)))

    def test_mx_shape_rule(self):
        self.assertIn("MxShape", self.kinds(TileConfig(8, 16, 8), SubTileConfig(8, 4, 4, 4)))

    def test_mx_shape_rule_applies_to_predictions(self):
        kinds = self.kinds(TileConfig(8, 16, 4), SubTileConfig(8, 4, 4, 1), for_kernel=False)

        self.assertIn("MxShape", kinds)
        self.assertEqual(self.kinds(TileConfig(8, 16, 4), SubTileConfig(8, 4, 4, 4), for_kernel=False), set())

    def test_register_pressure(self):
        self.assertIn("RegisterPressure", self.kinds(TileConfig(16, 32, 1)))

    def test_whole_k_residency_needs_single_subtile(self):
        kinds = self.kinds(TileConfig(8, 16, 4), SubTileConfig(8, 4, 4, 4), whole_k_buffering=True)
        self.assertIn("BufferResidency", kinds)

    def test_validation_error_lists_every_violation(self):
        with self.assertRaises(ValidationError) as ctx:
            validate(self.problem, TileConfig(6, 16, 4), None, DUAL)
        self.assertIn("NonDivisible", ctx.exception.kinds)
        self.assertIn("BaselineRequiresKEquals1", ctx.exception.kinds)

    def test_wide_tile_is_a_warning(self):
        problem = ProblemShape(16, 16, 16)
        checked = validate(problem, TileConfig(4, 32, 1), None, DUAL)

        self.assertEqual(len(checked.warnings), 1)
        self.assertEqual(checked.kernel_tile, TileConfig(4, 16, 1))


class ConfigFileTests(unittest.TestCase):
    def test_missing_file_gives_defaults(self):
        config = load_config(Path(tempfile.gettempdir()) / "does-not-exist-mxsim.json")

        self.assertEqual(config["timing"]["overlap"], 1.0)
        self.assertEqual(config["logging"]["level"], "INFO")
        self.assertEqual(config["machine"], {})

    def test_partial_file_is_completed(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "config.json"
            path.write_text(json.dumps({"timing": {}, "energy": {"e_mem": 20}}))
            config = load_config(path)

        self.assertEqual(config["energy"], {"e_mem": 20})
        self.assertEqual(config["timing"]["overlap"], 1.0)
        self.assertEqual(config["explore"]["workers"], 0)

    def test_run_config_round_trip(self):
        data = {
            "problem": {"m": 64, "n": 64, "k": 64},
            "tile": {"m": 8, "n": 16, "k": 4},
            "subtile": {"m": 8, "n": 4, "k": 4, "b": 4},
            "machine": {"preset": "dual-core"},
            "expected": {"mem_vrf_total": 53248},
        }
        run = run_config_from_dict(data, name="row")
        again = run_config_from_dict(run_config_to_dict(run), name="row")

        self.assertEqual(run, again)
        self.assertEqual(run.kind, "mx")

    def test_fixture_loads(self):
        path = Path(__file__).parent.parent / "fixtures" / "table3" / "mc_mx_256_8x32x8.cfg"
        run = load_run_config(path)

        self.assertEqual(run.name, "mc_mx_256_8x32x8")
        self.assertEqual(run.machine.cores, 64)
        self.assertEqual(run.sub.broadcast_B, 8)

    def test_missing_sections(self):
        with self.assertRaises(ConfigError):
            run_config_from_dict({"problem": {"m": 4, "n": 4, "k": 4}})


if __name__ == "__main__":
    unittest.main()
