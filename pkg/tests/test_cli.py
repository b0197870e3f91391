import csv
import io
import json
import tempfile
import unittest
from contextlib import redirect_stdout
from pathlib import Path
from unittest.mock import patch

import mx_sim
import reports
from isa import parse_assembly

FIXTURES = Path(__file__).parent.parent / "fixtures"


def _run(*argv):
    out = io.StringIO()
    with redirect_stdout(out):
        status = mx_sim.main([argv[0], "-q", *argv[1:]])
    return status, out.getvalue()


class PredictCommandTests(unittest.TestCase):
    def test_single_element_problem(self):
        status, out = _run("predict", "--problem", "1x1x1", "--tile", "1,1,1", "--preset", "single")
        doc = json.loads(out)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(doc["mem_vrf_total"], 3)
        self.assertEqual(doc["simd_ratio_comp"], 1)
        self.assertIn("roofline_flop_per_cycle", doc)

    def test_buffering_flags(self):
        status, out = _run("predict", "--problem", "1x1x1", "--tile", "1,1,1", "--preset", "single",
                           "--opts", "interk_vrf")
        doc = json.loads(out)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(doc["mem_vrf_total"], 4)
        self.assertEqual(doc["arithmetic_intensity"], 0.0625)

    def test_fixture_as_csv(self):
        status, out = _run("predict", "--config", str(FIXTURES / "table3" / "dc_mx_64_8x16x4.cfg"), "--format", "csv")
        reader = csv.DictReader(io.StringIO(out))
        (values,) = list(reader)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(reader.fieldnames, reports.COLUMNS)
        self.assertEqual(values["tile"], "8,16,4")
        self.assertEqual(values["mem_vrf_total"], "53248")
        self.assertEqual(values["mem_vrf.b"], "32768")
        self.assertEqual(values["kind"], "mx")

    def test_invalid_tile(self):
        status, out = _run("predict", "--problem", "64x64x64", "--tile", "6,16,1")

        self.assertEqual(status, mx_sim.EXIT_INVALID)
        self.assertEqual(out, "")

    def test_subtile_must_tile_n(self):
        status, out = _run("predict", "--problem", "64x64x64", "--tile", "8,16,4", "--subtile", "8,4,4")

        self.assertEqual(status, mx_sim.EXIT_INVALID)
        self.assertEqual(out, "")

    def test_missing_tile(self):
        self.assertEqual(_run("predict", "--problem", "64x64x64")[0], mx_sim.EXIT_INVALID)

    def test_argument_errors(self):
        with redirect_stdout(io.StringIO()), patch("sys.stderr", new=io.StringIO()):
            self.assertEqual(mx_sim.main(["frobnicate"]), mx_sim.EXIT_INVALID)
            self.assertEqual(mx_sim.main(["predict", "--format", "xml"]), mx_sim.EXIT_INVALID)

    def test_format_defaults_per_command(self):
        parser = mx_sim.build_parser()

        self.assertIsNone(parser.parse_args(["simulate"]).format)
        self.assertIsNone(parser.parse_args(["table3"]).format)
        self.assertEqual(parser.parse_args(["predict", "--format", "csv"]).format, "csv")
        status, out = _run("predict", "--problem", "64x64x64", "--tile", "8,16,1")
        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(json.loads(out)["mem_vrf_total"], 53248)

    def test_output_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            target = Path(tmp) / "row.txt"
            status, out = _run("predict", "--problem", "64x64x64", "--tile", "8,16,1", "--format", "table",
                               "-o", str(target))
            text = target.read_text()

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(out, "")
        self.assertIn("mem_vrf_total", text)
        self.assertIn("53248", text)


class SimulateCommandTests(unittest.TestCase):
    def test_generated_kernel_with_check(self):
        status, out = _run("simulate", "--problem", "16x16x16", "--tile", "8,16,4", "--subtile", "8,4,4",
                           "--bcast", "4", "--preset", "dual-core", "--check")
        doc = json.loads(out)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(doc["check"], {"bit_exact": True, "within_tolerance": True})
        self.assertEqual(doc["ledgers"]["mem_vrf"]["b"], 512)
        self.assertEqual(doc["cores"], 2)
        self.assertEqual(doc["simd_ratio_comp"], 256)

    def test_forced_baseline_kernel(self):
        status, out = _run("simulate", "--config", str(FIXTURES / "table3" / "dc_baseline_16_8x16x1.cfg"),
                           "--kernel", "baseline", "--format", "table")

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertIn("cycles", out.splitlines()[0])

    def test_assembly_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "load.mxasm"
            path.write_text(".element float64\nli a0, 64\nvsetvl t0, 8\nvle v0, (a0)\n")
            status, out = _run("simulate", "--asm", str(path), "--mem-size", "1024")
        doc = json.loads(out)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(doc["insns"]["total"], 3)
        self.assertEqual(doc["ledgers"]["mem_vrf"]["b"], 8)

    def test_faulting_program(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.mxasm"
            path.write_text("li a0, 4\nvsetvl t0, 8\nvle v0, (a0)\n")
            status, _ = _run("simulate", "--asm", str(path))

        self.assertEqual(status, mx_sim.EXIT_SIMULATION)

    def test_unparsable_program(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "bad.mxasm"
            path.write_text("vle v0\n")
            status, _ = _run("simulate", "--asm", str(path))

        self.assertEqual(status, mx_sim.EXIT_INVALID)


class VerifyCommandTests(unittest.TestCase):
    def test_wide_tile_is_expected(self):
        status, out = _run("verify", "--config", str(FIXTURES / "table3" / "dc_baseline_16_4x32x1.cfg"))
        doc = json.loads(out)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(doc["verdict"], "EXPECTED")
        self.assertEqual({d["boundary"] for d in doc["diffs"]}, {"mem_vrf"})

    def _fixture_dir(self, tmp, expected_total):
        data = {
            "problem": {"m": 16, "n": 16, "k": 16},
            "tile": {"m": 8, "n": 16, "k": 1},
            "machine": {"preset": "dual-core"},
            "expected": {"mem_vrf_total": expected_total},
        }
        (Path(tmp) / "row.cfg").write_text(json.dumps(data))
        return tmp

    def test_table3_pass(self):
        with tempfile.TemporaryDirectory() as tmp:
            status, out = _run("table3", "--fixtures", self._fixture_dir(tmp, 1024))

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertIn("PASS", out)
        self.assertEqual(out.splitlines()[0].split()[0], "name")

    def test_table3_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            status, out = _run("table3", "--fixtures", self._fixture_dir(tmp, 1000), "--predict-only")

        self.assertEqual(status, mx_sim.EXIT_MISMATCH)
        self.assertIn("FAIL", out)

    def test_table3_without_fixtures(self):
        with tempfile.TemporaryDirectory() as tmp:
            self.assertEqual(_run("table3", "--fixtures", tmp)[0], mx_sim.EXIT_INVALID)


class ExploreCommandTests(unittest.TestCase):
    def test_top_result(self):
        status, out = _run("explore", "--problem", "64x64x64", "--preset", "dual-core", "--top", "2", "--workers", "2")
        doc = json.loads(out)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(len(doc["results"]), 2)
        self.assertEqual(doc["results"][0]["tile"], "8,16,4")

    def test_empty_space(self):
        status, _ = _run("explore", "--problem", "64x64x64", "--m-values", "3")

        self.assertEqual(status, mx_sim.EXIT_INVALID)

    @patch("mx_sim.psutil.cpu_count", return_value=3)
    def test_worker_count(self, _):
        self.assertEqual(mx_sim.explore_workers(0, {}), 3)
        self.assertEqual(mx_sim.explore_workers(0, {"explore": {"workers": 2}}), 2)
        self.assertEqual(mx_sim.explore_workers(5, {}), 5)


class AssembleCommandTests(unittest.TestCase):
    def test_one_core(self):
        status, out = _run("assemble", "--problem", "16x16x16", "--tile", "8,16,4", "--subtile", "8,4,4",
                           "--bcast", "4", "--preset", "dual-core", "--core", "1")
        program = parse_assembly(out)

        self.assertEqual(status, mx_sim.EXIT_OK)
        self.assertEqual(program.element, "float64")
        self.assertIn("mxfmacc", {i.mnemonic for i in program.instructions})

    def test_core_out_of_range(self):
        status, _ = _run("assemble", "--problem", "16x16x16", "--tile", "8,16,1", "--preset", "dual-core",
                         "--core", "5")

        self.assertEqual(status, mx_sim.EXIT_INVALID)


if __name__ == "__main__":
    unittest.main()
