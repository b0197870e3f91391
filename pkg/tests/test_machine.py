import unittest

import numpy as np

from isa import X_NAMES, parse_assembly
from kernels import golden_matmul
from machine import (
    BufferOverflow,
    CsrUnset,
    ExecutionAborted,
    MachineState,
    Memory,
    MisalignedAccess,
    OutOfBoundsAccess,
    OverlapError,
    RegisterGroupError,
    RunReport,
    StepLimitExceeded,
    VlMismatch,
    VlUnset,
    run,
    run_cluster,
)
from model_core import Boundary, BoundaryCounts, ElementType, MachineConfig, TransferLedger

A_ADDR, B_ADDR, D_ADDR = 0, 128, 256

TILE_SETUP = """
    msettilem t0, 4
    msettilen t0, 4
    msettilek t0, 4
    li a0, 0
    li a1, 128
    li a2, 256
    li t1, 32
    vsetvl t0, 16
"""

ONE_TILE = TILE_SETUP + """
    vmv.zero v8
    mld.a v0, (a0), t1
    mld.b v4, (a1), t1
    mxfmacc v8, v0, v4
    mst.c v8, (a2), t1
"""


def _state(cfg=None, size=1024):
    return MachineState(cfg or MachineConfig(), Memory(size))


def _run_tile(A, B, cfg=None, text=ONE_TILE):
    state = _state(cfg)
    state.memory.write_matrix(A_ADDR, A)
    state.memory.write_matrix(B_ADDR, B)
    report = run(parse_assembly(text), state)
    return state, report, state.memory.read_matrix(D_ADDR, 4, 4, state.dtype)


class MemoryTests(unittest.TestCase):
    def test_strided_view(self):
        memory = Memory(256)
        memory.write_matrix(0, np.arange(16, dtype=np.float64).reshape(2, 8))

        view = memory.view(0, 2, 2, 64, np.float64)
        np.testing.assert_array_equal(view, [[0.0, 1.0], [8.0, 9.0]])
        self.assertEqual(memory.read_scalar(8, np.float64), 1.0)

    def test_bounds_and_alignment(self):
        memory = Memory(64)
        with self.assertRaises(OutOfBoundsAccess):
            memory.view(32, 1, 8, 64, np.float64)
        with self.assertRaises(MisalignedAccess):
            memory.view(4, 1, 1, 8, np.float64)

    def test_from_bytes_pads_to_size(self):
        memory = Memory.from_bytes(b"\x01\x02", size=16)
        self.assertEqual(memory.size, 16)
        self.assertEqual(int(memory.data[1]), 2)


class TileMaccTests(unittest.TestCase):
    def test_identity_times_b(self):
        B = np.arange(16, dtype=np.float64).reshape(4, 4)
        _, _, D = _run_tile(np.eye(4), B)

        np.testing.assert_array_equal(D, B)

    def test_all_ones(self):
        _, _, D = _run_tile(np.ones((4, 4)), np.ones((4, 4)))

        np.testing.assert_array_equal(D, np.full((4, 4), 4.0))

    def test_random_tile_is_bit_exact(self):
        rng = np.random.default_rng(7)
        A, B = rng.uniform(-1, 1, (4, 4)), rng.uniform(-1, 1, (4, 4))
        _, _, D = _run_tile(A, B)

        self.assertTrue(np.array_equal(D, golden_matmul(A, B, np.zeros((4, 4)))))

    def test_integer_tile_wraps(self):
        cfg = MachineConfig(element=ElementType.INT32)
        text = ONE_TILE.replace("mxfmacc", "mxmacc").replace("li t1, 32", "li t1, 16")
        A = np.full((4, 4), 2 ** 30, dtype=np.int32)
        B = np.full((4, 4), 2, dtype=np.int32)
        state = _state(cfg)
        state.memory.write_matrix(A_ADDR, A)
        state.memory.write_matrix(B_ADDR, B)
        run(parse_assembly(text.replace("li a1, 128", "li a1, 64").replace("li a2, 256", "li a2, 128")), state)

        D = state.memory.read_matrix(128, 4, 4, np.int32)
        np.testing.assert_array_equal(D, golden_matmul(A, B, np.zeros((4, 4), dtype=np.int32)))

    def test_transfer_counters(self):
        _, report, _ = _run_tile(np.eye(4), np.eye(4))
        ledger = report.ledger

        self.assertEqual(ledger.mem_vrf, BoundaryCounts(16, 16, 0, 16))
        self.assertEqual(ledger.vrf_buf, BoundaryCounts(16, 16, 16, 16))
        self.assertEqual(ledger.buf_fpu, BoundaryCounts(16, 16, 64, 64))
        self.assertEqual(ledger.vrf_fpu.total, 0)
        self.assertEqual(report.macs, 64)
        self.assertEqual(report.census["mxfmacc"], 1)
        self.assertEqual(report.total_insns, 13)
        self.assertEqual(report.simd_ratio_comp, 128)

    def test_resident_accumulation_skips_refetch(self):
        text = TILE_SETUP + """
    vmv.zero v8
    mld.a v0, (a0), t1
    mld.b v4, (a1), t1
    mxfmacc v8, v0, v4
    mxfmacc v8, v0, v4
    mst.c v8, (a2), t1
"""
        ones = np.ones((4, 4))
        _, plain, D_plain = _run_tile(ones, ones, text=text)
        _, resident, D_resident = _run_tile(ones, ones, MachineConfig(buffer_resident_accumulation=True), text)

        self.assertEqual(plain.ledger.vrf_buf, BoundaryCounts(32, 32, 32, 32))
        self.assertEqual(resident.ledger.vrf_buf, BoundaryCounts(32, 32, 16, 16))
        np.testing.assert_array_equal(D_plain, np.full((4, 4), 8.0))
        np.testing.assert_array_equal(D_resident, D_plain)

    def test_tile_sizes_are_granted(self):
        state = _state()
        run(parse_assembly("msettilem t0, 16\nmsettilek t1, 5"), state)

        self.assertEqual(state.x[X_NAMES["t0"]], 8)
        self.assertEqual(state.x[X_NAMES["t1"]], 4)
        self.assertEqual((state.csrs.tile_m, state.csrs.tile_k), (8, 4))


class VectorTests(unittest.TestCase):
    def test_scalar_vector_macc_counters(self):
        state = _state()
        state.memory.write_matrix(0, np.full((1, 16), 2.0))
        report = run(parse_assembly("vsetvl t0, 16\nfld f1, (zero)\nvle v2, (zero)\nvfmacc.vf v4, f1, v2"), state)

        self.assertEqual(report.ledger.vrf_fpu, BoundaryCounts(0, 16, 16, 16))
        self.assertEqual(report.ledger.srf_fpu, BoundaryCounts(4, 0, 0, 0))
        self.assertEqual(report.ledger.mem_vrf, BoundaryCounts(1, 16, 0, 0))
        self.assertEqual(report.macs, 16)
        np.testing.assert_array_equal(state.read_vreg(4, 16), np.full(16, 4.0))
        self.assertEqual(state.broadcast_reg, 2.0)

    def test_vsetvl_grants_at_most_vlmax(self):
        state = _state()
        run(parse_assembly("vsetvl t0, 100"), state)

        self.assertEqual(state.x[X_NAMES["t0"]], 64)
        self.assertEqual(state.csrs.lmul, 8)

    def test_load_cycles(self):
        report = run(parse_assembly("vsetvl t0, 32\nvle v0, (zero)"), _state())

        self.assertEqual(report.cycles, 9)

    def test_partial_overlap_delays_compute(self):
        text = "vsetvl t0, 32\nvle v0, (zero)\nvmv.zero v8"
        full = run(parse_assembly(text), _state())
        none = run(parse_assembly(text), _state(MachineConfig(overlap=0.0)))

        self.assertEqual(full.cycles, 10)
        self.assertEqual(none.cycles, 17)

    def test_integer_scalar_operand(self):
        cfg = MachineConfig(element=ElementType.INT32)
        state = _state(cfg)
        state.memory.write_matrix(0, np.array([[3, 1, 2, 3]], dtype=np.int32))
        run(parse_assembly("vsetvl t0, 4\nlw t5, (zero)\nvle v2, (zero)\nvmacc.vx v4, t5, v2"), state)

        np.testing.assert_array_equal(state.read_vreg(4, 4), [9, 3, 6, 9])
        self.assertEqual(state.broadcast_reg, 3)
        self.assertEqual(state.broadcast_reg.dtype, np.int32)


class ErrorTests(unittest.TestCase):
    def assertAborts(self, text, cause, cfg=None):
        with self.assertRaises(ExecutionAborted) as ctx:
            run(parse_assembly(text), _state(cfg))
        self.assertIsInstance(ctx.exception.cause, cause)
        return ctx.exception

    def test_store_with_overlapping_rows(self):
        self.assertAborts(TILE_SETUP + "li t1, 16\nmst.c v8, (a2), t1", OverlapError)

    def test_out_of_bounds(self):
        self.assertAborts("vsetvl t0, 16\nli a0, 1016\nvle v0, (a0)", OutOfBoundsAccess)

    def test_misaligned(self):
        self.assertAborts("vsetvl t0, 8\nli a0, 4\nvle v0, (a0)", MisalignedAccess)

    def test_tile_csrs_unset(self):
        self.assertAborts("li t1, 32\nmld.a v0, (zero), t1", CsrUnset)

    def test_vl_unset(self):
        self.assertAborts("vle v0, (zero)", VlUnset)

    def test_vl_mismatch(self):
        self.assertAborts(TILE_SETUP + "vsetvl t0, 8\nmxfmacc v8, v0, v4", VlMismatch)

    def test_accumulator_larger_than_buffer(self):
        text = "msettilem t0, 8\nmsettilen t0, 8\nmsettilek t0, 4\nvsetvl t0, 32\nmxfmacc v16, v0, v8"
        self.assertAborts(text, BufferOverflow)

    def test_misaligned_register_group(self):
        self.assertAborts("vsetvl t0, 16\nvmv.zero v3", RegisterGroupError)

    def test_wrong_element_type(self):
        err = self.assertAborts("vsetvl t0, 4\nvmacc.vx v4, t5, v2", Exception)
        self.assertIn("integer element type", str(err))

    def test_abort_reports_position(self):
        err = self.assertAborts("# header\nli a0, 4\nvsetvl t0, 8\nvle v0, (a0)", MisalignedAccess)

        self.assertEqual((err.pc, err.line), (2, 4))
        self.assertEqual(err.text, "vle v0, (a0)")

    def test_step_limit(self):
        with self.assertRaises(StepLimitExceeded):
            run(parse_assembly("loop:\n    j loop"), _state(), step_limit=100)


class RunTests(unittest.TestCase):
    def test_empty_program(self):
        report = run(parse_assembly(""), _state())

        self.assertEqual(report.total_insns, 0)
        self.assertEqual(report.cycles, 0)
        self.assertEqual(report.ledger.mem_vrf.total, 0)
        self.assertEqual(report.utilization, 0.0)

    def test_runs_are_deterministic(self):
        rng = np.random.default_rng(3)
        A, B = rng.uniform(-1, 1, (4, 4)), rng.uniform(-1, 1, (4, 4))
        _, first, D1 = _run_tile(A, B)
        _, second, D2 = _run_tile(A, B)

        self.assertEqual(first, second)
        self.assertTrue(np.array_equal(D1, D2))

    def test_loop_counts_every_execution(self):
        text = "li s0, 5\nloop:\n    addi s0, s0, -1\n    bnez s0, loop"
        report = run(parse_assembly(text), _state())

        self.assertEqual(report.census, {"li": 1, "addi": 5, "bnez": 5})
        self.assertEqual(report.cycles, 11)

    def test_empty_cluster(self):
        states, report = run_cluster([], Memory(64), MachineConfig())

        self.assertEqual(states, [])
        self.assertEqual(report.cores, 0)
        self.assertEqual(report.macs, 0)

    def test_merge_sums_counters_and_keeps_the_slowest_core(self):
        ledger = TransferLedger(mem_vrf=BoundaryCounts(1, 2, 0, 3))
        left = RunReport(ledger, {"vle": 2}, macs=10, cycles=5, fpus=4)
        right = RunReport(ledger, {"vle": 1, "vse": 1}, macs=6, cycles=8, fpus=4)
        merged = left.merge(right)

        self.assertEqual(merged.ledger[Boundary.MEM_VRF], BoundaryCounts(2, 4, 0, 6))
        self.assertEqual(merged.census, {"vle": 3, "vse": 1})
        self.assertEqual((merged.macs, merged.cycles, merged.cores), (16, 8, 2))
        self.assertEqual(merged.utilization, (16 / 4) / (8 * 2))

    def test_report_document(self):
        _, report, _ = _run_tile(np.eye(4), np.eye(4))
        doc = report.to_dict()

        self.assertEqual(doc["insns"]["computational"], 1)
        self.assertEqual(doc["insns"]["vector"], 5)
        self.assertEqual(doc["ledgers"]["mem_vrf"]["a"], 16)
        self.assertEqual(doc["simd_ratio_all"], 128 / 5)


if __name__ == "__main__":
    unittest.main()
