"""Verification layer: lints, phase-sync report, oracle cross-checks."""

import math

import pytest

from gatesynth.luts import TRIGGER, GateDefinition, square_gate
from gatesynth.program import PairSpec, Program, parse_program
from gatesynth.qubit import DriveSegment
from gatesynth.simulate import simulate_program
from gatesynth.spline import Param, SplineWord
from gatesynth.verify import (
    counter_invariance_check,
    drive_segments,
    lint_feedforward_routing,
    lint_ms_triplets,
    lint_sync_reuse,
    max_axis_deviation_turns,
    oracle_evolution_check,
    phase_sync_findings,
    verify_program,
)

FULL = 32767
WA = 2049 << 24
WB = 1025 << 24

CARRIER = 307000000000
RED = 304000000000
BLUE = 310000000000


def zero_hold(channel, duration, skip=()):
    return [
        SplineWord(duration=duration, channel=channel, param=p)
        for p in Param
        if p not in skip
    ]


def triplet_gate(blue):
    """Carrier on channel 0 tone 0, sidebands on channel 1 tones 0/1."""
    dur = 8
    words = [
        SplineWord(u0=CARRIER, duration=dur, channel=0, param=Param.FREQ0,
                   sync=True),
        *zero_hold(0, dur, skip=(Param.FREQ0,)),
        SplineWord(u0=RED, duration=dur, channel=1, param=Param.FREQ0,
                   sync=True),
        SplineWord(u0=blue, duration=dur, channel=1, param=Param.FREQ1,
                   sync=True),
        *zero_hold(1, dur, skip=(Param.FREQ0, Param.FREQ1)),
    ]
    return GateDefinition(name="ms", words=tuple(words))


class TestTripletLint:
    def test_one_epsilon_mismatch_flagged(self):
        prog = Program(gates=[triplet_gate(BLUE + 1)], sequence=[])
        (f,) = lint_ms_triplets(prog)
        assert "misaligned by 1 LSB" in f.message
        assert f.gate == "ms"

    def test_aligned_triplet_clean(self):
        prog = Program(gates=[triplet_gate(BLUE)], sequence=[])
        assert lint_ms_triplets(prog) == []

    def test_asymmetric_words_ignored(self):
        g = triplet_gate(BLUE + 10_000_000)
        prog = Program(gates=[g], sequence=[])
        assert lint_ms_triplets(prog) == []


class TestSyncReuseLint:
    @staticmethod
    def prog(resync: bool):
        gates = [
            square_gate("a", 0, 8, freq_word=WA, amp_code=FULL, sync=True),
            square_gate("b", 0, 8, freq_word=WB, amp_code=FULL, sync=True),
            square_gate("a2", 0, 8, freq_word=WA, amp_code=FULL,
                        sync=resync),
        ]
        return Program(gates=gates, sequence=[TRIGGER, "a", "b", "a2"])

    def test_unsynced_reuse_flagged(self):
        (f,) = lint_sync_reuse(self.prog(resync=False))
        assert "synchronization" in f.message
        assert f.gate == "a2"

    def test_synced_reuse_clean(self):
        assert lint_sync_reuse(self.prog(resync=True)) == []

    def test_consecutive_same_frequency_clean(self):
        gates = [
            square_gate("a", 0, 8, freq_word=WA, amp_code=FULL, sync=True),
            square_gate("a2", 0, 8, freq_word=WA, amp_code=FULL),
        ]
        prog = Program(gates=gates, sequence=[TRIGGER, "a", "a2"])
        assert lint_sync_reuse(prog) == []

    def test_first_use_needs_no_sync(self):
        gates = [square_gate("a", 0, 8, freq_word=WA, amp_code=FULL)]
        prog = Program(gates=gates, sequence=[TRIGGER, "a"])
        assert lint_sync_reuse(prog) == []


def pair_gate(ff_low, ff_high):
    dur = 8
    words = [
        SplineWord(u0=WB, duration=dur, channel=0, param=Param.FREQ0,
                   sync=True, feedforward=ff_low),
        SplineWord(u0=WA, duration=dur, channel=0, param=Param.FREQ1,
                   sync=True, feedforward=ff_high),
        SplineWord(u0=(FULL << 24), duration=dur, channel=0,
                   param=Param.AMP0),
        SplineWord(u0=(FULL << 24), duration=dur, channel=0,
                   param=Param.AMP1),
        *zero_hold(0, dur, skip=(Param.FREQ0, Param.FREQ1, Param.AMP0,
                                 Param.AMP1)),
    ]
    return GateDefinition(name="g", words=tuple(words))


class TestFeedforwardRoutingLint:
    @staticmethod
    def prog(ff_low, ff_high):
        return Program(
            gates=[pair_gate(ff_low, ff_high)],
            sequence=[TRIGGER, "g"],
            pairs=[PairSpec("q", (0, 0), (0, 1))],
        )

    def test_higher_leg_only_is_clean(self):
        assert lint_feedforward_routing(self.prog(False, True)) == []

    def test_both_legs_flagged(self):
        (f,) = lint_feedforward_routing(self.prog(True, True))
        assert "exactly one leg" in f.message

    def test_lower_leg_flagged(self):
        (f,) = lint_feedforward_routing(self.prog(True, False))
        assert "higher-frequency leg" in f.message

    def test_no_feedforward_use_is_clean(self):
        assert lint_feedforward_routing(self.prog(False, False)) == []


RAMSEY_TEXT = """
rabi 512e3
qubit freq 12642812118.466
pair q 0:0 0:1

gate half {
  duration 200
  channel 0 {
    tone 0 freq const 200e6 sync
    tone 0 amp const 1.0
    tone 1 freq const 242812118.466 sync
    tone 1 amp const 1.0
  }
}

gate gap {
  duration 123
  channel 0 {
    tone 0 amp const 0.0
    tone 1 amp const 0.0
  }
}

sequence {
  trigger
  half
  gap
  half
  gap
}
"""

# same Ramsey shape, but tone 0 is re-synced at a detour frequency and
# then revisits 200 MHz without sync: its phase leaves the global grid
BROKEN_TEXT = """
rabi 512e3
qubit freq 12642812118.466
pair q 0:0 0:1

gate half {
  duration 200
  channel 0 {
    tone 0 freq const 200e6 sync
    tone 0 amp const 1.0
    tone 1 freq const 242812118.466 sync
    tone 1 amp const 1.0
  }
}

gate detour {
  duration 9
  channel 0 {
    tone 0 freq const 210e6 sync
    tone 0 amp const 0.0
    tone 1 amp const 0.0
  }
}

gate late {
  duration 200
  channel 0 {
    tone 0 freq const 200e6
    tone 0 amp const 1.0
    tone 1 freq const 242812118.466 sync
    tone 1 amp const 1.0
  }
}

sequence {
  trigger
  half
  detour
  late
}
"""


class TestDriveSegments:
    def test_overlap_becomes_segments(self):
        prog = parse_program(RAMSEY_TEXT)
        res = simulate_program(prog, counter_start=0)
        segs = drive_segments(res, (0, 0), (0, 1), prog.comb_reference)
        assert len(segs) == 2
        for seg in segs:
            assert seg.rabi_rad_s == pytest.approx(2 * math.pi * 512e3)
            assert seg.duration_s == pytest.approx(200 / 409.6e6)
            # word rounding keeps the drive within a frequency LSB
            assert abs(seg.detuning_rad_s) < 2 * math.pi * 1e-3

    def test_pi_over_2_area(self):
        prog = parse_program(RAMSEY_TEXT)
        res = simulate_program(prog, counter_start=0)
        (seg, _) = drive_segments(res, (0, 0), (0, 1), prog.comb_reference)
        assert seg.rabi_rad_s * seg.duration_s == pytest.approx(
            math.pi / 2, rel=1e-9
        )


class TestPhaseSync:
    def test_synced_program_on_grid(self):
        prog = parse_program(RAMSEY_TEXT)
        res = simulate_program(prog, counter_start=12345)
        assert phase_sync_findings(res) == []
        assert max_axis_deviation_turns(res) == 0.0

    def test_unsynced_revisit_flagged(self):
        prog = parse_program(BROKEN_TEXT)
        res = simulate_program(prog, counter_start=12345)
        findings = phase_sync_findings(res)
        assert findings and "off the global grid" in findings[0].message
        assert max_axis_deviation_turns(res) > 0.0

    def test_static_lint_agrees(self):
        (f,) = lint_sync_reuse(parse_program(BROKEN_TEXT))
        assert f.gate == "late"


class TestCounterInvariance:
    def test_synced_ramsey_invariant(self):
        check = counter_invariance_check(parse_program(RAMSEY_TEXT))
        assert check.passed, check.detail

    def test_detour_resync_breaks_invariance(self):
        check = counter_invariance_check(parse_program(BROKEN_TEXT))
        assert not check.passed

    def test_no_pairs_is_trivially_ok(self):
        prog = Program(
            gates=[square_gate("a", 0, 8, freq_word=WA, amp_code=FULL,
                               sync=True)],
            sequence=[TRIGGER, "a"],
        )
        assert counter_invariance_check(prog).passed


class TestOracleEvolution:
    def test_pi_pulse_segments_check_out(self):
        seg = DriveSegment(
            rabi_rad_s=2 * math.pi * 512e3,
            detuning_rad_s=0.0,
            phase_rad=0.3,
            duration_s=1 / (2 * 512e3),
        )
        check = oracle_evolution_check([seg])
        assert check.passed, check.detail

    def test_empty_is_pass(self):
        assert oracle_evolution_check([]).passed


class TestVerifyProgram:
    def test_ramsey_report_green(self):
        report = verify_program(parse_program(RAMSEY_TEXT))
        assert report.ok, report.render()
        text = report.render()
        for name in (
            "ms-triplet",
            "sync-reuse",
            "feedforward-routing",
            "link-budget",
            "phase-sync",
            "oracle-evolution",
            "counter-invariance",
        ):
            assert f"PASS {name}" in text

    def test_broken_report_red(self):
        report = verify_program(parse_program(BROKEN_TEXT))
        assert not report.ok
        text = report.render()
        assert "FAIL sync-reuse" in text
        assert "FAIL phase-sync" in text
        assert "FAIL counter-invariance" in text

    def test_gateless_program_skips_dynamic_checks(self):
        prog = Program(
            gates=[square_gate("a", 0, 8, freq_word=WA, amp_code=FULL)],
            sequence=[],
        )
        report = verify_program(prog)
        assert report.ok
        assert len(report.checks) == 3
