"""Program-file parsing: forms, flags, padding, and compile-time rejects."""

from fractions import Fraction

import pytest

from gatesynth.luts import TRIGGER, compile_library
from gatesynth.program import ProgramError, load_program, parse_program
from gatesynth.spline import AMP_FRAC_BITS, Param
from gatesynth.words import freq_to_word, phase_turns_to_word

XY_TEXT = """
clock 409.6e6
qubit field 4.37
comb harmonic 105 rep 120e6

gate X {
  duration 410
  channel 0 {
    tone 0 freq const 228732824.32571054 sync
    tone 0 amp const 1.0
    tone 0 phase const 0.0
    tone 1 freq const 200e6 sync
    tone 1 amp const 0.5
  }
}

gate Y {
  duration 410
  channel 0 {
    tone 0 freq const 228732824.32571054 sync
    tone 0 amp const 1.0
    tone 0 phase const 0.25
    tone 1 freq const 200e6 sync
    tone 1 amp const 0.5
  }
}

sequence {
  trigger
  X
  Y
  X
}
"""


def words_for(gate, param):
    return [w for w in gate.words if w.param == param]


class TestBasics:
    def test_gates_and_sequence(self):
        prog = parse_program(XY_TEXT)
        assert [g.name for g in prog.gates] == ["X", "Y"]
        assert prog.sequence == [TRIGGER, "X", "Y", "X"]

    def test_field_to_frequency(self):
        prog = parse_program(XY_TEXT)
        assert prog.qubit_freq_hz == pytest.approx(
            12.642812118466e9 + 310.8 * 4.37**2
        )

    def test_xy_pair_shares_all_but_one_word(self):
        prog = parse_program(XY_TEXT)
        lib = compile_library(prog.gates)
        assert len(lib.plut[0]) == 9

    def test_freq_word_and_sync_flag(self):
        prog = parse_program(XY_TEXT)
        (w,) = words_for(prog.gate("X"), Param.FREQ0)
        assert w.u0 == 307000000000
        assert w.sync
        assert w.duration == 410

    def test_amp_scaling(self):
        prog = parse_program(XY_TEXT)
        (w,) = words_for(prog.gate("X"), Param.AMP0)
        assert w.u0 == 32767 << AMP_FRAC_BITS
        (w1,) = words_for(prog.gate("X"), Param.AMP1)
        assert w1.u0 == round(0.5 * 32767) << AMP_FRAC_BITS

    def test_phase_constant(self):
        prog = parse_program(XY_TEXT)
        (w,) = words_for(prog.gate("Y"), Param.PHASE0)
        assert w.u0 == 1 << 38

    def test_untouched_params_padded_with_zero_hold(self):
        prog = parse_program(XY_TEXT)
        (w,) = words_for(prog.gate("X"), Param.FRAME1)
        assert w.u0 == 0 and w.duration == 410

    def test_defaults(self):
        prog = parse_program(
            "gate g {\n duration 8\n channel 0 {\n"
            "  tone 0 amp const 0\n }\n}\n"
        )
        assert prog.comb_harmonic == 105
        assert prog.rep_rate_hz == 120e6
        assert prog.monitor_harmonic == 32
        assert prog.ff_scale == Fraction(105, 32)
        assert prog.ff_sign == -1
        assert prog.counter_pin is None
        assert prog.sequence == []

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "p.prog"
        path.write_text(XY_TEXT)
        assert [g.name for g in load_program(path).gates] == ["X", "Y"]

    def test_comb_reference_wiring(self):
        prog = parse_program("rabi 250e3\nqubit freq 12.6e9\n")
        ref = prog.comb_reference
        assert ref.qubit_freq_hz == 12.6e9
        assert ref.rabi_cal_rad_s == pytest.approx(
            2 * 3.141592653589793 * 250e3
        )


class TestStatements:
    def test_counter_pin(self):
        assert parse_program("counter pin 1234").counter_pin == 1234
        assert parse_program("counter random").counter_pin is None
        with pytest.raises(ProgramError, match="40 bits"):
            parse_program("counter pin %d" % (1 << 40))

    def test_drift_and_monitor(self):
        prog = parse_program("drift -2500.0\nmonitor harmonic 16")
        assert prog.drift_hz == -2500.0
        assert prog.monitor_harmonic == 16

    def test_feedforward_settings(self):
        prog = parse_program("feedforward scale 7/2\nfeedforward sign +")
        assert prog.ff_scale == Fraction(7, 2)
        assert prog.ff_sign == 1

    def test_clock_mismatch(self):
        with pytest.raises(ProgramError, match="line 1.*unsupported clock"):
            parse_program("clock 400e6")

    def test_xtalk_taps(self):
        prog = parse_program(
            "xtalk tap 0 1 amp 0.02 phase 0.1 delay 6\n"
            "xtalk tap 1 0 amp 0.01 phase 0.9 delay 4\n"
        )
        assert len(prog.xtalk.taps) == 2
        assert prog.xtalk.taps[0].source == 0
        assert prog.xtalk.taps[0].delay_cycles == 6

    def test_xtalk_bad_delay_carries_line(self):
        with pytest.raises(ProgramError, match="line 2.*DSP latency"):
            parse_program(
                "drift 0\nxtalk tap 0 1 amp 0.02 phase 0.1 delay 1"
            )

    def test_pair_refs(self):
        prog = parse_program("pair sq 0:0 0:1")
        assert prog.pairs[0].a == (0, 0)
        assert prog.pairs[0].b == (0, 1)
        with pytest.raises(ProgramError, match="channel:tone"):
            parse_program("pair sq 0.0 0.1")
        with pytest.raises(ProgramError, match="differ"):
            parse_program("pair sq 0:0 0:0")


GATE_HEAD = "gate g {\n  duration %d\n  channel 0 {\n"
GATE_TAIL = "  }\n}\n"


def gate_text(duration, *stmts):
    return GATE_HEAD % duration + "".join(
        f"    {s}\n" for s in stmts
    ) + GATE_TAIL


class TestSplineForms:
    def test_two_knots_cover_duration(self):
        prog = parse_program(
            gate_text(
                410,
                "tone 0 amp spline 100 0.0 0.01 0 0",
                "tone 0 amp spline 310 1.0 0 0 0",
            )
        )
        w = words_for(prog.gate("g"), Param.AMP0)
        assert [x.duration for x in w] == [100, 310]
        assert w[1].u0 == 32767 << AMP_FRAC_BITS

    def test_coverage_mismatch_rejected(self):
        with pytest.raises(ProgramError, match="covers* 100 of 410|cover 100 of 410"):
            parse_program(gate_text(410, "tone 0 amp spline 100 0.5 0 0 0"))

    def test_spline_linear_coefficient(self):
        prog = parse_program(
            gate_text(8, "tone 1 phase spline 8 0.0 0.125 0 0")
        )
        (w,) = words_for(prog.gate("g"), Param.PHASE1)
        # linear per-cycle coefficient is identity under the knot transform
        assert w.u1 == 1 << 37

    def test_streamed_parameter(self):
        prog = parse_program(
            gate_text(
                16,
                "tone 0 amp const 0.25",
                "tone 0 freq spline 16 1e6 0 0 0 stream",
            )
        )
        g = prog.gate("g")
        assert len(g.streamed) == 1
        assert g.streamed[0].param == Param.FREQ0
        assert g.streamed[0].u0 == freq_to_word(1e6)

    def test_feedforward_flag_manual(self):
        prog = parse_program(
            gate_text(16, "tone 0 freq const 2e8 sync feedforward")
        )
        (w,) = words_for(prog.gate("g"), Param.FREQ0)
        assert w.feedforward and w.sync

    def test_flags_only_on_freq(self):
        with pytest.raises(ProgramError, match="belong on freq"):
            parse_program(gate_text(16, "tone 0 amp const 0.5 sync"))


class TestFrameRotation:
    def test_exact_split_uneven(self):
        # total delta 10 words over 7 cycles: 4 cycles of 1, 3 of 2
        turns = 10 / 2.0**40
        prog = parse_program(
            gate_text(7, f"tone 0 frame rotate {turns!r}")
        )
        w = words_for(prog.gate("g"), Param.FRAME0)
        assert [(x.u0, x.duration) for x in w] == [(1, 4), (2, 3)]

    def test_exact_split_divisible(self):
        prog = parse_program(gate_text(4, "tone 1 frame rotate 0.25"))
        w = words_for(prog.gate("g"), Param.FRAME1)
        assert [(x.u0, x.duration) for x in w] == [(1 << 36, 4)]
        assert w[0].frame_apply == (False, True)

    def test_total_is_exact_for_any_turns(self):
        for turns in (0.1, 0.333, 0.9999, -0.25):
            prog = parse_program(
                gate_text(13, f"tone 0 frame rotate {turns!r}")
            )
            w = words_for(prog.gate("g"), Param.FRAME0)
            total = sum(x.u0 * x.duration for x in w)
            assert total == phase_turns_to_word(turns)

    def test_masks_override(self):
        prog = parse_program(
            gate_text(4, "tone 0 frame rotate 0.1 apply0 apply1 invert1")
        )
        words = words_for(prog.gate("g"), Param.FRAME0)
        assert words
        for w in words:
            assert w.frame_apply == (True, True)
            assert w.frame_invert == (False, True)

    def test_minimum_duration_enforced(self):
        with pytest.raises(ProgramError, match="4 cycles.*9.765625 ns"):
            parse_program(gate_text(3, "tone 0 frame rotate 0.25"))

    def test_duration_four_accepted(self):
        prog = parse_program(gate_text(4, "tone 0 frame rotate 0.25"))
        assert prog.gate("g").duration == 4


class TestAutoFeedforward:
    TEXT = (
        "pair sq 0:0 0:1\n"
        "feedforward auto\n"
        + gate_text(
            64,
            "tone 0 freq const 228.7e6 sync",
            "tone 0 amp const 1.0",
            "tone 1 freq const 200e6 sync",
            "tone 1 amp const 1.0",
        )
    )

    def test_higher_tone_flagged(self):
        prog = parse_program(self.TEXT)
        g = prog.gate("g")
        (hi,) = words_for(g, Param.FREQ0)
        (lo,) = words_for(g, Param.FREQ1)
        assert hi.feedforward and not lo.feedforward

    def test_equal_frequency_pair_rejected(self):
        text = (
            "pair sq 0:0 0:1\nfeedforward auto\n"
            + gate_text(
                64,
                "tone 0 freq const 2e8",
                "tone 1 freq const 2e8",
            )
        )
        with pytest.raises(ProgramError, match="equal frequency"):
            parse_program(text)

    def test_pair_absent_from_gate_ignored(self):
        text = (
            "pair other 3:0 3:1\nfeedforward auto\n"
            + gate_text(16, "tone 0 freq const 2e8")
        )
        g = parse_program(text).gate("g")
        (w,) = words_for(g, Param.FREQ0)
        assert not w.feedforward


class TestErrors:
    @pytest.mark.parametrize(
        "text,pattern",
        [
            ("bogus 1 2", "line 1.*unknown statement"),
            ("gate g {\n}", "no duration"),
            ("gate g {\n duration 4\n}\ngate g {\n duration 4\n}", "duplicate"),
            ("gate g {\n duration 4\n", "never closed"),
            ("sequence {\n X\n", "never closed"),
            ("sequence {\n X\n}\n", "undefined gate"),
            ("sequence {\n}\nsequence {\n}", "one sequence"),
            ("gate g {\n duration 4\n channel 9 {\n }\n}", "out of range"),
            (
                "gate g {\n duration 4\n channel 0 {\n tone 5 amp const 1\n }\n}",
                "tone 5",
            ),
            (
                "gate g {\n channel 0 {\n tone 0 amp const 1\n }\n}",
                "duration before",
            ),
            (
                "gate g {\n duration 4\n channel 0 {\n tone 0 freq const 999e6\n }\n}",
                "line 4",
            ),
            ("gate g { duration 0 }", "usage: gate"),
            ("feedforward sign x", "must be"),
        ],
    )
    def test_message_and_line(self, text, pattern):
        with pytest.raises(ProgramError, match=pattern):
            parse_program(text)

    def test_out_of_band_freq_reports_line(self):
        text = gate_text(8, "tone 0 freq const 500e6")
        with pytest.raises(ProgramError, match="line 4"):
            parse_program(text)


class TestChannelPadding:
    def test_disjoint_channels_padded_to_union(self):
        text = (
            gate_text(8, "tone 0 amp const 0.5").replace("gate g", "gate a")
            + (
                "gate b {\n  duration 8\n  channel 1 {\n"
                "    tone 0 amp const 0.5\n  }\n}\n"
            )
        )
        prog = parse_program(text)
        lib = compile_library(prog.gates)
        assert list(lib.channels) == [0, 1]
        a = prog.gate("a")
        assert {w.channel for w in a.words} == {0, 1}
        # 8 params on each of 2 channels
        assert len(a.words) == 16
