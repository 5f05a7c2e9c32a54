"""Cycle-accurate signal chain: spline engines feeding a two-tone DDS.

One :class:`Simulator` owns, per output channel, eight spline engines
(frequency/phase/amplitude/frame times two tones) and one DDS pair, all
driven from a shared 40-bit tick counter. Each engine cycle it steps the
engines, routes their outputs into the DDS tone states, and emits two
DDS samples (the sample clock runs at twice the engine clock).

The simulator models an ideal feed link: every engine's full word list
is staged in software and trickled into the hardware FIFO as space
opens. Link bandwidth and FIFO underflow are a transport concern and
live in :func:`gatesynth.luts.simulate_link`; running both against the
same stream separates "the waveform is wrong" from "the words arrived
late".

Trigger model: engines power up parked on an implicit barrier, and
barrier words in the stream park them again between gates. A trigger
fired on cycle c releases every parked engine on that same cycle. By
default triggers fire automatically one cycle after all engines are
parked (and on cycle 0 for the power-up barrier); tests that care about
absolute timing pass explicit trigger cycles instead.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from gatesynth.corrections import (
    DEFAULT_FEEDFORWARD_SCALE,
    ToneTrace,
    XtalkConfig,
    apply_crosstalk_compensation,
    feedforward_word,
)
from gatesynth.dds import DdsChannel, FrameMask, GlobalCounter
from gatesynth.luts import (
    EngineKey,
    compile_library,
    encode_sequence,
    expand,
    programming_words,
)
from gatesynth.program import Program
from gatesynth.spline import Param, SplineEngine, SplineWord, amp_acc_to_code
from gatesynth.words import WORD_MASK

MONITOR_HARMONIC_DEFAULT = 32

TAIL_CYCLES_DEFAULT = 8


class SimulationError(RuntimeError):
    """The engine array stalled or never drained."""


@dataclass(frozen=True)
class ToneSpan:
    """Maximal run of engine cycles with constant synthesis parameters.

    Within the span the tone's total 40-bit phase word at DDS tick t
    is (freq_word * t + phase_word) mod 2**40, where t counts samples
    since power-up (tick 0 emitted the first sample). A span therefore
    maps directly onto one constant drive segment for the qubit
    oracle. ``freq_word`` is the effective tuning word: the
    feed-forward addend is already folded in when the playing knot
    enabled it. The power-up counter offset is not part of t; sync
    events bake it into ``phase_word``.
    """

    channel: int
    tone: int
    start_tick: int
    ticks: int
    freq_word: int
    phase_word: int
    amp_code: int
    sync_deviation: int = 0

    @property
    def end_tick(self) -> int:
        return self.start_tick + self.ticks


@dataclass
class _SpanTracker:
    channel: int
    tone: int
    spans: list[ToneSpan] = field(default_factory=list)
    key: tuple[int, int, int] | None = None  # (freq, phase_word, amp)
    start_tick: int = 0
    ticks: int = 0
    sync_deviation: int = 0

    def observe(
        self,
        tick: int,
        freq: int,
        phase_word: int,
        amp: int,
        cut: bool,
        sync_deviation: int,
    ):
        """Record one engine cycle (two ticks) of constant parameters."""
        key = (freq, phase_word, amp)
        if key != self.key or cut:
            self.flush()
            self.key = key
            self.start_tick = tick
            self.sync_deviation = sync_deviation
        self.ticks += 2

    def flush(self):
        if self.key is not None and self.ticks:
            freq, phase_word, amp = self.key
            self.spans.append(
                ToneSpan(
                    channel=self.channel,
                    tone=self.tone,
                    start_tick=self.start_tick,
                    ticks=self.ticks,
                    freq_word=freq,
                    phase_word=phase_word,
                    amp_code=amp,
                    sync_deviation=self.sync_deviation,
                )
            )
        self.ticks = 0


@dataclass(frozen=True)
class SimulationResult:
    """Everything the verifier consumes, all deterministic."""

    counter_start: int
    cycles: int
    raw: dict[int, np.ndarray]
    at_ion: dict[int, np.ndarray]
    traces: dict[int, tuple[ToneTrace, ToneTrace]]
    spans: dict[tuple[int, int], tuple[ToneSpan, ...]]
    triggers: tuple[int, ...]
    high_water: dict[EngineKey, int]
    feedforward_word: int

    def span_list(self, channel: int, tone: int) -> list[ToneSpan]:
        return [s for s in self.spans.get((channel, tone), ()) if s.amp_code]


class _ChannelUnit:
    """Eight engines plus the DDS pair of one output channel."""

    def __init__(self, index: int):
        self.index = index
        self.engines = {p: SplineEngine(channel=index, param=p) for p in Param}
        self.pending: dict[Param, deque[SplineWord]] = {
            p: deque() for p in Param
        }
        self.dds = DdsChannel()
        # masks of the frame word currently playing, per tone engine
        self.frame_masks = {
            0: (FrameMask(), FrameMask()),
            1: (FrameMask(), FrameMask()),
        }
        self.samples: list[int] = []
        self.trace_phase: tuple[list[int], list[int]] = ([], [])
        self.trace_amp: tuple[list[int], list[int]] = ([], [])

    def top_up(self):
        for p, eng in self.engines.items():
            q = self.pending[p]
            while q and eng.push(q[0]):
                q.popleft()

    def drained(self) -> bool:
        return all(
            not eng.active and not eng.fifo and not self.pending[p]
            for p, eng in self.engines.items()
        )

    def parked_or_drained(self) -> bool:
        for p, eng in self.engines.items():
            if eng.active:
                return False
            if not eng.blocked and (eng.fifo or self.pending[p]):
                return False
        return True

    def any_parked_words(self) -> bool:
        return any(
            eng.blocked and (eng.fifo or self.pending[p])
            for p, eng in self.engines.items()
        )


class Simulator:
    """Drives per-engine word streams through the full signal chain.

    ``engine_words`` is the expander's output: (channel, param) -> knot
    words in play order, barriers included. Feed-forward state is
    global (one measured drift for the whole board): the correction
    word is applied to every tone whose playing frequency knot carries
    the feed-forward flag.
    """

    def __init__(
        self,
        engine_words: dict[EngineKey, list[SplineWord]],
        *,
        counter_start: int | None = None,
        seed: int = 0,
        drift_hz=0.0,
        ff_scale: Fraction = DEFAULT_FEEDFORWARD_SCALE,
        ff_sign: int = -1,
        monitor_harmonic: int = MONITOR_HARMONIC_DEFAULT,
        xtalk: XtalkConfig | None = None,
        trigger_cycles: tuple[int, ...] = (),
        auto_trigger: bool = True,
        tail_cycles: int = TAIL_CYCLES_DEFAULT,
        max_cycles: int = 2_000_000,
    ):
        if counter_start is None:
            counter_start = random.Random(seed).randrange(1 << 40)
        self.counter_start = counter_start & WORD_MASK
        self.counter = GlobalCounter(self.counter_start)
        self.tick = 0  # unwrapped sample index since power-up
        channels = sorted({ch for ch, _ in engine_words})
        self.units = {ch: _ChannelUnit(ch) for ch in channels}
        for (ch, p), words in engine_words.items():
            self.units[ch].pending[p].extend(words)
        measured = Fraction(monitor_harmonic) * Fraction(str(drift_hz))
        self.ff_word = ff_sign * feedforward_word(measured, ff_scale)
        self.xtalk = xtalk if xtalk is not None else XtalkConfig()
        self.trigger_cycles = set(trigger_cycles)
        self.auto_trigger = auto_trigger
        self.tail_cycles = tail_cycles
        self.max_cycles = max_cycles
        self.triggers: list[int] = []
        self.trackers = {
            (ch, tone): _SpanTracker(ch, tone)
            for ch in channels
            for tone in (0, 1)
        }

    # -- per-cycle machinery ------------------------------------------------

    def _fire_trigger(self, cycle: int):
        for unit in self.units.values():
            for eng in unit.engines.values():
                eng.trigger()
        self.triggers.append(cycle)

    def _ready_for_auto(self) -> bool:
        units = self.units.values()
        return all(u.parked_or_drained() for u in units) and any(
            u.any_parked_words() for u in units
        )

    def _step_cycle(self, cycle: int):
        for unit in self.units.values():
            unit.top_up()
        if cycle in self.trigger_cycles or (
            self.auto_trigger and self._ready_for_auto()
        ):
            self._fire_trigger(cycle)
        tick0 = self.tick
        for unit in self.units.values():
            outs: dict[Param, int] = {}
            synced: list[int] = []
            for p, eng in unit.engines.items():
                outs[p] = eng.step()
                w = eng.loaded_word
                if w is None:
                    continue
                if p.is_freq:
                    tone = unit.dds.tones[p.tone]
                    tone.feedforward_enabled = w.feedforward
                    if w.sync:
                        synced.append(p.tone)
                elif p.is_frame:
                    unit.frame_masks[p.tone] = (
                        FrameMask(w.frame_apply[0], w.frame_invert[0]),
                        FrameMask(w.frame_apply[1], w.frame_invert[1]),
                    )
            # frame engines emit per-cycle increments; an idle engine's
            # held output must not keep rotating the frame
            for fp in (Param.FRAME0, Param.FRAME1):
                if unit.engines[fp].live:
                    unit.dds.apply_frame_rotation(
                        outs[fp], unit.frame_masks[fp.tone]
                    )
            for t in (0, 1):
                tone = unit.dds.tones[t]
                tone.freq = outs[Param(t * 4 + 0)]
                tone.phase_offset = outs[Param(t * 4 + 1)]
                tone.amp = amp_acc_to_code(outs[Param(t * 4 + 2)])
            for t in synced:
                unit.dds.tones[t].sync(self.counter)
            for t in (0, 1):
                tone = unit.dds.tones[t]
                eff_freq = tone.freq
                if tone.feedforward_enabled:
                    eff_freq = (eff_freq + self.ff_word) & WORD_MASK
                offset = (tone.phase_offset + tone.frame_acc) & WORD_MASK
                phase_word = (
                    tone.phase_acc + offset - eff_freq * tick0
                ) % (1 << 40)
                # how far the accumulator sits from the global freq*t
                # convention; zero exactly when this pulse was synced
                deviation = (
                    tone.phase_acc
                    - tone.freq * (self.counter_start + tick0)
                ) % (1 << 40)
                self.trackers[unit.index, t].observe(
                    tick0,
                    eff_freq,
                    phase_word,
                    tone.amp,
                    cut=t in synced,
                    sync_deviation=deviation,
                )
        for _ in range(2):
            for unit in self.units.values():
                s0, s1 = unit.dds.step(self.ff_word)
                unit.samples.append(s0.value + s1.value)
                unit.trace_phase[0].append(s0.phase_total)
                unit.trace_phase[1].append(s1.phase_total)
                unit.trace_amp[0].append(unit.dds.tones[0].amp)
                unit.trace_amp[1].append(unit.dds.tones[1].amp)
            self.counter.tick()
            self.tick += 1

    # -- top level ----------------------------------------------------------

    def run(self, cycles: int | None = None) -> SimulationResult:
        if cycles is not None:
            for c in range(cycles):
                self._step_cycle(c)
            ran = cycles
        else:
            ran = 0
            drained_at = None
            while True:
                if all(u.drained() for u in self.units.values()):
                    if drained_at is None:
                        drained_at = ran
                    if ran - drained_at >= self.tail_cycles:
                        break
                elif not self.auto_trigger and self._ready_for_auto():
                    remaining = [c for c in self.trigger_cycles if c >= ran]
                    if not remaining:
                        raise SimulationError(
                            f"engines parked at a barrier on cycle {ran} "
                            "with no trigger scheduled"
                        )
                if ran >= self.max_cycles:
                    raise SimulationError(
                        f"no drain within {self.max_cycles} cycles"
                    )
                self._step_cycle(ran)
                ran += 1
        return self._collect(ran)

    def _collect(self, cycles: int) -> SimulationResult:
        raw: dict[int, np.ndarray] = {}
        traces: dict[int, tuple[ToneTrace, ToneTrace]] = {}
        spans: dict[tuple[int, int], tuple[ToneSpan, ...]] = {}
        high: dict[EngineKey, int] = {}
        for ch, unit in sorted(self.units.items()):
            raw[ch] = np.asarray(unit.samples, dtype=np.int64)
            traces[ch] = (
                ToneTrace(unit.trace_phase[0], unit.trace_amp[0]),
                ToneTrace(unit.trace_phase[1], unit.trace_amp[1]),
            )
            for p, eng in unit.engines.items():
                high[ch, p] = eng.high_water
        for key, tracker in self.trackers.items():
            tracker.flush()
            spans[key] = tuple(tracker.spans)
        at_ion = apply_crosstalk_compensation(raw, traces, self.xtalk)
        return SimulationResult(
            counter_start=self.counter_start,
            cycles=cycles,
            raw=raw,
            at_ion=at_ion,
            traces=traces,
            spans=spans,
            triggers=tuple(self.triggers),
            high_water=high,
            feedforward_word=self.ff_word,
        )


def simulate_stream(stream: list[bytes], **kwargs) -> SimulationResult:
    """Expand a full wire stream and run it to drain."""
    return Simulator(expand(stream), **kwargs).run()


def program_stream(prog: Program) -> list[bytes]:
    """Wire words for a parsed program: LUT programming plus sequence."""
    lib = compile_library(prog.gates)
    return programming_words(lib) + encode_sequence(lib, prog.sequence)


def simulate_program(
    prog: Program,
    *,
    seed: int = 0,
    counter_start: int | None = None,
    trigger_cycles: tuple[int, ...] = (),
    auto_trigger: bool = True,
    cycles: int | None = None,
) -> SimulationResult:
    """Full pipeline for one program: compile, expand, simulate.

    The program's own measurement and correction settings (drift,
    feed-forward scale and sign, crosstalk taps, counter pin) are used
    unless overridden by the keyword arguments.
    """
    if counter_start is None:
        counter_start = prog.counter_pin
    sim = Simulator(
        expand(program_stream(prog)),
        counter_start=counter_start,
        seed=seed,
        drift_hz=prog.drift_hz,
        ff_scale=prog.ff_scale,
        ff_sign=prog.ff_sign,
        monitor_harmonic=prog.monitor_harmonic,
        xtalk=prog.xtalk,
        trigger_cycles=trigger_cycles,
        auto_trigger=auto_trigger,
    )
    return sim.run(cycles)
