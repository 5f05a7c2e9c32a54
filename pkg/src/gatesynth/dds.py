"""Cycle-accurate dual-tone DDS channel model.

Each channel carries two tones. A tone is a 40-bit phase accumulator
stepped by a frequency word once per DDS tick (819.2 MHz), followed by a
phase summer that adds a static phase offset and the frame-rotation
accumulator, and a sine lookup that converts the summed phase to a signed
amplitude sample scaled by the 16-bit amplitude code.

Ordering convention: a tick's sample is computed from the pre-increment
phase, then the accumulator advances. With that convention a
synchronization pulse at counter value t followed by k free-running ticks
leaves the accumulator at exactly (t+k)*freq mod 2**40.

The global counter is free running and shared by all channels; nothing may
assume its power-up value. A sync pulse overwrites a tone's accumulator
with freq*t so that pulses reusing a frequency are mutually coherent no
matter when they are played.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gatesynth.words import AMP_FULL_SCALE, WORD_MASK, WORD_MODULUS

# Quarter-wave sine table: 2**16 entries with a half-sample offset, indexed
# by the top 18 phase bits (2 quadrant bits + 16 index bits). The offset
# makes entry mirroring exact: phase -> -phase and phase -> phase + half
# turn negate the output with no special cases.
SINE_LUT_BITS = 16
SINE_LUT_LEN = 1 << SINE_LUT_BITS
_INDEX_SHIFT = 40 - 2 - SINE_LUT_BITS  # low bits truncated before lookup

_i = np.arange(SINE_LUT_LEN)
SINE_LUT = np.rint(
    np.sin(np.pi / 2 * (_i + 0.5) / SINE_LUT_LEN) * AMP_FULL_SCALE
).astype(np.int64)
del _i

# |table/32767 - sin(2*pi*phase/2**40)|: half-LSB value rounding plus the
# worst-case slope error from truncating the low 22 phase bits
SINE_LOOKUP_ERROR_BOUND = 2.0**-15 + 2 * np.pi * 2.0**-19


def sine_lookup(phase_word: int) -> int:
    """Signed sine code in [-32767, 32767] for a 40-bit phase word."""
    top = (phase_word & WORD_MASK) >> _INDEX_SHIFT
    quad = top >> SINE_LUT_BITS
    idx = top & (SINE_LUT_LEN - 1)
    if quad & 1:
        idx = SINE_LUT_LEN - 1 - idx
    value = int(SINE_LUT[idx])
    return -value if quad & 2 else value


def sine_lookup_array(phase_words: np.ndarray) -> np.ndarray:
    """Vectorized :func:`sine_lookup` over uint64 phase words."""
    top = (phase_words & np.uint64(WORD_MASK)) >> np.uint64(_INDEX_SHIFT)
    quad = (top >> np.uint64(SINE_LUT_BITS)).astype(np.int64)
    idx = (top & np.uint64(SINE_LUT_LEN - 1)).astype(np.int64)
    idx = np.where(quad & 1, SINE_LUT_LEN - 1 - idx, idx)
    value = SINE_LUT[idx]
    return np.where(quad & 2, -value, value)


def scale_amplitude(amp_code: int, sine_code: int) -> int:
    # symmetric round-half-away product scaling keeps negation exact,
    # which the crosstalk cancellation path depends on
    p = amp_code * sine_code
    if p >= 0:
        return (p + (1 << 14)) >> 15
    return -((-p + (1 << 14)) >> 15)


def scale_amplitude_array(amp_codes, sine_codes) -> np.ndarray:
    p = np.asarray(amp_codes, dtype=np.int64) * np.asarray(
        sine_codes, dtype=np.int64
    )
    mag = (np.abs(p) + (1 << 14)) >> 15
    return np.sign(p) * mag


@dataclass
class GlobalCounter:
    """Free-running 40-bit DDS-tick counter shared by all channels."""

    value: int = 0

    def __post_init__(self):
        self.value &= WORD_MASK

    def tick(self, n: int = 1):
        self.value = (self.value + n) & WORD_MASK


@dataclass
class FrameMask:
    apply: bool = False
    invert: bool = False


@dataclass(frozen=True)
class DdsSample:
    value: int
    phase_total: int  # diagnostic tap: summed phase before the sine LUT


@dataclass
class ToneState:
    freq: int = 0
    phase_acc: int = 0
    phase_offset: int = 0
    amp: int = 0
    frame_acc: int = 0
    feedforward_enabled: bool = False

    def total_phase(self) -> int:
        return (self.phase_acc + self.phase_offset + self.frame_acc) & WORD_MASK

    def sample(self) -> DdsSample:
        phase = self.total_phase()
        return DdsSample(scale_amplitude(self.amp, sine_lookup(phase)), phase)

    def advance(self, extra_freq: int = 0):
        self.phase_acc = (self.phase_acc + self.freq + extra_freq) & WORD_MASK

    def sync(self, counter: GlobalCounter):
        """Overwrite the accumulated phase with the global phase freq*t."""
        self.phase_acc = (self.freq * counter.value) & WORD_MASK

    def retune(self, freq_word: int, counter: GlobalCounter, sync: bool = True):
        """Set a new frequency word; by default with a sync pulse.

        The frequency update and the phase overwrite are simultaneous
        (same tick), so the overwritten phase already uses the new word.
        """
        self.freq = freq_word & WORD_MASK
        if sync:
            self.sync(counter)


@dataclass
class DdsChannel:
    tones: list[ToneState] = field(
        default_factory=lambda: [ToneState(), ToneState()]
    )

    def step(self, feedforward_word: int = 0) -> tuple[DdsSample, DdsSample]:
        """One DDS tick: emit both tones' samples, then advance phases.

        The caller advances the global counter (it is shared across
        channels and must tick exactly once per DDS tick). A tone with
        feed-forward enabled accumulates phase at freq + correction.
        """
        out = []
        for tone in self.tones:
            out.append(tone.sample())
            tone.advance(feedforward_word if tone.feedforward_enabled else 0)
        return out[0], out[1]

    def apply_frame_rotation(
        self, delta: int, masks: tuple[FrameMask, FrameMask]
    ):
        """Add +-delta to each tone's frame accumulator per its mask.

        Never touches phase accumulators; the frame term enters only the
        output phase summer.
        """
        for tone, mask in zip(self.tones, masks):
            if not mask.apply:
                continue
            step = -delta if mask.invert else delta
            tone.frame_acc = (tone.frame_acc + step) & WORD_MASK


def synth_tone(
    freq_word: int,
    n: int,
    phase_start: int = 0,
    amp_code: int = AMP_FULL_SCALE,
    phase_offset: int = 0,
) -> np.ndarray:
    """Vectorized n-tick tone burst, bit-identical to stepping a ToneState.

    phase_start is the accumulator value at the first tick. Exactness:
    2**40 divides 2**64, so uint64 wraparound then masking is exact
    modular arithmetic.
    """
    k = np.arange(n, dtype=np.uint64)
    phases = (
        np.uint64(phase_start) + np.uint64(freq_word & WORD_MASK) * k
    ) & np.uint64(WORD_MASK)
    phases = (phases + np.uint64(phase_offset % WORD_MODULUS)) & np.uint64(
        WORD_MASK
    )
    return scale_amplitude_array(amp_code, sine_lookup_array(phases)).astype(
        np.int64
    )
