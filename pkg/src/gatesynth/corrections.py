"""Dynamic correction paths: rep-rate feed-forward and crosstalk taps.

Two independent mechanisms share this module because both inject
computed signals into the synthesis chain:

* Feed-forward scales a monitored repetition-rate drift up to the comb
  harmonic that the qubit rides on and retunes exactly one tone of each
  two-photon transition, so the beat note stays put while the comb
  moves underneath it.
* Crosstalk compensation resynthesizes each tone of an aggressor
  channel at reduced amplitude, shifted phase and matched delay, and
  adds it to the victim channel.  Taps read only uncompensated traces,
  so there is no feedback path between channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .dds import scale_amplitude_array, sine_lookup_array
from .words import (
    F_SAMPLE_HZ,
    FREQ_LSB_HZ,
    WORD_MASK,
    WORD_MODULUS,
    _as_fraction,
    round_half_away,
    word_to_freq,
)

# Comb harmonic bridged by the two-photon transition and the harmonic
# the drift monitor actually watches.  Both are configuration, not
# physics: other lock points exist.
QUBIT_HARMONIC = 105
MONITOR_HARMONIC = 32
DEFAULT_FEEDFORWARD_SCALE = Fraction(QUBIT_HARMONIC, MONITOR_HARMONIC)

# Engine cycles the correction DSP needs before its output is valid.
# Tap delays below this are unrealizable.
DSP_LATENCY_CYCLES = 4

# exact rational twin of FREQ_LSB_HZ so residual arithmetic stays in
# Fraction space end to end
_FREQ_LSB = Fraction(3125, 1 << 22)
assert float(_FREQ_LSB) == FREQ_LSB_HZ


class RoutingError(ValueError):
    """Feed-forward routing cannot pick a tone (ambiguous frequencies)."""


class TapDelayError(ValueError):
    """A crosstalk tap asks for less delay than the DSP pipeline has."""


# --------------------------------------------------------------------------
# feed-forward


def feedforward_correction(measured_drift_hz, scale=DEFAULT_FEEDFORWARD_SCALE):
    """Frequency correction in Hz for a drift seen at the monitor harmonic.

    The monitor beats the comb's 32nd harmonic against a stable
    reference, so a rep-rate drift of delta reads as 32*delta while the
    qubit-bridging beat moves by 105*delta.  Scaling by 105/32 converts
    one into the other exactly.  Exact rational in, exact rational out.
    """
    return _as_fraction(measured_drift_hz) * Fraction(scale)


def feedforward_word(measured_drift_hz, scale=DEFAULT_FEEDFORWARD_SCALE) -> int:
    """Signed frequency-word correction, rounded to the nearest LSB.

    The accumulator adds this word every tick on tones with the
    feed-forward flag set.  Callers reduce mod 2**40 at the point of
    use; keeping the sign here makes the residual arithmetic legible.
    """
    corr = feedforward_correction(measured_drift_hz, scale)
    return round_half_away(corr / _FREQ_LSB)


def residual_detuning_hz(rep_rate_drift_hz, scale=DEFAULT_FEEDFORWARD_SCALE):
    """Beat-note error left after quantized feed-forward, as a Fraction.

    A rep-rate drift delta moves comb line 105 by 105*delta; the
    correction word can only move the tone in whole frequency LSBs.
    The residual is the rounding error, at most half an LSB.
    """
    delta = _as_fraction(rep_rate_drift_hz)
    measured = MONITOR_HARMONIC * delta
    applied = feedforward_word(measured, scale) * _FREQ_LSB
    return QUBIT_HARMONIC * delta - applied


@dataclass(frozen=True)
class ToneRef:
    """One rf tone of a Raman leg, tagged with its programmed frequency."""

    channel: int
    tone: int
    freq_word: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.channel, self.tone)


@dataclass(frozen=True)
class RamanTransition:
    """A two-photon transition: the beat of exactly two rf tones."""

    name: str
    legs: tuple[ToneRef, ToneRef]


def route_feedforward(
    transitions: Sequence[RamanTransition],
) -> frozenset[tuple[int, int]]:
    """Pick the tones that carry the drift correction.

    Rule: the higher-frequency leg of every transition gets the
    correction.  A tone shared between transitions is flagged once and
    serves both.  Consequences for the standard geometries:

    * single-qubit pair: the upper leg is flagged;
    * MS with sidebands above the global tone: both sideband tones;
    * MS with the global tone on top: only the global tone.

    Raises :class:`RoutingError` if any transition has equal-frequency
    legs, or if the resulting assignment would correct both legs of
    some transition (geometrically inconsistent tone stacking).
    """
    chosen: set[tuple[int, int]] = set()
    for tr in transitions:
        a, b = tr.legs
        if a.freq_word == b.freq_word:
            raise RoutingError(
                f"transition {tr.name!r}: legs have equal frequency words; "
                "cannot decide which tone carries the correction"
            )
        chosen.add(max(tr.legs, key=lambda t: t.freq_word).key)
    for tr in transitions:
        flagged = sum(t.key in chosen for t in tr.legs)
        if flagged != 1:
            raise RoutingError(
                f"transition {tr.name!r} would have {flagged} corrected "
                "legs; tone stacking is inconsistent across transitions"
            )
    return frozenset(chosen)


def ms_transitions(
    global_tone: ToneRef, red_tone: ToneRef, blue_tone: ToneRef
) -> list[RamanTransition]:
    """The two beat pairs of a Molmer-Sorensen drive."""
    return [
        RamanTransition("ms_red", (global_tone, red_tone)),
        RamanTransition("ms_blue", (global_tone, blue_tone)),
    ]


@dataclass(frozen=True)
class FeedforwardConfig:
    """Scale plus the per-tone enable/sign map produced by routing.

    ``signs`` maps (channel, tone) -> +1 or -1.  Presence means the
    tone's feed-forward flag is set; the sign covers both lock
    geometries ("added to or subtracted from" is a property of which
    side of the reference the beat sits on, not something we can
    derive).
    """

    scale: Fraction = DEFAULT_FEEDFORWARD_SCALE
    signs: Mapping[tuple[int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        for key, sign in self.signs.items():
            if sign not in (-1, 1):
                raise ValueError(f"sign for tone {key} must be +1 or -1")

    def word_for(self, channel: int, tone: int, measured_drift_hz) -> int:
        sign = self.signs.get((channel, tone))
        if sign is None:
            return 0
        return sign * feedforward_word(measured_drift_hz, self.scale)


def validate_feedforward(
    config: FeedforwardConfig, transitions: Sequence[RamanTransition]
) -> None:
    """Check the exactly-one-corrected-leg invariant against a config."""
    for tr in transitions:
        flagged = [t.key for t in tr.legs if t.key in config.signs]
        if len(flagged) != 1:
            raise RoutingError(
                f"transition {tr.name!r} has {len(flagged)} feed-forward "
                f"legs enabled ({flagged}); exactly one required"
            )


@dataclass
class TrackingFilter:
    """First-order smoother standing in for the monitor's lock loop.

    gain=1 is a passthrough; smaller gains trade settling time for
    noise rejection.  Purely optional realism for drift sweeps.
    """

    gain: float = 1.0
    state: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.gain <= 1.0:
            raise ValueError("tracking gain must be in (0, 1]")

    def update(self, measurement: float) -> float:
        self.state += self.gain * (measurement - self.state)
        return self.state


# --------------------------------------------------------------------------
# crosstalk compensation


@dataclass(frozen=True)
class ToneTrace:
    """Per-tick synthesis parameters of one tone, before any correction.

    ``phase`` holds total 40-bit phase words (accumulator + offset +
    frame) per sample tick; ``amp`` holds signed amplitude codes.  The
    simulator records these on the raw path; compensation reads them
    instead of the summed output so taps stay recursion-free.
    """

    phase: np.ndarray
    amp: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, "phase", np.asarray(self.phase, dtype=np.uint64)
        )
        object.__setattr__(self, "amp", np.asarray(self.amp, dtype=np.int64))
        if self.phase.shape != self.amp.shape:
            raise ValueError("phase and amp traces must align")


@dataclass(frozen=True)
class XtalkTap:
    """One compensation tap: source channel resynthesized onto a target.

    ``amplitude`` is the fraction of the source amplitude code to
    reinject, ``phase_turns`` the tone phase shift (set it to the
    measured crosstalk phase plus half a turn to cancel), and
    ``delay_cycles`` the coarse alignment delay in 409.6 MHz engine
    cycles.  Sub-cycle alignment goes through
    :func:`fine_delay_phase_turns` and folds into ``phase_turns``.
    """

    source: int
    target: int
    amplitude: float
    phase_turns: float
    delay_cycles: int = DSP_LATENCY_CYCLES

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("tap cannot target its own source channel")
        if abs(self.source - self.target) > 2:
            raise ValueError(
                "taps reach nearest and next-nearest neighbors only"
            )
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError("tap amplitude fraction must be in [0, 1)")
        if self.delay_cycles < DSP_LATENCY_CYCLES:
            raise TapDelayError(
                f"tap delay {self.delay_cycles} cycles is below the "
                f"{DSP_LATENCY_CYCLES}-cycle DSP latency"
            )

    @property
    def phase_word(self) -> int:
        return round_half_away(
            _as_fraction(self.phase_turns) * WORD_MODULUS
        ) % WORD_MODULUS

    @property
    def delay_ticks(self) -> int:
        # sample clock runs two ticks per engine cycle
        return 2 * self.delay_cycles


@dataclass(frozen=True)
class XtalkConfig:
    taps: tuple[XtalkTap, ...] = ()

    def taps_into(self, channel: int) -> tuple[XtalkTap, ...]:
        return tuple(t for t in self.taps if t.target == channel)


def resynthesize_tap(
    tap: XtalkTap, source_traces: Sequence[ToneTrace], n: int
) -> np.ndarray:
    """Sample vector the tap adds to its target channel.

    Each source tone is regenerated through the same lookup table and
    scaler as the main path, with the amplitude code scaled by the tap
    fraction (rounded per sample) and the phase word shifted.  The
    first ``delay_ticks`` samples are zero: nothing has reached the
    tap yet.
    """
    out = np.zeros(n, dtype=np.int64)
    d = tap.delay_ticks
    if d >= n:
        return out
    shift = np.uint64(tap.phase_word)
    for trace in source_traces:
        m = min(len(trace.phase), n - d)
        if m <= 0:
            continue
        phase = (trace.phase[:m] + shift) & np.uint64(WORD_MASK)
        scaled = np.sign(trace.amp[:m]) * np.floor(
            np.abs(trace.amp[:m]) * tap.amplitude + 0.5
        ).astype(np.int64)
        out[d : d + m] += scale_amplitude_array(
            scaled, sine_lookup_array(phase)
        )
    return out


def apply_crosstalk_compensation(
    raw: Mapping[int, np.ndarray],
    traces: Mapping[int, Sequence[ToneTrace]],
    config: XtalkConfig,
) -> dict[int, np.ndarray]:
    """Add compensation taps to delay-matched raw channel outputs.

    ``raw`` maps channel -> summed sample vector before compensation;
    ``traces`` maps channel -> per-tone synthesis traces of the same
    raw signals.  Every output is the raw vector delayed by the DSP
    latency plus the taps aimed at it.  Taps evaluate ``traces`` only,
    never compensated outputs, so zeroing one channel's raw samples
    cannot change what its neighbors receive from third channels.
    """
    latency_ticks = 2 * DSP_LATENCY_CYCLES
    out: dict[int, np.ndarray] = {}
    for ch, vec in raw.items():
        n = len(vec)
        acc = np.zeros(n, dtype=np.int64)
        m = n - latency_ticks
        if m > 0:
            acc[latency_ticks:] = vec[:m]
        for tap in config.taps_into(ch):
            src = traces.get(tap.source)
            if src:
                acc += resynthesize_tap(tap, src, n)
        out[ch] = acc
    return out


def fine_delay_phase_turns(freq_word: int, delay_s) -> Fraction:
    """Phase shift equivalent to delaying one tone by a sub-period time.

    Exact for a single tone (phase = frequency * delay); for multi-tone
    signals it is an approximation because each tone would need its own
    shift.  ``delay_s`` may be a Fraction for exact results.
    """
    turns = _as_fraction(word_to_freq(freq_word)) * _as_fraction(delay_s)
    if not 0 <= turns <= 1:
        raise ValueError(
            "fine delay exceeds one tone period; fold whole periods into "
            "the coarse delay instead"
        )
    return turns


def fine_delay_phase_word(freq_word: int, delay_s) -> int:
    """40-bit phase-word form of :func:`fine_delay_phase_turns`."""
    return round_half_away(
        fine_delay_phase_turns(freq_word, delay_s) * WORD_MODULUS
    ) % WORD_MODULUS


def demodulate(
    samples: np.ndarray, freq_word: int, n: int | None = None
) -> complex:
    """Complex amplitude of one tone in a sample vector, in output LSBs.

    Correlates against the exact accumulator phase ramp of the tone.
    Choose ``n`` so that ``freq_word * n`` is a multiple of 2**40 (an
    integer number of periods) for leakage-free results; the default
    uses the whole vector.
    """
    if n is None:
        n = len(samples)
    t = np.arange(n, dtype=np.uint64)
    phase = (t * np.uint64(freq_word)) & np.uint64(WORD_MASK)
    turns = phase.astype(np.float64) / float(WORD_MODULUS)
    ref = np.exp(-2j * np.pi * turns)
    return 2.0 * complex(np.dot(samples[:n].astype(np.float64), ref)) / n
