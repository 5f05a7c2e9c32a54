"""Parameter-modulation engine: 256-bit knot words and accumulator chains.

Every pulse parameter (frequency, phase, amplitude, frame increment, per
tone) is produced by its own engine that plays cubic segments ("knots").
A knot word carries four 40-bit coefficients, a 40-bit duration in engine
cycles, and metadata routing/flag bits; the engine loads the coefficients
into a chain of accumulators and emits one value per cycle:

    emit acc0; acc2 += acc3; acc1 += acc2; acc0 += acc1   (all mod 2**40)

which evaluates, at step k of the knot,

    out[k] = a0 + a1*C(k,1) + a2*C(k+1,2) + a3*C(k+2,3)

i.e. a cubic in k expressed over a binomial basis. ``poly_to_knot``
converts an ordinary per-cycle polynomial c0 + c1*k + c2*k^2 + c3*k^3 into
these coefficients (a forward-difference transform).

Fixed-point convention: frequency/phase/frame knots place the hardware
word at the accumulator's full width (0 fractional bits). Amplitude knots
use s16.24: the signed 16-bit amplitude code sits in the top bits and the
low 24 bits are sub-LSB headroom that accumulates across cycles, so slow
ramps still move. Quantization error after rounding each coefficient to
half an accumulator LSB is bounded by

    |engine - ideal cubic|(k) <= 0.5*(1 + C(k,1) + C(k+1,2) + C(k+2,3))

accumulator LSBs (2**-24 of an amplitude code LSB each).
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from gatesynth.words import (
    AMP_FULL_SCALE,
    ENGINE_CLOCK_HZ,
    F_SAMPLE_HZ,
    WORD_MASK,
    WORD_MODULUS,
    round_half_away,
    to_signed,
)

WORD_BYTES = 32  # 256-bit records
FIFO_DEPTH = 256

AMP_FRAC_BITS = 24  # s16.24 amplitude accumulator radix

MIN_FRAME_ROTATION_CYCLES = 4


def min_frame_rotation_duration() -> int:
    """Shortest standalone frame-rotation op, in engine cycles."""
    return MIN_FRAME_ROTATION_CYCLES


def min_frame_rotation_seconds() -> float:
    return MIN_FRAME_ROTATION_CYCLES / ENGINE_CLOCK_HZ


class WordKind(enum.IntEnum):
    DATA = 0
    PLUT_PROGRAM = 1
    MLUT_PROGRAM = 2
    GLUT_PROGRAM = 3
    GATE_SEQUENCE = 4


class Param(enum.IntEnum):
    """Engine selector: tone = value >> 2, kind = value & 3."""

    FREQ0 = 0
    PHASE0 = 1
    AMP0 = 2
    FRAME0 = 3
    FREQ1 = 4
    PHASE1 = 5
    AMP1 = 6
    FRAME1 = 7

    @property
    def tone(self) -> int:
        return self.value >> 2

    @property
    def is_freq(self) -> bool:
        return self.value & 3 == 0

    @property
    def is_phase(self) -> bool:
        return self.value & 3 == 1

    @property
    def is_amp(self) -> bool:
        return self.value & 3 == 2

    @property
    def is_frame(self) -> bool:
        return self.value & 3 == 3


class CoefficientOverflowError(ValueError):
    """A spline coefficient fell outside the signed 40-bit range."""


@dataclass(frozen=True)
class SplineWord:
    """One 256-bit knot record (kind DATA or PLUT_PROGRAM).

    Bit layout (little-endian serialization; documented in
    docs/wordstream_format.md): coefficients u0..u3 at [0:160), duration
    [160:200), channel [200:203), param [203:206), wait_for_trigger [206],
    sync [207], feedforward [208], frame apply/invert masks [209:213),
    programming address [213:225), nop [225], kind [253:256).
    """

    u0: int = 0
    u1: int = 0
    u2: int = 0
    u3: int = 0
    duration: int = 1
    channel: int = 0
    param: Param = Param.FREQ0
    wait_for_trigger: bool = False
    sync: bool = False
    feedforward: bool = False
    frame_apply: tuple[bool, bool] = (False, False)
    frame_invert: tuple[bool, bool] = (False, False)
    prog_addr: int = 0
    nop: bool = False
    kind: WordKind = WordKind.DATA

    def __post_init__(self):
        for name in ("u0", "u1", "u2", "u3", "duration"):
            v = getattr(self, name)
            if not 0 <= v < WORD_MODULUS:
                raise ValueError(f"{name}={v} does not fit in 40 bits")
        if self.duration < 1:
            raise ValueError("duration must be >= 1 cycle")
        if not 0 <= self.channel < 8:
            raise ValueError(f"channel {self.channel} out of range")
        if not 0 <= self.prog_addr < 1 << 12:
            raise ValueError(f"prog_addr {self.prog_addr} out of range")
        if self.kind not in (WordKind.DATA, WordKind.PLUT_PROGRAM):
            raise ValueError("SplineWord kind must be DATA or PLUT_PROGRAM")

    @property
    def coefficients(self) -> tuple[int, int, int, int]:
        return (self.u0, self.u1, self.u2, self.u3)

    def encode(self) -> bytes:
        v = (
            self.u0
            | self.u1 << 40
            | self.u2 << 80
            | self.u3 << 120
            | self.duration << 160
            | self.channel << 200
            | int(self.param) << 203
            | int(self.wait_for_trigger) << 206
            | int(self.sync) << 207
            | int(self.feedforward) << 208
            | int(self.frame_apply[0]) << 209
            | int(self.frame_apply[1]) << 210
            | int(self.frame_invert[0]) << 211
            | int(self.frame_invert[1]) << 212
            | self.prog_addr << 213
            | int(self.nop) << 225
            | int(self.kind) << 253
        )
        return v.to_bytes(WORD_BYTES, "little")

    @classmethod
    def decode(cls, raw: bytes) -> "SplineWord":
        if len(raw) != WORD_BYTES:
            raise ValueError(f"expected {WORD_BYTES} bytes, got {len(raw)}")
        v = int.from_bytes(raw, "little")
        return cls(
            u0=v & WORD_MASK,
            u1=(v >> 40) & WORD_MASK,
            u2=(v >> 80) & WORD_MASK,
            u3=(v >> 120) & WORD_MASK,
            duration=(v >> 160) & WORD_MASK,
            channel=(v >> 200) & 7,
            param=Param((v >> 203) & 7),
            wait_for_trigger=bool((v >> 206) & 1),
            sync=bool((v >> 207) & 1),
            feedforward=bool((v >> 208) & 1),
            frame_apply=(bool((v >> 209) & 1), bool((v >> 210) & 1)),
            frame_invert=(bool((v >> 211) & 1), bool((v >> 212) & 1)),
            prog_addr=(v >> 213) & 0xFFF,
            nop=bool((v >> 225) & 1),
            kind=WordKind((v >> 253) & 7),
        )

    def as_plut_program(self, addr: int) -> "SplineWord":
        return SplineWord(
            **{
                **self.__dict__,
                "kind": WordKind.PLUT_PROGRAM,
                "prog_addr": addr,
            }
        )

    def as_data(self) -> "SplineWord":
        return SplineWord(
            **{**self.__dict__, "kind": WordKind.DATA, "prog_addr": 0}
        )


def barrier_word(channel: int, param: Param) -> SplineWord:
    """NOP word with wait_for_trigger set: a zero-time trigger barrier."""
    return SplineWord(
        channel=channel, param=param, nop=True, wait_for_trigger=True
    )


def poly_to_knot(c0, c1, c2, c3) -> tuple[int, int, int, int]:
    """Forward-difference transform of a per-cycle cubic to knot words.

    Inputs are the polynomial coefficients in accumulator LSB units (real
    numbers allowed); the binomial-basis outputs are rounded half away
    from zero and must fit the signed 40-bit accumulator.

    Exact for integer constants and integer linears: with c2 = c3 = 0 the
    transform is the identity on (c0, c1).
    """
    c0, c1, c2, c3 = (Fraction(x) for x in (c0, c1, c2, c3))
    basis = (c0, c1 - c2 + c3, 2 * c2 - 6 * c3, 6 * c3)
    out = []
    for i, a in enumerate(basis):
        q = round_half_away(a)
        if not -(1 << 39) <= q < 1 << 39:
            raise CoefficientOverflowError(
                f"coefficient a{i}={q} exceeds the signed 40-bit range"
            )
        out.append(q & WORD_MASK)
    return tuple(out)


# Per-cycle coefficient scale from parameter units to accumulator LSBs:
# amplitude fraction -> s16.24 code, Hz -> frequency word, turns -> phase
# word. Applies uniformly to all four coefficients of a knot.
AMP_ACC_PER_UNIT = Fraction(AMP_FULL_SCALE * (1 << AMP_FRAC_BITS))
FREQ_ACC_PER_HZ = Fraction(WORD_MODULUS, F_SAMPLE_HZ)
PHASE_ACC_PER_TURN = Fraction(WORD_MODULUS)


def amp_acc_to_code(acc: int) -> int:
    """Top 16 bits of an s16.24 amplitude accumulator (arithmetic shift)."""
    return to_signed(acc) >> AMP_FRAC_BITS


@dataclass
class SplineEngine:
    """One parameter's knot player: FIFO, accumulator chain, trigger gate.

    Engines power up blocked on an implicit trigger barrier so that the
    first gate starts aligned across all engines of all channels. A
    trigger is an edge event: it releases engines blocked at a barrier on
    that cycle and is not latched otherwise.
    """

    channel: int = 0
    param: Param = Param.FREQ0
    fifo: deque = field(default_factory=deque)
    acc: list = field(default_factory=lambda: [0, 0, 0, 0])
    remaining: int = 0
    last_output: int = 0
    powerup_wait: bool = True
    blocked: bool = True
    trigger_now: bool = False
    high_water: int = 0
    words_consumed: int = 0
    loaded_word: SplineWord | None = None
    live: bool = False

    def push(self, word: SplineWord) -> bool:
        """Queue a knot; returns False (word not queued) when full."""
        if len(self.fifo) >= FIFO_DEPTH:
            return False
        self.fifo.append(word)
        self.high_water = max(self.high_water, len(self.fifo))
        return True

    @property
    def awaiting_trigger(self) -> bool:
        return self.blocked

    @property
    def active(self) -> bool:
        return self.remaining > 0

    def trigger(self):
        # edge event; the power-up gate is latched open by the first one
        self.trigger_now = True
        self.powerup_wait = False

    def _load_next(self):
        while self.remaining == 0 and self.fifo:
            if self.powerup_wait:
                self.blocked = True
                return
            head = self.fifo[0]
            if head.wait_for_trigger and not self.trigger_now:
                self.blocked = True
                return
            self.fifo.popleft()
            self.words_consumed += 1
            if head.nop:
                continue
            self.acc = list(head.coefficients)
            self.remaining = head.duration
            self.loaded_word = head
        self.blocked = self.powerup_wait

    def step(self) -> int:
        """One engine cycle; returns the emitted parameter word.

        An idle engine (empty FIFO or blocked) holds its last value;
        ``live`` distinguishes a real knot sample from that hold.
        """
        self.loaded_word = None
        self.live = False
        if self.remaining == 0:
            self._load_next()
        self.trigger_now = False
        if self.remaining == 0:
            return self.last_output
        self.live = True
        a = self.acc
        out = a[0]
        a[2] = (a[2] + a[3]) & WORD_MASK
        a[1] = (a[1] + a[2]) & WORD_MASK
        a[0] = (a[0] + a[1]) & WORD_MASK
        self.remaining -= 1
        self.last_output = out
        return out
