"""Fixed-point word conversions for the coherent-control signal chain.

All tone parameters are carried in 40-bit hardware words:

* frequency: unsigned, in units of ``FREQ_LSB_HZ`` = f_s / 2**40 per count,
  where f_s = 819.2 MHz is the effective DDS sample rate
* phase: unsigned, in units of turns / 2**40 (modular arithmetic is exact
  in turns, which is why the internal unit is turns and not radians)
* amplitude: signed 16-bit code in [-32767, 32767], zero-padded low when
  carried in a 40-bit field (see spline module)

Conversions use exact rational arithmetic internally so that one-count
effects (e.g. sideband triplet misalignment) are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

F_SAMPLE_HZ = 819_200_000  # effective DDS sample rate, 3125 * 2**18
ENGINE_CLOCK_HZ = 409_600_000  # sequencer / spline engine clock, f_s / 2
WORD_BITS = 40
WORD_MODULUS = 1 << WORD_BITS
WORD_MASK = WORD_MODULUS - 1

# One frequency LSB in Hz: 3125 / 2**22, an exact dyadic-over-odd rational
# that happens to be exactly representable in binary64.
FREQ_LSB_HZ = F_SAMPLE_HZ / WORD_MODULUS

AMP_FULL_SCALE = 32767  # signed 16-bit amplitude code, -32767..32767

# Alias-free synthesis band. The hardware specifies output tones from DC to
# f_s/2; anything beyond would alias and is rejected rather than wrapped.
MAX_FREQ_HZ = F_SAMPLE_HZ // 2

QUBIT_F0_HZ = 12.642812118466e9  # zero-field clock splitting
QUBIT_ZEEMAN_HZ_PER_G2 = 310.8  # second-order Zeeman coefficient


class OutOfBandError(ValueError):
    """Frequency outside the 0..f_s/2 synthesis band."""


def _as_fraction(x) -> Fraction:
    # floats convert exactly (binary expansion); no decimal re-parsing
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x)
    raise TypeError(f"expected a real number, got {type(x).__name__}")


def round_half_away(x) -> int:
    """Round to nearest integer, ties away from zero, exactly.

    This is the tie-break used for every physical-value -> word conversion
    in the package. It is applied to exact rationals, never to floats, so
    results are platform independent.
    """
    f = _as_fraction(x)
    n = f.numerator
    d = f.denominator
    if n >= 0:
        return (2 * n + d) // (2 * d)
    return -((-2 * n + d) // (2 * d))


def freq_to_word(freq_hz) -> int:
    """Convert a frequency in Hz to a 40-bit tuning word.

    word = round(freq / f_s * 2**40), computed in exact rational
    arithmetic with ties rounded half away from zero. Float inputs enter
    via their exact binary value.

    Raises :class:`OutOfBandError` for frequencies outside [0, f_s/2).
    """
    f = _as_fraction(freq_hz)
    if f < 0 or f >= MAX_FREQ_HZ:
        raise OutOfBandError(
            f"{float(f)!r} Hz is outside the synthesis band "
            f"[0, {MAX_FREQ_HZ} Hz)"
        )
    return round_half_away(f * WORD_MODULUS / F_SAMPLE_HZ)


def word_to_freq(word: int) -> float:
    """Frequency in Hz for a tuning word, exact in binary64.

    word * 3125 fits in 52 bits for any 40-bit word, so the float result
    is the mathematically exact value of word * f_s / 2**40.
    """
    if not 0 <= word < WORD_MODULUS:
        raise ValueError(f"tuning word {word} does not fit in 40 bits")
    # (word * 3125) / 2**22: integer product exact in binary64, then an
    # exact power-of-two scale
    return (word * 3125) / 4194304


def phase_turns_to_word(turns) -> int:
    """Phase in turns -> 40-bit phase word (modulo one turn)."""
    return round_half_away(_as_fraction(turns) * WORD_MODULUS) % WORD_MODULUS


def word_to_phase_turns(word: int) -> float:
    if not 0 <= word < WORD_MODULUS:
        raise ValueError(f"phase word {word} does not fit in 40 bits")
    return word / WORD_MODULUS


def amp_to_code(fraction) -> int:
    """Amplitude fraction in [-1, 1] -> signed 16-bit code."""
    f = _as_fraction(fraction)
    if abs(f) > 1:
        raise ValueError(f"amplitude {float(f)!r} outside [-1, 1]")
    return round_half_away(f * AMP_FULL_SCALE)


def code_to_amp(code: int) -> float:
    if abs(code) > AMP_FULL_SCALE:
        raise ValueError(f"amplitude code {code} outside +-{AMP_FULL_SCALE}")
    return code / AMP_FULL_SCALE


def to_signed(word: int, bits: int = WORD_BITS) -> int:
    """Two's-complement reinterpretation of a modular word."""
    word &= (1 << bits) - 1
    if word >= 1 << (bits - 1):
        word -= 1 << bits
    return word


def to_unsigned(value: int, bits: int = WORD_BITS) -> int:
    return value & ((1 << bits) - 1)


@dataclass(frozen=True)
class TripletReport:
    aligned: bool
    epsilon_mismatch: int  # 2*carrier - (red + blue), in frequency LSBs


@dataclass(frozen=True)
class MsTriplet:
    """Carrier plus red/blue sideband tuning words for an entangling gate.

    The sideband beat note keeps a fixed phase relative to the carrier only
    if 2*carrier == red + blue holds in the integer word domain; rounding
    each frequency independently can miss this by one count.
    """

    carrier: int
    red: int
    blue: int

    def __post_init__(self):
        for name in ("carrier", "red", "blue"):
            w = getattr(self, name)
            if not 0 <= w < WORD_MODULUS:
                raise ValueError(f"{name} word {w} does not fit in 40 bits")


def validate_ms_triplet(t: MsTriplet) -> TripletReport:
    """Check digital phase alignment of a sideband triplet.

    epsilon_mismatch is 2*carrier - (red + blue) in frequency LSBs; the
    triplet is phase-aligned iff it is zero. A nonzero mismatch makes the
    sideband beat note drift relative to the carrier by mismatch LSBs.
    """
    mismatch = 2 * t.carrier - (t.red + t.blue)
    return TripletReport(aligned=(mismatch == 0), epsilon_mismatch=mismatch)


def naive_ms_triplet(carrier_hz, sideband_hz) -> MsTriplet:
    """Round carrier and both sidebands independently (the hazard case)."""
    return MsTriplet(
        carrier=freq_to_word(carrier_hz),
        red=freq_to_word(_as_fraction(carrier_hz) - _as_fraction(sideband_hz)),
        blue=freq_to_word(_as_fraction(carrier_hz) + _as_fraction(sideband_hz)),
    )


def fix_ms_triplet(carrier_hz, sideband_hz) -> MsTriplet:
    """Build a sideband triplet that is aligned by construction.

    The red sideband is rounded normally; the blue word is then forced to
    2*carrier - red in the integer domain, which always validates clean.
    """
    carrier = freq_to_word(carrier_hz)
    red = freq_to_word(_as_fraction(carrier_hz) - _as_fraction(sideband_hz))
    blue = 2 * carrier - red
    if not 0 <= blue < WORD_MODULUS:
        raise OutOfBandError(
            f"blue sideband word {blue} falls outside the 40-bit range"
        )
    if word_to_freq(blue) >= MAX_FREQ_HZ:
        raise OutOfBandError(
            f"blue sideband {word_to_freq(blue)} Hz is outside the band"
        )
    return MsTriplet(carrier=carrier, red=red, blue=blue)


def qubit_frequency(b_field_gauss) -> float:
    """Field-dependent qubit splitting in Hz (second-order Zeeman shift)."""
    b = float(b_field_gauss)
    if b < 0:
        raise ValueError("field must be non-negative")
    return QUBIT_F0_HZ + QUBIT_ZEEMAN_HZ_PER_G2 * b * b
