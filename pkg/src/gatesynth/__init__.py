"""Compiler and bit-exact simulator for a DDS/spline pulse sequencer."""

from gatesynth.words import (
    F_SAMPLE_HZ,
    ENGINE_CLOCK_HZ,
    FREQ_LSB_HZ,
    WORD_MODULUS,
    freq_to_word,
    word_to_freq,
)

__all__ = [
    "F_SAMPLE_HZ",
    "ENGINE_CLOCK_HZ",
    "FREQ_LSB_HZ",
    "WORD_MODULUS",
    "freq_to_word",
    "word_to_freq",
]

__version__ = "0.1.0"
