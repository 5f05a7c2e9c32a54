"""Two-level-system oracle for checking synthesized drive semantics.

This deliberately knows nothing about words, splines or LUTs beyond the
thin conversion in :func:`raman_pair_to_drive`.  Everything else is
textbook rotating-wave evolution, so disagreements with the hardware
simulation point at phase bookkeeping bugs rather than physics.

Conventions: the state lives in the frame rotating at the qubit
frequency.  A drive segment with Rabi rate Omega, detuning Delta and
start phase phi evolves the state by

    V(phi + Delta*tau) . exp(-i*(Omega*sx - Delta*sz)*tau/2) . V(phi)^-1

with V(psi) = exp(-i*psi*sz/2): the constant-Hamiltonian rotation in
the drive frame, conjugated by the frame change whose angle advances by
Delta*tau across the segment.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .words import (
    AMP_FULL_SCALE,
    F_SAMPLE_HZ,
    QUBIT_F0_HZ,
    WORD_MODULUS,
    _as_fraction,
    word_to_freq,
)

TWO_PI = 2.0 * math.pi

# Matching the frequency plan elsewhere: the two-photon drive bridges
# the qubit splitting via 105 comb teeth plus an rf beat note.
DEFAULT_HARMONIC = 105
DEFAULT_REP_RATE_HZ = 120e6
DEFAULT_RABI_CAL_RAD_S = TWO_PI * 500e3


@dataclass
class QubitState:
    """Amplitudes of the two levels."""

    a0: complex = 1.0 + 0.0j
    a1: complex = 0.0 + 0.0j

    @classmethod
    def ground(cls) -> "QubitState":
        return cls(1.0 + 0.0j, 0.0 + 0.0j)

    @property
    def norm(self) -> float:
        return math.sqrt(abs(self.a0) ** 2 + abs(self.a1) ** 2)

    @property
    def p1(self) -> float:
        return abs(self.a1) ** 2

    def as_array(self) -> np.ndarray:
        return np.array([self.a0, self.a1], dtype=complex)


@dataclass(frozen=True)
class DriveSegment:
    """One interval of constant drive parameters.

    rabi_rad_s >= 0; a sign flip of the physical field is a half-turn
    in phase_rad.  detuning_rad_s is drive minus qubit.  phase_rad is
    the drive phase in the qubit frame at the segment start.
    """

    rabi_rad_s: float
    detuning_rad_s: float
    phase_rad: float
    duration_s: float

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("segment duration must be nonnegative")
        if self.rabi_rad_s < 0:
            raise ValueError(
                "negative Rabi rate; fold the sign into phase_rad"
            )


def _zrot(psi: float) -> np.ndarray:
    return np.array(
        [[cmath.exp(-0.5j * psi), 0.0], [0.0, cmath.exp(0.5j * psi)]],
        dtype=complex,
    )


def segment_unitary(seg: DriveSegment) -> np.ndarray:
    """Exact 2x2 propagator of one segment (qubit frame)."""
    tau = seg.duration_s
    if tau == 0.0:
        return np.eye(2, dtype=complex)
    a = 0.5 * seg.rabi_rad_s
    c = -0.5 * seg.detuning_rad_s
    w = math.hypot(a, c)
    theta = w * tau
    if w == 0.0:
        core = np.eye(2, dtype=complex)
    else:
        s = math.sin(theta) / w
        core = math.cos(theta) * np.eye(2, dtype=complex) - 1j * s * np.array(
            [[c, a], [a, -c]], dtype=complex
        )
    psi_s = seg.phase_rad
    psi_e = seg.phase_rad + seg.detuning_rad_s * tau
    return _zrot(psi_e) @ core @ _zrot(psi_s).conj().T


def evolve(state: QubitState, seg: DriveSegment) -> QubitState:
    vec = segment_unitary(seg) @ state.as_array()
    return QubitState(complex(vec[0]), complex(vec[1]))


def evolve_sequence(state: QubitState, segments) -> QubitState:
    for seg in segments:
        state = evolve(state, seg)
    return state


def evolve_numeric(
    state: QubitState, seg: DriveSegment, steps: int | None = None
) -> QubitState:
    """Brute-force RK4 integration of the same segment.

    Integrates the time-dependent qubit-frame Hamiltonian directly,
    sharing no algebra with :func:`segment_unitary`; used as the
    independent check that the closed form is right.
    """
    tau = seg.duration_s
    if tau == 0.0:
        return QubitState(state.a0, state.a1)
    if steps is None:
        swept = (seg.rabi_rad_s + abs(seg.detuning_rad_s)) * tau
        steps = max(2000, int(800 * swept))
    dt = tau / steps
    half_rabi = 0.5 * seg.rabi_rad_s

    def deriv(t: float, vec: np.ndarray) -> np.ndarray:
        psi = seg.phase_rad + seg.detuning_rad_s * t
        od = half_rabi * cmath.exp(-1j * psi)
        return -1j * np.array(
            [od * vec[1], od.conjugate() * vec[0]], dtype=complex
        )

    vec = state.as_array()
    t = 0.0
    for _ in range(steps):
        k1 = deriv(t, vec)
        k2 = deriv(t + 0.5 * dt, vec + 0.5 * dt * k1)
        k3 = deriv(t + 0.5 * dt, vec + 0.5 * dt * k2)
        k4 = deriv(t + dt, vec + dt * k3)
        vec = vec + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return QubitState(complex(vec[0]), complex(vec[1]))


def rotation_axis(seg: DriveSegment) -> np.ndarray:
    """Bloch-sphere rotation axis of the segment at its start time.

    Unit vector (before the frame angle advances); two pulses that are
    supposed to add coherently must share this axis.
    """
    a = seg.rabi_rad_s
    c = -seg.detuning_rad_s
    n = math.hypot(a, c)
    if n == 0.0:
        return np.array([0.0, 0.0, 1.0])
    x = a * math.cos(seg.phase_rad) / n
    y = a * math.sin(seg.phase_rad) / n
    return np.array([x, y, c / n])


def ramsey_probability(phase_rad: float) -> float:
    """P(|1>) after two pi/2 pulses whose phases differ by phase_rad."""
    return math.cos(0.5 * phase_rad) ** 2


# --------------------------------------------------------------------------
# bridging synthesized tone parameters to drive segments


@dataclass(frozen=True)
class TonePlayback:
    """Snapshot of one rf tone over an interval of constant settings.

    phase_word is the full 40-bit phase (accumulator plus offset plus
    frame) at the interval's first sample tick.
    """

    freq_word: int
    phase_word: int
    amp_code: int


@dataclass(frozen=True)
class CombReference:
    """Frequency plan linking rf beats to the qubit splitting."""

    harmonic: int = DEFAULT_HARMONIC
    rep_rate_hz: float = DEFAULT_REP_RATE_HZ
    qubit_freq_hz: float = QUBIT_F0_HZ
    rabi_cal_rad_s: float = DEFAULT_RABI_CAL_RAD_S

    @property
    def comb_span_hz(self) -> Fraction:
        return self.harmonic * _as_fraction(self.rep_rate_hz)

    @property
    def beat_target_hz(self) -> Fraction:
        """rf beat that lands the drive exactly on the qubit."""
        return _as_fraction(self.qubit_freq_hz) - self.comb_span_hz


def raman_pair_to_drive(
    tone_a: TonePlayback,
    tone_b: TonePlayback,
    duration_ticks: int,
    start_tick: int = 0,
    ref: CombReference = CombReference(),
) -> DriveSegment:
    """Collapse a two-tone beat into one DriveSegment.

    The beat of the two rf legs plus ``harmonic`` comb spacings drives
    the transition.  All phase arithmetic runs over exact rationals and
    is reduced mod one turn before touching floats, so a common shift
    of the start tick moves every derived phase identically no matter
    how large the tick counter is.
    """
    hi, lo = (
        (tone_a, tone_b)
        if tone_a.freq_word >= tone_b.freq_word
        else (tone_b, tone_a)
    )
    beat_hz = _as_fraction(word_to_freq(hi.freq_word - lo.freq_word))
    drive_hz = beat_hz + ref.comb_span_hz
    detuning_hz = drive_hz - _as_fraction(ref.qubit_freq_hz)

    start_s = Fraction(start_tick, F_SAMPLE_HZ)
    beat_phase_turns = Fraction(
        (hi.phase_word - lo.phase_word) % WORD_MODULUS, WORD_MODULUS
    )
    comb_minus_qubit = ref.comb_span_hz - _as_fraction(ref.qubit_freq_hz)
    phase_turns = (beat_phase_turns + comb_minus_qubit * start_s) % 1

    amp_product = hi.amp_code * lo.amp_code
    rabi = ref.rabi_cal_rad_s * abs(amp_product) / AMP_FULL_SCALE**2
    if amp_product < 0:
        phase_turns = (phase_turns + Fraction(1, 2)) % 1

    return DriveSegment(
        rabi_rad_s=rabi,
        detuning_rad_s=TWO_PI * float(detuning_hz),
        phase_rad=TWO_PI * float(phase_turns),
        duration_s=float(Fraction(duration_ticks, F_SAMPLE_HZ)),
    )


@dataclass(frozen=True)
class MsPhases:
    """Sum and difference beat phases of a sideband pair, in radians.

    The sum phase (red plus blue, referenced against twice the shared
    leg) sets the entangling interaction's global phase; the difference
    phase moves the two sideband detunings antisymmetrically.
    """

    sum_rad: float
    difference_rad: float


def ms_phases(
    red_word: int, blue_word: int, carrier_word: int
) -> MsPhases:
    s = (red_word + blue_word - 2 * carrier_word) % WORD_MODULUS
    d = (blue_word - red_word) % WORD_MODULUS
    return MsPhases(
        sum_rad=TWO_PI * s / WORD_MODULUS,
        difference_rad=TWO_PI * d / WORD_MODULUS,
    )


def triplet_phase_drift_rad(epsilon_mismatch: int, elapsed_s: float) -> float:
    """Sum-phase error growth of a misaligned sideband triplet.

    A triplet whose words miss the 2*carrier = red + blue alignment by
    ``epsilon_mismatch`` LSBs accumulates sum phase at mismatch
    frequency-LSBs of beat error: 2*pi*mismatch*f_lsb*t.
    """
    f_lsb = 3125.0 / (1 << 22)
    return TWO_PI * epsilon_mismatch * f_lsb * elapsed_s
