"""Program verification: static lints plus qubit-oracle cross-checks.

Static lints read the compiled gate words: sideband-triplet alignment,
sync flags on re-used frequencies, and feed-forward routing against the
declared Raman pairs. Dynamic checks run the full simulator, rebuild
the physical drive from the recorded tone spans, and compare the
closed-form qubit evolution against a fine-step integrator, including
a second run at a shifted power-up counter to confirm the program's
phases do not depend on when the box was turned on.

Every check lands in one :class:`CheckResult` line, so the report is
grep-friendly: ``PASS <name>: <detail>`` or ``FAIL <name>: <detail>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gatesynth.luts import GateDefinition, simulate_link
from gatesynth.program import Program
from gatesynth.qubit import (
    DriveSegment,
    QubitState,
    TonePlayback,
    evolve_numeric,
    evolve_sequence,
    raman_pair_to_drive,
)
from gatesynth.simulate import (
    SimulationResult,
    ToneSpan,
    program_stream,
    simulate_program,
)
from gatesynth.words import WORD_MODULUS

# spacing asymmetry (in frequency LSBs) under which three words are
# treated as an intended symmetric sideband triplet
TRIPLET_WINDOW = 16

ORACLE_SEGMENT_CAP = 64  # fine-step integration is expensive


@dataclass(frozen=True)
class Finding:
    rule: str
    message: str
    gate: str | None = None

    def __str__(self):
        where = f" [gate {self.gate}]" if self.gate else ""
        return f"{self.message}{where}"


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def __str__(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


@dataclass
class VerificationReport:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def render(self) -> str:
        return "\n".join(str(c) for c in self.checks)


# -- static lints -----------------------------------------------------------


def _constant_freq_words(gate: GateDefinition):
    """(channel, tone, word, sync, feedforward) per parked freq knot."""
    for w in (*gate.words, *gate.streamed):
        if w.param.is_freq and not (w.u1 or w.u2 or w.u3):
            yield w.channel, w.param.tone, w.u0, w.sync, w.feedforward


def lint_ms_triplets(prog: Program) -> list[Finding]:
    """Flag near-symmetric sideband triplets that miss exact alignment.

    Three distinct words (lo, mid, hi) with |(hi-mid) - (mid-lo)| small
    are read as carrier mid with red/blue sidebands; their beat phases
    stay locked only when lo + hi == 2*mid exactly.
    """
    out = []
    for gate in prog.gates:
        words = sorted({w for _, _, w, _, _ in _constant_freq_words(gate) if w})
        for i in range(len(words)):
            for j in range(i + 1, len(words)):
                for k in range(j + 1, len(words)):
                    lo, mid, hi = words[i], words[j], words[k]
                    mismatch = lo + hi - 2 * mid
                    if mismatch and abs(mismatch) <= TRIPLET_WINDOW:
                        out.append(Finding(
                            rule="ms-triplet",
                            gate=gate.name,
                            message=(
                                f"sideband triplet ({lo}, {mid}, {hi}) "
                                f"misaligned by {mismatch} LSB: sum and "
                                "difference beat phases drift at "
                                f"{abs(mismatch)} f_eps; round the words "
                                "so red + blue = 2 * carrier"
                            ),
                        ))
    return out


def lint_sync_reuse(prog: Program) -> list[Finding]:
    """Re-used frequency words must carry the sync flag.

    Once a tone has moved away from a frequency, coming back to it
    without a synchronization operation leaves the phase depending on
    the excursion's length, so nominally identical pulses rotate about
    different axes.
    """
    out = []
    seen: dict[tuple[int, int], set[int]] = {}
    current: dict[tuple[int, int], int | None] = {}
    for item in prog.sequence:
        if item not in {g.name for g in prog.gates}:
            continue  # trigger barriers carry no frequency content
        gate = prog.gate(item)
        for ch, tone, word, sync, _ in _constant_freq_words(gate):
            key = (ch, tone)
            if not word:
                # zero-frequency padding carries no drive phase
                current[key] = word
                continue
            if (
                word != current.get(key)
                and word in seen.get(key, ())
                and not sync
            ):
                out.append(Finding(
                    rule="sync-reuse",
                    gate=gate.name,
                    message=(
                        f"channel {ch} tone {tone}: frequency word {word} "
                        "re-used without sync; pulses that revisit a "
                        "frequency must be applied with a synchronization "
                        "operation to stay phase coherent"
                    ),
                ))
            seen.setdefault(key, set()).add(word)
            current[key] = word
    return out


def lint_feedforward_routing(prog: Program) -> list[Finding]:
    """Exactly one leg of each declared Raman pair takes the correction.

    Both legs corrected doubles the shift and moves the beat; neither
    leg corrected leaves the drift uncompensated. The correction also
    belongs on the higher-frequency leg so its sign matches the comb
    bookkeeping.
    """
    out = []
    for gate in prog.gates:
        info = {
            (ch, tone): (word, ff)
            for ch, tone, word, _, ff in _constant_freq_words(gate)
        }
        if not any(ff for _, ff in info.values()):
            continue  # feed-forward unused in this gate
        for pair in prog.pairs:
            if pair.a not in info or pair.b not in info:
                continue
            (wa, fa), (wb, fb) = info[pair.a], info[pair.b]
            flagged = int(fa) + int(fb)
            if flagged == 2:
                out.append(Finding(
                    rule="feedforward-routing",
                    gate=gate.name,
                    message=(
                        f"pair {pair.name}: feed-forward flagged on both "
                        "legs; exactly one leg of a Raman pair takes the "
                        "correction"
                    ),
                ))
            elif flagged == 1:
                hi_flagged = fa if wa >= wb else fb
                if not hi_flagged:
                    out.append(Finding(
                        rule="feedforward-routing",
                        gate=gate.name,
                        message=(
                            f"pair {pair.name}: feed-forward sits on the "
                            "lower-frequency leg; the correction belongs "
                            "on the higher-frequency leg of each pair"
                        ),
                    ))
            else:
                out.append(Finding(
                    rule="feedforward-routing",
                    gate=gate.name,
                    message=(
                        f"pair {pair.name}: feed-forward used in this gate "
                        "but neither leg of the pair is corrected"
                    ),
                ))
    return out


# -- dynamic checks ---------------------------------------------------------


def drive_segments(
    result: SimulationResult,
    a_key: tuple[int, int],
    b_key: tuple[int, int],
    ref,
) -> list[DriveSegment]:
    """Overlay two tones' span lists into beat-note drive segments.

    Only intervals where both tones hold nonzero amplitude drive the
    transition; in the rotating frame the state idles in the gaps, so
    gaps emit no segment (the tones' phase ramps carry the coherence).
    """
    sa = result.span_list(*a_key)
    sb = result.span_list(*b_key)
    segs = []
    i = j = 0
    while i < len(sa) and j < len(sb):
        s, t = sa[i], sb[j]
        start = max(s.start_tick, t.start_tick)
        end = min(s.end_tick, t.end_tick)
        if end > start:
            # spans store the tick-zero intercept; the playback snapshot
            # wants the phase at the overlap's first tick
            pa = (s.freq_word * start + s.phase_word) % WORD_MODULUS
            pb = (t.freq_word * start + t.phase_word) % WORD_MODULUS
            segs.append(raman_pair_to_drive(
                TonePlayback(s.freq_word, pa, s.amp_code),
                TonePlayback(t.freq_word, pb, t.amp_code),
                duration_ticks=end - start,
                start_tick=start,
                ref=ref,
            ))
        if s.end_tick <= t.end_tick:
            i += 1
        else:
            j += 1
    return segs


def phase_sync_findings(result: SimulationResult) -> list[Finding]:
    """Pulses revisiting a frequency must sit on the global phase grid.

    A span's sync deviation is how far the phase accumulator is from
    freq * t on the shared counter; zero means a synchronization pulse
    (or unbroken accumulation at that frequency) pinned it. Any other
    value on a revisited frequency means the rotation axis depends on
    the idle history.
    """
    out = []
    for (ch, tone), spans in sorted(result.spans.items()):
        seen: set[int] = set()
        prev: int | None = None
        for s in spans:
            # prev follows every span: an excursion at zero amplitude
            # still moves the accumulator off the old frequency
            arrived = s.freq_word != prev
            prev = s.freq_word
            if not s.freq_word:
                continue  # zero-frequency padding carries no phase
            if (
                s.amp_code
                and arrived
                and s.freq_word in seen
                and s.sync_deviation
            ):
                turns = s.sync_deviation / WORD_MODULUS
                out.append(Finding(
                    rule="phase-sync",
                    message=(
                        f"channel {ch} tone {tone}: pulse at tick "
                        f"{s.start_tick} revisits frequency word "
                        f"{s.freq_word} with phase {turns:.9f} turns "
                        "off the global grid; add the sync flag"
                    ),
                ))
            if s.amp_code:
                seen.add(s.freq_word)
    return out


def max_axis_deviation_turns(result: SimulationResult) -> float:
    """Largest off-grid phase among pulses that revisit a frequency."""
    worst = 0
    for spans in result.spans.values():
        seen: set[int] = set()
        prev: int | None = None
        for s in spans:
            arrived = s.freq_word != prev
            prev = s.freq_word
            if not s.freq_word:
                continue
            if s.amp_code and arrived and s.freq_word in seen:
                dev = min(s.sync_deviation, WORD_MODULUS - s.sync_deviation)
                worst = max(worst, dev)
            if s.amp_code:
                seen.add(s.freq_word)
    return worst / WORD_MODULUS


def verify_phase_sync(prog: Program, result: SimulationResult) -> CheckResult:
    findings = phase_sync_findings(result)
    dev = max_axis_deviation_turns(result)
    if findings:
        return CheckResult(
            "phase-sync", False,
            f"max axis deviation {dev:.9f} turns; " + str(findings[0]),
        )
    return CheckResult(
        "phase-sync", True,
        f"max axis deviation {dev:.9f} turns over revisited frequencies",
    )


def oracle_evolution_check(segments: list[DriveSegment]) -> CheckResult:
    """Closed-form two-level evolution against fine-step integration."""
    if not segments:
        return CheckResult("oracle-evolution", True, "no driven segments")
    capped = segments[:ORACLE_SEGMENT_CAP]
    state = QubitState.ground()
    closed = evolve_sequence(state, capped)
    numeric = state
    for seg in capped:
        numeric = evolve_numeric(numeric, seg)
    err = float(
        np.linalg.norm(closed.as_array() - numeric.as_array())
    )
    norm_err = abs(closed.norm - 1.0)
    passed = err < 1e-9 and norm_err < 1e-12
    return CheckResult(
        "oracle-evolution", passed,
        f"closed-form vs integrator {err:.2e} over {len(capped)} segments, "
        f"norm error {norm_err:.2e}",
    )


def counter_invariance_check(
    prog: Program, shift: int = 987654321
) -> CheckResult:
    """Drive phases must not depend on the power-up counter value.

    Two full pipeline runs at different counter values must derive
    identical drive segments up to a common phase reference; with every
    frequency-reusing pulse synced the phases agree to well below a
    microturn.
    """
    if not prog.pairs:
        return CheckResult(
            "counter-invariance", True, "no Raman pairs declared"
        )
    base = simulate_program(prog, counter_start=prog.counter_pin or 0)
    moved = simulate_program(
        prog, counter_start=((prog.counter_pin or 0) + shift) % WORD_MODULUS
    )
    ref = prog.comb_reference
    worst = 0.0
    total = 0
    for pair in prog.pairs:
        a = drive_segments(base, pair.a, pair.b, ref)
        b = drive_segments(moved, pair.a, pair.b, ref)
        if len(a) != len(b):
            return CheckResult(
                "counter-invariance", False,
                f"pair {pair.name}: segment count changed with the "
                f"counter ({len(a)} vs {len(b)})",
            )
        if not a:
            continue
        # a counter shift moves every beat phase by the same amount;
        # compare phases relative to each run's first segment
        deltas = [
            (y.phase_rad - x.phase_rad) - (b[0].phase_rad - a[0].phase_rad)
            for x, y in zip(a, b)
        ]
        for x, y in zip(a, b):
            if (
                x.rabi_rad_s != y.rabi_rad_s
                or x.detuning_rad_s != y.detuning_rad_s
                or x.duration_s != y.duration_s
            ):
                return CheckResult(
                    "counter-invariance", False,
                    f"pair {pair.name}: segment shape changed with the "
                    "counter",
                )
        tau = 2 * np.pi
        worst = max(
            worst,
            max(abs((d + np.pi) % tau - np.pi) for d in deltas),
        )
        total += len(a)
    passed = worst < 2 * np.pi * 1e-6
    return CheckResult(
        "counter-invariance", passed,
        f"relative drive phases move {worst:.2e} rad across a "
        f"{shift}-tick counter shift ({total} segments)",
    )


def link_budget_check(prog: Program) -> CheckResult:
    """Stream the program through the link model; report underflow."""
    report = simulate_link(program_stream(prog))
    if report.ok:
        return CheckResult(
            "link-budget", True,
            f"no FIFO underflow in {report.total_cycles} cycles",
        )
    fault = report.faults[0]
    return CheckResult("link-budget", False, str(fault))


def _lint_check(name: str, findings: list[Finding]) -> CheckResult:
    if findings:
        more = f" (+{len(findings) - 1} more)" if len(findings) > 1 else ""
        return CheckResult(name, False, str(findings[0]) + more)
    return CheckResult(name, True, "clean")


def verify_program(prog: Program) -> VerificationReport:
    """Run every lint and oracle check; one CheckResult per rule."""
    checks = [
        _lint_check("ms-triplet", lint_ms_triplets(prog)),
        _lint_check("sync-reuse", lint_sync_reuse(prog)),
        _lint_check(
            "feedforward-routing", lint_feedforward_routing(prog)
        ),
    ]
    if prog.sequence:
        checks.append(link_budget_check(prog))
        result = simulate_program(
            prog, counter_start=prog.counter_pin or 0
        )
        checks.append(verify_phase_sync(prog, result))
        segments = []
        ref = prog.comb_reference
        for pair in prog.pairs:
            segments.extend(
                drive_segments(result, pair.a, pair.b, ref)
            )
        checks.append(oracle_evolution_check(segments))
        checks.append(counter_invariance_check(prog))
    return VerificationReport(checks)
