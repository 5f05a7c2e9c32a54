"""Line-oriented gate-program parser.

A program file declares a frequency plan, gates (spline knots per
channel/tone/parameter in physical units), correction settings and a
gate sequence.  Parsing produces plain library/sequence objects ready
for compilation plus the configuration the simulator and verifier need.
Grammar reference with examples lives in docs/program_format.md.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from .corrections import (
    RamanTransition,
    RoutingError,
    ToneRef,
    XtalkConfig,
    XtalkTap,
    route_feedforward,
)
from .luts import TRIGGER, GateDefinition
from .qubit import (
    DEFAULT_HARMONIC,
    DEFAULT_RABI_CAL_RAD_S,
    DEFAULT_REP_RATE_HZ,
    CombReference,
)
from .spline import (
    MIN_FRAME_ROTATION_CYCLES,
    AMP_ACC_PER_UNIT,
    FREQ_ACC_PER_HZ,
    PHASE_ACC_PER_TURN,
    Param,
    SplineWord,
    poly_to_knot,
)
from .words import (
    ENGINE_CLOCK_HZ,
    OutOfBandError,
    WORD_MODULUS,
    amp_to_code,
    freq_to_word,
    phase_turns_to_word,
    qubit_frequency,
)

MONITOR_HARMONIC_DEFAULT = 32


class ProgramError(ValueError):
    """Parse or consistency failure, tagged with the source line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


_PARAM_KIND = {"freq": 0, "phase": 1, "amp": 2, "frame": 3}
_PARAM_SCALE = {
    "freq": FREQ_ACC_PER_HZ,
    "phase": PHASE_ACC_PER_TURN,
    "amp": AMP_ACC_PER_UNIT,
    "frame": PHASE_ACC_PER_TURN,
}


def _param_for(tone: int, kind: str) -> Param:
    return Param(tone * 4 + _PARAM_KIND[kind])


@dataclass
class _Statement:
    """One parsed knot for a (channel, tone, kind) parameter."""

    duration: int
    words: list[SplineWord]
    streamed: bool


@dataclass
class _GateDraft:
    name: str
    line: int
    duration: int | None = None
    statements: dict[tuple[int, Param], list[_Statement]] = field(
        default_factory=dict
    )
    stream_flags: dict[tuple[int, Param], bool] = field(default_factory=dict)
    has_frame_rotation: bool = False
    tone_freq_words: dict[tuple[int, int], int] = field(default_factory=dict)


@dataclass(frozen=True)
class PairSpec:
    """Declared Raman transition: two (channel, tone) endpoints."""

    name: str
    a: tuple[int, int]
    b: tuple[int, int]


@dataclass
class Program:
    """Everything a program file declares, in compiled-ready form."""

    gates: list[GateDefinition]
    sequence: list[str]
    qubit_freq_hz: float = 12.642812118466e9
    comb_harmonic: int = DEFAULT_HARMONIC
    rep_rate_hz: float = DEFAULT_REP_RATE_HZ
    monitor_harmonic: int = MONITOR_HARMONIC_DEFAULT
    rabi_cal_rad_s: float = DEFAULT_RABI_CAL_RAD_S
    counter_pin: int | None = None
    drift_hz: float = 0.0
    ff_scale: Fraction = Fraction(105, 32)
    ff_sign: int = -1
    ff_auto: bool = False
    pairs: list[PairSpec] = field(default_factory=list)
    xtalk: XtalkConfig = field(default_factory=XtalkConfig)

    @property
    def comb_reference(self) -> CombReference:
        return CombReference(
            harmonic=self.comb_harmonic,
            rep_rate_hz=self.rep_rate_hz,
            qubit_freq_hz=self.qubit_freq_hz,
            rabi_cal_rad_s=self.rabi_cal_rad_s,
        )

    def gate(self, name: str) -> GateDefinition:
        for g in self.gates:
            if g.name == name:
                return g
        raise KeyError(name)


def _num(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ProgramError(f"expected a number, got {tok!r}", line)


def _int(tok: str, line: int) -> int:
    try:
        return int(tok, 0)
    except ValueError:
        raise ProgramError(f"expected an integer, got {tok!r}", line)


def _tone_ref(tok: str, line: int) -> tuple[int, int]:
    if ":" not in tok:
        raise ProgramError(
            f"expected channel:tone reference, got {tok!r}", line
        )
    ch, _, tone = tok.partition(":")
    c, t = _int(ch, line), _int(tone, line)
    if not 0 <= c < 8:
        raise ProgramError(f"channel {c} out of range 0..7", line)
    if t not in (0, 1):
        raise ProgramError(f"tone {t} out of range 0..1", line)
    return c, t


def _fraction(tok: str, line: int) -> Fraction:
    try:
        if "/" in tok:
            p, _, q = tok.partition("/")
            return Fraction(int(p), int(q))
        return Fraction(tok)
    except (ValueError, ZeroDivisionError):
        raise ProgramError(f"expected a ratio like 105/32, got {tok!r}", line)


def _take_flags(toks: list[str], allowed: set[str]) -> set[str]:
    # trailing flag tokens; anything left over trips the form's usage check
    flags = set()
    while toks and toks[-1] in allowed:
        flags.add(toks.pop())
    return flags


class _Parser:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.program = Program(gates=[], sequence=[])
        self.drafts: list[_GateDraft] = []
        self.gate: _GateDraft | None = None
        self.channel: int | None = None
        self.in_sequence = False
        self.seen_sequence = False

    def parse(self) -> Program:
        for no, rawline in enumerate(self.lines, start=1):
            line = rawline.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            try:
                self.dispatch(toks, no)
            except ProgramError:
                raise
            except (ValueError, OutOfBandError) as exc:
                raise ProgramError(str(exc), no)
        if self.gate is not None:
            raise ProgramError(
                f"gate {self.gate.name!r} never closed", self.gate.line
            )
        if self.in_sequence:
            raise ProgramError("sequence block never closed")
        self.finalize()
        return self.program

    # ---------------- statement dispatch

    def dispatch(self, toks: list[str], no: int):
        if self.in_sequence:
            self.sequence_line(toks, no)
        elif self.channel is not None:
            self.channel_line(toks, no)
        elif self.gate is not None:
            self.gate_line(toks, no)
        else:
            self.top_line(toks, no)

    def top_line(self, toks: list[str], no: int):
        key = toks[0]
        if key == "gate":
            if len(toks) != 3 or toks[2] != "{":
                raise ProgramError("usage: gate <name> {", no)
            if any(d.name == toks[1] for d in self.drafts):
                raise ProgramError(f"duplicate gate {toks[1]!r}", no)
            self.gate = _GateDraft(name=toks[1], line=no)
            return
        if key == "sequence":
            if len(toks) != 2 or toks[1] != "{":
                raise ProgramError("usage: sequence {", no)
            if self.seen_sequence:
                raise ProgramError("only one sequence block allowed", no)
            self.in_sequence = True
            self.seen_sequence = True
            return
        handler = getattr(self, f"stmt_{key}", None)
        if handler is None:
            raise ProgramError(f"unknown statement {key!r}", no)
        handler(toks[1:], no)

    def stmt_clock(self, args: list[str], no: int):
        if len(args) != 1:
            raise ProgramError("usage: clock <hz>", no)
        hz = _num(args[0], no)
        if hz != ENGINE_CLOCK_HZ:
            raise ProgramError(
                f"unsupported clock {hz}; engines run at {ENGINE_CLOCK_HZ} Hz",
                no,
            )

    def stmt_qubit(self, args: list[str], no: int):
        if len(args) != 2 or args[0] not in ("freq", "field"):
            raise ProgramError("usage: qubit freq <hz> | qubit field <gauss>", no)
        v = _num(args[1], no)
        if args[0] == "freq":
            self.program.qubit_freq_hz = v
        else:
            self.program.qubit_freq_hz = qubit_frequency(v)

    def stmt_comb(self, args: list[str], no: int):
        if len(args) != 4 or args[0] != "harmonic" or args[2] != "rep":
            raise ProgramError("usage: comb harmonic <n> rep <hz>", no)
        self.program.comb_harmonic = _int(args[1], no)
        self.program.rep_rate_hz = _num(args[3], no)

    def stmt_monitor(self, args: list[str], no: int):
        if len(args) != 2 or args[0] != "harmonic":
            raise ProgramError("usage: monitor harmonic <n>", no)
        self.program.monitor_harmonic = _int(args[1], no)

    def stmt_rabi(self, args: list[str], no: int):
        if len(args) != 1:
            raise ProgramError("usage: rabi <full-scale-hz>", no)
        self.program.rabi_cal_rad_s = 2 * math.pi * _num(args[0], no)

    def stmt_counter(self, args: list[str], no: int):
        if args == ["random"]:
            self.program.counter_pin = None
            return
        if len(args) == 2 and args[0] == "pin":
            v = _int(args[1], no)
            if not 0 <= v < WORD_MODULUS:
                raise ProgramError("counter pin must fit in 40 bits", no)
            self.program.counter_pin = v
            return
        raise ProgramError("usage: counter random | counter pin <value>", no)

    def stmt_drift(self, args: list[str], no: int):
        if len(args) != 1:
            raise ProgramError("usage: drift <rep-rate-hz>", no)
        self.program.drift_hz = _num(args[0], no)

    def stmt_feedforward(self, args: list[str], no: int):
        if args == ["auto"]:
            self.program.ff_auto = True
            return
        if len(args) == 2 and args[0] == "scale":
            self.program.ff_scale = _fraction(args[1], no)
            return
        if len(args) == 2 and args[0] == "sign":
            if args[1] not in ("+", "-"):
                raise ProgramError("feedforward sign must be + or -", no)
            self.program.ff_sign = 1 if args[1] == "+" else -1
            return
        raise ProgramError(
            "usage: feedforward auto | scale <p/q> | sign <+|->", no
        )

    def stmt_pair(self, args: list[str], no: int):
        if len(args) != 3:
            raise ProgramError("usage: pair <name> <ch:tone> <ch:tone>", no)
        a = _tone_ref(args[1], no)
        b = _tone_ref(args[2], no)
        if a == b:
            raise ProgramError("pair endpoints must differ", no)
        self.program.pairs.append(PairSpec(args[0], a, b))

    def stmt_xtalk(self, args: list[str], no: int):
        if (
            len(args) != 9
            or args[0] != "tap"
            or args[3] != "amp"
            or args[5] != "phase"
            or args[7] != "delay"
        ):
            raise ProgramError(
                "usage: xtalk tap <src> <dst> amp <frac> phase <turns> "
                "delay <cycles>",
                no,
            )
        tap = XtalkTap(
            source=_int(args[1], no),
            target=_int(args[2], no),
            amplitude=_num(args[4], no),
            phase_turns=_num(args[6], no),
            delay_cycles=_int(args[8], no),
        )
        self.program.xtalk = XtalkConfig(
            taps=self.program.xtalk.taps + (tap,)
        )

    # ---------------- gate blocks

    def gate_line(self, toks: list[str], no: int):
        if toks == ["}"]:
            self.close_gate(no)
            return
        if toks[0] == "duration":
            if len(toks) != 2:
                raise ProgramError("usage: duration <cycles>", no)
            d = _int(toks[1], no)
            if d < 1:
                raise ProgramError("gate duration must be >= 1 cycle", no)
            self.gate.duration = d
            return
        if toks[0] == "channel":
            if len(toks) != 3 or toks[2] != "{":
                raise ProgramError("usage: channel <n> {", no)
            ch = _int(toks[1], no)
            if not 0 <= ch < 8:
                raise ProgramError(f"channel {ch} out of range 0..7", no)
            self.channel = ch
            return
        raise ProgramError(f"unknown gate statement {toks[0]!r}", no)

    def channel_line(self, toks: list[str], no: int):
        if toks == ["}"]:
            self.channel = None
            return
        if toks[0] != "tone" or len(toks) < 3:
            raise ProgramError(
                "usage: tone <0|1> <freq|phase|amp|frame> ...", no
            )
        tone = _int(toks[1], no)
        if tone not in (0, 1):
            raise ProgramError(f"tone {tone} out of range 0..1", no)
        kind = toks[2]
        if kind not in _PARAM_KIND:
            raise ProgramError(f"unknown parameter {kind!r}", no)
        self.param_statement(tone, kind, toks[3:], no)

    def param_statement(self, tone: int, kind: str, toks: list[str], no: int):
        gate = self.gate
        if gate.duration is None:
            raise ProgramError(
                "declare the gate duration before its parameters", no
            )
        ch = self.channel
        param = _param_for(tone, kind)
        flags = _take_flags(toks, {"sync", "feedforward", "stream"} | _FRAME_FLAGS)
        if ("sync" in flags or "feedforward" in flags) and kind != "freq":
            raise ProgramError(
                "sync/feedforward flags belong on freq statements", no
            )
        if flags & _FRAME_FLAGS and kind != "frame":
            raise ProgramError(
                "apply/invert masks belong on frame statements", no
            )
        if not toks:
            raise ProgramError("missing parameter form", no)
        form = toks[0]
        if form == "const":
            stmts = self.form_const(gate, ch, tone, kind, param, toks, flags, no)
        elif form == "spline":
            stmts = self.form_spline(ch, tone, kind, param, toks, flags, no)
        elif form == "rotate" and kind == "frame":
            stmts = self.form_rotate(gate, ch, param, toks, flags, no)
        else:
            raise ProgramError(f"unknown form {form!r} for {kind}", no)
        key = (ch, param)
        gate.statements.setdefault(key, []).extend(stmts)
        if "stream" in flags:
            gate.stream_flags[key] = True

    def form_const(self, gate, ch, tone, kind, param, toks, flags, no):
        if len(toks) != 2:
            raise ProgramError(f"usage: tone N {kind} const <value>", no)
        value = _num(toks[1], no)
        u0 = _scale_constant(kind, value, no)
        word = SplineWord(
            u0=u0,
            duration=gate.duration,
            channel=ch,
            param=param,
            sync="sync" in flags,
            feedforward="feedforward" in flags,
        )
        if kind == "freq":
            gate.tone_freq_words.setdefault((ch, tone), freq_to_word(value))
        return [_Statement(gate.duration, [word], "stream" in flags)]

    def form_spline(self, ch, tone, kind, param, toks, flags, no):
        if len(toks) != 6:
            raise ProgramError(
                f"usage: tone N {kind} spline <cycles> <c0> <c1> <c2> <c3>",
                no,
            )
        dur = _int(toks[1], no)
        if dur < 1:
            raise ProgramError("knot duration must be >= 1 cycle", no)
        scale = _PARAM_SCALE[kind]
        coeffs = [Fraction(_num(t, no)) * scale for t in toks[2:6]]
        knot = poly_to_knot(*coeffs)
        word = SplineWord(
            u0=knot[0],
            u1=knot[1],
            u2=knot[2],
            u3=knot[3],
            duration=dur,
            channel=ch,
            param=param,
            sync="sync" in flags,
            feedforward="feedforward" in flags,
            frame_apply=_mask(flags, "apply"),
            frame_invert=_mask(flags, "invert"),
        )
        if kind == "freq":
            self.gate.tone_freq_words.setdefault(
                (ch, tone), freq_to_word(_num(toks[2], no))
            )
        return [_Statement(dur, [word], "stream" in flags)]

    def form_rotate(self, gate, ch, param, toks, flags, no):
        if len(toks) != 2:
            raise ProgramError("usage: tone N frame rotate <turns>", no)
        gate.has_frame_rotation = True
        if gate.duration < MIN_FRAME_ROTATION_CYCLES:
            raise ProgramError(
                f"frame rotation needs >= {MIN_FRAME_ROTATION_CYCLES} cycles "
                f"({MIN_FRAME_ROTATION_CYCLES / ENGINE_CLOCK_HZ * 1e9:.6f} ns); "
                f"gate {gate.name!r} lasts {gate.duration}",
                no,
            )
        turns = _num(toks[1], no)
        total = phase_turns_to_word(turns)
        apply = _mask(flags, "apply")
        invert = _mask(flags, "invert")
        if apply == (False, False):
            # default: rotate the tone whose engine carries the knots
            apply = (param.tone == 0, param.tone == 1)
        d = gate.duration
        q, r = divmod(total, d)
        words = []
        if d - r:
            words.append(
                SplineWord(
                    u0=q,
                    duration=d - r,
                    channel=ch,
                    param=param,
                    frame_apply=apply,
                    frame_invert=invert,
                )
            )
        if r:
            words.append(
                SplineWord(
                    u0=q + 1,
                    duration=r,
                    channel=ch,
                    param=param,
                    frame_apply=apply,
                    frame_invert=invert,
                )
            )
        return [_Statement(d, words, "stream" in flags)]

    def close_gate(self, no: int):
        gate = self.gate
        self.gate = None
        if gate.duration is None:
            raise ProgramError(f"gate {gate.name!r} has no duration", no)
        for (ch, param), stmts in gate.statements.items():
            covered = sum(s.duration for s in stmts)
            if covered != gate.duration:
                raise ProgramError(
                    f"gate {gate.name!r} channel {ch} {param.name}: knots "
                    f"cover {covered} of {gate.duration} cycles",
                    no,
                )
        self.drafts.append(gate)

    # ---------------- sequence block

    def sequence_line(self, toks: list[str], no: int):
        if toks == ["}"]:
            self.in_sequence = False
            return
        if len(toks) != 1:
            raise ProgramError("one gate name or 'trigger' per line", no)
        name = toks[0]
        self.program.sequence.append(TRIGGER if name == "trigger" else name)

    # ---------------- assembly

    def finalize(self):
        channels = sorted(
            {ch for d in self.drafts for (ch, _p) in d.statements}
        )
        for draft in self.drafts:
            if self.program.ff_auto:
                self.auto_feedforward(draft)
            self.program.gates.append(_assemble(draft, channels))
        known = {g.name for g in self.program.gates}
        for item in self.program.sequence:
            if item != TRIGGER and item not in known:
                raise ProgramError(
                    f"sequence references undefined gate {item!r}"
                )

    def auto_feedforward(self, draft: _GateDraft):
        transitions = []
        for pair in self.program.pairs:
            wa = draft.tone_freq_words.get(pair.a)
            wb = draft.tone_freq_words.get(pair.b)
            if wa is None or wb is None:
                continue
            transitions.append(
                RamanTransition(
                    pair.name,
                    (ToneRef(*pair.a, wa), ToneRef(*pair.b, wb)),
                )
            )
        if not transitions:
            return
        try:
            routed = route_feedforward(transitions)
        except RoutingError as exc:
            raise ProgramError(f"gate {draft.name!r}: {exc}")
        for ch, tone in routed:
            key = (ch, _param_for(tone, "freq"))
            stmts = draft.statements.get(key)
            if not stmts:
                continue
            for stmt in stmts:
                stmt.words = [
                    SplineWord(**{**w.__dict__, "feedforward": True})
                    for w in stmt.words
                ]


_FRAME_FLAGS = {"apply0", "apply1", "invert0", "invert1"}


def _mask(flags: set[str], kind: str) -> tuple[bool, bool]:
    return (f"{kind}0" in flags, f"{kind}1" in flags)


def _scale_constant(kind: str, value: float, no: int) -> int:
    if kind == "freq":
        return freq_to_word(value)
    if kind in ("phase", "frame"):
        return phase_turns_to_word(value)
    return (amp_to_code(value) << 24) % WORD_MODULUS


def _assemble(draft: _GateDraft, channels: list[int]) -> GateDefinition:
    resident: list[SplineWord] = []
    streamed: list[SplineWord] = []
    for ch in channels:
        for param in Param:
            key = (ch, param)
            stmts = draft.statements.get(key)
            if stmts is None:
                resident.append(
                    SplineWord(duration=draft.duration, channel=ch, param=param)
                )
                continue
            bucket = streamed if draft.stream_flags.get(key) else resident
            for stmt in stmts:
                bucket.extend(stmt.words)
    return GateDefinition(
        name=draft.name, words=tuple(resident), streamed=tuple(streamed)
    )


def parse_program(text: str) -> Program:
    """Parse program text; raises :class:`ProgramError` with line info."""
    return _Parser(text).parse()


def load_program(path) -> Program:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_program(fh.read())
