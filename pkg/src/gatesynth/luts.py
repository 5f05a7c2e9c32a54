"""Gate compiler: LUT hierarchy, sequence packing, streaming models.

Gate programs replay heavily repeated pulse data, so the hardware keeps a
three-level lookup hierarchy per channel instead of streaming raw words:

* PLUT: up to 2**10 unique 256-bit knot words
* MLUT: up to 2**12 PLUT addresses; each gate owns a contiguous range
* GLUT: up to 2**6 gates, each a packed (start, stop) MLUT bound pair

A sequence is then just 6-bit gate IDs, 36 to a 256-bit word. This module
compiles gate definitions into the LUTs, emits the programming word
stream, packs sequences, and expands a stream back into per-engine knot
streams exactly the way the hardware decoder would. A separate
direct-streaming emitter produces the no-LUT word stream; expansion must
reproduce it word for word, which the test suite treats as the central
equivalence theorem.

The link model: words arrive over a 32-bit 300 MHz link, 8 clocks per
256-bit word, so sustained delivery is 37.5 MHz regardless of channel
(idle link slots carry NOP words). An 8-word gate therefore costs about
213 ns to stream, the motivating number for LUT compression.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from gatesynth.spline import (
    FIFO_DEPTH,
    AMP_FRAC_BITS,
    Param,
    SplineEngine,
    SplineWord,
    WordKind,
    barrier_word,
)
from gatesynth.words import ENGINE_CLOCK_HZ, WORD_MASK

PLUT_CAPACITY = 1 << 10
MLUT_CAPACITY = 1 << 12
GLUT_CAPACITY = 1 << 6
GATE_IDS_PER_WORD = 36
MLUT_ADDRS_PER_WORD = 18
GLUT_ENTRIES_PER_WORD = 6
N_CHANNELS = 8

LINK_WORD_RATE_HZ = 300e6 / 8  # 256-bit words on a 32-bit 300 MHz link

# exact engine cycles per delivered link word: 409.6 MHz / 37.5 MHz
_CYCLES_PER_LINK_WORD = Fraction(4096, 375)

TRIGGER = "trigger"  # sequence marker: wait for the external trigger here


class LutCapacityError(ValueError):
    """A lookup table overflowed; names the table and suggests fallbacks."""


class GateValidationError(ValueError):
    pass


@dataclass(frozen=True)
class GateDefinition:
    """One gate: LUT-resident knot words plus optionally streamed words.

    Words must cover all eight parameter engines of every channel the
    gate touches, with equal total duration per engine (the engines run
    in lockstep; a missing or short parameter would skew every later
    gate). Streamed words take part in the same accounting but are sent
    inline after the gate's ID instead of living in the LUTs.
    """

    name: str
    words: tuple[SplineWord, ...]
    streamed: tuple[SplineWord, ...] = ()

    def __post_init__(self):
        if not self.words and not self.streamed:
            raise GateValidationError(f"gate {self.name!r} has no words")
        durations: dict[tuple[int, Param], int] = {}
        for w in (*self.words, *self.streamed):
            if w.kind != WordKind.DATA:
                raise GateValidationError(
                    f"gate {self.name!r}: only data words allowed"
                )
            if w.wait_for_trigger:
                raise GateValidationError(
                    f"gate {self.name!r}: wait_for_trigger belongs to "
                    "sequence barriers, not gate words"
                )
            key = (w.channel, w.param)
            durations[key] = durations.get(key, 0) + w.duration
        channels = {ch for ch, _ in durations}
        want = {(ch, p) for ch in channels for p in Param}
        missing = want - set(durations)
        if missing:
            ch, p = sorted(missing)[0]
            raise GateValidationError(
                f"gate {self.name!r}: channel {ch} has no words for "
                f"{p.name.lower()} (all 8 parameter engines need data)"
            )
        if len(set(durations.values())) > 1:
            raise GateValidationError(
                f"gate {self.name!r}: parameter durations differ "
                f"({dict((f'{c}/{p.name.lower()}', d) for (c, p), d in sorted(durations.items()))}); "
                "engines must stay in lockstep"
            )

    @property
    def duration(self) -> int:
        w = (*self.words, *self.streamed)[0]
        total = 0
        for x in (*self.words, *self.streamed):
            if (x.channel, x.param) == (w.channel, w.param):
                total += x.duration
        return total

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(
            sorted({w.channel for w in (*self.words, *self.streamed)})
        )

    def resident_for_channel(self, ch: int) -> list[SplineWord]:
        # stable (param, arrival) order keeps knot order per engine and
        # makes each gate's MLUT block contiguous
        return sorted(
            (w for w in self.words if w.channel == ch),
            key=lambda w: int(w.param),
        )

    def streamed_in_deadline_order(self) -> list[SplineWord]:
        """Streamed words sorted by in-gate start cycle, then channel."""
        start: dict[tuple[int, Param], int] = {}
        keyed = []
        for w in self.streamed:
            k = (w.channel, w.param)
            keyed.append((start.get(k, 0), w.channel, int(w.param), w))
            start[k] = start.get(k, 0) + w.duration
        return [w for *_, w in sorted(keyed, key=lambda t: t[:3])]


def square_gate(
    name: str,
    channel: int,
    duration: int,
    freq_word: int = 0,
    phase_word: int = 0,
    amp_code: int = 0,
    tone: int = 0,
    sync: bool = False,
    feedforward: bool = False,
) -> GateDefinition:
    """Constant-parameter single-tone gate: one word per parameter engine."""
    base = 4 * tone
    other = 4 - base
    amp_u0 = (amp_code << AMP_FRAC_BITS) & WORD_MASK

    def word(param, u0, **flags):
        return SplineWord(
            u0=u0, duration=duration, channel=channel, param=param, **flags
        )

    return GateDefinition(
        name=name,
        words=(
            word(Param(base + 0), freq_word, sync=sync,
                 feedforward=feedforward),
            word(Param(base + 1), phase_word),
            word(Param(base + 2), amp_u0),
            word(Param(base + 3), 0),
            word(Param(other + 0), 0),
            word(Param(other + 1), 0),
            word(Param(other + 2), 0),
            word(Param(other + 3), 0),
        ),
    )


@dataclass
class CompiledLibrary:
    gates: dict[str, GateDefinition]
    gate_ids: dict[str, int]
    plut: dict[int, list[SplineWord]]
    mlut: dict[int, list[int]]
    glut: dict[int, dict[int, tuple[int, int]]]

    @property
    def channels(self) -> list[int]:
        return sorted(self.plut)

    def occupancy(self) -> dict[str, dict[int, int]]:
        return {
            "plut": {ch: len(v) for ch, v in self.plut.items()},
            "mlut": {ch: len(v) for ch, v in self.mlut.items()},
            "glut": {ch: len(v) for ch, v in self.glut.items()},
        }


def compile_library(gates: list[GateDefinition]) -> CompiledLibrary:
    """Build the LUT hierarchy, deduplicating identical words per channel.

    Raises :class:`LutCapacityError` naming the exhausted table; the
    fallbacks are streaming the offending parameters directly (mark them
    streamed in the gate definition) or reprogramming between sequence
    segments (:func:`encode_with_reprogramming`).
    """
    if len(gates) > GLUT_CAPACITY:
        raise LutCapacityError(
            f"GLUT capacity {GLUT_CAPACITY} exceeded: {len(gates)} gates; "
            "stream some gates directly or reprogram between segments"
        )
    plut: dict[int, list[SplineWord]] = {}
    index: dict[int, dict[bytes, int]] = {}
    mlut: dict[int, list[int]] = {}
    blocks: dict[int, dict[tuple[int, ...], tuple[int, int]]] = {}
    glut: dict[int, dict[int, tuple[int, int]]] = {}
    ids: dict[str, int] = {}
    by_name: dict[str, GateDefinition] = {}
    channel_sets = {g.channels for g in gates}
    if len(channel_sets) > 1:
        raise GateValidationError(
            f"gates cover different channel sets {sorted(channel_sets)}; "
            "pad non-participating channels with idle words so all "
            "engines stay in lockstep"
        )
    for gate in gates:
        if gate.name in by_name:
            raise GateValidationError(f"duplicate gate name {gate.name!r}")
        gid = len(ids)
        ids[gate.name] = gid
        by_name[gate.name] = gate
        for ch in gate.channels:
            cp = plut.setdefault(ch, [])
            ci = index.setdefault(ch, {})
            cm = mlut.setdefault(ch, [])
            cb = blocks.setdefault(ch, {})
            cg = glut.setdefault(ch, {})
            resident = gate.resident_for_channel(ch)
            if not resident:
                continue
            addrs = []
            for w in resident:
                key = w.as_data().encode()
                addr = ci.get(key)
                if addr is None:
                    addr = len(cp)
                    if addr >= PLUT_CAPACITY:
                        raise LutCapacityError(
                            f"PLUT capacity {PLUT_CAPACITY} exceeded on "
                            f"channel {ch}; stream parameters directly or "
                            "reprogram between segments"
                        )
                    cp.append(w.as_data())
                    ci[key] = addr
                addrs.append(addr)
            block = cb.get(tuple(addrs))
            if block is None:
                start = len(cm)
                cm.extend(addrs)
                if len(cm) > MLUT_CAPACITY:
                    raise LutCapacityError(
                        f"MLUT capacity {MLUT_CAPACITY} exceeded on channel "
                        f"{ch}; stream parameters directly or reprogram "
                        "between segments"
                    )
                block = (start, len(cm) - 1)
                cb[tuple(addrs)] = block
            cg[gid] = block
    return CompiledLibrary(
        gates=by_name, gate_ids=ids, plut=plut, mlut=mlut, glut=glut
    )


def _mlut_record(channel: int, start: int, addrs: list[int]) -> bytes:
    v = start | len(addrs) << 12
    for i, a in enumerate(addrs):
        v |= (a & 0x3FF) << (17 + 10 * i)
    v |= channel << 200
    v |= int(WordKind.MLUT_PROGRAM) << 253
    return v.to_bytes(32, "little")


def _glut_record(
    channel: int, entries: list[tuple[int, int, int]]
) -> bytes:
    v = len(entries)
    for i, (gid, start, stop) in enumerate(entries):
        packed = gid | start << 6 | stop << 18
        v |= packed << (3 + 30 * i)
    v |= channel << 200
    v |= int(WordKind.GLUT_PROGRAM) << 253
    return v.to_bytes(32, "little")


def gate_id_record(ids: list[int]) -> bytes:
    if not 1 <= len(ids) <= GATE_IDS_PER_WORD:
        raise ValueError(f"{len(ids)} ids in one word")
    v = len(ids)
    for i, gid in enumerate(ids):
        if not 0 <= gid < GLUT_CAPACITY:
            raise ValueError(f"gate id {gid} out of range")
        v |= gid << (6 + 6 * i)
    v |= int(WordKind.GATE_SEQUENCE) << 253
    return v.to_bytes(32, "little")


def record_kind(raw: bytes) -> WordKind:
    return WordKind(raw[31] >> 5)


def programming_words(lib: CompiledLibrary) -> list[bytes]:
    """Word stream that configures the LUTs of every channel."""
    out: list[bytes] = []
    for ch in lib.channels:
        for addr, w in enumerate(lib.plut[ch]):
            out.append(w.as_plut_program(addr).encode())
        addrs = lib.mlut[ch]
        for i in range(0, len(addrs), MLUT_ADDRS_PER_WORD):
            chunk = addrs[i : i + MLUT_ADDRS_PER_WORD]
            out.append(_mlut_record(ch, i, chunk))
        entries = [
            (gid, b[0], b[1]) for gid, b in sorted(lib.glut[ch].items())
        ]
        for i in range(0, len(entries), GLUT_ENTRIES_PER_WORD):
            out.append(_glut_record(ch, entries[i : i + GLUT_ENTRIES_PER_WORD]))
    return out


def encode_sequence(lib: CompiledLibrary, sequence: list[str]) -> list[bytes]:
    """Pack a gate-name sequence into ID words, barriers and streamed data.

    ``TRIGGER`` entries become broadcast barrier words; all engines halt
    there until the next external trigger. A gate with streamed words
    closes its ID word so the inline data lands in the per-engine FIFOs
    in exactly the position the pure-streaming emitter would put it.
    """
    out: list[bytes] = []
    pending: list[int] = []

    def flush():
        while pending:
            chunk = pending[:GATE_IDS_PER_WORD]
            del pending[:GATE_IDS_PER_WORD]
            out.append(gate_id_record(chunk))

    for item in sequence:
        if item == TRIGGER:
            flush()
            for ch in lib.channels:
                out.append(barrier_word(ch, Param.FREQ0).encode())
            continue
        gate = lib.gates.get(item)
        if gate is None:
            raise GateValidationError(f"sequence references unknown gate {item!r}")
        if gate.words:
            pending.append(lib.gate_ids[item])
        if gate.streamed:
            # fully streamed gates never touch the LUTs, so no ID word
            flush()
            for w in gate.streamed_in_deadline_order():
                out.append(w.as_data().encode())
    flush()
    return out


EngineKey = tuple[int, Param]


class StreamExpander:
    """Hardware-side decoder: routes a word stream to per-engine streams.

    Processes programming words (so mid-stream reprogramming works),
    resolves gate IDs through GLUT -> MLUT -> PLUT, broadcasts barrier
    words to every engine of their channel, and drops plain NOP padding.
    """

    def __init__(self):
        self.plut: dict[int, dict[int, SplineWord]] = {}
        self.mlut: dict[int, dict[int, int]] = {}
        self.glut: dict[int, dict[int, tuple[int, int]]] = {}
        self.engines: dict[EngineKey, list[SplineWord]] = {}
        self.trace: list[SplineWord] = []  # all routed words, in route order

    def _route(self, w: SplineWord):
        self.engines.setdefault((w.channel, w.param), []).append(w)
        self.trace.append(w)

    def _route_barrier(self, channel: int):
        for p in Param:
            self._route(barrier_word(channel, p))

    def feed(self, raw: bytes):
        kind = record_kind(raw)
        if kind in (WordKind.DATA, WordKind.PLUT_PROGRAM):
            w = SplineWord.decode(raw)
            if kind == WordKind.PLUT_PROGRAM:
                self.plut.setdefault(w.channel, {})[w.prog_addr] = w.as_data()
            elif w.nop and w.wait_for_trigger:
                self._route_barrier(w.channel)
            elif w.nop:
                pass  # link padding
            else:
                self._route(w)
            return
        v = int.from_bytes(raw, "little")
        if kind == WordKind.MLUT_PROGRAM:
            ch = (v >> 200) & 7
            start = v & 0xFFF
            count = (v >> 12) & 0x1F
            table = self.mlut.setdefault(ch, {})
            for i in range(count):
                table[start + i] = (v >> (17 + 10 * i)) & 0x3FF
        elif kind == WordKind.GLUT_PROGRAM:
            ch = (v >> 200) & 7
            count = v & 7
            table = self.glut.setdefault(ch, {})
            for i in range(count):
                packed = (v >> (3 + 30 * i)) & ((1 << 30) - 1)
                gid = packed & 0x3F
                table[gid] = ((packed >> 6) & 0xFFF, (packed >> 18) & 0xFFF)
        elif kind == WordKind.GATE_SEQUENCE:
            count = v & 0x3F
            for i in range(count):
                gid = (v >> (6 + 6 * i)) & 0x3F
                self._expand_gate(gid)
        else:
            raise ValueError(f"unhandled word kind {kind}")

    def _expand_gate(self, gid: int):
        hit = False
        for ch, bounds in self.glut.items():
            if gid not in bounds:
                continue
            hit = True
            start, stop = bounds[gid]
            for a in range(start, stop + 1):
                addr = self.mlut[ch].get(a)
                if addr is None:
                    raise KeyError(f"MLUT address {a} unprogrammed on channel {ch}")
                word = self.plut[ch].get(addr)
                if word is None:
                    raise KeyError(f"PLUT address {addr} unprogrammed on channel {ch}")
                self._route(word)
        if not hit:
            raise KeyError(f"gate id {gid} not bound in any GLUT")


def expand(stream: list[bytes]) -> dict[EngineKey, list[SplineWord]]:
    """Decode a full word stream into per-engine knot streams."""
    x = StreamExpander()
    for raw in stream:
        x.feed(raw)
    return x.engines


def direct_stream(
    gates: dict[str, GateDefinition], sequence: list[str]
) -> dict[EngineKey, list[SplineWord]]:
    """Ground-truth emitter: per-engine streams with no LUTs involved."""
    out: dict[EngineKey, list[SplineWord]] = {}
    channels = sorted({ch for g in gates.values() for ch in g.channels})
    for item in sequence:
        if item == TRIGGER:
            for ch in channels:
                for p in Param:
                    out.setdefault((ch, p), []).append(barrier_word(ch, p))
            continue
        gate = gates[item]
        for ch in gate.channels:
            for w in gate.resident_for_channel(ch):
                out.setdefault((ch, w.param), []).append(w.as_data())
        for w in gate.streamed_in_deadline_order():
            out.setdefault((w.channel, w.param), []).append(w.as_data())
    return out


@dataclass(frozen=True)
class CompileReport:
    words_programming: int
    words_sequence: int
    words_streaming_equivalent: int
    compression_ratio: float  # sequence words / streaming-equivalent words
    compression_ratio_with_programming: float
    occupancy: dict

    def render(self) -> str:
        lines = [
            f"programming words:        {self.words_programming}",
            f"sequence words:           {self.words_sequence}",
            f"streaming equivalent:     {self.words_streaming_equivalent}",
            f"compression ratio:        {self.compression_ratio:.3%}",
            "compression w/ programming: "
            f"{self.compression_ratio_with_programming:.3%}",
        ]
        for table, per_ch in self.occupancy.items():
            occ = ", ".join(f"ch{c}={n}" for c, n in sorted(per_ch.items()))
            lines.append(f"{table} occupancy:           {occ}")
        return "\n".join(lines)


def compression_report(
    lib: CompiledLibrary, sequence: list[str]
) -> CompileReport:
    """Sequence cost vs what pure streaming would move, both ways.

    The headline ratio neglects programming overhead (LUT setup amortizes
    over arbitrarily many sequences); the second ratio includes it.
    """
    prog = len(programming_words(lib))
    seq = len(encode_sequence(lib, sequence))
    streaming = 0
    for item in sequence:
        if item == TRIGGER:
            streaming += len(lib.channels) * len(Param)
            continue
        g = lib.gates[item]
        streaming += len(g.words) + len(g.streamed)
    ratio = seq / streaming if streaming else 0.0
    ratio_with = (seq + prog) / streaming if streaming else 0.0
    return CompileReport(
        words_programming=prog,
        words_sequence=seq,
        words_streaming_equivalent=streaming,
        compression_ratio=ratio,
        compression_ratio_with_programming=ratio_with,
        occupancy=lib.occupancy(),
    )


def streaming_time_ns(word_count: int) -> float:
    """Link time to move word_count 256-bit words, in nanoseconds."""
    return word_count / LINK_WORD_RATE_HZ * 1e9


@dataclass(frozen=True)
class GateStreamTiming:
    name: str
    words: int
    stream_ns: float
    play_ns: float
    underflow_risk: bool  # streaming slower than playback consumes


def streaming_report(
    gates: dict[str, GateDefinition], sequence: list[str]
) -> list[GateStreamTiming]:
    """Per-gate link timing if everything were streamed (no LUTs)."""
    out = []
    for item in sequence:
        if item == TRIGGER:
            continue
        g = gates[item]
        n = len(g.words) + len(g.streamed)
        stream_ns = streaming_time_ns(n)
        play_ns = g.duration / ENGINE_CLOCK_HZ * 1e9
        out.append(
            GateStreamTiming(
                name=g.name,
                words=n,
                stream_ns=stream_ns,
                play_ns=play_ns,
                underflow_risk=stream_ns > play_ns,
            )
        )
    return out


@dataclass(frozen=True)
class StreamFault:
    cycle: int
    channel: int
    param: Param
    kind: str  # "underflow"

    def __str__(self):
        return (
            f"{self.kind} at cycle {self.cycle}: channel {self.channel} "
            f"{self.param.name.lower()} engine starved"
        )


@dataclass
class LinkReport:
    faults: list[StreamFault]
    trigger_cycle: int
    total_cycles: int
    fifo_high_water: dict[EngineKey, int]
    head_blocked_cycles: int

    @property
    def ok(self) -> bool:
        return not self.faults


def simulate_link(stream: list[bytes], max_cycles: int = 5_000_000) -> LinkReport:
    """Cycle model of word delivery vs engine consumption.

    Words arrive in stream order at the 37.5 MHz link rate; gate IDs
    expand through the shadow LUTs on arrival, back-pressured by engine
    FIFO space (head-of-line: nothing later is delivered while the head
    word waits for room). Engines consume one knot value per cycle. The
    trigger fires once every engine that will ever receive words holds
    its first word, mirroring preload-then-trigger practice; later
    barriers get a trigger as soon as every engine is blocked on one.

    An underflow fault is recorded when a running engine goes empty
    mid-sequence while words destined for it are still undelivered.
    """
    plan = StreamExpander()
    for raw in stream:
        plan.feed(raw)
    expected = {k: len(v) for k, v in plan.engines.items() if v}
    engines: dict[EngineKey, SplineEngine] = {
        k: SplineEngine(channel=k[0], param=k[1]) for k in expected
    }

    expander = StreamExpander()
    due = [
        int(-(-_CYCLES_PER_LINK_WORD * (i + 1) // 1))
        for i in range(len(stream))
    ]
    next_word = 0
    backlog: list[SplineWord] = []  # routed words awaiting FIFO space
    delivered: dict[EngineKey, int] = dict.fromkeys(expected, 0)
    faults: list[StreamFault] = []
    head_blocked = 0
    triggered = False
    trigger_cycle = -1

    def push_backlog() -> bool:
        """Push queued words in route order; False if head is blocked."""
        while backlog:
            w = backlog[0]
            eng = engines[(w.channel, w.param)]
            if not eng.push(w):
                return False
            delivered[(w.channel, w.param)] += 1
            backlog.pop(0)
        return True

    cycle = 0
    while cycle < max_cycles:
        if not push_backlog():
            head_blocked += 1
        while (
            not backlog
            and next_word < len(stream)
            and due[next_word] <= cycle
        ):
            before = len(expander.trace)
            expander.feed(stream[next_word])
            next_word += 1
            backlog.extend(expander.trace[before:])
            push_backlog()

        if not triggered and all(
            any(not w.nop for w in e.fifo)
            or e.remaining
            or delivered[k] == expected[k]
            for k, e in engines.items()
        ):
            # preload-then-trigger: barriers alone do not arm an engine,
            # its first real knot must have landed (or nothing will)
            triggered = True
            trigger_cycle = cycle
            for e in engines.values():
                e.trigger()
        elif triggered and engines and all(
            e.blocked for e in engines.values()
        ):
            # every engine sits at a mid-sequence barrier: fire the next
            # external trigger
            for e in engines.values():
                e.trigger()

        for key, eng in engines.items():
            starving_before = (
                triggered
                and eng.remaining == 0
                and not eng.fifo
                and not eng.blocked
                and delivered[key] < expected[key]
            )
            eng.step()
            if starving_before:
                faults.append(
                    StreamFault(cycle, key[0], key[1], "underflow")
                )

        done = (
            next_word == len(stream)
            and not backlog
            and all(
                eng.remaining == 0 and not eng.fifo
                for eng in engines.values()
            )
        )
        cycle += 1
        if done and triggered:
            break
        if done and not engines:
            break

    return LinkReport(
        faults=faults,
        trigger_cycle=trigger_cycle,
        total_cycles=cycle,
        fifo_high_water={k: e.high_water for k, e in engines.items()},
        head_blocked_cycles=head_blocked,
    )


def encode_with_reprogramming(
    gates: list[GateDefinition], sequence: list[str]
) -> list[bytes]:
    """Full stream for sequences whose gate set exceeds one GLUT load.

    Splits the sequence greedily into segments of at most 2**6 distinct
    gates and re-emits programming words at each boundary. For in-budget
    sequences this reduces to programming_words + encode_sequence.
    """
    by_name = {g.name: g for g in gates}
    segments: list[list[str]] = []
    current: list[str] = []
    names: set[str] = set()
    for item in sequence:
        if item != TRIGGER:
            if item not in by_name:
                raise GateValidationError(
                    f"sequence references unknown gate {item!r}"
                )
            if item not in names and len(names) == GLUT_CAPACITY:
                segments.append(current)
                current, names = [], set()
            names.add(item)
        current.append(item)
    segments.append(current)

    out: list[bytes] = []
    for seg in segments:
        used = []
        seen = set()
        for item in seg:
            if item != TRIGGER and item not in seen:
                seen.add(item)
                used.append(by_name[item])
        lib = compile_library(used)
        out.extend(programming_words(lib))
        out.extend(encode_sequence(lib, seg))
    return out
