"""Batch front end: compile, simulate, verify, and report.

Four subcommands share one flag set:

    gatesynth compile  --program p.prog --out build/
    gatesynth simulate --program p.prog --out build/ --seed 7
    gatesynth verify   --program p.prog
    gatesynth report   --program p.prog

Exit codes: 0 success, 1 validation failure (parse error, LUT overflow,
link underflow, failed verification), 2 I/O trouble. Every artifact is
a deterministic function of the program text plus the seed.

Artifacts land in ``--out`` (default: current directory), named after
the program stem:

* ``compile``  writes ``<stem>.words`` (raw 32-byte wire words, stream
  order) and ``<stem>.compile.txt`` (the compression report, also
  printed to stdout).
* ``simulate`` writes ``<stem>.trace.txt`` (run header, lint notes,
  trigger times, FIFO high-water marks, tone spans) plus the waveform
  dump: columnar text files ``<stem>.samples.txt`` / ``<stem>.phase.txt``
  (tick column, then one column per channel resp. per tone phase tap)
  or, with ``--dump-format binary``, the same tables as ``.npy`` arrays.
* ``verify`` and ``report`` print to stdout and only write a file when
  ``--out`` is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from gatesynth.luts import (
    GateValidationError,
    LutCapacityError,
    compile_library,
    compression_report,
    encode_sequence,
    programming_words,
    simulate_link,
    streaming_report,
)
from gatesynth.program import ProgramError, load_program
from gatesynth.simulate import (
    SimulationError,
    program_stream,
    simulate_program,
)
from gatesynth.verify import (
    lint_feedforward_routing,
    lint_ms_triplets,
    lint_sync_reuse,
    verify_program,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def _artifact_dir(args) -> Path:
    out = args.out if args.out is not None else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    return out


def _static_lints(prog) -> list[str]:
    findings = (
        lint_ms_triplets(prog)
        + lint_sync_reuse(prog)
        + lint_feedforward_routing(prog)
    )
    return [f"lint[{f.rule}]: {f}" for f in findings]


def cmd_compile(args) -> int:
    prog = load_program(args.program)
    lib = compile_library(prog.gates)
    stream = programming_words(lib) + encode_sequence(lib, prog.sequence)
    text = compression_report(lib, prog.sequence).render() + "\n"
    out = _artifact_dir(args)
    stem = args.program.stem
    (out / f"{stem}.words").write_bytes(b"".join(stream))
    (out / f"{stem}.compile.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def _write_columns(path: Path, names: list[str], table: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# tick " + " ".join(names) + "\n")
        for tick, row in enumerate(table):
            fh.write(f"{tick} " + " ".join(str(int(v)) for v in row) + "\n")


def _trace_text(args, prog, res, link) -> str:
    lines = [
        f"# trace {args.program.name}",
        f"seed: {args.seed}",
        f"counter start: {res.counter_start}",
        f"feedforward word: {res.feedforward_word}",
        f"cycles: {res.cycles}",
        "triggers: " + " ".join(str(c) for c in res.triggers),
        f"link trigger cycle: {link.trigger_cycle}",
        f"link total cycles: {link.total_cycles}",
        f"link head blocked cycles: {link.head_blocked_cycles}",
    ]
    lines += _static_lints(prog)
    lines.append("fifo high water (engine, link):")
    for ch, p in sorted(res.high_water, key=lambda k: (k[0], k[1].value)):
        eng = res.high_water[ch, p]
        wire = link.fifo_high_water.get((ch, p), 0)
        lines.append(f"  ch{ch} {p.name.lower()}: {eng} {wire}")
    lines.append("spans:")
    for (ch, tone), spans in sorted(res.spans.items()):
        for s in spans:
            lines.append(
                f"  ch{ch} tone{tone}: tick {s.start_tick} +{s.ticks} "
                f"freq {s.freq_word} phase {s.phase_word} amp {s.amp_code}"
            )
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    prog = load_program(args.program)
    if args.pin_counter is not None and not 0 <= args.pin_counter < 1 << 40:
        print("error: --pin-counter must fit in 40 bits", file=sys.stderr)
        return EXIT_VALIDATION
    link = simulate_link(program_stream(prog))
    if link.faults:
        # starvation repeats every cycle once it starts; cap the noise
        for fault in link.faults[:8]:
            print(f"error: {fault}", file=sys.stderr)
        if len(link.faults) > 8:
            print(
                f"error: ... {len(link.faults) - 8} more starved cycles",
                file=sys.stderr,
            )
        return EXIT_VALIDATION
    res = simulate_program(
        prog,
        seed=args.seed,
        counter_start=args.pin_counter,
        cycles=args.cycles,
    )
    out = _artifact_dir(args)
    stem = args.program.stem
    (out / f"{stem}.trace.txt").write_text(
        _trace_text(args, prog, res, link), encoding="utf-8"
    )
    channels = sorted(res.at_ion)
    if channels:
        samples = np.stack([res.at_ion[c] for c in channels], axis=1)
        taps = [(c, t) for c in channels for t in (0, 1)]
        phases = np.stack([res.traces[c][t].phase for c, t in taps], axis=1)
        if args.dump_format == "binary":
            np.save(out / f"{stem}.samples.npy", samples)
            np.save(out / f"{stem}.phase.npy", phases)
        else:
            _write_columns(
                out / f"{stem}.samples.txt",
                [f"ch{c}" for c in channels],
                samples,
            )
            _write_columns(
                out / f"{stem}.phase.txt",
                [f"ch{c}t{t}" for c, t in taps],
                phases,
            )
    print(f"simulated {res.cycles} cycles into {out / (stem + '.trace.txt')}")
    return EXIT_OK


def cmd_verify(args) -> int:
    prog = load_program(args.program)
    report = verify_program(prog)
    text = report.render() + "\n"
    sys.stdout.write(text)
    if args.out is not None:
        out = _artifact_dir(args)
        (out / f"{args.program.stem}.verify.txt").write_text(
            text, encoding="utf-8"
        )
    return EXIT_OK if report.ok else EXIT_VALIDATION


def cmd_report(args) -> int:
    prog = load_program(args.program)
    lib = compile_library(prog.gates)
    lines = [compression_report(lib, prog.sequence).render()]
    timings = streaming_report(lib.gates, prog.sequence)
    seen: set[str] = set()
    if timings:
        lines += ["", "streaming cost per gate (no LUTs):"]
    for t in timings:
        if t.name in seen:
            continue
        seen.add(t.name)
        risk = "  UNDERFLOW RISK" if t.underflow_risk else ""
        lines.append(
            f"  {t.name}: {t.words} words, stream {t.stream_ns:.1f} ns, "
            f"play {t.play_ns:.1f} ns{risk}"
        )
    link = simulate_link(programming_words(lib) + encode_sequence(lib, prog.sequence))
    lines += [
        "",
        f"link: trigger at cycle {link.trigger_cycle}, "
        f"{link.total_cycles} cycles total, {len(link.faults)} faults",
    ]
    lines += [f"  {fault}" for fault in link.faults[:8]]
    if len(link.faults) > 8:
        lines.append(f"  ... {len(link.faults) - 8} more starved cycles")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out is not None:
        out = _artifact_dir(args)
        (out / f"{args.program.stem}.report.txt").write_text(
            text, encoding="utf-8"
        )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gatesynth",
        description="Compile, simulate, and verify DDS gate programs.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    handlers = {
        "compile": (cmd_compile, "compile a program to a wire word stream"),
        "simulate": (cmd_simulate, "run the cycle-accurate signal chain"),
        "verify": (cmd_verify, "lint and oracle-check a program"),
        "report": (cmd_report, "compression and streaming cost summary"),
    }
    for name, (fn, help_text) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument(
            "--program", type=Path, required=True, help="gate program file"
        )
        p.add_argument(
            "--out",
            type=Path,
            default=None,
            help="artifact directory (default: current directory)",
        )
        p.add_argument(
            "--seed",
            type=int,
            default=0,
            help="power-up counter randomization seed",
        )
        p.add_argument(
            "--cycles",
            type=int,
            default=None,
            help="stop the simulation after this many engine cycles",
        )
        p.add_argument(
            "--dump-format",
            choices=("text", "binary"),
            default="text",
            dest="dump_format",
            help="waveform dump encoding",
        )
        p.add_argument(
            "--pin-counter",
            type=int,
            default=None,
            dest="pin_counter",
            metavar="VALUE",
            help="pin the power-up counter instead of seeding it",
        )
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ProgramError as exc:
        print(f"error: {args.program}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (GateValidationError, LutCapacityError, SimulationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
