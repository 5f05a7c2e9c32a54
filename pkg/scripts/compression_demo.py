#!/usr/bin/env python3
"""Show what the lookup tables buy for a gate program.

Compiles a program, prints the table occupancy and word counts, then
contrasts the sequence cost (gate-id words) with what streaming every
knot over the wire would move, including the per-gate link timing.
"""

import argparse
from pathlib import Path

from gatesynth.luts import (
    compile_library,
    compression_report,
    encode_sequence,
    programming_words,
    streaming_report,
    streaming_time_ns,
)
from gatesynth.program import load_program

DEFAULT = Path(__file__).resolve().parent.parent / "programs" / "xy_square.prog"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--program", type=Path, default=DEFAULT)
    ap.add_argument("--repeat", type=int, default=1,
                    help="replay the sequence this many times")
    args = ap.parse_args()

    prog = load_program(args.program)
    lib = compile_library(prog.gates)
    seq = prog.sequence * args.repeat

    print(f"program: {args.program.name}  (sequence x{args.repeat})")
    print(compression_report(lib, seq).render())
    print()

    prog_words = len(programming_words(lib))
    seq_words = len(encode_sequence(lib, seq))
    print(f"wire bytes, lut path:  {(prog_words + seq_words) * 32}"
          f"  ({prog_words} programming + {seq_words} sequence words)")

    print("per-gate streaming cost:")
    seen = set()
    for t in streaming_report(lib.gates, seq):
        if t.name in seen:
            continue
        seen.add(t.name)
        flag = "  UNDERFLOW RISK" if t.underflow_risk else ""
        print(f"  {t.name}: {t.words} words, stream {t.stream_ns:.1f} ns, "
              f"play {t.play_ns:.1f} ns{flag}")
    print(f"link word time: {streaming_time_ns(1):.2f} ns")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
