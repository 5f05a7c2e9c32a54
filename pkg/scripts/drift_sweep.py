#!/usr/bin/env python3
"""Rep-rate drift versus the two-photon detuning, with and without
feed-forward.

The beat note between the two Raman tones spans 105 comb teeth, so a
rep-rate error delta shows up 105-fold in the qubit detuning unless the
synthesizer leans the streaming tone against it. For each injected
drift this prints the residual detuning shift: uncorrected in Hz,
corrected in frequency LSBs (the residual must stay below one).
"""

import argparse
from fractions import Fraction

from gatesynth.program import parse_program
from gatesynth.simulate import simulate_program
from gatesynth.words import F_SAMPLE_HZ, WORD_MODULUS

F_EPS = Fraction(F_SAMPLE_HZ, WORD_MODULUS)

TEMPLATE = """
rabi 512e3
qubit freq 12642812118.466
pair q 0:0 0:1
drift {drift}

gate half {{
  duration 201
  channel 0 {{
    tone 0 freq const 200e6 sync
    tone 0 amp spline 200 1.0 0 0 0
    tone 0 amp spline 1 0.0 0 0 0
    tone 1 freq const 242812118.466 sync{ff}
    tone 1 amp spline 200 1.0 0 0 0
    tone 1 amp spline 1 0.0 0 0 0
  }}
}}

sequence {{
  trigger
  half
}}
"""


def detuning(drift: str, feedforward: bool) -> tuple[Fraction, int]:
    text = TEMPLATE.format(drift=drift, ff=" feedforward" if feedforward else "")
    prog = parse_program(text)
    res = simulate_program(prog, seed=0)
    lo = res.span_list(0, 0)[0]
    hi = res.span_list(0, 1)[0]
    beat = (hi.freq_word - lo.freq_word) * F_EPS
    span = 105 * (Fraction(120_000_000) + Fraction(drift))
    return beat + span, res.feedforward_word


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=9)
    args = ap.parse_args()

    nominal, _ = detuning("0", feedforward=False)
    print(f"{'drift/Hz':>10} {'raw shift/Hz':>14} {'ff word':>9} "
          f"{'residual/f_eps':>15}")
    span = 10_000
    for k in range(args.points):
        # integer drifts so the decimal literal is exact in the program
        d = round(-span / 2 + k * span / (args.points - 1))
        raw, _ = detuning(str(d), feedforward=False)
        corr, word = detuning(str(d), feedforward=True)
        print(f"{d:10d} {float(raw - nominal):14.1f} {word:9d} "
              f"{float((corr - nominal) / F_EPS):15.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
