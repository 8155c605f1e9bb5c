#!/usr/bin/env python3
"""How tight is the L2 difference bound as M grows at fixed N?

Prints, for each M, the largest ratio measured/bound over the time grid for
h0 = 1 + 0.1 H_2(v_1) and for the saturating state 1 + a u_{M,M}.
"""
import argparse
import math

import numpy as np

from kacres.operators import Assembler, SystemParams
from kacres.propagator import Propagator
from kacres.saturation import build
from kacres.states import HermiteState


def worst_ratio(prop: Propagator, h0, times) -> float:
    p = prop.params
    diff = np.linalg.norm(prop.difference(h0, times), axis=1)
    bound = p.M / math.sqrt(p.N) * (1 - np.exp(-0.5 * p.mu * times)) * np.linalg.norm(h0.deviation())
    return float(np.max(diff / bound))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=4)
    ap.add_argument("--Ms", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--cutoff", type=int, default=6)
    args = ap.parse_args()
    times = np.array([2.0**k for k in range(-6, 5)])
    print(f"{'M':>3} {'hermite':>10} {'saturating':>11}")
    for M in args.Ms:
        asm = Assembler(SystemParams(M, args.N), args.cutoff)
        prop = Propagator(asm)
        c = np.zeros(len(asm.basis))
        c[0] = 1.0
        c[asm.basis.flat((2,) + (0,) * (M + args.N - 1))] = 0.1
        r1 = worst_ratio(prop, HermiteState(c, asm.basis), times)
        r2 = worst_ratio(prop, build(M, M).h0(asm.basis), times) if M >= 2 and 2 * M <= args.cutoff else float("nan")
        print(f"{M:>3} {r1:>10.4f} {r2:>11.4f}")


if __name__ == "__main__":
    main()
