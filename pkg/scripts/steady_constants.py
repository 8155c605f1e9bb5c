#!/usr/bin/env python3
"""Per-degree radial weights of the steady-state projector and their sum against M/(N-2)."""
import argparse

from kacres.operators import Assembler, SystemParams
from kacres.propagator import radial_eigenvalue, steady_l2_constant_quadrature, steady_l2_constant_truncated


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("pairs", nargs="*", default=["1,4", "2,5", "3,6"], help="M,N pairs")
    ap.add_argument("--cutoff", type=int, default=8)
    args = ap.parse_args()
    for pair in args.pairs:
        M, N = map(int, pair.split(","))
        weights = [radial_eigenvalue(M, N, k) for k in range(1, args.cutoff // 2 + 1)]
        line = f"M={M} N={N}  weights " + " ".join(f"{w:.4f}" for w in weights)
        line += f"  sharp {M / (M + N):.4f}  sum {steady_l2_constant_quadrature(M, N):.6f}"
        if N > 2:
            line += f" (M/(N-2) = {M / (N - 2):.6f})"
        if M + N <= 7:
            sharp, summed = steady_l2_constant_truncated(Assembler(SystemParams(M, N), args.cutoff))
            line += f"  assembled sharp {sharp:.4f}"
        print(line)


if __name__ == "__main__":
    main()
