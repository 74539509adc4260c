#!/usr/bin/env python3
"""Fit a fixed term library to the synthetic wave series and print the ranked equation.

    python3 scripts/wave_discovery.py --n 1000 --lam 1e-3
"""
import argparse
import json

import numpy as np

from pdecast.pblock import PBlock, TrainConfig, train
from pdecast.render import ASCII, UNICODE, equation_doc, format_equation, parse_term
from pdecast.synth import WaveConfig, generate_wave

LIBRARY = ["d2y/dx1^2", "d2y/dx2^2", "dy/dx1", "dy/dx2", "y", "x1", "x2"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--k-max", type=int, default=40)
    ap.add_argument("--lam", type=float, default=1e-3)
    ap.add_argument("--epochs", type=int, default=20)
    ap.add_argument("--ascii", action="store_true")
    ap.add_argument("--json", help="write coefficients here")
    args = ap.parse_args(argv)

    s = generate_wave(WaveConfig(n_points=args.n, k_max=args.k_max))
    blk = PBlock(s.names, [parse_term(x, s.names) for x in LIBRARY], lhs_order=2)
    blk, rep = train(blk, s, TrainConfig(lam=args.lam, epochs=args.epochs))
    style = ASCII if args.ascii else UNICODE
    print(format_equation(equation_doc(blk, s, style, truncation=len(LIBRARY)), 3, style))

    # x1 + x2 = 1, so the two second-order ratios are (nearly) mirror images
    X, _ = blk.features(s)
    corr = float(np.corrcoef(X[:, 0], X[:, 1])[0, 1])
    print(f"corr(d2y/dx1^2, d2y/dx2^2) = {corr:+.6f}")
    print(f"relative residual {rep.relative_residual:.3g}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"terms": LIBRARY, "weights": [float(w) for w in blk.weights],
                       "bias": float(blk.bias), "corr": corr}, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
