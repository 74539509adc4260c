#!/usr/bin/env python3
"""Single vs best-fixed hybrid vs meta-controlled hybrid on the regime-drift series.

    python3 scripts/regime_ablation.py --seeds 0 1 2
"""
import argparse
import json
import logging

from pdecast.experiments import AblationConfig, run_ablation
from pdecast.metactrl import MetaConfig
from pdecast.pblock import TrainConfig
from pdecast.synth import RegimeConfig, generate_regime_switch


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--width", type=float, default=7.5, help="tanh width of the sign flip")
    ap.add_argument("--horizon", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=3)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0], help="controller seeds")
    ap.add_argument("--verbatim-alg1", action="store_true", help="retrain components at every anchor")
    ap.add_argument("--json")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    s = generate_regime_switch(RegimeConfig(n_points=args.n, width=args.width))
    rows = []
    print(f"{'seed':>4} {'single':>10} {'hybrid':>10} {'meta':>10}")
    for seed in args.seeds:
        cfg = AblationConfig(horizon=args.horizon, train=TrainConfig(lam=1e-3, epochs=args.epochs),
                             meta=MetaConfig(seed=seed, verbatim_alg1=args.verbatim_alg1))
        res = run_ablation(s, cfg)
        rows.append({"seed": seed, **res.to_dict()})
        print(f"{seed:>4} {res.single:>10.4g} {res.hybrid:>10.4g} {res.meta:>10.4g}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
