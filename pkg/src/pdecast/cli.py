"""pdecast command line: generate | train | predict | discover | eval.

Exit codes: 0 ok, 2 bad input, 3 numeric failure, 4 bad configuration.
Set ``PDECAST_LOG`` (e.g. ``INFO``) for progress logging.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import hybrid as hy
from . import metactrl as mc
from . import pblock as pb
from .config import RunConfig, build_config, load_config
from .errors import ConfigError, IngestError, PdecastError, SchemaError
from .experiments import AblationConfig, grid_search, run_ablation, select_fixed_point
from .forecaster import RolloutConfig, mse, rmse, rollout, rolling_forecast
from .render import ASCII, LATEX, UNICODE, equation_doc, format_equation, parse_term
from .series import TimeSeries, load_csv, split_sizes
from .synth import RegimeConfig, WaveConfig, generate_regime_switch, generate_wave

log = logging.getLogger("pdecast")
META_FORMAT = "pdecast.meta"


def write_json(path, doc):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise IngestError(f"{path}: no such file") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


# -- config plumbing -----------------------------------------------------------

_CONFIG_FLAGS = {
    "kernel_size": int, "n_channels": int, "n_layers": int, "lam": float, "fista_iters": int,
    "learning_rate": float, "epochs": int, "lhs_order": int, "hidden_dim": int, "window": int,
    "anchor_stride": int, "bucket": int, "eval_window": int, "meta_steps": int, "horizon": int,
    "mode": str, "covariate_policy": str, "target": str, "eps_grid": str, "workers": int,
    "time_gate_p": float,
}
_LIST_FLAGS = {"spans": float, "rates": int, "split": float, "terms": str, "grid_lams": float, "grid_lrs": float}


def add_config_flags(p):
    p.add_argument("--config", help="key=value file with defaults")
    p.add_argument("--seed", type=int)
    for name, typ in _CONFIG_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ)
    for name, typ in _LIST_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, nargs="+")
    p.add_argument("--verbatim-alg1", action="store_true", default=None,
                   help="retrain hybrids at every anchor instead of per bucket")


def run_config(args) -> RunConfig:
    file_values = load_config(args.config) if getattr(args, "config", None) else {}
    flags = {k: getattr(args, k, None) for k in list(_CONFIG_FLAGS) + list(_LIST_FLAGS) + ["seed", "verbatim_alg1"]}
    flags = {k: tuple(v) if isinstance(v, list) else v for k, v in flags.items()}
    return build_config(file_values, flags)


def block_factory(cfg: RunConfig, names):
    if cfg.terms:
        terms = [parse_term(t, names) for t in cfg.terms]
        return lambda: pb.PBlock(names, terms, cfg.kernel_size, cfg.lhs_order)
    return lambda: pb.PBlock.random(names, cfg.n_channels, cfg.n_layers, cfg.kernel_size, cfg.lhs_order,
                                    seed=cfg.seed, time_gate_p=cfg.time_gate_p)


def plans_for(cfg: RunConfig, m_train: int):
    return mc.plan_grid(m_train, cfg.spans, cfg.rates)


def grid_for(cfg: RunConfig, n_plans: int):
    if cfg.eps_grid == "unit":
        return [mc.HyperparamPoint((i,), (1.0,)) for i in range(n_plans)]
    return mc.default_points(n_plans)


def rollout_for(cfg: RunConfig, horizon=None):
    return RolloutConfig(horizon or cfg.horizon, cfg.covariate_policy, cfg.mode)


# -- models on disk ------------------------------------------------------------

def load_model(path, series: TimeSeries | None = None):
    """Returns ``(kind, model, doc)`` with kind ``block``, ``hybrid`` or ``meta``."""
    doc = read_json(path)
    fmt = doc.get("format")
    if fmt == pb.FORMAT:
        model, kind = pb.from_dict(doc), "block"
    elif fmt == hy.FORMAT:
        model, kind = hy.from_dict(doc), "hybrid"
    elif fmt == META_FORMAT:
        model, kind = hy.from_dict(doc["hybrid"]), "meta"
    else:
        raise SchemaError(f"{path}: unknown model format {fmt!r}")
    if series is not None and tuple(model.names) != series.names:
        raise SchemaError(f"{path}: model channels {tuple(model.names)} do not match series {series.names}")
    return kind, model, doc


class MetaRunner:
    """Re-creates the per-anchor hybrid selection of a saved meta model."""

    def __init__(self, doc, series: TimeSeries):
        cfg = RunConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in doc["config"].items()})
        self.ctrl, self.grid, self.plans = mc.from_dict(doc["controller"])
        self.series = series
        self.factory = mc.HybridFactory(series, self.plans, block_factory(cfg, series.names),
                                        cfg.train_config(), cfg.bucket, cfg.eval_window)
        self.chosen = []

    def __call__(self, anchor):
        pt = mc.search_hyperparams(self.ctrl, self.series, self.grid, end=anchor)
        self.chosen.append(self.grid.index(pt))
        return self.factory.hybrid_at(anchor, pt)


# -- commands --------------------------------------------------------------------

def cmd_generate(args):
    if args.kind == "wave":
        wc = WaveConfig(args.n, args.t_min, args.t_max, args.k_max, args.seed, args.noise)
        wc.validate()
        series = generate_wave(wc)
    else:
        if args.n < 10:
            raise ConfigError("--n must be at least 10 for the regime series")
        series = generate_regime_switch(RegimeConfig(n_points=args.n, t_max=args.t_max, noise=args.noise,
                                                     seed=args.seed or 0))
    series.to_csv(args.out)
    print(f"wrote {series.m} rows to {args.out}")
    return 0


def _report_base(cfg, series, mode):
    return {"format": "pdecast.report", "version": 1, "mode": mode, "rows": series.m,
            "channels": list(series.names), "config": _config_doc(cfg)}


def _config_doc(cfg: RunConfig):
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}


def cmd_train(args):
    cfg = run_config(args)
    series = load_csv(args.csv, cfg.target)
    n_train, n_val, _ = split_sizes(series.m, cfg.split)
    train = series.head(n_train)
    out = Path(args.out)
    factory = block_factory(cfg, series.names)
    tc = cfg.train_config()
    mode = "meta" if args.meta else "hybrid" if args.hybrid else "grid" if args.grid else "single"
    report = _report_base(cfg, series, mode)

    if mode == "single":
        blk, rep = pb.train(factory(), train, tc)
        write_json(out / "model.json", pb.to_dict(blk))
        report["fit"] = rep.to_dict()
    elif mode == "grid":
        blk, rep, best_tc, cells = grid_search(series, factory, cfg.grid_lams, cfg.grid_lrs, tc, cfg.split,
                                               RolloutConfig(min(cfg.horizon, n_val), cfg.covariate_policy, cfg.mode))
        write_json(out / "model.json", pb.to_dict(blk))
        report["fit"] = rep.to_dict()
        report["grid"] = [c.to_dict() for c in cells]
        report["selected"] = {"lam": best_tc.lam, "learning_rate": best_tc.learning_rate}
    else:
        plans = plans_for(cfg, n_train)
        grid = grid_for(cfg, len(plans))
        full, reps = hy.train_hybrid(train, plans, tc, factory, cfg.workers)
        report["components"] = [r.to_dict() for r in reps]
        val_cfg = AblationConfig(ratios=cfg.split, horizon=min(cfg.horizon, n_val),
                                 covariate_policy=cfg.covariate_policy)
        best, scores = select_fixed_point(full, grid, series, n_train, n_train + n_val, val_cfg)
        model = hy.HybridPde(full.components, full.plans, grid[best].encode(len(plans)))
        report["validation"] = [{"point": p.to_dict(), "relative_mse": float(s)} for p, s in zip(grid, scores)]
        report["selected"] = grid[best].to_dict()
        if mode == "hybrid":
            write_json(out / "model.json", hy.to_dict(model))
        else:
            hf = mc.HybridFactory(series, plans, factory, tc, cfg.bucket, cfg.eval_window)
            ctrl, data = mc.train_controller(train, grid, hf, cfg.meta_config())
            write_json(out / "model.json", {
                "format": META_FORMAT, "version": 1,
                "hybrid": hy.to_dict(model),
                "controller": mc.to_dict(ctrl, grid, plans),
                "config": _config_doc(cfg),
            })
            report["meta"] = {"anchors": data.anchors, "steps": ctrl.steps, "scale": ctrl.scale}
    write_json(out / "report.json", report)
    print(f"{mode} model written to {out / 'model.json'}")
    return 0


def cmd_predict(args):
    cfg = run_config(args)
    series = load_csv(args.csv, cfg.target)
    kind, model, doc = load_model(args.model, series)
    future = load_csv(args.future, cfg.target) if args.future else None
    rc = rollout_for(cfg)
    if kind == "meta":
        model = MetaRunner(doc, series.concat(future) if future is not None else series)(series.m)
    preds = rollout(model, series, rc, future)
    if future is not None:
        times = future.timestamps[: rc.horizon]
    else:
        dt = float(np.mean(np.diff(series.timestamps[-6:])))
        times = series.timestamps[-1] + dt * np.arange(1, rc.horizon + 1)
    truth = future.target[: rc.horizon] if future is not None and future.m >= rc.horizon else None
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("time,prediction" + (",truth,abs_error" if truth is not None else "") + "\n")
        for i, (t, p) in enumerate(zip(times, preds)):
            row = f"{float(t)!r},{float(p)!r}"
            if truth is not None:
                row += f",{float(truth[i])!r},{abs(float(p - truth[i]))!r}"
            fh.write(row + "\n")
    msg = f"wrote {len(preds)} predictions to {args.out}"
    if truth is not None:
        msg += f"; relative_mse={rmse(preds, truth):.6g}"
    print(msg)
    return 0


def cmd_discover(args):
    cfg = run_config(args)
    series = load_csv(args.csv, cfg.target)
    _, model, _ = load_model(args.model, series)
    n_train, n_val, _ = split_sizes(series.m, cfg.split)
    view = series.segment(n_train, n_train + n_val)
    style = LATEX if args.latex else ASCII if args.ascii else UNICODE
    doc = equation_doc(model, view, style)
    print(format_equation(doc, args.precision, style))
    if args.json:
        write_json(args.json, dict(doc.to_dict(), format="pdecast.equation", version=1))
    return 0


def cmd_eval(args):
    cfg = run_config(args)
    series = load_csv(args.csv, cfg.target)
    n_train, n_val, n_test = split_sizes(series.m, cfg.split)
    report = _report_base(cfg, series, "ablate" if args.ablate else "eval")
    if args.ablate:
        tc = replace(cfg.train_config(), lam=cfg.lam)
        acfg = AblationConfig(ratios=cfg.split, horizon=cfg.horizon, covariate_policy=cfg.covariate_policy,
                              span_fractions=cfg.spans, rates=cfg.rates, kernel_size=cfg.kernel_size,
                              lhs_order=cfg.lhs_order, train=tc, meta=cfg.meta_config(), workers=cfg.workers)
        res = run_ablation(series, acfg)
        report["ablation"] = res.to_dict()
        print(f"{'variant':8s} {'rel_mse':>12s} {'mse':>12s}")
        for name in ("meta", "hybrid", "single"):
            print(f"{name:8s} {getattr(res, name):12.6g} {getattr(res, name + '_mse'):12.6g}")
    else:
        if not args.model:
            raise ConfigError("eval needs --model unless --ablate is given")
        kind, model, doc = load_model(args.model, series)
        start = n_train + n_val
        if args.rolling:
            model_at = MetaRunner(doc, series) if kind == "meta" else (lambda a: model)
            preds, truth, anchors = rolling_forecast(model_at, series, start, series.m, rollout_for(cfg))
        else:
            h = min(cfg.horizon, n_test)
            rc = rollout_for(cfg, h)
            m = MetaRunner(doc, series)(start) if kind == "meta" else model
            preds = rollout(m, series.head(start), rc, series.segment(start, start + h))
            truth, anchors = series.target[start:start + h], [start]
        report["metrics"] = {"relative_mse": rmse(preds, truth), "mse": mse(preds, truth),
                             "n_predictions": int(len(preds)), "anchors": list(map(int, anchors))}
        report["predictions"] = [float(p) for p in preds]
        print(f"relative_mse={report['metrics']['relative_mse']:.6g} mse={report['metrics']['mse']:.6g} "
              f"n={len(preds)}")
    if args.out:
        write_json(args.out, report)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="pdecast", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic series as CSV")
    g.add_argument("--kind", choices=("wave", "regime"), default="wave")
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--t-min", type=float, default=0.0)
    g.add_argument("--t-max", type=float, default=10.0)
    g.add_argument("--k-max", type=int, default=40)
    g.add_argument("--noise", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default="series.csv")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a model")
    t.add_argument("csv")
    which = t.add_mutually_exclusive_group()
    which.add_argument("--single", action="store_true")
    which.add_argument("--hybrid", action="store_true")
    which.add_argument("--meta", action="store_true")
    which.add_argument("--grid", action="store_true", help="validation search over lam and learning rate")
    t.add_argument("--out", default="run")
    add_config_flags(t)
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="forecast past the end of a series")
    pr.add_argument("csv")
    pr.add_argument("--model", required=True)
    pr.add_argument("--future", help="CSV with the continuation (for provided covariates or single-step)")
    pr.add_argument("--out", default="predictions.csv")
    add_config_flags(pr)
    pr.set_defaults(func=cmd_predict)

    d = sub.add_parser("discover", help="print the learned equation")
    d.add_argument("csv")
    d.add_argument("--model", required=True)
    style = d.add_mutually_exclusive_group()
    style.add_argument("--ascii", action="store_true")
    style.add_argument("--latex", action="store_true")
    d.add_argument("--precision", type=int, default=2)
    d.add_argument("--json")
    add_config_flags(d)
    d.set_defaults(func=cmd_discover)

    e = sub.add_parser("eval", help="score a model on the test split")
    e.add_argument("csv")
    e.add_argument("--model")
    e.add_argument("--ablate", action="store_true", help="compare meta, hybrid and single")
    e.add_argument("--rolling", action="store_true", help="rolling origins over the whole test split")
    e.add_argument("--out")
    add_config_flags(e)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("PDECAST_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PdecastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
