"""Command line: train, score, sweep, report.

Settings come from an optional key=value ``--config`` file; flags given on the
command line override it.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import runner
from .config import ExperimentConfig, coerce, dumps, read_kv

# flag dest -> config key, for flags whose names differ from the field
_RENAME = {"lambda_": "lam"}

# sweep-only keys that may hold lists or control expansion
_SWEEP_KEYS = ("grid", "workers", "timing")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--dataset", choices=["mnist", "fashion", "cifar10", "kdd", "moons"])
    p.add_argument("--data-dir")
    p.add_argument("--anomaly-class", help="class id; sweeps also take a list or 'all'")
    p.add_argument("--model", help="anogan, egbad or ganomaly; sweeps take a comma list")
    p.add_argument("--train-loss", choices=["bce", "fm"])
    p.add_argument("--residual", action="store_const", const="true")
    p.add_argument("--test-score", choices=["bce", "fm", "latent"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--latent-dim", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--depth", type=int, help="hidden layers per network")
    p.add_argument("--lr", type=float)
    p.add_argument("--lambda", dest="lambda_", type=float)
    p.add_argument("--weights", help="adv,con,enc")
    p.add_argument("--gamma-steps", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--search-lr", type=float)
    p.add_argument("--test-limit", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--test-on-all", action="store_const", const="true")
    p.add_argument("--encoder-act", action="store_const", const="true")
    p.add_argument("--no-model-selection", dest="model_selection", action="store_const",
                   const="false")
    p.add_argument("--out", default="runs", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")


def settings(args: argparse.Namespace) -> dict[str, str]:
    """Merge the config file with explicit flags (flags win)."""
    kv = read_kv(args.config) if args.config else {}
    for dest, value in vars(args).items():
        if value is None or dest in ("config", "out", "verbose", "cmd", "func", "checkpoints"):
            continue
        key = _RENAME.get(dest, dest)
        kv[key] = str(value)
    return kv


def _single(kv: dict[str, str]) -> ExperimentConfig:
    kv = {k: v for k, v in kv.items() if k not in _SWEEP_KEYS}
    cfg_kw = {k: coerce(k, v) for k, v in kv.items()}
    if cfg_kw.get("model") == "ganomaly" and "test_score" not in cfg_kw:
        cfg_kw["test_score"] = "latent"
    return ExperimentConfig(**cfg_kw)


def _classes(spec: str, dataset: str) -> list[int]:
    if spec == "all":
        if dataset == "kdd":
            return [1]
        if dataset == "moons":
            return [1]
        return list(range(10))
    return [int(c) for c in spec.split(",")]


def sweep_configs(kv: dict[str, str]) -> list[ExperimentConfig]:
    """Expand list-valued model/anomaly_class keys and the train/test grid."""
    kv = dict(kv)
    grid = kv.pop("grid", "table")
    kv.pop("workers", None)
    kv.pop("timing", None)
    models = kv.pop("model", "egbad").split(",")
    classes = _classes(kv.pop("anomaly_class", "0"), kv.get("dataset", "mnist"))
    out = []
    for cls in classes:
        for model in models:
            base_kw = dict(kv, model=model.strip(), anomaly_class=str(cls))
            if model.strip() == "ganomaly":
                base_kw["test_score"] = "latent"
                base_kw.pop("residual", None)
            if model.strip() == "anogan":
                base_kw.pop("residual", None)
            if grid == "table":
                base_kw.pop("test_score", None)
                base_kw.pop("train_loss", None)
                base_kw.pop("residual", None)
                if model.strip() == "ganomaly":
                    base_kw["test_score"] = "latent"
            base = _single(base_kw)
            out.extend(runner.table_grid(base) if grid == "table" else [base])
    return out


def _print_reports(reports) -> None:
    for r in reports:
        c = r.config
        if r.ok:
            print(f"{c.config_id():<48} auprc={r.auprc:.4f} p={r.precision:.4f} "
                  f"r={r.recall:.4f} f1={r.f1:.4f} ({r.seconds:.1f}s)")
        else:
            print(f"{c.config_id():<48} FAILED {r.error}")


def cmd_train(args) -> int:
    cfg = _single(settings(args))
    out = Path(args.out)
    proto = runner.protocol_for(cfg)
    rng = np.random.default_rng(cfg.derived_seed())
    models, sel = runner.train_group([cfg], proto, rng)
    ckpt = runner.checkpoint_dir(out, cfg)
    runner.save_model(models[cfg.test_score], ckpt)
    (ckpt / "config.txt").write_text(dumps(cfg))
    rep = runner.ScoreReport(config=cfg, selection_log=sel)
    runner.write_selection_logs([rep], out / "selection")
    print(f"saved {cfg.model} checkpoints to {ckpt}")
    return 0


def cmd_score(args) -> int:
    cfg = _single(settings(args))
    out = Path(args.out)
    ckpt = runner.checkpoint_dir(out, cfg)
    if not ckpt.exists():
        print(f"no checkpoints at {ckpt}; run `train` first", file=sys.stderr)
        return 2
    model = runner.load_model(cfg.model, ckpt)
    proto = runner.protocol_for(cfg)
    x, y = runner.test_rows(cfg, proto)
    scores = runner.score_model(cfg, model, x, np.random.default_rng(cfg.derived_seed() + 1))
    rep = runner.make_report(cfg, scores, y, proto.eval.base_rate(), 0.0)
    np.savetxt(ckpt / "scores.csv", np.c_[scores, rep.scaled, y], delimiter=",",
               header="score,scaled,label", comments="", fmt=["%.17g", "%.17g", "%d"])
    if cfg.model == "ganomaly":
        from .ganomaly import residual_map
        np.save(ckpt / "residual_maps.npy", residual_map(model, x))
    runner.write_results([rep], out / "results.csv")
    _print_reports([rep])
    return 0


def cmd_sweep(args) -> int:
    kv = settings(args)
    workers = int(args.workers or kv.get("workers", 1))
    timing = args.timing or kv.get("timing", "false").lower() == "true"
    configs = sweep_configs(kv)
    out = Path(args.out)
    print(f"{len(configs)} cells in {len(runner.group_by_training(configs))} trainings")
    reports = runner.run_sweep(configs, workers=workers,
                               out=str(out) if args.checkpoints else None)
    runner.write_results(reports, out / "results.csv", with_seconds=timing)
    runner.write_timings(reports, out / "timings.csv")
    runner.write_selection_logs(reports, out / "selection")
    table = runner.auprc_table(runner.read_results(out / "results.csv"))
    runner.write_auprc_table(table, out / "auprc_table.csv")
    _print_reports(reports)
    return 0 if all(r.ok for r in reports) else 1


def cmd_report(args) -> int:
    path = Path(args.out) / "results.csv"
    if not path.exists():
        print(f"{path} not found", file=sys.stderr)
        return 2
    table = runner.auprc_table(runner.read_results(path))
    runner.write_auprc_table(table, Path(args.out) / "auprc_table.csv")
    print(f"{'dataset':<10}{'class':>6}  {'model':<10}{'auprc':>8}  best cell")
    for row in table:
        cell = f"{row['train_loss']}{'+res' if row['residual'] == 'true' else ''}/{row['test_score']}"
        print(f"{row['dataset']:<10}{row['anomaly_class']:>6}  {row['model']:<10}"
              f"{float(row['auprc']):>8.4f}  {cell}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ganad", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)
    for name, fn, help_ in [("train", cmd_train, "train one configuration"),
                            ("score", cmd_score, "score the test split with saved checkpoints"),
                            ("sweep", cmd_sweep, "run the train/test grid"),
                            ("report", cmd_report, "per-class best AUPRC table")]:
        sp = sub.add_parser(name, help=help_)
        _common(sp)
        sp.set_defaults(func=fn)
        if name == "sweep":
            sp.add_argument("--workers", type=int)
            sp.add_argument("--timing", action="store_true",
                            help="fill the seconds column (breaks byte-identical reruns)")
            sp.add_argument("--grid", choices=["table", "single"])
            sp.add_argument("--checkpoints", action="store_true", help="save every model")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
