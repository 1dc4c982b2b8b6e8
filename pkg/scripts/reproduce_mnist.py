"""Desk-scale MNIST reproduction: per-class best AUPRC for EGBAD and GANomaly.

    GANAD_DATA_DIR=data python scripts/reproduce_mnist.py --classes 0,2 --out runs/mnist

Each model runs its full train/test grid from scripts/configs/mnist_<model>.txt.
Writes results.csv and auprc_table.csv per model and prints a side-by-side
table with the published per-class values for reference.
"""
import argparse
import os
from pathlib import Path

from ganad import runner
from ganad.cli import sweep_configs
from ganad.config import read_kv

CONFIGS = Path(__file__).resolve().parent / "configs"
# published per-class MNIST AUPRC, classes 0-9
REFERENCE = {
    "egbad": [0.836239, 0.873284, 0.879434, 0.787722, 0.746983,
              0.788937, 0.842500, 0.827540, 0.778773, 0.554513],
    "ganomaly": [0.667249, 0.248307, 0.732796, 0.568800, 0.568901,
                 0.603013, 0.669514, 0.401656, 0.702614, 0.398312],
}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-dir", default=os.environ.get("GANAD_DATA_DIR", "data"))
    p.add_argument("--classes", default="all", help="comma list or 'all'")
    p.add_argument("--models", default="egbad,ganomaly")
    p.add_argument("--limit", type=int, help="override the pool size in the config files")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="runs/mnist")
    args = p.parse_args()

    best: dict[tuple[str, int], float] = {}
    for model in args.models.split(","):
        kv = read_kv(CONFIGS / f"mnist_{model}.txt")
        kv.update(data_dir=args.data_dir, anomaly_class=args.classes)
        if args.limit:
            kv["limit"] = str(args.limit)
        out = Path(args.out) / model
        reports = runner.run_sweep(sweep_configs(kv), workers=args.workers)
        runner.write_results(reports, out / "results.csv")
        table = runner.auprc_table(runner.read_results(out / "results.csv"))
        runner.write_auprc_table(table, out / "auprc_table.csv")
        for row in table:
            best[(model, int(row["anomaly_class"]))] = float(row["auprc"])
        for r in reports:
            if not r.ok:
                print(f"FAILED {r.config.config_id()}: {r.error}")

    classes = sorted({c for _, c in best})
    print(f"{'class':>5}  {'egbad':>7}  {'ganomaly':>8}  {'ref egbad':>9}  {'ref ganomaly':>12}")
    for c in classes:
        eg, ga = best.get(("egbad", c)), best.get(("ganomaly", c))
        fmt = lambda v: f"{v:.4f}" if v is not None else "-"  # noqa: E731
        print(f"{c:>5}  {fmt(eg):>7}  {fmt(ga):>8}  {REFERENCE['egbad'][c]:>9.4f}  "
              f"{REFERENCE['ganomaly'][c]:>12.4f}")
    wins = sum(best.get(("egbad", c), 0) > best.get(("ganomaly", c), 0) for c in classes)
    print(f"egbad ahead on {wins}/{len(classes)} classes")


if __name__ == "__main__":
    main()
