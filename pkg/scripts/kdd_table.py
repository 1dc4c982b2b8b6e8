"""KDD-99 10%: precision, recall and F1 for EGBAD and GANomaly.

    GANAD_DATA_DIR=data python scripts/kdd_table.py --out runs/kdd

The threshold sits at the (1 - eval anomaly rate) quantile of the test scores.
Runs twice: scored on the held-out 20%, and on the whole pool (training rows
included), which is the literal published protocol.
"""
import argparse
import os
from pathlib import Path

from ganad import runner
from ganad.cli import sweep_configs
from ganad.config import read_kv

CONFIG = Path(__file__).resolve().parent / "configs" / "kdd.txt"
# published precision / recall / F1
REFERENCE = {"egbad": (0.941174, 0.956155, 0.948605), "ganomaly": (0.830256, 0.841112, 0.835648)}


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-dir", default=os.environ.get("GANAD_DATA_DIR", "data"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/kdd")
    args = p.parse_args()
    for mode, on_all in (("held-out", "false"), ("whole pool", "true")):
        kv = {**read_kv(CONFIG), "data_dir": args.data_dir, "seed": str(args.seed),
              "test_on_all": on_all}
        reports = runner.run_sweep(sweep_configs(kv))
        runner.write_results(reports, Path(args.out) / f"results_{mode.replace(' ', '_')}.csv")
        print(f"[{mode}]")
        print(f"{'model':<9} {'cell':<14} {'prec':>7} {'rec':>7} {'f1':>7}   reference p/r/f1")
        for best in runner.best_per_class(reports):
            c = best.config
            cell = f"{c.train_loss}{'+res' if c.residual else ''}/{c.test_score}"
            ref = "/".join(f"{v:.4f}" for v in REFERENCE[c.model])
            print(f"{c.model:<9} {cell:<14} {best.precision:7.4f} {best.recall:7.4f} "
                  f"{best.f1:7.4f}   {ref}")


if __name__ == "__main__":
    main()
