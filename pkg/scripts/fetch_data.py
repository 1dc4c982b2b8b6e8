"""Download the real datasets into one directory (default ./data).

    python scripts/fetch_data.py mnist kdd --dest data
    export GANAD_DATA_DIR=$PWD/data

Layout produced: data/mnist/*.gz, data/fashion/*.gz, data/cifar10/*.bin,
data/kddcup.data_10_percent.gz.
"""
import argparse
import shutil
import tarfile
import urllib.request
from pathlib import Path

MNIST = "https://ossci-datasets.s3.amazonaws.com/mnist/"
FASHION = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/"
IDX = ["train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz",
       "t10k-images-idx3-ubyte.gz", "t10k-labels-idx1-ubyte.gz"]
KDD = "http://kdd.ics.uci.edu/databases/kddcup99/kddcup.data_10_percent.gz"
CIFAR = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"


def fetch(url: str, path: Path) -> None:
    if path.exists():
        print(f"have {path}")
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    print(f"get  {url}")
    tmp = path.with_suffix(path.suffix + ".part")
    with urllib.request.urlopen(url) as r, open(tmp, "wb") as fh:
        shutil.copyfileobj(r, fh)
    tmp.rename(path)


def cifar(dest: Path) -> None:
    tgz = dest / "cifar-10-binary.tar.gz"
    fetch(CIFAR, tgz)
    out = dest / "cifar10"
    out.mkdir(exist_ok=True)
    with tarfile.open(tgz) as tf:
        for m in tf.getmembers():
            if m.name.endswith(".bin"):
                m.name = Path(m.name).name
                tf.extract(m, out)


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("datasets", nargs="+", choices=["mnist", "fashion", "kdd", "cifar10"])
    p.add_argument("--dest", default="data")
    args = p.parse_args()
    dest = Path(args.dest)
    for name in args.datasets:
        if name in ("mnist", "fashion"):
            base = MNIST if name == "mnist" else FASHION
            for f in IDX:
                fetch(base + f, dest / name / f)
        elif name == "kdd":
            fetch(KDD, dest / "kddcup.data_10_percent.gz")
        else:
            cifar(dest)


if __name__ == "__main__":
    main()
