"""End-to-end experiments: protocol, training, scoring, reports, sweeps."""
from __future__ import annotations

import csv
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import anogan, egbad, ganomaly
from . import networks as nets
from .config import ExperimentConfig, from_dict, to_dict
from .datasets import Protocol, SplitSpec, load_raw, make_protocol
from .ganomaly import GanomalyWeights
from .metrics import average_precision, prf_at_threshold, scale_scores

log = logging.getLogger(__name__)

RESULTS_HEADER = ["dataset", "anomaly_class", "model", "train_loss", "residual", "test_score",
                  "seed", "auprc", "precision", "recall", "f1", "seconds"]


@dataclass
class ScoreReport:
    config: ExperimentConfig
    scores: np.ndarray = field(default_factory=lambda: np.zeros(0))
    labels: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    scaled: np.ndarray = field(default_factory=lambda: np.zeros(0))
    auprc: float = float("nan")
    precision: float = float("nan")
    recall: float = float("nan")
    f1: float = float("nan")
    seconds: float = 0.0
    seed: int = 0
    error: str | None = None
    selection_log: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_json(self) -> str:
        d = {
            "config": to_dict(self.config),
            "scores": self.scores.tolist(),
            "labels": self.labels.tolist(),
            "scaled": self.scaled.tolist(),
            "auprc": self.auprc, "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "seconds": self.seconds, "seed": self.seed, "error": self.error,
            "selection_log": [list(r) for r in self.selection_log],
        }
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> ScoreReport:
        d = json.loads(text)
        return cls(config=from_dict(d["config"]),
                   scores=np.asarray(d["scores"], dtype=np.float64),
                   labels=np.asarray(d["labels"], dtype=np.int64),
                   scaled=np.asarray(d["scaled"], dtype=np.float64),
                   auprc=d["auprc"], precision=d["precision"], recall=d["recall"], f1=d["f1"],
                   seconds=d["seconds"], seed=d["seed"], error=d["error"],
                   selection_log=[tuple(r) for r in d["selection_log"]])


# ------------------------------------------------------------------ building blocks

@lru_cache(maxsize=4)
def _raw(dataset: str, data_dir: str, seed: int):
    return load_raw(dataset, data_dir or None, seed=seed)


def protocol_for(cfg: ExperimentConfig) -> Protocol:
    raw = _raw(cfg.dataset, cfg.data_dir, cfg.seed)
    spec = SplitSpec(seed=cfg.seed, limit=cfg.limit or None, test_on_all=cfg.test_on_all)
    return make_protocol(raw, cfg.anomaly_class, spec)


def egbad_config(cfg: ExperimentConfig) -> egbad.EgbadConfig:
    return egbad.EgbadConfig(
        train_g_loss=cfg.train_loss, use_residual=cfg.residual,
        test_score=cfg.test_score if cfg.test_score in ("bce", "fm") else "fm",
        epochs=cfg.epochs, batch_size=cfg.batch, latent_dim=cfg.latent_dim, hidden=cfg.hidden, depth=cfg.depth,
        encoder_first_layer_activation=cfg.encoder_act, model_selection=cfg.model_selection,
        lam=cfg.lam, lr=cfg.lr)


def ganomaly_config(cfg: ExperimentConfig) -> ganomaly.GanomalyConfig:
    return ganomaly.GanomalyConfig(
        adv_kind=cfg.train_loss, weights=GanomalyWeights(*cfg.weights), epochs=cfg.epochs,
        batch_size=cfg.batch, latent_dim=cfg.latent_dim, hidden=cfg.hidden, depth=cfg.depth,
        model_selection=cfg.model_selection, lr=cfg.lr)


def anogan_config(cfg: ExperimentConfig) -> anogan.AnoganConfig:
    return anogan.AnoganConfig(
        gamma_steps=cfg.gamma_steps, search_lr=cfg.search_lr, lam=cfg.lam,
        d_loss_kind=cfg.test_score, restarts=cfg.restarts, train_g_loss=cfg.train_loss,
        epochs=cfg.epochs, batch_size=cfg.batch, latent_dim=cfg.latent_dim, hidden=cfg.hidden, depth=cfg.depth,
        lr=cfg.lr)


def train_group(cfgs: Sequence[ExperimentConfig], proto: Protocol, rng: np.random.Generator):
    """Train the one model shared by ``cfgs``; returns ({test_score: model}, log)."""
    head = cfgs[0]
    kinds = [c.test_score for c in cfgs]
    if head.model == "egbad":
        models, sel = egbad.train_egbad_multi(proto.train, egbad_config(head), rng,
                                              proto.eval, kinds)
        return {k.value: m for k, m in models.items()}, sel
    if head.model == "ganomaly":
        m, sel = ganomaly.train_ganomaly(proto.train, ganomaly_config(head), rng, proto.eval)
        return {k: m for k in kinds}, sel
    m = anogan.train_anogan(proto.train, anogan_config(head), rng)
    return {k: m for k in kinds}, []


def score_model(cfg: ExperimentConfig, model, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if cfg.model == "egbad":
        return egbad.anomaly_score_egbad(model, x, cfg.test_score, cfg.lam)
    if cfg.model == "ganomaly":
        return ganomaly.anomaly_score_gano(model, x)
    return anogan.anomaly_score_ano(model, x, anogan_config(cfg), rng)


def test_rows(cfg: ExperimentConfig, proto: Protocol) -> tuple[np.ndarray, np.ndarray]:
    x, y = proto.test.samples, proto.test.labels
    if cfg.test_limit:
        x, y = x[:cfg.test_limit], y[:cfg.test_limit]
    return x, y


def make_report(cfg: ExperimentConfig, scores: np.ndarray, labels: np.ndarray,
                eval_base_rate: float, seconds: float, selection_log=()) -> ScoreReport:
    p, r, f1 = prf_at_threshold(scores, labels, base_rate=eval_base_rate)
    return ScoreReport(config=cfg, scores=scores, labels=labels, scaled=scale_scores(scores),
                       auprc=average_precision(scores, labels), precision=p, recall=r, f1=f1,
                       seconds=seconds, seed=cfg.derived_seed(),
                       selection_log=list(selection_log))


def model_nets(model) -> dict[str, nets.Network]:
    if isinstance(model, ganomaly.GanomalyModel):
        return {"G_E": model.G_E, "G_D": model.G_D, "E": model.E, "D": model.D}
    if isinstance(model, egbad.EgbadModel):
        return {"G": model.G, "E": model.E, "D": model.D}
    return {"G": model.G, "D": model.D}


def save_model(model, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, net in model_nets(model).items():
        nets.save(net, directory / f"{name}.gadn")


def load_model(kind: str, directory: Path):
    ld = {p.stem: nets.load(p) for p in Path(directory).glob("*.gadn")}
    if kind == "ganomaly":
        return ganomaly.GanomalyModel(ld["G_E"], ld["G_D"], ld["E"], ld["D"])
    if kind == "egbad":
        return egbad.EgbadModel(ld["G"], ld["E"], ld["D"])
    return anogan.AnoganModel(ld["G"], ld["D"])


def checkpoint_dir(out: Path, cfg: ExperimentConfig) -> Path:
    return Path(out) / "checkpoints" / cfg.config_id()


def run_group(cfgs: Sequence[ExperimentConfig], out: str | None = None) -> list[ScoreReport]:
    """Train once and score every cell of one training group. Failures become reports."""
    head = cfgs[0]
    t0 = time.perf_counter()
    try:
        proto = protocol_for(head)
        rng = np.random.default_rng(head.derived_seed())
        models, sel = train_group(cfgs, proto, rng)
        t_train = time.perf_counter() - t0
        reports = []
        for cfg in cfgs:
            t1 = time.perf_counter()
            x, y = test_rows(cfg, proto)
            scores = score_model(cfg, models[cfg.test_score], x,
                                 np.random.default_rng(cfg.derived_seed() + 1))
            rows = [r for r in sel if r[1] in (cfg.test_score, "latent")]
            rep = make_report(cfg, scores, y, proto.eval.base_rate(),
                              t_train + time.perf_counter() - t1, rows)
            if out:
                save_model(models[cfg.test_score], checkpoint_dir(Path(out), cfg))
            reports.append(rep)
        return reports
    except Exception as exc:  # one bad config must not abort a sweep
        log.error("config %s failed: %s", head.config_id(), exc)
        err = f"{type(exc).__name__}: {exc}"
        log.debug(traceback.format_exc())
        return [ScoreReport(config=c, error=err, seconds=time.perf_counter() - t0,
                            seed=c.derived_seed()) for c in cfgs]


def run_experiment(cfg: ExperimentConfig, out: str | None = None) -> ScoreReport:
    return run_group([cfg], out)[0]


# ------------------------------------------------------------------ sweeps

def table_grid(base: ExperimentConfig) -> list[ExperimentConfig]:
    """Train/test combinations for one (dataset, class, model).

    egbad: {bce, fm} x {residual, none} trainings, each scored with bce and fm.
    ganomaly: {bce, fm} trainings scored in latent space.
    anogan: {bce, fm} trainings, each searched with bce and fm discriminator losses.
    """
    out = []
    if base.model == "egbad":
        for residual in (True, False):
            for loss in ("bce", "fm"):
                for test in ("bce", "fm"):
                    out.append(base.replace(train_loss=loss, residual=residual, test_score=test))
    elif base.model == "ganomaly":
        for loss in ("bce", "fm"):
            out.append(base.replace(train_loss=loss, test_score="latent", residual=False))
    else:
        for loss in ("bce", "fm"):
            for test in ("bce", "fm"):
                out.append(base.replace(train_loss=loss, test_score=test, residual=False))
    return out


def group_by_training(configs: Iterable[ExperimentConfig]) -> list[list[ExperimentConfig]]:
    groups: dict[str, list[ExperimentConfig]] = {}
    for c in configs:
        groups.setdefault(c.training_key(), []).append(c)
    return list(groups.values())


def run_sweep(configs: Sequence[ExperimentConfig], workers: int = 1,
              out: str | None = None) -> list[ScoreReport]:
    """Run every config; one training per group of cells that share a model.

    Reports come back in input order whatever the worker count.
    """
    configs = list(configs)
    groups = group_by_training(configs)
    if workers > 1 and len(groups) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_group, groups, [out] * len(groups)))
    else:
        results = [run_group(g, out) for g in groups]
    # configs compare by value, so duplicates are matched up positionally
    flat: dict[ExperimentConfig, list[ScoreReport]] = {}
    for g, reps in zip(groups, results):
        for c, r in zip(g, reps):
            flat.setdefault(c, []).append(r)
    return [flat[c].pop(0) for c in configs]


def best_per_class(reports: Sequence[ScoreReport]) -> list[ScoreReport]:
    """Highest-AUPRC report per (dataset, anomaly class, model)."""
    best: dict[tuple, ScoreReport] = {}
    for r in reports:
        if not r.ok:
            continue
        k = (r.config.dataset, r.config.anomaly_class, r.config.model)
        if k not in best or r.auprc > best[k].auprc:
            best[k] = r
    return [best[k] for k in sorted(best)]


# ------------------------------------------------------------------ files

def _row(r: ScoreReport, with_seconds: bool) -> list[str]:
    c = r.config
    num = (lambda v: repr(float(v))) if r.ok else (lambda v: "")
    return [c.dataset, str(c.anomaly_class), c.model, c.train_loss,
            "true" if c.residual else "false", c.test_score, str(c.seed),
            num(r.auprc), num(r.precision), num(r.recall), num(r.f1),
            repr(round(r.seconds, 3)) if with_seconds else ""]


def write_results(reports: Sequence[ScoreReport], path, with_seconds: bool = False) -> None:
    """results.csv. Wall-clock seconds are left blank unless asked for, so
    reruns of the same sweep produce identical bytes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in reports:
            w.writerow(_row(r, with_seconds))


def write_timings(reports: Sequence[ScoreReport], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["config_id", "seconds", "error"])
        for r in reports:
            w.writerow([r.config.config_id(), f"{r.seconds:.3f}", r.error or ""])


def read_results(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def auprc_table(rows: Sequence[dict[str, str]]) -> list[dict[str, str]]:
    """Best AUPRC per (dataset, anomaly_class, model) from results.csv rows."""
    best: dict[tuple, dict[str, str]] = {}
    for row in rows:
        if not row["auprc"]:
            continue
        k = (row["dataset"], int(row["anomaly_class"]), row["model"])
        if k not in best or float(row["auprc"]) > float(best[k]["auprc"]):
            best[k] = row
    return [{"dataset": k[0], "anomaly_class": str(k[1]), "model": k[2],
             "auprc": best[k]["auprc"], "train_loss": best[k]["train_loss"],
             "residual": best[k]["residual"], "test_score": best[k]["test_score"]}
            for k in sorted(best)]


def write_auprc_table(table: Sequence[dict[str, str]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["dataset", "anomaly_class", "model", "auprc",
                                           "train_loss", "residual", "test_score"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(table)


def write_selection_logs(reports: Sequence[ScoreReport], directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for r in reports:
        if not r.selection_log:
            continue
        with open(directory / f"{r.config.config_id()}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "score", "eval_auprc"])
            for epoch, kind, auc in r.selection_log:
                w.writerow([epoch, kind, repr(float(auc))])
