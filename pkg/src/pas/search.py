"""Bi-level architecture search, retraining and evaluation."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .diffcore import Adam, ParamStore, Rng, activation, cross_entropy, no_grad
from .graphdata import make_batch, stratified_kfold, stratified_split
from .supernet import (
    ArchParams,
    DerivedArch,
    ModelConfig,
    discrete_forward,
    parse_pins,
    site_enum,
    site_names,
    supernet_forward,
)

log = logging.getLogger(__name__)


class SearchDiverged(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class SearchConfig:
    layers: int = 2
    hidden: int = 32
    ratio: float = 0.5
    tau: float = 0.2
    epochs: int = 200
    batch_size: int = 64
    lr_w: float = 0.005
    lr_alpha: float = 0.003
    seed: int = 0
    pins: dict = field(default_factory=dict)
    split: tuple = (0.8, 0.1, 0.1)
    activation: str = "relu"
    sort_k: int = 10
    set2set_steps: int = 2
    z0_source: str = "input"
    alpha_init_scale: float = 1e-3
    search_repeats: int = 1
    workers: int = 1

    def __post_init__(self):
        self.split = tuple(float(x) for x in self.split)
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9 or min(self.split) < 0:
            raise ValueError(f"split fractions must be three non-negative numbers summing to 1, "
                             f"got {self.split}")
        for name in ("lr_w", "lr_alpha", "tau", "ratio"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.ratio > 1:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if self.layers < 1 or self.hidden < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("layers, hidden and batch_size must be >= 1 and epochs >= 0")
        if self.z0_source not in ("input", "agg1"):
            raise ValueError(f"z0_source must be 'input' or 'agg1', got {self.z0_source!r}")
        try:
            activation(self.activation)
        except ValueError as exc:
            raise ValueError(f"activation: {exc}") from None
        try:
            parse_pins(self.pins, self.layers)
        except ValueError as exc:
            raise ValueError(f"pins: {exc}") from None

    def model_config(self, in_dim, num_classes):
        return ModelConfig(in_dim=in_dim, num_classes=num_classes, hidden=self.hidden,
                           layers=self.layers, ratio=self.ratio, act=self.activation,
                           sort_k=self.sort_k, set2set_steps=self.set2set_steps,
                           z0_source=self.z0_source)

    def to_dict(self):
        d = asdict(self)
        d["split"] = list(self.split)
        return d


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    wall_time: float = 0.0
    final: dict = field(default_factory=dict)

    @property
    def epochs(self):
        return len(self.train_loss)

    def record(self, train_loss, val_loss, val_acc):
        self.train_loss.append(float(train_loss))
        self.val_loss.append(float(val_loss))
        self.val_acc.append(float(val_acc))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
            for i, row in enumerate(zip(self.train_loss, self.val_loss, self.val_acc), 1):
                w.writerow([i, *(repr(x) for x in row)])


def _minibatches(graphs, batch_size, rng=None):
    order = np.arange(len(graphs)) if rng is None else rng.permutation(len(graphs))
    for start in range(0, len(graphs), batch_size):
        yield make_batch([graphs[i] for i in order[start:start + batch_size]])


def _accuracy(logits, labels):
    return float((np.argmax(logits.data, axis=1) == labels).mean())


def evaluate(graphs, arch, params, mcfg, batch_size=64):
    """Mean cross-entropy and accuracy of a discrete architecture on ``graphs``."""
    if not graphs:
        return float("nan"), float("nan")
    loss = correct = 0.0
    with no_grad():
        for batch in _minibatches(graphs, batch_size):
            logits = discrete_forward(batch, arch, params, mcfg)
            loss += float(cross_entropy(logits, batch.labels).data) * batch.num_graphs
            correct += float((np.argmax(logits.data, axis=1) == batch.labels).sum())
    return loss / len(graphs), correct / len(graphs)


def _check_finite(value, what, report):
    if not np.isfinite(value):
        raise SearchDiverged(f"non-finite {what} loss", report)


# --------------------------------------------------------------------------
# search

def _search_once(train, val, mcfg, cfg, seed):
    params = ParamStore(seed)
    arch = ArchParams(cfg.layers, cfg.tau, cfg.pins, seed=seed, init_scale=cfg.alpha_init_scale)
    shuffle_rng, noise_rng = Rng(seed).split(2)
    opt_w = Adam(params, lr=cfg.lr_w)
    opt_a = Adam(arch.alpha, lr=cfg.lr_alpha)
    report = TrainReport()
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        tl, n = 0.0, 0
        for batch in _minibatches(train, cfg.batch_size, shuffle_rng):
            logits = supernet_forward(batch, arch, params, mcfg, rng=noise_rng)
            loss = cross_entropy(logits, batch.labels)
            _check_finite(loss.item(), "training", report)
            params.zero_grad()
            loss.backward()
            opt_w.step()
            tl += loss.item() * batch.num_graphs
            n += batch.num_graphs
        for p in arch.alpha.values():
            p.grad = None
        vl, vc, vn = 0.0, 0.0, 0
        for batch in _minibatches(val, cfg.batch_size, shuffle_rng):
            logits = supernet_forward(batch, arch, params, mcfg, rng=noise_rng)
            loss = cross_entropy(logits, batch.labels)
            _check_finite(loss.item(), "validation", report)
            for p in arch.alpha.values():
                p.grad = None
            loss.backward()
            opt_a.step()
            params.zero_grad()
            vl += loss.item() * batch.num_graphs
            vc += _accuracy(logits, batch.labels) * batch.num_graphs
            vn += batch.num_graphs
        report.record(tl / max(n, 1), vl / max(vn, 1), vc / max(vn, 1))
        log.debug("search epoch %d: train %.4f val %.4f acc %.3f", epoch + 1,
                  report.train_loss[-1], report.val_loss[-1], report.val_acc[-1])
    report.wall_time = time.perf_counter() - t0
    return arch, params, report


def pas_search(dataset, cfg):
    """Search a pooling architecture on ``dataset``.

    Returns ``(derived_arch, report, arch_params)``. The data is split
    80/10/10 (stratified); W is updated on the training part and the
    architecture logits on the validation part, alternating every epoch.
    """
    train_idx, val_idx, test_idx = stratified_split(dataset.labels, cfg.split, cfg.seed)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ValueError("search needs non-empty training and validation splits")
    train, val = dataset.subset(train_idx), dataset.subset(val_idx)
    mcfg = cfg.model_config(dataset.num_features, dataset.num_classes)
    t0 = time.perf_counter()
    best = None
    for r in range(max(1, cfg.search_repeats)):
        arch, params, report = _search_once(train, val, mcfg, cfg, cfg.seed + r)
        score = report.val_acc[-1] if report.val_acc else 0.0
        if best is None or score > best[0]:
            best = (score, arch, report)
    _, arch, report = best
    report.wall_time = time.perf_counter() - t0
    derived = arch.derive()
    report.final = {"arch": derived.to_json(), "probabilities":
                    {k: v.tolist() for k, v in arch.probabilities().items()},
                    "split_sizes": [len(train_idx), len(val_idx), len(test_idx)]}
    return derived, report, arch


# --------------------------------------------------------------------------
# retraining / evaluation

def init_params(arch, mcfg, sample_graph, seed):
    """Fresh parameters for ``arch``, created by one dry forward pass."""
    params = ParamStore(seed)
    with no_grad():
        discrete_forward(make_batch([sample_graph]), arch, params, mcfg)
    return params


def train_architecture(train, val, arch, cfg, num_features, num_classes, test=None, seed=None):
    """Train a discrete architecture from scratch; keep the best-validation epoch.

    Returns ``(params, report)``; ``report.final`` holds the selected epoch and
    its train/val (and test, if given) accuracy.
    """
    seed = cfg.seed if seed is None else seed
    mcfg = cfg.model_config(num_features, num_classes)
    params = init_params(arch, mcfg, train[0], seed)
    opt = Adam(params, lr=cfg.lr_w)
    shuffle_rng = Rng(seed).split(1)[0]
    report = TrainReport()
    best = (-1.0, np.inf, 0, params.snapshot())
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        tl = 0.0
        for batch in _minibatches(train, cfg.batch_size, shuffle_rng):
            logits = discrete_forward(batch, arch, params, mcfg)
            loss = cross_entropy(logits, batch.labels)
            _check_finite(loss.item(), "training", report)
            params.zero_grad()
            loss.backward()
            opt.step()
            tl += loss.item() * batch.num_graphs
        vl, va = evaluate(val, arch, params, mcfg, cfg.batch_size) if val else (np.nan, np.nan)
        report.record(tl / len(train), vl, va)
        if val and (va > best[0] or (va == best[0] and vl < best[1])):
            best = (va, vl, epoch + 1, params.snapshot())
    report.wall_time = time.perf_counter() - t0
    if cfg.epochs and val:
        params.restore(best[3])
    final = {"best_epoch": best[2] if val else cfg.epochs}
    final["train_acc"] = evaluate(train, arch, params, mcfg, cfg.batch_size)[1]
    final["val_acc"] = evaluate(val, arch, params, mcfg, cfg.batch_size)[1] if val else float("nan")
    if test is not None:
        final["test_acc"] = evaluate(test, arch, params, mcfg, cfg.batch_size)[1]
    report.final = final
    return params, report


@dataclass
class CVResult:
    folds: list
    mean: float
    std: float
    wall_time: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["fold", "train_acc", "val_acc", "test_acc"])
            for row in self.folds:
                w.writerow([row["fold"], repr(row["train_acc"]), repr(row["val_acc"]),
                            repr(row["test_acc"])])
            means = [float(np.mean([r[k] for r in self.folds]))
                     for k in ("train_acc", "val_acc", "test_acc")]
            w.writerow(["mean", *(repr(m) for m in means)])


def _run_fold(dataset, arch, cfg, fold, train_idx, test_idx):
    labels = dataset.labels
    inner_train, inner_val = stratified_split(labels[train_idx], (8 / 9, 1 / 9), cfg.seed + fold)
    tr, va = train_idx[inner_train], train_idx[inner_val]
    test_set = set(test_idx.tolist())
    if test_set & set(tr.tolist()) or test_set & set(va.tolist()):
        raise AssertionError(f"fold {fold}: test graphs leaked into training data")
    _, report = train_architecture(dataset.subset(tr), dataset.subset(va), arch, cfg,
                                   dataset.num_features, dataset.num_classes,
                                   test=dataset.subset(test_idx), seed=cfg.seed + fold)
    f = report.final
    log.info("fold %d: train %.3f val %.3f test %.3f", fold, f["train_acc"], f["val_acc"], f["test_acc"])
    return {"fold": fold, "train_acc": f["train_acc"], "val_acc": f["val_acc"],
            "test_acc": f["test_acc"]}


def cross_validate(dataset, arch, k, cfg):
    """Stratified k-fold test accuracy of ``arch``: mean and population std."""
    t0 = time.perf_counter()
    folds = stratified_kfold(dataset.labels, k, cfg.seed)
    jobs = [(dataset, arch, cfg, i, tr, te) for i, (tr, te) in enumerate(folds)]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            rows = list(ex.map(lambda a: _run_fold(*a), jobs))
    else:
        rows = [_run_fold(*a) for a in jobs]
    accs = np.array([r["test_acc"] for r in rows])
    return CVResult(rows, float(accs.mean()), float(accs.std()), time.perf_counter() - t0)


def sample_architecture(rng, layers, pins=None):
    """Uniform sample per site; pinned sites keep their kind."""
    pins = parse_pins(pins, layers)
    choices = {}
    for site in site_names(layers):
        enum_cls = site_enum(site)
        choices[site] = pins[site] if site in pins else enum_cls(int(rng.integers(len(enum_cls))))
    return DerivedArch.from_choices(choices, layers)


def random_search(dataset, cfg, n):
    """Train ``n`` uniformly sampled architectures; return the best by validation accuracy.

    Returns ``(best_arch, trials, wall_time)`` where ``trials`` lists every
    sampled architecture with its validation accuracy.
    """
    if n < 1:
        raise ValueError("random search needs at least one trial")
    t0 = time.perf_counter()
    train_idx, val_idx, _ = stratified_split(dataset.labels, cfg.split, cfg.seed)
    train, val = dataset.subset(train_idx), dataset.subset(val_idx)
    rng = Rng(cfg.seed).split(1)[0]
    archs = [sample_architecture(rng, cfg.layers, cfg.pins) for _ in range(n)]

    def trial(i):
        _, report = train_architecture(train, val, archs[i], cfg, dataset.num_features,
                                       dataset.num_classes, seed=cfg.seed + i)
        return {"trial": i, "arch": archs[i], "val_acc": report.final["val_acc"],
                "wall_time": report.wall_time}

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as ex:
            trials = list(ex.map(trial, range(n)))
    else:
        trials = [trial(i) for i in range(n)]
    best = max(trials, key=lambda t: (t["val_acc"], -t["trial"]))
    return best["arch"], trials, time.perf_counter() - t0
