"""Stratified k-fold cross-validation with accuracy and ROC AUC."""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import StratificationError, TrainingError, UndefinedMetricError
from .network import Hyper, train

log = logging.getLogger(__name__)


def roc_auc(scores, labels):
    """Mann-Whitney AUC: P(score+ > score-) + 0.5 * P(tie), over all pairs.

    Pair counts are accumulated as integers, so the result is the exact
    ratio rounded once.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.shape != y.shape or s.ndim != 1:
        raise UndefinedMetricError("scores and labels must be 1-D and equally long")
    pos, neg = s[y == 1], np.sort(s[y == 0])
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC needs both classes")
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    greater = int(below.sum())
    ties = int((upto - below).sum())
    return (greater + 0.5 * ties) / (pos.size * neg.size)


def accuracy(scores, labels, threshold=0.5):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    if s.size == 0:
        raise UndefinedMetricError("accuracy of an empty set")
    return float(np.mean((s >= threshold).astype(int) == y))


def stratified_kfold(labels, k=10, seed=0):
    """Fold index per record; each class is dealt round-robin after a seeded shuffle.

    The second class continues the deal where the first stopped, so fold
    sizes differ by at most one as well.
    """
    y = np.asarray(labels).astype(int)
    if k < 2:
        raise StratificationError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng([seed, 31337])
    folds = np.full(y.size, -1, dtype=int)
    offset = 0
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise StratificationError(f"class {cls} has {idx.size} members, fewer than k={k}")
        idx = idx[rng.permutation(idx.size)]
        folds[idx] = (offset + np.arange(idx.size)) % k
        offset = (offset + idx.size) % k
    if np.any(folds < 0):
        raise StratificationError("labels must be 0 or 1")
    return folds


@dataclass
class FoldReport:
    folds: list
    scores: np.ndarray = field(default=None, repr=False)
    labels: np.ndarray = field(default=None, repr=False)

    @property
    def mean_accuracy(self):
        return float(np.mean([f["accuracy"] for f in self.folds]))

    @property
    def mean_auc(self):
        return float(np.mean([f["auc"] for f in self.folds]))

    @property
    def std_auc(self):
        return float(np.std([f["auc"] for f in self.folds]))

    def to_dict(self):
        return {
            "folds": self.folds,
            "aggregate": {
                "mean_accuracy": self.mean_accuracy,
                "mean_auc": self.mean_auc,
                "std_auc": self.std_auc,
            },
        }


def fold_seed(seed, fold):
    return int(seed) * 1000 + int(fold)


def cross_validate(images, static, labels, config, hyper=Hyper(), k=10, seed=0):
    """Train on k-1 folds, score the held-out fold, for every fold.

    Each fold's model seed is derived from ``seed`` and the fold index, so
    the whole run is reproducible.  ``train`` holds out its own validation
    split for early stopping.
    """
    labels = np.asarray(labels).astype(int)
    folds = stratified_kfold(labels, k, seed)
    scores = np.full(labels.size, np.nan)
    rows = []
    for f in range(k):
        test = folds == f
        cfg = replace(config, seed=fold_seed(seed, f))
        try:
            ckpt = train(images[~test], static[~test], labels[~test], cfg, hyper)
        except TrainingError as exc:
            raise TrainingError(exc.step, f"fold {f}: {exc}") from exc
        s = ckpt.predict(images[test], static[test])
        scores[test] = s
        rows.append({
            "fold": f,
            "accuracy": accuracy(s, labels[test]),
            "auc": roc_auc(s, labels[test]),
            "n_test": int(test.sum()),
            "n_pos": int(labels[test].sum()),
            "epochs": ckpt.metadata["epochs"],
        })
        log.info("fold %d: acc %.4f auc %.4f", f, rows[-1]["accuracy"], rows[-1]["auc"])
    return FoldReport(rows, scores, labels)


def depth_label(depth):
    return "none" if depth is None else f"DCT@{depth}"


def sweep_depths(images, static, labels, config, depths=(3, 4, 5, 6, None), hyper=Hyper(), k=10, seed=0):
    """Cross-validate the same corpus once per DCT insertion depth."""
    return {
        depth_label(d): cross_validate(images, static, labels, replace(config, dct_depth=d), hyper, k, seed)
        for d in depths
    }
