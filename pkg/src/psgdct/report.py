"""Rendering of cross-validation results: text tables, CSV, JSON and a figure."""

import csv
import io
from pathlib import Path

import numpy as np

from .formats import REPORT_VERSION, dump_json

BASELINE = "none"


def _describe(label):
    if label == BASELINE:
        return "none (no DCT block)"
    return f"{label} (after block {label.split('@')[1]})"


def fold_table(report, title=None):
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'fold':>4}  {'n_test':>6}  {'n_pos':>5}  {'accuracy':>8}  {'auc':>8}")
    for f in report.folds:
        lines.append(
            f"{f['fold']:>4}  {f['n_test']:>6}  {f['n_pos']:>5}  {f['accuracy']:>8.4f}  {f['auc']:>8.4f}"
        )
    lines.append(
        f"{'mean':>4}  {'':>6}  {'':>5}  {report.mean_accuracy:>8.4f}  {report.mean_auc:>8.4f}"
        f"  (auc std {report.std_auc:.4f})"
    )
    return "\n".join(lines) + "\n"


def _deltas(reports):
    base = reports.get(BASELINE)
    out = {}
    for label, rep in reports.items():
        if base is None or label == BASELINE:
            out[label] = None
        else:
            out[label] = {
                "accuracy": rep.mean_accuracy - base.mean_accuracy,
                "auc": rep.mean_auc - base.mean_auc,
            }
    return out


def depth_table(reports):
    """Accuracy and AUC per insertion depth, with the change against ``none``."""
    deltas = _deltas(reports)
    head = f"{'Model':<24}{'Accuracy (%)':>14}{'AUC (%)':>10}{'AUC std':>10}{'dAcc':>9}{'dAUC':>9}"
    lines = [head, "-" * len(head)]
    for label, rep in reports.items():
        d = deltas[label]
        da = f"{100 * d['accuracy']:+9.2f}" if d else f"{'':>9}"
        du = f"{100 * d['auc']:+9.2f}" if d else f"{'':>9}"
        lines.append(
            f"{_describe(label):<24}{100 * rep.mean_accuracy:>14.2f}{100 * rep.mean_auc:>10.2f}"
            f"{100 * rep.std_auc:>10.2f}{da}{du}"
        )
    return "\n".join(lines) + "\n"


def report_csv(reports):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "fold", "n_test", "n_pos", "accuracy", "auc"])
    for label, rep in reports.items():
        for f in rep.folds:
            w.writerow([label, f["fold"], f["n_test"], f["n_pos"], repr(f["accuracy"]), repr(f["auc"])])
        w.writerow([label, "mean", "", "", repr(rep.mean_accuracy), repr(rep.mean_auc)])
    return buf.getvalue()


def report_dict(reports, run=None):
    return {
        "format_version": REPORT_VERSION,
        "run": run or {},
        "models": {label: rep.to_dict() for label, rep in reports.items()},
        "delta_vs_none": _deltas(reports),
    }


def roc_points(scores, labels):
    """ROC curve vertices (fpr, tpr), grouping tied scores into one step."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(int)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = np.cumsum(1 - y)[last]
    tpr = np.r_[0.0, tp / max(y.sum(), 1)]
    fpr = np.r_[0.0, fp / max((1 - y).sum(), 1)]
    return fpr, tpr


def plot_reports(reports, path):
    """Two panels: mean accuracy/AUC per model, and pooled out-of-fold ROC curves."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = list(reports)
    acc = [100 * reports[k].mean_accuracy for k in labels]
    auc = [100 * reports[k].mean_auc for k in labels]
    auc_sd = [100 * reports[k].std_auc for k in labels]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    x = np.arange(len(labels))
    ax1.bar(x - 0.2, acc, width=0.4, label="accuracy")
    ax1.bar(x + 0.2, auc, width=0.4, yerr=auc_sd, capsize=3, label="AUC")
    ax1.set_xticks(x)
    ax1.set_xticklabels(labels)
    ax1.set_ylim(0, 100)
    ax1.set_ylabel("%")
    ax1.legend(loc="lower right", frameon=False)

    for k in labels:
        rep = reports[k]
        if rep.scores is None:
            continue
        fpr, tpr = roc_points(rep.scores, rep.labels)
        ax2.plot(fpr, tpr, label=f"{k} ({100 * rep.mean_auc:.1f})")
    ax2.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
    ax2.set_xlabel("false positive rate")
    ax2.set_ylabel("true positive rate")
    ax2.legend(loc="lower right", frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def write_reports(reports, out_dir, run=None, figure=True):
    """Write ``report.txt``, ``report.csv``, ``report.json`` and ``report.png``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = [depth_table(reports), ""]
    for label, rep in reports.items():
        text.append(fold_table(rep, title=f"[{label}]"))
    (out / "report.txt").write_text("\n".join(text), encoding="utf-8")
    (out / "report.csv").write_text(report_csv(reports), encoding="utf-8")
    dump_json(report_dict(reports, run), out / "report.json")
    if figure:
        plot_reports(reports, out / "report.png")
    return out
