"""Result tables, confusion matrices, ROC point files and plots."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

from ..errors import UsageError
from ..metrics import write_report_csv
from .pipeline import CLASSIFIERS, RoundResult

FORMATS = ("json", "csv", "png", "all")


def _metric_rows(results: Sequence[RoundResult]) -> list[dict]:
    rows = []
    for r in results:
        for clf in CLASSIFIERS:
            rows.append({"round": f"R{r.round_index}", "classifier": clf, **r.headline(clf)})
    return rows


def _per_class_rows(results: Sequence[RoundResult]) -> list[dict]:
    rows = []
    for r in results:
        for clf in CLASSIFIERS:
            rep = r.classifiers[clf].report
            for code, m in rep.per_class.items():
                rows.append({"round": f"R{r.round_index}", "classifier": clf, "class": code,
                             "precision": m.precision, "recall": m.recall, "f1": m.f1,
                             "accuracy": rep.accuracy})
    return rows


def _plots(results: Sequence[RoundResult], out: Path) -> list[Path]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    for r in results:
        if not r.binary or r.classifiers["A"].roc is None:
            continue
        fig, ax = plt.subplots(figsize=(4, 4))
        for clf in CLASSIFIERS:
            roc = r.classifiers[clf].roc
            ax.plot(roc.fpr, roc.tpr, label=f"{clf} (AUC {roc.auc:.3f})")
        ax.plot([0, 1], [0, 1], color="grey", linestyle=":", linewidth=0.8)
        ax.set_xlabel("False positive rate")
        ax.set_ylabel("True positive rate")
        ax.set_title(f"ROC R{r.round_index}")
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        path = out / f"roc_R{r.round_index}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)

    metrics = ["accuracy"] + (["auc"] if all(r.binary for r in results) else [])
    for metric in metrics:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        width = 0.8 / len(CLASSIFIERS)
        xs = range(len(results))
        for j, clf in enumerate(CLASSIFIERS):
            ax.bar([x + j * width for x in xs], [100 * r.headline(clf)[metric] for r in results], width, label=clf)
        ax.set_xticks([x + width for x in xs], [f"R{r.round_index}" for r in results])
        ax.set_ylabel(f"{metric} (%)")
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out / f"{metric}_bars.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)
    return written


def write_report(results: Sequence[RoundResult], out: str | Path, fmt: str = "all") -> list[Path]:
    if fmt not in FORMATS:
        raise UsageError(f"unknown report format {fmt!r}; choose from {FORMATS}")
    if not results:
        raise UsageError("no results to report")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("json", "all"):
        path = out / "metrics.json"
        payload = {
            "rounds": [
                {"round": r.round_index, "test_counts": r.test_counts,
                 "classifiers": {clf: {"headline": r.headline(clf), **r.classifiers[clf].to_dict()}
                                 for clf in CLASSIFIERS},
                 "config": r.config}
                for r in results
            ]
        }
        path.write_text(json.dumps(payload, indent=1))
        written.append(path)
    if fmt in ("csv", "all"):
        write_report_csv(_metric_rows(results), out / "metrics.csv")
        write_report_csv(_per_class_rows(results), out / "per_class.csv")
        written += [out / "metrics.csv", out / "per_class.csv"]
        for r in results:
            for clf in CLASSIFIERS:
                c = r.classifiers[clf]
                path = out / f"confusion_R{r.round_index}_{clf}.csv"
                c.confusion.write_csv(path)
                written.append(path)
                if c.roc is not None:
                    path = out / f"roc_R{r.round_index}_{clf}.csv"
                    with path.open("w", newline="") as fh:
                        w = csv.writer(fh)
                        w.writerow(["fpr", "tpr", "threshold"])
                        for (fpr, tpr), th in zip(c.roc.points, c.roc.thresholds):
                            w.writerow([repr(fpr), repr(tpr), repr(float(th))])
                    written.append(path)
    if fmt in ("png", "all"):
        written += _plots(results, out)
    return written
