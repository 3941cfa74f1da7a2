"""Deterministic SVG figures. Every ``<stem>.svg`` has a ``<stem>.tsv`` twin
holding exactly the plotted numbers."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"svg.hashsalt": "homnet", "svg.fonttype": "none", "font.size": 9}


def fmt(x) -> str:
    """TSV cell text; NaN and None become ``NA``."""
    if x is None:
        return "NA"
    if isinstance(x, (float, np.floating)):
        return "NA" if np.isnan(x) else repr(float(x))
    return str(x)


def write_tsv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(fmt(x) for x in row) + "\n")


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def heatmap(matrix, labels, title: str, path) -> None:
    """3x3 style grid; undefined cells are drawn blank and written NA."""
    path = Path(path)
    m = np.asarray(matrix, dtype=float)
    write_tsv(path.with_suffix(".tsv"), ["group", *labels],
              [[lab, *m[i]] for i, lab in enumerate(labels)])
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.2))
        im = ax.imshow(np.ma.masked_invalid(m), cmap="viridis")
        for i in range(m.shape[0]):
            for j in range(m.shape[1]):
                ax.text(j, i, "NA" if np.isnan(m[i, j]) else f"{m[i, j]:.2f}",
                        ha="center", va="center", color="w")
        ax.set_xticks(range(len(labels)), labels)
        ax.set_yticks(range(len(labels)), labels)
        ax.set_title(title)
        fig.colorbar(im, ax=ax)
        fig.tight_layout()
        _save(fig, path)


def histogram(bin_edges, series: dict[str, np.ndarray], title: str, path) -> None:
    path = Path(path)
    edges = np.asarray(bin_edges, dtype=float)
    names = list(series)
    write_tsv(path.with_suffix(".tsv"), ["bin_lo", "bin_hi", *names],
              [[edges[i], edges[i + 1], *(int(series[n][i]) for n in names)]
               for i in range(len(edges) - 1)])
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for n in names:
            ax.stairs(series[n], edges, label=n)
        ax.set_xlabel("profile dot product")
        ax.set_ylabel("edges")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def bars(names, means, errors, title: str, path, ylabel: str = "",
         columns=("name", "value", "std")) -> None:
    path = Path(path)
    header = list(columns[:2]) + ([columns[2]] if errors is not None else [])
    rows = [[n, float(m)] + ([float(errors[i])] if errors is not None else [])
            for i, (n, m) in enumerate(zip(names, means))]
    write_tsv(path.with_suffix(".tsv"), header, rows)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.7 * len(names)), 3.4))
        ax.bar(range(len(names)), means, yerr=errors, capsize=3)
        ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)
