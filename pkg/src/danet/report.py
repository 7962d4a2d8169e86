"""Report emission: delimited tables, JSON summaries, and rendered figures.

All writers go through a write-then-rename so consumers never observe a
partially written file.
"""

import json
import os

import numpy as np


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _cell(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def format_table(columns: list, rows: list) -> str:
    lines = ["\t".join(columns)]
    lines.extend("\t".join(_cell(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def layer_report_rows(reports, best_layer=None):
    rows = []
    for rep in reports:
        rows.append([rep.layer_index, rep.train_accuracy,
                     rep.validation_accuracy, rep.train_residual,
                     rep.intra_distance, rep.inter_distance,
                     1 if rep.layer_index == best_layer else 0])
    return rows


LAYER_COLUMNS = ["layer", "train_accuracy", "validation_accuracy",
                 "train_residual", "intra_distance", "inter_distance", "best"]


def write_layer_report(path, reports, best_layer=None) -> None:
    atomic_write_text(path, format_table(LAYER_COLUMNS,
                                         layer_report_rows(reports,
                                                           best_layer)))


DYNAMICS_COLUMNS = ["layer", "w_phys", "b_phys", "w_theo", "b_theo", "gap"]


def dynamics_rows(records):
    return [[r.layer_index, r.w_phys, r.b_phys, r.w_theo, r.b_theo,
             r.b_phys - r.w_phys] for r in records]


def write_dynamics_table(path, records) -> None:
    atomic_write_text(path, format_table(DYNAMICS_COLUMNS,
                                         dynamics_rows(records)))


SPANGAIN_COLUMNS = ["layer", "column", "in_span", "orthogonality_neg",
                    "orthogonality_nonneg", "residual_before",
                    "residual_after", "monotone_ok"]


def write_spangain_table(path, rows) -> None:
    atomic_write_text(path, format_table(SPANGAIN_COLUMNS, rows))


# ---------------------------------------------------------------------------
# Figures (rendered next to the delimited tables)


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_layer_figure(path, reports, title: str = "") -> None:
    """Accuracy and residual across layers."""
    plt = _pyplot()
    layers = [r.layer_index for r in reports]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(layers, [r.train_accuracy for r in reports], "o-",
            label="train accuracy")
    if any(r.validation_accuracy is not None for r in reports):
        ax.plot(layers, [r.validation_accuracy for r in reports], "s-",
                label="validation accuracy")
    ax.set_xlabel("layer")
    ax.set_ylabel("accuracy")
    ax.set_xticks(layers)
    ax.set_ylim(0.0, 1.02)
    ax2 = ax.twinx()
    ax2.plot(layers, [r.train_residual for r in reports], "^--", color="gray",
             label="train residual")
    ax2.set_ylabel("residual norm")
    handles, labels = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(handles + h2, labels + l2, loc="best", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_dynamics_figure(path, records, test_records=None,
                           title: str = "") -> None:
    """Measured vs model-predicted intra/interclass distances per layer."""
    plt = _pyplot()
    panels = [("train", records)]
    if test_records:
        panels.append(("test", test_records))
    fig, axes = plt.subplots(1, len(panels), figsize=(6 * len(panels), 4),
                             squeeze=False)
    for ax, (name, recs) in zip(axes[0], panels):
        layers = [r.layer_index for r in recs]
        ax.plot(layers, [r.w_phys for r in recs], "o-", color="tab:blue",
                label="intraclass (measured)")
        ax.plot(layers, [r.w_theo for r in recs], "o--", color="tab:cyan",
                label="intraclass (model)")
        ax.plot(layers, [r.b_phys for r in recs], "s-", color="tab:red",
                label="interclass (measured)")
        ax.plot(layers, [r.b_theo for r in recs], "s--", color="tab:orange",
                label="interclass (model)")
        ax.set_xlabel("layer")
        ax.set_ylabel("expected squared distance")
        ax.set_xticks(layers)
        ax.set_title(f"{title} {name}".strip())
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_eval_figure(path, layer_accuracies, final_accuracy=None,
                       title: str = "") -> None:
    """Per-layer evaluation accuracy."""
    plt = _pyplot()
    layers = np.arange(1, len(layer_accuracies) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(layers, layer_accuracies, "o-", label="layer accuracy")
    if final_accuracy is not None:
        ax.axhline(final_accuracy, color="tab:red", linestyle="--",
                   label="final classifier")
    ax.set_xlabel("layer")
    ax.set_ylabel("accuracy")
    ax.set_xticks(layers)
    ax.set_ylim(0.0, 1.02)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
