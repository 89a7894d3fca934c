"""Result serialization and report rendering (CSV, markdown, figures)."""

from __future__ import annotations

import io
from pathlib import Path

from .errors import ConfigError, DataError
from .metrics import RunResult, round1

CSV_HEADER = "participant,run,dataset,les,kf,dar,mean_j,mean_dsc,frames_scored"

ISOLATION_COMBOS = [
    (False, False, False),
    (True, False, False),
    (False, True, False),
    (False, False, True),
]
COMBINATION_COMBOS = [
    (False, False, True),
    (True, True, False),
    (True, False, True),
    (False, True, True),
    (True, True, True),
]


def _sort_key(r: RunResult):
    return (r.participant, r.run, r.dataset, r.les, r.kf, r.dar)


def results_csv(results: list[RunResult]) -> str:
    """Full-precision delimited output, deterministically ordered."""
    buf = io.StringIO()
    buf.write(CSV_HEADER + "\n")
    for r in sorted(results, key=_sort_key):
        buf.write(
            f"{r.participant},{r.run},{r.dataset},{int(r.les)},{int(r.kf)},"
            f"{int(r.dar)},{r.mean_j!r},{r.mean_dsc!r},{r.frames_scored}\n"
        )
    return buf.getvalue()


def parse_results_csv(text: str) -> list[RunResult]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise DataError(f"unexpected results header {lines[:1]!r}")
    out = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 9:
            raise DataError(f"bad results row {ln!r}")
        out.append(
            RunResult(
                participant=parts[0],
                run=parts[1],
                dataset=parts[2],
                les=bool(int(parts[3])),
                kf=bool(int(parts[4])),
                dar=bool(int(parts[5])),
                mean_j=float(parts[6]),
                mean_dsc=float(parts[7]),
                frames_scored=int(parts[8]),
            )
        )
    return out


def _collapse(results: list[RunResult]) -> dict:
    """(participant, dataset, flags) -> (mean_j, mean_dsc) averaged over runs."""
    acc: dict[tuple, list[RunResult]] = {}
    for r in results:
        if r.run == "mean":
            continue
        acc.setdefault((r.participant, r.dataset, r.flags), []).append(r)
    return {
        k: (
            sum(r.mean_j for r in v) / len(v),
            sum(r.mean_dsc for r in v) / len(v),
        )
        for k, v in acc.items()
    }


def _fmt_cell(value: float, best: bool, delta: float | None) -> str:
    s = f"{round1(value):.1f}"
    if best and delta is not None:
        s = f"{s} (+{round1(delta):.1f})" if delta > 0 else s
    return f"**{s}**" if best else s


def render_tables(results: list[RunResult], mode: str) -> str:
    """Markdown report mirroring the isolation / combination layouts:
    per-participant blocks with method flag columns, J and DSC per
    dataset, a final mean block, best values bolded with absolute
    deltas against the block's reference row."""
    if mode == "isolation":
        combos = ISOLATION_COMBOS
    elif mode == "combination":
        combos = COMBINATION_COMBOS
    else:
        raise ConfigError(f"unknown report mode {mode!r}")
    baseline_flags = combos[0]

    table = _collapse(results)
    if not table:
        raise DataError("no results to report")
    participants = sorted({p for p, _, _ in table})
    datasets = sorted({d for _, d, _ in table})

    header = ["Participant", "LES", "KF", "DAR"]
    for ds in datasets:
        header += [f"{ds} J", f"{ds} DSC"]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "---|" * len(header),
    ]

    def block(name: str, lookup) -> None:
        # lookup(flags, ds) -> (j, dsc) or None
        values = {
            (flags, ds, m): v
            for flags in combos
            for ds in datasets
            for m in (0, 1)
            if (v := _cell(lookup, flags, ds, m)) is not None
        }
        for flags in combos:
            row = [name if flags == combos[0] else ""]
            row += ["✓" if f else "✗" for f in flags]
            for ds in datasets:
                for m in (0, 1):
                    v = values.get((flags, ds, m))
                    if v is None:
                        row.append("-")
                        continue
                    col = [
                        values[(f, ds, m)] for f in combos if (f, ds, m) in values
                    ]
                    base = values.get((baseline_flags, ds, m))
                    best = v >= max(col) - 1e-12
                    delta = None if base is None else v - base
                    row.append(_fmt_cell(v, best, delta))
            lines.append("| " + " | ".join(row) + " |")

    def _cell(lookup, flags, ds, m):
        v = lookup(flags, ds)
        return None if v is None else v[m]

    for p in participants:
        block(p, lambda flags, ds, p=p: table.get((p, ds, flags)))

    def mean_lookup(flags, ds):
        vals = [table[(p, ds, flags)] for p in participants if (p, ds, flags) in table]
        if not vals:
            return None
        return (
            sum(v[0] for v in vals) / len(vals),
            sum(v[1] for v in vals) / len(vals),
        )

    block("p̄", mean_lookup)
    return "\n".join(lines) + "\n"


def plot_results(results: list[RunResult], path: Path, mode: str = "isolation") -> None:
    """Bar chart of mean J per method combination, one group per dataset."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    combos = ISOLATION_COMBOS if mode == "isolation" else COMBINATION_COMBOS
    table = _collapse(results)
    datasets = sorted({d for _, d, _ in table})
    participants = sorted({p for p, _, _ in table})

    def mean_j(flags, ds):
        vals = [
            table[(p, ds, flags)][0] for p in participants if (p, ds, flags) in table
        ]
        return sum(vals) / len(vals) if vals else float("nan")

    labels = [
        "+".join(n for n, f in zip(("LES", "KF", "DAR"), flags) if f) or "baseline"
        for flags in combos
    ]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(datasets), 1)
    for k, ds in enumerate(datasets):
        xs = [i + k * width for i in range(len(combos))]
        ax.bar(xs, [mean_j(flags, ds) for flags in combos], width=width, label=ds)
    ax.set_xticks([i + width * (len(datasets) - 1) / 2 for i in range(len(combos))])
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("mean Jaccard (0-100)")
    ax.set_ylim(0, 100)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
