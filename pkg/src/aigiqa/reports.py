"""Evaluation reports: config hashing, serialization, tables, and plots.

Timestamps honor SOURCE_DATE_EPOCH so reproducible runs can emit
byte-identical report files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from .errors import EmptyReportList, UnwritablePath

VARIANT_ORDER = (
    "full",
    "no_regression",
    "backbone_swap",
    "context_length",
    "category_length",
    "category_type",
)

_FORMATS = ("json", "csv", "markdown", "plot")


def config_hash(config: dict) -> str:
    """SHA-256 over the canonical JSON form of a full configuration."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def current_timestamp() -> str:
    """ISO timestamp; pinned by SOURCE_DATE_EPOCH when set."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        dt = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        dt = datetime.now(tz=timezone.utc)
    return dt.isoformat()


@dataclass
class EvalReport:
    dataset: str
    target_dim: str
    plcc: float
    srcc: float
    krcc: float
    variant: str = "full"
    setting: str = ""
    config_hash: str = ""
    timestamp: str = ""

    def __post_init__(self):
        if not self.timestamp:
            self.timestamp = current_timestamp()
        for name in ("plcc", "srcc", "krcc"):
            value = getattr(self, name)
            if not (-1.0 <= value <= 1.0):
                raise ValueError(f"{name}={value} outside [-1, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        return cls(
            dataset=payload["dataset"],
            target_dim=payload["target_dim"],
            plcc=float(payload["plcc"]),
            srcc=float(payload["srcc"]),
            krcc=float(payload["krcc"]),
            variant=payload.get("variant", "full"),
            setting=payload.get("setting", ""),
            config_hash=payload.get("config_hash", ""),
            timestamp=payload.get("timestamp", ""),
        )


def _sort_key(report: EvalReport):
    try:
        rank = VARIANT_ORDER.index(report.variant)
    except ValueError:
        rank = len(VARIANT_ORDER)
    return (rank, report.setting, report.dataset, report.target_dim)


def sorted_reports(reports: list[EvalReport]) -> list[EvalReport]:
    return sorted(reports, key=_sort_key)


def reports_to_json(reports: list[EvalReport]) -> str:
    return json.dumps([r.to_dict() for r in sorted_reports(reports)], indent=2, sort_keys=True)


def reports_to_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    fields = ["variant", "setting", "dataset", "target_dim", "plcc", "srcc", "krcc",
              "config_hash", "timestamp"]
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in sorted_reports(reports):
        row = r.to_dict()
        for name in ("plcc", "srcc", "krcc"):
            row[name] = repr(row[name])  # full precision so parsing round-trips
        writer.writerow(row)
    return buf.getvalue()


def reports_to_markdown(reports: list[EvalReport]) -> str:
    lines = [
        "| Variant | Setting | Dataset | Dim | PLCC | SRCC | KRCC |",
        "|---|---|---|---|---|---|---|",
    ]
    for r in sorted_reports(reports):
        lines.append(
            f"| {r.variant} | {r.setting} | {r.dataset} | {r.target_dim} "
            f"| {r.plcc:.4f} | {r.srcc:.4f} | {r.krcc:.4f} |"
        )
    return "\n".join(lines) + "\n"


def plot_reports(reports: list[EvalReport], out_path: str | Path) -> None:
    """Bar chart of PLCC/SRCC/KRCC per variant, written as an image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    reports = sorted_reports(reports)
    labels = [f"{r.variant}\n{r.setting}" if r.setting else r.variant for r in reports]
    x = range(len(reports))
    width = 0.27
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(reports)), 4))
    for offset, (name, color) in enumerate(
        [("plcc", "#4C72B0"), ("srcc", "#55A868"), ("krcc", "#C44E52")]
    ):
        values = [getattr(r, name) for r in reports]
        ax.bar([i + (offset - 1) * width for i in x], values, width, label=name.upper(), color=color)
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("correlation")
    ax.set_ylim(-1.0, 1.0)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)


def emit_report(
    reports: list[EvalReport],
    fmt: str,
    out_path: str | Path,
) -> Path:
    """Serialize reports deterministically in one of json/csv/markdown/plot."""
    if not reports:
        raise EmptyReportList("no reports to emit")
    if fmt not in _FORMATS:
        raise ValueError(f"unknown format {fmt!r}; choose from {_FORMATS}")
    out_path = Path(out_path)
    try:
        out_path.parent.mkdir(parents=True, exist_ok=True)
        if fmt == "json":
            out_path.write_text(reports_to_json(reports), encoding="utf-8")
        elif fmt == "csv":
            out_path.write_text(reports_to_csv(reports), encoding="utf-8")
        elif fmt == "markdown":
            out_path.write_text(reports_to_markdown(reports), encoding="utf-8")
        else:
            plot_reports(reports, out_path)
    except OSError as exc:
        raise UnwritablePath(f"cannot write {out_path}: {exc}") from exc
    return out_path


def parse_reports(path: str | Path) -> list[EvalReport]:
    """Read reports back from a .json or .csv file."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return [EvalReport.from_dict(item) for item in json.loads(text)]
    if path.suffix == ".csv":
        reader = csv.DictReader(io.StringIO(text))
        return [EvalReport.from_dict(row) for row in reader]
    raise ValueError(f"cannot parse reports from {path.suffix!r} files")
