"""CSV and JSON export of run reports, with matching readers."""
from __future__ import annotations

import csv
import json
from pathlib import Path

from qlinksim.harness.metrics import PAIR_COLUMNS, REQUEST_COLUMNS, MetricsReport

QUEUE_COLUMNS = ("time_s", "queue_1", "queue_2", "queue_3")

_INT_COLUMNS = {"create_id", "num_pairs", "error", "pairs_ok", "seq", "outcome_a", "outcome_b", "queue_1", "queue_2",
                "queue_3"}
_STR_COLUMNS = {"origin", "cls", "kind", "status", "basis_a", "basis_b"}


def _cell(v):
    return "" if v is None else v


def _parse(col: str, raw: str):
    if raw == "":
        return None
    if col in _STR_COLUMNS:
        return raw
    if col in _INT_COLUMNS:
        return int(raw)
    return float(raw)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row[c]) for c in columns] if isinstance(row, dict) else [_cell(v) for v in row])


def _read_csv(path: Path, columns) -> list[dict]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != tuple(columns):
            raise ValueError(f"{path}: unexpected header {header}")
        return [{c: _parse(c, v) for c, v in zip(header, row)} for row in r]


def export(report: MetricsReport, outdir: str | Path, fmt: str = "csv") -> list[Path]:
    """Write ``report`` under ``outdir``; returns the files written."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / "report.json"
        path.write_text(json.dumps(report_to_dict(report), indent=1, sort_keys=True))
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    files = [out / "requests.csv", out / "pairs.csv", out / "queues.csv", out / "summary.json"]
    _write_csv(files[0], REQUEST_COLUMNS, report.requests)
    _write_csv(files[1], PAIR_COLUMNS, report.pairs)
    _write_csv(files[2], QUEUE_COLUMNS, report.queue_series)
    files[3].write_text(json.dumps({"seed": report.seed, "summary": report.summary,
                                    "invariants": report.invariants}, indent=1, sort_keys=True))
    return files


def load(outdir: str | Path) -> MetricsReport:
    """Read back a report written by :func:`export` in either format."""
    out = Path(outdir)
    if (out / "report.json").exists():
        return report_from_dict(json.loads((out / "report.json").read_text()))
    meta = json.loads((out / "summary.json").read_text())
    rep = MetricsReport(meta["seed"], summary=meta["summary"], invariants=meta["invariants"])
    rep.requests = _read_csv(out / "requests.csv", REQUEST_COLUMNS)
    rep.pairs = _read_csv(out / "pairs.csv", PAIR_COLUMNS)
    rep.queue_series = [tuple(r[c] for c in QUEUE_COLUMNS) for r in _read_csv(out / "queues.csv", QUEUE_COLUMNS)]
    return rep


def report_to_dict(report: MetricsReport) -> dict:
    return {"seed": report.seed, "summary": report.summary, "requests": report.requests, "pairs": report.pairs,
            "queue_series": [list(r) for r in report.queue_series], "invariants": report.invariants}


def report_from_dict(d: dict) -> MetricsReport:
    return MetricsReport(d["seed"], summary=d["summary"], requests=d["requests"], pairs=d["pairs"],
                         queue_series=[tuple(r) for r in d["queue_series"]], invariants=d["invariants"])
