"""
Report emission: canonical JSON, CSV tables and markdown.

JSON output uses sorted keys and writes every float with exactly 6 decimals,
so identical results always produce byte-identical files.
"""

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from src.analysis.aggregate import (
    ResponsibilityTable,
    category_responsibility,
    fr_std,
    topk_appearance,
)
from src.analysis.model import Feature
from src.analysis.search import ProblemResult
from src.errors import ParseError

logger = logging.getLogger(__name__)

FORMATS = ("json", "csv", "markdown")
FLOAT_DIGITS = 6


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    title: str = ""

    @classmethod
    def from_dicts(cls, rows: Iterable[Mapping], columns: Sequence[str], title: str = "") -> "Table":
        return cls(tuple(columns), tuple(tuple(r[c] for c in columns) for r in rows), title)


@dataclass(frozen=True)
class Report:
    """One command's output: a JSON payload plus the tables rendered to CSV and markdown."""
    name: str
    payload: Mapping[str, Any]
    tables: Mapping[str, Table] = field(default_factory=dict)
    title: str = ""


def canonical(value: Any) -> Any:
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, float):
        rounded = round(value, FLOAT_DIGITS)
        return 0.0 if rounded == 0 else rounded
    if isinstance(value, Mapping):
        return {str(k): canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [canonical(v) for v in value]
    if isinstance(value, (set, frozenset)):
        return sorted(canonical(v) for v in value)
    if hasattr(value, "to_dict"):
        return canonical(value.to_dict())
    return str(value)


# floats travel through json.dumps as marked strings and are unquoted afterwards
_FLOAT_MARK = "\ue000"
_FLOAT_TOKEN = re.compile(rf'"{_FLOAT_MARK}(-?\d+\.\d+){_FLOAT_MARK}"')


def _mark_floats(value: Any) -> Any:
    if isinstance(value, float):
        return f"{_FLOAT_MARK}{value:.{FLOAT_DIGITS}f}{_FLOAT_MARK}"
    if isinstance(value, dict):
        return {k: _mark_floats(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_mark_floats(v) for v in value]
    return value


def dumps(value: Any) -> str:
    """Canonical JSON text: sorted keys, 2-space indent, floats fixed to 6 decimals."""
    text = json.dumps(_mark_floats(canonical(value)), sort_keys=True, indent=2, ensure_ascii=False)
    return _FLOAT_TOKEN.sub(r"\1", text) + "\n"


def _cell(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.{FLOAT_DIGITS}f}"
    if isinstance(value, (list, tuple)):
        return " ".join(_cell(v) for v in value)
    return "" if value is None else str(value)


def write_json(value: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(value), encoding="utf-8")
    return path


def write_csv(table: Table, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])
    return path


def render_markdown(report: Report) -> str:
    lines = [f"# {report.title or report.name}", ""]
    for table in report.tables.values():
        if table.title:
            lines += [f"## {table.title}", ""]
        lines.append("| " + " | ".join(table.columns) + " |")
        lines.append("|" + "|".join("---" for _ in table.columns) + "|")
        for row in table.rows:
            lines.append("| " + " | ".join(_cell(v) for v in row) + " |")
        lines.append("")
    return "\n".join(lines)


def emit_report(report: Report, fmt: str, out_dir: Path) -> list[Path]:
    """
    Write a report in one format.

    Args:
        report: What to write
        fmt: json, csv or markdown
        out_dir: Output directory (created if missing)

    Returns:
        Paths written. CSV writes one file per table.

    Raises:
        ValueError: unknown format
        OSError: the files could not be written
    """
    if fmt not in FORMATS:
        raise ValueError(f"Unknown report format {fmt!r}; expected one of {FORMATS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if fmt == "json":
        paths = [write_json(report.payload, out_dir / f"{report.name}.json")]
    elif fmt == "csv":
        if len(report.tables) == 1:
            paths = [write_csv(next(iter(report.tables.values())), out_dir / f"{report.name}.csv")]
        else:
            paths = [write_csv(t, out_dir / f"{report.name}_{key}.csv") for key, t in report.tables.items()]
    else:
        path = out_dir / f"{report.name}.md"
        path.write_text(render_markdown(report), encoding="utf-8")
        paths = [path]

    for p in paths:
        logger.info(f"Wrote {p}")
    return paths


def analysis_report(results: Sequence[ProblemResult], config: Optional[Mapping] = None, name: str = "results") -> Report:
    records = [r.to_dict() for r in sorted(results, key=lambda r: r.problem_id)]
    rows = tuple(
        (
            r["problem_id"],
            ";".join("+".join(s) for s in r["important_sets"]),
            ";".join("+".join(s) for s in r["unverifiable"]),
            r["stats"].get("executions_used", 0),
            r["source"],
        )
        for r in records
    )
    payload = {"results": records}
    if config is not None:
        payload["config"] = config
    return Report(
        name=name,
        payload=payload,
        tables={
            "results": Table(
                ("problem_id", "important_sets", "unverifiable", "executions_used", "source"),
                rows,
                "Important feature sets",
            )
        },
        title="Analysis results",
    )


def rank_report(
    table: ResponsibilityTable,
    features: Iterable[Feature],
    top_k: int = 5,
    normalization: str = "max",
    settings: Optional[Mapping[str, ResponsibilityTable]] = None,
) -> Report:
    """FR ranking, length contribution, top-k appearance and category roll-up for one table."""
    features = list(features)
    std = fr_std(table, normalization) if len(table.fr) >= 2 else 0.0
    appearance = topk_appearance(settings if settings else {"all": table}, min(top_k, len(table.ranking)))
    categories = category_responsibility(table, features)

    payload = {
        "ranking": table.rows(),
        "by_length_contribution": {str(k): v for k, v in sorted(table.by_length_contribution.items())},
        "fr_std": std,
        "normalization": normalization,
        "topk_appearance": appearance,
        "top_k": top_k,
        "category_responsibility": categories,
    }
    tables = {
        "ranking": Table.from_dicts(table.rows(), ("feature_id", "fr", "normalized_fr", "rank"), "FR ranking"),
        "length": Table(
            ("length", "contribution_percent"),
            tuple((k, v) for k, v in sorted(table.by_length_contribution.items())),
            "Contribution by combination length",
        ),
        "topk": Table(
            ("feature_id", "count"),
            tuple(appearance.items()),
            f"Appearance in top-{top_k}",
        ),
        "category": Table(
            ("category", "fr"),
            tuple(categories.items()),
            "Responsibility by category",
        ),
    }
    return Report(name="ranking", payload=payload, tables=tables, title=f"Feature responsibility (std {std:.4f})")


def load_results(path: Path) -> list[ProblemResult]:
    """Read the result records written by analyze or oracle."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ParseError(f"Cannot read results file {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"Invalid JSON in results file {path}: {e.msg}", line=e.lineno) from e
    try:
        records = data["results"] if isinstance(data, dict) else data
        return [ProblemResult.from_dict(r) for r in records]
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"Malformed result record in {path}: {e}", field="results") from e
