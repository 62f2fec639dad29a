"""
Markdown reports: a fluent builder plus the audit, metrics, ablation and sweep layouts.
"""

from __future__ import annotations

import os
from collections.abc import Sequence
from pathlib import Path
from typing import Self

from pydantic import BaseModel, ConfigDict

from .consts import MAX_REPORT_SIZE
from .metrics import Metrics


def _cell(content: object) -> str:
    return str(content).replace("|", "\\|").replace("\n", " ")


def _percent(value: float) -> str:
    return f"{100 * value:.2f}%"


class Report:
    """
    Builds a Markdown document piece by piece.

    Example::

        Report().add_heading("Audit").add_table([["graph", "verdict"], ["pool", "clean"]])
    """

    def __init__(self) -> None:
        self._buffer: list[str] = []

    def add_raw(self, text: str, add_eol: bool = False) -> Self:
        self._buffer.append(text)
        if add_eol:
            self._buffer.append("\n")
        return self

    def add_eol(self) -> Self:
        return self.add_raw("\n")

    def add_heading(self, text: str, level: int = 1) -> Self:
        """
        :param level: 1-6; anything else is treated as 1
        """
        if level < 1 or level > 6:
            level = 1
        self._buffer.append(f"{'#' * level} {text}\n\n")
        return self

    def add_separator(self) -> Self:
        self._buffer.append("---\n\n")
        return self

    def add_quote(self, text: str) -> Self:
        self._buffer.append("".join(f"> {line}\n" for line in text.splitlines() or [""]) + "\n")
        return self

    def add_code_block(self, code: str, lang: str | None = None) -> Self:
        fence = "```"
        self._buffer.append(f"{fence}{lang or ''}\n{code.rstrip(chr(10))}\n{fence}\n\n")
        return self

    def add_list(self, items: Sequence[str], ordered: bool = False) -> Self:
        for i, item in enumerate(items, start=1):
            marker = f"{i}." if ordered else "-"
            self._buffer.append(f"{marker} {item}\n")
        self._buffer.append("\n")
        return self

    def add_table(self, rows: Sequence[Sequence[object]]) -> Self:
        """
        Adds a pipe table; the first row is the header.

        Pipes inside cells are escaped.
        """
        if not rows:
            return self
        header, *body = rows
        self._buffer.append("| " + " | ".join(_cell(c) for c in header) + " |\n")
        self._buffer.append("|" + "|".join(" --- " for _ in header) + "|\n")
        for row in body:
            self._buffer.append("| " + " | ".join(_cell(c) for c in row) + " |\n")
        self._buffer.append("\n")
        return self

    def clear(self) -> Self:
        self._buffer.clear()
        return self

    def stringify(self) -> str:
        return "".join(self._buffer)

    def is_empty(self) -> bool:
        return len(self._buffer) == 0

    def write(self, path: Path, overwrite: bool = True) -> Self:
        """
        Writes the document to `path`.

        :param overwrite: replace the file instead of appending to it
        :raises ValueError: if the document exceeds the maximum report size
        """
        content = self.stringify()
        if len(content.encode("utf-8")) > MAX_REPORT_SIZE:
            raise ValueError(
                f"Report exceeds maximum size of {MAX_REPORT_SIZE} bytes "
                f"({MAX_REPORT_SIZE // 1024} KiB)"
            )
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w" if overwrite else "a", encoding="utf-8") as f:
            f.write(content)
        return self

    def append_to_step_summary(self) -> bool:
        """
        Appends the document to the CI step summary file named by `GITHUB_STEP_SUMMARY`.

        :returns: False when the variable is not set
        """
        summary_file = os.environ.get("GITHUB_STEP_SUMMARY")
        if not summary_file:
            return False
        self.write(Path(summary_file), overwrite=False)
        return True


class ExternalCall(BaseModel):
    model_config = ConfigDict(frozen=True)

    caller: str
    callee: str

    def __str__(self) -> str:
        return f"{self.caller} → {self.callee}"


class PredictionRecord(BaseModel):
    """Machine-readable verdict for one graph."""

    model_config = ConfigDict(frozen=True)

    name: str
    verdict: str
    probability: float
    external_calls: list[ExternalCall]


def metrics_rows(named: Sequence[tuple[str, Metrics]]) -> list[list[str]]:
    rows: list[list[str]] = [["Model", "Accuracy", "Recall", "Precision", "F1"]]
    for name, m in named:
        rows.append(
            [name, _percent(m.accuracy), _percent(m.recall), _percent(m.precision), _percent(m.f1)]
        )
    return rows


class ReportTemplate:
    """Document layouts used by the command line."""

    @staticmethod
    def metrics_report(title: str, named: Sequence[tuple[str, Metrics]]) -> Report:
        report = Report().add_heading(title, 1)
        report.add_table(metrics_rows(named))
        counts: list[list[object]] = [["Model", "TP", "FP", "TN", "FN"]]
        counts.extend([name, m.tp, m.fp, m.tn, m.fn] for name, m in named)
        return report.add_heading("Confusion counts", 2).add_table(counts)

    @staticmethod
    def ablation_report(title: str, named: Sequence[tuple[str, Metrics]]) -> Report:
        """Structure-by-structure comparison; `named` rows are already averaged or pooled."""
        report = Report().add_heading(title, 1)
        rows = metrics_rows(named)
        rows[0][0] = "Structure"
        return report.add_table(rows)

    @staticmethod
    def sweep_report(title: str, rows: Sequence[tuple[float, int, Metrics]]) -> Report:
        table: list[list[object]] = [["Learning rate", "Hidden", "Accuracy", "F1"]]
        for learning_rate, hidden, m in rows:
            table.append([f"{learning_rate:g}", hidden, _percent(m.accuracy), _percent(m.f1)])
        return Report().add_heading(title, 1).add_table(table)

    @staticmethod
    def audit_report(records: Sequence[PredictionRecord]) -> Report:
        report = Report().add_heading("Unchecked external call audit", 1)
        flagged = sum(1 for r in records if r.verdict == "vulnerable")
        report.add_quote(f"{flagged} of {len(records)} graph(s) flagged as vulnerable")
        report.add_table(
            [["Graph", "Verdict", "P(vulnerable)", "External calls"]]
            + [[r.name, r.verdict, f"{r.probability:.4f}", len(r.external_calls)] for r in records]
        )
        for record in records:
            report.add_heading(record.name, 2)
            if record.external_calls:
                report.add_list([str(call) for call in record.external_calls])
            else:
                report.add_raw("No external calls found.", add_eol=True).add_eol()
        return report
