"""
Runs the project's lint steps and, optionally, the fast test suite.

    uv run python devtools/lint.py            # fix what can be fixed in place
    uv run python devtools/lint.py --check    # CI: report only, write nothing
    uv run python devtools/lint.py --tests    # also run pytest without the slow marker
"""

import argparse
import subprocess
from typing import NamedTuple

from funlog import log_calls
from rich import get_console, reconfigure
from rich import print as rprint

SRC_PATHS = ["callaudit", "tests", "devtools"]
DOC_PATHS = ["README.md", "devtools/development.md", "docs/source"]


reconfigure(emoji=not get_console().options.legacy_windows)  # No emojis on legacy windows.


class Step(NamedTuple):
    label: str
    cmd: list[str]


def steps(check: bool, tests: bool) -> list[Step]:
    spell = ["codespell", *SRC_PATHS, *DOC_PATHS]
    ruff_check = ["ruff", "check", *SRC_PATHS]
    ruff_format = ["ruff", "format", *SRC_PATHS]
    if check:
        ruff_format.insert(2, "--check")
    else:
        spell.insert(1, "--write-changes")
        ruff_check.insert(2, "--fix")
    plan = [
        Step("spelling", spell),
        Step("ruff check", ruff_check),
        Step("ruff format", ruff_format),
        Step("basedpyright", ["basedpyright", "--stats", *SRC_PATHS]),
    ]
    if tests:
        plan.append(Step("fast tests", ["pytest", "-q", "-m", "not slow"]))
    return plan


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Lint callaudit and optionally run the fast tests.")
    parser.add_argument("--check", action="store_true", help="report problems without fixing")
    parser.add_argument("--tests", action="store_true", help="also run the fast test suite")
    args = parser.parse_args(argv)

    rprint()
    failed = [step.label for step in steps(args.check, args.tests) if run(step.cmd) != 0]
    rprint()

    if failed:
        rprint(f"[bold red]:x: Lint failed: {', '.join(failed)}.[/bold red]")
    else:
        rprint("[bold green]:white_check_mark: Lint passed![/bold green]")
    rprint()

    return len(failed)


@log_calls(level="warning", show_timing_only=True)
def run(cmd: list[str]) -> int:
    rprint()
    rprint(f"[bold green]>> {' '.join(cmd)}[/bold green]")
    try:
        subprocess.run(cmd, text=True, check=True)
    except KeyboardInterrupt:
        rprint("[yellow]Keyboard interrupt - Cancelled[/yellow]")
        return 1
    except subprocess.CalledProcessError as e:
        rprint(f"[bold red]Error: {e}[/bold red]")
        return 1
    return 0


if __name__ == "__main__":
    exit(main())
