import importlib.util
from pathlib import Path
from types import ModuleType

import pytest

LINT_SCRIPT = Path(__file__).parent.parent / "devtools" / "lint.py"


@pytest.fixture(scope="module")
def lint() -> ModuleType:
    spec = importlib.util.spec_from_file_location("lint", LINT_SCRIPT)
    assert spec is not None and spec.loader is not None
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def test_fix_mode_writes_changes(lint: ModuleType):
    commands = {step.label: step.cmd for step in lint.steps(check=False, tests=False)}
    assert list(commands) == ["spelling", "ruff check", "ruff format", "basedpyright"]
    assert commands["spelling"][:2] == ["codespell", "--write-changes"]
    assert "--fix" in commands["ruff check"]
    assert "--check" not in commands["ruff format"]


def test_check_mode_writes_nothing(lint: ModuleType):
    commands = {step.label: step.cmd for step in lint.steps(check=True, tests=True)}
    assert "--write-changes" not in commands["spelling"]
    assert "--fix" not in commands["ruff check"]
    assert commands["ruff format"][:3] == ["ruff", "format", "--check"]
    assert commands["fast tests"] == ["pytest", "-q", "-m", "not slow"]


def test_every_step_covers_the_package(lint: ModuleType):
    for step in lint.steps(check=True, tests=False):
        assert "callaudit" in step.cmd


def test_failed_steps_are_counted(lint: ModuleType, monkeypatch: pytest.MonkeyPatch):
    ran: list[list[str]] = []

    def fake_run(cmd: list[str]) -> int:
        ran.append(cmd)
        return 1 if cmd[0] == "basedpyright" else 0

    monkeypatch.setattr(lint, "run", fake_run)
    assert lint.main(["--check"]) == 1
    assert [cmd[0] for cmd in ran] == ["codespell", "ruff", "ruff", "basedpyright"]
