"""
User-facing messages in workflow-command format.

Annotated messages look like `::warning file=a.sol,line=3,col=5::text`, so an
audit run inside CI surfaces parse problems as native file annotations while a
terminal user still gets a readable line.
"""

import json
from collections.abc import Generator
from contextlib import contextmanager
from typing import Any, Literal

from . import consts
from .consts import COMMAND_MARKER

CommandTypes = Literal["debug", "error", "group", "notice", "warning"]

_debug_enabled: bool = consts.DEBUG_ENABLED


def set_debug(enabled: bool) -> None:
    """
    Turns debug output on or off for the rest of the process.

    :param enabled: whether `debug()` messages are printed
    """
    global _debug_enabled
    _debug_enabled = enabled


def is_debug() -> bool:
    """:returns: True when `debug()` messages are printed"""
    return _debug_enabled


def _make_string(data: Any) -> str:
    """
    Converts a value to a string.

    :param data: data to convert
    :returns: string representation of the value
    """
    if isinstance(data, (list, tuple, dict)):
        return json.dumps(data)
    return str(data)


def escape_data(data: Any) -> str:
    """
    Escapes `%, \\r, \\n` characters in a message.

    :param data: Any type of data to be escaped e.g. string, number, list, dict
    :returns: string after escaping
    """
    return _make_string(data).replace("%", "%25").replace("\r", "%0D").replace("\n", "%0A")


def escape_property(data: Any) -> str:
    """
    Escapes `%, \\r, \\n, :, ,` characters in a property value.

    :param data: Any type of data to be escaped e.g. string, number, list, dict
    :returns: string after escaping
    """
    return escape_data(data).replace(":", "%3A").replace(",", "%2C")


def _build_options_string(**kwargs: Any) -> str:
    return ",".join(
        f"{key}={escape_property(value)}" for key, value in kwargs.items() if value is not None
    )


def _print_command(
    command: CommandTypes,
    command_message: str,
    options_string: str | None = "",
    escape_message: bool = True,
) -> None:
    """
    Helper function to print a workflow command.

    :param command: command name from `CommandTypes`
    :param command_message: message string
    :param options_string: string containing extra options
    :param escape_message: escape `%`, CR and LF in the message
    :returns: None
    """
    if escape_message:
        command_message = escape_data(command_message)

    print(f"{COMMAND_MARKER}{command} {options_string or ''}{COMMAND_MARKER}{command_message}")


def echo(message: Any) -> None:
    """
    prints a plain message.

    :param message: Any type of message e.g. string, number, list, dict
    :returns: None
    """
    print(_make_string(message))


def info(message: Any) -> None:
    """
    prints an informational message (alias of `echo`).

    :param message: Any type of message e.g. string, number, list, dict
    :returns: None
    """
    echo(message)


def debug(message: str) -> None:
    """
    prints a debug message when debug output is enabled.

    Template: ::debug::{message}

    :param message: message string
    :returns: None
    """
    if _debug_enabled:
        _print_command("debug", message)


def _annotate(
    command: Literal["notice", "warning", "error"],
    message: str,
    title: str | None,
    file: str | None,
    line: int | None,
    col: int | None,
) -> None:
    _print_command(
        command,
        message,
        options_string=_build_options_string(file=file, line=line, col=col, title=title),
    )


def notice(
    message: str,
    title: str | None = None,
    file: str | None = None,
    line: int | None = None,
    col: int | None = None,
) -> None:
    """
    prints a notice message.

    Template: ::notice file={name},line={line},col={col},title={title}::{message}

    :param message: Message to display
    :param title: Custom title
    :param file: Filename the message refers to
    :param line: Line number, starting at 1
    :param col: Column number, starting at 1
    :returns: None
    """
    _annotate("notice", message, title, file, line, col)


def warning(
    message: str,
    title: str | None = None,
    file: str | None = None,
    line: int | None = None,
    col: int | None = None,
) -> None:
    """
    prints a warning message.

    Template: ::warning file={name},line={line},col={col},title={title}::{message}

    :param message: Message to display
    :param title: Custom title
    :param file: Filename the message refers to
    :param line: Line number, starting at 1
    :param col: Column number, starting at 1
    :returns: None
    """
    _annotate("warning", message, title, file, line, col)


def error(
    message: str,
    title: str | None = None,
    file: str | None = None,
    line: int | None = None,
    col: int | None = None,
) -> None:
    """
    prints an error message.

    Template: ::error file={name},line={line},col={col},title={title}::{message}

    :param message: Message to display
    :param title: Custom title
    :param file: Filename the message refers to
    :param line: Line number, starting at 1
    :param col: Column number, starting at 1
    :returns: None
    """
    _annotate("error", message, title, file, line, col)


def start_group(title: str) -> None:
    """
    opens a collapsible group of messages.

    Template: ::group::{title}

    :param title: title of the group
    :returns: None
    """
    _print_command("group", title, escape_message=False)


def end_group() -> None:
    """
    closes the current group of messages.

    Template: ::endgroup::
    """
    print(f"{COMMAND_MARKER}endgroup{COMMAND_MARKER}")


@contextmanager
def group(title: str) -> Generator[None, None, None]:
    """
    wraps the messages printed inside the block in a collapsible group.

    :param title: title of the group
    """
    start_group(title)
    try:
        yield
    finally:
        end_group()
