"""
Graceful cancellation for long-running commands.

While enabled, SIGTERM and SIGINT run the registered cleanup callbacks (for
example flushing the epoch log) and then raise `CancellationRequested` in the
main thread, so the command can stop between training steps and keep what it
has written.
"""

from __future__ import annotations

import signal
from collections.abc import Callable
from types import TracebackType
from typing import Any, Self

from .exceptions import CancellationRequested
from .print_messages import warning

_HANDLED_SIGNALS: tuple[signal.Signals, ...] = (signal.SIGTERM, signal.SIGINT)


class CancellationHandler:
    """
    Installs cancellation signal handlers; usable as a context manager.

    Example::

        with CancellationHandler() as cancellation:
            cancellation.register(log_file.flush)
            train(config, samples, vocab, cancellation=cancellation)
    """

    def __init__(self) -> None:
        self._cleanups: list[Callable[[], None]] = []
        self._original_handlers: dict[signal.Signals, Any] = {}
        self._enabled: bool = False
        self._cancelled: str | None = None

    def register(self, cleanup: Callable[[], None]) -> None:
        """
        Adds a callback run when a cancellation signal arrives.

        :param cleanup: function without arguments; its exceptions are reported, not raised
        """
        self._cleanups.append(cleanup)

    def enable(self) -> None:
        if self._enabled:
            return
        for sig in _HANDLED_SIGNALS:
            self._original_handlers[sig] = signal.signal(sig, self._handle_signal)
        self._enabled = True

    def disable(self) -> None:
        """Restores the handlers that were installed before `enable()`."""
        if not self._enabled:
            return
        for sig, original in self._original_handlers.items():
            if original is not None:
                signal.signal(sig, original)
        self._original_handlers.clear()
        self._enabled = False

    def is_enabled(self) -> bool:
        return self._enabled

    @property
    def cancelled(self) -> bool:
        return self._cancelled is not None

    def request(self, reason: str = "request") -> None:
        """Marks the operation as cancelled without a signal; `check()` raises afterwards."""
        self._cancelled = reason

    def check(self) -> None:
        """
        :raises CancellationRequested: when a cancellation was requested earlier
        """
        if self._cancelled is not None:
            raise CancellationRequested(f"Operation cancelled by {self._cancelled}")

    def _run_cleanups(self) -> None:
        for cleanup in self._cleanups:
            try:
                cleanup()
            except Exception as e:  # noqa: BLE001
                warning(f"Error in cancellation handler: {e}")

    def _handle_signal(self, signum: int, frame: Any) -> None:  # pyright: ignore[reportUnusedParameter]
        signal_name = signal.Signals(signum).name
        warning(f"Received {signal_name} signal. Stopping after keeping the results so far...")
        self._cancelled = f"{signal_name} signal"
        self._run_cleanups()
        raise CancellationRequested(f"Operation cancelled by {signal_name} signal")

    def __enter__(self) -> Self:
        self.enable()
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc: BaseException | None,
        tb: TracebackType | None,
    ) -> None:
        self.disable()
