# pyright: reportUnusedVariable=false

import io
import signal

import pytest

from callaudit.exceptions import CancellationRequested
from callaudit.signal_handling import CancellationHandler


@pytest.fixture
def handler():
    cancellation = CancellationHandler()
    yield cancellation
    cancellation.disable()


def test_enable_and_disable_are_idempotent(handler: CancellationHandler):
    before = signal.getsignal(signal.SIGINT)
    handler.disable()
    assert not handler.is_enabled()

    handler.enable()
    handler.enable()
    assert handler.is_enabled()
    assert signal.getsignal(signal.SIGINT) != before

    handler.disable()
    handler.disable()
    assert signal.getsignal(signal.SIGINT) == before


@pytest.mark.parametrize("sig", [signal.SIGTERM, signal.SIGINT])
def test_signal_flushes_log_then_raises(handler: CancellationHandler, sig: signal.Signals):
    log = io.StringIO()
    flushed: list[str] = []
    log.write('{"epoch": 1}\n')
    handler.register(lambda: flushed.append(log.getvalue()))
    handler.enable()

    with pytest.raises(CancellationRequested, match=sig.name):
        signal.raise_signal(sig)

    assert flushed == ['{"epoch": 1}\n']
    assert handler.cancelled
    with pytest.raises(CancellationRequested):
        handler.check()


def test_failing_cleanup_is_reported_and_others_still_run(handler: CancellationHandler, capfd):
    ran: list[str] = []

    def close_cache():
        ran.append("cache")
        raise OSError("disk full")

    handler.register(close_cache)
    handler.register(lambda: ran.append("log"))
    handler.enable()

    with pytest.raises(CancellationRequested):
        signal.raise_signal(signal.SIGTERM)

    assert ran == ["cache", "log"]
    out = capfd.readouterr().out
    assert "::warning ::Received SIGTERM signal" in out
    assert "Error in cancellation handler: disk full" in out


def test_request_without_signal():
    cancellation = CancellationHandler()
    cancellation.check()
    assert not cancellation.cancelled

    cancellation.request("user")
    assert cancellation.cancelled
    assert not cancellation.is_enabled()
    with pytest.raises(CancellationRequested, match="Operation cancelled by user"):
        cancellation.check()


def test_context_manager_restores_handlers():
    before = signal.getsignal(signal.SIGTERM)
    with CancellationHandler() as cancellation:
        assert cancellation.is_enabled()
    assert not cancellation.is_enabled()
    assert signal.getsignal(signal.SIGTERM) == before
