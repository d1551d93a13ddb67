import socket
import threading

import pytest

from tpm_reconcile.protocol import Recorder, Role, SessionConfig, run_session
from tpm_reconcile.tpm import TpmParams

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_report():
    def report(criterion: str, ok: bool, detail: str) -> None:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return report


def make_config(role, K, N, L, bits, **kw):
    return SessionConfig(params=TpmParams(K, N, L), key_length_bits=bits, role=Role(role), **kw)


def socket_session(key_a, key_b, cfg_a, cfg_b, timeout=10.0):
    """Run both parties over a socketpair.

    Returns the initiator's and responder's result (or the exception each
    raised) and a recorder holding the initiator-side wire bytes.
    """
    sa, sb = socket.socketpair()
    rec = Recorder(sa)
    out = {}

    def party(name, key, cfg, stream):
        try:
            out[name] = run_session(key, cfg, stream, timeout=timeout)
        except Exception as exc:  # noqa: BLE001 - handed back to the test
            out[name] = exc

    t = threading.Thread(target=party, args=("b", key_b, cfg_b, sb))
    t.start()
    party("a", key_a, cfg_a, rec)
    t.join(timeout)
    sa.close()
    sb.close()
    return out["a"], out["b"], rec
