import pytest

from qudit_compiler.compiler import CompileRequest, compile_gate
from qudit_compiler.core import SSW02
from qudit_compiler.transmon import qudit_device


@pytest.fixture(scope="session")
def ssw02_result():
    """sSW02 compiled once at 220 ns on the QuDIT device."""
    res = compile_gate(CompileRequest(SSW02, 220.0), qudit_device())
    assert res.converged
    return res


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
