import time

import pytest

from noiseguide.audio import synth_corpus
from noiseguide.diffusion import train_backbone
from noiseguide.numerics import make_rng
from noiseguide.schedules import make_linear_beta

# toy testbed shared by the end-to-end tests
TESTBED_T = 50
TESTBED_BETA = (1e-4, 0.05)


@pytest.fixture(scope="session")
def testbed_schedule():
    return make_linear_beta(TESTBED_T, *TESTBED_BETA)


@pytest.fixture(scope="session")
def toy_backbone(testbed_schedule):
    """EpsilonNet trained on 64 harmonic clips; returns (net, seconds spent)."""
    corpus = [w.samples for w in synth_corpus("harmonic", 64, 4096, seed=11)]
    t0 = time.perf_counter()
    net, _ = train_backbone(corpus, testbed_schedule, 200, 2e-3, make_rng(5), batch=8, segment=512)
    return net, time.perf_counter() - t0


# --- acceptance report -------------------------------------------------------

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    failed = call.excinfo is not None
    if failed or call.when == "call":
        detail = getattr(item, "acceptance_detail", "")
        if failed:
            detail = f"{call.excinfo.typename}: {str(call.excinfo.value).splitlines()[0] if str(call.excinfo.value) else ''}"
        _ACCEPTANCE[number] = (title, not failed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title}"
        terminalreporter.write_line(f"{line}  ({detail})" if detail else line)


@pytest.fixture
def report(request):
    """Attach a one-line measurement to the acceptance summary (also printed)."""
    def _report(text):
        request.node.acceptance_detail = text
        print(text)
    return _report
