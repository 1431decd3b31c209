import numpy as np
import pytest

from defect_schwarz.coefficient import build_model
from defect_schwarz.mesh import build_hierarchy
from defect_schwarz.preconditioner import build_reference_dictionary


@pytest.fixture(scope="session")
def tiny():
    """h=1/32, H=1/4, eps=1/8: 961 fine DOFs, 9 patches."""
    return build_hierarchy("1/32", "1/4", "1/8")


@pytest.fixture(scope="session")
def desk():
    return build_hierarchy("1/64", "1/8", "1/16")


@pytest.fixture(scope="session")
def erasure_tiny(tiny):
    model = build_model("erasure", 1.0, 100.0, tiny.eps, tiny.fine_per_eps)
    return model, build_reference_dictionary(model, tiny)


@pytest.fixture(scope="session")
def shifted_tiny(tiny):
    model = build_model("shifted", 1.0, 100.0, tiny.eps, tiny.fine_per_eps)
    return model, build_reference_dictionary(model, tiny)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, shift=1.0):
    a = rng.standard_normal((n, n))
    return a @ a.T + shift * n * np.eye(n)


_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE[number] = (title, "PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, verdict, detail = _ACCEPTANCE[number]
        line = f"criterion {number:2d} {verdict}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
