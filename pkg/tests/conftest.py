import numpy as np
import pytest

from perimeter_bandits.domain import SCALING_RULES, CaseII, Instance, register_scaling_rule

if "unit" not in SCALING_RULES:
    register_scaling_rule("unit", lambda n: 1.0)


def e1(U: int = 1) -> Instance:
    """Three cells, rates (2, 1, 4), perfect baselines, reciprocal scaling."""
    return Instance(np.array([2.0, 1.0, 4.0]), CaseII("reciprocal", np.ones((3, U))), name="E1")


def random_instance(rng: np.random.Generator, K: int, U: int, phi: str = "reciprocal",
                    low: float = 0.0, high: float = 10.0) -> Instance:
    lam = rng.uniform(low, high, size=K)
    lam = np.maximum(lam, 1e-6)
    omega = rng.uniform(0.05, 1.0, size=(K, U))
    return Instance(lam, CaseII(phi, omega))


@pytest.fixture
def E1() -> Instance:
    return e1()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, in criterion order."""
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
