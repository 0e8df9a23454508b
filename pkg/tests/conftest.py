"""Shared fixtures: the standard testbeds, solved once per session."""

from types import SimpleNamespace

import pytest

from conesphere import (
    Configuration,
    FieldEvaluator,
    gram,
    moduli_stencil,
    solve_accessory,
    stress_tensor,
    validate_orders,
)


def _solved(alphas, free, guess=None):
    orders = validate_orders(alphas)
    config = Configuration(tuple(free))
    report = solve_accessory(config, orders, guess=guess).raise_for_status()
    tensor = stress_tensor(config, orders, report.accessory.free)
    ev = FieldEvaluator(tensor)
    return SimpleNamespace(orders=orders, config=config, solve=report,
                           tensor=tensor, ev=ev)


@pytest.fixture(scope="session")
def testbed3():
    """Three cone points of order 0.8: the forced-accessory case."""
    return _solved([0.8, 0.8, 0.8], [])


@pytest.fixture(scope="session")
def testbed4():
    """Four equal 0.7 orders, free point at 0.3: the main cross-check case."""
    return _solved([0.7] * 4, [0.3 + 0j])


@pytest.fixture(scope="session")
def testbed4_sym():
    """Four equal 0.7 orders, free point at 1/2: the symmetric case."""
    return _solved([0.7] * 4, [0.5 + 0j])


@pytest.fixture(scope="session")
def stencil4(testbed4):
    """Moduli stencil (with action values) shared by the theorem checks."""
    return moduli_stencil(testbed4.config, testbed4.orders, fd_step=1e-3,
                          center=testbed4.solve)


@pytest.fixture(scope="session")
def gram4(testbed4):
    return gram(testbed4.ev)
