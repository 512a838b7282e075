import pytest

from hyperbolab import fixtures


@pytest.fixture(scope="session")
def ulam():
    return fixtures.ulam()


@pytest.fixture(scope="session")
def logistic39():
    return fixtures.logistic("39/10")


@pytest.fixture(scope="session")
def logistic28():
    return fixtures.logistic("14/5")


@pytest.fixture(scope="session")
def logistic35():
    return fixtures.logistic("7/2")


@pytest.fixture(scope="session")
def logistic2():
    return fixtures.logistic(2)


@pytest.fixture(scope="session")
def cubic():
    return fixtures.cubic_two_critical()


@pytest.fixture(scope="session")
def quartic():
    return fixtures.quartic_tangency()


@pytest.fixture(scope="session")
def sine_arch():
    return fixtures.sine_arch()


@pytest.fixture(scope="session")
def ulam_phi():
    return fixtures.ulam_quadratic_change()
