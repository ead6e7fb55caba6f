import pytest

import bergbundle as bb


@pytest.fixture(scope="session")
def plane_r6():
    return bb.DomainSpec(
        kind="plane-truncation", radii=(6.0,), quad_order=(80,), gaussian_decay=True
    )


@pytest.fixture(scope="session")
def grid_r6(plane_r6):
    return bb.build_grid(plane_r6)


@pytest.fixture(scope="session")
def grid_r6_q60():
    dom = bb.DomainSpec(
        kind="plane-truncation", radii=(6.0,), quad_order=(60,), gaussian_decay=True
    )
    return bb.build_grid(dom)


@pytest.fixture(scope="session")
def unit_disc_grid():
    return bb.build_grid(bb.DomainSpec(kind="disc", radii=(1.0,), quad_order=(24,)))


@pytest.fixture(scope="session")
def fock0():
    return bb.builtin("fock_shift", [0.0])


@pytest.fixture(scope="session")
def fock025():
    return bb.builtin("fock_shift", [0.25])


@pytest.fixture(scope="session")
def product():
    return bb.builtin("product")


@pytest.fixture(scope="session")
def coupled():
    return bb.builtin("coupled")


@pytest.fixture(scope="session")
def basis6():
    return bb.Basis.total_degree(1, 6)


@pytest.fixture(scope="session")
def basis8():
    return bb.Basis.total_degree(1, 8)


def assert_close(actual, expected, tol, label=""):
    err = abs(actual - expected)
    assert err <= tol, f"{label}: |{actual} - {expected}| = {err} > {tol}"


@pytest.fixture(scope="session")
def close():
    return assert_close
