import numpy as np
import pytest

import levolve as lv


@pytest.fixture(scope="session")
def flat64():
    return lv.build_geometry(lv.flat_circle(), 64, (1e-3, 9.0))


@pytest.fixture(scope="session")
def sphere64():
    return lv.build_geometry(lv.round_sphere(1.0), 64, (0.5, 9.0))


@pytest.fixture(scope="session")
def static_sphere64():
    return lv.build_geometry(lv.round_sphere(1.0, evolving=False), 64, (0.5, 9.0))


@pytest.fixture(scope="session")
def dilaton64():
    # canonical dilaton: phi^2 = 10 - 2 tau, valid up to tau < 5
    return lv.build_geometry(lv.dilaton_circle(10.0, 1.0, 1.0), 64, (0.5, 4.8))


@pytest.fixture(scope="session")
def dilaton_soft():
    # milder decay used for transport-heavy runs over tau in [0.8, 4.9]
    return lv.build_geometry(lv.dilaton_circle(12.0, 1.0, 1.0), 64, (0.5, 5.5))


@pytest.fixture(scope="session")
def all_models(flat64, sphere64, dilaton64):
    return {"flat": flat64, "sphere": sphere64, "dilaton": dilaton64}


@pytest.fixture(scope="session")
def transport_models(flat64, sphere64, dilaton_soft):
    return {"flat": flat64, "sphere": sphere64, "dilaton": dilaton_soft}


@pytest.fixture(scope="session")
def dilaton_table_model():
    """The canonical dilaton tabulated on the mesh, for custom-model tests."""
    n = 64
    taus = np.linspace(0.5, 4.8, 44)
    a = 10.0 - 2.0 * taus
    g = np.tile(a, (n, 1))
    s = np.full((n, taus.size), -1.0)
    model = lv.FlowModel(kind="custom_tabulated",
                         table=lv.geometry.CustomTable(taus=taus, g=g, s=s))
    return lv.build_geometry(model, n, (0.5, 4.8))
