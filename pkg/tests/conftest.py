import os
import sys
from pathlib import Path

# PRIMEIRA COISA: Definir ambiente de teste
os.environ["TESTING"] = "True"
os.environ["LOG_LEVEL"] = "ERROR"

# Adicionar o diretório raiz ao Python path ANTES dos imports
root_dir = Path(__file__).parent.parent
sys.path.insert(0, str(root_dir))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from app.models.dataset import DatasetRole  # noqa: E402
from app.schemas.calibration import CalibrationConfig  # noqa: E402
from app.schemas.case_file import CaseFile  # noqa: E402
from app.services.datasets import gen_synthetic_dataset  # noqa: E402
from app.services.power_case import build_case, load_case  # noqa: E402
from app.services.uncertainty import empirical_errors, with_epsilon  # noqa: E402

THETA0 = np.array([[1.0], [2.0]])


def toy_document(**overrides) -> dict:
    """Duas barras, um gerador, um parque e uma linha folgada"""
    document = {
        "name": "toy",
        "buses": [1, 2],
        "generators": [
            {
                "bus": 1,
                "pmin_mw": 0.0,
                "pmax_mw": 500.0,
                "cost_energy": 10.0,
                "cost_reserve": 15.0,
                "cost_activation": 20.0,
                "cost_in": 20.0,
                "cost_out_up": 100.0,
                "cost_out_dn": 100.0,
            }
        ],
        "lines": [{"from": 1, "to": 2, "susceptance_pu": 10.0, "limit_mw": 1000.0}],
        "wind": [{"bus": 2, "capacity_mw": 200.0}],
        "demand_mw": [0.0, 300.0],
    }
    document.update(overrides)
    return document


@pytest.fixture(scope="session")
def case5():
    """Caso de 5 barras embutido (um parque eólico)"""
    return load_case("case5")


@pytest.fixture(scope="session")
def case5_2wind():
    """Caso de 5 barras com dois parques eólicos"""
    return load_case("case5_2wind")


@pytest.fixture(scope="session")
def toy_case():
    return build_case(CaseFile.model_validate(toy_document()))


@pytest.fixture(scope="session")
def theta0():
    return THETA0.copy()


@pytest.fixture(scope="session")
def uq_data():
    """Conjunto de UQ pequeno (N_s=8, σ=10)"""
    return gen_synthetic_dataset(THETA0, 8, 10.0, 1, DatasetRole.UQ, np.array([200.0]))


@pytest.fixture(scope="session")
def cal_data():
    """Conjunto de calibração pequeno (N_c=4, σ=20)"""
    return gen_synthetic_dataset(THETA0, 4, 20.0, 2, DatasetRole.CALIBRATION, np.array([200.0]))


@pytest.fixture(scope="session")
def error_model(uq_data):
    """Modelo de erros com ε=1"""
    return with_epsilon(empirical_errors(THETA0, uq_data), 1.0)


@pytest.fixture
def fast_config():
    """Configuração de calibração curta para testes"""
    return CalibrationConfig(
        eta=1.0, lr_theta=1e-4, lr_eps=1e-3, max_iters=3, risk_level=0.05, xi_bound=50.0, seed=0
    )
