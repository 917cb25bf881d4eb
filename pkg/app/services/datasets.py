"""
Conjuntos de dados sintéticos, leitura/escrita CSV e o modelo de previsão linear
"""
import logging
import re
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.config.settings import settings
from app.exceptions import CaseValidationError, DimensionMismatch, ParseError
from app.models.dataset import Dataset, DatasetRole
from app.models.network import NetworkCase

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
_COLUMN = re.compile(r"^([xy])(\d+)$")


def forecast(theta: np.ndarray, features: np.ndarray) -> np.ndarray:
    """
    ŷ = Θᵀx para cada amostra

    Calculado coluna a coluna, para que um agente com apenas θ_j obtenha
    exatamente os mesmos valores que o cálculo centralizado.

    Args:
        theta: Matriz atributos x parques
        features: Matriz amostras x atributos

    Returns:
        Matriz amostras x parques (MW)
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = theta.reshape(-1, 1)
    if features.shape[1] != theta.shape[0]:
        raise DimensionMismatch(
            f"Θ tem {theta.shape[0]} atributos, dados têm {features.shape[1]}"
        )
    return np.column_stack(
        [features @ np.ascontiguousarray(theta[:, j]) for j in range(theta.shape[1])]
    )


def default_feature_range(theta0: np.ndarray, capacity: np.ndarray) -> Tuple[float, float]:
    """Faixa uniforme dos atributos que mantém Θ0ᵀx dentro da capacidade"""
    low = settings.feature_low
    if settings.feature_high is not None:
        return low, settings.feature_high
    weights = np.sum(np.abs(theta0), axis=0)
    weights = np.where(weights > 0, weights, 1.0)
    return low, float(np.min(capacity / weights))


def gen_synthetic_dataset(
    theta0: np.ndarray,
    n: int,
    sigma: float,
    seed: int,
    role: DatasetRole,
    capacity: Optional[np.ndarray] = None,
    feature_range: Optional[Tuple[float, float]] = None,
) -> Dataset:
    """
    Gera amostras com atributos uniformes e erro gaussiano

    Args:
        theta0: Parâmetros verdadeiros (atributos x parques)
        n: Número de amostras
        sigma: Desvio padrão do erro (MW)
        seed: Semente do gerador aleatório
        role: Papel do conjunto (uq ou calibration)
        capacity: Capacidade por parque; padrão vem da configuração
        feature_range: (mínimo, máximo) dos atributos

    Returns:
        Dataset com y = Θ0ᵀx + ξ recortado em [0, capacidade]
    """
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.ndim == 1:
        theta0 = theta0.reshape(-1, 1)
    if n < 1:
        raise ValueError("n deve ser >= 1")
    if sigma < 0:
        raise ValueError("sigma deve ser >= 0")

    n_features, n_wind = theta0.shape
    if capacity is None:
        capacity = np.full(n_wind, settings.wind_capacity_mw)
    capacity = np.asarray(capacity, dtype=float)
    low, high = feature_range or default_feature_range(theta0, capacity)

    rng = np.random.default_rng(seed)
    features = rng.uniform(low, high, size=(n, n_features))
    noise = rng.normal(0.0, sigma, size=(n, n_wind))
    raw = forecast(theta0, features) + noise
    actuals = np.clip(raw, 0.0, capacity)

    clipped = int(np.sum(actuals != raw))
    if clipped:
        logger.warning(f"{clipped} valores de geração recortados à capacidade instalada")
    logger.info(f"Conjunto sintético gerado: role={role.value}, n={n}, sigma={sigma}, seed={seed}")
    return Dataset(features=features, actuals=actuals, role=role)


def validate_dataset(case: NetworkCase, dataset: Dataset) -> Dataset:
    """Confere número de parques e geração dentro de [0, capacidade]"""
    if dataset.n_wind != case.n_wind:
        raise DimensionMismatch(
            f"Conjunto tem {dataset.n_wind} parques, caso tem {case.n_wind}"
        )
    if np.any(dataset.actuals < 0) or np.any(dataset.actuals > case.wind_capacity + 1e-9):
        raise CaseValidationError("actuals", "geração fora de [0, capacidade instalada]")
    return dataset


def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Grava CSV com cabeçalho x1..xF,y1..yW (floats com round-trip exato)"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = [f"x{f + 1}" for f in range(dataset.n_features)]
    columns += [f"y{w + 1}" for w in range(dataset.n_wind)]
    frame = pd.DataFrame(np.hstack([dataset.features, dataset.actuals]), columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_dataset(path: Union[str, Path], role: DatasetRole) -> Dataset:
    """
    Lê um CSV de conjunto de dados

    Raises:
        ParseError: Arquivo ausente, cabeçalho fora do padrão ou valores não numéricos
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as exc:
        raise ParseError(f"Arquivo não encontrado: {path}") from exc
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise ParseError(f"CSV inválido em {path}: {exc}") from exc

    x_columns, y_columns = [], []
    for column in frame.columns:
        match = _COLUMN.match(str(column).strip())
        if not match:
            raise ParseError(f"Coluna inesperada '{column}' em {path}")
        (x_columns if match.group(1) == "x" else y_columns).append(column)

    expected_x = [f"x{k + 1}" for k in range(len(x_columns))]
    expected_y = [f"y{k + 1}" for k in range(len(y_columns))]
    if not x_columns or not y_columns or list(frame.columns) != expected_x + expected_y:
        raise ParseError(f"Cabeçalho deve ser x1..xF,y1..yW em {path}")

    try:
        values = frame.to_numpy(dtype=float)
    except ValueError as exc:
        raise ParseError(f"Valores não numéricos em {path}") from exc
    if not np.all(np.isfinite(values)):
        raise ParseError(f"Valores ausentes ou não finitos em {path}")

    n_x = len(x_columns)
    return Dataset(features=values[:, :n_x], actuals=values[:, n_x:], role=role)


def parse_theta(text: str) -> np.ndarray:
    """'1,2' → [[1],[2]]; parques separados por ';' ('1,2;0.5,1')"""
    try:
        farms = [[float(v) for v in chunk.split(",")] for chunk in text.split(";") if chunk.strip()]
    except ValueError as exc:
        raise ParseError(f"Θ inválido: '{text}'") from exc
    if not farms or len({len(f) for f in farms}) != 1:
        raise ParseError(f"Θ inválido: '{text}'")
    return np.array(farms, dtype=float).T
