"""
Carregamento e validação de casos de rede, e construção da matriz PTDF
"""
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from pydantic import ValidationError
from scipy.sparse.csgraph import connected_components

from app.config.settings import settings
from app.exceptions import CaseValidationError, ParseError, SingularNetwork
from app.models.network import NetworkCase
from app.schemas.case_file import CaseFile

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
BUNDLED_CASES = {"case5": "case5.json", "case5_2wind": "case5_2wind.json"}


def resolve_case_path(path_or_name: Union[str, Path]) -> Path:
    """Aceita um caminho ou o nome de um caso embutido (ex.: 'case5')"""
    name = str(path_or_name)
    if name in BUNDLED_CASES:
        return DATA_DIR / BUNDLED_CASES[name]
    return Path(path_or_name)


def load_case(path: Union[str, Path]) -> NetworkCase:
    """
    Lê e valida um arquivo de caso JSON

    Args:
        path: Caminho do arquivo ou nome de caso embutido

    Returns:
        NetworkCase validado, com PTDF calculada (ou explícita, se consistente)

    Raises:
        ParseError: Arquivo ausente ou JSON malformado
        CaseValidationError: Invariante violada (indica o campo)
        SingularNetwork: Rede desconexa
    """
    case_path = resolve_case_path(path)
    try:
        raw = json.loads(case_path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ParseError(f"Arquivo de caso não encontrado: {case_path}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"JSON inválido em {case_path}: {exc}") from exc

    try:
        document = CaseFile.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise CaseValidationError(field, first["msg"]) from exc

    case = build_case(document)
    logger.info(
        f"Caso '{case.name}' carregado: {case.n_buses} barras, {case.n_generators} geradores, "
        f"{case.n_lines} linhas, {case.n_wind} parques eólicos"
    )
    return case


def build_case(document: CaseFile) -> NetworkCase:
    """Converte o documento em NetworkCase, validando as invariantes"""
    labels = list(document.buses)
    if len(set(labels)) != len(labels):
        raise CaseValidationError("buses", "rótulos de barra repetidos")
    position = {label: index for index, label in enumerate(labels)}

    def bus_index(field: str, label: int) -> int:
        if label not in position:
            raise CaseValidationError(field, f"barra {label} inexistente")
        return position[label]

    gen_bus = [bus_index(f"generators.{k}.bus", gen.bus) for k, gen in enumerate(document.generators)]
    for k, gen in enumerate(document.generators):
        if gen.pmin_mw > gen.pmax_mw:
            raise CaseValidationError(
                f"generators.{k}", f"pmin_mw={gen.pmin_mw} > pmax_mw={gen.pmax_mw}"
            )

    line_from, line_to = [], []
    for k, line in enumerate(document.lines):
        line_from.append(bus_index(f"lines.{k}.from", line.from_bus))
        line_to.append(bus_index(f"lines.{k}.to", line.to_bus))
        if line.limit_mw <= 0:
            raise CaseValidationError(f"lines.{k}.limit_mw", "limite deve ser > 0")
        if line.susceptance_pu <= 0:
            raise CaseValidationError(f"lines.{k}.susceptance_pu", "susceptância deve ser > 0")
        if line_from[-1] == line_to[-1]:
            raise CaseValidationError(f"lines.{k}", "linha liga a barra a ela mesma")

    wind_bus = [bus_index(f"wind.{k}.bus", farm.bus) for k, farm in enumerate(document.wind)]

    if len(document.demand_mw) != len(labels):
        raise CaseValidationError(
            "demand_mw", f"{len(document.demand_mw)} valores para {len(labels)} barras"
        )

    slack_label = document.slack_bus
    if slack_label is None:
        slack_label = settings.default_slack_bus if settings.default_slack_bus in position else labels[0]
    slack = bus_index("slack_bus", slack_label)

    susceptance = np.array([line.susceptance_pu for line in document.lines], dtype=float)
    computed = compute_ptdf(len(labels), np.array(line_from), np.array(line_to), susceptance, slack)

    ptdf = computed
    if document.ptdf is not None:
        explicit = np.asarray(document.ptdf, dtype=float).reshape(len(line_from), len(labels))
        mismatch = float(np.max(np.abs(explicit - computed)))
        if mismatch > settings.ptdf_consistency_tol:
            raise CaseValidationError("ptdf", f"PTDF explícita difere da calculada em {mismatch:.3e}")
        ptdf = explicit

    def gen_vector(attribute: str) -> np.ndarray:
        return np.array([getattr(gen, attribute) for gen in document.generators], dtype=float)

    return NetworkCase(
        name=document.name,
        bus_labels=np.array(labels, dtype=int),
        slack_bus=slack,
        demand=np.array(document.demand_mw, dtype=float),
        gen_bus=np.array(gen_bus, dtype=int),
        gen_min=gen_vector("pmin_mw"),
        gen_max=gen_vector("pmax_mw"),
        line_from=np.array(line_from, dtype=int),
        line_to=np.array(line_to, dtype=int),
        line_limit=np.array([line.limit_mw for line in document.lines], dtype=float),
        line_susceptance=susceptance,
        ptdf=ptdf,
        wind_bus=np.array(wind_bus, dtype=int),
        wind_capacity=np.array([farm.capacity_mw for farm in document.wind], dtype=float),
        cost_energy=gen_vector("cost_energy"),
        cost_reserve=gen_vector("cost_reserve"),
        cost_activation=gen_vector("cost_activation"),
        cost_in=gen_vector("cost_in"),
        cost_out_up=gen_vector("cost_out_up"),
        cost_out_dn=gen_vector("cost_out_dn"),
    )


def compute_ptdf(
    n_buses: int,
    line_from: np.ndarray,
    line_to: np.ndarray,
    susceptance: np.ndarray,
    slack_bus: int,
) -> np.ndarray:
    """
    Calcula a PTDF (linhas x barras) pelo fluxo de potência DC

    O fluxo na linha l é b_l(θ_from − θ_to); injeção na barra k retirada na
    barra de referência. A coluna da barra de referência é nula.

    Raises:
        SingularNetwork: Se a rede é desconexa
    """
    n_lines = len(line_from)
    adjacency = sp.coo_matrix(
        (np.ones(n_lines), (line_from, line_to)), shape=(n_buses, n_buses)
    )
    n_components, _ = connected_components(adjacency, directed=False)
    if n_components != 1:
        raise SingularNetwork(f"Rede desconexa: {n_components} componentes")

    incidence = np.zeros((n_lines, n_buses))
    incidence[np.arange(n_lines), line_from] = 1.0
    incidence[np.arange(n_lines), line_to] = -1.0
    branch_matrix = susceptance[:, None] * incidence  # B_f
    bus_matrix = incidence.T @ branch_matrix  # B_bus

    keep = np.array([k for k in range(n_buses) if k != slack_bus], dtype=int)
    ptdf = np.zeros((n_lines, n_buses))
    if keep.size:
        reduced = bus_matrix[np.ix_(keep, keep)]
        try:
            ptdf[:, keep] = scipy.linalg.solve(reduced, branch_matrix[:, keep].T, assume_a="sym").T
        except np.linalg.LinAlgError as exc:
            raise SingularNetwork(f"Matriz B singular: {exc}") from exc
    return ptdf


def case_ptdf(case: NetworkCase, slack_bus: Optional[int] = None) -> np.ndarray:
    """PTDF do caso recalculada para outra barra de referência (índice 0-based)"""
    return compute_ptdf(
        case.n_buses,
        case.line_from,
        case.line_to,
        case.line_susceptance,
        case.slack_bus if slack_bus is None else slack_bus,
    )
