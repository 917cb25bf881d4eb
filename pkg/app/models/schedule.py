from typing import Dict, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.models.base import DomainModel
from app.schemas.solver import SolverStatus


class ScheduleProgramLayout(BaseModel):
    """Mapa dos blocos de variáveis e grupos de restrições no vetor plano.

    Ordem das variáveis: g, r_plus, r_minus, A (linha a linha, g*n_w + j),
    tau, lambda_O, lambda_C, s_O (j*N_s + i), s_C_i, s_C_jik ((j*N_s + i)*K + k).
    """

    model_config = ConfigDict(frozen=True)

    n_generators: int
    n_wind: int
    n_samples: int
    blocks: Dict[str, Tuple[int, int]]
    eq_groups: Dict[str, Tuple[int, int]]
    ineq_groups: Dict[str, Tuple[int, int]]

    @classmethod
    def create(cls, n_generators: int, n_wind: int, n_samples: int) -> "ScheduleProgramLayout":
        n_k = 2 * n_generators + 1
        sizes = [
            ("g", n_generators),
            ("r_plus", n_generators),
            ("r_minus", n_generators),
            ("A", n_generators * n_wind),
            ("tau", 1),
            ("lambda_O", n_wind),
            ("lambda_C", n_wind),
            ("s_O", n_wind * n_samples),
            ("s_C_i", n_samples),
            ("s_C_jik", n_wind * n_samples * n_k),
        ]
        blocks = {}
        offset = 0
        for name, size in sizes:
            blocks[name] = (offset, offset + size)
            offset += size
        return cls(
            n_generators=n_generators,
            n_wind=n_wind,
            n_samples=n_samples,
            blocks=blocks,
            eq_groups={},
            ineq_groups={},
        )

    @property
    def n_k(self) -> int:
        return 2 * self.n_generators + 1

    @property
    def n_variables(self) -> int:
        return max(stop for _, stop in self.blocks.values())

    def block(self, name: str) -> slice:
        start, stop = self.blocks[name]
        return slice(start, stop)

    def eq_rows(self, name: str) -> slice:
        start, stop = self.eq_groups[name]
        return slice(start, stop)

    def ineq_rows(self, name: str) -> slice:
        start, stop = self.ineq_groups[name]
        return slice(start, stop)

    def a_index(self, gen: int, farm: int) -> int:
        return self.blocks["A"][0] + gen * self.n_wind + farm

    def tau_index(self) -> int:
        return self.blocks["tau"][0]

    def lambda_o_index(self, farm: int) -> int:
        return self.blocks["lambda_O"][0] + farm

    def lambda_c_index(self, farm: int) -> int:
        return self.blocks["lambda_C"][0] + farm

    def s_o_index(self, farm: int, sample: int) -> int:
        return self.blocks["s_O"][0] + farm * self.n_samples + sample

    def s_c_i_index(self, sample: int) -> int:
        return self.blocks["s_C_i"][0] + sample

    def s_c_jik_index(self, farm: int, sample: int, k: int) -> int:
        return self.blocks["s_C_jik"][0] + (farm * self.n_samples + sample) * self.n_k + k

    def schedule_slice(self) -> slice:
        """Bloco G = (g, r⁺, r⁻), contíguo no início do vetor"""
        return slice(self.blocks["g"][0], self.blocks["r_minus"][1])

    def with_groups(self, eq_groups, ineq_groups) -> "ScheduleProgramLayout":
        return self.model_copy(update={"eq_groups": dict(eq_groups), "ineq_groups": dict(ineq_groups)})

    def variable_names(self):
        names = []
        names += [f"g[{g}]" for g in range(self.n_generators)]
        names += [f"r_plus[{g}]" for g in range(self.n_generators)]
        names += [f"r_minus[{g}]" for g in range(self.n_generators)]
        names += [f"A[{g},{j}]" for g in range(self.n_generators) for j in range(self.n_wind)]
        names += ["tau"]
        names += [f"lambda_O[{j}]" for j in range(self.n_wind)]
        names += [f"lambda_C[{j}]" for j in range(self.n_wind)]
        names += [f"s_O[{j},{i}]" for j in range(self.n_wind) for i in range(self.n_samples)]
        names += [f"s_C[{i}]" for i in range(self.n_samples)]
        names += [
            f"s_C[{j},{i},{k}]"
            for j in range(self.n_wind)
            for i in range(self.n_samples)
            for k in range(self.n_k)
        ]
        return names


class ScheduleSolution(DomainModel):
    """Ótimo do agendamento DR-OPF (estágio um)"""

    g: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray
    A: np.ndarray  # geradores x parques
    tau: float
    lambda_O: np.ndarray
    lambda_C: np.ndarray
    s_O: np.ndarray  # parques x N_s
    s_C_i: np.ndarray  # N_s
    s_C_jik: np.ndarray  # parques x N_s x (2n_g + 1)
    objective_total: float
    objective_stage1: float
    objective_worstcase: float
    forecast: np.ndarray  # ŷ efetivamente usado (após recorte)
    regularization: float = 0.0
    status: SolverStatus

    @property
    def stacked(self) -> np.ndarray:
        """G = (g, r⁺, r⁻)"""
        return np.concatenate([self.g, self.r_plus, self.r_minus])


class ScheduleJacobians(DomainModel):
    dG_dyhat: np.ndarray  # |G| x n_w
    dG_deps: np.ndarray  # |G| x n_w
    active_count: int = 0
    degenerate_count: int = 0
    condition: float = 1.0
