from functools import cached_property

import numpy as np

from app.models.base import DomainModel


class NetworkCase(DomainModel):
    """Descrição estática da rede.

    Índices de barra são 0-based; `bus_labels` guarda os rótulos originais.
    Linhas orientadas de `line_from` para `line_to`.
    """

    name: str = "case"
    bus_labels: np.ndarray
    slack_bus: int
    demand: np.ndarray
    gen_bus: np.ndarray
    gen_min: np.ndarray
    gen_max: np.ndarray
    line_from: np.ndarray
    line_to: np.ndarray
    line_limit: np.ndarray
    line_susceptance: np.ndarray
    ptdf: np.ndarray
    wind_bus: np.ndarray
    wind_capacity: np.ndarray
    cost_energy: np.ndarray
    cost_reserve: np.ndarray
    cost_activation: np.ndarray
    cost_in: np.ndarray
    cost_out_up: np.ndarray
    cost_out_dn: np.ndarray

    @property
    def n_buses(self) -> int:
        return int(self.demand.shape[0])

    @property
    def n_generators(self) -> int:
        return int(self.gen_bus.shape[0])

    @property
    def n_lines(self) -> int:
        return int(self.line_limit.shape[0])

    @property
    def n_wind(self) -> int:
        return int(self.wind_bus.shape[0])

    @cached_property
    def gen_incidence(self) -> np.ndarray:
        """S_g: barras x geradores"""
        incidence = np.zeros((self.n_buses, self.n_generators))
        incidence[self.gen_bus, np.arange(self.n_generators)] = 1.0
        return incidence

    @cached_property
    def wind_incidence(self) -> np.ndarray:
        """S_w: barras x parques"""
        incidence = np.zeros((self.n_buses, self.n_wind))
        incidence[self.wind_bus, np.arange(self.n_wind)] = 1.0
        return incidence

    @cached_property
    def ptdf_gen(self) -> np.ndarray:
        """Φ S_g"""
        return self.ptdf @ self.gen_incidence

    @cached_property
    def ptdf_wind(self) -> np.ndarray:
        """Φ S_w"""
        return self.ptdf @ self.wind_incidence

    @property
    def total_demand(self) -> float:
        return float(self.demand.sum())

    @cached_property
    def schedule_cost_vector(self) -> np.ndarray:
        """C = (c_g, c_r, c_r), alinhado com G = (g, r⁺, r⁻)"""
        return np.concatenate([self.cost_energy, self.cost_reserve, self.cost_reserve])

    def net_injection_flows(self, generation: np.ndarray, wind: np.ndarray) -> np.ndarray:
        """Φ[S_g g + S_w y − d]"""
        return self.ptdf_gen @ generation + self.ptdf_wind @ wind - self.ptdf @ self.demand
