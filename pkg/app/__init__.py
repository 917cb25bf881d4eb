"""Calibração de previsões eólicas orientada a custo com OPF distribucionalmente robusto"""

__version__ = "0.1.0"
