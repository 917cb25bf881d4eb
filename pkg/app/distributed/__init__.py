"""Modo distribuído: operador do sistema e agentes de previsão"""
