"""Subcomandos da linha de comando"""
