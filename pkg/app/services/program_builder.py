from contextlib import contextmanager
from typing import Dict, Iterable, Tuple

import numpy as np
import scipy.sparse as sp


class RowBuilder:
    """Acumula linhas esparsas (coluna, coeficiente) agrupadas por nome"""

    def __init__(self, n_variables: int):
        self.n_variables = n_variables
        self._rows, self._cols, self._vals = [], [], []
        self._rhs = []
        self.groups: Dict[str, Tuple[int, int]] = {}

    @property
    def n_rows(self) -> int:
        return len(self._rhs)

    @contextmanager
    def group(self, name: str):
        start = self.n_rows
        yield self
        self.groups[name] = (start, self.n_rows)

    def add(self, entries: Iterable[Tuple[int, float]], rhs: float) -> int:
        row = self.n_rows
        for col, val in entries:
            if val != 0.0:
                self._rows.append(row)
                self._cols.append(col)
                self._vals.append(float(val))
        self._rhs.append(float(rhs))
        return row

    def matrix(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self._vals, (self._rows, self._cols)), shape=(self.n_rows, self.n_variables)
        )

    def rhs(self) -> np.ndarray:
        return np.array(self._rhs, dtype=float)
