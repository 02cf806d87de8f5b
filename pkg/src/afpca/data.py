"""Container for (possibly irregularly sampled) functional observations."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DataValidationError


@dataclass(eq=False)
class FunctionalDataset:
    """Per-subject observation grids and values.

    Parameters
    ----------
    t, y : list of ndarray
        ``t[i]`` and ``y[i]`` hold the ``J_i`` abscissae and values of
        subject ``i``.
    domain : (float, float), optional
        Common interval; defaults to the range of all abscissae.
    ids : list of str, optional
        Subject identifiers; defaults to ``"0", "1", ...``.
    """

    t: List[np.ndarray]
    y: List[np.ndarray]
    domain: Optional[Tuple[float, float]] = None
    ids: Optional[List[str]] = None

    def __post_init__(self):
        if len(self.t) != len(self.y):
            raise DataValidationError("t and y must list the same number of subjects")
        if len(self.t) < 2:
            raise DataValidationError("at least two subjects are required")
        self.t = [np.asarray(ti, dtype=float).ravel() for ti in self.t]
        self.y = [np.asarray(yi, dtype=float).ravel() for yi in self.y]
        for i, (ti, yi) in enumerate(zip(self.t, self.y)):
            if ti.size != yi.size:
                raise DataValidationError(f"subject {i}: {ti.size} abscissae but {yi.size} values")
            if ti.size == 0:
                raise DataValidationError(f"subject {i} has no observations")
            if not (np.all(np.isfinite(ti)) and np.all(np.isfinite(yi))):
                raise DataValidationError(f"subject {i} has non-finite entries")
        lo = min(float(ti.min()) for ti in self.t)
        hi = max(float(ti.max()) for ti in self.t)
        if self.domain is None:
            self.domain = (lo, hi)
        a, b = (float(v) for v in self.domain)
        if not a < b:
            raise DataValidationError(f"degenerate domain [{a}, {b}]")
        if lo < a or hi > b:
            raise DataValidationError(f"abscissae [{lo}, {hi}] fall outside the domain [{a}, {b}]")
        self.domain = (a, b)
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.t))]
        elif len(self.ids) != len(self.t):
            raise DataValidationError("ids must have one entry per subject")
        else:
            self.ids = [str(s) for s in self.ids]

    @classmethod
    def from_matrix(cls, grid, Y, domain=None, ids: Optional[Sequence[str]] = None) -> "FunctionalDataset":
        """Build from an ``I x J`` matrix observed on a shared grid."""
        grid = np.asarray(grid, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if Y.ndim != 2 or Y.shape[1] != grid.size:
            raise DataValidationError("Y must be I x len(grid)")
        return cls([grid.copy() for _ in range(Y.shape[0])], list(Y), domain=domain, ids=ids)

    @property
    def n_subjects(self) -> int:
        return len(self.t)

    @property
    def n_obs(self) -> int:
        return sum(ti.size for ti in self.t)

    def common_grid(self) -> Optional[np.ndarray]:
        """The shared grid if every subject was observed at the same abscissae."""
        t0 = self.t[0]
        if all(ti.shape == t0.shape and np.array_equal(ti, t0) for ti in self.t[1:]):
            return t0
        return None

    def as_matrix(self) -> np.ndarray:
        if self.common_grid() is None:
            raise DataValidationError("subjects are not observed on a common grid")
        return np.vstack(self.y)
