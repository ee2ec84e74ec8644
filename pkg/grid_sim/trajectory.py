import logging
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from settings import settings

logger = logging.getLogger(__name__)


class TrajectoryRecord(BaseModel):
    """
    Временной ряд одного прогона: отклонение частоты COI (о.е.),
    прокси напряжений y (о.е.), доли разгрузки u_l и отклонения уставок ПТ u_d (МВт).
    Управление в строке k действует на интервале [t_k, t_k+1).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    dt: float
    t: np.ndarray
    omega: np.ndarray
    y: np.ndarray
    ul: np.ndarray
    ud: np.ndarray

    @model_validator(mode="after")
    def check_lengths(self):
        n = len(self.t)
        for name in ("omega", "y", "ul", "ud"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"series '{name}' must have {n} samples")
        if self.ul.size and np.any(np.diff(self.ul, axis=0) < -1e-12):
            raise ValueError("shedding ratios must be non-decreasing in time")
        return self

    def __len__(self) -> int:
        return len(self.t)

    @property
    def n_buses(self) -> int:
        return self.y.shape[1]

    @property
    def n_loads(self) -> int:
        return self.ul.shape[1]

    @property
    def n_links(self) -> int:
        return self.ud.shape[1]

    def index_at(self, time: float) -> int:
        return int(round(time / self.dt))

    def nadir(self) -> float:
        return float(np.min(self.omega))

    def steady_state(self, window_s: float = 1.0) -> float:
        """Среднее значение на последней секунде записи."""
        n = max(1, int(round(window_s / self.dt)))
        return float(np.mean(self.omega[-n:]))

    def to_frame(self) -> pd.DataFrame:
        columns = {"t": self.t, "omega": self.omega}
        for i in range(self.n_buses):
            columns[f"y_{i + 1}"] = self.y[:, i]
        for i in range(self.n_loads):
            columns[f"ul_{i + 1}"] = self.ul[:, i]
        for i in range(self.n_links):
            columns[f"ud_{i + 1}"] = self.ud[:, i]
        return pd.DataFrame(columns)

    def write_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=settings.CSV_FLOAT_FORMAT)

    @classmethod
    def read_csv(cls, path: str | Path, dt: float) -> "TrajectoryRecord":
        frame = pd.read_csv(path, float_precision="round_trip")

        def block(prefix: str) -> np.ndarray:
            names = [c for c in frame.columns if c.startswith(prefix)]
            names.sort(key=lambda c: int(c.split("_")[1]))
            return frame[names].to_numpy(dtype=float).reshape(len(frame), len(names))

        return cls(
            dt=dt,
            t=frame["t"].to_numpy(dtype=float),
            omega=frame["omega"].to_numpy(dtype=float),
            y=block("y_"),
            ul=block("ul_"),
            ud=block("ud_"),
        )
