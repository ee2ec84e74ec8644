import logging

import numpy as np

from koopman.prediction import predict_rollout
from koopman.regression import KoopmanModel
from models import ControlLimits

logger = logging.getLogger(__name__)


def check_activation(omega: float, limits: ControlLimits) -> bool:
    """Запуск аварийного управления: omega на границе зоны нечувствительности или ниже."""
    return bool(omega <= -limits.activation_threshold_pu)


def predict_max_dc(
    model: KoopmanModel,
    omega_window,
    y_window,
    limits: ControlLimits,
    steps: int,
) -> np.ndarray:
    """Прогноз omega при полной поддержке ПТ и без отключения нагрузки."""
    ud = np.tile(limits.max_support_mw(), (steps, 1))
    ul = np.zeros((steps, model.n_loads))
    return predict_rollout(model, omega_window, y_window, ul, ud, steps)


def needs_shedding(predicted: np.ndarray, limits: ControlLimits) -> bool:
    predicted = np.asarray(predicted, dtype=float)
    if predicted.size == 0:
        raise ValueError("prediction is empty")
    nadir = float(predicted.min())
    shed = nadir < limits.omega_min
    logger.info(
        f"max-DC nadir {nadir:.5f} p.u. vs floor {limits.omega_min:.5f}: "
        f"{'shedding required' if shed else 'DC support is sufficient'}"
    )
    return shed
