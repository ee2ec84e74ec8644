from models import GridModel, HvdcLink, LoadNode, Machine


def desk_grid() -> GridModel:
    """Настольная схема: 3 генератора, 3 узла нагрузки (40% двигательной), 2 ЛЭП ПТ."""
    return GridModel(
        name="desk",
        base_power_mw=1000.0,
        base_frequency_hz=50.0,
        machines=(
            Machine(inertia=10.0, damping=0.5, governor_gain=20.0,
                    governor_time_constant=6.0, capacity_mw=1000.0, dispatch_mw=500.0),
            Machine(inertia=9.5, damping=0.5, governor_gain=19.0,
                    governor_time_constant=7.0, capacity_mw=950.0, dispatch_mw=480.0),
            Machine(inertia=8.5, damping=0.5, governor_gain=17.0,
                    governor_time_constant=8.0, capacity_mw=850.0, dispatch_mw=420.0),
        ),
        loads=(
            LoadNode(node_id="L1", base_mw=1000.0),
            LoadNode(node_id="L2", base_mw=900.0),
            LoadNode(node_id="L3", base_mw=700.0),
        ),
        hvdc=(
            HvdcLink(name="DC1", base_setpoint_mw=1400.0, ud_min_mw=-300.0,
                     ud_max_mw=300.0, ramp_rate_mw_s=300.0, response_lag_s=0.1,
                     end="receiving"),
            HvdcLink(name="DC2", base_setpoint_mw=200.0, ud_min_mw=-200.0,
                     ud_max_mw=200.0, ramp_rate_mw_s=300.0, response_lag_s=0.1,
                     end="sending"),
        ),
        monitored_buses=("PCC1", "PCC2"),
        voltage_sensitivity=(
            (0.02, 0.01, 0.005, 0.05, 0.01),
            (0.005, 0.01, 0.02, 0.01, 0.05),
        ),
    )


def single_machine_grid() -> GridModel:
    """Одномашинная модель SFR для аналитических проверок."""
    return GridModel(
        name="single",
        base_power_mw=1000.0,
        machines=(
            Machine(inertia=6.0, damping=1.0, governor_gain=20.0,
                    governor_time_constant=8.0, capacity_mw=2000.0, dispatch_mw=1000.0),
        ),
    )
