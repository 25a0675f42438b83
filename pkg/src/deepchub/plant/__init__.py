"""Plant-side simulation: building, battery, hub facade, and profiles."""

from .battery import (
    BatteryParams,
    BatteryState,
    CurrentLimit,
    NegativeInput,
    K_FADE_DEFAULT,
    battery_step,
    fresh_state,
    heat_pump_output,
    open_circuit_voltage,
    update_ageing,
)
from .building import (
    STATE_BAND,
    BuildingModel,
    BuildingState,
    StateBlowUp,
    building_step,
    default_building,
    single_zone_building,
)
from .hub import EnergyHubPlant, HubState
from .profiles import (
    DisturbanceProfile,
    disturbance_horizon,
    generate_disturbances,
    generate_tariff,
)

__all__ = [
    "BatteryParams",
    "BatteryState",
    "BuildingModel",
    "BuildingState",
    "CurrentLimit",
    "DisturbanceProfile",
    "EnergyHubPlant",
    "HubState",
    "K_FADE_DEFAULT",
    "NegativeInput",
    "STATE_BAND",
    "StateBlowUp",
    "battery_step",
    "building_step",
    "default_building",
    "disturbance_horizon",
    "fresh_state",
    "generate_disturbances",
    "generate_tariff",
    "heat_pump_output",
    "open_circuit_voltage",
    "single_zone_building",
    "update_ageing",
]
