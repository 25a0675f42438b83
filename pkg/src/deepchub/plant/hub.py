"""Energy-hub plant: building, heat pump, and battery behind one step call.

The plant is the ground truth the controller is benchmarked against. Each
step takes the full input row (controls followed by disturbances) and
returns the stacked measurement row (zone temperatures, heat pump thermal
output, battery terminal voltage). Soft actuator ranges saturate as real
hardware would; hard safety limits raise instead of clamping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..layout import HubLayout
from ..validation import DimensionMismatch, as_float_array
from .battery import BatteryParams, BatteryState, battery_step, fresh_state, heat_pump_output
from .building import BuildingModel, BuildingState, building_step, default_building


@dataclass
class HubState:
    building: BuildingState
    battery: BatteryState

    def copy(self) -> "HubState":
        return HubState(building=self.building.copy(), battery=self.battery)


class EnergyHubPlant:
    """Simulated hub with bilinear building, heat pump, and ageing battery.

    Args:
        building: building model; the default five-zone model if omitted.
        battery_params: battery parameter set; defaults if omitted.
        layout: channel layout used to split input rows.
        cop: heat pump coefficient of performance.
        ageing: apply capacity fade and resistance growth while stepping.
            Disabled during data collection so the identification data
            comes from a time-invariant plant.
    """

    def __init__(self, building: BuildingModel | None = None,
                 battery_params: BatteryParams | None = None,
                 layout: HubLayout | None = None,
                 cop: float = 3.0,
                 ageing: bool = True):
        self.layout = layout or HubLayout()
        self.building_model = building if building is not None else default_building(
            n_zones=self.layout.n_zones, n_blinds=self.layout.n_blinds
        )
        self.battery_params = battery_params or BatteryParams()
        self.cop = cop
        self.ageing = ageing
        self.state = HubState(
            building=BuildingState(x=np.zeros(self.building_model.n_states)),
            battery=fresh_state(self.battery_params),
        )
        self.reset()

    def reset(self, soc: float = 0.5, x0: np.ndarray | None = None,
              indoor: float = 21.0) -> None:
        """Reset to a fresh battery at the given soc and a uniform building state."""
        if x0 is None:
            x0 = np.full(self.building_model.n_states, float(indoor))
        else:
            x0 = as_float_array(x0, "x0").ravel()
            if x0.shape[0] != self.building_model.n_states:
                raise DimensionMismatch(
                    f"x0 must hold {self.building_model.n_states} states"
                )
        self.state = HubState(
            building=BuildingState(x=x0.copy()),
            battery=fresh_state(self.battery_params, soc=soc),
        )

    def outputs_at_rest(self) -> np.ndarray:
        """Measurement row for the current state with all inputs at zero."""
        lay = self.layout
        y = np.empty(lay.p)
        y[lay.zone_temps] = self.building_model.C_c @ self.state.building.x
        if lay.has_heat_pump:
            y[lay.heat_output] = 0.0
        if lay.has_battery:
            from .battery import open_circuit_voltage
            y[lay.voltage] = open_circuit_voltage(self.state.battery.soc,
                                                  self.battery_params)
        return y

    def step(self, u_full, dt: float = 1.0) -> np.ndarray:
        """Advance one sample and return the measurement row.

        Args:
            u_full: (m,) input row, controls then disturbances, in layout
                order. Radiator and blind settings saturate to their
                physical ranges; heat pump power must be nonnegative and
                battery current must respect the hard current limit.
            dt: sample time in hours.

        Returns:
            (p,) measurement row: zone temperatures, heat pump thermal
            output, battery terminal voltage.

        Raises:
            NegativeInput: heat pump commanded to cool.
            CurrentLimit: battery current beyond the safety cutout.
            StateBlowUp: building state left the plausible band.
        """
        lay = self.layout
        u_full = as_float_array(u_full, "u_full").ravel()
        if u_full.shape[0] != lay.m:
            raise DimensionMismatch(f"u_full must hold {lay.m} channels, got {u_full.shape[0]}")

        radiators = np.clip(u_full[lay.radiators], 0.0, None)
        blinds = np.clip(u_full[lay.blinds], 0.0, 1.0)
        v = u_full[lay.disturbances]

        y = np.empty(lay.p)
        u_building = np.concatenate([radiators, blinds])
        new_building, zone_temps = building_step(
            self.building_model, self.state.building, u_building, v, dt=dt
        )
        y[lay.zone_temps] = zone_temps

        if lay.has_heat_pump:
            y[lay.heat_output] = heat_pump_output(u_full[lay.heat_pump], cop=self.cop)

        if lay.has_battery:
            new_battery, voltage = battery_step(
                self.state.battery, u_full[lay.battery], dt,
                self.battery_params, ageing=self.ageing,
            )
            y[lay.voltage] = voltage
        else:
            new_battery = self.state.battery

        self.state = HubState(building=new_building, battery=new_battery)
        return y

    def run(self, u_rows, dt: float = 1.0) -> np.ndarray:
        """Apply input rows in sequence; returns the stacked measurements."""
        u_rows = np.atleast_2d(as_float_array(u_rows, "u_rows"))
        out = np.empty((u_rows.shape[0], self.layout.p))
        for t in range(u_rows.shape[0]):
            out[t] = self.step(u_rows[t], dt=dt)
        return out
