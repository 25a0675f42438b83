"""Channel bookkeeping for an energy hub's input/output vectors.

The stacked input vector order is: zone radiators, blinds, heat pump
electrical power, battery current, then disturbance channels. Outputs are
zone temperatures, heat-pump thermal output, battery terminal voltage.
Components can be switched off to describe reduced systems (for tests or
other plants); index helpers then shift accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class HubLayout:
    """Which channels exist and where they sit in the stacked vectors.

    The default matches the full hub: 5 zones, blinds in 4 rooms, heat pump,
    battery, and 11 disturbance channels (5 internal gains, ambient and
    ground temperature, 4 facade solar irradiances).
    """

    n_zones: int = 5
    n_blinds: int = 4
    has_heat_pump: bool = True
    has_battery: bool = True
    n_disturbances: int = 11

    def __post_init__(self):
        if self.n_zones < 1:
            raise ValueError("need at least one zone")
        if not 0 <= self.n_blinds <= self.n_zones:
            raise ValueError("n_blinds must be between 0 and n_zones")
        if self.n_disturbances < 0:
            raise ValueError("n_disturbances must be nonnegative")

    # -- input side -----------------------------------------------------------

    @property
    def radiators(self) -> slice:
        return slice(0, self.n_zones)

    @property
    def blinds(self) -> slice:
        return slice(self.n_zones, self.n_zones + self.n_blinds)

    @property
    def heat_pump(self) -> int | None:
        return self.n_zones + self.n_blinds if self.has_heat_pump else None

    @property
    def battery(self) -> int | None:
        if not self.has_battery:
            return None
        return self.n_zones + self.n_blinds + int(self.has_heat_pump)

    @property
    def n_controls(self) -> int:
        return (self.n_zones + self.n_blinds
                + int(self.has_heat_pump) + int(self.has_battery))

    @property
    def disturbances(self) -> slice:
        return slice(self.n_controls, self.n_controls + self.n_disturbances)

    @property
    def m(self) -> int:
        return self.n_controls + self.n_disturbances

    # -- output side ----------------------------------------------------------

    @property
    def zone_temps(self) -> slice:
        return slice(0, self.n_zones)

    @property
    def heat_output(self) -> int | None:
        return self.n_zones if self.has_heat_pump else None

    @property
    def voltage(self) -> int | None:
        if not self.has_battery:
            return None
        return self.n_zones + int(self.has_heat_pump)

    @property
    def p(self) -> int:
        return self.n_zones + int(self.has_heat_pump) + int(self.has_battery)

    # -- labels ----------------------------------------------------------------

    def input_names(self) -> list:
        names = [f"radiator_{i+1}" for i in range(self.n_zones)]
        names += [f"blind_{i+1}" for i in range(self.n_blinds)]
        if self.has_heat_pump:
            names.append("heat_pump_power")
        if self.has_battery:
            names.append("battery_current")
        names += self._disturbance_names()
        return names

    def output_names(self) -> list:
        names = [f"temp_zone_{i+1}" for i in range(self.n_zones)]
        if self.has_heat_pump:
            names.append("heat_output")
        if self.has_battery:
            names.append("battery_voltage")
        return names

    def _disturbance_names(self) -> list:
        if self.n_disturbances == self.n_zones + 2 + self.n_blinds:
            return ([f"gain_zone_{i+1}" for i in range(self.n_zones)]
                    + ["ambient_temp", "ground_temp"]
                    + [f"solar_facade_{i+1}" for i in range(self.n_blinds)])
        return [f"disturbance_{i+1}" for i in range(self.n_disturbances)]

    def input_units(self) -> list:
        units = ["kW"] * self.n_zones + ["1"] * self.n_blinds
        if self.has_heat_pump:
            units.append("kW")
        if self.has_battery:
            units.append("A")
        if self.n_disturbances == self.n_zones + 2 + self.n_blinds:
            units += ["W/m2"] * self.n_zones + ["degC", "degC"] + ["W/m2"] * self.n_blinds
        else:
            units += ["unspecified"] * self.n_disturbances
        return units

    def output_units(self) -> list:
        units = ["degC"] * self.n_zones
        if self.has_heat_pump:
            units.append("kW")
        if self.has_battery:
            units.append("V")
        return units
