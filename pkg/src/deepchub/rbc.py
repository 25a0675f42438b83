"""Rule-based control: excitation-rich data collection and the baseline.

The same threshold rules serve two purposes. In data-collection mode every
actuator carries a pseudo-random binary dither on top of its rule, which
makes the recorded trajectories persistently exciting. In baseline mode the
dithers are zero and the rules become the deterministic comparison
controller: bang-bang radiators against the comfort band, a fixed daily
battery charge/discharge schedule, and a daylight blind schedule.

PRBS signals come from maximal-length linear-feedback shift registers, so
each stream is two-level, deterministic in its seed, and has period
``2**order - 1`` with near-zero autocorrelation across one period.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

# Maximal-length tap sets (Fibonacci form, 1-indexed bit positions). Each
# entry generates a register cycle through all 2**order - 1 nonzero states.
_TAPS = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    15: (15, 14),
    16: (16, 15, 13, 4),
    20: (20, 17),
}


class ZeroRegister(ValueError):
    """Raised when a shift register would start (and stay) all-zero."""


@dataclass(frozen=True)
class PrbsGenerator:
    """State of one pseudo-random binary stream.

    Attributes:
        order: register length; the sequence period is ``2**order - 1``.
        amplitude: output magnitude; samples are ``-amplitude`` or
            ``+amplitude``.
        hold: samples per chip (each register step is held this many calls).
        seed: initial register fill; only the low ``order`` bits are used.
        register: current register contents.
        phase: samples already emitted for the current chip.
    """

    order: int = 10
    amplitude: float = 1.0
    hold: int = 1
    seed: int = 1
    register: int = -1
    phase: int = 0

    def __post_init__(self):
        if self.order not in _TAPS:
            raise ValueError(
                f"no maximal-length taps for order {self.order}; "
                f"available: {sorted(_TAPS)}"
            )
        if self.hold < 1:
            raise ValueError("hold must be at least 1")
        if self.register < 0:
            object.__setattr__(self, "register",
                               self.seed & ((1 << self.order) - 1))
        if self.register == 0:
            raise ZeroRegister("shift register must start nonzero")

    @property
    def period(self) -> int:
        return (1 << self.order) - 1


def prbs_next(gen: PrbsGenerator):
    """Emit one sample; returns ``(value, advanced generator)``.

    The output follows the register's low bit: ``+amplitude`` for 1 and
    ``-amplitude`` for 0. The register shifts once per ``hold`` samples.
    """
    bit = gen.register & 1
    value = gen.amplitude if bit else -gen.amplitude
    phase = gen.phase + 1
    if phase < gen.hold:
        return value, replace(gen, phase=phase)
    feedback = 0
    for tap in _TAPS[gen.order]:
        feedback ^= (gen.register >> (gen.order - tap)) & 1
    new_register = (gen.register >> 1) | (feedback << (gen.order - 1))
    return value, replace(gen, register=new_register, phase=0)


def prbs_sequence(gen: PrbsGenerator, n: int):
    """Convenience: ``n`` samples and the advanced generator."""
    out = np.empty(n)
    for k in range(n):
        out[k], gen = prbs_next(gen)
    return out, gen


def prbs_advance(gen: PrbsGenerator, steps: int) -> PrbsGenerator:
    """Fast-forward the register by ``steps`` shifts (ignores ``hold``).

    Streams of the same order share one register orbit, so two generators
    whose phases differ by less than the window of interest are near-shifts
    of each other. Advancing by controlled strides yields streams that stay
    genuinely distinct over that window.
    """
    order, taps = gen.order, _TAPS[gen.order]
    reg = gen.register
    for _ in range(steps):
        feedback = 0
        for tap in taps:
            feedback ^= (reg >> (order - tap)) & 1
        reg = (reg >> 1) | (feedback << (order - 1))
    return replace(gen, register=reg, phase=0)


@dataclass(frozen=True)
class RbcConfig:
    """Parameters of the rule-based schedules.

    The battery charges overnight until ``soc_high``, rests one hour, then
    serves load over the day until ``soc_low``; below that it waits for the
    next charge window. PRBS amplitudes apply in data-collection mode only.
    """

    charge_window: tuple = (0, 4)        # hours, half-open
    discharge_window: tuple = (5, 23)    # hours, half-open
    charge_current: float = 15.0         # A magnitude for both directions
    soc_high: float = 0.9
    soc_low: float = 0.2
    prbs_amp_building: float = 5.0       # kW radiator dither
    prbs_amp_battery: float = 15.0       # A battery dither
    blind_dither: float = 0.25           # blind-position dither
    heat_dither: float = 0.3             # kW heat-pump dither
    current_clamp: tuple = (-22.0, 22.0)
    blinds_day: tuple = (7, 19)          # blinds open during these hours

    def validate(self) -> None:
        if not 0.0 <= self.soc_low < self.soc_high <= 1.0:
            raise ValueError("need 0 <= soc_low < soc_high <= 1")
        # lo == hi is an empty window (rule disabled)
        for name in ("charge_window", "discharge_window", "blinds_day"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi <= 24):
                raise ValueError(f"{name} must lie within one day")
        if self.charge_current <= 0.0:
            raise ValueError("charge_current must be positive")


def rbc_building_control(y_s, bounds, delta=0.0, u_bounds=(0.0, 5.0)):
    """Bang-bang radiators against the comfort band, plus dither.

    Per zone: full power below the lower bound, off above the upper bound,
    off inside the band; the dither ``delta`` is added before clamping to
    the actuator range.

    Args:
        y_s: (nz,) zone temperatures.
        bounds: (y_min, y_max) scalars or per-zone arrays.
        delta: scalar or (nz,) PRBS values.
        u_bounds: (u_min, u_max) radiator range in kW.

    Returns:
        (nz,) radiator commands.
    """
    y_s = np.asarray(y_s, dtype=float)
    y_min, y_max = (np.broadcast_to(np.asarray(b, dtype=float), y_s.shape)
                    for b in bounds)
    u_min, u_max = u_bounds
    base = np.where(y_s <= y_min, u_max, np.where(y_s >= y_max, u_min, 0.0))
    return np.clip(base + delta, u_min, u_max)


def rbc_battery_control(hour_of_day, soc: float, cfg: RbcConfig | None = None,
                        delta: float = 0.0) -> float:
    """Scheduled battery current for one hour (positive discharges).

    Charge at ``-charge_current`` during the charge window until
    ``soc_high``; discharge at ``+charge_current`` during the discharge
    window until ``soc_low``; otherwise idle. The dither rides on top in
    every branch and the result saturates at the actuator clamp.
    """
    cfg = cfg or RbcConfig()
    hour = int(hour_of_day) % 24
    i = 0.0
    c_lo, c_hi = cfg.charge_window
    d_lo, d_hi = cfg.discharge_window
    if c_lo <= hour < c_hi and soc < cfg.soc_high:
        i = -cfg.charge_current
    elif d_lo <= hour < d_hi and soc > cfg.soc_low:
        i = cfg.charge_current
    return float(np.clip(i + delta, *cfg.current_clamp))


def rbc_blind_control(hour_of_day, cfg: RbcConfig | None = None, delta=0.0,
                      n_blinds: int = 4) -> np.ndarray:
    """Daylight blind schedule: open during ``blinds_day``, closed at night."""
    cfg = cfg or RbcConfig()
    hour = int(hour_of_day) % 24
    lo, hi = cfg.blinds_day
    base = 1.0 if lo <= hour < hi else 0.0
    return np.clip(np.full(n_blinds, base) + delta, 0.0, 1.0)


def rbc_heat_pump_power(u_s, alpha, cop: float = 3.0, delta: float = 0.0) -> float:
    """Electrical heat-pump power matching the radiator heat demand.

    The thermal output must cover ``sum_i u_s_i / alpha_i``; dividing by the
    COP gives the electrical input. The dither keeps the channel exciting in
    data collection; the result never goes negative.
    """
    u_s = np.asarray(u_s, dtype=float)
    alpha = np.asarray(alpha, dtype=float)[: u_s.shape[0]]
    return float(max(np.sum(u_s / alpha) / cop + delta, 0.0))
