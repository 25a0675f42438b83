"""Benchmark harness: data collection, closed-loop episodes, metrics, reports.

The harness owns everything around the controllers: scenario configuration
(YAML round-trip), excitation-rich data collection with the rule-based
controller, hourly closed-loop episodes with battery ageing enabled, comfort
and cost metrics, prediction-error tables, and the side-by-side comparison
report. All randomness is derived from the scenario seed, so collections and
episodes replay bitwise from their configuration.

Episode logs are directories: ``episode.csv`` holds one row per simulated
hour, ``predictions.npz`` the stored receding-horizon predictions (absent
for the rule-based controller), and ``meta.json`` the scenario fingerprint
plus runtime bookkeeping. ``episode.csv`` is bitwise reproducible; wall-time
lives only in the metadata.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import yaml

from .controller import (
    ComfortSchedule,
    ControlError,
    DeepcConfig,
    DeepcController,
    TariffProfile,
    bounds_for_step_hours,
)
from .layout import HubLayout
from .plant import (
    BatteryParams,
    EnergyHubPlant,
    disturbance_horizon,
    generate_tariff,
)
from .rbc import (
    PrbsGenerator,
    RbcConfig,
    prbs_advance,
    prbs_next,
    rbc_battery_control,
    rbc_blind_control,
    rbc_building_control,
    rbc_heat_pump_power,
)
from .trajectory import HankelBlocks, PEDiagnostic, Trajectory, partition_hankel, check_persistent_excitation


class NotExciting(RuntimeError):
    """Collected data failed the persistent-excitation gate."""


class MissingPredictions(ValueError):
    """Prediction-error metrics need a log with stored predictions."""


class ScenarioMismatch(ValueError):
    """Compared reports come from different scenarios."""


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------


def _retuple(cls, values: dict):
    """Dataclass kwargs from YAML: lists back to tuples where declared."""
    out = {}
    for f in fields(cls):
        if f.name not in values:
            continue
        v = values[f.name]
        out[f.name] = tuple(v) if isinstance(v, list) else v
    return cls(**out)


@dataclass
class ScenarioConfig:
    """Everything one benchmark run depends on.

    The defaults describe the desk-scale scenario: a 10-day winter episode
    on the synthetic five-zone hub with a shortened collection phase sized
    for the smaller initial-window settings. :meth:`paper_scale` restores
    the full-scale horizon and window lengths.
    """

    name: str = "desk"
    seed: int = 0
    start_day: int = 10              # day-of-year of the first metric hour
    horizon_days: int = 10
    warmup_hours: int = 48           # rule-based warm-up before metrics
    T_d: int = 5400                  # collection length, hours
    n_bound: int = 40                # system-order bound for the PE check
    sample_time: float = 1.0
    collect_soc_guards: tuple = (0.25, 0.55)
    collect_battery_rotation: int = 7  # hours/day the collection sweep shifts
    collect_sweep_every: int = 3       # battery sweep-day spacing
    collect_idle_dither: float = 2.0   # battery dither amps between sweep days
    collect_radiator_max: float = 5.0  # bang power during collection, kW
    # The desk benchmark runs a flat tariff: it prices comfort and efficiency
    # without rewarding schedule arbitrage, which the scheduled baseline gets
    # for free. The full-scale config restores the day/night spread.
    tariff_day: float = 0.22
    tariff_night: float = 0.22
    tariff_day_start: int = 7
    tariff_day_end: int = 21
    deepc: DeepcConfig = field(default_factory=lambda: DeepcConfig(T_ini=12, T_f=24))
    rbc: RbcConfig = field(default_factory=RbcConfig)
    # Collection-mode rules: gentler radiator and blind dither keeps the data
    # near the operating point the controller will live at. The battery
    # alternates full charge/discharge sweep days (the voltage model needs
    # the soc and current coverage) with near-idle days (so holding the
    # battery still is an in-distribution behavior), and the sweep phase
    # rotates day by day so no clock hour carries a net charge or discharge
    # signature.
    collect_rbc: RbcConfig = field(default_factory=lambda: RbcConfig(
        prbs_amp_building=1.5, heat_dither=0.1, blind_dither=0.1))
    battery: BatteryParams = field(default_factory=BatteryParams)
    schedule: ComfortSchedule = field(default_factory=ComfortSchedule)

    def validate(self) -> None:
        if self.horizon_days < 1:
            raise ValueError("horizon_days must be at least 1")
        if self.T_d < self.deepc.T_ini + self.deepc.T_f:
            raise ValueError("T_d must cover at least one T_ini + T_f window")
        if self.warmup_hours < self.deepc.T_ini:
            raise ValueError("warm-up must cover the initial window T_ini")
        lo, hi = self.collect_soc_guards
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("collect_soc_guards must satisfy 0 <= lo < hi <= 1")
        if self.collect_sweep_every < 1:
            raise ValueError("collect_sweep_every must be at least 1")
        if self.collect_idle_dither < 0:
            raise ValueError("collect_idle_dither must be non-negative")
        self.rbc.validate()
        self.collect_rbc.validate()
        self.deepc.validate(HubLayout())

    @classmethod
    def paper_scale(cls, **overrides) -> "ScenarioConfig":
        """Full-scale settings: year horizon, T_d=4416, T_ini=30, spread tariff."""
        base = dict(
            name="paper-scale",
            horizon_days=365,
            T_d=4416,
            n_bound=120,
            tariff_day=0.27,
            tariff_night=0.18,
            deepc=DeepcConfig(T_ini=30, T_f=24),
        )
        base.update(overrides)
        return cls(**base)

    def tariff(self) -> TariffProfile:
        return generate_tariff(self.tariff_day, self.tariff_night,
                               self.tariff_day_start, self.tariff_day_end)

    def fingerprint(self) -> dict:
        """The identity fields paired runs must share."""
        return {
            "name": self.name,
            "seed": self.seed,
            "start_day": self.start_day,
            "horizon_days": self.horizon_days,
            "T_d": self.T_d,
        }


def save_scenario(cfg: ScenarioConfig, path) -> None:
    nested = {"deepc": DeepcConfig, "rbc": RbcConfig, "collect_rbc": RbcConfig,
              "battery": BatteryParams, "schedule": ComfortSchedule}
    doc = {
        "scenario": {
            f.name: getattr(cfg, f.name)
            for f in fields(cfg)
            if f.name not in nested
        },
    }
    for key in nested:
        doc[key] = asdict(getattr(cfg, key))
    with open(path, "w") as fh:
        yaml.safe_dump(_plain(doc), fh, sort_keys=False)


def load_scenario(path) -> ScenarioConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    kwargs = dict(doc.get("scenario", {}))
    if "collect_soc_guards" in kwargs:
        kwargs["collect_soc_guards"] = tuple(kwargs["collect_soc_guards"])
    nested = {"deepc": DeepcConfig, "rbc": RbcConfig, "collect_rbc": RbcConfig,
              "battery": BatteryParams, "schedule": ComfortSchedule}
    for key, cls in nested.items():
        if key in doc:
            kwargs[key] = _retuple(cls, doc[key])
    cfg = ScenarioConfig(**kwargs)
    cfg.validate()
    return cfg


def _plain(obj):
    """Recursive conversion to YAML-safe builtins."""
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# data collection
# ---------------------------------------------------------------------------


@dataclass
class CollectionResult:
    trajectory: Trajectory
    blocks: HankelBlocks
    pe: PEDiagnostic
    prbs_seeds: dict


def _prbs_bank(cfg: ScenarioConfig):
    """One independent PRBS stream per dithered actuator channel.

    Streams of equal order share one register orbit, so their phases are
    spaced by strides wider than the collection window: nearby registers
    emit near-shifted copies of the same sequence, which would plant exact
    duplicate rows in the joint input Hankel matrix.
    """
    base = int(cfg.seed)
    rbc = cfg.collect_rbc

    def stream(order, amplitude, phase):
        return prbs_advance(PrbsGenerator(order=order, amplitude=amplitude,
                                          seed=1), phase)

    # order-15 family: 6 streams, stride > T_d + window at full scale
    b15 = (base * 97) % 5200
    # order-10 family: period 1023 < T_d, so only the shift offsets mod the
    # period must stay wider than the window depth
    b10 = (base * 53) % 255
    b9 = (base * 29) % 511
    bank = {
        "radiators": [stream(15, rbc.prbs_amp_building, b15 + i * 5200)
                      for i in range(5)],
        "blinds": [stream(10, rbc.blind_dither, b10 + i * 255)
                   for i in range(4)],
        "heat": stream(9, rbc.heat_dither, b9),
        "battery": stream(15, rbc.prbs_amp_battery, b15 + 5 * 5200),
    }
    seeds = {
        "radiators": [g.register for g in bank["radiators"]],
        "blinds": [g.register for g in bank["blinds"]],
        "heat": bank["heat"].register,
        "battery": bank["battery"].register,
    }
    return bank, seeds


def collect_data(cfg: ScenarioConfig | None = None, dither: bool = True,
                 require_pe: bool = True) -> CollectionResult:
    """Run the rule-based controller with PRBS excitation for ``T_d`` hours.

    Battery ageing is disabled so the identification data comes from a
    time-invariant plant. The battery dither is steered back toward the
    state-of-charge guard band so the voltage data stays in the region the
    controller will operate in. With ``dither=False`` the pure rules run
    instead (the negative control for the excitation gate).

    Raises:
        NotExciting: the excitation check failed and ``require_pe`` is set.
    """
    cfg = cfg or ScenarioConfig()
    cfg.validate()
    layout = HubLayout()
    plant = EnergyHubPlant(battery_params=cfg.battery, layout=layout,
                           cop=cfg.deepc.cop, ageing=False)
    plant.reset(soc=0.5, indoor=21.0)
    bank, seeds = _prbs_bank(cfg)
    guard_lo, guard_hi = cfg.collect_soc_guards

    V = disturbance_horizon(cfg.start_day, 0, cfg.T_d, seed=cfg.seed)
    U = np.zeros((cfg.T_d, layout.m))
    Y = np.zeros((cfg.T_d, layout.p))
    y = plant.outputs_at_rest()
    alpha = cfg.deepc.alpha

    for t in range(cfg.T_d):
        hour = t % 24
        if dither:
            d_rad = np.empty(5)
            for i in range(5):
                d_rad[i], bank["radiators"][i] = prbs_next(bank["radiators"][i])
            d_bl = np.empty(4)
            for i in range(4):
                d_bl[i], bank["blinds"][i] = prbs_next(bank["blinds"][i])
            d_heat, bank["heat"] = prbs_next(bank["heat"])
            d_batt, bank["battery"] = prbs_next(bank["battery"])
            soc = plant.state.battery.soc
            # keep the voltage data in the operating band: charge-only dither
            # below the guard, discharge-only above it
            if soc < guard_lo:
                d_batt = -abs(d_batt)
            elif soc > guard_hi:
                d_batt = abs(d_batt)
        else:
            d_rad = np.zeros(5)
            d_bl = np.zeros(4)
            d_heat = 0.0
            d_batt = 0.0

        lo, hi = bounds_for_step_hours(np.array([hour]), cfg.schedule)
        # heating stays rule-silent overnight so idle heating is as
        # data-typical as the daytime activity
        if lo[0] < cfg.schedule.occupied_band[0]:
            d_rad[:] = 0.0
            d_heat = 0.0
        u = np.zeros(layout.m)
        # a reduced bang power keeps the overshoot above the comfort band
        # small, so band-hugging trajectories dominate the data
        rad_hi = min(cfg.collect_radiator_max, cfg.deepc.radiator_bounds[1])
        u[layout.radiators] = rbc_building_control(
            y[layout.zone_temps], (lo[0], hi[0]), d_rad,
            u_bounds=(cfg.deepc.radiator_bounds[0], rad_hi),
        )
        u[layout.blinds] = rbc_blind_control(hour, cfg.collect_rbc, d_bl)
        u[layout.heat_pump] = rbc_heat_pump_power(
            u[layout.radiators], alpha, cfg.deepc.cop, d_heat
        )
        # sweep days exercise the full soc range at a clock phase that
        # rotates daily; the days between hold near-idle so a still battery
        # is also represented in the data
        day_idx = t // 24
        if day_idx % cfg.collect_sweep_every == 0:
            rot = day_idx * cfg.collect_battery_rotation
            u[layout.battery] = rbc_battery_control(
                hour + rot, plant.state.battery.soc, cfg.collect_rbc, d_batt
            )
        else:
            amp = cfg.collect_rbc.prbs_amp_battery
            scale = cfg.collect_idle_dither / amp if amp else 0.0
            u[layout.battery] = float(np.clip(
                d_batt * scale, *cfg.collect_rbc.current_clamp))
        u[layout.disturbances] = V[t]
        y = plant.step(u, dt=cfg.sample_time)
        U[t] = u
        Y[t] = y

    traj = Trajectory(u=U, y=Y, sample_time=cfg.sample_time)
    blocks = partition_hankel(traj, cfg.deepc.T_ini, cfg.deepc.T_f)
    # the excitation demand applies to the channels the dither can reach,
    # not the deterministic disturbance columns
    pe = check_persistent_excitation(U[:, : layout.n_controls],
                                     cfg.deepc.T_ini + cfg.deepc.T_f,
                                     n_bound=cfg.n_bound)
    blocks.pe = pe
    if require_pe and not pe.is_exciting:
        raise NotExciting(f"collected data is not persistently exciting: {pe.reason}")
    return CollectionResult(trajectory=traj, blocks=blocks, pe=pe,
                            prbs_seeds=seeds)


# ---------------------------------------------------------------------------
# episodes
# ---------------------------------------------------------------------------


@dataclass
class EpisodeLog:
    """Hourly record of one closed-loop episode.

    ``hours`` are absolute simulation hours (``day * 24 + hour``);
    ``predictions[t]`` is the (T_f, p) output prediction made at step ``t``
    (None for the rule-based controller). ``statuses`` hold the per-step
    solver outcome ("rbc" for the baseline, "held" rows mark the
    hold-previous-input fallback).
    """

    controller: str
    hours: np.ndarray            # (H,)
    u: np.ndarray                # (H, m)
    y: np.ndarray                # (H, p)
    soc: np.ndarray              # (H,)
    capacity: np.ndarray         # (H,)
    cycles: np.ndarray           # (H,)
    price: np.ndarray            # (H,)
    statuses: list
    solve_time: np.ndarray       # (H,)
    predictions: np.ndarray | None
    meta: dict
    layout: HubLayout = field(default_factory=HubLayout, repr=False)

    @property
    def n_hours(self) -> int:
        return self.hours.shape[0]

    # -- persistence ---------------------------------------------------------

    def csv_text(self) -> str:
        """The canonical episode.csv content (bitwise-stable formatting)."""
        lay = self.layout
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = (["timestamp"] + lay.input_names() + lay.output_names()
                  + ["soc", "capacity", "cycles", "price", "solver_status"])
        w.writerow(header)
        for t in range(self.n_hours):
            row = [int(self.hours[t])]
            row += [repr(float(v)) for v in self.u[t]]
            row += [repr(float(v)) for v in self.y[t]]
            row += [repr(float(self.soc[t])), repr(float(self.capacity[t])),
                    repr(float(self.cycles[t])), repr(float(self.price[t])),
                    self.statuses[t]]
            w.writerow(row)
        return buf.getvalue()

    def save(self, out_dir) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "episode.csv"), "w", newline="") as fh:
            fh.write(self.csv_text())
        if self.predictions is not None:
            np.savez_compressed(os.path.join(out_dir, "predictions.npz"),
                                predictions=self.predictions,
                                solve_time=self.solve_time)
        with open(os.path.join(out_dir, "meta.json"), "w") as fh:
            json.dump(_plain(self.meta), fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, out_dir) -> "EpisodeLog":
        layout = HubLayout()
        with open(os.path.join(out_dir, "meta.json")) as fh:
            meta = json.load(fh)
        rows = []
        with open(os.path.join(out_dir, "episode.csv"), newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            for row in reader:
                rows.append(row)
        m, p = layout.m, layout.p
        H = len(rows)
        hours = np.array([int(r[0]) for r in rows])
        u = np.array([[float(v) for v in r[1:1 + m]] for r in rows])
        y = np.array([[float(v) for v in r[1 + m:1 + m + p]] for r in rows])
        tail = np.array([[float(v) for v in r[1 + m + p:1 + m + p + 4]] for r in rows])
        statuses = [r[-1] for r in rows]
        pred_path = os.path.join(out_dir, "predictions.npz")
        predictions = None
        solve_time = np.zeros(H)
        if os.path.exists(pred_path):
            with np.load(pred_path) as data:
                predictions = data["predictions"]
                solve_time = data["solve_time"]
        assert header[0] == "timestamp"
        return cls(
            controller=meta.get("controller", "unknown"), hours=hours, u=u, y=y,
            soc=tail[:, 0], capacity=tail[:, 1], cycles=tail[:, 2],
            price=tail[:, 3], statuses=statuses, solve_time=solve_time,
            predictions=predictions, meta=meta, layout=layout,
        )


def _rbc_inputs(cfg: ScenarioConfig, layout: HubLayout, hour: int, y, soc):
    """Baseline rule-based control row (no dither) for one hour."""
    lo, hi = bounds_for_step_hours(np.array([hour]), cfg.schedule)
    u = np.zeros(layout.m)
    u[layout.radiators] = rbc_building_control(
        y[layout.zone_temps], (lo[0], hi[0]),
        u_bounds=cfg.deepc.radiator_bounds,
    )
    u[layout.blinds] = rbc_blind_control(hour, cfg.rbc)
    u[layout.heat_pump] = rbc_heat_pump_power(
        u[layout.radiators], cfg.deepc.alpha, cfg.deepc.cop
    )
    u[layout.battery] = rbc_battery_control(hour, soc, cfg.rbc)
    return u


def run_episode(cfg: ScenarioConfig | None = None, controller: str = "rbc",
                data: CollectionResult | None = None,
                out_dir=None) -> EpisodeLog:
    """Simulate one closed-loop episode with battery ageing enabled.

    The plant first runs ``warmup_hours`` under the baseline rules (ending
    exactly at ``start_day`` 00:00); the logged horizon then covers
    ``horizon_days``. For the predictive controller the disturbance forecast
    is exact (regenerated from the scenario seed), the previous solution is
    shifted as a warm start, and any solver failure falls back to holding
    the previous control for that hour.

    Args:
        cfg: scenario; desk-scale defaults if omitted.
        controller: "deepc" or "rbc".
        data: collection result with Hankel blocks (required for "deepc").
        out_dir: when given, the log is saved there as episode.csv +
            predictions.npz + meta.json.

    Returns:
        EpisodeLog with one record per metric hour.
    """
    cfg = cfg or ScenarioConfig()
    cfg.validate()
    if controller not in ("deepc", "rbc"):
        raise ValueError(f"unknown controller {controller!r}")
    if controller == "deepc" and data is None:
        raise ValueError("the predictive controller needs a collection result")

    t_start = time.perf_counter()
    layout = HubLayout()
    plant = EnergyHubPlant(battery_params=cfg.battery, layout=layout,
                           cop=cfg.deepc.cop, ageing=True)
    plant.reset(soc=0.5, indoor=21.0)
    tariff = cfg.tariff()

    start_abs = cfg.start_day * 24
    warm_abs = start_abs - cfg.warmup_hours
    if warm_abs < 0:
        raise ValueError("warm-up would start before day 0; move start_day")

    ctrl = None
    if controller == "deepc":
        ctrl = DeepcController(
            config=cfg.deepc, schedule=cfg.schedule, layout=layout,
            n_bound=cfg.n_bound, sample_time=cfg.sample_time,
        )
        ctrl.fit(data.trajectory.u, data.trajectory.y)

    # rule-based warm-up; fills the initial window for the predictive path
    u_hist = []
    y_hist = []
    y = plant.outputs_at_rest()
    for k in range(cfg.warmup_hours):
        abs_hour = warm_abs + k
        hour = abs_hour % 24
        u = _rbc_inputs(cfg, layout, hour, y, plant.state.battery.soc)
        u[layout.disturbances] = disturbance_horizon(
            abs_hour // 24, hour, 1, seed=cfg.seed
        )[0]
        y = plant.step(u, dt=cfg.sample_time)
        u_hist.append(u)
        y_hist.append(y)
    u_hist = list(u_hist[-cfg.deepc.T_ini:])
    y_hist = list(y_hist[-cfg.deepc.T_ini:])

    H = cfg.horizon_days * 24
    log_u = np.zeros((H, layout.m))
    log_y = np.zeros((H, layout.p))
    log_soc = np.zeros(H)
    log_cap = np.zeros(H)
    log_cyc = np.zeros(H)
    log_price = np.zeros(H)
    log_status = []
    log_solve = np.zeros(H)
    predictions = (np.zeros((H, cfg.deepc.T_f, layout.p))
                   if controller == "deepc" else None)

    prev_controls = u_hist[-1][: layout.n_controls].copy()
    for t in range(H):
        abs_hour = start_abs + t
        hour = abs_hour % 24
        day = abs_hour // 24
        if controller == "deepc":
            v_forecast = disturbance_horizon(day, hour, cfg.deepc.T_f,
                                             seed=cfg.seed)
            try:
                plan = ctrl.plan(
                    np.asarray(u_hist[-cfg.deepc.T_ini:]),
                    np.asarray(y_hist[-cfg.deepc.T_ini:]),
                    v_forecast, tariff, hour0=hour,
                )
                u = np.concatenate([plan.first_input(), v_forecast[0]])
                predictions[t] = plan.y
                log_status.append(plan.status.value)
                log_solve[t] = plan.solve_time
            except ControlError as err:
                u = np.concatenate([prev_controls, v_forecast[0]])
                predictions[t] = np.nan
                log_status.append(f"held:{err.solution.status.value}")
        else:
            u = _rbc_inputs(cfg, layout, hour, y, plant.state.battery.soc)
            u[layout.disturbances] = disturbance_horizon(day, hour, 1,
                                                         seed=cfg.seed)[0]
            log_status.append("rbc")
        y = plant.step(u, dt=cfg.sample_time)
        u_hist.append(u)
        y_hist.append(y)
        u_hist = u_hist[-cfg.deepc.T_ini:]
        y_hist = y_hist[-cfg.deepc.T_ini:]
        prev_controls = u[: layout.n_controls].copy()

        log_u[t] = u
        log_y[t] = y
        bat = plant.state.battery
        log_soc[t] = bat.soc
        log_cap[t] = bat.capacity
        log_cyc[t] = bat.cycles
        log_price[t] = tariff.price_at(hour)
    runtime = time.perf_counter() - t_start

    meta = dict(cfg.fingerprint())
    meta.update({
        "controller": controller,
        "warmup_hours": cfg.warmup_hours,
        "T_ini": cfg.deepc.T_ini,
        "T_f": cfg.deepc.T_f,
        "capacity_nominal": cfg.battery.capacity_nominal,
        "k_fade": cfg.battery.k_fade,
        "kw_per_amp": cfg.deepc.kw_per_amp,
        "sample_time": cfg.sample_time,
        "runtime_seconds": runtime,
    })
    log = EpisodeLog(
        controller=controller, hours=np.arange(start_abs, start_abs + H),
        u=log_u, y=log_y, soc=log_soc, capacity=log_cap, cycles=log_cyc,
        price=log_price, statuses=log_status, solve_time=log_solve,
        predictions=predictions, meta=meta, layout=layout,
    )
    if out_dir is not None:
        log.save(out_dir)
    return log


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class PredictionError:
    """Mean absolute prediction error per room and prediction hour."""

    rooms: np.ndarray        # (T_f, n_zones)
    voltage: np.ndarray      # (T_f,)

    @property
    def max_room(self) -> float:
        return float(np.max(self.rooms))

    @property
    def max_voltage(self) -> float:
        return float(np.max(self.voltage))


def compute_prediction_error(log: EpisodeLog) -> PredictionError:
    """Error table eps[j, k]: prediction made k hours ahead for room j.

    For every step ``t`` the stored hour-``k`` prediction is compared with
    the realized measurement at ``t + k``; fallback steps (NaN predictions)
    are skipped.

    Raises:
        MissingPredictions: the log has no stored predictions.
    """
    if log.predictions is None:
        raise MissingPredictions(
            "log has no stored predictions (rule-based episodes do not plan)"
        )
    lay = log.layout
    T_f = log.predictions.shape[1]
    H = log.n_hours
    nz = lay.n_zones
    rooms = np.zeros((T_f, nz))
    voltage = np.zeros(T_f)
    for k in range(T_f):
        t_max = H - 1 - k
        if t_max < 0:
            continue
        pred = log.predictions[: t_max + 1, k, :]
        real = log.y[k: k + t_max + 1, :]
        ok = ~np.isnan(pred[:, 0])
        if not np.any(ok):
            continue
        err = np.abs(pred[ok] - real[ok])
        rooms[k] = err[:, lay.zone_temps].mean(axis=0)
        if lay.voltage is not None:
            voltage[k] = err[:, lay.voltage].mean()
    return PredictionError(rooms=rooms, voltage=voltage)


@dataclass
class MetricsReport:
    """Comfort, cost, and battery summary of one episode (Table-1 shape)."""

    controller: str
    lbv_per_room_hour: float     # degC, mean magnitude over violated room-hours
    ubv_per_room_hour: float     # degC
    pct_lbv: float               # % of room-hours below the band
    pct_ubv: float               # % of room-hours above the band
    cost: float                  # currency units
    cycles: float                # equivalent full cycles accrued
    capacity_loss_pct: float     # % of nominal capacity lost
    eps: PredictionError | None
    fingerprint: dict

    def row(self) -> dict:
        return {
            "controller": self.controller,
            "lbv_per_room_hour": self.lbv_per_room_hour,
            "ubv_per_room_hour": self.ubv_per_room_hour,
            "pct_lbv": self.pct_lbv,
            "pct_ubv": self.pct_ubv,
            "cost": self.cost,
            "cycles": self.cycles,
            "capacity_loss_pct": self.capacity_loss_pct,
        }


def compute_violation_metrics(log: EpisodeLog,
                              schedule: ComfortSchedule | None = None) -> MetricsReport:
    """Comfort violations, energy cost, and battery wear for one episode.

    The measurement logged for hour ``t`` is the state at the end of that
    step, so it is held to the comfort band in force at ``t + 1`` (the same
    convention the predictive controller plans with). Violation magnitudes
    average over violated room-hours only; the percentages count violated
    room-hours among all room-hours.
    """
    schedule = schedule or ComfortSchedule()
    lay = log.layout
    temps = log.y[:, lay.zone_temps]
    lo, hi = bounds_for_step_hours(log.hours, schedule)
    lbv = np.maximum(lo[:, None] - temps, 0.0)
    ubv = np.maximum(temps - hi[:, None], 0.0)
    n_rh = temps.size
    pct_lbv = 100.0 * np.count_nonzero(lbv > 0.0) / n_rh
    pct_ubv = 100.0 * np.count_nonzero(ubv > 0.0) / n_rh
    lbv_mag = float(lbv[lbv > 0.0].mean()) if np.any(lbv > 0.0) else 0.0
    ubv_mag = float(ubv[ubv > 0.0].mean()) if np.any(ubv > 0.0) else 0.0

    kw_per_amp = float(log.meta.get("kw_per_amp", 0.066))
    load = log.u[:, lay.heat_pump] if lay.heat_pump is not None \
        else log.u[:, lay.radiators].sum(axis=1)
    if lay.battery is not None:
        p_grid = load - kw_per_amp * log.u[:, lay.battery]
    else:
        p_grid = load
    dt = float(log.meta.get("sample_time", 1.0))
    cost = float(np.sum(p_grid * log.price) * dt)

    cap_nom = float(log.meta.get("capacity_nominal", log.capacity[0]))
    cycles = float(log.cycles[-1] - log.cycles[0])
    loss_pct = 100.0 * (log.capacity[0] - log.capacity[-1]) / cap_nom

    eps = None
    if log.predictions is not None:
        eps = compute_prediction_error(log)
    return MetricsReport(
        controller=log.controller,
        lbv_per_room_hour=lbv_mag, ubv_per_room_hour=ubv_mag,
        pct_lbv=pct_lbv, pct_ubv=pct_ubv, cost=cost,
        cycles=cycles, capacity_loss_pct=loss_pct, eps=eps,
        fingerprint={k: log.meta.get(k) for k in
                     ("name", "seed", "start_day", "horizon_days", "T_d")},
    )


# ---------------------------------------------------------------------------
# comparison report
# ---------------------------------------------------------------------------

# Full-scale reference numbers reported for the original building (different
# plant, weather, and tariff; rendered as a footer, never asserted).
REFERENCE_ROWS = {
    "deepc": {"lbv_per_room_hour": 0.4, "ubv_per_room_hour": 0.0,
              "pct_lbv": 2.8, "pct_ubv": 0.2, "cost": 5909.8},
    "rbc": {"lbv_per_room_hour": 0.8, "ubv_per_room_hour": 0.2,
            "pct_lbv": 5.5, "pct_ubv": 3.5, "cost": 5961.7},
}

_METRIC_FIELDS = ("lbv_per_room_hour", "ubv_per_room_hour", "pct_lbv",
                  "pct_ubv", "cost", "cycles", "capacity_loss_pct")


@dataclass
class ComparisonReport:
    deepc: MetricsReport
    rbc: MetricsReport
    ratios: dict

    def to_text(self) -> str:
        lines = []
        header = f"{'metric':<22}{'deepc':>14}{'rbc':>14}{'ratio':>10}"
        lines.append(header)
        lines.append("-" * len(header))
        d_row, r_row = self.deepc.row(), self.rbc.row()
        for name in _METRIC_FIELDS:
            ratio = self.ratios[name]
            ratio_s = f"{ratio:.3f}" if np.isfinite(ratio) else "-"
            lines.append(
                f"{name:<22}{d_row[name]:>14.4f}{r_row[name]:>14.4f}{ratio_s:>10}"
            )
        lines.append("")
        lines.append("full-scale reference (different plant and weather; "
                     "not directly comparable):")
        for ctrl in ("deepc", "rbc"):
            ref = REFERENCE_ROWS[ctrl]
            lines.append(
                f"  {ctrl:<6} LBV {ref['lbv_per_room_hour']:.1f}  "
                f"UBV {ref['ubv_per_room_hour']:.1f}  "
                f"%LBV {ref['pct_lbv']:.1f}  %UBV {ref['pct_ubv']:.1f}  "
                f"cost {ref['cost']:.1f}"
            )
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "deepc", "rbc", "ratio"])
            d_row, r_row = self.deepc.row(), self.rbc.row()
            for name in _METRIC_FIELDS:
                w.writerow([name, repr(float(d_row[name])),
                            repr(float(r_row[name])),
                            repr(float(self.ratios[name]))])


def compare_report(deepc: MetricsReport, rbc: MetricsReport) -> ComparisonReport:
    """Side-by-side comparison of one paired scenario.

    Raises:
        ScenarioMismatch: the reports carry different scenario fingerprints.
    """
    if deepc.fingerprint != rbc.fingerprint:
        raise ScenarioMismatch(
            f"reports come from different scenarios: "
            f"{deepc.fingerprint} vs {rbc.fingerprint}"
        )
    d_row, r_row = deepc.row(), rbc.row()
    ratios = {}
    for name in _METRIC_FIELDS:
        num, denom = d_row[name], r_row[name]
        if denom:
            ratios[name] = float(num / denom)
        else:
            ratios[name] = 1.0 if num == 0.0 else float("inf")
    return ComparisonReport(deepc=deepc, rbc=rbc, ratios=ratios)
