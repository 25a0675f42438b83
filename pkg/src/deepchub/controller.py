"""Data-enabled predictive control of the energy hub.

The controller works directly on measured input/output data: past/future
Hankel blocks replace a parametric model, and every receding-horizon step
solves one convex QP. The decision vector stacks

    z = (g, u_future, y_future, rho, p)

where ``g`` combines data windows, ``u/y`` are the planned input and
predicted output sequences (time-major), ``rho`` holds one comfort slack per
zone per step, and ``p`` is the grid electrical power per step. The cost is

    sum_k (beta p_k + c_k / (2 beta))^2 + lambda_rho ||rho||^2 + lambda_g ||g||^2

subject to the data-consistency equalities, actuator and battery bounds,
and softened comfort bands.

For the receding-horizon hot path the controller solves an equivalent
reduced QP in (g, rho, p) with u/y eliminated through their defining
equalities; both formulations give the same plan, and the full form is what
:func:`assemble_deepc_qp` returns for inspection and post-mortems.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .layout import HubLayout
from .qp import QPSolution, QpSolver, QuadraticProgram, SolveStatus, solve_qp
from .trajectory import (
    HankelBlocks,
    PEDiagnostic,
    Trajectory,
    check_persistent_excitation,
    partition_hankel,
)
from .validation import DimensionMismatch, as_signal


class DataNotExciting(UserWarning):
    """The collected data fails the persistent-excitation check."""


class ControlError(RuntimeError):
    """A control step failed; carries the QP and solution for post-mortems."""

    def __init__(self, message: str, qp: QuadraticProgram | None = None,
                 solution: QPSolution | None = None):
        super().__init__(message)
        self.qp = qp
        self.solution = solution


@dataclass
class DeepcConfig:
    """Controller weights, device couplings, and actuator ranges."""

    T_ini: int = 30               # past window, samples
    T_f: int = 24                 # prediction horizon, samples
    beta: float = 0.01            # grid-power weight
    lambda_g: float = 1000.0      # regularization of g
    lambda_rho: float = 10.0      # comfort-slack weight
    cop: float = 3.0              # heat pump coefficient of performance
    alpha: tuple = (11.9, 11.9, 11.9, 27.77, 7.58)   # radiator sharing
    v_lin: float = 66.0           # V, voltage used to linearize battery power
    radiator_bounds: tuple = (0.0, 5.0)
    blind_bounds: tuple = (0.0, 1.0)
    current_bounds: tuple = (-22.0, 22.0)
    voltage_bounds: tuple = (63.0, 68.0)

    @property
    def kw_per_amp(self) -> float:
        return self.v_lin / 1000.0

    def validate(self, layout: HubLayout | None = None) -> None:
        if self.T_ini < 1 or self.T_f < 1:
            raise ValueError("T_ini and T_f must be positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.lambda_g < 0 or self.lambda_rho < 0:
            raise ValueError("weights must be nonnegative")
        if self.cop <= 0 or self.v_lin <= 0:
            raise ValueError("cop and v_lin must be positive")
        for lo, hi, name in (
            (*self.radiator_bounds, "radiator_bounds"),
            (*self.blind_bounds, "blind_bounds"),
            (*self.current_bounds, "current_bounds"),
            (*self.voltage_bounds, "voltage_bounds"),
        ):
            if lo >= hi:
                raise ValueError(f"{name} must satisfy lo < hi")
        if layout is not None and layout.has_heat_pump \
                and len(self.alpha) < layout.n_zones:
            raise ValueError("alpha needs one sharing coefficient per zone")


@dataclass(frozen=True)
class ComfortSchedule:
    """Zone temperature bands by hour of day.

    The unoccupied window is half-open: hours in [unoccupied_start,
    unoccupied_end) get the relaxed band, so the occupied band applies again
    exactly at ``unoccupied_end``.
    """

    occupied_band: tuple = (21.0, 25.0)
    unoccupied_band: tuple = (10.0, 40.0)
    unoccupied_start: int = 23
    unoccupied_end: int = 5


def comfort_bounds_at(hour: int, schedule: ComfortSchedule):
    """Comfort band at a clock hour (wraps mod 24)."""
    h = int(hour) % 24
    a, b = schedule.unoccupied_start % 24, schedule.unoccupied_end % 24
    if a <= b:
        unoccupied = a <= h < b
    else:
        unoccupied = h >= a or h < b
    return schedule.unoccupied_band if unoccupied else schedule.occupied_band


def bounds_for_step_hours(hours, schedule: ComfortSchedule):
    """Comfort bands for outputs of steps applied at the given clock hours.

    The output sample of a step applied during [h, h+1) is the temperature
    at h+1, so it is held to the band of hour h+1.
    """
    hours = np.atleast_1d(hours)
    lo = np.empty(hours.shape[0])
    hi = np.empty(hours.shape[0])
    for k, h in enumerate(hours):
        lo[k], hi[k] = comfort_bounds_at(int(h) + 1, schedule)
    return lo, hi


@dataclass
class TariffProfile:
    """Electricity price per clock hour, currency/kWh."""

    rates: np.ndarray

    def __post_init__(self):
        self.rates = np.asarray(self.rates, dtype=float).ravel()
        if self.rates.shape[0] != 24:
            raise DimensionMismatch("rates must hold 24 hourly prices")

    def price_at(self, hour: int) -> float:
        return float(self.rates[int(hour) % 24])

    def window(self, hour0: int, n: int) -> np.ndarray:
        idx = (int(hour0) + np.arange(n)) % 24
        return self.rates[idx]


@dataclass
class ControlPlan:
    """One receding-horizon solve: planned inputs, predictions, diagnostics.

    Arrays are time-major (one row per horizon step). ``p_grid`` is
    recomputed from the planned inputs, so ``p_k = u_h_k - (v_lin/1000) *
    u_b_k`` holds exactly.
    """

    u: np.ndarray                 # (T_f, m) planned inputs incl. disturbances
    y: np.ndarray                 # (T_f, p) predicted outputs
    rho: np.ndarray               # (T_f, n_zones) comfort slacks
    p_grid: np.ndarray            # (T_f,) grid electrical power
    g: np.ndarray                 # (N,) data-window combination
    objective: float              # includes the constant tariff term
    status: SolveStatus
    kkt_residual: float
    iterations: int
    solve_time: float
    layout: HubLayout = field(repr=False, default=None)

    def first_input(self) -> np.ndarray:
        """Control channels of the first step (what gets applied)."""
        return self.u[0, : self.layout.n_controls].copy()

    @property
    def radiators(self):
        return self.u[:, self.layout.radiators]

    @property
    def blinds(self):
        return self.u[:, self.layout.blinds]

    @property
    def heat_pump_power(self):
        idx = self.layout.heat_pump
        return self.u[:, idx] if idx is not None else None

    @property
    def battery_current(self):
        idx = self.layout.battery
        return self.u[:, idx] if idx is not None else None


def tariff_constant(prices, beta: float) -> float:
    """The input-independent part of the grid cost, kept in reported objectives."""
    prices = np.asarray(prices, dtype=float)
    return float(np.sum(prices**2) / (4.0 * beta**2))


# ---------------------------------------------------------------------------
# QP assembly


class _Assembly:
    """Constant QP structure for one (blocks, config, layout) triple.

    ``reduced=True`` eliminates u/y through the data equalities, leaving
    (g, rho, p); ``reduced=False`` builds the documented full decision
    vector (g, u, y, rho, p). Right-hand sides and the cost vector are
    filled per step by :meth:`vectors`.
    """

    def __init__(self, blocks: HankelBlocks, cfg: DeepcConfig, layout: HubLayout,
                 reduced: bool):
        m, p = blocks.dims.m, blocks.dims.p
        if m != layout.m or p != layout.p:
            raise DimensionMismatch(
                f"data has {m} inputs / {p} outputs, layout expects {layout.m} / {layout.p}"
            )
        if blocks.T_ini != cfg.T_ini or blocks.T_f != cfg.T_f:
            raise DimensionMismatch("Hankel blocks do not match the configured windows")
        self.blocks = blocks
        self.cfg = cfg
        self.layout = layout
        self.reduced = reduced
        N = blocks.n_cols
        T_ini, T_f = cfg.T_ini, cfg.T_f
        nz, nb = layout.n_zones, layout.n_blinds
        nd = layout.n_disturbances
        self.N, self.T_f, self.T_ini = N, T_f, T_ini

        # future blocks as (step, channel, window) views
        Uf = blocks.U_f.reshape(T_f, m, N)
        Yf = blocks.Y_f.reshape(T_f, p, N)

        rad = layout.radiators
        alpha = np.asarray(cfg.alpha[:nz], dtype=float)
        hp_in, batt = layout.heat_pump, layout.battery
        hp_out, volt = layout.heat_output, layout.voltage

        # load rows: electrical power drawn by heating at each step
        if hp_in is not None:
            load = Uf[:, hp_in, :]                        # (T_f, N)
        else:
            load = Uf[:, rad, :].sum(axis=1)
        if batt is not None:
            balance = load - cfg.kw_per_amp * Uf[:, batt, :]
        else:
            balance = load

        # ----- equality block (rows on g, plus -I on u/y/p columns) -----
        rows_dist = Uf[:, layout.disturbances, :].reshape(T_f * nd, N) if nd else None
        rows_cop = (Yf[:, hp_out, :] - cfg.cop * Uf[:, hp_in, :]) if hp_in is not None else None
        rows_link = (
            Yf[:, hp_out, :] - np.tensordot(1.0 / alpha, Uf[:, rad, :], axes=(0, 1))
        ) if hp_in is not None else None

        nz_Tf = T_f * nz
        self.n_rho = nz_Tf
        self.n_p = T_f

        if reduced:
            n_red = N + nz_Tf + T_f
            self.n_vars = n_red
            self.sl_g = slice(0, N)
            self.sl_rho = slice(N, N + nz_Tf)
            self.sl_p = slice(N + nz_Tf, n_red)

            def gpad(rows):
                out = np.zeros((rows.shape[0], n_red))
                out[:, :N] = rows
                return out

            eq_parts = [gpad(blocks.U_p), gpad(blocks.Y_p)]
            if nd:
                eq_parts.append(gpad(rows_dist))
            if rows_cop is not None:
                eq_parts.append(gpad(rows_cop))
                eq_parts.append(gpad(rows_link))
            bal = gpad(balance)
            bal[:, self.sl_p] = -np.eye(T_f)
            eq_parts.append(bal)
            A_eq = np.vstack(eq_parts)
            # device couplings that the data satisfies identically come out
            # as all-zero rows (their right sides are structurally zero);
            # drop them so the equality block keeps full meaning
            keep = np.abs(A_eq).max(axis=1) > 0.0
            self._eq_keep = keep if not keep.all() else None
            if self._eq_keep is not None:
                A_eq = A_eq[keep]

            in_parts = []
            in_upper = []  # (rows, const upper) pairs; comfort filled later
            in_chans = []  # channels per step of each block, for warm shifting
            rad_rows = Uf[:, rad, :].reshape(T_f * nz, N)
            in_parts.append(gpad(rad_rows)); in_upper.append(np.full(T_f * nz, cfg.radiator_bounds[1]))
            in_parts.append(-gpad(rad_rows)); in_upper.append(np.full(T_f * nz, -cfg.radiator_bounds[0]))
            in_chans += [nz, nz]
            if nb:
                bl_rows = Uf[:, layout.blinds, :].reshape(T_f * nb, N)
                in_parts.append(gpad(bl_rows)); in_upper.append(np.full(T_f * nb, cfg.blind_bounds[1]))
                in_parts.append(-gpad(bl_rows)); in_upper.append(np.full(T_f * nb, -cfg.blind_bounds[0]))
                in_chans += [nb, nb]
            if hp_in is not None:
                in_parts.append(-gpad(Uf[:, hp_in, :])); in_upper.append(np.zeros(T_f))
                in_chans.append(1)
            if batt is not None:
                bat_rows = Uf[:, batt, :]
                in_parts.append(gpad(bat_rows)); in_upper.append(np.full(T_f, cfg.current_bounds[1]))
                in_parts.append(-gpad(bat_rows)); in_upper.append(np.full(T_f, -cfg.current_bounds[0]))
                v_rows = Yf[:, volt, :]
                in_parts.append(gpad(v_rows)); in_upper.append(np.full(T_f, cfg.voltage_bounds[1]))
                in_parts.append(-gpad(v_rows)); in_upper.append(np.full(T_f, -cfg.voltage_bounds[0]))
                in_chans += [1, 1, 1, 1]
            # comfort: y_j - rho <= hi, -y_j - rho <= -lo (bounds filled per step)
            zone_rows = Yf[:, layout.zone_temps, :].reshape(T_f * nz, N)
            rho_eye = np.zeros((T_f * nz, n_red))
            rho_eye[:, self.sl_rho] = np.eye(nz_Tf)
            up = gpad(zone_rows) - rho_eye
            lo = -gpad(zone_rows) - rho_eye
            self._comfort_start = sum(a.shape[0] for a in in_parts)
            in_parts += [up, lo]
            in_upper += [np.zeros(T_f * nz), np.zeros(T_f * nz)]
            in_parts.append(-rho_eye)
            in_upper.append(np.zeros(nz_Tf))
            in_chans += [nz, nz, nz]
            A_in = np.vstack(in_parts)

            # per-step block layout (offset, channels per step), used to
            # shift a previous solution one step for warm starting
            offs = np.concatenate([[0], np.cumsum([a.shape[0] for a in in_parts])])
            self._in_step_blocks = [(int(offs[i]), in_chans[i]) for i in range(len(in_chans))]
            eq_chans = [(0, m, T_ini), (T_ini * m, p, T_ini)]
            off = T_ini * (m + p)
            if nd:
                eq_chans.append((off, nd, T_f)); off += T_f * nd
            if hp_in is not None:
                eq_chans.append((off, 1, T_f)); off += T_f
                eq_chans.append((off, 1, T_f)); off += T_f
            eq_chans.append((off, 1, T_f)); off += T_f
            self._eq_step_blocks = eq_chans
            self._eq_predrop = off

            self.A_eq = A_eq
            self.A_in = A_in
            self.b_in_const = np.concatenate(in_upper)
            h = np.empty(n_red)
            h[self.sl_g] = 2.0 * cfg.lambda_g
            h[self.sl_rho] = 2.0 * cfg.lambda_rho
            h[self.sl_p] = 2.0 * cfg.beta**2
            self.H = sp.diags(h).tocsc()
            self.var_names = None
        else:
            # full decision vector (g, u, y, rho, p)
            n_full = N + T_f * m + T_f * p + nz_Tf + T_f
            self.n_vars = n_full
            self.sl_g = slice(0, N)
            self.sl_u = slice(N, N + T_f * m)
            self.sl_y = slice(N + T_f * m, N + T_f * (m + p))
            self.sl_rho = slice(self.sl_y.stop, self.sl_y.stop + nz_Tf)
            self.sl_p = slice(self.sl_rho.stop, n_full)

            def u_idx(t, ch):
                return self.sl_u.start + t * m + ch

            def y_idx(t, ch):
                return self.sl_y.start + t * p + ch

            # U_p g = u_ini ; Y_p g = y_ini
            eq_blocks = []
            eq_blocks.append(sp.hstack([
                sp.csr_matrix(blocks.U_p), sp.csr_matrix((T_ini * m, n_full - N))
            ]))
            eq_blocks.append(sp.hstack([
                sp.csr_matrix(blocks.Y_p), sp.csr_matrix((T_ini * p, n_full - N))
            ]))
            # U_f g - u = 0 ; Y_f g - y = 0
            I_u = sp.eye(T_f * m)
            eq_blocks.append(sp.hstack([
                sp.csr_matrix(blocks.U_f),
                -I_u,
                sp.csr_matrix((T_f * m, n_full - N - T_f * m)),
            ]))
            I_y = sp.eye(T_f * p)
            eq_blocks.append(sp.hstack([
                sp.csr_matrix(blocks.Y_f),
                sp.csr_matrix((T_f * p, T_f * m)),
                -I_y,
                sp.csr_matrix((T_f * p, nz_Tf + T_f)),
            ]))
            # disturbance pins: u[t, d] = v[t, d-...]
            if nd:
                rr = [u_idx(t, ch) for t in range(T_f)
                      for ch in range(layout.disturbances.start, layout.disturbances.stop)]
                D = sp.csr_matrix(
                    (np.ones(T_f * nd), (np.arange(T_f * nd), rr)),
                    shape=(T_f * nd, n_full),
                )
                eq_blocks.append(D)
            if hp_in is not None:
                # y_h = cop * u_h
                r = np.arange(T_f)
                cop_rows = sp.csr_matrix(
                    (np.concatenate([np.ones(T_f), -cfg.cop * np.ones(T_f)]),
                     (np.concatenate([r, r]),
                      np.concatenate([[y_idx(t, hp_out) for t in range(T_f)],
                                      [u_idx(t, hp_in) for t in range(T_f)]]))),
                    shape=(T_f, n_full),
                )
                eq_blocks.append(cop_rows)
                # y_h = sum_i u_rad_i / alpha_i
                link_r = []
                link_c = []
                link_v = []
                for t in range(T_f):
                    link_r.append(t); link_c.append(y_idx(t, hp_out)); link_v.append(1.0)
                    for i in range(nz):
                        link_r.append(t); link_c.append(u_idx(t, rad.start + i))
                        link_v.append(-1.0 / alpha[i])
                eq_blocks.append(sp.csr_matrix((link_v, (link_r, link_c)), shape=(T_f, n_full)))
            # balance: load - kwpa*u_b - p = 0
            bal_r, bal_c, bal_v = [], [], []
            for t in range(T_f):
                if hp_in is not None:
                    bal_r.append(t); bal_c.append(u_idx(t, hp_in)); bal_v.append(1.0)
                else:
                    for i in range(nz):
                        bal_r.append(t); bal_c.append(u_idx(t, rad.start + i)); bal_v.append(1.0)
                if batt is not None:
                    bal_r.append(t); bal_c.append(u_idx(t, batt)); bal_v.append(-cfg.kw_per_amp)
                bal_r.append(t); bal_c.append(self.sl_p.start + t); bal_v.append(-1.0)
            eq_blocks.append(sp.csr_matrix((bal_v, (bal_r, bal_c)), shape=(T_f, n_full)))
            A_eq = sp.vstack(eq_blocks).tocsr()

            # inequalities: unit rows on u / y / rho
            in_r, in_c, in_v, b_up = [], [], [], []

            def bound_rows(idx_fn, chans, lo, hi):
                for t in range(T_f):
                    for ch in chans:
                        in_r.append(len(b_up)); in_c.append(idx_fn(t, ch)); in_v.append(1.0)
                        b_up.append(hi)
                for t in range(T_f):
                    for ch in chans:
                        in_r.append(len(b_up)); in_c.append(idx_fn(t, ch)); in_v.append(-1.0)
                        b_up.append(-lo)

            bound_rows(u_idx, range(rad.start, rad.stop), *cfg.radiator_bounds)
            if nb:
                bound_rows(u_idx, range(layout.blinds.start, layout.blinds.stop),
                           *cfg.blind_bounds)
            if hp_in is not None:
                for t in range(T_f):
                    in_r.append(len(b_up)); in_c.append(u_idx(t, hp_in)); in_v.append(-1.0)
                    b_up.append(0.0)
            if batt is not None:
                bound_rows(u_idx, [batt], *cfg.current_bounds)
                bound_rows(y_idx, [volt], *cfg.voltage_bounds)
            self._comfort_start = len(b_up)
            for t in range(T_f):        # y_j - rho_tj <= hi
                for j in range(nz):
                    row = len(b_up)
                    in_r += [row, row]
                    in_c += [y_idx(t, j), self.sl_rho.start + t * nz + j]
                    in_v += [1.0, -1.0]
                    b_up.append(0.0)
            for t in range(T_f):        # -y_j - rho_tj <= -lo
                for j in range(nz):
                    row = len(b_up)
                    in_r += [row, row]
                    in_c += [y_idx(t, j), self.sl_rho.start + t * nz + j]
                    in_v += [-1.0, -1.0]
                    b_up.append(0.0)
            for k in range(nz_Tf):      # rho >= 0
                in_r.append(len(b_up)); in_c.append(self.sl_rho.start + k); in_v.append(-1.0)
                b_up.append(0.0)
            A_in = sp.csr_matrix((in_v, (in_r, in_c)), shape=(len(b_up), n_full))

            self.A_eq = A_eq
            self.A_in = A_in
            self.b_in_const = np.array(b_up)
            h = np.zeros(n_full)
            h[self.sl_g] = 2.0 * cfg.lambda_g
            h[self.sl_rho] = 2.0 * cfg.lambda_rho
            h[self.sl_p] = 2.0 * cfg.beta**2
            self.H = sp.diags(h).tocsc()
            names = [f"g[{i}]" for i in range(N)]
            in_names = layout.input_names()
            out_names = layout.output_names()
            names += [f"u[{t},{in_names[ch]}]" for t in range(T_f) for ch in range(m)]
            names += [f"y[{t},{out_names[ch]}]" for t in range(T_f) for ch in range(p)]
            names += [f"rho[{t},{j}]" for t in range(T_f) for j in range(nz)]
            names += [f"p[{t}]" for t in range(T_f)]
            self.var_names = names
            self._eq_keep = None

        self._nd = nd
        self._m, self._p = m, p

    # -- per-step vectors ------------------------------------------------------

    def vectors(self, u_ini, y_ini, v_forecast, prices, hour0, schedule):
        cfg, layout = self.cfg, self.layout
        T_ini, T_f, nz = cfg.T_ini, cfg.T_f, layout.n_zones
        b_parts = [np.asarray(u_ini, dtype=float).ravel(),
                   np.asarray(y_ini, dtype=float).ravel()]
        if not self.reduced:
            b_parts.append(np.zeros(T_f * (self._m + self._p)))
        if self._nd:
            b_parts.append(np.asarray(v_forecast, dtype=float).reshape(T_f * self._nd))
        if layout.has_heat_pump:
            b_parts.append(np.zeros(2 * T_f))
        b_parts.append(np.zeros(T_f))    # balance
        b_eq = np.concatenate(b_parts)
        if self._eq_keep is not None:
            dropped = b_eq[~self._eq_keep]
            if dropped.size and np.max(np.abs(dropped)) > 1e-9:
                raise ValueError(
                    "conditions are inconsistent with identically-zero data rows"
                )
            b_eq = b_eq[self._eq_keep]

        b_in = self.b_in_const.copy()
        hours = hour0 + np.arange(T_f)
        lo, hi = bounds_for_step_hours(hours, schedule)
        lo_rows = np.repeat(-lo, nz)
        hi_rows = np.repeat(hi, nz)
        cs = self._comfort_start
        b_in[cs: cs + T_f * nz] = hi_rows
        b_in[cs + T_f * nz: cs + 2 * T_f * nz] = lo_rows

        f = np.zeros(self.n_vars)
        f[self.sl_p] = np.asarray(prices, dtype=float).ravel()
        return f, b_eq, b_in

    def shift_warm(self, sol: QPSolution) -> QPSolution:
        """Shift a previous solution one step forward along the horizon.

        Receding-horizon warm start: per-step primal blocks (rho, p) and the
        per-step constraint multipliers move up one step with the last step
        repeated, so the active-set guess lines up with the new clock hour.
        ``g`` is kept as is; it only seeds the splitting iterations.
        """
        if not self.reduced:
            return sol

        def roll(flat, off, c, nsteps):
            view = flat[off: off + nsteps * c].reshape(nsteps, c)
            view[:-1] = view[1:]

        z = sol.z_star.copy()
        nz, T_f = self.layout.n_zones, self.T_f
        roll(z, self.sl_rho.start, nz, T_f)
        roll(z, self.sl_p.start, 1, T_f)

        lam = sol.duals_in.copy()
        for off, c in self._in_step_blocks:
            roll(lam, off, c, T_f)

        if self._eq_keep is None:
            nu = sol.duals_eq.copy()
            for off, c, nsteps in self._eq_step_blocks:
                roll(nu, off, c, nsteps)
        else:
            nu_pre = np.zeros(self._eq_predrop)
            nu_pre[self._eq_keep] = sol.duals_eq
            for off, c, nsteps in self._eq_step_blocks:
                roll(nu_pre, off, c, nsteps)
            nu = nu_pre[self._eq_keep]
        return QPSolution(
            z_star=z, duals_eq=nu, duals_in=lam, objective=sol.objective,
            status=sol.status, kkt_residual=np.inf, iterations=0,
        )

    def check_inputs(self, u_ini, y_ini, v_forecast, prices):
        cfg, layout = self.cfg, self.layout
        u_ini = np.asarray(u_ini, dtype=float)
        y_ini = np.asarray(y_ini, dtype=float)
        if u_ini.shape != (cfg.T_ini, layout.m):
            raise DimensionMismatch(
                f"u_ini must be ({cfg.T_ini}, {layout.m}), got {u_ini.shape}"
            )
        if y_ini.shape != (cfg.T_ini, layout.p):
            raise DimensionMismatch(
                f"y_ini must be ({cfg.T_ini}, {layout.p}), got {y_ini.shape}"
            )
        if layout.n_disturbances:
            v = np.asarray(v_forecast, dtype=float)
            if v.shape != (cfg.T_f, layout.n_disturbances):
                raise DimensionMismatch(
                    f"v_forecast must be ({cfg.T_f}, {layout.n_disturbances}), got {v.shape}"
                )
        prices = np.asarray(prices, dtype=float).ravel()
        if prices.shape[0] != cfg.T_f:
            raise DimensionMismatch(f"prices must hold {cfg.T_f} entries")
        return u_ini, y_ini, prices


def assemble_deepc_qp(blocks: HankelBlocks, u_ini, y_ini, v_forecast, prices,
                      cfg: DeepcConfig | None = None,
                      schedule: ComfortSchedule | None = None,
                      layout: HubLayout | None = None,
                      hour0: int = 0,
                      pe: PEDiagnostic | None = None) -> QuadraticProgram:
    """Build the full control QP over the decision vector (g, u, y, rho, p).

    ``hour0`` is the clock hour at which the first planned input applies
    (needed to place the comfort schedule along the horizon). When a
    persistent-excitation diagnostic is supplied and negative, a
    :class:`DataNotExciting` warning is emitted; assembly proceeds anyway.
    """
    cfg = cfg or DeepcConfig()
    schedule = schedule or ComfortSchedule()
    layout = layout or HubLayout()
    cfg.validate(layout)
    if pe is None and blocks.pe is not None:
        pe = blocks.pe
    if pe is not None and not pe.is_exciting:
        warnings.warn(f"data not persistently exciting: {pe.reason}", DataNotExciting)
    asm = _Assembly(blocks, cfg, layout, reduced=False)
    u_ini, y_ini, prices = asm.check_inputs(u_ini, y_ini, v_forecast, prices)
    f, b_eq, b_in = asm.vectors(u_ini, y_ini, v_forecast, prices, hour0, schedule)
    return QuadraticProgram(H=asm.H, f=f, A_eq=asm.A_eq, b_eq=b_eq,
                            A_in=asm.A_in, b_in=b_in, var_names=asm.var_names)


def _plan_from_g(asm: _Assembly, sol: QPSolution, prices, layout: HubLayout,
                 v_forecast, solve_time: float) -> ControlPlan:
    blocks, cfg = asm.blocks, asm.cfg
    T_f, m, p = cfg.T_f, layout.m, layout.p
    g = sol.z_star[asm.sl_g]
    u = (blocks.U_f @ g).reshape(T_f, m)
    y = (blocks.Y_f @ g).reshape(T_f, p)
    if layout.n_disturbances:
        u[:, layout.disturbances] = np.asarray(v_forecast, dtype=float)
    # Project controls onto their boxes: the QP satisfies the bounds only to
    # solver tolerance, and downstream actuators treat sign violations as
    # hard faults.
    u[:, layout.radiators] = np.clip(u[:, layout.radiators], *cfg.radiator_bounds)
    u[:, layout.blinds] = np.clip(u[:, layout.blinds], *cfg.blind_bounds)
    if layout.heat_pump is not None:
        u[:, layout.heat_pump] = np.clip(u[:, layout.heat_pump], 0.0, None)
    if layout.battery is not None:
        u[:, layout.battery] = np.clip(u[:, layout.battery], *cfg.current_bounds)
    rho = sol.z_star[asm.sl_rho].reshape(T_f, layout.n_zones)
    if layout.heat_pump is not None:
        load = u[:, layout.heat_pump]
    else:
        load = u[:, layout.radiators].sum(axis=1)
    if layout.battery is not None:
        p_grid = load - cfg.kw_per_amp * u[:, layout.battery]
    else:
        p_grid = load.copy()
    return ControlPlan(
        u=u, y=y, rho=rho, p_grid=p_grid, g=g.copy(),
        objective=sol.objective + tariff_constant(prices, cfg.beta),
        status=sol.status, kkt_residual=sol.kkt_residual,
        iterations=sol.iterations, solve_time=solve_time, layout=layout,
    )


def deepc_step(u_history, y_history, blocks: HankelBlocks, v_forecast, prices,
               cfg: DeepcConfig | None = None,
               schedule: ComfortSchedule | None = None,
               layout: HubLayout | None = None,
               hour0: int = 0,
               warm_start: QPSolution | None = None,
               tol: float = 1e-6, max_iter: int = 50000) -> ControlPlan:
    """One receding-horizon step on the full QP (reference path).

    ``u_history``/``y_history`` must hold at least ``T_ini`` samples; the
    most recent ``T_ini`` become the initial condition. Raises
    :class:`ControlError` with the QP attached when the solve fails.
    """
    cfg = cfg or DeepcConfig()
    schedule = schedule or ComfortSchedule()
    layout = layout or HubLayout()
    u_hist = as_signal(u_history, "u_history")
    y_hist = as_signal(y_history, "y_history")
    if u_hist.shape[0] < cfg.T_ini or y_hist.shape[0] < cfg.T_ini:
        raise ValueError(f"history must hold at least T_ini={cfg.T_ini} samples")
    qp = assemble_deepc_qp(
        blocks, u_hist[-cfg.T_ini:], y_hist[-cfg.T_ini:], v_forecast,
        prices, cfg=cfg, schedule=schedule, layout=layout, hour0=hour0,
    )
    t0 = time.perf_counter()
    sol = solve_qp(qp, warm_start=warm_start, tol=tol, max_iter=max_iter)
    dt = time.perf_counter() - t0
    if sol.status is not SolveStatus.OPTIMAL:
        raise ControlError(f"control QP solve failed: {sol.status.value}",
                           qp=qp, solution=sol)
    asm = _Assembly(blocks, cfg, layout, reduced=False)
    prices_arr = np.asarray(prices, dtype=float).ravel()
    return _plan_from_g(asm, sol, prices_arr, layout, v_forecast, dt)


class DeepcController(BaseEstimator):
    """Receding-horizon controller fitted on measured trajectories.

    Follows the estimator protocol: ``fit(U, Y)`` ingests the collected
    input/output data (building the Hankel blocks, running the
    persistent-excitation check, and caching the QP structure), after which
    :meth:`plan` solves one receding-horizon step and :meth:`predict`
    returns the predicted output trajectory for the same arguments. All
    constructor arguments are hyperparameters in the ``get_params`` sense.
    """

    def __init__(self, config: DeepcConfig | None = None,
                 schedule: ComfortSchedule | None = None,
                 layout: HubLayout | None = None,
                 n_bound: int = 120,
                 check_excitation: bool = True,
                 solver_tol: float = 1e-6,
                 solver_max_iter: int = 50000,
                 sample_time: float = 1.0):
        self.config = config
        self.schedule = schedule
        self.layout = layout
        self.n_bound = n_bound
        self.check_excitation = check_excitation
        self.solver_tol = solver_tol
        self.solver_max_iter = solver_max_iter
        self.sample_time = sample_time

    # -- fitting ---------------------------------------------------------------

    def fit(self, U, Y) -> "DeepcController":
        """Ingest collected data: U is (T_d, m) inputs, Y is (T_d, p) outputs."""
        cfg = self.config or DeepcConfig()
        layout = self.layout or HubLayout()
        cfg.validate(layout)
        U = as_signal(U, "U")
        Y = as_signal(Y, "Y")
        traj = Trajectory(u=U, y=Y, sample_time=self.sample_time)
        if traj.dims.m != layout.m or traj.dims.p != layout.p:
            raise DimensionMismatch(
                f"data is {traj.dims.m} x {traj.dims.p} channels, layout expects "
                f"{layout.m} x {layout.p}"
            )
        self.blocks_ = partition_hankel(traj, cfg.T_ini, cfg.T_f)
        # Excitation is a property of the channels the experiment chooses;
        # deterministic disturbance channels are exempt from the rank demand.
        self.pe_ = check_persistent_excitation(U[:, : layout.n_controls],
                                               cfg.T_ini + cfg.T_f,
                                               n_bound=self.n_bound)
        self.blocks_.pe = self.pe_
        if self.check_excitation and not self.pe_.is_exciting:
            warnings.warn(f"data not persistently exciting: {self.pe_.reason}",
                          DataNotExciting)
        self._cfg = cfg
        self._layout = layout
        self._schedule = self.schedule or ComfortSchedule()
        self._asm = _Assembly(self.blocks_, cfg, layout, reduced=True)
        self._solver = QpSolver(tol=self.solver_tol, max_iter=self.solver_max_iter)
        self._last_solution = None
        self.n_features_in_ = layout.m
        return self

    def _check_fitted(self):
        if not hasattr(self, "blocks_"):
            raise NotFittedError("controller is not fitted; call fit(U, Y) first")

    # -- control ---------------------------------------------------------------

    def plan(self, u_recent, y_recent, v_forecast=None, prices=None,
             hour0: int = 0, warm_start: bool = True) -> ControlPlan:
        """Solve one receding-horizon step.

        Args:
            u_recent: (>= T_ini, m) most recent applied inputs.
            y_recent: (>= T_ini, p) matching measured outputs.
            v_forecast: (T_f, n_disturbances) forecast, if the layout has
                disturbance channels.
            prices: (T_f,) tariff window or a TariffProfile.
            hour0: clock hour at which the first planned input applies.
            warm_start: reuse the previous solve's point and active set.

        Raises:
            ControlError: the QP was infeasible or hit the iteration limit;
                the full QP and raw solution ride along for post-mortems.
        """
        self._check_fitted()
        cfg, layout = self._cfg, self._layout
        u_hist = as_signal(u_recent, "u_recent")
        y_hist = as_signal(y_recent, "y_recent")
        if u_hist.shape[0] < cfg.T_ini or y_hist.shape[0] < cfg.T_ini:
            raise ValueError(f"history must hold at least T_ini={cfg.T_ini} samples")
        if isinstance(prices, TariffProfile):
            prices = prices.window(hour0, cfg.T_f)
        if prices is None:
            prices = np.zeros(cfg.T_f)
        u_ini, y_ini, prices = self._asm.check_inputs(
            u_hist[-cfg.T_ini:], y_hist[-cfg.T_ini:], v_forecast, prices
        )
        f, b_eq, b_in = self._asm.vectors(u_ini, y_ini, v_forecast, prices,
                                          hour0, self._schedule)
        qp = QuadraticProgram(H=self._asm.H, f=f, A_eq=self._asm.A_eq,
                              b_eq=b_eq, A_in=self._asm.A_in, b_in=b_in)
        ws = None
        if warm_start and self._last_solution is not None:
            ws = self._asm.shift_warm(self._last_solution)
        t0 = time.perf_counter()
        sol = self._solver.solve(qp, warm_start=ws)
        dt = time.perf_counter() - t0
        if sol.status is not SolveStatus.OPTIMAL:
            full = assemble_deepc_qp(
                self.blocks_, u_ini, y_ini, v_forecast, prices,
                cfg=cfg, schedule=self._schedule, layout=layout, hour0=hour0,
            )
            raise ControlError(f"control QP solve failed: {sol.status.value}",
                               qp=full, solution=sol)
        self._last_solution = sol
        return _plan_from_g(self._asm, sol, prices, layout, v_forecast, dt)

    def predict(self, u_recent, y_recent, v_forecast=None, prices=None,
                hour0: int = 0) -> np.ndarray:
        """Predicted output trajectory (T_f, p) of the planned step."""
        return self.plan(u_recent, y_recent, v_forecast, prices, hour0).y
