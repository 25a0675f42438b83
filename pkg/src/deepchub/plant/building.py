"""Bilinear RC thermal network of the multi-zone building.

Continuous-time dynamics::

    dx/dt = A_c x + B_u u + B_v v + sum_i u_i * (B_vu[i] @ v)

where ``x`` holds node temperatures (degC), ``u`` the building control
inputs (radiator commands, then blind positions), and ``v`` the disturbance
channels. The bilinear terms carry the blind/solar products: a blind input
scales how much facade irradiance reaches its zone, so with blinds fully
closed solar has no effect on the state. Solar appears *only* through those
products (its B_v columns are zero).

Radiator commands are converted to delivered zone heat by the sharing
coefficients alpha: zone ``i`` receives ``u_s_i / alpha_i`` kW, which makes
the heat-pump thermal output exactly ``sum_i u_s_i / alpha_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Simulation guard: node temperatures outside this band mean the integration
# has left the physically meaningful regime.
STATE_BAND = (-20.0, 60.0)


class StateBlowUp(RuntimeError):
    """Raised when simulated temperatures leave the sane range."""


@dataclass
class BuildingModel:
    """Continuous-time bilinear RC model.

    Attributes:
        A_c: (n, n) state matrix, 1/h.
        B_u: (n, n_u) control input matrix.
        B_v: (n, n_v) disturbance input matrix.
        B_vu: list of n_u matrices (n, n_v); entry i couples input i with the
            disturbances bilinearly. Entries may be None when input i has no
            bilinear effect.
        C_c: (p, n) output matrix selecting the measured temperatures.
    """

    A_c: np.ndarray
    B_u: np.ndarray
    B_v: np.ndarray
    B_vu: list
    C_c: np.ndarray

    @property
    def n_states(self) -> int:
        return self.A_c.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.B_u.shape[1]

    @property
    def n_disturbances(self) -> int:
        return self.B_v.shape[1]

    def validate(self) -> None:
        n = self.n_states
        assert self.A_c.shape == (n, n)
        assert self.B_u.shape[0] == n and self.B_v.shape[0] == n
        assert len(self.B_vu) == self.n_inputs
        for B in self.B_vu:
            if B is not None:
                assert B.shape == (n, self.n_disturbances)
        assert self.C_c.shape[1] == n
        eig = np.linalg.eigvals(self.A_c)
        if np.max(eig.real) >= -1e-12:
            raise ValueError(f"A_c must be Hurwitz, max real eigenvalue {np.max(eig.real):.3e}")


@dataclass
class BuildingState:
    x: np.ndarray

    def copy(self) -> "BuildingState":
        return BuildingState(x=self.x.copy())


def _xdot(model: BuildingModel, x, u, v):
    force = model.B_u @ u + model.B_v @ v
    for i, B in enumerate(model.B_vu):
        if B is not None and u[i] != 0.0:
            force = force + u[i] * (B @ v)
    return model.A_c @ x + force


def building_step(model: BuildingModel, state: BuildingState, u, v,
                  dt: float = 1.0, n_sub: int = 10):
    """Advance one sample with classical RK4 on ``n_sub`` substeps.

    The inputs are held constant over the step (zero-order hold). Returns
    ``(new_state, y)`` with ``y = C_c x(t + dt)``.

    Raises:
        StateBlowUp: when any node leaves the sane temperature band.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    x = state.x.astype(float)
    h = dt / n_sub
    for _ in range(n_sub):
        k1 = _xdot(model, x, u, v)
        k2 = _xdot(model, x + 0.5 * h * k1, u, v)
        k3 = _xdot(model, x + 0.5 * h * k2, u, v)
        k4 = _xdot(model, x + h * k3, u, v)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x)) or np.min(x) < STATE_BAND[0] or np.max(x) > STATE_BAND[1]:
        raise StateBlowUp(
            f"node temperatures left {STATE_BAND}: min {np.min(x):.1f}, max {np.max(x):.1f}"
        )
    return BuildingState(x=x), model.C_c @ x


def single_zone_building(U: float = 0.05, C: float = 0.5):
    """One thermal node with one radiator and the ambient as disturbance.

    Used by tests: the discrete map has the closed form
    ``x+ = e^(-a dt) x + (1 - e^(-a dt)) (T_amb + q / U)`` with ``a = U / C``.
    """
    A = np.array([[-U / C]])
    B_u = np.array([[1.0 / C]])
    B_v = np.array([[U / C]])
    return BuildingModel(A_c=A, B_u=B_u, B_v=B_v, B_vu=[None], C_c=np.eye(1))


def default_building(n_zones: int = 5, n_blinds: int = 4,
                     alpha=(11.9, 11.9, 11.9, 27.77, 7.58),
                     solar_gain: float = 0.0018,
                     gain_area: float = 0.022):
    """The synthetic five-zone building used by the benchmark scenarios.

    Node set per zone: the zone air node plus an external-wall, floor, and
    roof mass node; zones are chained through interior-wall nodes and share
    one core mass. Disturbance channels follow the hub layout: one internal
    gain per zone (W/m2), ambient and ground temperature (degC), one solar
    channel per blind (W/m2).

    Conductances are sized so each radiator at full command covers the
    design heat loss with roughly twofold margin, which leaves room for
    morning recovery after night setback.
    """
    alpha = np.asarray(alpha[:n_zones], dtype=float)
    nz, nb = n_zones, n_blinds
    # node indices
    zone = list(range(nz))
    wall = [nz + i for i in range(nz)]
    floor = [2 * nz + i for i in range(nz)]
    roof = [3 * nz + i for i in range(nz)]
    iwall = [4 * nz + i for i in range(nz - 1)]
    core = 5 * nz - 1
    n = 5 * nz

    # heat capacities, kWh/K
    cap = np.empty(n)
    for i in range(nz):
        cap[zone[i]] = 0.12
        cap[wall[i]] = 1.6
        cap[floor[i]] = 2.2
        cap[roof[i]] = 1.2
    for k in iwall:
        cap[k] = 1.0
    cap[core] = 3.0

    # per-zone design loss sized to the radiator capability 5 / alpha_i kW
    # at a 21 K indoor/ambient difference with ~2.2x recovery margin
    U_tot = (5.0 / alpha) / (21.0 * 2.2)

    K = np.zeros((n, n))            # symmetric conductance graph, kW/K
    U_amb = np.zeros(n)             # conductance to ambient
    U_gnd = np.zeros(n)             # conductance to ground

    def link(a, b, u):
        K[a, b] += u
        K[b, a] += u

    for i in range(nz):
        s_wall = 0.50 * U_tot[i]    # series target through the external wall
        s_roof = 0.12 * U_tot[i]
        s_floor = 0.13 * U_tot[i]
        direct = 0.25 * U_tot[i]    # windows and infiltration
        link(zone[i], wall[i], 4.0 * s_wall)
        U_amb[wall[i]] += (4.0 / 3.0) * s_wall
        link(zone[i], roof[i], 4.0 * s_roof)
        U_amb[roof[i]] += (4.0 / 3.0) * s_roof
        link(zone[i], floor[i], 4.0 * s_floor)
        U_gnd[floor[i]] += (4.0 / 3.0) * s_floor
        U_amb[zone[i]] += direct
        link(zone[i], core, 0.006)
    for i in range(nz - 1):
        link(zone[i], iwall[i], 0.012)
        link(iwall[i], zone[i + 1], 0.012)

    A = np.zeros((n, n))
    for a in range(n):
        total = U_amb[a] + U_gnd[a] + np.sum(K[a])
        A[a, a] = -total / cap[a]
        for b in range(n):
            if K[a, b]:
                A[a, b] = K[a, b] / cap[a]

    n_u = nz + nb
    n_v = nz + 2 + nb
    B_u = np.zeros((n, n_u))
    for i in range(nz):
        B_u[zone[i], i] = (1.0 / alpha[i]) / cap[zone[i]]   # radiator heat share

    B_v = np.zeros((n, n_v))
    amb_col, gnd_col = nz, nz + 1
    for a in range(n):
        if U_amb[a]:
            B_v[a, amb_col] = U_amb[a] / cap[a]
        if U_gnd[a]:
            B_v[a, gnd_col] = U_gnd[a] / cap[a]
    for i in range(nz):
        B_v[zone[i], i] = gain_area / cap[zone[i]]          # internal gains, kW per W/m2

    # blinds: bilinear solar scaling into the blinded zone (zones without a
    # blind receive no solar at all); solar B_v columns stay zero
    B_vu = [None] * n_u
    for b in range(nb):
        Bb = np.zeros((n, n_v))
        Bb[zone[b], nz + 2 + b] = solar_gain / cap[zone[b]]
        B_vu[nz + b] = Bb

    C = np.zeros((nz, n))
    for i in range(nz):
        C[i, zone[i]] = 1.0
    model = BuildingModel(A_c=A, B_u=B_u, B_v=B_v, B_vu=B_vu, C_c=C)
    model.validate()
    return model
