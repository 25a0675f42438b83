"""Trajectory containers, Hankel matrices, and persistent-excitation checks.

Measured input/output data is stored time-major: a signal with ``T`` samples
and ``c`` channels is a ``(T, c)`` array whose row ``t`` is the channel vector
at sample ``t``. Hankel matrices stack ``L`` consecutive channel vectors per
column, so column ``j`` of ``build_hankel(w, L)`` is
``[w[j]; w[j+1]; ...; w[j+L-1]]`` flattened channel-fastest.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .validation import DimensionMismatch, as_signal, check_positive_int

# Relative singular-value cutoff: sigma_i / sigma_max below this counts as zero.
RANK_RTOL = 1e-9


class WindowTooLong(ValueError):
    """Raised when a requested Hankel depth exceeds the data length."""


@dataclass(frozen=True)
class SignalDims:
    """Channel counts of an input/output data set.

    Attributes:
        m: number of input channels.
        p: number of output channels.
    """

    m: int
    p: int

    def __post_init__(self):
        check_positive_int(self.m, "m")
        check_positive_int(self.p, "p")


@dataclass
class Trajectory:
    """A measured input/output trajectory sampled on a fixed grid.

    Attributes:
        u: inputs, shape ``(T, m)``.
        y: outputs, shape ``(T, p)``.
        sample_time: sampling period in hours.
    """

    u: np.ndarray
    y: np.ndarray
    sample_time: float = 1.0

    def __post_init__(self):
        self.u = as_signal(self.u, "u")
        self.y = as_signal(self.y, "y")
        if self.u.shape[0] != self.y.shape[0]:
            raise DimensionMismatch(
                f"u and y must cover the same samples, got {self.u.shape[0]} and {self.y.shape[0]}"
            )
        if self.sample_time <= 0:
            raise ValueError("sample_time must be positive")

    @property
    def length(self) -> int:
        return self.u.shape[0]

    @property
    def dims(self) -> SignalDims:
        return SignalDims(m=self.u.shape[1], p=self.y.shape[1])


@dataclass
class HankelBlocks:
    """Past/future Hankel blocks of a trajectory.

    The stacked matrix ``[U_p; Y_p; U_f; Y_f]`` has one column per length-
    ``T_ini + T_f`` window of the data; ``n_cols`` is the number of windows.
    """

    U_p: np.ndarray
    Y_p: np.ndarray
    U_f: np.ndarray
    Y_f: np.ndarray
    T_ini: int
    T_f: int
    dims: SignalDims
    pe: "PEDiagnostic | None" = field(default=None, repr=False)

    @property
    def n_cols(self) -> int:
        return self.U_p.shape[1]

    def stacked(self) -> np.ndarray:
        return np.vstack([self.U_p, self.Y_p, self.U_f, self.Y_f])


@dataclass(frozen=True)
class PEDiagnostic:
    """Verdict and evidence of a persistent-excitation check.

    Attributes:
        is_exciting: True iff the order-``L`` input Hankel matrix has full row
            rank and the data length meets the fundamental-lemma bound.
        order: the order ``L`` that was checked.
        rank: numerical rank of the order-``L`` input Hankel matrix.
        required_rank: ``L * m`` (full row rank).
        sigma_min: smallest singular value of the Hankel matrix.
        sigma_max: largest singular value.
        length_actual: number of samples in the data.
        length_required: ``(m + 1) * (L + n_bound) - 1``.
        reason: human-readable explanation when not exciting.
    """

    is_exciting: bool
    order: int
    rank: int
    required_rank: int
    sigma_min: float
    sigma_max: float
    length_actual: int
    length_required: int
    reason: str = ""


def build_hankel(signal, L: int) -> np.ndarray:
    """Build the depth-``L`` block Hankel matrix of a ``(T, c)`` signal.

    Returns an ``(L * c, T - L + 1)`` array with
    ``H[t * c + k, j] == signal[t + j, k]``.

    Raises:
        WindowTooLong: if ``L > T``.
    """
    w = as_signal(signal, "signal")
    L = check_positive_int(L, "L")
    T, c = w.shape
    if L > T:
        raise WindowTooLong(f"window length {L} exceeds data length {T}")
    # windows[j, k, t] = w[j + t, k]; reorder to (t, k, j) and flatten rows.
    windows = sliding_window_view(w, L, axis=0)
    return np.ascontiguousarray(windows.transpose(2, 1, 0).reshape(L * c, T - L + 1))


def hankel_rank(H: np.ndarray) -> tuple[int, float, float]:
    """Numerical rank of a Hankel matrix plus its extreme singular values."""
    sigma = np.linalg.svd(H, compute_uv=False)
    sigma_max = float(sigma[0]) if sigma.size else 0.0
    if sigma_max == 0.0:
        return 0, 0.0, 0.0
    rank = int(np.count_nonzero(sigma > RANK_RTOL * sigma_max))
    return rank, float(sigma[-1]), sigma_max


def check_persistent_excitation(signal, L: int, n_bound: int = 120) -> PEDiagnostic:
    """Check persistent excitation of order ``L``.

    An input signal is persistently exciting of order ``L`` when its depth-``L``
    Hankel matrix has full row rank ``L * m``. The verdict additionally
    requires the data length to meet ``T >= (m + 1) * (L + n_bound) - 1``,
    the minimum for a state-space system of order up to ``n_bound`` to be
    identifiable from the data. Never raises; inspect ``reason`` on failure.

    Args:
        signal: ``(T, m)`` input data.
        L: excitation order to certify.
        n_bound: upper bound on the (unknown) system order.
    """
    w = as_signal(signal, "signal")
    L = check_positive_int(L, "L")
    n_bound = check_positive_int(n_bound, "n_bound")
    T, m = w.shape
    required_rank = L * m
    length_required = (m + 1) * (L + n_bound) - 1

    if L > T:
        return PEDiagnostic(
            is_exciting=False, order=L, rank=0, required_rank=required_rank,
            sigma_min=0.0, sigma_max=0.0, length_actual=T,
            length_required=length_required,
            reason=f"data length {T} is shorter than the window {L}",
        )

    H = build_hankel(w, L)
    rank, sigma_min, sigma_max = hankel_rank(H)

    reasons = []
    if H.shape[1] < required_rank:
        reasons.append(
            f"only {H.shape[1]} windows for rank {required_rank}"
        )
    if rank < required_rank:
        reasons.append(
            f"Hankel rank {rank} < {required_rank} "
            f"(sigma_min/sigma_max = {sigma_min / sigma_max if sigma_max else 0.0:.2e})"
        )
    if T < length_required:
        reasons.append(
            f"data length {T} < {length_required} required for order bound {n_bound}"
        )

    return PEDiagnostic(
        is_exciting=not reasons,
        order=L,
        rank=rank,
        required_rank=required_rank,
        sigma_min=sigma_min,
        sigma_max=sigma_max,
        length_actual=T,
        length_required=length_required,
        reason="; ".join(reasons),
    )


def partition_hankel(traj: Trajectory, T_ini: int, T_f: int) -> HankelBlocks:
    """Split the depth-``T_ini + T_f`` Hankel matrices into past/future blocks.

    Raises:
        WindowTooLong: if ``T_ini + T_f > traj.length``.
    """
    T_ini = check_positive_int(T_ini, "T_ini")
    T_f = check_positive_int(T_f, "T_f")
    L = T_ini + T_f
    dims = traj.dims
    H_u = build_hankel(traj.u, L)
    H_y = build_hankel(traj.y, L)
    m, p = dims.m, dims.p
    return HankelBlocks(
        U_p=H_u[: T_ini * m],
        U_f=H_u[T_ini * m:],
        Y_p=H_y[: T_ini * p],
        Y_f=H_y[T_ini * p:],
        T_ini=T_ini,
        T_f=T_f,
        dims=dims,
    )


def save_trajectory(traj: Trajectory, path, input_units=None, output_units=None) -> None:
    """Write a trajectory to CSV plus a JSON sidecar with units.

    The CSV has columns ``t, u_1..u_m, y_1..y_p``; ``t`` is the sample index.
    Units default to "unspecified" when not given. The sidecar is written next
    to the CSV with the extension ``.meta.json``.
    """
    path = Path(path)
    m, p = traj.dims.m, traj.dims.p
    input_units = list(input_units) if input_units is not None else ["unspecified"] * m
    output_units = list(output_units) if output_units is not None else ["unspecified"] * p
    if len(input_units) != m or len(output_units) != p:
        raise DimensionMismatch("unit lists must match the channel counts")

    header = ["t"] + [f"u_{i+1}" for i in range(m)] + [f"y_{j+1}" for j in range(p)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for t in range(traj.length):
            row = [str(t)]
            row += [repr(float(v)) for v in traj.u[t]]
            row += [repr(float(v)) for v in traj.y[t]]
            writer.writerow(row)

    meta = {
        "sample_time_hours": traj.sample_time,
        "n_inputs": m,
        "n_outputs": p,
        "input_units": input_units,
        "output_units": output_units,
    }
    with open(path.with_suffix(".meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_trajectory(path) -> Trajectory:
    """Read a trajectory written by :func:`save_trajectory`."""
    path = Path(path)
    with open(path.with_suffix(".meta.json")) as fh:
        meta = json.load(fh)
    m, p = meta["n_inputs"], meta["n_outputs"]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != 1 + m + p:
        raise DimensionMismatch(
            f"CSV has {data.shape[1]} columns, expected {1 + m + p}"
        )
    return Trajectory(
        u=data[:, 1:1 + m],
        y=data[:, 1 + m:],
        sample_time=meta["sample_time_hours"],
    )
