"""Fixed-step RK4 simulation of the normalized converter under a chosen controller.

The plant state is optionally augmented with the load-power estimator's
internal state; both are advanced by the same RK4 step. The controller is
evaluated at every RK4 stage and its output clamped to [0, 1]. The raw value
and a saturation flag are recorded at every sample.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import energy, estimator
from .controllers import PdGains, ida_control, ida_control_scalar, pd_control
from .errors import DomainError, IntegrationError, SingularityError
from .model import SINGULARITY_FLOOR, equilibrium_for, from_normalized, t_of_tau

CSV_HEADER = ("tau", "x1", "x2", "u_applied", "u_raw", "d_true", "d_hat", "h_d", "saturated")

CONTROLLER_KINDS = ("ida", "adaptive_ida", "pd", "open_loop")

#: Floor applied to the load-power estimate before it is used by the control law.
D_HAT_FLOOR = 1e-9


def rk4_step(field: Callable, y, h: float):
    """One classical Runge-Kutta step of ``y' = field(y)``."""
    if not h > 0:
        raise DomainError(f"step must be positive, got {h!r}")
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(field(y))
    k2 = np.asarray(field(y + 0.5 * h * k1))
    k3 = np.asarray(field(y + 0.5 * h * k2))
    k4 = np.asarray(field(y + h * k3))
    out = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SingularityError("non-finite derivative during RK4 step")
    return out


@dataclass(frozen=True)
class ControllerSpec:
    """Which feedback law to apply and its tuning.

    ``kind`` is one of ``ida``, ``adaptive_ida``, ``pd`` or ``open_loop``.
    Known-D laws (``ida``, ``pd``) use the true load power in effect; the
    adaptive law uses the estimate, recomputing x1* and k2 from it at every
    evaluation. ``open_loop`` applies ``u_signal(tau)``.
    """

    kind: str
    x2_star: float
    k1: float | None = None
    pd_gains: PdGains | None = None
    u_signal: Callable[[float], float] | None = None

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise DomainError(f"unknown controller kind {self.kind!r}")
        if not self.x2_star > 0:
            raise DomainError("x2_star must be positive")
        if self.kind in ("ida", "adaptive_ida") and not self.k1:
            raise DomainError(f"{self.kind} needs a nonzero k1")
        if self.kind == "pd" and self.pd_gains is None:
            raise DomainError("pd needs pd_gains")
        if self.kind == "open_loop" and self.u_signal is None:
            raise DomainError("open_loop needs u_signal")

    def k2_for(self, D: float) -> float:
        return energy.compute_k2(equilibrium_for(self.x2_star, D), D, self.k1)

    def raw(self, x1: float, x2: float, D: float, tau: float = 0.0) -> float:
        """Unclamped duty ratio for plain floats; ``D`` is the value the law believes."""
        if self.kind in ("ida", "adaptive_ida"):
            if x1 <= 0:
                raise DomainError("x1 left the positive quadrant")
            return ida_control_scalar(x1, x2, D, self.k1, self.k2_for(D))
        if self.kind == "pd":
            return pd_control((x1, x2), equilibrium_for(self.x2_star, D), self.pd_gains)
        return float(self.u_signal(tau))

    def raw_array(self, x, D):
        """Vectorized unclamped duty ratio for known-D laws."""
        if self.kind == "ida" or self.kind == "adaptive_ida":
            return ida_control(x, D, self.k1, self.k2_for(D))
        if self.kind == "pd":
            return pd_control(x, equilibrium_for(self.x2_star, D), self.pd_gains)
        raise DomainError("open_loop has no state feedback")


@dataclass(frozen=True)
class Scenario:
    """A simulation run.

    ``d_schedule`` lists ``(tau, D)`` pairs with strictly increasing switch
    times, the first at 0. When ``gamma`` is set the estimator runs alongside
    the plant; its initial internal state is ``d_i_init`` if given, otherwise
    chosen so that the estimate starts at ``d_hat_init`` (default: the true
    initial D).
    """

    controller: ControllerSpec
    initial_state: tuple[float, float]
    d_schedule: Sequence[tuple[float, float]]
    duration: float
    step: float = 1e-3
    gamma: float | None = None
    d_hat_init: float | None = None
    d_i_init: float | None = None

    def __post_init__(self):
        if not self.step > 0:
            raise DomainError("step must be positive")
        if not self.duration >= 0:
            raise DomainError("duration must be nonnegative")
        sched = list(self.d_schedule)
        if not sched or sched[0][0] != 0:
            raise DomainError("d_schedule must start at tau = 0")
        if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
            raise DomainError("d_schedule switch times must be strictly increasing")
        if any(not d > 0 for _, d in sched):
            raise DomainError("all scheduled D values must be positive")
        if self.controller.kind == "adaptive_ida" and self.gamma is None:
            raise DomainError("adaptive_ida needs an adaptation gain")
        if self.gamma is not None and not self.gamma > 0:
            raise DomainError("gamma must be positive")
        x1, x2 = self.initial_state
        if not (x1 > 0 and x2 > 0):
            raise DomainError("initial state must lie in the open positive quadrant")

    @property
    def estimating(self) -> bool:
        return self.gamma is not None

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.step))

    def switch_steps(self) -> list[tuple[int, float]]:
        """Schedule with switch times quantized to the nearest step boundary."""
        return [(int(round(t / self.step)), d) for t, d in self.d_schedule]


@dataclass
class Trajectory:
    tau: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u_applied: np.ndarray
    u_raw: np.ndarray
    d_true: np.ndarray
    d_hat: np.ndarray
    h_d: np.ndarray
    saturated: np.ndarray
    event: str | None = None
    event_tau: float | None = None
    event_message: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.tau)

    @property
    def states(self) -> np.ndarray:
        return np.column_stack([self.x1, self.x2])

    @property
    def final_state(self) -> np.ndarray:
        return np.array([self.x1[-1], self.x2[-1]])

    @property
    def saturation_count(self) -> int:
        return int(np.count_nonzero(self.saturated))

    def write_csv(self, fh, *, physical=None) -> None:
        """Write the trajectory as CSV.

        With ``physical`` set to a :class:`~ida_buckboost.model.PhysicalParams`
        the time and state columns are converted to seconds, amperes and volts
        (header ``t,i,v,...``).
        """
        w = csv.writer(fh, lineterminator="\n")
        if physical is None:
            w.writerow(CSV_HEADER)
            cols = (self.tau, self.x1, self.x2)
        else:
            w.writerow(("t", "i", "v") + CSV_HEADER[3:])
            i, v = from_normalized((self.x1, self.x2), physical)
            cols = (t_of_tau(self.tau, physical), i, v)
        for k in range(len(self)):
            w.writerow([_fmt(cols[0][k]), _fmt(cols[1][k]), _fmt(cols[2][k]),
                        _fmt(self.u_applied[k]), _fmt(self.u_raw[k]), _fmt(self.d_true[k]),
                        _fmt(self.d_hat[k]), _fmt(self.h_d[k]), "1" if self.saturated[k] else "0"])
        if self.event:
            fh.write(f"# event: {self.event} at tau={_fmt(self.event_tau)}: {self.event_message}\n")

    def raise_for_event(self) -> None:
        """Re-raise a recorded numerical event as an exception."""
        if self.event is None:
            return
        msg = f"{self.event} at tau={self.event_tau}: {self.event_message}"
        if self.event == "nan":
            raise IntegrationError(msg)
        raise SingularityError(msg)

    def to_csv(self, **kwargs) -> str:
        buf = io.StringIO()
        self.write_csv(buf, **kwargs)
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None or not np.isfinite(v):
        return ""
    return f"{float(v):.12g}"


def _clamp(u: float) -> float:
    return min(1.0, max(0.0, u))


def simulate(s: Scenario) -> Trajectory:
    """Integrate a scenario; numerical events truncate the record instead of raising."""
    ctrl = s.controller
    h = s.step
    n = s.n_steps
    switches = s.switch_steps()
    D0 = switches[0][1]
    x1, x2 = map(float, s.initial_state)

    if s.estimating:
        d_i = s.d_i_init if s.d_i_init is not None else estimator.d_i_for(
            s.d_hat_init if s.d_hat_init is not None else D0, x2, s.gamma)
        y = np.array([x1, x2, d_i])
    else:
        y = np.array([x1, x2])

    rows = []
    event = event_tau = None
    message = ""
    if n == 0:
        return _assemble(rows, None, None, "", s)

    sw_idx = 0
    D = D0
    for k in range(n + 1):
        while sw_idx + 1 < len(switches) and switches[sw_idx + 1][0] <= k:
            sw_idx += 1
            D = switches[sw_idx][1]
        tau = k * h
        try:
            row = _sample(ctrl, s, y, D, tau)
        except (DomainError, SingularityError, ValueError) as exc:
            event, event_tau, message = _classify(y), tau, str(exc)
            break
        rows.append(row)
        if k == n:
            break
        try:
            y = rk4_step(_field(ctrl, s, D, tau, h), y, h)
        except (DomainError, SingularityError, ValueError, ZeroDivisionError) as exc:
            event, event_tau, message = _classify(y, exc), tau, str(exc)
            break
        if not np.all(np.isfinite(y)):
            event, event_tau, message = "nan", tau + h, "non-finite state"
            break
        if y[1] < SINGULARITY_FLOOR:
            event, event_tau, message = "singularity", tau + h, "x2 fell below the singularity floor"
            break
        if y[0] <= 0:
            event, event_tau, message = "left_quadrant", tau + h, "x1 left the positive quadrant"
            break
    return _assemble(rows, event, event_tau, message, s)


def _classify(y, exc=None) -> str:
    if isinstance(exc, ZeroDivisionError) or (len(y) > 1 and y[1] < SINGULARITY_FLOOR):
        return "singularity"
    if not np.all(np.isfinite(y)):
        return "nan"
    return "left_quadrant" if y[0] <= 0 else "singularity"


def _believed_D(s: Scenario, y, D):
    if s.controller.kind == "adaptive_ida":
        return max(D_HAT_FLOOR, estimator.d_hat(y[1], estimator.EstimatorState(y[2], s.gamma)))
    return D


def _field(ctrl: ControllerSpec, s: Scenario, D: float, tau0: float, h: float):
    gamma = s.gamma
    adaptive = ctrl.kind == "adaptive_ida"
    # RK4 stage times: tau0, tau0 + h/2 (twice), tau0 + h.
    stage_times = iter((tau0, tau0 + 0.5 * h, tau0 + 0.5 * h, tau0 + h))

    def f(y):
        tau = next(stage_times, tau0 + h)
        x1, x2 = float(y[0]), float(y[1])
        if x2 < SINGULARITY_FLOOR:
            raise SingularityError("x2 fell below the singularity floor")
        if adaptive:
            d_hat = max(D_HAT_FLOOR, -0.5 * gamma * x2 * x2 + y[2])
            u = _clamp(ctrl.raw(x1, x2, d_hat, tau))
        else:
            u = _clamp(ctrl.raw(x1, x2, D, tau))
        dx1 = -(1 - u) * x2 + u
        dx2 = (1 - u) * x1 - D / x2
        if gamma is None:
            return np.array([dx1, dx2])
        d_i = float(y[2])
        ddi = gamma * x1 * x2 * (1 - u) + 0.5 * gamma * gamma * x2 * x2 - gamma * d_i
        return np.array([dx1, dx2, ddi])

    return f


def _sample(ctrl: ControllerSpec, s: Scenario, y, D, tau):
    x1, x2 = float(y[0]), float(y[1])
    if x2 < SINGULARITY_FLOOR:
        raise SingularityError("x2 fell below the singularity floor")
    d_hat = math.nan
    if s.estimating:
        d_hat = -0.5 * s.gamma * x2 * x2 + float(y[2])
    D_law = _believed_D(s, y, D)
    u_raw = ctrl.raw(x1, x2, D_law, tau)
    u = _clamp(u_raw)
    h_d = math.nan
    if ctrl.kind in ("ida", "adaptive_ida"):
        h_d = float(energy.hamiltonian((x1, x2), D_law, ctrl.k1, ctrl.k2_for(D_law)))
    return (tau, x1, x2, u, u_raw, D, d_hat, h_d, u != u_raw)


def _assemble(rows, event, event_tau, message, s: Scenario) -> Trajectory:
    if rows:
        cols = list(zip(*rows))
        arr = [np.array(c, dtype=float) for c in cols[:8]]
        sat = np.array(cols[8], dtype=bool)
    else:
        arr = [np.empty(0) for _ in range(8)]
        sat = np.empty(0, dtype=bool)
    return Trajectory(*arr, saturated=sat, event=event, event_tau=event_tau, event_message=message,
                      meta={"controller": s.controller.kind, "step": s.step})


def closed_loop_field(x, ctrl: ControllerSpec, D, *, clamp: bool = True):
    """Closed-loop vector field on a grid of states, with the clamped duty ratio by default."""
    x1, x2 = x
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(x2 < SINGULARITY_FLOOR):
        raise SingularityError("x2 below the singularity floor")
    u = ctrl.raw_array((x1, x2), D)
    if clamp:
        u = np.clip(u, 0.0, 1.0)
    return np.array([-(1 - u) * x2 + u, (1 - u) * x1 - D / x2])


def simulate_bundle(initial_states, ctrl: ControllerSpec, D: float, duration: float, step: float = 1e-3,
                    *, clamp: bool = True, record_every: int = 1):
    """Integrate many initial conditions at once under a known-D law.

    Returns ``(tau, states, alive)`` with ``states`` of shape (K, N, 2), where
    K counts the recorded samples. A trajectory that hits a numerical event is
    frozen at its last valid state and flagged ``alive=False``.
    """
    y = np.array(initial_states, dtype=float).T.copy()
    n_traj = y.shape[1]
    alive = np.ones(n_traj, dtype=bool)
    n = int(round(duration / step))
    taus, out = [0.0], [y.T.copy()]

    def f(yy):
        with np.errstate(all="ignore"):
            safe = yy.copy()
            safe[:, ~alive] = 1.0
            bad = (safe[0] <= 0) | (safe[1] < SINGULARITY_FLOOR)
            safe[:, bad] = 1.0
            d = closed_loop_field(safe, ctrl, D, clamp=clamp)
            d[:, bad] = np.nan
            d[:, ~alive] = 0.0
            return d

    for k in range(1, n + 1):
        with np.errstate(all="ignore"):
            k1 = f(y)
            k2 = f(y + 0.5 * step * k1)
            k3 = f(y + 0.5 * step * k2)
            k4 = f(y + step * k3)
            y_new = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        dead = ~np.all(np.isfinite(y_new), axis=0) | (y_new[0] <= 0) | (y_new[1] < SINGULARITY_FLOOR)
        dead &= alive
        y_new[:, dead] = y[:, dead]
        alive &= ~dead
        y = y_new
        if k % record_every == 0 or k == n:
            taus.append(k * step)
            out.append(y.T.copy())
    return np.array(taus), np.array(out), alive
