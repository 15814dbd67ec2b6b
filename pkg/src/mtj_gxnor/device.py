"""MTJ switching physics.

Analytic high-current switching model (critical current, switching time,
pulse switching probability under a thermal initial angle) and a stochastic
macrospin LLG integrator used as an independent oracle for it.

Sign convention: the pinned layer points along +x. Positive voltage/current
drives parallel -> antiparallel (on -> off), negative drives off -> on.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import constants
from scipy.special import elliprd, erf

from . import config as cfg
from .errors import (DivergenceError, EmptyResultError, IntegrationError,
                     ParameterError, RegimeError)

MU0 = constants.mu_0
E_CHARGE = constants.e
HBAR = constants.hbar
K_B = constants.k

THETA_FLOOR = 1e-9
P_TO_AP = "P->AP"
AP_TO_P = "AP->P"

# Temperature points with measured (R_off, theta0); linear in between.
TEMPERATURE_TABLE = (
    (260.0, 2750.0, 0.3187),
    (273.0, 2650.0, 0.3266),
    (300.0, 2500.0, 0.345),
    (333.0, 2150.0, 0.3617),
    (373.0, 2000.0, 0.3827),
)

# H_k that gives theta0 = 0.345 rad at 300 K for the default free layer.
DEFAULT_H_K = 44307.4


@dataclass(frozen=True)
class MtjDeviceParams:
    alpha: float = 0.01
    mu0_ms: float = 0.5               # T
    a_axis: float = 50e-9             # m, ellipse major axis
    b_axis: float = 20e-9             # m, ellipse minor axis
    t_f: float = 2e-9                 # m
    spin_polarization: float = 0.5    # from R_off/R_on = (1+P^2)/(1-P^2)
    gamma: float = 1.76e11            # rad/(s T)
    h_k: float = DEFAULT_H_K          # A/m
    temperature: float = 300.0        # K
    r_on: float = 1500.0
    r_off: float = 2500.0
    m_eff: float | None = None        # A/m; None means M_eff = Ms
    theta0_override: float | None = None
    v_up: float = 1.0
    v_rd: float = 0.1
    t_up: float = 2e-9
    t_rd: float = 0.5e-9

    def __post_init__(self):
        if not 0 < self.r_on < self.r_off:
            raise ParameterError(f"need 0 < r_on < r_off, got {self.r_on}, {self.r_off}")
        for name in ("alpha", "mu0_ms", "a_axis", "b_axis", "t_f", "gamma", "h_k"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if self.temperature < 0:
            raise ParameterError("temperature must be >= 0 K")

    @property
    def ms(self) -> float:
        return self.mu0_ms / MU0

    @property
    def meff(self) -> float:
        return self.ms if self.m_eff is None else self.m_eff

    @property
    def volume(self) -> float:
        return math.pi * self.a_axis * self.b_axis * self.t_f / 4.0

    @property
    def r_mid(self) -> float:
        return 0.5 * (self.r_on + self.r_off)

    def replace(self, **kw) -> "MtjDeviceParams":
        return dataclasses.replace(self, **kw)


# json key -> dataclass field
PARAM_KEYS = {
    "alpha": "alpha",
    "mu0_ms_t": "mu0_ms",
    "a_axis_nm": "a_axis",
    "b_axis_nm": "b_axis",
    "t_f_nm": "t_f",
    "spin_polarization": "spin_polarization",
    "gamma_rad_per_s_t": "gamma",
    "h_k_a_per_m": "h_k",
    "temperature_k": "temperature",
    "r_on_ohm": "r_on",
    "r_off_ohm": "r_off",
    "m_eff_a_per_m": "m_eff",
    "theta0_rad": "theta0_override",
    "v_up_v": "v_up",
    "v_rd_v": "v_rd",
    "t_up_ns": "t_up",
    "t_rd_ns": "t_rd",
}


def params_from_dict(data: dict, path=None) -> MtjDeviceParams:
    cfg.check_keys(data, PARAM_KEYS, path, " in device parameters")
    kw = {}
    for key, attr in PARAM_KEYS.items():
        if key in data and data[key] is not None:
            kw[attr] = cfg.to_si(key, cfg.number(data, key, None, path))
    try:
        return MtjDeviceParams(**kw)
    except ParameterError as exc:
        raise cfg.ConfigError(str(exc), path=path) from exc


def params_to_dict(p: MtjDeviceParams) -> dict:
    out = {}
    for key, attr in PARAM_KEYS.items():
        v = getattr(p, attr)
        out[key] = None if v is None else cfg.from_si(key, v)
    return out


def load_params(path) -> MtjDeviceParams:
    return params_from_dict(cfg.read_json(path), path)


# ---- analytic model ----

def shape_anisotropy_field(p: MtjDeviceParams) -> float:
    """In-plane shape anisotropy (N_y - N_x)·Ms of the elliptic-cylinder free layer.

    Demagnetizing factors use the ellipsoid with the same semi-axes (Carlson
    form of the elliptic integral).
    """
    sx, sy, sz = p.a_axis / 2, p.b_axis / 2, p.t_f / 2

    def demag(x, y, z):
        return x * y * z / 3.0 * elliprd(y * y, z * z, x * x)

    nx = demag(sx, sy, sz)
    ny = demag(sy, sx, sz)
    return float((ny - nx) * p.ms)


def theta0(p: MtjDeviceParams) -> float:
    """Thermal spread of the initial angle, sqrt(kT / (mu0 H_k Ms V))."""
    if p.theta0_override is not None:
        return float(p.theta0_override)
    return math.sqrt(K_B * p.temperature / (MU0 * p.h_k * p.ms * p.volume))


def critical_current(p: MtjDeviceParams, branch: str = P_TO_AP) -> float:
    P = p.spin_polarization
    if not 0 < P < 1:
        raise ParameterError(f"spin polarization must lie in (0, 1), got {P}")
    if branch == P_TO_AP:
        factor = 1 + P
    elif branch == AP_TO_P:
        factor = 1 - P
    else:
        raise ParameterError(f"unknown branch {branch!r}")
    return (2 * E_CHARGE / HBAR) * (p.alpha * p.volume * factor / P) * p.mu0_ms * p.meff / 2


def switching_constant(p: MtjDeviceParams, branch: str = P_TO_AP) -> float:
    """C = 2 I_c0 / (alpha gamma mu0 Ms), in ampere-seconds."""
    return 2 * critical_current(p, branch) / (p.alpha * p.gamma * p.mu0_ms)


def switching_time(p: MtjDeviceParams, current: float, theta: float,
                   branch: str = P_TO_AP) -> float:
    ic0 = critical_current(p, branch)
    current = abs(current)
    if current <= ic0:
        raise RegimeError(f"|I| = {current:.4g} A not above I_c0 = {ic0:.4g} A")
    if theta == 0:
        raise DivergenceError("switching time diverges for theta = 0")
    prefactor = 2 / (p.alpha * p.gamma * p.mu0_ms)
    return prefactor * ic0 / (current - ic0) * math.log(math.pi / (2 * abs(theta)))


@dataclass(frozen=True)
class Pulse:
    voltage: float
    width: float

    def __post_init__(self):
        if self.width < 0:
            raise ParameterError("pulse width must be >= 0")


def psw_law(width, voltage, resistance, theta0_value, c_const):
    """Vectorized pulse switching probability for a favorable-direction pulse."""
    width = np.asarray(width, dtype=float)
    with np.errstate(over="ignore"):   # overflow means certain switching
        growth = np.exp(width * np.abs(voltage) / (c_const * np.asarray(resistance, dtype=float)))
    arg = math.pi / (2 * math.sqrt(2) * np.asarray(theta0_value, dtype=float) * growth)
    return 1.0 - erf(arg)


def switching_probability(p: MtjDeviceParams, pulse: Pulse, r_state: float,
                          state: str | None = None) -> float:
    """Probability that one pulse switches the device out of its current state.

    ``state`` ('on' or 'off') defaults to whichever nominal resistance is
    closer to ``r_state``. A pulse pushing the device toward the state it is
    already in returns 0.
    """
    if state is None:
        state = "on" if abs(r_state - p.r_on) <= abs(r_state - p.r_off) else "off"
    favorable = pulse.voltage > 0 if state == "on" else pulse.voltage < 0
    if not favorable:
        return 0.0
    return float(psw_law(pulse.width, pulse.voltage, r_state, theta0(p),
                         switching_constant(p)))


def sample_theta(p: MtjDeviceParams, rng, size=None):
    th = rng.normal(0.0, theta0(p), size)
    floored = np.where(np.abs(th) < THETA_FLOOR, np.copysign(THETA_FLOOR, th), th)
    return floored if size is not None else float(floored)


# ---- temperature ----

def temperature_point(temperature: float):
    """(R_off, theta0) at ``temperature``, linear between table rows."""
    temps = [row[0] for row in TEMPERATURE_TABLE]
    if not temps[0] <= temperature <= temps[-1]:
        raise ParameterError(
            f"temperature {temperature} K outside table range {temps[0]}-{temps[-1]} K")
    r_off = float(np.interp(temperature, temps, [row[1] for row in TEMPERATURE_TABLE]))
    th0 = float(np.interp(temperature, temps, [row[2] for row in TEMPERATURE_TABLE]))
    return r_off, th0


def at_temperature(p: MtjDeviceParams, temperature: float) -> MtjDeviceParams:
    r_off, th0 = temperature_point(temperature)
    return p.replace(temperature=float(temperature), r_off=r_off, theta0_override=th0)


# ---- stochastic LLG ----

@dataclass
class LlgTrace:
    t: np.ndarray         # (n,)
    m: np.ndarray         # (n, 3)
    r: np.ndarray         # (n,)
    r_mid: float = field(default=0.0)

    @property
    def switched(self) -> bool:
        return bool(self.m[-1, 0] < 0) if self.m[0, 0] > 0 else bool(self.m[-1, 0] > 0)

    def first_crossing(self):
        """Interpolated time of the first crossing of r_mid, or None."""
        above = self.r >= self.r_mid
        start = above[0]
        idx = np.flatnonzero(above != start)
        if idx.size == 0:
            return None
        k = idx[0]
        r0, r1 = self.r[k - 1], self.r[k]
        frac = (self.r_mid - r0) / (r1 - r0) if r1 != r0 else 0.0
        return float(self.t[k - 1] + frac * (self.t[k] - self.t[k - 1]))


def _cross(a, b):
    return np.stack([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def resistance_of(p: MtjDeviceParams, cos_theta):
    P2 = p.spin_polarization ** 2
    return p.r_on * (1 + P2) / (1 + P2 * np.asarray(cos_theta))


def thermal_initial_state(p: MtjDeviceParams, rng, n: int, antiparallel: bool = False,
                          out_of_plane: bool = True) -> np.ndarray:
    """Initial magnetizations (3, n) near the easy axis.

    In-plane tilt ~ N(0, theta0); out-of-plane tilt is narrowed by the
    stiffer demagnetizing well, sqrt(H_k / (H_k + M_eff)).
    """
    th = sample_theta(p, rng, n)
    if out_of_plane:
        tz = rng.normal(0.0, theta0(p) * math.sqrt(p.h_k / (p.h_k + p.meff)), n)
    else:
        tz = np.zeros(n)
    sgn = -1.0 if antiparallel else 1.0
    return np.stack([sgn * np.cos(th) * np.cos(tz), np.sin(th) * np.cos(tz), np.sin(tz)])


class _LlgIntegrator:
    """Macrospin LLG with Slonczewski torque and a Stratonovich thermal field.

    Effective field: easy-axis anisotropy along x plus thin-film demagnetization
    along z. Explicit midpoint scheme; both stages share one noise sample and
    each stage is renormalized to |m| = 1.
    """

    def __init__(self, p: MtjDeviceParams, dt: float, voltage: float = 0.0,
                 current: float | None = None, temperature: float | None = None):
        if not 0 < dt <= 1e-12:
            raise ParameterError(f"dt must be in (0, 1 ps], got {dt}")
        self.p = p
        self.dt = dt
        self.voltage = voltage
        self.current = current
        temp = p.temperature if temperature is None else temperature
        self.gp = p.gamma * MU0 / (1 + p.alpha ** 2)
        self.sigma = math.sqrt(2 * p.alpha * K_B * temp /
                               (p.gamma * MU0 ** 2 * p.ms * p.volume * dt)) if temp > 0 else 0.0
        self.pin = np.array([1.0, 0.0, 0.0])[:, None]
        P = p.spin_polarization
        # field-units torque per ampere for each direction
        self.stt_pos = HBAR * P / (2 * E_CHARGE * MU0 * p.ms * p.volume * (1 + P))
        self.stt_neg = HBAR * P / (2 * E_CHARGE * MU0 * p.ms * p.volume * (1 - P))

    def drive(self, m):
        if self.current is not None:
            i = np.full(m.shape[1], float(self.current))
        else:
            i = self.voltage / resistance_of(self.p, m[0])
        return np.where(i >= 0, self.stt_pos, self.stt_neg) * i

    def rhs(self, m, h_th):
        p = self.p
        h = np.stack([p.h_k * m[0], np.zeros_like(m[1]), -p.meff * m[2]]) + h_th
        mxh = _cross(m, h)
        mxp = _cross(m, np.broadcast_to(self.pin, m.shape))
        a_j = self.drive(m)
        return (-self.gp * (mxh + p.alpha * _cross(m, mxh))
                + self.gp * a_j * (_cross(m, mxp) - p.alpha * mxp))

    def step(self, m, rng, k):
        if self.sigma > 0:
            h_th = self.sigma * rng.standard_normal(m.shape)
        else:
            h_th = 0.0
        mid = m + 0.5 * self.dt * self.rhs(m, h_th)
        mid /= np.linalg.norm(mid, axis=0)
        new = m + self.dt * self.rhs(mid, h_th)
        norm = np.linalg.norm(new, axis=0)
        if not np.all(np.isfinite(norm)) or np.any(norm == 0):
            raise IntegrationError(k)
        return new / norm


def llg_simulate(p: MtjDeviceParams, pulse: Pulse, dt: float = 1e-13, rng=None,
                 m0=None, current: float | None = None,
                 temperature: float | None = None) -> LlgTrace:
    """Integrate one trajectory over the pulse and record every step.

    Args:
        p: device parameters.
        pulse: voltage and width; current follows V / r(theta) unless
            ``current`` fixes it.
        dt: time step, at most 1 ps.
        rng: generator for the thermal field and the initial state.
        m0: initial unit vector; defaults to a thermal draw near the parallel
            state (antiparallel for negative voltage).
        temperature: overrides ``p.temperature`` for the thermal field only.
    """
    if rng is None:
        rng = np.random.default_rng()
    sim = _LlgIntegrator(p, dt, pulse.voltage, current, temperature)
    if m0 is None:
        drive = pulse.voltage if current is None else current
        m = thermal_initial_state(p, rng, 1, antiparallel=drive < 0)
    else:
        m = np.asarray(m0, dtype=float).reshape(3, 1)
        m = m / np.linalg.norm(m)
    steps = int(round(pulse.width / dt))
    ms = np.empty((steps + 1, 3))
    ms[0] = m[:, 0]
    for k in range(steps):
        m = sim.step(m, rng, k)
        ms[k + 1] = m[:, 0]
    t = np.arange(steps + 1) * dt
    return LlgTrace(t=t, m=ms, r=resistance_of(p, ms[:, 0]), r_mid=p.r_mid)


def llg_switch_fractions(p: MtjDeviceParams, voltage: float, widths, n_trials: int,
                         rng, dt: float = 1e-13, out_of_plane: bool = True):
    """Monte-Carlo switch fraction at each pulse width.

    All widths share one ensemble: a pulse of width w is the prefix of the
    longest trajectory, so each checkpoint is read off as the run passes it.
    A trial counts as switched when m has crossed to the far hemisphere at
    pulse end.
    """
    widths = np.asarray(widths, dtype=float)
    if widths.size == 0:
        return widths.copy()
    sim = _LlgIntegrator(p, dt, voltage)
    antiparallel = voltage < 0
    m = thermal_initial_state(p, rng, n_trials, antiparallel, out_of_plane)
    checkpoints = np.round(widths / dt).astype(int)
    out = np.empty(widths.size)
    order = np.argsort(checkpoints)
    k = 0
    for j in order:
        while k < checkpoints[j]:
            m = sim.step(m, rng, k)
            k += 1
        out[j] = np.mean(m[0] > 0) if antiparallel else np.mean(m[0] < 0)
    return out


def mean_switch_trace(traces):
    """Align switching traces at their first mid-resistance crossing and average.

    Returns (t_rel, r_mean) on the time grid of the first switching trace,
    restricted to the window every aligned trace covers.
    """
    crossings = []
    for tr in traces:
        tc = tr.first_crossing()
        if tc is not None:
            crossings.append((tr, tc))
    if not crossings:
        raise EmptyResultError("no trace crosses the mid resistance")
    lo = max(tr.t[0] - tc for tr, tc in crossings)
    hi = min(tr.t[-1] - tc for tr, tc in crossings)
    ref, ref_tc = crossings[0]
    dt = ref.t[1] - ref.t[0] if ref.t.size > 1 else 1.0
    n_lo = math.ceil(lo / dt - 1e-9)
    n_hi = math.floor(hi / dt + 1e-9)
    grid = np.arange(n_lo, n_hi + 1) * dt
    curves = [np.interp(grid, tr.t - tc, tr.r) for tr, tc in crossings]
    return grid, np.mean(curves, axis=0)
