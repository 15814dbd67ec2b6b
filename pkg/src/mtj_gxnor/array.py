"""Behavioral model of the ternary (two MTJ) and binary (one MTJ) synapse crossbars.

Rows are outputs, columns are inputs: ``W`` has shape (rows, cols) and the
feedforward read computes ``W @ u``. Each MTJ is a boolean state (True = on,
low resistance) plus its own sampled r_on, r_off and theta0.

Ternary encoding (R1, R2): (on, off) = +1, (off, on) = -1, (off, off) = 0_s,
(on, on) = 0_w. Binary: on = +1, off = -1, read against a reference
conductance halfway between G_on and G_off.
"""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .device import (MtjDeviceParams, at_temperature, params_from_dict,
                     params_to_dict, psw_law, switching_constant, theta0)
from .errors import ParameterError, ShapeError
from .gxnor import DEFAULT_M, BINARY, TERNARY, bound_update, split_update

TERNARY_MODE = "ternary"
BINARY_MODE = "binary"

# state codes: 2*R1 + R2 with on = 1
CODE_ZERO_S, CODE_MINUS, CODE_PLUS, CODE_ZERO_W = 0, 1, 2, 3
CODE_LABELS = {CODE_ZERO_S: "0s", CODE_MINUS: "-1", CODE_PLUS: "+1", CODE_ZERO_W: "0w"}


# ---- switching laws ----

class HardwareLaw:
    """Pulse switching probability from the device model, per MTJ."""

    name = "hardware"

    def prob(self, frac, resistance, theta0_value, params: MtjDeviceParams):
        return psw_law(np.asarray(frac) * params.t_up, params.v_up, resistance,
                       theta0_value, switching_constant(params))


class SoftwareLaw:
    """tanh projection probability; a full-period pulse always switches.

    With ideal devices this turns the array update into the pure software
    projection, which is how the hardware path is checked against the
    reference trainer.
    """

    name = "software"

    def __init__(self, m: float = DEFAULT_M):
        if not m > 0:
            raise ParameterError("m must be positive")
        self.m = m

    def prob(self, frac, resistance, theta0_value, params):
        frac = np.asarray(frac, dtype=float)
        return np.where(frac >= 1.0, 1.0, np.tanh(self.m * frac))


# ---- schedules ----

@dataclass
class PulseSchedule:
    direction: int
    kappa: int
    nu: float
    kappa_width: float
    nu_width: float
    target: dict = field(default_factory=dict)


def make_schedule(delta_w: float, scheme: str = "general", y_sign: int | None = None,
                  u_sign: int | None = None, mode: str = TERNARY_MODE,
                  t_up: float = 2e-9) -> PulseSchedule:
    """Split one synapse update into control pulses.

    General scheme: direction is sign(delta_w). SGD scheme: direction is
    sign(y) * sign(u) and a zero input isolates the synapse.
    """
    space = TERNARY if mode == TERNARY_MODE else BINARY
    if scheme == "sgd":
        if y_sign is None or u_sign is None:
            raise ParameterError("sgd scheme needs y_sign and u_sign")
        direction = int(np.sign(y_sign) * np.sign(u_sign))
        if direction == 0:
            return PulseSchedule(0, 0, 0.0, 0.0, 0.0, {})
        delta_w = direction * abs(delta_w)
    elif scheme != "general":
        raise ParameterError(f"unknown update scheme {scheme!r}")
    else:
        direction = int(np.sign(delta_w))
    kappa, nu = split_update(space, delta_w)
    kappa, nu = int(kappa), float(nu)
    kappa_width = min(abs(kappa), 1) * t_up
    nu_width = abs(nu) / space.dz * t_up
    if direction == 0:
        target = {}
    elif mode == BINARY_MODE:
        target = {"kappa": "R", "nu": "R"}
    elif direction > 0:
        target = {"kappa": "R1", "nu": "R2"}
    else:
        target = {"kappa": "R2", "nu": "R1"}
    return PulseSchedule(direction, kappa, nu, kappa_width, nu_width, target)


# ---- variation ----

@dataclass(frozen=True)
class VariationSpec:
    resistance_rsd: float = 0.0
    theta0_rsd: float = 0.0
    temperature: float = 300.0

    def __post_init__(self):
        if self.resistance_rsd < 0 or self.theta0_rsd < 0:
            raise ParameterError("relative standard deviations must be >= 0")


def positive_factors(rng, rsd: float, shape):
    """Samples of 1 + N(0, rsd), redrawing any non-positive value."""
    out = 1.0 + rsd * rng.standard_normal(shape)
    bad = out <= 0
    while np.any(bad):
        out[bad] = 1.0 + rsd * rng.standard_normal(int(bad.sum()))
        bad = out <= 0
    return out


# ---- update statistics ----

@dataclass
class UpdateStats:
    attempted: int = 0          # MTJ pulses applied
    switched: int = 0           # MTJs that flipped
    changed: int = 0            # synapses whose logical weight changed
    windows: int = 0            # T_up windows used
    transitions: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), np.int64))
    log: list = field(default_factory=list)

    def merge(self, other: "UpdateStats"):
        self.attempted += other.attempted
        self.switched += other.switched
        self.changed += other.changed
        self.windows += other.windows
        self.transitions += other.transitions
        self.log.extend(other.log)
        return self


class SynapseArray:
    """MTJ crossbar with per-device parameters.

    Args:
        rows, cols: output and input dimensions.
        mode: 'ternary' or 'binary'.
        params: nominal device and circuit parameters.
        leakage: probability that an unpulsed MTJ of an updated synapse flips.
        routing: 'state_aware' (default) or 'literal' pulse routing for the
            zero states.
    """

    def __init__(self, rows: int, cols: int, mode: str = TERNARY_MODE,
                 params: MtjDeviceParams | None = None, leakage: float = 0.0,
                 routing: str = "state_aware"):
        if mode not in (TERNARY_MODE, BINARY_MODE):
            raise ParameterError(f"unknown array mode {mode!r}")
        if routing not in ("state_aware", "literal"):
            raise ParameterError(f"unknown routing {routing!r}")
        if not 0 <= leakage <= 1:
            raise ParameterError("leakage must be a probability")
        if rows <= 0 or cols <= 0:
            raise ShapeError("array dimensions must be positive")
        self.mode = mode
        self.rows, self.cols = int(rows), int(cols)
        self.params = params if params is not None else MtjDeviceParams()
        self.leakage = float(leakage)
        self.routing = routing
        shape = (self.rows, self.cols)
        n_mtj = 2 if mode == TERNARY_MODE else 1
        self.state = np.zeros((n_mtj,) + shape, dtype=bool)
        self.r_on = np.full((n_mtj,) + shape, self.params.r_on)
        self.r_off = np.full((n_mtj,) + shape, self.params.r_off)
        self.theta0 = np.full((n_mtj,) + shape, theta0(self.params))
        self._gdiff = None
        if mode == BINARY_MODE:
            self.state[0] = True

    # -- encoding --

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def space(self):
        return TERNARY if self.mode == TERNARY_MODE else BINARY

    def set_weights(self, w, zero: str = "strong"):
        w = np.asarray(w)
        if w.shape != self.shape:
            raise ShapeError(f"weights shape {w.shape} != array shape {self.shape}")
        if self.mode == BINARY_MODE:
            if not np.all(np.isin(w, (-1, 1))):
                raise ParameterError("binary weights must be +-1")
            self.state[0] = w > 0
        else:
            if not np.all(np.isin(w, (-1, 0, 1))):
                raise ParameterError("ternary weights must be in {-1, 0, 1}")
            z = zero == "weak"
            self.state[0] = (w > 0) | ((w == 0) & z)
            self.state[1] = (w < 0) | ((w == 0) & z)
        self._gdiff = None
        return self

    def weights(self) -> np.ndarray:
        if self.mode == BINARY_MODE:
            return np.where(self.state[0], 1, -1).astype(np.int8)
        return (self.state[0].astype(np.int8) - self.state[1].astype(np.int8))

    def codes(self) -> np.ndarray:
        if self.mode == BINARY_MODE:
            return np.where(self.state[0], CODE_PLUS, CODE_MINUS).astype(np.int8)
        return (2 * self.state[0] + self.state[1]).astype(np.int8)

    # -- conductances --

    def conductance(self):
        return np.where(self.state, 1.0 / self.r_on, 1.0 / self.r_off)

    @property
    def g_ref(self) -> float:
        p = self.params
        return 0.5 * (1.0 / p.r_on + 1.0 / p.r_off)

    @property
    def unit_current(self) -> float:
        """Row current of one +1 product with nominal devices."""
        p = self.params
        dg = 1.0 / p.r_on - 1.0 / p.r_off
        return dg * p.v_rd if self.mode == TERNARY_MODE else 0.5 * dg * p.v_rd

    def effective_conductance(self) -> np.ndarray:
        if self._gdiff is None:
            g = self.conductance()
            if self.mode == TERNARY_MODE:
                self._gdiff = g[0] - g[1]
            else:
                self._gdiff = g[0] - self.g_ref
        return self._gdiff

    def effective_weights(self) -> np.ndarray:
        """Conductance matrix in units of the nominal unit current."""
        return self.effective_conductance() * self.params.v_rd / self.unit_current

    def invalidate(self):
        self._gdiff = None

    # -- serialization --

    def to_bytes(self) -> bytes:
        """Little-endian snapshot.

        Layout: b'MTJA', u16 version=1, u8 mode (0 ternary, 1 binary),
        u8 routing (0 state_aware, 1 literal), u32 rows, u32 cols, f64 leakage,
        u32 n, n bytes of sorted-key UTF-8 JSON device parameters, then per
        MTJ plane: u8 states (rows*cols), f64 r_on, f64 r_off, f64 theta0.
        """
        buf = io.BytesIO()
        meta = json.dumps(params_to_dict(self.params), sort_keys=True).encode("utf-8")
        buf.write(b"MTJA")
        buf.write(struct.pack("<HBBIId", 1, 0 if self.mode == TERNARY_MODE else 1,
                              0 if self.routing == "state_aware" else 1,
                              self.rows, self.cols, self.leakage))
        buf.write(struct.pack("<I", len(meta)))
        buf.write(meta)
        for k in range(self.state.shape[0]):
            buf.write(self.state[k].astype("<u1").tobytes())
            buf.write(self.r_on[k].astype("<f8").tobytes())
            buf.write(self.r_off[k].astype("<f8").tobytes())
            buf.write(self.theta0[k].astype("<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "SynapseArray":
        if data[:4] != b"MTJA":
            raise ParameterError("not an array snapshot")
        head = struct.calcsize("<HBBIId")
        version, mode, routing, rows, cols, leak = struct.unpack_from("<HBBIId", data, 4)
        if version != 1:
            raise ParameterError(f"unsupported snapshot version {version}")
        off = 4 + head
        (n,) = struct.unpack_from("<I", data, off)
        off += 4
        params = params_from_dict(json.loads(data[off:off + n].decode("utf-8")))
        off += n
        arr = cls(rows, cols, TERNARY_MODE if mode == 0 else BINARY_MODE, params, leak,
                  "state_aware" if routing == 0 else "literal")
        cells = rows * cols
        for k in range(arr.state.shape[0]):
            arr.state[k] = np.frombuffer(data, "<u1", cells, off).reshape(rows, cols) != 0
            off += cells
            for target in (arr.r_on, arr.r_off, arr.theta0):
                target[k] = np.frombuffer(data, "<f8", cells, off).reshape(rows, cols)
                off += 8 * cells
        return arr

    def copy(self) -> "SynapseArray":
        return SynapseArray.from_bytes(self.to_bytes())


def _check_vector(x, n, what):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != n:
        raise ShapeError(f"{what} length {x.shape[-1]} does not match array dimension {n}")
    return x


def gxnor_cell(arr: SynapseArray, row: int, col: int, u: float) -> float:
    """Output current of one synapse for input activation ``u``."""
    return float(arr.effective_conductance()[row, col] * u * arr.params.v_rd)


def feedforward(arr: SynapseArray, activations) -> np.ndarray:
    """Row currents for an input vector (or a batch of them, last axis = cols)."""
    u = _check_vector(activations, arr.cols, "activation vector")
    return (u @ arr.effective_conductance().T) * arr.params.v_rd


def decode_row(current, arr: SynapseArray, fan_in: int | None = None):
    """Nearest integer count of unit currents, saturated at +-fan_in."""
    n = arr.cols if fan_in is None else fan_in
    k = np.rint(np.asarray(current, dtype=float) / arr.unit_current)
    return np.clip(k, -n, n).astype(np.int64)


def inverse_read(arr: SynapseArray, errors_y) -> np.ndarray:
    """Column currents for row-side inputs: W^T y times the read scale."""
    y = _check_vector(errors_y, arr.rows, "error vector")
    return (y @ arr.effective_conductance()) * arr.params.v_rd


def transpose_product(arr: SynapseArray, errors_y) -> np.ndarray:
    """Inverse read rescaled to weight units (exact W^T y for ideal devices)."""
    return inverse_read(arr, errors_y) / arr.unit_current


def apply_variation(arr: SynapseArray, spec: VariationSpec, rng) -> SynapseArray:
    """Copy of ``arr`` re-sampled at ``spec``'s temperature and spreads.

    When the temperature differs from the array's, nominal R_off and theta0
    come from the temperature table. Each MTJ then gets independent Gaussian
    factors on r_on, r_off and theta0.
    """
    out = arr.copy()
    p = arr.params
    if spec.temperature != p.temperature:
        p = at_temperature(p, spec.temperature)
    out.params = p
    shape = out.state.shape
    if spec.resistance_rsd == 0 and spec.theta0_rsd == 0 and p is arr.params:
        return out
    out.r_on = p.r_on * positive_factors(rng, spec.resistance_rsd, shape)
    out.r_off = p.r_off * positive_factors(rng, spec.resistance_rsd, shape)
    out.theta0 = theta0(p) * positive_factors(rng, spec.theta0_rsd, shape)
    out.invalidate()
    return out


# ---- stochastic update ----

def _switch(arr, k, frac, uniforms, law):
    """Bernoulli flips for MTJ plane ``k`` where ``frac > 0``."""
    pulsed = frac > 0
    if not np.any(pulsed):
        return pulsed, pulsed
    s = arr.state[k]
    r = np.where(s, arr.r_on[k], arr.r_off[k])
    p = np.zeros(frac.shape)
    p[pulsed] = law.prob(frac[pulsed], r[pulsed], arr.theta0[k][pulsed], arr.params)
    flips = pulsed & (uniforms < p)
    return pulsed, flips


def apply_update(arr: SynapseArray, delta, streams, law=None, scheme: str = "general",
                 log: bool = False, stream_prefix: str = "") -> UpdateStats:
    """Apply a real-valued update matrix through pulse-level device switching.

    Args:
        arr: array, mutated in place.
        delta: update values, shape (rows, cols); bounded against the current
            weights before splitting (the hardware saturates anyway).
        streams: ``RngStreams``; uses '<prefix>update_nu' and
            '<prefix>update_kappa' (and '<prefix>leakage' when leakage > 0),
            one uniform per synapse each.
        law: switching law, HardwareLaw by default.
        scheme: 'general' (column-serial, one T_up window per active column)
            or 'sgd' (one window for the whole array).
        log: keep an ordered (row, col, old, new) record of changed synapses.
    """
    delta = np.asarray(delta, dtype=float)
    if delta.shape != arr.shape:
        raise ShapeError(f"update shape {delta.shape} != array shape {arr.shape}")
    if scheme not in ("general", "sgd"):
        raise ParameterError(f"unknown update scheme {scheme!r}")
    law = HardwareLaw() if law is None else law
    u_nu = streams[stream_prefix + "update_nu"].random(arr.shape)
    u_kappa = streams[stream_prefix + "update_kappa"].random(arr.shape)

    w = arr.weights()
    old_codes = arr.codes()
    bounded = bound_update(w.astype(float), delta)
    bounded = np.asarray(bounded, dtype=float)
    kappa, nu = split_update(arr.space, bounded)
    kap = np.abs(kappa)
    frac_nu = np.abs(nu) / arr.space.dz
    up = bounded > 0
    down = bounded < 0
    active = up | down
    # single-MTJ pulse covering both quotient and remainder
    single = np.maximum(np.minimum(kap, 1), frac_nu)

    stats = UpdateStats()
    if arr.mode == BINARY_MODE:
        frac = np.where(active, single, 0.0)
        pulsed, flips = _switch(arr, 0, frac, u_nu, law)
        pulses = [pulsed]
        all_flips = [flips]
    else:
        s1, s2 = arr.state
        plus, minus = w == 1, w == -1
        zero_s = ~s1 & ~s2
        zero_w = s1 & s2
        two = (minus & up) | (plus & down)
        k_frac = np.where(two, np.minimum(kap, 1), 0.0).astype(float)
        n_frac = np.where(two, np.where(kap >= 2, np.minimum(frac_nu + kap - 1, 1.0), frac_nu),
                          0.0)
        # plane receiving the quotient pulse: R1 when moving up, R2 when moving down
        f1 = np.where(up, k_frac, n_frac)
        f2 = np.where(up, n_frac, k_frac)
        use_kappa1 = up & two
        use_kappa2 = down & two
        if arr.routing == "state_aware":
            zs = zero_s & active
            zw = zero_w & active
            # 0_s moves the off MTJ on; 0_w moves the on MTJ off
            f1 = np.where(zs & up, single, f1)
            f2 = np.where(zs & down, single, f2)
            f1 = np.where(zw & down, single, f1)
            f2 = np.where(zw & up, single, f2)
        else:
            z = (zero_s | zero_w) & active
            k_lit = np.minimum(kap, 1).astype(float)
            # quotient pulse drives toward on, remainder pulse toward off; infeasible ones drop
            f1 = np.where(z & up & ~s1, k_lit, f1)
            f2 = np.where(z & up & s2, frac_nu, f2)
            f2 = np.where(z & down & ~s2, k_lit, f2)
            f1 = np.where(z & down & s1, frac_nu, f1)
            use_kappa1 = use_kappa1 | (z & up)
            use_kappa2 = use_kappa2 | (z & down)
        p1, fl1 = _switch(arr, 0, f1, np.where(use_kappa1, u_kappa, u_nu), law)
        p2, fl2 = _switch(arr, 1, f2, np.where(use_kappa2, u_kappa, u_nu), law)
        pulses = [p1, p2]
        all_flips = [fl1, fl2]

    if arr.leakage > 0:
        u_leak = streams[stream_prefix + "leakage"].random(arr.state.shape)
        for k in range(arr.state.shape[0]):
            all_flips[k] = all_flips[k] | (active & ~pulses[k] & (u_leak[k] < arr.leakage))

    for k, flips in enumerate(all_flips):
        arr.state[k] ^= flips
        stats.attempted += int(pulses[k].sum())
        stats.switched += int(flips.sum())
    arr.invalidate()

    new_codes = arr.codes()
    changed = new_codes != old_codes
    stats.changed = int(changed.sum())
    pair = old_codes.ravel().astype(np.int64) * 4 + new_codes.ravel()
    stats.transitions += np.bincount(pair, minlength=16).reshape(4, 4)
    if scheme == "general":
        stats.windows = int(np.any(active, axis=0).sum())
    else:
        stats.windows = int(np.any(active))
    if log:
        rows, cols = np.nonzero(changed)  # row-major: ordered by (row, col)
        stats.log = [(int(r), int(c), CODE_LABELS[int(old_codes[r, c])],
                      CODE_LABELS[int(new_codes[r, c])]) for r, c in zip(rows, cols)]
    return stats


def sgd_update(arr: SynapseArray, y, u, lr: float, streams, law=None,
               stream_prefix: str = "") -> UpdateStats:
    """In-array SGD step for one sample: delta = -lr * y u^T, all columns at once.

    Zero activations give zero column updates, so those synapses are isolated.
    """
    y = _check_vector(y, arr.rows, "error vector")
    u = _check_vector(u, arr.cols, "activation vector")
    delta = -lr * np.outer(y, u)
    return apply_update(arr, delta, streams, law, scheme="sgd", stream_prefix=stream_prefix)


def transition_probabilities(arr_params: MtjDeviceParams, w: int, delta: float,
                             zero: str = "strong", routing: str = "state_aware",
                             law=None, leakage: float = 0.0) -> dict:
    """Closed-form outcome distribution of one ternary synapse update.

    Built from the per-MTJ switching probabilities, independently of
    ``apply_update``; used as the oracle for the update statistics.
    """
    law = HardwareLaw() if law is None else law
    p = arr_params
    th = theta0(p)
    state = {1: (True, False), -1: (False, True)}.get(w)
    if state is None:
        state = (True, True) if zero == "weak" else (False, False)
    bounded = float(bound_update(float(w), delta))
    if bounded == 0:
        return {CODE_LABELS[2 * state[0] + state[1]]: 1.0}
    kappa, nu = split_update(TERNARY, bounded)
    kap, frac = abs(int(kappa)), abs(float(nu))
    up = bounded > 0
    # per-plane (pulse fraction) or None
    fr = [0.0, 0.0]
    if w != 0:
        kq = 0 if up else 1
        fr[kq] = min(kap, 1)
        fr[1 - kq] = min(frac + kap - 1, 1.0) if kap >= 2 else frac
    elif routing == "state_aware":
        single = max(min(kap, 1), frac)
        if state == (False, False):
            fr[0 if up else 1] = single
        else:
            fr[1 if up else 0] = single
    else:
        kq = 0 if up else 1
        if not state[kq]:
            fr[kq] = min(kap, 1)
        if state[1 - kq]:
            fr[1 - kq] = frac
    probs = []
    for k in range(2):
        if fr[k] > 0:
            r = p.r_on if state[k] else p.r_off
            probs.append(float(law.prob(np.array([fr[k]]), np.array([r]), th, p)[0]))
        else:
            probs.append(leakage)
    out = {}
    for f1 in (False, True):
        for f2 in (False, True):
            pr = (probs[0] if f1 else 1 - probs[0]) * (probs[1] if f2 else 1 - probs[1])
            s1, s2 = state[0] ^ f1, state[1] ^ f2
            label = CODE_LABELS[2 * s1 + s2]
            out[label] = out.get(label, 0.0) + pr
    return {k: v for k, v in out.items() if v > 0}
