"""Operation counts, energy and TOPs/W for one synapse array and its converters.

One operation is a 1-bit GXNOR, accumulate or update. Every efficiency is
ops / (power * time); the assumptions that pick power and time are explicit
fields, never implicit.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

from . import config as cfg
from .errors import ConfigError, EmptyResultError, ParameterError


@dataclass(frozen=True)
class Converter:
    name: str
    bits: int
    count: int
    power: float          # watts, per unit or per bank (see AssumptionSet)
    phases: tuple = ()    # phases in which the converter is active


def default_converters():
    return (
        Converter("adc_8b", 8, 8, 16e-3, ("feedforward", "inverse_read")),
        Converter("dac_8b", 8, 256, 5.52e-3, ("update",)),
        Converter("dac_1b", 1, 256, 1e-3, ("feedforward", "inverse_read")),
    )


@dataclass(frozen=True)
class PowerProfile:
    rows: int = 128
    cols: int = 128
    read_power: float = 28.5e-3
    update_power: float = 3.25e-3
    t_rd: float = 0.5e-9
    t_up: float = 2e-9
    converters: tuple = field(default_factory=default_converters)
    adc_rate: float = 1.28e9   # samples/s per ADC

    def __post_init__(self):
        if self.read_power < 0 or self.update_power < 0:
            raise ParameterError("powers must be >= 0")
        for c in self.converters:
            if c.power < 0 or c.count < 0:
                raise ParameterError(f"converter {c.name}: negative power or count")

    def without_converters(self) -> "PowerProfile":
        return replace(self, converters=())


# Table rows for the two characterized array sizes
ARRAY_64 = PowerProfile(rows=64, cols=64, read_power=7.31e-3, update_power=1.64e-3)
ARRAY_128 = PowerProfile()


class UpdateConvention(str, Enum):
    PER_SYNAPSE = "per_synapse"
    PER_MTJ = "per_mtj"


@dataclass(frozen=True)
class AssumptionSet:
    """How converter power and phase time enter the system figures.

    converter_power: 'per_unit' multiplies each converter's power by its
        count; 'bank_total' treats the listed power as the whole bank.
    include_converters: converters are on for the whole phase when True.
    include_array_power: array read/update power is added to the phase.
    phase_time: 'array_window' uses T_rd / T_up; 'adc_limited' stretches a
        read phase to the time the ADCs need to convert every output.
    bit_cycles: bit-serial cycles per inverse read (error precision).
    precision_scaled_ops: count an inverse read at the error precision, so a
        full read is rows*(cols+cols)/bit_cycles operations.
    """

    converter_power: str = "per_unit"
    include_converters: bool = True
    include_array_power: bool = True
    phase_time: str = "array_window"
    bit_cycles: int = 8
    precision_scaled_ops: bool = True

    def __post_init__(self):
        if self.converter_power not in ("per_unit", "bank_total"):
            raise ParameterError(f"unknown converter power mode {self.converter_power!r}")
        if self.phase_time not in ("array_window", "adc_limited"):
            raise ParameterError(f"unknown phase time mode {self.phase_time!r}")
        if self.bit_cycles < 1:
            raise ParameterError("bit_cycles must be >= 1")


# Reproduces the bit-streamed inverse-read figure: array read power during
# 8 ADC-limited bit cycles, operations counted at 8-bit error precision.
BIT_STREAM_PRESET = AssumptionSet(converter_power="per_unit", include_converters=False,
                                  include_array_power=True, phase_time="adc_limited",
                                  bit_cycles=8, precision_scaled_ops=True)

PUBLISHED_FIGURES = {"feedforward": 18.3, "update": 3.0, "inverse_read": 1.43}


def tops_per_watt(ops: float, power: float, time: float) -> float:
    if ops == 0:
        raise EmptyResultError("zero operations: efficiency undefined")
    if power <= 0 or time <= 0:
        raise ZeroDivisionError("power and time must be positive")
    return ops / (power * time) / 1e12


def feedforward_ops(profile: PowerProfile) -> int:
    return profile.rows * (profile.cols + profile.cols)


def feedforward_efficiency(profile: PowerProfile = ARRAY_128) -> float:
    return tops_per_watt(feedforward_ops(profile), profile.read_power, profile.t_rd)


def update_ops(profile: PowerProfile, convention=UpdateConvention.PER_MTJ,
               columns: int = 1) -> int:
    convention = UpdateConvention(convention)
    per_synapse = profile.rows * columns
    return 2 * per_synapse if convention is UpdateConvention.PER_MTJ else per_synapse


def update_efficiency(profile: PowerProfile = ARRAY_128,
                      convention=UpdateConvention.PER_MTJ, columns: int = 1) -> float:
    """Efficiency of column-serial updates: one column per T_up window."""
    ops = update_ops(profile, convention, columns)
    return tops_per_watt(ops, profile.update_power, profile.t_up * max(columns, 1))


def converter_power(profile: PowerProfile, phase: str, assumptions: AssumptionSet) -> float:
    if not assumptions.include_converters:
        return 0.0
    total = 0.0
    for c in profile.converters:
        if phase in c.phases:
            total += c.power * (c.count if assumptions.converter_power == "per_unit" else 1)
    return total


def _adc_count(profile: PowerProfile) -> int:
    return sum(c.count for c in profile.converters if c.name.startswith("adc"))


def read_cycle_time(profile: PowerProfile, outputs: int, assumptions: AssumptionSet) -> float:
    if assumptions.phase_time == "array_window":
        return profile.t_rd
    n_adc = _adc_count(profile)
    if n_adc == 0:
        raise ParameterError("adc_limited timing needs at least one ADC")
    return max(profile.t_rd, outputs / (n_adc * profile.adc_rate))


@dataclass
class PhaseReport:
    phase: str
    ops: float
    time: float
    power: float
    energy: float
    tops_per_watt: float


@dataclass
class EfficiencyReport:
    phases: list
    assumptions: dict
    profile: dict
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"assumptions": self.assumptions, "profile": self.profile,
                "phases": [asdict(p) for p in self.phases], "notes": list(self.notes)}

    def table(self) -> str:
        head = f"{'phase':<14}{'ops':>10}{'time_ns':>10}{'power_mW':>11}{'TOPs/W':>10}"
        lines = [head, "-" * len(head)]
        for p in self.phases:
            lines.append(f"{p.phase:<14}{p.ops:>10.0f}{p.time * 1e9:>10.3f}"
                         f"{p.power * 1e3:>11.3f}{p.tops_per_watt:>10.2f}")
        lines.append("assumptions: " + ", ".join(f"{k}={v}" for k, v in
                                                  sorted(self.assumptions.items())))
        lines.extend(self.notes)
        return "\n".join(lines)


def _phase(name, ops, time, power):
    return PhaseReport(name, float(ops), time, power, power * time,
                       tops_per_watt(ops, power, time))


def system_efficiency(profile: PowerProfile = ARRAY_128,
                      assumptions: AssumptionSet = AssumptionSet(),
                      convention=UpdateConvention.PER_MTJ) -> EfficiencyReport:
    """Per-phase efficiency with converters added to the array power."""
    a = assumptions
    arr_rd = profile.read_power if a.include_array_power else 0.0
    arr_up = profile.update_power if a.include_array_power else 0.0

    ff_power = arr_rd + converter_power(profile, "feedforward", a)
    ff = _phase("feedforward", feedforward_ops(profile),
                read_cycle_time(profile, profile.rows, a), ff_power)

    up_power = arr_up + converter_power(profile, "update", a)
    up = _phase("update", update_ops(profile, convention), profile.t_up, up_power)

    inv_power = arr_rd + converter_power(profile, "inverse_read", a)
    cycle = read_cycle_time(profile, profile.cols, a)
    inv_ops = feedforward_ops(profile)
    if a.precision_scaled_ops:
        inv_ops = inv_ops / a.bit_cycles
    inv = _phase("inverse_read", inv_ops, cycle * a.bit_cycles, inv_power)

    notes = [f"published system figures (TOPs/W): " + ", ".join(
        f"{k}={v}" for k, v in PUBLISHED_FIGURES.items())]
    if a.include_converters:
        notes.append("converters are on for the whole of each phase they serve")
    return EfficiencyReport([ff, up, inv], asdict(a), profile_to_dict(profile), notes)


# ---- profile files ----

def profile_to_dict(p: PowerProfile) -> dict:
    return {
        "rows": p.rows, "cols": p.cols,
        "read_power_mw": cfg.from_si("_mw", p.read_power),
        "update_power_mw": cfg.from_si("_mw", p.update_power),
        "t_rd_ns": cfg.from_si("_ns", p.t_rd),
        "t_up_ns": cfg.from_si("_ns", p.t_up),
        "adc_rate_gsps": cfg.from_si("_gsps", p.adc_rate),
        "converters": [{"name": c.name, "bits": c.bits, "count": c.count,
                        "power_mw": cfg.from_si("_mw", c.power), "phases": list(c.phases)}
                       for c in p.converters],
    }


PROFILE_KEYS = {"rows", "cols", "read_power_mw", "update_power_mw", "t_rd_ns", "t_up_ns",
                "adc_rate_gsps", "converters"}


def profile_from_dict(data: dict, path=None) -> PowerProfile:
    cfg.check_keys(data, PROFILE_KEYS, path, " in power profile")
    base = PowerProfile()
    kw = {}
    for key, attr in (("read_power_mw", "read_power"), ("update_power_mw", "update_power"),
                      ("t_rd_ns", "t_rd"), ("t_up_ns", "t_up"), ("adc_rate_gsps", "adc_rate")):
        if key in data:
            kw[attr] = cfg.to_si(key, cfg.number(data, key, None, path))
    for key in ("rows", "cols"):
        if key in data:
            kw[key] = int(cfg.number(data, key, None, path))
    if "converters" in data:
        convs = []
        for item in data["converters"]:
            try:
                convs.append(Converter(str(item["name"]), int(item["bits"]), int(item["count"]),
                                       cfg.to_si("_mw", item["power_mw"]),
                                       tuple(item.get("phases", ()))))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad converter entry: {exc}", path=path,
                                  field="converters") from exc
        kw["converters"] = tuple(convs)
    return replace(base, **kw)


def assumptions_from_dict(data: dict, path=None) -> AssumptionSet:
    allowed = set(AssumptionSet.__dataclass_fields__)
    cfg.check_keys(data, allowed, path, " in assumptions")
    try:
        return AssumptionSet(**data)
    except (TypeError, ParameterError) as exc:
        raise ConfigError(str(exc), path=path, field="assumptions") from exc


def scaled_read_power(profile: PowerProfile, rows: int, cols: int) -> float:
    """Read power of a rows x cols tile, scaled per synapse from the profile."""
    return profile.read_power * rows * cols / (profile.rows * profile.cols)


def tiles(rows: int, cols: int, profile: PowerProfile) -> int:
    return math.ceil(rows / profile.rows) * math.ceil(cols / profile.cols)
