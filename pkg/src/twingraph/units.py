"""Unit registry and multiplicative conversions for port matching.

Each unit maps to a 7-component integer dimension vector over the base
dimensions (mass, length, time, temperature, amount, current, luminosity)
plus an exact rational scale to the coherent base unit. Only purely
multiplicative conversions are supported: affine units such as °C convert
to nothing but themselves, because a single factor on a connectsWith edge
cannot carry an offset.

Scales are kept as ``fractions.Fraction`` so that round trips like
kg/h -> g/s -> kg/h multiply back to exactly 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    DocumentSyntaxError,
    IncompatibleUnitsError,
    SchemaError,
    UnknownUnitError,
)

BASE_DIMENSIONS = (
    "mass",
    "length",
    "time",
    "temperature",
    "amount",
    "current",
    "luminosity",
)

Dimension = tuple[int, int, int, int, int, int, int]

DIMENSIONLESS: Dimension = (0, 0, 0, 0, 0, 0, 0)
MASS_FLOW: Dimension = (1, 0, -1, 0, 0, 0, 0)
POWER: Dimension = (1, 2, -3, 0, 0, 0, 0)
TEMPERATURE: Dimension = (0, 0, 0, 1, 0, 0, 0)
PRESSURE: Dimension = (1, -1, -2, 0, 0, 0, 0)
AMOUNT_FLOW: Dimension = (0, 0, -1, 0, 1, 0, 0)
VOLTAGE: Dimension = (1, 2, -3, 0, 0, -1, 0)
CURRENT: Dimension = (0, 0, 0, 0, 0, 1, 0)
TIME: Dimension = (0, 0, 1, 0, 0, 0, 0)
VOLUME_FLOW: Dimension = (0, 3, -1, 0, 0, 0, 0)


@dataclass(frozen=True)
class UnitDef:
    symbol: str
    dimension: Dimension
    scale_to_base: Fraction
    affine_offset: Fraction = Fraction(0)


def _builtin_units() -> dict[str, UnitDef]:
    frac = Fraction
    defs = [
        UnitDef("W", POWER, frac(1)),
        UnitDef("kW", POWER, frac(1000)),
        UnitDef("MW", POWER, frac(1_000_000)),
        UnitDef("kg/s", MASS_FLOW, frac(1)),
        UnitDef("kg/h", MASS_FLOW, frac(1, 3600)),
        UnitDef("g/s", MASS_FLOW, frac(1, 1000)),
        UnitDef("g/h", MASS_FLOW, frac(1, 3_600_000)),
        UnitDef("t/h", MASS_FLOW, frac(1000, 3600)),
        UnitDef("K", TEMPERATURE, frac(1)),
        UnitDef("°C", TEMPERATURE, frac(1), frac(27315, 100)),
        UnitDef("Pa", PRESSURE, frac(1)),
        UnitDef("kPa", PRESSURE, frac(1000)),
        UnitDef("bar", PRESSURE, frac(100_000)),
        UnitDef("mbar", PRESSURE, frac(100)),
        UnitDef("mol/s", AMOUNT_FLOW, frac(1)),
        UnitDef("mol/h", AMOUNT_FLOW, frac(1, 3600)),
        UnitDef("V", VOLTAGE, frac(1)),
        UnitDef("A", CURRENT, frac(1)),
        UnitDef("s", TIME, frac(1)),
        UnitDef("ms", TIME, frac(1, 1000)),
        UnitDef("min", TIME, frac(60)),
        UnitDef("h", TIME, frac(3600)),
        UnitDef("m3/s", VOLUME_FLOW, frac(1)),
        UnitDef("m3/h", VOLUME_FLOW, frac(1, 3600)),
        UnitDef("-", DIMENSIONLESS, frac(1)),
        UnitDef("%", DIMENSIONLESS, frac(1, 100)),
    ]
    return {u.symbol: u for u in defs}


def _as_fraction(value, symbol: str) -> Fraction:
    # Strings keep extension files exact ("1000/3600"); numbers are read at
    # their decimal face value, not their binary float expansion.
    if isinstance(value, str):
        return Fraction(value)
    if isinstance(value, bool):
        raise SchemaError(f"unit {symbol!r}: numeric field is a boolean")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    raise SchemaError(f"unit {symbol!r}: expected number or fraction string")


class UnitRegistry:
    """Immutable-by-convention symbol table; `extended` returns a new registry."""

    def __init__(self, units: dict[str, UnitDef] | None = None):
        self._units = dict(_builtin_units() if units is None else units)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._units

    def symbols(self) -> tuple[str, ...]:
        return tuple(sorted(self._units))

    def lookup(self, symbol: str) -> UnitDef:
        try:
            return self._units[symbol]
        except KeyError:
            raise UnknownUnitError(f"unknown unit {symbol!r}") from None

    def conversion_ratio(self, src: str, dst: str) -> Fraction:
        """Exact factor f with value[dst] = f * value[src].

        Identical symbols convert with factor 1 even for affine units; any
        other pairing requires equal dimensions and zero offsets.
        """
        src_def = self.lookup(src)
        dst_def = self.lookup(dst)
        if src == dst:
            return Fraction(1)
        if src_def.dimension != dst_def.dimension:
            raise IncompatibleUnitsError(
                f"{src!r} and {dst!r} have different dimensions", kind="dimension"
            )
        if src_def.affine_offset != 0 or dst_def.affine_offset != 0:
            raise IncompatibleUnitsError(
                f"{src!r} and {dst!r} are related by an offset, not a factor",
                kind="affine",
            )
        return src_def.scale_to_base / dst_def.scale_to_base

    def conversion_factor(self, src: str, dst: str) -> float:
        return float(self.conversion_ratio(src, dst))

    def extended(self, defs: list[UnitDef]) -> "UnitRegistry":
        units = dict(self._units)
        for definition in defs:
            units[definition.symbol] = definition
        return UnitRegistry(units)

    def extended_from_json(self, text: str) -> "UnitRegistry":
        """Merge an extension file over the built-ins.

        File schema: {"units": [{"symbol", "dimension": [7 ints],
        "scaleToBase": number|fraction string, "affineOffset": ...}]}.
        """
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DocumentSyntaxError(f"malformed unit extension file: {exc}") from exc
        if not isinstance(obj, dict) or not isinstance(obj.get("units"), list):
            raise SchemaError('unit extension file needs a top-level "units" list')
        defs = []
        for entry in obj["units"]:
            if not isinstance(entry, dict) or "symbol" not in entry:
                raise SchemaError("unit entries need a symbol")
            symbol = entry["symbol"]
            dimension = entry.get("dimension")
            if (
                not isinstance(dimension, list)
                or len(dimension) != 7
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in dimension)
            ):
                raise SchemaError(
                    f"unit {symbol!r}: dimension must be a list of 7 integers"
                )
            scale = _as_fraction(entry.get("scaleToBase", 1), symbol)
            if scale <= 0:
                raise SchemaError(f"unit {symbol!r}: scaleToBase must be > 0")
            offset = _as_fraction(entry.get("affineOffset", 0), symbol)
            defs.append(UnitDef(symbol, tuple(dimension), scale, offset))
        return self.extended(defs)
