"""Unit registry: exact rational conversions and extension files."""

import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from twingraph import (
    DocumentSyntaxError,
    IncompatibleUnitsError,
    SchemaError,
    UnitDef,
    UnitRegistry,
    UnknownUnitError,
)

from oracles import ORACLE_UNITS, oracle_convert


@pytest.mark.parametrize(
    "src, dst, expected",
    [
        ("kW", "W", Fraction(1000)),
        ("W", "kW", Fraction(1, 1000)),
        ("kg/h", "g/s", Fraction(1000, 3600)),
        ("g/s", "kg/h", Fraction(3600, 1000)),
        ("t/h", "kg/s", Fraction(1000, 3600)),
        ("%", "-", Fraction(1, 100)),
        ("min", "s", Fraction(60)),
        ("bar", "Pa", Fraction(100000)),
    ],
)
def test_known_factors_exact(registry, src, dst, expected):
    assert registry.conversion_ratio(src, dst) == expected
    assert registry.conversion_factor(src, dst) == float(expected)


def test_identical_symbols_are_identity(registry):
    for symbol in registry.symbols():
        assert registry.conversion_ratio(symbol, symbol) == 1


def test_affine_unit_converts_only_to_itself(registry):
    assert registry.conversion_ratio("°C", "°C") == 1
    for pair in (("°C", "K"), ("K", "°C")):
        with pytest.raises(IncompatibleUnitsError) as err:
            registry.conversion_ratio(*pair)
        assert err.value.kind == "affine"


def test_dimension_mismatch(registry):
    with pytest.raises(IncompatibleUnitsError) as err:
        registry.conversion_ratio("kg/h", "kW")
    assert err.value.kind == "dimension"


def test_unknown_symbol(registry):
    with pytest.raises(UnknownUnitError):
        registry.conversion_ratio("furlong", "W")
    with pytest.raises(UnknownUnitError):
        registry.lookup("furlong")
    assert "furlong" not in registry
    assert "kW" in registry


def test_symmetry_over_all_compatible_pairs(registry):
    """f(a,b) * f(b,a) == 1 exactly for every convertible pair."""
    checked = 0
    for a, b in itertools.permutations(registry.symbols(), 2):
        try:
            forward = registry.conversion_ratio(a, b)
        except IncompatibleUnitsError:
            continue
        backward = registry.conversion_ratio(b, a)
        assert forward * backward == 1
        assert abs(float(forward) * float(backward) - 1.0) <= 1e-12
        checked += 1
    assert checked > 20


def test_round_trip_through_third_unit(registry):
    ratio = (
        registry.conversion_ratio("kg/h", "g/s")
        * registry.conversion_ratio("g/s", "t/h")
        * registry.conversion_ratio("t/h", "kg/h")
    )
    assert ratio == 1


@given(
    st.sampled_from(["kg/s", "kg/h", "g/s", "g/h", "t/h"]),
    st.sampled_from(["kg/s", "kg/h", "g/s", "g/h", "t/h"]),
    st.sampled_from(["kg/s", "kg/h", "g/s", "g/h", "t/h"]),
)
def test_transitivity_within_family(a, b, c):
    registry = UnitRegistry()
    assert registry.conversion_ratio(a, b) * registry.conversion_ratio(
        b, c
    ) == registry.conversion_ratio(a, c)


def test_matches_independent_table(registry):
    for a, b in itertools.product(ORACLE_UNITS, repeat=2):
        expected = oracle_convert(a, b)
        if expected is None:
            with pytest.raises((IncompatibleUnitsError, UnknownUnitError)):
                registry.conversion_ratio(a, b)
        else:
            assert registry.conversion_ratio(a, b) == expected


def test_extension_file(registry, fixtures_dir):
    extended = registry.extended_from_json(
        (fixtures_dir / "units_extra.json").read_text(encoding="utf-8")
    )
    assert "t/d" in extended
    assert extended.conversion_ratio("t/d", "kg/s") == Fraction(1000, 86400)
    assert extended.conversion_ratio("GW", "W") == Fraction(10**9)
    # Built-ins survive and the original registry is untouched.
    assert extended.conversion_ratio("kW", "W") == 1000
    assert "t/d" not in registry


def test_extension_overrides_builtin(registry):
    text = json.dumps(
        {
            "units": [
                {
                    "symbol": "kW",
                    "dimension": [1, 2, -3, 0, 0, 0, 0],
                    "scaleToBase": 2000,
                }
            ]
        }
    )
    assert registry.extended_from_json(text).conversion_ratio("kW", "W") == 2000


def test_extension_fraction_strings_are_exact(registry):
    text = json.dumps(
        {
            "units": [
                {
                    "symbol": "oz/min",
                    "dimension": [1, 0, -1, 0, 0, 0, 0],
                    "scaleToBase": "28349523125/60000000000000",
                }
            ]
        }
    )
    extended = registry.extended_from_json(text)
    assert extended.conversion_ratio("oz/min", "kg/s") == Fraction(
        28349523125, 60000000000000
    )


def test_extended_accepts_unit_defs(registry):
    extra = UnitDef("MWh/t", (0, 2, -2, 0, 0, 0, 0), Fraction(3600000))
    assert "MWh/t" in registry.extended([extra])


@pytest.mark.parametrize(
    "payload, match",
    [
        ("{bad", "malformed"),
        ("[]", "units"),
        ('{"units": [{}]}', "symbol"),
        ('{"units": [{"symbol": "x"}]}', "dimension"),
        ('{"units": [{"symbol": "x", "dimension": [1, 2]}]}', "dimension"),
        ('{"units": [{"symbol": "x", "dimension": [1,0,0,0,0,0,true]}]}', "dimension"),
        (
            '{"units": [{"symbol": "x", "dimension": [0,0,0,0,0,0,0], "scaleToBase": 0}]}',
            "scaleToBase",
        ),
        (
            '{"units": [{"symbol": "x", "dimension": [0,0,0,0,0,0,0], "scaleToBase": true}]}',
            "boolean",
        ),
    ],
)
def test_extension_rejects(registry, payload, match):
    with pytest.raises((DocumentSyntaxError, SchemaError), match=match):
        registry.extended_from_json(payload)


def test_float_scales_read_at_decimal_face_value(registry):
    # 0.1 must mean exactly 1/10, not the binary float expansion.
    text = json.dumps(
        {
            "units": [
                {
                    "symbol": "dW",
                    "dimension": [1, 2, -3, 0, 0, 0, 0],
                    "scaleToBase": 0.1,
                }
            ]
        }
    )
    extended = registry.extended_from_json(text)
    assert extended.conversion_ratio("dW", "W") == Fraction(1, 10)
