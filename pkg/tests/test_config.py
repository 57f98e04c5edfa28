import math

import pytest
from hypothesis import given, settings, strategies as st

from photon_bench import configs
from photon_bench.config import (
    ConfigError, parse_config, parse_quantity, parse_state, serialize_config, validate_config,
)
from photon_bench.optics import VisibilityKind

BASE = """\
[experiment]
protocol = ghz
seed = 7
shots = 100

[sources]
pair_rate = 200
pair_correlation_time = 20 ns
pair_linewidth = 9.6 MHz
laser_rate = 8.0e5
laser_linewidth = 1 MHz

[windows]
pair = 16 ns
bsm = 3 ns
threefold = 16 ns

[visibility]
model = exponential
coherence_time = 20 ns
"""


def test_units():
    assert parse_quantity("3 ns") == pytest.approx(3e-9)
    assert parse_quantity("9.6MHz") == pytest.approx(9.6e6)
    assert parse_quantity("8.0e5") == 8e5
    assert parse_quantity("250 ps") == pytest.approx(2.5e-10)
    for bad in ("ns", "3 parsecs", "1..2"):
        with pytest.raises(ValueError):
            parse_quantity(bad)


def test_parse_base():
    cfg = parse_config(BASE)
    assert cfg.protocol == "ghz" and cfg.mode == "shots"
    assert cfg.windows.bsm == pytest.approx(3e-9)
    assert cfg.visibility_model.kind is VisibilityKind.EXPONENTIAL
    assert cfg.visibility_model.window == pytest.approx(3e-9)  # defaults to the BSM window
    assert cfg.effective_settings() == ("ZZZ", "YYX", "YXY", "XYY", "XXX")


def test_every_problem_reported_with_lines():
    text = BASE.replace("seed = 7", "seed = -1").replace("bsm = 3 ns", "bsm = 0 ns") + "\n[bogus]\nx = 1\n"
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    msgs = [str(i) for i in info.value.issues]
    assert any("seed" in m for m in msgs)
    assert any("windows.bsm" in m for m in msgs)
    assert any("bogus" in m for m in msgs)
    assert all(i.line > 0 for i in info.value.issues)


def test_shots_and_duration_exclusive():
    issues = validate_config(BASE.replace("shots = 100", "shots = 100\nduration = 1 s"))
    assert any("mutually exclusive" in str(i) for i in issues)
    issues = validate_config(BASE.replace("shots = 100\n", ""))
    assert any("required" in str(i) for i in issues)


def test_timetags_need_duration():
    issues = validate_config(BASE.replace("shots = 100", "shots = 100\noutputs = results, timetags"))
    assert any("timetags" in str(i) for i in issues)


def test_missing_required_key():
    issues = validate_config(BASE.replace("laser_rate = 8.0e5\n", ""))
    assert any("sources.laser_rate" in str(i) for i in issues)


def test_noise_range_checked():
    issues = validate_config(BASE + "\n[noise]\naccidental_fraction = 1.2\n")
    assert any("accidental_fraction" in str(i) for i in issues)


def test_per_state_noise_must_name_an_input():
    text = BASE.replace("protocol = ghz", "protocol = teleport") + \
        "\n[states]\ninputs = H, +\n\n[noise]\nvisibility.L = 0.5\n"
    assert any("not in states.inputs" in str(i) for i in validate_config(text))


def test_parse_state_catalog_and_custom():
    assert parse_state("+").amplitudes[1] == pytest.approx(2 ** -0.5)
    s = parse_state("custom(1.5707963267948966, 0)")
    assert abs(s.amplitudes[1]) == pytest.approx(2 ** -0.5)
    with pytest.raises(ValueError):
        parse_state("Q")


@pytest.mark.parametrize("name", configs.names())
def test_shipped_configs_valid_and_round_trip(name):
    cfg = parse_config(configs.read_text(name))
    assert parse_config(serialize_config(cfg)) == cfg


@settings(max_examples=40)
@given(seed=st.integers(0, 2**64 - 1), shots=st.integers(1, 10**6),
       bsm=st.floats(1e-12, 1e-6, allow_nan=False), vis=st.floats(0, 1))
def test_serialize_round_trip(seed, shots, bsm, vis):
    text = BASE.replace("seed = 7", f"seed = {seed}").replace("shots = 100", f"shots = {shots}") \
        .replace("bsm = 3 ns", f"bsm = {bsm!r}") + f"\n[noise]\nvisibility = {vis!r}\n"
    cfg = parse_config(text)
    again = parse_config(serialize_config(cfg))
    assert again == cfg
    assert math.isclose(again.windows.bsm, bsm)
