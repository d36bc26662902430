import pytest

from donorsim import config as cf
from donorsim import scenario as sc


def test_defaults_resolve():
    p = cf.load_config()
    assert p.preset == "custom"
    assert p("resonator.f0_GHz") == cf.DEFAULTS["resonator"]["f0_GHz"]
    assert p.manifest_params() == {"resonator.f0_GHz": cf.DEFAULTS["resonator"]["f0_GHz"]}


def test_precedence(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text('preset = "res1"\nseed = 5\n[resonator]\nZ0_ohm = 33.0\n[grid]\ndx_nm = 20.0\n')
    p = cf.load_config(f, overrides=["grid.dx_nm=15.0"], seed=9)
    assert p.preset == "res1"
    assert p("resonator.width_um") == 5.0  # preset
    assert p("resonator.Z0_ohm") == 33.0  # file beats preset
    assert p("grid.dx_nm") == 15.0  # override beats file
    assert p.seed == 9  # flag beats file
    assert cf.load_config(f, preset="res3")("resonator.width_um") == 1.0


def test_presets_differ():
    widths = {name: cf.load_config(preset=name)("resonator.width_um") for name in cf.PRESETS}
    assert widths == {"res1": 5.0, "res2": 2.0, "res3": 1.0}
    with pytest.raises(cf.ConfigError) as exc:
        cf.load_config(preset="res9")
    assert exc.value.paths == ["preset"]


def test_weights_replace_rather_than_merge():
    p = cf.load_config(preset="res2", overrides=["spectrum.weights={1 = 2.0}"])
    assert sc.line_weights(p) == {1: 2.0}


def test_unknown_key_suggests_fix(tmp_path):
    f = tmp_path / "c.toml"
    f.write_text("[resonator]\nf0_Ghz = 7.0\n")
    with pytest.raises(cf.ConfigError) as exc:
        cf.load_config(f)
    assert "resonator.f0_GHz" in str(exc.value)
    assert exc.value.paths == ["resonator.f0_Ghz"]


@pytest.mark.parametrize("override", ["grid.dx_nm='x'", "coherence.charge_noise=1", "profile.depth_nm=3"])
def test_type_errors(override):
    with pytest.raises(cf.ConfigError):
        cf.load_config(overrides=[override])


def test_bad_override_and_file(tmp_path):
    with pytest.raises(cf.ConfigError):
        cf.parse_override("grid.dx_nm")
    assert cf.parse_override("a.b=[1, 2]") == (["a", "b"], [1, 2])
    assert cf.parse_override("a=hello") == (["a"], "hello")
    bad = tmp_path / "bad.toml"
    bad.write_text("[[[")
    with pytest.raises(cf.ConfigError):
        cf.load_config(bad)
    with pytest.raises(cf.ConfigError):
        cf.load_config(tmp_path / "missing.toml")


def test_missing_parameter():
    with pytest.raises(cf.ConfigError):
        cf.load_config()("resonator.nope")


def test_scenario_units():
    p = cf.load_config(preset="res3")
    res = sc.resonator(p)
    assert res.wire_width == pytest.approx(1e-6)
    assert res.omega0 == pytest.approx(2 * 3.141592653589793 * 6.945e9)
    x, y = sc.model_grid(p)
    assert x[0] == pytest.approx(-x[-1])
    assert y[0] == 0.0
    B = sc.field_sweep(p)
    assert B[0] == pytest.approx(p("spectrum.B_min_mT") * 1e-3)
    assert B[-1] <= p("spectrum.B_max_mT") * 1e-3 + 1e-12
    with pytest.raises(cf.ConfigError):
        sc.field_sweep(cf.load_config(overrides=["spectrum.B_step_uT=0"]))
    with pytest.raises(cf.ConfigError):
        sc.geometry(cf.load_config(overrides=["strain.wire_axis='111'"]))
