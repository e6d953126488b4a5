import json

import pytest

from ics5gsim import scenario


def test_defaults_validate_and_digest_is_stable():
    a, b = scenario.load(), scenario.load()
    assert a.digest() == b.digest()
    assert scenario.load(seed=2).digest() != a.digest()
    assert scenario.load(write_packets=False).digest() == a.digest()
    assert a.channel.profile == "wired"


def test_unknown_keys_are_rejected_with_path():
    with pytest.raises(scenario.ConfigError) as exc:
        scenario.load(overrides=["channel.nosie_dbm=-80", "attack.kind=dos"], bogus=1)
    text = str(exc.value)
    assert "channel.nosie_dbm" in text and "bogus" in text


def test_overrides_are_typed():
    cfg = scenario.load(overrides=["channel.dc_extra_noise_db=30", "attack.starts=[10, 20]",
                                   "attack.durations=[1, 2]", "jammer.directed=false", "deployment=5g_dc"])
    assert cfg.channel.dc_extra_noise_db == 30.0
    assert cfg.attack.starts == [10, 20]
    assert cfg.jammer.directed is False
    assert cfg.channel.profile == "5g_dc"
    with pytest.raises(scenario.ConfigError):
        scenario.load(overrides=["duration_s=abc"])
    with pytest.raises(ValueError):
        scenario.apply_overrides({}, ["no_equals_sign"])


@pytest.mark.parametrize("bad", [["deployment=lte"], ["attack.kind=worm"], ["devices.t_safe_ms=20"],
                                 ["duration_s=-1"], ["attack.starts=[1,2]"]])
def test_invalid_values(bad):
    with pytest.raises(scenario.ConfigError):
        scenario.load(overrides=bad)


def test_yaml_and_json_files(tmp_path):
    y = tmp_path / "s.yaml"
    y.write_text("deployment: 5g_gc\nduration_s: 30\nattack:\n  kind: mitm\n")
    j = tmp_path / "s.json"
    j.write_text(json.dumps({"deployment": "5g_gc", "duration_s": 30, "attack": {"kind": "mitm"}}))
    assert scenario.load(y).digest() == scenario.load(j).digest()
    assert scenario.load(y, ["duration_s=40"]).duration_s == 40


def test_windows():
    assert scenario.load().windows() == []
    cfg = scenario.load(attack={"kind": "dos"})
    assert cfg.windows()[0] == (200, 205)
    assert len(cfg.windows()) == 5
