import json

import pytest
from conftest import FIGURE_CONFIGS, config_dict

from actin_rlc.config import gate_from_dict, gate_to_dict, loads_json, parse_config
from actin_rlc.errors import ConfigError
from actin_rlc.gates import GateSpec
from actin_rlc.integrator import RunSettings

MINIMAL = {
    "filament": {"n_cells": 5, "params": {"R1_ohm": 6.11e6, "R2_ohm": 0.9e6, "L_henry": 1.7e-12, "C0_farad": 96e-18}},
    "run": {"t_end_ns": 1.0},
}


def with_(base, **changes):
    d = json.loads(json.dumps(base))
    d.update(changes)
    return d


def error_of(data) -> ConfigError:
    with pytest.raises(ConfigError) as err:
        parse_config(data)
    return err.value


class TestDefaults:
    def test_minimal(self):
        cfg = parse_config(MINIMAL)
        assert cfg.run == RunSettings(1.0)
        assert cfg.run.dt == 1e-3 and cfg.run.sample_every == 1e-2
        assert cfg.run.method == "implicit_trapezoidal"
        assert cfg.filament.b == 0.0 and cfg.stimuli == [] and cfg.gate is None
        eff = cfg.effective
        assert eff["run"]["dt_ns"] == 1e-3 and eff["filament"]["b"] == 0.0 and eff["stimuli"] == []

    def test_effective_reparses_to_same(self):
        for name in FIGURE_CONFIGS:
            cfg = parse_config(config_dict(name))
            again = parse_config(cfg.effective)
            assert again.effective == cfg.effective, name

    def test_derive_block(self):
        d = with_(MINIMAL, filament={"n_cells": 5, "derive": {"dielectric_constant": 80.0}})
        cfg = parse_config(d)
        assert cfg.filament.params.R1 == pytest.approx(6.11e6, rel=1e-3)

    def test_text_and_bytes(self):
        text = json.dumps(MINIMAL)
        assert parse_config(text).effective == parse_config(text.encode()).effective


class TestErrors:
    def test_unknown_key_named(self):
        d = with_(MINIMAL, run={"t_end_ns": 1.0, "dampening": 2})
        err = error_of(d)
        assert err.path == "run.dampening" and "dampening" in str(err)

    def test_unknown_top_key(self):
        assert error_of(with_(MINIMAL, dampening=1)).path == "dampening"

    def test_malformed_json_position(self):
        err = error_of('{\n  "run": {"t_end_ns": 1.0,,}\n}')
        assert "line 2" in str(err) and "column" in str(err)
        with pytest.raises(ConfigError):
            loads_json("[1, 2")

    @pytest.mark.parametrize(
        "patch,path",
        [
            ({"run": {"t_end_ns": -1.0}}, "run"),
            ({"run": {"t_end_ns": "1"}}, "run.t_end_ns"),
            ({"run": {"t_end_ns": 1.0, "method": "euler"}}, "run.method"),
            ({"stimuli": [{"cells": [9], "mode": "clamp", "waveform": {"kind": "constant"}}]}, "stimuli[0].cells"),
            ({"stimuli": [{"cells": [1], "mode": "push", "waveform": {"kind": "constant"}}]}, "stimuli[0]"),
            ({"stimuli": [{"cells": [1], "mode": "clamp", "waveform": {"kind": "square"}}]}, "stimuli[0].waveform.kind"),
            ({"readout": {"cells": [6]}}, "readout.cells"),
        ],
    )
    def test_paths(self, patch, path):
        assert error_of(with_(MINIMAL, **patch)).path == path

    def test_params_xor_derive(self):
        f = dict(MINIMAL["filament"], derive={})
        assert error_of(with_(MINIMAL, filament=f)).path == "filament"

    def test_missing_run(self):
        with pytest.raises(ConfigError):
            parse_config({"filament": MINIMAL["filament"]})

    def test_overlapping_stimuli(self):
        s = {"cells": [2], "mode": "clamp", "waveform": {"kind": "constant"}}
        with pytest.raises(ConfigError):
            parse_config(with_(MINIMAL, stimuli=[s, s]))

    def test_negative_resistance(self):
        f = json.loads(json.dumps(MINIMAL["filament"]))
        f["params"]["R1_ohm"] = -1.0
        assert error_of(with_(MINIMAL, filament=f)).path == "filament.params"


class TestGateConfigs:
    def test_named_gate(self):
        cfg = parse_config(config_dict("fig4"))
        assert isinstance(cfg.gate, GateSpec) and cfg.gate.name == "AND_u"
        assert cfg.gate_inputs == (1, 1)
        assert cfg.filament == cfg.gate.filament and cfg.run == cfg.gate.run

    def test_readout_override_is_partial(self):
        cfg = parse_config({"gate": {"name": "AND_u"}, "readout": {"threshold_fraction": 0.3}})
        base = parse_config({"gate": {"name": "AND_u"}}).gate
        assert cfg.gate.readout.threshold_fraction == 0.3
        assert cfg.gate.readout.cells == base.readout.cells and cfg.gate.readout.window == base.readout.window

    def test_run_override(self):
        cfg = parse_config({"gate": {"name": "AND_u"}, "run": {"dt_ns": 5e-4}})
        assert cfg.run.dt == 5e-4 and cfg.run.t_end == cfg.gate.run.t_end

    def test_filament_rejected(self):
        assert error_of({"gate": {"name": "AND_u"}, "filament": MINIMAL["filament"]}).path == "filament"

    def test_unknown_gate(self):
        assert error_of({"gate": {"name": "NAND_u"}}).path == "gate.name"

    @pytest.mark.parametrize("bits", [[1], [1, 2], [True, False], "11"])
    def test_bad_inputs(self, bits):
        assert error_of({"gate": {"name": "AND_u", "inputs": bits}}).path == "gate.inputs"

    def test_extra_stimulus_overlap(self):
        g = parse_config({"gate": {"name": "AND_u"}}).gate
        cell = g.bindings["a"][0].cells[0]
        s = {"cells": [cell], "mode": "clamp", "waveform": {"kind": "constant"}}
        assert error_of({"gate": {"name": "AND_u"}, "stimuli": [s]}).path == "stimuli"

    def test_extra_stimulus_allowed(self):
        s = {"cells": [1], "mode": "initial", "waveform": {"kind": "constant", "value": 0.2}}
        cfg = parse_config({"gate": {"name": "AND_u"}, "stimuli": [s]})
        assert len(cfg.stimuli) == 1

    def test_composite_rejects_overrides(self):
        assert error_of({"gate": {"name": "XOR_u_cascade"}, "run": {"dt_ns": 1e-3}}).path == "run"
        cfg = parse_config({"gate": {"name": "HALFADDER_f", "inputs": [1, 1]}})
        assert cfg.filament is None

    def test_inline_spec(self, library):
        g = library["OR_u"]
        cfg = parse_config({"gate": {"spec": gate_to_dict(g)}})
        assert cfg.gate == g

    def test_spec_unknown_key(self, library):
        d = gate_to_dict(library["OR_u"])
        d["colour"] = "red"
        with pytest.raises(ConfigError) as err:
            gate_from_dict(d)
        assert "colour" in str(err.value)
