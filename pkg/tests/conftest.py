import json
import time
from importlib import resources

import pytest

from actin_rlc.gates import ParallelGate, truth_table
from actin_rlc.library import builtin_gate_library

ACCEPTANCE_LINES: list[str] = []

# Separation margins established by calibration (V/V0).
FROZEN_MARGINS = {
    "AND_u": 0.16900358971344626,
    "OR_u": 0.17227232828851913,
    "NOT_u": 0.1681359695189738,
    "AND_f": 0.1728758928544732,
    "XOR_f": 0.1619501108971608,
    "HALFADDER_f.carry": 0.1728758928544732,
    "HALFADDER_f.sum": 0.16196143267555319,
    "XOR_f_lumped": 0.16134126074180352,
}

CONFIG_DIR = resources.files("actin_rlc").joinpath("data", "configs")
FIGURE_CONFIGS = ("fig2a", "fig2b", "fig3a", "fig3b", "fig4")


def config_bytes(name: str) -> bytes:
    return CONFIG_DIR.joinpath(f"{name}.json").read_bytes()


def config_path(name: str) -> str:
    return str(CONFIG_DIR.joinpath(f"{name}.json"))


def config_dict(name: str) -> dict:
    return json.loads(config_bytes(name))


def summary_schema() -> dict:
    return json.loads(resources.files("actin_rlc").joinpath("data", "summary.schema.json").read_text())


@pytest.fixture(scope="session")
def library():
    return builtin_gate_library()


class _TableCache:
    """Truth tables (with traces) of the shipped gates, computed on first use."""

    def __init__(self, lib):
        self.lib = lib
        self.tables = {}
        self.seconds = {}

    def __getitem__(self, name):
        if name not in self.tables:
            start = time.perf_counter()
            self.tables[name] = truth_table(self.lib[name], keep_traces=True)
            self.seconds[name] = time.perf_counter() - start
        return self.tables[name]


@pytest.fixture(scope="session")
def gate_tables(library):
    return _TableCache(library)


def single_gates(lib):
    """(name, GateSpec) for every single-filament gate, half-adder parts included."""
    out = []
    for name, g in lib.items():
        if isinstance(g, ParallelGate):
            out.extend((f"{name}.{k}", part) for k, part in g.outputs)
        elif hasattr(g, "readout"):
            out.append((name, g))
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
