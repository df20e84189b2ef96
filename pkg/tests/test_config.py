import textwrap

import pytest

from bsdelab.config import SCHEMA_VERSION, config_for_case, load_config, parse_config
from bsdelab.errors import ConfigError

CLOCK = textwrap.dedent("""\
    schema_version: 1
    case: clock_measure
    scheme: lattice
    grid:
      T: 1.0
      n_steps: 200
      box: [-3.0, 3.0]
      n_space: 31
    """)


def error_of(text, **kw):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, **kw)
    return exc.value


class TestParse:
    def test_defaults_merge(self):
        cfg = parse_config(CLOCK)
        assert cfg.case == "clock_measure" and cfg.n_space() == 31
        assert cfg.time_grid().n_steps == 200
        assert cfg.spec is not None and cfg.measure is not None

    def test_overrides_and_seed(self):
        cfg = config_for_case("clock_measure", seed=2 ** 64 - 1, overrides={"grid": {"n_steps": 300}})
        assert cfg.seed == 2 ** 64 - 1
        assert cfg.grid["n_steps"] == 300 and cfg.grid["n_space"] == 31

    def test_dx_spacing(self):
        cfg = parse_config(CLOCK.replace("n_space: 31", "dx: 0.2"))
        assert cfg.n_space() == 31

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "none.yaml")

    def test_every_case_has_defaults(self):
        from bsdelab.cases import CATALOG

        for name in CATALOG:
            assert config_for_case(name).case == name


class TestErrors:
    def test_schema_version(self):
        e = error_of(CLOCK.replace("schema_version: 1", "schema_version: 2"))
        assert e.line == 1 and str(SCHEMA_VERSION) in str(e)
        assert error_of("case: clock_measure\n").line == 1

    def test_syntax_error_line(self):
        e = error_of(CLOCK + "grid: [unclosed\n")
        assert e.line is not None and "syntax" in str(e)

    def test_unknown_keys_carry_lines(self):
        assert error_of(CLOCK + "colour: red\n").line == 9
        assert error_of(CLOCK.replace("  n_space: 31", "  n_space: 31\n  nodes: 4")).line == 9

    def test_unknown_case_and_scheme(self):
        assert error_of(CLOCK.replace("clock_measure", "nope")).line == 2
        e = error_of(CLOCK.replace("scheme: lattice", "scheme: pde"))
        assert e.line == 3 and "supports" in str(e)

    def test_bad_family_parameter(self):
        text = CLOCK + "driver:\n  f: {family: linear, rate: 1.0}\n"
        e = error_of(text)
        assert e.line == 10 and "rate" in str(e)

    def test_cfl(self):
        e = error_of(CLOCK.replace("n_steps: 200", "n_steps: 10"))
        assert e.line == 6

    @pytest.mark.parametrize("seed", [-1, 2 ** 64, "x", True])
    def test_seed_range(self, seed):
        with pytest.raises(ConfigError, match="seed"):
            parse_config(CLOCK + f"seed: {seed}\n")

    @pytest.mark.parametrize("probe", ["[1.0, 0.0]", "[0.0, 9.0]", "[0.0]"])
    def test_probes(self, probe):
        e = error_of(CLOCK + f"probes:\n- {probe}\n")
        assert e.line == 10

    def test_grid_rules(self):
        error_of(CLOCK.replace("box: [-3.0, 3.0]", "box: [3.0, -3.0]"))
        error_of(CLOCK.replace("n_space: 31", "dx: 0.7"))
        error_of(CLOCK.replace("n_space: 31", "n_space: 31\n  dx: 0.2"))
        error_of(CLOCK.replace("T: 1.0", "T: 0.0"))

    def test_n_list_order(self):
        base = config_for_case("homographic_sweep").to_dict()
        with pytest.raises(ConfigError, match="increasing"):
            config_for_case("homographic_sweep", overrides={"n_list": [4, 2]})
        assert base["n_list"] == sorted(base["n_list"])

    def test_unknown_check(self):
        assert "no check" in str(error_of(CLOCK + "checks: {speed: 1.0}\n"))

    def test_terminal_below_obstacle(self):
        with pytest.raises(ConfigError, match="below the obstacle"):
            config_for_case("american_put_style", overrides={"driver": {"terminal": {"family": "zero"}}})
