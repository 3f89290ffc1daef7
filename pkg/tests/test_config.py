import pytest

from heatlab.config import SCENARIOS, RunConfig, load_config, parse_config, parse_levels
from heatlab.errors import ParseError, ValidationError


def test_empty_file_gives_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.scenarios == SCENARIOS
    assert (cfg.C_star, cfg.r, cfg.seed, cfg.T) == (16.0, 1, 42, 1.0)


def test_levels_range():
    assert parse_config("levels = 3..5").levels == (3, 4, 5)
    assert parse_levels("4") == (4,)
    assert parse_levels("5, 3") == (3, 5)
    with pytest.raises(ValidationError):
        parse_levels("5..3")
    with pytest.raises(ValidationError):
        parse_config("levels = 0..2")


def test_unknown_domain_names_allowed_values():
    with pytest.raises(ValidationError) as exc:
        parse_config("domain = pentagon")
    assert "square" in str(exc.value) and "lshape" in str(exc.value)


def test_unknown_key_reports_line():
    text = "# comment\n[run]\nlevels = 3..4\ncolour = blue\n"
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.line == 4
    assert "4" in str(exc.value)
    with pytest.raises(ParseError) as exc:
        parse_config("[run]\n[plots]\n")
    assert exc.value.line == 2
    with pytest.raises(ParseError) as exc:
        parse_config("levels 3..4")
    assert exc.value.line == 1


def test_full_file(tmp_path):
    text = """
[run]
domain = lshape
levels = 3..4
r = 1
scenarios = analyticity, maxreg   # two of them
seed = 7
T = 1

[dyadic]
C_star = 32

[solver]
dof_cap = 3000

[output]
path = out.csv
"""
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = load_config(path)
    assert cfg.domains == ("lshape",)
    assert cfg.scenarios == ("analyticity", "maxreg")
    assert (cfg.seed, cfg.C_star, cfg.dof_cap, cfg.output) == (7, 32.0, 3000, "out.csv")


@pytest.mark.parametrize("line", ["r = 3", "scenarios = spectra", "T = 2", "seed = x", "C_star = 8"])
def test_invalid_values(line):
    section = "[dyadic]\n" if line.startswith("C_star") else ""
    with pytest.raises(ValidationError):
        parse_config(section + line)


def test_overrides_skip_none():
    cfg = RunConfig().with_overrides(seed=None, levels=(3,))
    assert cfg.seed == 42 and cfg.levels == (3,)
