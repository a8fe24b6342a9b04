from pathlib import Path

import pytest

from gmtrj.config import ConfigError, load_config, parse_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_bundled_configs_parse():
    for path in sorted(CONFIGS.glob("*.ini")):
        cfg = load_config(path)
        assert cfg.cells()


def test_full_grid_has_21_cells():
    cfg = load_config(CONFIGS / "logistic_grid.ini")
    cells = cfg.cells()
    assert len(cells) == 21
    assert {c["sigma_p"] for c in cells} == {0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 2.5}
    assert {c["k"] for c in cells} == {10, 50, 100}
    assert [c["cell"] for c in cells] == list(range(21))


def test_replicates_share_seed_with_distinct_streams():
    cfg = parse_config("[run]\ncase = toy\nreplicates = 3\nseed = 9\n[grid]\nk = 2, 4\n")
    cells = cfg.cells()
    assert len(cells) == 6
    assert {c["seed"] for c in cells} == {9}
    assert [c["stream"] for c in cells[:3]] == [0, 1, 2]


def test_defaults_filled():
    cfg = parse_config("[run]\ncase = latentclass\n")
    assert cfg.run["iterations"] == 300_000 and cfg.run["burn_in"] == 60_000
    assert cfg.grid["k"] == [10]


@pytest.mark.parametrize("text,line,fragment", [
    ("[run]\ncase = logistic\niterations = many\n", 3, "iterations"),
    ("[run]\ncase = logistic\n\n[grid]\nsigma_p = 0.5, -1\n", 5, "sigma_p"),
    ("[run]\ncase = logistic\nwarp = 9\n", 3, "unknown [run] key"),
    ("[run]\ncase = toy\n[grid]\nalgorithm = RJ, MH\n", 4, "algorithm"),
    ("[run]\ncase = toy\n[sweep]\n", 3, "unknown section"),
    ("case = toy\n", 1, "outside a section"),
    ("[run]\ncase = toy\ncase = toy\n", 3, "duplicate"),
    ("[run]\ncase = toy\niterations = 10\nburn_in = 10\n", 4, "iterations > burn_in"),
    ("[run]\ncase = toy\nseed\n", 3, "key = value"),
    ("[run]\ncase = toy\n[grid]\nk = 1,,2\n", 4, "empty"),
])
def test_errors_carry_line_numbers(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "exp.ini")
    assert info.value.line == line
    assert str(info.value).startswith(f"exp.ini:{line}:")
    assert fragment in str(info.value)


def test_missing_case():
    with pytest.raises(ConfigError, match="missing 'case'"):
        parse_config("[run]\nseed = 1\n")


def test_data_path_resolved_relative_to_config(tmp_path):
    (tmp_path / "exp.ini").write_text("[run]\ncase = logistic\ndata = d/table.csv\n")
    cfg = load_config(tmp_path / "exp.ini")
    assert Path(cfg.run["data"]) == tmp_path / "d" / "table.csv"


def test_small_delta_forces_generic_engine():
    cfg = parse_config("[run]\ncase = latentclass\ndelta = 0.05\n")
    assert cfg.run["engine"] == "generic"


def test_digest_tracks_text():
    a = parse_config("[run]\ncase = toy\n")
    b = parse_config("[run]\ncase = toy\nseed = 0\n")
    assert a.digest != b.digest and len(a.digest) == 16
