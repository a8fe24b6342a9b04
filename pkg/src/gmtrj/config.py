"""Experiment configuration files.

Plain ``key = value`` text with a ``[run]`` section for scalar settings and
a ``[grid]`` section whose keys are grid axes given as explicit
comma-separated lists.  The grid is the Cartesian product of its axes, in
file order.  Errors carry the file name and line number.

Example::

    [run]
    case = logistic
    iterations = 200000
    burn_in = 20000
    seed = 1

    [grid]
    algorithm = RJ, GMTRJ-quad
    sigma_p = 0.5, 2.0
    k = 10
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from .io import digest


class ConfigError(ValueError):
    def __init__(self, source, line, message):
        self.source, self.line = source, line
        where = f"{source}:{line}" if line else str(source)
        super().__init__(f"{where}: {message}")


def _int(v):
    return int(v)


def _pos_int(v):
    n = int(v)
    if n < 1:
        raise ValueError("must be a positive integer")
    return n


def _nonneg_int(v):
    n = int(v)
    if n < 0:
        raise ValueError("must be >= 0")
    return n


def _pos_float(v):
    x = float(v)
    if not x > 0:
        raise ValueError("must be positive")
    return x


def _bool(v):
    low = v.lower()
    if low in ("yes", "true", "on", "1"):
        return True
    if low in ("no", "false", "off", "0"):
        return False
    raise ValueError("expected yes or no")


def _choice(*options):
    def conv(v):
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return conv


LOGISTIC_ALGS = ("RJ", "MTRJ-I", "MTRJ-inv", "GMTRJ-quad")
LC_ALGS = ("RJ", "MTRJ-inv-I", "MTRJ-inv-II", "GMTRJ-man-I", "GMTRJ-man-II")
TOY_ALGS = ("RJ", "GMTRJ")

COMMON_RUN = {
    "case": _choice("logistic", "latentclass", "toy"),
    "iterations": _pos_int,
    "burn_in": _nonneg_int,
    "seed": _int,
    "replicates": _pos_int,
    "trace": _bool,
    "keep_burn_in": _bool,
    "engine": _choice("fast", "generic"),
    "series_every": _pos_int,
    "series_length": _pos_int,
}

CASES = {
    "logistic": {
        "run": {"data": str, "prior_var": _pos_float, "within_trials": _pos_int,
                "policy": _choice("same-destination", "varied-destination"), "reference": _choice(*LOGISTIC_ALGS),
                "coding": _choice("sum", "corner")},
        "grid": {"algorithm": _choice(*LOGISTIC_ALGS), "sigma_p": _pos_float, "k": _pos_int},
        "defaults": {"iterations": 200_000, "burn_in": 20_000, "reference": "RJ", "prior_var": 8.0,
                     "policy": "same-destination", "coding": "sum"},
        "grid_defaults": {"algorithm": ["RJ"], "sigma_p": [0.5], "k": [10]},
    },
    "latentclass": {
        "run": {"data": str, "c_max": _pos_int, "delta": _pos_float, "tail_from": _pos_int,
                "start_classes": _pos_int, "reference": _choice(*LC_ALGS)},
        "grid": {"algorithm": _choice(*LC_ALGS), "k": _pos_int, "tau": _pos_float, "alpha": _pos_float,
                 "beta": _pos_float},
        "defaults": {"iterations": 300_000, "burn_in": 60_000, "c_max": 20, "delta": 1.0, "tail_from": 11,
                     "start_classes": 1, "reference": "RJ"},
        "grid_defaults": {"algorithm": ["RJ"], "k": [10], "tau": [10.0], "alpha": [2.0], "beta": [2.0]},
    },
    "toy": {
        "run": {"space": str, "reference": _choice(*TOY_ALGS)},
        "grid": {"algorithm": _choice(*TOY_ALGS), "weights": _choice("MTM-I", "MTM-inv", "GMTM-quad"),
                 "k": _pos_int, "policy": _choice("same-destination", "varied-destination")},
        "defaults": {"iterations": 20_000, "burn_in": 2_000, "space": "two_models", "reference": "RJ"},
        "grid_defaults": {"algorithm": ["RJ"], "weights": ["MTM-inv"], "k": [3],
                          "policy": ["same-destination"]},
    },
}

BASE_DEFAULTS = {"seed": 0, "replicates": 1, "trace": False, "keep_burn_in": False, "engine": "fast",
                 "series_every": 100, "series_length": 60_000}


@dataclass
class ExperimentConfig:
    case: str
    run: dict
    grid: dict
    source: str = "<string>"
    text: str = ""
    lines: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return digest(self.text)

    def cells(self) -> list[dict]:
        """Grid points times replicates, each with its seed and stream id."""
        axes = list(self.grid)
        out = []
        for values in itertools.product(*(self.grid[a] for a in axes)):
            for rep in range(self.run["replicates"]):
                cell = dict(zip(axes, values))
                cell.update(replicate=rep, seed=self.run["seed"], stream=rep)
                out.append(cell)
        for i, cell in enumerate(out):
            cell["cell"] = i
        return out


def _lines(text):
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield no, line


def parse_config(text: str, source: str = "<string>", base_dir: Path | None = None) -> ExperimentConfig:
    raw: dict[str, dict[str, tuple[str, int]]] = {"run": {}, "grid": {}}
    section = None
    for no, line in _lines(text):
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(source, no, f"malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in raw:
                raise ConfigError(source, no, f"unknown section [{section}]; expected [run] or [grid]")
            continue
        if section is None:
            raise ConfigError(source, no, "setting outside a section; start with [run]")
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(source, no, f"expected 'key = value', got {line!r}")
        if key in raw[section]:
            raise ConfigError(source, no, f"duplicate key {key!r} (first on line {raw[section][key][1]})")
        if not value:
            raise ConfigError(source, no, f"empty value for {key!r}")
        raw[section][key] = (value, no)

    if "case" not in raw["run"]:
        raise ConfigError(source, 0, "missing 'case' in [run] (logistic, latentclass or toy)")
    case_value, case_line = raw["run"]["case"]
    try:
        case = COMMON_RUN["case"](case_value)
    except ValueError as exc:
        raise ConfigError(source, case_line, f"case: {exc}") from None
    spec = CASES[case]
    run_keys = {**COMMON_RUN, **spec["run"]}
    run = {**BASE_DEFAULTS, **spec["defaults"]}
    lines = {}
    for key, (value, no) in raw["run"].items():
        if key not in run_keys:
            raise ConfigError(source, no, f"unknown [run] key {key!r} for case {case}")
        try:
            run[key] = run_keys[key](value)
        except ValueError as exc:
            raise ConfigError(source, no, f"{key}: {exc}") from None
        lines[("run", key)] = no
    grid = {k: list(v) for k, v in spec["grid_defaults"].items()}
    for key, (value, no) in raw["grid"].items():
        if key not in spec["grid"]:
            raise ConfigError(source, no, f"unknown [grid] axis {key!r} for case {case}")
        items = [v.strip() for v in value.split(",")]
        if any(not v for v in items):
            raise ConfigError(source, no, f"{key}: empty list entry")
        try:
            grid[key] = [spec["grid"][key](v) for v in items]
        except ValueError as exc:
            raise ConfigError(source, no, f"{key}: {exc}") from None
        lines[("grid", key)] = no
    if not run["iterations"] > run["burn_in"]:
        raise ConfigError(source, lines.get(("run", "burn_in"), lines.get(("run", "iterations"), 0)),
                          f"need iterations > burn_in, got {run['iterations']} and {run['burn_in']}")
    if base_dir is not None and "data" in run:
        path = Path(run["data"])
        run["data"] = str(path if path.is_absolute() else base_dir / path)
    if case == "latentclass" and run["delta"] < 0.1:
        run["engine"] = "generic"
    return ExperimentConfig(case, run, grid, source, text, lines)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(path, 0, f"cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path), path.parent)
