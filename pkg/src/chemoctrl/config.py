"""Run configuration: a sectioned ``key = value`` text file.

Every key is declared in :data:`SCHEMA`; unknown sections or keys are errors,
and every error carries the line number it refers to.  ``save_config`` writes
all keys, defaults included, so ``load(save(load(x)))`` is a fixed point.
"""
from __future__ import annotations

import configparser
from fractions import Fraction
import math
from pathlib import Path
import re

import numpy as np

from .forward import Control, SolverOptions
from .grid import Grid, TimeGrid
from .objective import AdmissibleBox, ObjectiveWeights
from .optimizer import OptimizerOptions
from .snapshot import read_snapshot

REQUIRED = object()

FIELD_KEYS = {
    "kind": ("choice:constant,gaussian,file", "constant"),
    "value": ("float", 0.0),
    "center": ("floats", None),
    "width": ("float", 0.1),
    "amplitude": ("float", 1.0),
    "offset": ("float", 0.0),
    "path": ("str", ""),
}

SCHEMA = {
    "grid": {
        "dims": ("ints", REQUIRED),
        "extents": ("floats", None),
        "control_lo": ("floats", None),
        "control_hi": ("floats", None),
    },
    "time": {"T": ("float", 1.0), "steps": ("int", REQUIRED)},
    "physics": {"eps": ("float", 0.0), "flux": ("choice:central,upwind", "central")},
    "u0": dict(FIELD_KEYS),
    "v0": dict(FIELD_KEYS),
    "control": dict(FIELD_KEYS),
    "weights": {
        "alpha_u": ("float", 1.0),
        "alpha_v": ("float", 1.0),
        "alpha_f": ("float", 1e-2),
        "exponent": ("float", 20.0 / 7.0),
    },
    "box": {"f_min": ("float", -math.inf), "f_max": ("float", math.inf)},
    "solver": {"tol": ("float", 1e-10), "max_iter": ("int", 0), "diag_scaling": ("bool", False)},
    "optimizer": {
        "tol_opt": ("float", 1e-6),
        "relative": ("bool", True),
        "max_iter": ("int", 100),
        "tau0": ("float", 1.0),
        "backtrack": ("float", 0.5),
        "c1": ("float", 1e-4),
        "max_backtracks": ("int", 40),
    },
    "targets": {
        "kind": ("choice:constant,file,uncontrolled", "uncontrolled"),
        "u_value": ("float", 0.0),
        "v_value": ("float", 0.0),
        "u_path": ("str", ""),
        "v_path": ("str", ""),
    },
    "output": {"directory": ("str", "runs"), "stride": ("int", 10)},
    "check": {"sigmas": ("floats", (1e-2, 1e-3, 1e-4)), "threshold": ("float", 1e-4)},
    "sweep": {"eps_list": ("floats", (1e-2, 1e-3, 1e-4))},
}


class ConfigError(ValueError):
    def __init__(self, message, line=None, path=None):
        where = f"{path or '<config>'}" + (f":{line}" if line else "")
        super().__init__(f"{where}: {message}")
        self.line = line


def _float(text):
    text = text.strip()
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _parse_value(kind, text):
    if kind in ("ints", "floats") and not text.strip():
        return None
    if kind == "int":
        return int(text)
    if kind == "float":
        return _float(text)
    if kind == "ints":
        return tuple(int(x) for x in re.split(r"[,\s]+", text.strip()) if x)
    if kind == "floats":
        return tuple(_float(x) for x in re.split(r"[,\s]+", text.strip()) if x)
    if kind == "bool":
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind.startswith("choice:"):
        options = kind.split(":", 1)[1].split(",")
        if text.strip() not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return text.strip()
    return text.strip()


def _format_value(kind, value):
    if value is None:
        return ""
    if kind in ("ints", "floats"):
        return ", ".join(repr(x) for x in value)
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return repr(float(value))
    return str(value)


def _line_index(text):
    """Map (section, key) -> line number, and section -> header line number."""
    index, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            index.setdefault((section, None), no)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index.setdefault((section, m.group(1).strip()), no)
    return index


class RunConfig:
    """Validated configuration; ``cfg[section][key]`` holds parsed values."""

    def __init__(self, sections: dict, base_dir: Path = Path(".")):
        self.sections = sections
        self.base_dir = Path(base_dir)

    def __getitem__(self, section):
        return self.sections[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.sections == other.sections

    # -- builders -------------------------------------------------------------

    def grid(self) -> Grid:
        g = self["grid"]
        dims = g["dims"]
        extents = g["extents"] or (1.0,) * len(dims)
        grid = Grid(dims, extents)
        lo = g["control_lo"] or (0.0,) * len(dims)
        hi = g["control_hi"] or extents
        return grid.with_control_box(lo, hi)

    def timegrid(self) -> TimeGrid:
        return TimeGrid(self["time"]["T"], self["time"]["steps"])

    def solver(self) -> SolverOptions:
        s = self["solver"]
        return SolverOptions(s["tol"], s["max_iter"] or None, s["diag_scaling"], self["physics"]["flux"])

    def weights(self) -> ObjectiveWeights:
        w = self["weights"]
        return ObjectiveWeights(w["alpha_u"], w["alpha_v"], w["alpha_f"], w["exponent"])

    def box(self) -> AdmissibleBox:
        return AdmissibleBox(self["box"]["f_min"], self["box"]["f_max"])

    def field(self, section: str, grid: Grid | None = None) -> np.ndarray:
        grid = grid or self.grid()
        block = self[section]
        if block["kind"] == "constant":
            return grid.full(block["value"])
        if block["kind"] == "gaussian":
            center = block["center"] or tuple(0.5 * L for L in grid.extents)
            r2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
            return block["offset"] + block["amplitude"] * np.exp(-r2 / (2 * block["width"] ** 2))
        snap = read_snapshot(self.base_dir / block["path"])
        grid.check(snap.values)
        return snap.values

    def control(self, grid=None, timegrid=None) -> Control:
        grid = grid or self.grid()
        timegrid = timegrid or self.timegrid()
        f = self.field("control", grid)
        return Control(np.broadcast_to(f, (timegrid.steps + 1,) + grid.dims), grid, timegrid)

    def optimizer(self, initial: Control | None = None) -> OptimizerOptions:
        o = self["optimizer"]
        return OptimizerOptions(o["tol_opt"], o["relative"], o["max_iter"], o["tau0"], o["backtrack"], o["c1"],
                                o["max_backtracks"], initial)


def _validate(sections, index, path):
    def fail(msg, section, key=None):
        raise ConfigError(msg, index.get((section, key)) or index.get((section, None)), path)

    g = sections["grid"]
    nd = len(g["dims"])
    if not 1 <= nd <= 3:
        fail("grid dims must have 1 to 3 entries", "grid", "dims")
    if any(n < 1 for n in g["dims"]):
        fail("grid dims must be positive", "grid", "dims")
    for key in ("extents", "control_lo", "control_hi"):
        if g[key] is not None and len(g[key]) != nd:
            fail(f"{key} must have one entry per axis", "grid", key)
    if g["extents"] is not None and any(not L > 0 for L in g["extents"]):
        fail("extents must be positive", "grid", "extents")
    t = sections["time"]
    if not t["T"] > 0:
        fail("T must be positive", "time", "T")
    if t["steps"] < 1:
        fail("steps must be a positive integer", "time", "steps")
    if sections["physics"]["eps"] < 0:
        fail("eps must be nonnegative", "physics", "eps")
    for name in ("u0", "v0"):
        s = sections[name]
        if s["kind"] == "constant" and s["value"] < 0:
            fail(f"{name} must be nonnegative", name, "value")
        if s["kind"] == "gaussian" and (s["offset"] < 0 or s["amplitude"] < 0):
            fail(f"{name} gaussian must be nonnegative (offset, amplitude >= 0)", name, "offset")
    for name in ("u0", "v0", "control"):
        s = sections[name]
        if s["kind"] == "gaussian":
            if not s["width"] > 0:
                fail("gaussian width must be positive", name, "width")
            if s["center"] is not None and len(s["center"]) != nd:
                fail("gaussian center must have one entry per axis", name, "center")
        if s["kind"] == "file" and not s["path"]:
            fail("file initial condition needs a path", name, "path")
    w = sections["weights"]
    if not w["alpha_u"] > 0:
        fail("alpha_u must be positive", "weights", "alpha_u")
    if w["alpha_v"] < 0:
        fail("alpha_v must be nonnegative", "weights", "alpha_v")
    if w["alpha_f"] < 0:
        fail("alpha_f must be nonnegative", "weights", "alpha_f")
    if not w["exponent"] > 1:
        fail("exponent must be > 1", "weights", "exponent")
    b = sections["box"]
    if b["f_min"] > b["f_max"]:
        fail("box must satisfy f_min <= f_max", "box", "f_min")
    if w["alpha_f"] == 0 and not (math.isfinite(b["f_min"]) and math.isfinite(b["f_max"])):
        fail("alpha_f = 0 requires a bounded box (finite f_min and f_max)", "box")
    s = sections["solver"]
    if not 0 < s["tol"] < 1:
        fail("solver tol must lie in (0, 1)", "solver", "tol")
    if s["max_iter"] < 0:
        fail("solver max_iter must be >= 0 (0 = automatic)", "solver", "max_iter")
    o = sections["optimizer"]
    if not o["tol_opt"] >= 0:
        fail("tol_opt must be nonnegative", "optimizer", "tol_opt")
    if not 0 < o["backtrack"] < 1:
        fail("backtrack factor must lie in (0, 1)", "optimizer", "backtrack")
    if not 0 < o["c1"] < 1:
        fail("c1 must lie in (0, 1)", "optimizer", "c1")
    if not o["tau0"] > 0:
        fail("tau0 must be positive", "optimizer", "tau0")
    if o["max_iter"] < 0 or o["max_backtracks"] < 0:
        fail("iteration limits must be nonnegative", "optimizer")
    tg = sections["targets"]
    if tg["kind"] == "file" and not (tg["u_path"] and tg["v_path"]):
        fail("file targets need u_path and v_path", "targets", "kind")
    if sections["output"]["stride"] < 1:
        fail("snapshot stride must be >= 1", "output", "stride")
    if any(not s > 0 for s in sections["check"]["sigmas"]):
        fail("sigmas must be positive", "check", "sigmas")
    if any(not e > 0 for e in sections["sweep"]["eps_list"]):
        fail("eps_list entries must be positive", "sweep", "eps_list")


def parse_config(text: str, path=None, base_dir=None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path or "<config>"))
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno, path) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno, path) from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno, path) from exc
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("cannot parse line", line, path) from exc
    index = _line_index(text)
    sections = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", index.get((section, None)), path)
    for section, keys in SCHEMA.items():
        values = {}
        given = parser[section] if parser.has_section(section) else {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in [{section}]", index.get((section, key)), path)
        for key, (kind, default) in keys.items():
            if key in given:
                try:
                    values[key] = _parse_value(kind, given[key])
                except (ValueError, ZeroDivisionError) as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}", index.get((section, key)), path) from exc
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} in [{section}]", index.get((section, None)), path)
            else:
                values[key] = default
        sections[section] = values
    _validate(sections, index, path)
    return RunConfig(sections, Path(base_dir) if base_dir else Path(path).parent if path else Path("."))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, path) from exc
    return parse_config(text, path)


def dump_config(cfg: RunConfig) -> str:
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (kind, _) in keys.items():
            value = cfg[section][key]
            if value is None:
                continue
            lines.append(f"{key} = {_format_value(kind, value)}")
        lines.append("")
    return "\n".join(lines)


def save_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.write_text(dump_config(cfg))
    return path
