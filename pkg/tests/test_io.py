import filecmp

import numpy as np
import pytest

from chemoctrl.cli import cli_main
from chemoctrl.config import ConfigError, dump_config, load_config, parse_config, save_config
from chemoctrl.snapshot import (MAGIC, SnapshotFormatError, SnapshotTruncatedError, read_snapshot, write_csv,
                                write_snapshot)

MINIMAL = """\
[grid]
dims = 64

[time]
T = 1
steps = 100

[u0]
kind = constant
value = 1

[v0]
kind = constant
value = 1
"""

DESK = """\
[grid]
dims = 40
control_lo = 0.25
control_hi = 0.75

[time]
T = 0.5
steps = 25

[u0]
kind = gaussian
center = 0.4
width = 0.1
amplitude = 1.0
offset = 0.5

[v0]
kind = gaussian
center = 0.6
width = 0.15
amplitude = 0.5
offset = 0.5

[control]
kind = constant
value = 0.3

[weights]
alpha_u = 1.0
alpha_v = 1.0
alpha_f = 0.01

[targets]
kind = constant
u_value = 0.2
v_value = 0.3

[physics]
eps = 0.01

[optimizer]
max_iter = 3

[sweep]
eps_list = 1e-2, 1e-3
"""


class TestSnapshot:
    @pytest.mark.parametrize("shape", [(17,), (6, 9)])
    def test_round_trip_bitwise(self, tmp_path, rng, shape):
        field = rng.standard_normal(shape) * 10.0 ** rng.integers(-300, 300, shape)
        p = write_snapshot(field, tmp_path / "a.snap", (0.1,) * len(shape), 7, 0.35)
        s = read_snapshot(p)
        assert s.values.tobytes() == field.tobytes()
        assert s.step == 7 and s.time == 0.35 and s.spacing == (0.1,) * len(shape)

    def test_bad_magic(self, tmp_path):
        p = write_snapshot(np.zeros(4), tmp_path / "a.snap", (0.25,))
        data = p.read_bytes()
        p.write_bytes(data.replace(MAGIC.encode(), b"CHEMOCTRL-SNAPSHOT 9"))
        with pytest.raises(SnapshotFormatError):
            read_snapshot(p)

    def test_truncated(self, tmp_path):
        p = write_snapshot(np.zeros((4, 4)), tmp_path / "a.snap", (0.25, 0.25))
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(SnapshotTruncatedError):
            read_snapshot(p)

    def test_csv(self, tmp_path):
        p = tmp_path / "x.csv"
        write_csv(p, ["a", "b"], [(1, 0.1), ("x,y", 2.5)])
        assert p.read_bytes() == b'a,b\r\n1,0.1\r\n"x,y",2.5\r\n'


class TestConfig:
    def test_minimal_defaults(self):
        cfg = parse_config(MINIMAL)
        assert cfg.grid().dims == (64,) and cfg.timegrid().steps == 100
        assert cfg["physics"]["eps"] == 0.0 and cfg["solver"]["tol"] == 1e-10
        assert cfg["weights"]["exponent"] == pytest.approx(20 / 7)
        assert cfg["output"]["stride"] == 10
        np.testing.assert_array_equal(cfg.field("u0"), np.ones(64))

    def test_alpha_u(self):
        with pytest.raises(ConfigError, match="alpha_u must be positive"):
            parse_config(MINIMAL + "\n[weights]\nalpha_u = 0\n")

    def test_unknown_key_line(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("steps = 100", "steps = 100\nstesp = 3"), "c.ini")
        assert info.value.line == 7 and "c.ini:7" in str(info.value)

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(MINIMAL + "[extra]\na = 1\n")

    def test_missing_required(self):
        with pytest.raises(ConfigError, match="steps"):
            parse_config(MINIMAL.replace("steps = 100\n", ""))

    def test_bad_value(self):
        with pytest.raises(ConfigError) as info:
            parse_config(MINIMAL.replace("T = 1", "T = one"))
        assert info.value.line == 5

    @pytest.mark.parametrize("text", [MINIMAL, DESK])
    def test_round_trip(self, tmp_path, text):
        cfg = parse_config(text)
        again = load_config(save_config(cfg, tmp_path / "c.ini"))
        assert again == cfg
        assert dump_config(again) == dump_config(cfg)


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestCli:
    def test_simulate_steady(self, tmp_path):
        cfg = _write(tmp_path, MINIMAL)
        out = tmp_path / "out"
        assert cli_main(["simulate", "--config", str(cfg), "--out", str(out), "--force"]) == 0
        rows = (out / "diagnostics.csv").read_text().splitlines()
        assert rows[0].split(",")[3] == "mass_drift" and len(rows) == 102
        assert max(float(r.split(",")[3]) for r in rows[1:]) <= 1e-9
        assert (out / "u_00100.snap").exists() and (out / "config.ini").exists()

    @pytest.mark.parametrize("command,artifact", [("check-gradient", "gradient_check.csv"),
                                                  ("verify", "verify.csv"),
                                                  ("optimize", "iterations.csv"),
                                                  ("sweep-eps", "sweep_eps.csv")])
    def test_commands(self, tmp_path, command, artifact):
        cfg = _write(tmp_path, DESK)
        out = tmp_path / "out"
        assert cli_main([command, "--config", str(cfg), "--out", str(out), "--force", "--seed", "3"]) == 0
        assert (out / artifact).exists()

    def test_unknown_subcommand(self, capsys):
        assert cli_main(["launch", "--config", "x"]) == 2
        assert "usage" in capsys.readouterr().err

    def test_invalid_config_exit(self, tmp_path):
        cfg = _write(tmp_path, MINIMAL + "\n[weights]\nalpha_u = 0\n")
        assert cli_main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1

    def test_verification_failure_exit(self, tmp_path):
        cfg = _write(tmp_path, DESK + "\n[check]\nthreshold = 1e-30\n")
        assert cli_main(["check-gradient", "--config", str(cfg), "--out", str(tmp_path / "o"), "--force"]) == 1

    def test_solver_failure_exit(self, tmp_path):
        cfg = _write(tmp_path, DESK + "\n[solver]\nmax_iter = 1\ntol = 1e-14\n")
        assert cli_main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--force"]) == 2

    def test_timestamped_dirs(self, tmp_path):
        cfg = _write(tmp_path, MINIMAL.replace("steps = 100", "steps = 5"))
        for _ in range(2):
            assert cli_main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 0
        dirs = sorted((tmp_path / "runs").iterdir())
        assert len(dirs) == 2 and all(d.name.startswith("simulate-") for d in dirs)

    def test_deterministic(self, tmp_path):
        cfg = _write(tmp_path, DESK)
        outs = [tmp_path / "a", tmp_path / "b"]
        for o in outs:
            assert cli_main(["verify", "--config", str(cfg), "--out", str(o), "--force", "--seed", "11"]) == 0
            assert cli_main(["simulate", "--config", str(cfg), "--out", str(o), "--force", "--seed", "11"]) == 0
        names = sorted(p.name for p in outs[0].iterdir())
        match, mismatch, errors = filecmp.cmpfiles(outs[0], outs[1], names, shallow=False)
        assert not mismatch and not errors
