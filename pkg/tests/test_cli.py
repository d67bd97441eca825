"""CLI surface: config parsing and precedence, CSV emission, exit codes,
round-trips and determinism. Optimizer effort is dialled down via config to
keep these fast."""

import csv
import json

import pytest

from decoyqkd import ParameterError
from decoyqkd.cli import CSV_HEADER, main, parse_config

FAST_KEYS = {"starts": 2, "max_evals": 5000, "rel_tol": 1e-3}


def run_cli(*args):
    return main(list(args))


def fast_config(tmp_path, **extra):
    payload = dict(FAST_KEYS)
    payload.update(extra)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return str(path)


class TestParseConfig:
    def test_preset_defaults(self):
        config = parse_config(None, {"preset": "snspd", "att": "26"})
        assert config.rep_rate_hz == 1e9
        assert config.dead_time_s == pytest.approx(1e-7)
        assert config.dark_count_prob == pytest.approx(1e-8)
        assert config.p_err == 0.01
        assert config.eps_sec == 1e-9
        assert config.eps_cor == 1e-15
        assert config.protocol == "both"

    def test_precedence_flags_over_file_over_preset(self):
        file_values = {"preset": "ingaas", "block_size": 1e6, "dead_time_s": 5e-6}
        config = parse_config(file_values, {"att": "26", "block_size": 1e5})
        assert config.block_size == 1e5  # flag wins
        assert config.dead_time_s == 5e-6  # file overrides the preset
        assert config.dark_count_prob == pytest.approx(1e-9)  # preset fills the rest

    def test_unknown_keys_listed(self):
        with pytest.raises(ParameterError, match="darkness, spam"):
            parse_config({"darkness": 1, "spam": 2}, {"att": "26"})

    def test_block_size_zero_rejected(self):
        with pytest.raises(ParameterError, match="block_size"):
            parse_config(None, {"att": "26", "block_size": 0.0})

    def test_bad_mu_bounds_rejected(self):
        with pytest.raises(ParameterError, match="mu1_range"):
            parse_config({"mu1_range": [0.5, 0.2]}, {"att": "26"})
        with pytest.raises(ParameterError, match="mu2_min"):
            parse_config({"mu2_min": 5.0}, {"att": "26"})

    def test_att_grid_forms(self):
        assert parse_config(None, {"att": "10:20:5"}).att_grid == (10.0, 15.0, 20.0)
        assert parse_config(None, {"att": "26"}).att_grid == (26.0,)
        assert parse_config(None, {"att": "10,30"}).att_grid == (10.0, 30.0)
        assert parse_config({"att": [12, 14]}, {}).att_grid == (12.0, 14.0)

    def test_att_grid_errors(self):
        for bad in ("10:20", "20:10:5", "10:20:-1", ""):
            with pytest.raises(ParameterError, match="att"):
                parse_config(None, {"att": bad})

    def test_distance_mode(self):
        config = parse_config(
            {"distance_mode": True, "att": [100, 200]}, {}
        )
        assert config.att_grid == (26.0, 46.0)  # 0.2 dB/km + 6 dB offset

    def test_seed_list_forms(self):
        assert parse_config(None, {"att": "26", "seed_list": "1,2,3"}).seed_list == (1, 2, 3)
        assert parse_config({"seed_list": [4, 5]}, {"att": "26"}).seed_list == (4, 5)


class TestCommands:
    def test_point_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "point.csv"
        code = run_cli(
            "point", "--att", "26", "--protocol", "one",
            "--config", fast_config(tmp_path), "--out", str(out),
        )
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == CSV_HEADER
        assert len(lines) == 2
        row = lines[1].split(",")
        assert row[0] == "26" and row[1] == "one"
        assert row[9] == "" and row[12] == ""  # no mu3 cells for one-decoy

    def test_point_rejects_grids(self, tmp_path, capsys):
        assert run_cli("point", "--att", "10:20:5") == 2
        assert "exactly one attenuation" in capsys.readouterr().err

    def test_sweep_rows_and_order(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run_cli("sweep", "--att", "25,20", "--config", fast_config(tmp_path),
                       "--out", str(out))
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [(r["attenuation_db"], r["protocol"]) for r in rows] == [
            ("20", "one"), ("20", "two"), ("25", "one"), ("25", "two"),
        ]
        for r in rows:
            if float(r["key_length_bits"]) == 0.0:
                assert float(r["skr_hz"]) == 0.0

    def test_csv_round_trip(self, tmp_path):
        out = tmp_path / "sweep.csv"
        run_cli("sweep", "--att", "30", "--config", fast_config(tmp_path), "--out", str(out))
        original = out.read_text()
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        rebuilt = [CSV_HEADER]
        for r in rows:
            cells = []
            for name in CSV_HEADER.split(","):
                value = r[name]
                if name == "protocol" or value == "":
                    cells.append(value)
                else:
                    cells.append(f"{float(value):.9g}")
            rebuilt.append(",".join(cells))
        assert "\n".join(rebuilt) + "\n" == original

    def test_determinism_byte_identical(self, tmp_path):
        out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
        config = fast_config(tmp_path, seed_list=[7, 9])
        run_cli("sweep", "--att", "30,35", "--config", config, "--out", str(out_a))
        run_cli("sweep", "--att", "30,35", "--config", config, "--out", str(out_b))
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_compare_outputs_difference_file(self, tmp_path):
        out = tmp_path / "cmp.csv"
        code = run_cli("compare", "--att", "30", "--config", fast_config(tmp_path),
                       "--out", str(out))
        assert code == 0
        diff = tmp_path / "cmp_diff.csv"
        lines = diff.read_text().splitlines()
        assert lines[0] == "attenuation_db,skr_one_hz,skr_two_hz,skr_difference"
        assert len(lines) == 2
        att, one, two, rel = lines[1].split(",")
        assert float(rel) == pytest.approx(
            (float(one) - float(two)) / float(two), rel=1e-6
        )

    def test_compare_needs_both(self, capsys):
        assert run_cli("compare", "--att", "30", "--protocol", "one") == 2
        assert "both" in capsys.readouterr().err

    def test_table1_structure(self, tmp_path):
        out = tmp_path / "t1.csv"
        code = run_cli("table1", "--config", fast_config(tmp_path, starts=1, max_evals=2000),
                       "--out", str(out))
        assert code == 0
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 16  # 2 blocks x 4 attenuations x 2 protocols
        assert {r["n_z"] for r in rows} == {"10000000", "1e+09"}
        summary = (tmp_path / "t1_summary.txt").read_text()
        assert "n_Z = 1e+07" in summary and "n_Z = 1e+09" in summary
        assert "SKR  1-decoy" in summary and "Time 2-decoy" in summary

    def test_presets_command(self, capsys):
        assert run_cli("presets") == 0
        captured = capsys.readouterr().out
        assert "snspd" in captured and "ingaas" in captured

    def test_stdout_emission(self, tmp_path, capsys):
        code = run_cli("point", "--att", "30", "--protocol", "one",
                       "--config", fast_config(tmp_path))
        assert code == 0
        assert capsys.readouterr().out.startswith(CSV_HEADER)


class TestFailureModes:
    def test_validation_exit_code(self, capsys):
        assert run_cli("sweep", "--att", "26", "--block-size", "0") == 2
        assert "block_size" in capsys.readouterr().err

    def test_missing_config_file(self, capsys):
        assert run_cli("sweep", "--att", "26", "--config", "/no/such/file.json") == 2

    def test_malformed_config(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert run_cli("sweep", "--att", "26", "--config", str(bad)) == 2

    def test_io_failure_leaves_no_partial_files(self, tmp_path, capsys):
        target_dir = tmp_path / "missing"
        out = target_dir / "x.csv"
        code = run_cli("sweep", "--att", "30", "--config", fast_config(tmp_path),
                       "--out", str(out))
        assert code == 3
        assert not target_dir.exists()
        assert not list(tmp_path.glob("*.tmp"))
