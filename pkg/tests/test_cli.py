import csv
import io

import pytest

from arxdw.cli import ConfigError, dump_config, load_config, main, parse_config_text, config_from_values


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestMain:
    def test_help(self, capsys):
        code, out, _ = run(capsys, "--help")
        assert code == 0 and "usage" in out

    def test_unknown_flag(self, capsys):
        code, _, err = run(capsys, "level", "--bogus")
        assert code == 2 and "usage" in err

    def test_unknown_preset(self, capsys):
        assert run(capsys, "level", "--model", "arx9")[0] == 2

    def test_custom_needs_theta(self, capsys):
        assert run(capsys, "simulate", "--model", "custom")[0] == 2

    def test_bad_value_is_argument_error(self, capsys):
        assert run(capsys, "simulate", "--rho", "1.5")[0] == 2

    def test_runtime_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "test", "--trace", str(tmp_path / "missing.csv"))
        assert code == 1 and "error" in err

    def test_simulate_rows(self, capsys):
        code, out, _ = run(capsys, "simulate", "--model", "arx1", "--n", "100", "--burn-in", "100", "--seed", "1")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 201

    def test_test_from_trace_matches_fresh_run(self, capsys, tmp_path):
        path = tmp_path / "trace.csv"
        args = ["--model", "arx2", "--rho", "0.2", "--n", "300", "--seed", "4"]
        assert run(capsys, "simulate", *args, "--out", str(path))[0] == 0
        _, fresh, _ = run(capsys, "test", *args)
        _, replay, _ = run(capsys, "test", *args, "--trace", str(path))
        f = list(csv.DictReader(io.StringIO(fresh)))[0]
        r = list(csv.DictReader(io.StringIO(replay)))[0]
        assert f["reject"] == r["reject"] and float(f["t_n"]) == pytest.approx(float(r["t_n"]), rel=1e-9)

    @pytest.mark.parametrize("flag", ["--tn2-squared", "--paper-literal-tn2"])
    def test_squared_scaling_flag(self, capsys, flag):
        args = ["test", "--rho", "0.2", "--n", "400", "--seed", "2"]
        base = list(csv.DictReader(io.StringIO(run(capsys, *args)[1])))[0]
        sq = list(csv.DictReader(io.StringIO(run(capsys, *args, flag)[1])))[0]
        assert float(sq["t_simple"]) == pytest.approx(400 * float(base["t_simple"]), rel=1e-12)
        assert sq["t_n"] == base["t_n"]

    def test_power_example(self, capsys):
        code, out, _ = run(capsys, "power", "--model", "arx1", "--nu", "2", "--rho", "0.3", "--n", "500",
                           "--reps", "1000", "--seed", "7", "--format", "csv", "--statistic", "T")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and len(rows) == 1
        assert float(rows[0]["rate"]) >= 0.99

    def test_level_markdown_to_file(self, capsys, tmp_path):
        out = tmp_path / "level.md"
        code, _, _ = run(capsys, "level", "--model", "arx3", "--n", "50,100", "--reps", "20", "--nu", "1,2", "--out", str(out))
        text = out.read_text()
        assert code == 0 and text.count("| rho | statistic | n=50 | n=100 |") == 2

    def test_normality_csv(self, capsys):
        code, out, _ = run(capsys, "normality", "--n", "200", "--reps", "60", "--format", "csv")
        rows = list(csv.DictReader(io.StringIO(out)))
        assert code == 0 and 0 <= float(rows[0]["ks_T_chi2"]) <= 1


class TestConfigFile:
    def test_empty_is_defaults(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("# nothing here\n")
        cfg = load_config(path)
        assert cfg.burn_in == 100 and cfg.alpha == 0.05 and cfg.replications == 1000
        assert cfg.spec.nu2 == 4.0 and cfg.spec.theta == (1.5,)

    def test_partial_override(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("rho = 0.2\n")
        cfg = load_config(path)
        assert cfg.rho_grid == (0.2,) and cfg.replications == 1000

    def test_round_trip(self, tmp_path):
        text = "model = arx2  # preset\nrho = 0.1, 0.2\nn = 50 100\nnu = 1.5\nreps = 200\ntn2_squared = yes\n"
        canonical = dump_config(config_from_values(parse_config_text(text)))
        path = tmp_path / "c.txt"
        path.write_text(canonical)
        assert dump_config(load_config(path)) == canonical
        assert load_config(path) == config_from_values(parse_config_text(text))

    @pytest.mark.parametrize("text, key", [("alpha = lots\n", "alpha"), ("colour = red\n", "colour"), ("model = arx7\n", "model")])
    def test_malformed_names_key(self, text, key):
        with pytest.raises(ConfigError) as info:
            parse_config_text(text)
        assert info.value.key == key and key in str(info.value)

    def test_out_of_range_names_key(self):
        with pytest.raises(ConfigError) as info:
            config_from_values(parse_config_text("alpha = 2\n"))
        assert info.value.key == "alpha"
