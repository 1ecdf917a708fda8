import numpy as np
import pytest

from spfl.allocator import objective, optimize_power
from spfl.bound import BoundInputs, g_coefficients
from spfl.cli import COLUMNS, main, parse_coeffs
from spfl.config import ConfigError, ExperimentConfig, config_hash, dump_config, load_config, parse_config

TINY = """
num_devices = 3
rounds = 2
repetitions = 2
samples_per_device = 20
test_samples = 100
latency_s = 0.01
bandwidth_hz = 1e6
cell_radius_m = 300
min_distance_m = 50
strategies = spfl, dds
sweep_axis = power
sweep_values = -10, -4, 0
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def coeff_file(coeffs, distances, extra="bandwidth_hz = 2e4\ntx_power_dbm = -10\n"):
    rows = "\n".join(",".join([str(k)] + [repr(float(v[k])) for v in (coeffs.a, coeffs.b, coeffs.c, coeffs.d)] + [repr(d)])
                     for k, d in enumerate(distances))
    return extra + "device,a,b,c,d,distance_m\n" + rows + "\n"


def printed_table(out):
    lines = [ln for ln in out.splitlines() if ln and ln[0].isdigit()]
    return np.array([[float(v) for v in ln.split(",")] for ln in lines])


class TestConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, "c.txt", ""))
        assert (cfg.num_devices, cfg.bandwidth_hz, cfg.noise_dbm_per_hz, cfg.tx_power_dbm) == (20, 10e6, -174.0, -4.0)
        assert (cfg.quant_bits, cfg.latency_s, cfg.eta, cfg.pathloss_exponent) == (3, 0.5, 0.05, 3.0)
        assert cfg.dirichlet_concentration == 0.5

    def test_zero_devices(self):
        with pytest.raises(ConfigError, match="num_devices"):
            parse_config("num_devices = 0")

    def test_unknown_strategy_names_options(self):
        with pytest.raises(ConfigError, match="valid: spfl, error_free, scheduling, dds, one_bit"):
            parse_config("strategies = spfl, magic")

    def test_unknown_key_and_bad_value(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("power = 3")
        with pytest.raises(ConfigError, match="rounds"):
            parse_config("rounds = 2.5")
        with pytest.raises(ConfigError, match="sweep_values"):
            parse_config("sweep_axis = bits")

    def test_round_trip(self):
        cfg = parse_config(TINY)
        once = dump_config(cfg)
        assert parse_config(once) == cfg
        assert dump_config(parse_config(once)) == once

    def test_hash_tracks_content(self):
        a = parse_config(TINY)
        assert config_hash(a) == config_hash(parse_config(TINY))
        assert config_hash(a) != config_hash(a.replace(seed=1))

    def test_presets_load(self):
        from pathlib import Path
        root = Path(__file__).resolve().parents[1] / "configs"
        names = sorted(p.name for p in root.glob("*.txt"))
        assert "power_sweep.txt" in names
        for p in root.glob("*.txt"):
            assert isinstance(load_config(p), ExperimentConfig)


class TestRun:
    def test_files_and_determinism(self, tmp_path):
        cfg = write(tmp_path, "c.txt", TINY)
        assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "a")]) == 0
        assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "b"), "--workers", "2"]) == 0
        csvs = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
        assert len(csvs) == 7 and "summary.csv" in csvs
        for name in csvs:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        text = (tmp_path / "a" / "spfl__power_-4.0.csv").read_text().splitlines()
        assert text[0] == f"# config_hash={config_hash(load_config(cfg))} seed=0"
        assert tuple(text[1].split(",")) == COLUMNS
        assert len(text) == 2 + 2 * 2

    def test_env_output_dir(self, tmp_path, monkeypatch):
        cfg = write(tmp_path, "c.txt", TINY.replace("strategies = spfl, dds", "strategies = error_free"))
        monkeypatch.setenv("SPFL_OUTPUT_DIR", str(tmp_path / "env"))
        assert main(["run", "--config", str(cfg)]) == 0
        rows = (tmp_path / "env" / "summary.csv").read_text().splitlines()[2:]
        # error_free ignores the channel, so its accuracy is the same at every power
        assert len({r.split(",")[3] for r in rows}) == 1

    def test_bad_config_exit_code(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.txt", "num_devices = 0\n")
        assert main(["run", "--config", str(cfg), "--output", str(tmp_path / "o")]) == 2
        assert "num_devices" in capsys.readouterr().err


class TestSolve:
    def test_symmetric_pair(self, tmp_path, capsys):
        inp = BoundInputs.from_gradients(np.ones((2, 210)), np.zeros(210), [0.5, 0.5], eta=0.05)
        path = write(tmp_path, "k.txt", coeff_file(g_coefficients(inp), [25000.0, 25000.0]))
        assert main(["solve", "--coeffs", str(path)]) == 0
        t = printed_table(capsys.readouterr().out)
        np.testing.assert_allclose(t[0, 1:3], t[1, 1:3], rtol=1e-6)

    def test_dominant_gradient_gets_most_bandwidth(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        g = rng.normal(size=(2, 210)) * np.array([[3.0], [0.5]])
        inp = BoundInputs.from_gradients(g, np.zeros(210), [0.0, 0.0], eta=0.05)
        coeffs = g_coefficients(inp)
        text = coeff_file(coeffs, [20000.0, 20000.0])
        assert main(["solve", "--coeffs", str(write(tmp_path, "k.txt", text))]) == 0
        beta = printed_table(capsys.readouterr().out)[:, 2]
        assert beta[0] > beta[1]
        # exhaustive two-device search on the shared budget, alpha optimal at each split
        _, chp = parse_coeffs(text)
        grid = np.linspace(0.01, 0.989, 979)
        vals = []
        for b0 in grid:
            beta_g = np.array([b0, 0.999 - b0])
            vals.append(objective(coeffs, optimize_power(coeffs, beta_g, chp), beta_g, chp))
        best = grid[int(np.argmin(vals))]
        assert best > 0.5
        assert abs(beta[0] - best) <= 2e-3

    @pytest.mark.parametrize("text", ["device,a,b\n0,1,2\n", "bandwidth_hz = 1e6\n", "nonsense\ndevice,a,b,c,d,distance_m\n",
                                      "device,a,b,c,d,distance_m\n0,1,2,x,4,100\n"])
    def test_malformed(self, tmp_path, capsys, text):
        assert main(["solve", "--coeffs", str(write(tmp_path, "k.txt", text))]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert main(["solve", "--coeffs", str(tmp_path / "nope.txt")]) == 2


class TestValidate:
    def test_writes_table(self, tmp_path, capsys):
        cfg = write(tmp_path, "c.txt", TINY.split("strategies")[0])
        code = main(["validate", "--config", str(cfg), "--rounds", "2", "--branches", "20",
                     "--output", str(tmp_path / "v")])
        lines = (tmp_path / "v" / "bound_check.csv").read_text().splitlines()
        assert lines[1] == "round,bound,mean_decrement,std_error,gap,holds"
        assert len(lines) == 4
        assert code == (0 if all(ln.endswith("True") for ln in lines[2:]) else 1)
