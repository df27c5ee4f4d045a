import csv
import io

import pytest

from feedbacksk import cli
from feedbacksk.errors import ConfigurationError


def read_csv(path):
    return list(csv.reader(io.StringIO(path.read_text())))


@pytest.fixture
def small_fb(tmp_path):
    return ["fb-sweep", "--feedback-snr-db", "4,14,16", "--max-trials", "3000",
            "--out", str(tmp_path / "fb.csv")]


class TestConfig:
    def test_grid_forms(self):
        assert cli._parse_grid("10:12:0.5") == (10.0, 10.5, 11.0, 11.5, 12.0)
        assert cli._parse_grid("1,3") == (1.0, 3.0)
        with pytest.raises(ConfigurationError):
            cli._parse_grid("1:2:0")

    def test_parse_text(self):
        raw = cli.parse_config_text("# comment\nseed = 7  # trailing\n\nkappa = auto\n")
        assert raw == {"seed": "7", "kappa": "auto"}

    @pytest.mark.parametrize("text", ["nonsense", "colour = red"])
    def test_parse_errors(self, text):
        with pytest.raises(ConfigurationError):
            cli.parse_config_text(text)

    def test_rate_must_give_integer_k(self):
        with pytest.raises(ConfigurationError, match="not a positive integer"):
            cli.build_config("fb-sweep", {"n_rounds": "40"})

    def test_k_bits_consistency(self):
        assert cli.build_config("fb-sweep", {"k_bits": "13"}).k_for(39) == 13
        with pytest.raises(ConfigurationError):
            cli.build_config("fb-sweep", {"k_bits": "12"})

    def test_round_trip(self):
        cfg = cli.build_config("ff-sweep", {"kappa": "4.5", "dither": "true", "seed": "11"})
        again = cli.build_config("ff-sweep", cli.parse_config_text(cfg.to_text()))
        assert again == cfg


class TestCommands:
    def test_fb_sweep(self, small_fb, tmp_path):
        assert cli.main(small_fb) == 0
        rows = read_csv(tmp_path / "fb.csv")
        assert tuple(rows[0]) == cli.FB_SWEEP_COLUMNS
        assert (tmp_path / "fb.csv").read_text().splitlines()[0] == ",".join(cli.FB_SWEEP_COLUMNS)
        assert len(rows) == 4
        # 4 dB is below the smallest margin's threshold, so the point is a gap
        assert rows[1][0] == "4.0" and rows[1][1] == ""
        meta = (tmp_path / "fb.meta").read_text()
        assert "normal" in meta and "kappa" in meta

    def test_rerun_is_byte_identical(self, small_fb, tmp_path):
        assert cli.main(small_fb) == 0
        again = tmp_path / "again.csv"
        assert cli.main(["rerun", str(tmp_path / "fb.meta"), "--out", str(again)]) == 0
        assert again.read_bytes() == (tmp_path / "fb.csv").read_bytes()

    def test_config_file_and_override(self, tmp_path):
        conf = tmp_path / "run.conf"
        conf.write_text("feedback_snr_db = 20\nmax_trials = 1000\nseed = 3\n")
        out = tmp_path / "b.csv"
        assert cli.main(["bounds", "--config", str(conf), "--feedback-snr-db", "18,20",
                         "--out", str(out)]) == 0
        rows = read_csv(out)
        assert tuple(rows[0]) == cli.BOUNDS_COLUMNS
        assert [r[0] for r in rows[1:]] == ["18.0", "20.0"]

    def test_sk_curves(self, tmp_path):
        out = tmp_path / "sk.csv"
        assert cli.main(["sk-curves", "--n-rounds", "15", "--forward-snr-db", "0,5",
                         "--max-trials", "2000", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert tuple(rows[0]) == cli.SK_CURVES_COLUMNS
        assert rows[2][3].startswith("<")

    def test_ff_sweep(self, tmp_path):
        out = tmp_path / "ff.csv"
        assert cli.main(["ff-sweep", "--n-rounds", "15", "--forward-snr-db", "0",
                         "--max-trials", "2000", "--out", str(out)]) == 0
        rows = read_csv(out)
        assert tuple(rows[0]) == cli.FF_SWEEP_COLUMNS
        assert rows[1][0] == "15"

    def test_config_error_exit_code(self, tmp_path, capsys):
        code = cli.main(["fb-sweep", "--n-rounds", "40", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "error" in capsys.readouterr().err
        assert not (tmp_path / "x.csv").exists()

    def test_sidecar_path(self):
        assert str(cli.sidecar_path("a/b.csv")) == "a/b.meta"
        assert str(cli.sidecar_path("a/b")) == "a/b.meta"
