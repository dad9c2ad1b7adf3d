import json
import subprocess
import sys

import pytest

from cbpre.cli import EXIT_KEY_INVALID, EXIT_MISMATCH, EXIT_OK, EXIT_STALLED, main


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out"


def write_config(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(kw))
    return str(path)


class TestKeys:
    def test_keygen_then_verify(self, out, capsys):
        assert main(["keygen", "--id", "0x2a", "--seed", "1", "--out", str(out)]) == EXIT_OK
        assert "validation OK" in capsys.readouterr().out
        assert (out / "ca.json").exists() and (out / "0000002a.key.json").exists()
        assert main(["verify-key", "--id", "42", "--out", str(out)]) == EXIT_OK

    def test_distinct_certs(self, out):
        main(["keygen", "--id", "1", "--seed", "3", "--out", str(out)])
        main(["keygen", "--id", "2", "--seed", "3", "--out", str(out)])
        c1 = json.loads((out / "00000001.key.json").read_text())["cert"]
        c2 = json.loads((out / "00000002.key.json").read_text())["cert"]
        assert c1 != c2

    def test_ca_reused(self, out):
        main(["keygen", "--id", "1", "--out", str(out)])
        ca = (out / "ca.json").read_text()
        main(["keygen", "--id", "2", "--out", str(out)])
        assert (out / "ca.json").read_text() == ca
        assert main(["verify-key", "--id", "1", "--out", str(out)]) == EXIT_OK

    @pytest.mark.parametrize("field,mutate", [
        ("cert", lambda h: h[:-2] + f"{int(h[-2:], 16) ^ 1:02x}"),
        ("cert", lambda h: h[:20]),
        ("d", lambda h: f"{int(h, 16) + 1:064x}"),
        ("id", lambda h: "00000009"),
    ])
    def test_corrupt_key_file(self, out, field, mutate, capsys):
        main(["keygen", "--id", "7", "--seed", "5", "--out", str(out)])
        path = out / "00000007.key.json"
        key = json.loads(path.read_text())
        key[field] = mutate(key[field])
        path.write_text(json.dumps(key))
        assert main(["verify-key", "--id", "7", "--out", str(out)]) == EXIT_KEY_INVALID

    def test_verify_missing(self, out):
        out.mkdir()
        assert main(["verify-key", "--id", "1", "--out", str(out)]) == EXIT_KEY_INVALID


class TestRun:
    def test_default(self, out, capsys):
        assert main(["run", "--out", str(out)]) == EXIT_OK
        assert "verified" in capsys.readouterr().out
        lines = (out / "trace.jsonl").read_text().splitlines()
        assert lines and all(json.loads(x) for x in lines)
        assert (out / "events.jsonl").exists()
        assert (out / "metrics.csv").read_text().startswith("scenario,n_requests,request_id,latency_s,")

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["run", "--seed", "17", "--out", str(a)])
        main(["run", "--seed", "17", "--out", str(b)])
        for name in ("metrics.csv", "trace.jsonl", "events.jsonl"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_stalled(self, tmp_path, out):
        cfg = write_config(tmp_path, block_capacity=0)
        assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_STALLED
        assert (out / "trace.jsonl").exists()

    def test_mismatch(self, tmp_path, out):
        cfg = write_config(tmp_path, fault_flip_share_byte=True)
        assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_MISMATCH

    def test_bad_config_key(self, tmp_path, out):
        cfg = write_config(tmp_path, not_a_field=1)
        with pytest.raises(ValueError):
            main(["run", "--config", cfg, "--out", str(out)])


class TestBenchCommands:
    def test_impact(self, out, capsys):
        assert main(["bench-impact", "--reps", "2", "--out", str(out)]) == EXIT_OK
        assert "overhead" in capsys.readouterr().out
        assert (out / "impact.csv").read_text().splitlines()[-2].startswith("summary,pre_mean")

    def test_scale(self, out, capsys):
        assert main(["bench-scale", "--reps", "1", "--out", str(out)]) == EXIT_OK
        printed = capsys.readouterr().out.splitlines()
        assert len(printed) == 11 and printed[-1].startswith("n= 50")


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cbpre", "keygen", "--id", "3", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "validation OK" in proc.stdout
