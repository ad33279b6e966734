import pytest

from ipv6covert.cli import main
from ipv6covert.crypto import KEY_ENV_VAR

KEY = "00112233445566778899aabbccddeeff"


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.setenv(KEY_ENV_VAR, KEY)
    monkeypatch.chdir(tmp_path)
    (tmp_path / "bg.conf").write_text("normal = 1500\nseed = 5\n")
    assert main(["generate", "--config", "bg.conf", "--out", "bg.pcap", "--labels", "bg.csv"]) == 0
    return tmp_path


@pytest.mark.parametrize("channel", ["hoplimit", "address", "length", "flowlabel"])
def test_inject_then_extract(workdir, capsys, channel):
    msg = "meet at the usual place"
    assert main(["inject", "--in", "bg.pcap", "--in-labels", "bg.csv", "--channel", channel,
                 "--message", msg, "--out", "c.pcap", "--labels", "c.csv"]) == 0
    capsys.readouterr()
    assert main(["extract", "--in", "c.pcap", "--labels", "c.csv", "--channel", channel,
                 "--length", str(len(msg))]) == 0
    out = capsys.readouterr().out
    assert f"text: {msg}" in out and msg.encode().hex() in out


def test_extract_with_wrong_key(workdir, capsys):
    msg = "meet at the usual place"
    main(["inject", "--in", "bg.pcap", "--channel", "length", "--message", msg,
          "--out", "c.pcap", "--labels", "c.csv"])
    capsys.readouterr()
    assert main(["extract", "--in", "c.pcap", "--labels", "c.csv", "--channel", "length",
                 "--length", str(len(msg)), "--key-hex", "deadbeef"]) == 0
    assert msg.encode().hex() not in capsys.readouterr().out


def test_key_never_printed(workdir, capsys):
    main(["-v", "inject", "--in", "bg.pcap", "--channel", "address", "--message", "x",
          "--out", "c.pcap", "--labels", "c.csv"])
    main(["extract", "--in", "c.pcap", "--channel", "address", "--key-hex", "00"])
    captured = capsys.readouterr()
    assert KEY not in captured.out + captured.err


def test_generate_is_byte_identical(tmp_path, monkeypatch):
    monkeypatch.setenv(KEY_ENV_VAR, KEY)
    monkeypatch.chdir(tmp_path)
    (tmp_path / "mix.conf").write_text("normal=800\nhoplimit=60\naddress=30\nlength=40\nflowlabel=20\n")
    for tag in "ab":
        assert main(["generate", "--config", "mix.conf", "--out", f"{tag}.pcap", "--labels", f"{tag}.csv"]) == 0
    assert (tmp_path / "a.pcap").read_bytes() == (tmp_path / "b.pcap").read_bytes()
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_featurize_train_evaluate_pipeline(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(KEY_ENV_VAR, KEY)
    monkeypatch.chdir(tmp_path)
    (tmp_path / "mix.conf").write_text("normal=1200\nhoplimit=300\naddress=200\nlength=200\nflowlabel=120\n")
    assert main(["generate", "--config", "mix.conf", "--out", "m.pcap", "--labels", "m.csv"]) == 0
    assert main(["featurize", "--in", "m.pcap", "--labels", "m.csv", "--out", "f.csv"]) == 0
    assert main(["train", "--in", "f.csv", "--model", "rf", "--task", "binary", "--trees", "20",
                 "--out", "b.json"]) == 0
    assert main(["train", "--in", "f.csv", "--model", "gb", "--task", "multiclass", "--rounds", "10",
                 "--out", "gm.json"]) == 0
    assert main(["train", "--in", "f.csv", "--model", "rf", "--task", "multiclass", "--trees", "20",
                 "--out", "m.json"]) == 0
    assert main(["evaluate", "--model", "m.json", "--in", "f.csv"]) == 0
    capsys.readouterr()
    assert main(["pipeline", "--binary-model", "b.json", "--multiclass-model", "m.json",
                 "--in", "m.pcap", "--labels", "m.csv", "--out", "v.csv"]) == 0
    assert "overall accuracy" in capsys.readouterr().out
    rows = (tmp_path / "v.csv").read_text().splitlines()
    assert rows[0] == "packet_index,verdict" and len(rows) == 2021
    first = (tmp_path / "b.json").read_bytes()
    main(["train", "--in", "f.csv", "--model", "rf", "--task", "binary", "--trees", "20", "--out", "b.json"])
    assert (tmp_path / "b.json").read_bytes() == first


def test_profile_command(workdir, capsys):
    assert main(["profile", "--in", "bg.pcap", "--out", "prof"]) == 0
    assert "packets: 1500" in capsys.readouterr().out
    assert (workdir / "prof" / "flowlabel_stats.csv").exists()


def test_errors_exit_nonzero_with_one_line(workdir, capsys, monkeypatch):
    assert main(["extract", "--in", "missing.pcap", "--channel", "length"]) == 1
    err = capsys.readouterr().err
    assert err.count("\n") == 1 and "error" in err
    (workdir / "junk.pcap").write_bytes(b"not a pcap at all, really not")
    assert main(["profile", "--in", "junk.pcap", "--out", "p"]) == 1
    monkeypatch.delenv(KEY_ENV_VAR)
    assert main(["inject", "--in", "bg.pcap", "--channel", "length", "--message", "x", "--out", "o.pcap"]) == 1
    assert KEY_ENV_VAR in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["inject", "--channel", "bogus"])
    assert exc.value.code == 2
