import json
import subprocess
import sys

import pytest

import qlchain.oracles
from qlchain import cli
from qlchain.config import load_config, parse_config
from qlchain.errors import NumericError, ValidationError
from qlchain.oracles import TriangleReport

SMALL = """
chain.length = 4
bath.gamma = 1.0
scan.lengths = 3,4
scan.Tm = 0.5,5
scan.couplings = 0.5,1
scan.gammas = 0.5,1,2
transient.times = 0,1,10
ensemble.k = 3
verify.N = 1200
"""


def _config(tmp_path, extra=""):
    p = tmp_path / "run.cfg"
    p.write_text(SMALL + extra)
    return p


def _run(tmp_path, verb, *flags, extra="", out="out"):
    return cli.main([verb, "--config", str(_config(tmp_path, extra)), "--out", str(tmp_path / out), *flags])


def test_unknown_key_rejected():
    with pytest.raises(ValidationError, match="unknown config keys: bath.gama"):
        parse_config("bath.gama = 1\n")


def test_environment_overrides_file(tmp_path):
    cfg = load_config(_config(tmp_path), environ={"QLCHAIN_BATH_GAMMA": "0.25", "QLCHAIN_RUN_CLASSICAL": "yes"})
    assert cfg["bath.gamma"] == 0.25 and cfg["run.classical"] is True and cfg["chain.length"] == 4


def test_bad_value_rejected():
    with pytest.raises(ValidationError):
        load_config(None, environ={"QLCHAIN_CHAIN_LENGTH": "four"})


@pytest.mark.parametrize("extra", ["bath.gama = 2\n", "bath.gamma = -1\n", "chain.pinning = loose\n", "chain.length = 1\n"])
def test_invalid_input_exit_code(tmp_path, extra, capsys):
    assert _run(tmp_path, "profile", extra=extra) == cli.EXIT_VALIDATION
    assert "invalid input" in capsys.readouterr().err


@pytest.mark.parametrize("verb", [v for v in cli.VERBS if v != "verify"])
def test_every_verb_writes_hashed_outputs(tmp_path, verb):
    assert _run(tmp_path, verb) == cli.EXIT_OK
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["verb"] == verb and man["outputs"] and "finished" in man
    for name, digest in man["outputs"].items():
        assert cli.sha256(tmp_path / "out" / name) == digest


def test_verify_exit_codes(tmp_path, monkeypatch):
    assert _run(tmp_path, "verify", extra="chain.length = 3\n") == cli.EXIT_OK
    bad = TriangleReport(1e-3, 1e-9, 0.0, 0.0, 1e-6, 0.03)
    monkeypatch.setattr(qlchain.oracles, "verify_triangle", lambda *a, **k: bad)
    assert _run(tmp_path, "verify", out="bad") == cli.EXIT_ORACLE

    def broken(*a, **k):
        raise NumericError("forced")

    monkeypatch.setattr(qlchain.oracles, "verify_triangle", broken)
    assert _run(tmp_path, "verify", out="broken") == cli.EXIT_NUMERIC


def test_resume_is_idempotent(tmp_path, capsys):
    extra = "disorder.width = 0.3\nchain.length = 6\n"
    assert _run(tmp_path, "profile", extra=extra) == 0
    before = (tmp_path / "out" / "manifest.json").read_text()
    assert _run(tmp_path, "profile", "--resume", extra=extra) == 0
    assert "nothing to do" in capsys.readouterr().out
    assert (tmp_path / "out" / "manifest.json").read_text() == before


def test_resume_after_changed_config_reruns(tmp_path):
    assert _run(tmp_path, "conductivity") == 0
    assert _run(tmp_path, "conductivity", "--resume", extra="scan.eps = 0.2\n") == 0
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["config"]["scan.eps"] == 0.2


def test_workers_do_not_change_results(tmp_path):
    extra = "disorder.width = 0.3\n"
    _run(tmp_path, "flux-length", "--seed", "5", extra=extra, out="w1")
    _run(tmp_path, "flux-length", "--seed", "5", "--workers", "2", extra=extra, out="w2")
    assert (tmp_path / "w1" / "flux_length.csv").read_bytes() == (tmp_path / "w2" / "flux_length.csv").read_bytes()


def test_dump_poles(tmp_path):
    assert _run(tmp_path, "transient", "--dump-poles") == 0
    lines = (tmp_path / "out" / "poles.csv").read_text().splitlines()
    assert lines[0] == "re,im,family" and len(lines) > 4


def test_seed_range(tmp_path):
    assert _run(tmp_path, "profile", "--seed", str(2**64)) == cli.EXIT_VALIDATION


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "qlchain.cli", "profile", "--config", str(_config(tmp_path)),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "o" / "profile.csv").exists()
