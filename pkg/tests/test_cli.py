import json

import numpy as np
import pytest

from markov_cg.cli import main
from markov_cg.functionals import counterexample_chain
from markov_cg.markov import dump_chain
from markov_cg.sampling import random_chain, random_reversible_chain


@pytest.fixture
def inputs(tmp_path):
    K, pi = random_reversible_chain(np.random.default_rng(3), 5)
    dump_chain(tmp_path / "chain.json", K, pi)
    (tmp_path / "part.json").write_text(json.dumps({"n": 5, "assignment": [0, 0, 1, 2, 2]}))
    return tmp_path, K, pi


def _args(tmp, *extra):
    return ["--chain", str(tmp / "chain.json"), "--partition", str(tmp / "part.json"), *extra]


def test_reduce_json(inputs, capsys):
    tmp, K, pi = inputs
    assert main(["reduce", *_args(tmp)]) == 0
    rep = json.loads(capsys.readouterr().out)
    Kh = np.array(rep["K_hat"])
    np.testing.assert_allclose(Kh.sum(axis=1), 1.0, atol=1e-12)
    assert max(rep["residuals"].values()) <= 1e-12
    assert rep["tolerances"]["structural"] == 1e-12
    assert len(rep["inputs"]["chain"]) == 64


def test_reduce_identity_partition(inputs, capsys):
    tmp, K, _ = inputs
    (tmp / "part.json").write_text(json.dumps({"n": 5, "assignment": [0, 1, 2, 3, 4]}))
    assert main(["reduce", *_args(tmp, "--out", str(tmp / "r.json"))]) == 0
    assert "reduced 5 states to 5 clusters" in capsys.readouterr().out
    rep = json.loads((tmp / "r.json").read_text())
    np.testing.assert_allclose(rep["K_hat"], K, atol=1e-14)
    assert rep["lumpability_defect"] <= 1e-14


def test_flux_stationary(inputs, capsys):
    tmp, _, _ = inputs
    assert main(["flux", *_args(tmp, "--init", "stationary", "--t-end", "0.5")]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["trajectory"]) == 6
    assert all(r["b_hat_norm"] <= 1e-15 for r in rep["trajectory"])


def test_flux_lifted(inputs, capsys):
    tmp, _, _ = inputs
    assert main(["flux", *_args(tmp)]) == 0
    rep = json.loads(capsys.readouterr().out)
    res = rep["max_residuals"]
    assert res["equilibration"] <= 1e-10
    assert res["continuity"] <= 1e-8
    assert res["kernel"] <= 1e-10


def test_flux_bad_dt(inputs, capsys):
    tmp, _, _ = inputs
    assert main(["flux", *_args(tmp, "--dt", "0")]) == 2
    assert main(["flux", *_args(tmp, "--dt", "50")]) == 1


def test_non_reversible_chain(tmp_path, capsys):
    dump_chain(tmp_path / "chain.json", random_chain(np.random.default_rng(0), 3))
    (tmp_path / "part.json").write_text(json.dumps({"n": 3, "assignment": [0, 1, 1]}))
    assert main(["flux", *_args(tmp_path)]) == 1
    assert "detailed balance" in capsys.readouterr().err


def test_spectral(inputs, capsys):
    tmp, _, _ = inputs
    assert main(["spectral", *_args(tmp, "--starts", "3", "--out", str(tmp / "s.json"))]) == 0
    out = capsys.readouterr().out
    assert "monotone: true" in out
    rep = json.loads((tmp / "s.json").read_text())
    assert rep["poincare"]["lambda"] <= rep["poincare"]["lambda_hat"] + 1e-9
    assert rep["poincare"]["lambda"] == pytest.approx(2 * rep["poincare"]["gap"])
    assert rep["log_sobolev"]["monotone"] is True


def test_unknown_profile(inputs):
    tmp, _, _ = inputs
    with pytest.raises(SystemExit) as exc:
        main(["spectral", *_args(tmp, "--profile", "cubic")])
    assert exc.value.code == 2


def test_malformed_json(inputs, capsys):
    tmp, _, _ = inputs
    (tmp / "chain.json").write_text('{"n": 2, "K": [[1, 0],')
    assert main(["reduce", *_args(tmp)]) == 2
    assert "line 1" in capsys.readouterr().err


def test_missing_file_and_args(tmp_path, capsys):
    assert main(["reduce", "--chain", str(tmp_path / "nope.json"),
                 "--partition", str(tmp_path / "nope.json")]) == 2
    assert main(["reduce"]) == 2


def test_invalid_chain(tmp_path, capsys):
    (tmp_path / "chain.json").write_text(json.dumps({"n": 2, "K": [[0.5, 0.6], [0.5, 0.5]]}))
    (tmp_path / "part.json").write_text(json.dumps({"n": 2, "assignment": [0, 1]}))
    assert main(["reduce", *_args(tmp_path)]) == 1
    assert "chain.json" in capsys.readouterr().err


def test_partition_size_mismatch(inputs, capsys):
    tmp, _, _ = inputs
    (tmp / "part.json").write_text(json.dumps({"n": 3, "assignment": [0, 1, 1]}))
    assert main(["reduce", *_args(tmp)]) == 1


def test_counterexample(tmp_path, capsys):
    assert main(["counterexample", "--steps", "6", "--selftest",
                 "--out", str(tmp_path / "c.json")]) == 0
    out = capsys.readouterr().out
    assert "crossover a* = 2.7320508076" in out
    assert "selftest: PASS" in out
    rep = json.loads((tmp_path / "c.json").read_text())
    assert [r["a"] for r in rep["rows"]] == [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]
    assert rep["rows"][1]["DK"] == pytest.approx(8 / 3)
    assert [r["sign"] for r in rep["rows"]] == [0, 1, 1, -1, -1, -1]
    assert main(["counterexample", "--a-min", "3", "--a-max", "1"]) == 2


def test_counterexample_chain_roundtrip(tmp_path, capsys):
    dump_chain(tmp_path / "chain.json", counterexample_chain(1.0))
    (tmp_path / "part.json").write_text(json.dumps({"n": 3, "assignment": [0, 1, 1]}))
    assert main(["reduce", *_args(tmp_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(rep["pi_hat"], [1 / 9, 8 / 9], atol=1e-14)


def test_selftest(capsys):
    assert main(["selftest"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10
    assert all(line.startswith("[PASS]") for line in lines)
