import json

import numpy as np
import pytest

from voterlab import cli, io
from voterlab.errors import DomainError
from voterlab.model import build_matrix, complete_graph, cycle_graph, random_matrix
from voterlab.simulate import read_trace


@pytest.fixture
def k4(tmp_path):
    g = tmp_path / "k4.json"
    a = tmp_path / "a.json"
    assert cli.main(["gen-matrix", "--family", "complete", "--n", "4", "--kind",
                     "uniform_neighbor", "--graph-out", str(g), "--out", str(a)]) == 0
    return g, a


def test_matrix_round_trip(tmp_path, rng):
    A = random_matrix(6, rng)
    io.write_matrix(A, tmp_path / "m.json")
    assert np.array_equal(io.read_matrix(tmp_path / "m.json").A, A.A)


def test_graph_round_trip(tmp_path):
    g = cycle_graph(5, self_loops=True)
    io.write_graph(g, tmp_path / "g.json")
    h = io.read_graph(tmp_path / "g.json")
    assert h.n == g.n and set(h.proper_edges) == set(g.proper_edges)
    assert set(h.self_loops) == set(g.self_loops)


def test_json_non_finite():
    d = json.loads(io.dumps({"a": np.float64(np.inf), "b": np.arange(2), "c": np.bool_(1)}))
    assert d == {"a": "inf", "b": [0, 1], "c": True}


def test_csv_round_trip(tmp_path):
    x = 0.1 + 0.2
    io.write_csv([(1, x)], ["i", "x"], tmp_path / "t.csv")
    assert float(io.read_csv(tmp_path / "t.csv")[0]["x"]) == x


def test_parse_mu():
    mu = io.parse_mu('{"bernoulli": 0.3}')
    assert mu.pmf(3).sum() == pytest.approx(1.0)
    assert io.parse_mu({"fixed": "0110"}).pmf(4).max() == 1.0
    assert io.parse_mu({"uniform_transient": True}).pmf(3)[0] == 0.0
    for bad in ('{"bernoulli": 2}', "nope", "[1]", {"other": 1}):
        with pytest.raises(DomainError):
            io.parse_mu(bad)


def test_bad_matrix_file():
    with pytest.raises(DomainError):
        io.matrix_from_dict({"n": 3, "rows": [[1.0]]})
    with pytest.raises(DomainError):
        io.matrix_from_dict({"rows": []})


def test_spectral_k4(k4, tmp_path, capsys):
    g, _ = k4
    out = tmp_path / "s.json"
    assert cli.main(["spectral", "--graph", str(g), "--kind", "uniform_neighbor",
                     "--out", str(out)]) == 0
    assert abs(io.read_json(out)["phi_A"] - 2 / 9) < 1e-12


def test_simulate_byte_identical(k4, tmp_path):
    _, a = k4
    outs = []
    for i, extra in enumerate([["--seed", "7"], ["--seed", "7", "--threads", "3"]]):
        o = tmp_path / f"t{i}.jsonl"
        argv = ["simulate", "--matrix", str(a), "--mu", '{"bernoulli":0.5}',
                "--m", "200", "--out", str(o)] + extra
        assert cli.main(argv) == 0
        outs.append(o.read_bytes())
    o = tmp_path / "t2.jsonl"
    assert cli.main(["--seed", "7", "simulate", "--matrix", str(a), "--m", "200",
                     "--out", str(o)]) == 0
    assert outs[0] == outs[1] == o.read_bytes()
    assert read_trace(o).m == 200


def test_missing_seed_is_config_error(k4, tmp_path):
    _, a = k4
    assert cli.main(["simulate", "--matrix", str(a), "--m", "5",
                     "--out", str(tmp_path / "x")]) == 2


def test_config_errors(tmp_path):
    assert cli.main(["spectral", "--matrix", str(tmp_path / "missing.json")]) == 2
    assert cli.main(["gen-matrix", "--family", "cycle"]) == 2
    assert cli.main(["path", "--n", "5", "--k", "5"]) == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["frobnicate"])
    assert e.value.code == 2


def test_threads_env(monkeypatch):
    monkeypatch.setenv("VOTERLAB_THREADS", "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2


def test_path_csv(tmp_path):
    out = tmp_path / "p.csv"
    assert cli.main(["path", "--n", "8", "--k", "3", "--reps", "2000", "--seed", "1",
                     "--out", str(out)]) == 0
    rows = io.read_csv(out)
    assert list(rows[0]) == ["vertex", "h_closed_form", "h_empirical", "stderr"]
    assert len(rows) == 8


def test_estimate_and_lyapunov(k4, tmp_path):
    _, a = k4
    tr, res, ly = tmp_path / "t.jsonl", tmp_path / "r.json", tmp_path / "l.json"
    assert cli.main(["simulate", "--matrix", str(a), "--m", "300", "--seed", "3",
                     "--out", str(tr)]) == 0
    assert cli.main(["estimate", "--trace", str(tr), "--astar", str(a),
                     "--lambda", "0", "--out", str(res)]) == 0
    assert io.read_json(res)["frob_error"] < 0.3
    assert cli.main(["estimate", "--trace", str(tr), "--astar", str(a),
                     "--lambda", "auto", "--out", str(res)]) == 0
    assert io.read_json(res)["lambda_m"] > 0
    assert cli.main(["lyapunov", "--matrix", str(a), "--out", str(ly)]) == 0
    assert io.read_json(ly)["lyapunov_residual"] < 1e-8
    assert cli.main(["lyapunov", "--matrix", str(a), "--epsilon", "0.1",
                     "--mode", "solve", "--out", str(ly)]) == 0


def test_bounds(k4, tmp_path):
    _, a = k4
    out = tmp_path / "b.json"
    assert cli.main(["bounds", "--matrix", str(a), "--mc", "200", "--seed", "2",
                     "--out", str(out)]) == 0
    assert "empirical" in json.dumps(io.read_json(out))


def test_verify_quick(capsys):
    assert cli.main(["verify", "--suite", "quick"]) == 0
    assert "invariants:" in capsys.readouterr().out


def test_verify_failure_exit(monkeypatch):
    monkeypatch.setattr(cli, "verify_suite", lambda suite: [
        {"instance": "x", "check": "c", "value": 1.0, "limit": 0.0, "pass": False,
         "kind": "invariant"}])
    assert cli.main(["verify"]) == 1
