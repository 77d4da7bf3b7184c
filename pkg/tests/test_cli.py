import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from markov_multinomial.cli import main
from markov_multinomial.formats import read_csv_with_meta

MODEL = Path(__file__).resolve().parents[1] / "models" / "four_state.model"

IDENTITY = """\
states: A, B, C
initial: A=5, C=2
horizon: 4
seed: 1
"""


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def table(path):
    meta, header, rows = read_csv_with_meta(Path(path).read_text())
    return meta, [dict(zip(header, row)) for row in rows]


def test_moments_cycle_one(tmp_path):
    out = tmp_path / "m.csv"
    assert main(["moments", "--model", str(MODEL), "--out", str(out)]) == 0
    meta, rows = table(out)
    assert meta["schema"] == "markov-multinomial/1" and meta["kind"] == "moments"
    s1 = next(r for r in rows if r["cycle"] == "1" and r["state"] == "S1")
    assert float(s1["mean"]) == pytest.approx(7100, abs=1e-9)
    assert float(s1["variance"]) == pytest.approx(2059, abs=1e-9)
    assert float(s1["sd"]) == pytest.approx(np.sqrt(2059), abs=1e-9)
    assert len(rows) == 51 * 4
    _, cov = table(tmp_path / "m_cov.csv")
    assert len(cov) == 51 * 16
    c12 = next(r for r in cov if r["cycle"] == "1" and r["state_u"] == "S1" and r["state_v"] == "S2")
    assert float(c12["cov"]) == pytest.approx(-710, abs=1e-9)


def test_moments_output_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["moments", "--model", str(MODEL), "--out", str(a)])
    main(["moments", "--model", str(MODEL), "--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
    assert (tmp_path / "a_cov.csv").read_bytes() == (tmp_path / "b_cov.csv").read_bytes()


def test_moments_identity_model(tmp_path):
    model = write(tmp_path, "id.model", IDENTITY)
    out = tmp_path / "m.csv"
    assert main(["moments", "--model", model, "--out", str(out)]) == 0
    _, rows = table(out)
    for r in rows:
        assert float(r["variance"]) == 0.0
        assert float(r["mean"]) == {"A": 5.0, "B": 0.0, "C": 2.0}[r["state"]]


def test_invalid_probability_exit_code(tmp_path, capsys):
    model = write(tmp_path, "bad.model", MODEL.read_text().replace("S1 -> S2: 0.1", "S1 -> S2: 1.2"))
    out = tmp_path / "m.csv"
    assert main(["moments", "--model", model, "--out", str(out)]) == 3
    err = capsys.readouterr().err
    assert "S1 -> S2" in err and "line" in err
    assert not out.exists()


def test_parse_error_exit_code(tmp_path, capsys):
    model = write(tmp_path, "bad.model", MODEL.read_text().replace("S1 -> S2: 0.1", "S1 -> S2: zero"))
    assert main(["moments", "--model", model, "--out", str(tmp_path / "m.csv")]) == 2
    assert "line" in capsys.readouterr().err


def test_bad_arguments_exit_code(tmp_path):
    out = str(tmp_path / "s.csv")
    assert main(["simulate", "--model", str(MODEL), "--replications", "1", "--out", out]) == 4
    assert main(["simulate", "--model", str(tmp_path / "missing.model"), "--out", out]) == 4
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--model", str(MODEL), "--out", out, "--bogus"])
    assert info.value.code == 4
    model = write(tmp_path, "noseed.model", IDENTITY.replace("seed: 1\n", ""))
    assert main(["simulate", "--model", model, "--out", out]) == 4
    assert not Path(out).exists()


def test_simulate_writes_metadata_and_is_reproducible(tmp_path):
    model = write(tmp_path, "m.model", MODEL.read_text().replace("initial: S1=10000", "initial: S1=300"))
    runs = []
    for name, workers in (("a.csv", "1"), ("b.csv", "1"), ("c.csv", "2")):
        out = tmp_path / name
        assert main(["simulate", "--model", model, "--replications", "20", "--seed", "5",
                     "--workers", workers, "--out", str(out)]) == 0
        runs.append(out.read_bytes())
    assert runs[0] == runs[1] == runs[2]
    meta, rows = table(tmp_path / "a.csv")
    assert meta["seed"] == "5" and meta["replications"] == "20"
    assert "PCG64" in meta["rng"] and meta["version"]
    s4 = [float(r["empirical_mean"]) for r in rows if r["state"] == "S4"]
    assert all(b >= a for a, b in zip(s4, s4[1:]))
    assert all(r["seed"] == "5" and r["replications"] == "20" for r in rows)


def test_simulate_store_paths_same_counts(tmp_path):
    model = write(tmp_path, "m.model", MODEL.read_text()
                  .replace("initial: S1=10000", "initial: S1=40").replace("horizon: 50", "horizon: 8"))
    plain, stored, paths = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "p.csv"
    main(["simulate", "--model", model, "--replications", "3", "--out", str(plain)])
    main(["simulate", "--model", model, "--replications", "3", "--out", str(stored),
          "--store-paths", str(paths)])
    assert plain.read_bytes() == stored.read_bytes()
    meta, rows = table(paths)
    assert meta["states"] == "S1,S2,S3,S4" and meta["schedule_matrices"] == "1"
    assert len(rows) == 120
    assert all(len(r["path"].split()) == 9 and r["path"].startswith("0") for r in rows)


def test_compare_identity_model_passes(tmp_path, capsys):
    model = write(tmp_path, "id.model", IDENTITY)
    report = tmp_path / "r.csv"
    assert main(["compare", "--model", model, "--replications", "2", "--report", str(report)]) == 0
    meta, rows = table(report)
    assert meta["passed"] == "true"
    assert all(r["degenerate"] == "1" and r["cell_ok"] == "1" and r["mean_z"] == "" for r in rows)
    assert "result: PASS" in (tmp_path / "r.summary.txt").read_text()
    assert "result: PASS" in capsys.readouterr().out


def test_compare_perturbed_analytic_model_fails(tmp_path):
    model = write(tmp_path, "m.model", MODEL.read_text().replace("initial: S1=10000", "initial: S1=2000")
                  .replace("horizon: 50", "horizon: 10"))
    analytic = write(tmp_path, "a.model", Path(model).read_text().replace("S1 -> S2: 0.1", "S1 -> S2: 0.15"))
    report = tmp_path / "r.csv"
    code = main(["compare", "--model", model, "--analytic-model", analytic,
                 "--replications", "100", "--report", str(report)])
    assert code == 5
    meta, rows = table(report)
    assert meta["passed"] == "false"
    assert any(r["cell_ok"] == "0" for r in rows)


def test_compare_rejects_bad_ratio_band(tmp_path):
    with pytest.raises(SystemExit) as info:
        main(["compare", "--model", str(MODEL), "--report", str(tmp_path / "r.csv"),
              "--ratio-band", "1.2,1.3"])
    assert info.value.code == 4


COUNTS = """\
# states: S1,S2,S3,S4
from,to,count
S1,S1,7
S1,S2,1
S1,S4,2
"""


def test_posterior_from_counts(tmp_path, capsys):
    data = write(tmp_path, "c.csv", COUNTS)
    out = tmp_path / "post.csv"
    assert main(["posterior", data, "--out", str(out)]) == 0
    _, rows = table(out)
    s1 = [r for r in rows if r["from"] == "S1"]
    assert [float(r["posterior_alpha"]) for r in s1] == [8, 2, 1, 3]
    assert [float(r["posterior_mean"]) for r in s1] == pytest.approx([8 / 14, 2 / 14, 1 / 14, 3 / 14])
    assert all(float(r["posterior_alpha"]) == 1.0 for r in rows if r["from"] != "S1")
    assert "uniform" in capsys.readouterr().out


def test_posterior_empty_counts_returns_prior(tmp_path):
    prior = write(tmp_path, "prior.csv", "from,to,alpha\n" + "".join(
        f"{a},{b},{0.5 if a == b else 2.0}\n" for a in ("x", "y") for b in ("x", "y")))
    data = write(tmp_path, "c.csv", "from,to,count\n")
    out = tmp_path / "post.csv"
    assert main(["posterior", data, "--prior", prior, "--out", str(out)]) == 0
    _, rows = table(out)
    assert [float(r["posterior_alpha"]) for r in rows] == [0.5, 2.0, 2.0, 0.5]
    # the output is itself a valid prior for a further update
    again = tmp_path / "post2.csv"
    assert main(["posterior", data, "--prior", str(out), "--out", str(again)]) == 0
    assert [float(r["posterior_alpha"]) for r in table(again)[1]] == [0.5, 2.0, 2.0, 0.5]


def test_posterior_states_from_model(tmp_path):
    data = write(tmp_path, "c.csv", "from,to,count\nS2,S3,4\n")
    out = tmp_path / "post.csv"
    assert main(["posterior", data, "--out", str(out)]) == 3
    assert main(["posterior", data, "--model", str(MODEL), "--out", str(out)]) == 0
    row = next(r for r in table(out)[1] if r["from"] == "S2" and r["to"] == "S3")
    assert float(row["posterior_alpha"]) == 5.0


def test_posterior_dimension_mismatch(tmp_path):
    prior = write(tmp_path, "prior.csv", "from,to,alpha\n" + "".join(
        f"{a},{b},1\n" for a in ("x", "y") for b in ("x", "y")))
    data = write(tmp_path, "c.csv", COUNTS)
    assert main(["posterior", data, "--prior", prior, "--out", str(tmp_path / "p.csv")]) == 6


def test_posterior_bad_inputs(tmp_path):
    out = str(tmp_path / "p.csv")
    assert main(["posterior", write(tmp_path, "a.csv", COUNTS + "S1,S9,1\n"), "--out", out]) == 3
    assert main(["posterior", write(tmp_path, "b.csv", COUNTS + "S1,S2,many\n"), "--out", out]) == 2
    assert main(["posterior", write(tmp_path, "c.csv", "x,y\n1,2\n"), "--out", out]) == 2
    paths = "# states: A,B\n# schedule_matrices: 2\nreplication,individual,path\n0,0,0 1\n"
    assert main(["posterior", write(tmp_path, "d.csv", paths), "--out", out]) == 3


def test_posterior_from_paths_file(tmp_path):
    model = write(tmp_path, "m.model", MODEL.read_text().replace("initial: S1=10000", "initial: S1=50")
                  .replace("horizon: 50", "horizon: 5"))
    paths = tmp_path / "p.csv"
    main(["simulate", "--model", model, "--replications", "2", "--out", str(tmp_path / "s.csv"),
          "--store-paths", str(paths)])
    out = tmp_path / "post.csv"
    assert main(["posterior", str(paths), "--out", str(out)]) == 0
    counts = sum(int(r["count"]) for r in table(out)[1])
    assert counts == 2 * 50 * 5


def test_module_entry_point():
    result = subprocess.run([sys.executable, "-m", "markov_multinomial", "--version"],
                            capture_output=True, text=True)
    assert result.returncode == 0 and result.stdout.strip() == "0.1.0"


@pytest.mark.slow
def test_compare_bundled_model_passes(tmp_path):
    report = tmp_path / "r.csv"
    assert main(["compare", "--model", str(MODEL), "--report", str(report)]) == 0
    meta, rows = table(report)
    assert meta["replications"] == "1000" and meta["seed"] == "20240611"
    assert len(rows) == 51 * 4 and all(r["cell_ok"] == "1" for r in rows)
