import csv
import json

import pytest

from clusterbell.cli import RESULT_HEADER, main

XY = {"family": "xy_chain", "gamma": 0.5, "fields": 1.0}


@pytest.fixture
def write_config(tmp_path):
    def write(cfg, name="cfg.json"):
        p = tmp_path / name
        p.write_text(json.dumps(cfg))
        return str(p)

    return write


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_build_summary(capsys, write_config):
    cfg = write_config({"lattice": {"kind": "chain", "L": 6}, "hamiltonian": XY})
    code, out, _ = run(capsys, "build", "--config", cfg)
    doc = json.loads(out)
    assert code == 0
    assert (doc["sites"], doc["bonds"], doc["bond_terms"], doc["field_terms"]) == (6, 5, 10, 6)
    assert doc["hermitian"] is True
    assert len(doc["spectrum"]["eigenvalues"]) == 8


def test_global_flags_after_subcommand(capsys, write_config, tmp_path):
    cfg = write_config({"lattice": {"kind": "chain", "L": 3}})
    out = tmp_path / "b.json"
    assert main(["--config", cfg, "build", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["sites"] == 3


@pytest.mark.parametrize("cfg, code", [
    ({"lattice": {"kind": "chain", "L": 0}}, 2),
    ({"lattice": {"kind": "chain", "L": 4}, "extra": 1}, 2),
    ({"lattice": {"kind": "chain", "L": 30}, "hamiltonian": XY, "spectrum": "full"}, 3),
])
def test_exit_codes(capsys, write_config, cfg, code):
    got, _, err = run(capsys, "build", "--config", write_config(cfg))
    assert got == code
    assert err.startswith("clusterbell: error:")


def test_schema_error_names_the_field(capsys, write_config):
    _, _, err = run(capsys, "build", "--config", write_config({"lattice": {"kind": "ring", "L": 4}}))
    assert "$.lattice.kind" in err


def test_malformed_json(capsys, tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    code, _, err = run(capsys, "build", "--config", str(p))
    assert code == 2 and "malformed JSON" in err


def test_missing_config_and_bad_flag(capsys):
    assert run(capsys, "build")[0] == 2
    assert run(capsys, "sweep", "--threads", "x")[0] == 2


EVOLVED = {
    "lattice": {"kind": "chain", "L": 8},
    "hamiltonian": XY,
    "state": {"kind": "evolved", "initial": "0"},
    "schedule": {"tau_list": [3], "t_list": [0.0, 0.5]},
    "inequality": {"name": "svetlichny3"},
    "optimizer": {"restarts": 3},
    "seed": 7,
}


def test_sweep_csv_and_results(capsys, write_config, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--config", write_config(EVOLVED), "--out", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [float(r["t"]) for r in rows] == [0.0, 0.5]
    assert float(rows[0]["defect"]) <= 1e-10 < float(rows[1]["defect"])
    res = list(csv.reader((tmp_path / "sweep.results.csv").open()))
    assert tuple(res[0]) == RESULT_HEADER
    assert all(r[-1] == "" for r in res[1:])
    assert len({r[0] for r in res[1:]}) == 1


def test_sweep_determinism_across_threads(capsys, write_config, tmp_path):
    cfg = write_config(EVOLVED)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["sweep", "--config", cfg, "--out", str(a), "--threads", "1"]) == 0
    assert main(["sweep", "--config", cfg, "--out", str(b), "--threads", "3"]) == 0
    assert a.read_bytes() == b.read_bytes()
    ra, rb = tmp_path / "a.results.csv", tmp_path / "b.results.csv"
    assert ra.read_bytes() == rb.read_bytes()


def test_sweep_to_stdout_then_fit(capsys, write_config, tmp_path):
    cfg = dict(EVOLVED, state={"kind": "ground"}, schedule={"tau_list": [1, 2, 3]})
    code, out, _ = run(capsys, "sweep", "--config", write_config(cfg))
    assert code == 0
    path = tmp_path / "g.csv"
    path.write_text(out)
    code, out, _ = run(capsys, "fit", str(path))
    doc = json.loads(out)
    assert code == 0 and doc["kind"] == "decay" and doc["points_used"] == 3


def test_fit_light_cone_selected(capsys, tmp_path):
    import math

    lines = ["tau,t,s,partition,joint,factored,defect,max_region_size"]
    for tau in (1, 2, 3, 4):
        for t in (0.1, 0.2, 0.3):
            d = math.exp(-tau) * math.expm1(2 * t)
            lines.append(f"{tau},{t},3,seq,{d},0,{d},1")
    path = tmp_path / "lc.csv"
    path.write_text("\n".join(lines) + "\n")
    code, out, _ = run(capsys, "fit", str(path))
    doc = json.loads(out)
    assert code == 0 and doc["kind"] == "light_cone"
    assert doc["v_est"] == pytest.approx(2.0, abs=1e-6)


def test_fit_data_errors(capsys, tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("tau,t,s,partition,joint,factored,defect,max_region_size\n1,0,3,seq,0.1,0,0.1,1\n"
                    "2,0,3,seq,0.05,0,0.05,1\n")
    assert run(capsys, "fit", str(path))[0] == 4
    path.write_text("a,b\n1,2\n")
    assert run(capsys, "fit", str(path))[0] == 4
    assert run(capsys, "fit", str(tmp_path / "missing.csv"))[0] == 4


def test_bound(capsys):
    code, out, _ = run(capsys, "bound", "--inequality", "svetlichny3")
    doc = json.loads(out)
    assert code == 0 and doc["biseparable_bound"] == 4 and doc["catalog_delta_loc"] == 4
    code, _, err = run(capsys, "bound", "--inequality", "seevinck_svetlichny", "--n", "5")
    assert code == 3 and "catalog" in err


def test_certify_exit_codes(capsys, write_config):
    ghz = {"lattice": {"kind": "chain", "L": 3}, "state": {"kind": "ghz"},
           "regions": [[1], [2], [3]], "inequality": {"name": "svetlichny3"},
           "certify": {"constants": {"c": 0.1, "kappa": 1.0}}}
    code, out, _ = run(capsys, "certify", "--config", write_config(ghz))
    doc = json.loads(out)
    assert code == 1 and doc["epsilon_local"] is False
    assert doc["value"] == pytest.approx(4 * 2**0.5, abs=1e-4)
    mixed = dict(ghz, hamiltonian=XY, state={"kind": "gibbs", "beta": 0.0})
    code, out, _ = run(capsys, "certify", "--config", write_config(mixed))
    assert code == 0 and json.loads(out)["epsilon_local"] is True


def test_certify_determinism(capsys, write_config, tmp_path):
    cfg = {"lattice": {"kind": "chain", "L": 8}, "hamiltonian": XY, "state": {"kind": "gibbs", "beta": 0.1},
           "inequality": {"name": "svetlichny3"}, "certify": {"tau": 3}, "optimizer": {"restarts": 4}}
    path = write_config(cfg)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["certify", "--config", path, "--out", str(a), "--threads", "1"])
    main(["certify", "--config", path, "--out", str(b), "--threads", "4"])
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["tau_star"] is not None and "beta_star_unknown" in doc["flags"]


def test_bell_and_dump_state(capsys, write_config, tmp_path):
    cfg = {"lattice": {"kind": "chain", "L": 3}, "state": {"kind": "ghz"}, "regions": [[1], [2], [3]],
           "inequality": {"name": "svetlichny3"}, "optimizer": {"restarts": 5}}
    out = tmp_path / "bell.json"
    code, _, _ = run(capsys, "bell", "--config", write_config(cfg), "--out", str(out), "--dump-state")
    assert code == 0
    assert json.loads(out.read_text())["value"] == pytest.approx(4 * 2**0.5, abs=1e-4)
    for name in ("bell.assignment.bin", "bell.assignment.json", "bell.state.bin", "bell.state.json"):
        assert (tmp_path / name).exists()


def test_seed_override_changes_run_id(capsys, write_config, tmp_path):
    cfg = write_config(EVOLVED)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["sweep", "--config", cfg, "--out", str(a)])
    main(["sweep", "--config", cfg, "--out", str(b), "--seed", "8"])
    ida = (tmp_path / "a.results.csv").read_text().splitlines()[1].split(",")[0]
    idb = (tmp_path / "b.results.csv").read_text().splitlines()[1].split(",")[0]
    assert ida != idb


def test_build_four_site_chain(capsys, write_config):
    cfg = write_config({"lattice": {"kind": "chain", "L": 4}, "hamiltonian": XY})
    doc = json.loads(run(capsys, "build", "--config", cfg)[1])
    assert (doc["sites"], doc["bonds"], doc["field_terms"]) == (4, 3, 4)


def test_unrealizable_schedule_exit_4(capsys, write_config):
    cfg = dict(EVOLVED, schedule={"tau_list": [9]})
    code, _, err = run(capsys, "sweep", "--config", write_config(cfg))
    assert code == 4 and "max feasible tau is 3" in err


def test_missing_inequality_name_exit_2(capsys, write_config):
    cfg = {"lattice": {"kind": "chain", "L": 3}, "state": {"kind": "ghz"}, "regions": [[1], [2], [3]],
           "inequality": {"n": 3}}
    code, _, err = run(capsys, "certify", "--config", write_config(cfg))
    assert code == 2 and "$.inequality" in err
