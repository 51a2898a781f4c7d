import json
import math
import subprocess
import sys

import numpy as np
import pytest

from modsurf import grid as G
from modsurf.cli import main
from modsurf.gridio import load_grid, save_grid
from modsurf.modulus import modulus


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def files(tmp_path, capsys):
    paths = {}
    for name, args in {"sq": ["euclidean", "--n", "65", "--h", "0.015625"],
                       "rect": ["euclidean", "--rows", "17", "--cols", "33", "--h", "0.0625"],
                       "li": ["linf", "--n", "33", "--rotation", str(math.pi / 4)],
                       "c": ["cantor", "--depth", "2", "--a", "0.5,0.25"]}.items():
        p = tmp_path / f"{name}.msg"
        assert run(capsys, "generate", *args, "-o", str(p))[0] == 0
        paths[name] = p
    return paths


def test_generate_examples(files):
    sq = load_grid(files["sq"])
    assert sq.cell_shape == (64, 64) and np.all(sq.weight == 1)
    c = load_grid(files["c"])
    assert c.meta["a"] == ["1/2", "1/4"] and c.meta["depth"] == 2
    li = G.make_linf(257, 257, 1 / 256)
    assert np.allclose(li.area_factor, math.pi / 4)


def test_generate_linf_257(tmp_path, capsys):
    p = tmp_path / "li.msg"
    assert run(capsys, "generate", "linf", "--n", "257", "-o", str(p))[0] == 0
    g = load_grid(p)
    assert g.kind is G.Kind.NORM_FIELD and g.area_factor[0, 0] == pytest.approx(math.pi / 4)


def test_modulus_json(files, capsys):
    code, out, _ = run(capsys, "modulus", str(files["sq"]))
    d = json.loads(out)
    assert code == 0 and set(d) == {"value", "energy", "residual", "iterations"}
    assert d["value"] == pytest.approx(1.0, abs=1e-9)
    code, out, _ = run(capsys, "modulus", str(files["rect"]))
    assert json.loads(out)["value"] == pytest.approx(0.5, abs=1e-9)


def test_cli_numbers_equal_library(files, capsys):
    g = load_grid(files["li"])
    _, out, _ = run(capsys, "modulus", str(files["li"]), "--pair", "24", "--quad", "2,20,3,30")
    assert json.loads(out)["value"] == modulus(g, G.Quad(2, 20, 3, 30), "24").value


def test_disconnected_quad_exit_3(tmp_path, capsys):
    w = np.ones((4, 4))
    w[2, :] = 0
    p = tmp_path / "short.msg"
    save_grid(G.make_weighted(w, 0.25), p)
    code, _, err = run(capsys, "modulus", str(p))
    assert code == 3 and "solver error" in err


def test_usage_errors(files, tmp_path, capsys):
    assert run(capsys, "modulus", str(tmp_path / "missing.msg"))[0] == 2
    assert run(capsys, "modulus", str(files["sq"]), "--quad", "1,2")[0] == 2
    assert run(capsys, "generate", "cantor", "--depth", "2", "-o", str(tmp_path / "x.msg"))[0] == 2
    with pytest.raises(SystemExit) as info:
        main(["modulus"])
    assert info.value.code == 2


def test_geometry_errors(files, capsys):
    assert run(capsys, "annulus", str(files["sq"]), "--r", "0.1", "--R", "0.7")[0] == 4
    assert run(capsys, "modulus", str(files["sq"]), "--quad", "0,80,0,3")[0] == 4


def test_annulus_and_dual(files, capsys):
    code, out, _ = run(capsys, "annulus", str(files["sq"]), "--r", "0.025", "--R", "0.4")
    assert code == 0 and json.loads(out)["value"] == pytest.approx(2 * math.pi / math.log(16), rel=0.1)
    code, out, _ = run(capsys, "dual", str(files["sq"]))
    assert json.loads(out)["value"] == pytest.approx(1.0, abs=1e-9)


def test_uniformize(files, tmp_path, capsys):
    csv_path = tmp_path / "map.csv"
    code, out, _ = run(capsys, "uniformize", str(files["sq"]), "--csv", str(csv_path))
    d = json.loads(out)
    assert code == 0 and d["degree_ok"] and d["m1"] == pytest.approx(1.0)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "# modsurf-csv v1" and lines[1] == "node,x,y,u,v"
    node, x, y, u, v = map(float, lines[2 + 65 * 10 + 7].split(","))
    assert u == pytest.approx(x, abs=1e-9) and v == pytest.approx(y, abs=1e-9)
    code, out, _ = run(capsys, "uniformize", str(files["li"]))
    assert json.loads(out)["degree_ok"]
    code, out, _ = run(capsys, "uniformize", str(files["c"]))
    assert json.loads(out)["change_of_variables"]["left_half"]["relative_error"] <= 0.03


def test_audit(files, tmp_path, capsys, monkeypatch):
    code, out, _ = run(capsys, "audit", str(files["sq"]), "--full-only")
    d = json.loads(out)
    assert code == 0 and d["kappa_upper"] == pytest.approx(1.0, abs=1e-6)
    code, out, _ = run(capsys, "audit", str(files["li"]), "--full-only")
    assert json.loads(out)["kappa_upper"] == pytest.approx(math.pi ** 2 / 4, rel=0.05)
    monkeypatch.setenv("MODSURF_THREADS", "2")
    csv_path = tmp_path / "a.csv"
    out_path = tmp_path / "a.json"
    code, _, _ = run(capsys, "audit", str(files["c"]), "--csv", str(csv_path), "-o", str(out_path))
    first = out_path.read_text()
    run(capsys, "audit", str(files["c"]), "--threads", "1", "-o", str(out_path))
    assert out_path.read_text() == first
    assert csv_path.read_text().startswith("# modsurf-csv v1\n")


def test_john(capsys):
    code, out, _ = run(capsys, "john")
    d = json.loads(out)
    assert d["containment_ratio"] == pytest.approx(math.sqrt(2))
    code, out, _ = run(capsys, "john", "--regular", "64")
    assert json.loads(out)["dilatation_bound"] == pytest.approx(1, abs=1e-3)


def test_check_single_criterion(capsys):
    code, out, _ = run(capsys, "check", "--only", "1")
    assert code == 0 and out.startswith("[PASS] criterion  1")


def test_module_entry_point(files):
    res = subprocess.run([sys.executable, "-m", "modsurf", "modulus", str(files["rect"])],
                         capture_output=True, text=True, check=True)
    assert json.loads(res.stdout)["value"] == pytest.approx(0.5)
