import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import SCENARIOS
from hidden_reach import config
from hidden_reach.errors import ConfigError
from hidden_reach.report import (
    ReportBundle,
    Writer,
    boundary_csv,
    ellipse_boundary,
    ellipse_figures,
    projection_shape,
    table_csv,
)

SCENARIO_FILES = sorted(SCENARIOS.glob("*.json"))


def base_doc():
    return json.loads((SCENARIOS / "paper_sec4_case1.json").read_text())


class TestConfig:
    @pytest.mark.parametrize("path", SCENARIO_FILES, ids=lambda p: p.stem)
    def test_roundtrip(self, path):
        cfg = config.load(path)
        text = config.dumps(cfg)
        again = config.loads(text)
        assert again == cfg
        assert config.dumps(again) == text

    def test_shipped_scenarios_present(self):
        assert {p.stem for p in SCENARIO_FILES} >= {"paper_sec4_case1", "paper_sec4_case2", "paper_sec4_synth"}

    def test_derived_objects(self):
        cfg = config.load(SCENARIOS / "paper_sec4_case1.json")
        model = cfg.model()
        assert (model.n, model.m) == (2, 1)
        assert cfg.backend == "conic"
        assert cfg.quantile_method.value == "gamma"
        assert cfg.sim_config(seed=7).seed == 7
        assert cfg.b_grid().size > 90

    @pytest.mark.parametrize(
        "mutate,path",
        [
            (lambda d: d["detector"].update(A=[1.5]), "detector.A.0"),
            (lambda d: d["system"].update(C=[[1.0, 0.0, 0.0]]), "system.C"),
            (lambda d: d["system"].update(F=[[0.5, 0.1]]), "system.F"),
            (lambda d: d["observer"].update(L=[[1.0]]), "observer.L"),
            (lambda d: d["solver"].update(backend="scs"), "solver.backend"),
            (lambda d: d.update(schema="hidden-reach/2"), "schema"),
            (lambda d: d.update(extra=1), "<root>"),
            (lambda d: d["sim"].update(horizon=0), "sim.horizon"),
            (lambda d: d["detector"].update(case2={"A": 0.05, "a_p": [0.07]}), "detector.case2.a_p.0"),
            (lambda d: d["system"].update(R1=[[1.0, 0.0], [0.0]]), "system.R1"),
        ],
    )
    def test_error_paths(self, mutate, path):
        doc = base_doc()
        mutate(doc)
        with pytest.raises(ConfigError) as info:
            config.parse(doc)
        assert info.value.path == path

    def test_invalid_json(self):
        with pytest.raises(ConfigError):
            config.loads("{not json")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            config.load(tmp_path / "absent.json")

    def test_defaults_filled(self):
        doc = base_doc()
        del doc["solver"], doc["sim"], doc["output"]
        cfg = config.parse(doc)
        assert cfg.solver.backend == "conic"
        assert config.to_dict(cfg)["output"]["formats"] == ["json", "csv", "svg"]

    def test_schema_shipped(self):
        assert config.schema()["$id"] == "hidden-reach/1"


class TestGeometry:
    @given(st.floats(0.1, 10.0), st.floats(0.1, 10.0), st.floats(-0.9, 0.9))
    def test_boundary_on_level_set(self, a, c, rho):
        P = np.array([[a, rho * np.sqrt(a * c)], [rho * np.sqrt(a * c), c]])
        pts = ellipse_boundary(P)
        assert pts.shape == (256, 2)
        np.testing.assert_allclose(np.einsum("ki,ij,kj->k", pts, P, pts), 1.0, atol=1e-9)

    def test_projection_is_shadow(self):
        rng = np.random.default_rng(0)
        B = rng.standard_normal((3, 3))
        P = B @ B.T + np.eye(3)
        Q = projection_shape(P, 0, 2)
        # support function of the projection equals that of the full ellipsoid along (u1, 0, u3)
        Pinv = np.linalg.inv(P)
        for th in np.linspace(0, np.pi, 7):
            u = np.array([np.cos(th), np.sin(th)])
            full = np.sqrt(np.array([u[0], 0, u[1]]) @ Pinv @ np.array([u[0], 0, u[1]]))
            assert np.sqrt(u @ np.linalg.inv(Q) @ u) == pytest.approx(full)

    def test_one_dimensional(self):
        text = boundary_csv([("x", np.array([[4.0]]))])
        assert text.splitlines() == ["label,lower,upper", "x,-0.5,0.5"]
        assert ellipse_figures([("x", np.array([[4.0]]))], "t") == {}

    def test_three_dimensional_pairs(self):
        figs = ellipse_figures([("a", np.eye(3)), ("b", 2 * np.eye(3))], "t")
        assert sorted(figs) == ["_e1e2", "_e1e3", "_e2e3"]
        rows = boundary_csv([("a", np.eye(3))]).splitlines()
        assert len(rows) == 1 + 3 * 256

    def test_svg_is_xml(self):
        fig = ellipse_figures([("a & b", np.diag([1.0, 4.0]))], "x < y", scatter=np.zeros((3, 2)))[""]
        root = ET.fromstring(fig.svg())
        assert root.tag.endswith("svg")
        assert len(root.findall(".//{http://www.w3.org/2000/svg}path")) == 1

    def test_svg_deterministic(self):
        a = ellipse_figures([("a", np.diag([1.0, 4.0]))], "t")[""].svg()
        b = ellipse_figures([("a", np.diag([1.0, 4.0]))], "t")[""].svg()
        assert a == b


class TestBundle:
    def test_json(self):
        bundle = ReportBundle("bound", "s", bounds=[{"P": np.eye(2), "x": np.float64(np.inf), "ok": np.bool_(True)}])
        doc = json.loads(bundle.dumps())
        assert doc["schema"] == "hidden-reach/1"
        assert doc["bounds"][0] == {"P": [[1.0, 0.0], [0.0, 1.0]], "x": None, "ok": True}

    def test_writer_formats(self, tmp_path):
        w = Writer(tmp_path, ["csv"])
        assert w.write("a.csv", table_csv(["x"], [[1.5]])) is not None
        assert w.write("a.svg", "<svg/>") is None
        assert w.files == ["a.csv"]
        assert (tmp_path / "a.csv").read_text() == "x\n1.5\n"
