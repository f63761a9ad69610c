import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from metastable.errors import SpecParseError
from metastable.models import fig1_spec, random_reversible_spec
from metastable.report import Report, build_report, fmt, render_text
from metastable.scale_algebra import AsymScalar
from metastable.specfile import SpecFile, load_measure, load_spec, spec_to_document


def write(tmp_path, doc, name="s.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_edges_document(tmp_path):
    p = write(tmp_path, {"schema": "metastable-spec/1", "states": ["a", "b"], "edges": [
        {"source": "a", "target": "b", "prefactor": "1/3", "cost": 1},
        {"source": "b", "target": "a"}]})
    spec, doc = load_spec(p)
    assert spec.rate("a", "b") == AsymScalar(Fraction(1, 3), 1)
    assert spec.rate("b", "a") == AsymScalar(1, 0)


def test_model_document_matches_builtin(tmp_path):
    from importlib import resources
    spec, doc = load_spec(resources.files("metastable") / "data" / "fig1.json")
    assert spec.edges == fig1_spec().edges
    assert doc.state_names(spec)[11] == "x4"


@pytest.mark.parametrize("doc", [
    {"schema": "metastable-spec/2", "states": [0], "edges": []},
    {"schema": "metastable-spec/1", "states": [0, 1]},
    {"schema": "metastable-spec/1", "states": [0, 1], "edges": [
        {"source": 0, "target": 1, "cost": -1}, {"source": 1, "target": 0}]},
    {"schema": "metastable-spec/1", "states": [0, 1], "edges": [
        {"source": 0, "target": 1}, {"source": 0, "target": 1}, {"source": 1, "target": 0}]},
    {"schema": "metastable-spec/1", "states": [0, 1], "edges": [{"source": 0, "target": 1}]},
    {"schema": "metastable-spec/1", "model": {"type": "landscape", "energies": [0, 1]},
     "options": {"precision": 8}},
])
def test_rejects(tmp_path, doc):
    from metastable.errors import ModelError
    with pytest.raises(ModelError):
        load_spec(write(tmp_path, doc))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(0, 10**6))
def test_spec_document_roundtrip(num, seed):
    spec = random_reversible_spec(num, seed=seed)
    doc = SpecFile.model_validate(json.loads(json.dumps(spec_to_document(spec))))
    back = doc.to_spec()
    assert back.states == spec.states and back.edges == spec.edges


def test_measure_file(tmp_path):
    spec = fig1_spec()
    p = write(tmp_path, {"weights": {"x4": 1, "29": "3"}}, "m.json")
    mu = load_measure(p, spec, {11: "x4"})
    assert mu == {11: Fraction(1, 4), 29: Fraction(3, 4)}
    with pytest.raises(SpecParseError):
        load_measure(write(tmp_path, {"weights": {"nowhere": 1}}, "b.json"), spec)
    with pytest.raises(SpecParseError):
        load_measure(write(tmp_path, {"weights": {"1": 0}}, "c.json"), spec)


def test_fmt():
    import gmpy2
    assert fmt(Fraction(1, 8)) == "1/8" and fmt(Fraction(4)) == "4"
    assert fmt(gmpy2.mpfr("inf")) == "+inf"
    assert fmt(0.1234567890123456, 5) == "0.12346"


def test_report_roundtrip(fig1_tree, x):
    names = {v: k for k, v in x.items()}
    report = build_report(fig1_tree, names)
    again = Report.model_validate_json(report.model_dump_json())
    assert again == report
    assert render_text(again) == render_text(report)
    assert report.levels[0].reduced_rates[0][1] == "1/8"
    assert report.levels[0].theta_prefactor == "1/4"
