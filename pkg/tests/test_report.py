import json

import pytest

from src.analysis.aggregate import feature_responsibility
from src.analysis.model import AnalysisConfig, load_schema
from src.analysis.search import ProblemResult, analyze_problem
from src.errors import ParseError
from src.report import (
    analysis_report,
    canonical,
    dumps,
    emit_report,
    load_results,
    rank_report,
)

from tests.conftest import important


@pytest.fixture
def schema():
    return load_schema()


@pytest.fixture
def ranking(schema):
    results = {"p1": important(["Req_Stat"]), "p2": important(["Req_Anal", "File_List"])}
    return rank_report(feature_responsibility(results, features=schema.ids()), schema.features)


def analyze_all(sut, problems, engine):
    config = AnalysisConfig(seed=3)
    return [
        ProblemResult.from_search(p.id, *analyze_problem(sut, sut.spec.graph(), config, engine, p))
        for p in problems
    ]


class TestCanonical:
    def test_rounds_floats(self):
        assert canonical({"x": 1 / 3, "y": [2 / 3]}) == {"x": 0.333333, "y": [0.666667]}

    def test_negative_zero(self):
        assert dumps(-1e-9) == "0.000000\n"

    def test_sets_are_sorted(self):
        assert canonical({"b", "a"}) == ["a", "b"]

    def test_floats_have_six_decimals(self):
        text = dumps({"b": [1 / 3, 80.0], "a": -0.25, "n": 3, "s": "0.5"})
        assert text == (
            '{\n  "a": -0.250000,\n  "b": [\n    0.333333,\n    80.000000\n  ],\n'
            '  "n": 3,\n  "s": "0.5"\n}\n'
        )
        assert json.loads(text)["b"] == [0.333333, 80.0]


class TestEmit:
    def test_json_is_byte_identical(self, tmp_path, f2, problem4, engine):
        first = emit_report(analysis_report(analyze_all(f2, [problem4], engine)), "json", tmp_path / "one")
        second = emit_report(analysis_report(analyze_all(f2, [problem4], engine)), "json", tmp_path / "two")
        assert first[0].read_bytes() == second[0].read_bytes()

    def test_results_round_trip(self, tmp_path, f2, problem4, engine):
        results = analyze_all(f2, [problem4], engine)
        path = emit_report(analysis_report(results), "json", tmp_path)[0]
        loaded = load_results(path)
        assert [r.important for r in loaded] == [important(["A"], ["B", "C"])]

    def test_ranking_json_float_format(self, tmp_path, ranking):
        text = emit_report(ranking, "json", tmp_path)[0].read_text(encoding="utf-8")
        assert '"fr": 0.250000' in text
        assert '"1": 66.666667' in text
        assert '"2": 33.333333' in text
        assert '"3"' not in text

    def test_ranking_csv_has_one_row_per_feature(self, tmp_path, ranking):
        paths = emit_report(ranking, "csv", tmp_path)
        by_name = {p.name: p for p in paths}
        lines = by_name["ranking_ranking.csv"].read_text(encoding="utf-8").splitlines()
        assert len(lines) == 12 + 1
        assert lines[0] == "feature_id,fr,normalized_fr,rank"
        assert lines[1] == "Req_Stat,1.000000,1.000000,1"

    def test_single_table_csv(self, tmp_path, f2, problem4, engine):
        paths = emit_report(analysis_report(analyze_all(f2, [problem4], engine)), "csv", tmp_path)
        assert [p.name for p in paths] == ["results.csv"]
        assert paths[0].read_text(encoding="utf-8").splitlines()[1].startswith("p1,A;B+C,")

    def test_markdown_length_rows(self, tmp_path, ranking):
        text = emit_report(ranking, "markdown", tmp_path)[0].read_text(encoding="utf-8")
        for length in (1, 2):
            assert f"| {length} | " in text
        assert "## Contribution by combination length" in text

    def test_unknown_format(self, tmp_path, ranking):
        with pytest.raises(ValueError):
            emit_report(ranking, "html", tmp_path)


class TestRankReport:
    def test_payload(self, ranking):
        payload = ranking.payload
        assert payload["ranking"][0]["feature_id"] == "Req_Stat"
        assert payload["category_responsibility"]["Specification"] == 1.0
        assert payload["category_responsibility"]["Analysis"] == pytest.approx(0.25)
        assert payload["by_length_contribution"]["1"] == pytest.approx(100 / 1.5)
        assert sum(payload["topk_appearance"].values()) == 5


class TestLoadResults:
    def test_invalid_json(self, tmp_path):
        path = tmp_path / "results.json"
        path.write_text("[", encoding="utf-8")
        with pytest.raises(ParseError):
            load_results(path)

    def test_malformed_record(self, tmp_path):
        path = tmp_path / "results.json"
        path.write_text(json.dumps({"results": [{"important_sets": []}]}), encoding="utf-8")
        with pytest.raises(ParseError):
            load_results(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            load_results(tmp_path / "absent.json")
