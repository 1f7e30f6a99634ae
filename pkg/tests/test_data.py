import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpgat.data import MalformedLine, SyntheticSpec, gen_synthetic, ingest_jsonl, write_jsonl
from cpgat.frontend import parse_source


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return path


class TestIngest:
    def test_single_record(self, tmp_path):
        res = ingest_jsonl(write_lines(tmp_path / "a.jsonl", ['{"func":"void f(){}","target":0}']))
        (fn,) = res.functions
        assert fn.label == 0 and fn.name == "f" and res.total == 1

    def test_missing_target_in_inference_mode(self, tmp_path):
        res = ingest_jsonl(write_lines(tmp_path / "a.jsonl", ['{"func":"void f(){}"}']))
        assert res.functions[0].label is None

    def test_missing_target_when_required(self, tmp_path):
        with pytest.raises(MalformedLine) as info:
            ingest_jsonl(write_lines(tmp_path / "a.jsonl", ['{"func":"void f(){}"}']), require_label=True)
        assert info.value.lineno == 1

    def test_skips_out_of_subset(self, tmp_path):
        lines = [
            json.dumps({"func": "int f(int a) { return a / 2; }", "target": 1}),
            json.dumps({"func": "void g(int *p) { *p = 0; }", "target": 1}),
            json.dumps({"func": "void h() { k(); }", "target": 0}),
        ]
        res = ingest_jsonl(write_lines(tmp_path / "a.jsonl", lines))
        assert [f.name for f in res.functions] == ["f", "h"]
        assert len(res.skipped) == 1 and res.skipped[0][0] == 2

    @pytest.mark.parametrize(
        "line, lineno",
        [("not json", 2), ('{"target": 1}', 2), ('{"func": "void f(){}", "target": 3}', 2), ("[1, 2]", 2)],
    )
    def test_malformed(self, tmp_path, line, lineno):
        path = write_lines(tmp_path / "a.jsonl", ['{"func":"void f(){}","target":0}', line])
        with pytest.raises(MalformedLine) as info:
            ingest_jsonl(path)
        assert info.value.lineno == lineno

    def test_blank_lines_ignored(self, tmp_path):
        res = ingest_jsonl(write_lines(tmp_path / "a.jsonl", ["", '{"func":"void f(){}","target":1}', "  "]))
        assert res.total == 1 and len(res) == 1

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            ingest_jsonl(tmp_path / "nope.jsonl")

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.sampled_from([
        "void f() { g(); }",
        "int f(int a) { if (a > 1) { return a; } return 0; }",
        "void f() { int *p; }",
        "void f() { x++; }",
        "void f() { @ }",
        "int f() { while (1) { g(); } }",
    ]), max_size=12))
    def test_conservation(self, tmp_path_factory, sources):
        path = tmp_path_factory.mktemp("c") / "c.jsonl"
        write_lines(path, [json.dumps({"func": s, "target": 0}) for s in sources])
        res = ingest_jsonl(path)
        assert len(res.functions) + len(res.skipped) == res.total == len(sources)


class TestSynthetic:
    def test_counts_and_parseable(self):
        records = gen_synthetic(SyntheticSpec(count=200, positive_rate=0.5, seed=7))
        assert sum(r["target"] for r in records) == 100 and len(records) == 200
        for r in records:
            parse_source(r["func"])

    def test_rate_zero(self):
        assert all(r["target"] == 0 for r in gen_synthetic(SyntheticSpec(count=30, positive_rate=0.0)))

    def test_rate_rounding(self):
        assert sum(r["target"] for r in gen_synthetic(SyntheticSpec(count=5, positive_rate=0.5))) == 3

    def test_deterministic(self, tmp_path):
        spec = SyntheticSpec(count=40, seed=3)
        write_jsonl(gen_synthetic(spec), tmp_path / "a.jsonl")
        write_jsonl(gen_synthetic(spec), tmp_path / "b.jsonl")
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_seed_changes_surface(self):
        a = gen_synthetic(SyntheticSpec(count=10, seed=1))
        b = gen_synthetic(SyntheticSpec(count=10, seed=2))
        assert a != b

    @pytest.mark.parametrize("template", ["unchecked-division", "overflow-prone-decl"])
    def test_single_template(self, template):
        records = gen_synthetic(SyntheticSpec(count=20, templates=(template,), seed=5))
        markers = (" / ", " % ") if template == "unchecked-division" else (" * ",)
        for r in records:
            assert any(m in r["func"] for m in markers)

    def test_negatives_are_guarded(self):
        for r in gen_synthetic(SyntheticSpec(count=60, seed=11)):
            if r["target"] == 0:
                assert "if (" in r["func"]
                guard_lines = [line for line in r["func"].splitlines() if "!= 0" in line or "== 0" in line or "> 0" in line or "<= 0" in line]
                assert guard_lines

    @pytest.mark.parametrize(
        "kw", [dict(count=1), dict(positive_rate=1.5), dict(templates=("use-after-free",)), dict(templates=())]
    )
    def test_invalid_spec(self, kw):
        with pytest.raises(ValueError):
            SyntheticSpec(**kw)
