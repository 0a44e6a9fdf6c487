import json
import os
import stat
from pathlib import Path

import pytest

from ews_tracker.cli import main

REPO = Path(__file__).resolve().parent.parent
CORPUS = REPO / "fixtures" / "corpus3"
SCRIPTS = CORPUS / "scripts"


def run_cli(*args):
    try:
        return main([str(a) for a in args])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.fixture
def ingested(tmp_path):
    out = tmp_path / "ingested"
    assert run_cli("ingest", CORPUS, out) == 0
    return out


@pytest.fixture
def indexed(tmp_path, ingested):
    index_dir = tmp_path / "index"
    code = run_cli("index", ingested, index_dir, "--script", SCRIPTS / "index.json")
    assert code == 0
    return index_dir


def test_ingest_writes_manifest(ingested):
    manifest = json.loads((ingested / "corpus_manifest.json").read_text())
    assert len(manifest["documents"]) == 3
    names = {d["file_name"] for d in manifest["documents"]}
    assert names == {"proj-alpha.pdf", "proj-beta.pdf", "proj-gamma.pdf"}


def test_ingest_bad_document_names_file(tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "broken.json").write_text('{"file_name": "b.pdf", "elements": [{"kind": "table", "page": 1, "markdown": "| x |"}]}')
    out = tmp_path / "out"
    assert run_cli("ingest", bad, out) == 1


def test_ingest_empty_dir_warns(tmp_path, capsys):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run_cli("ingest", empty, tmp_path / "out") == 0
    assert "EmptyCorpus" in capsys.readouterr().err


def test_ingest_pdf_without_adapter(tmp_path, monkeypatch):
    monkeypatch.setenv("PATH", str(tmp_path))  # no adapter findable
    src = tmp_path / "pdfs"
    src.mkdir()
    (src / "doc.pdf").write_bytes(b"%PDF-1.4 fake")
    assert run_cli("ingest", src, tmp_path / "out") == 1


def test_ingest_pdf_with_fake_adapter(tmp_path, monkeypatch):
    bindir = tmp_path / "bin"
    bindir.mkdir()
    out_dir = tmp_path / "out"
    adapter = bindir / "ews-pdf-ingest"
    doc = {"file_name": "conv.pdf", "elements": [
        {"kind": "text", "page": 1, "markdown": "converted text"}]}
    adapter.write_text(
        "#!/bin/sh\n"
        f"cat > /dev/null 2>&1\n"
        f"printf '%s' '{json.dumps(doc)}' > \"$4/conv.json\"\n"
        "echo '{\"converted\": 1}'\n"
    )
    adapter.chmod(adapter.stat().st_mode | stat.S_IEXEC)
    monkeypatch.setenv("PATH", f"{bindir}:{os.environ['PATH']}")
    src = tmp_path / "pdfs"
    src.mkdir()
    (src / "doc.pdf").write_bytes(b"%PDF-1.4 fake")
    assert run_cli("ingest", src, out_dir) == 0
    manifest = json.loads((out_dir / "corpus_manifest.json").read_text())
    assert manifest["documents"][0]["file_name"] == "conv.pdf"


def test_index_missing_corpus_is_usage_error(tmp_path):
    assert run_cli("index", tmp_path / "nope", tmp_path / "idx") == 2


def test_index_existing_dir_requires_force(tmp_path, ingested):
    index_dir = tmp_path / "index"
    assert run_cli("index", ingested, index_dir, "--script", SCRIPTS / "index.json") == 0
    assert run_cli("index", ingested, index_dir, "--script", SCRIPTS / "index.json") == 2
    assert run_cli("index", ingested, index_dir, "--force",
                   "--script", SCRIPTS / "index.json") == 0


def test_index_deterministic_across_runs(tmp_path, ingested):
    a, b = tmp_path / "idx-a", tmp_path / "idx-b"
    for target in (a, b):
        assert run_cli("index", ingested, target, "--script", SCRIPTS / "index.json") == 0
    files_a = sorted(p.name for p in a.iterdir() if p.name != "run_manifest.json")
    files_b = sorted(p.name for p in b.iterdir() if p.name != "run_manifest.json")
    assert files_a == files_b
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


@pytest.mark.parametrize("method", ["zero", "few", "clf", "cot", "agent"])
def test_extract_each_method_schema_valid(tmp_path, indexed, method):
    out = tmp_path / f"run-{method}"
    code = run_cli("extract", indexed, "proj-beta.pdf", "--method", method,
                   "--out", out, "--script", SCRIPTS / f"proj-beta__{method}.json")
    assert code == 0
    payload = json.loads((out / "results" / "proj-beta.json").read_text())
    assert payload["method"] in ("zero_shot", "few_shot", "classifier", "cot", "agent")
    assert payload["pillar_allocations"]["P3"]["amount"] == 600000.0
    trace = json.loads((out / "traces" / "proj-beta.trace.json").read_text())
    assert trace["file_name"] == "proj-beta.pdf"


def test_extract_unknown_method_usage_error(tmp_path, indexed):
    assert run_cli("extract", indexed, "proj-beta.pdf", "--method", "wild",
                   "--out", tmp_path / "o") == 2


def test_extract_llm_failure_exits_3_with_trace(tmp_path, indexed):
    script = tmp_path / "fail.json"
    script.write_text(json.dumps({"tags": {"plan": [{"!error": "llm down"}]}}))
    out = tmp_path / "run"
    code = run_cli("extract", indexed, "proj-beta.pdf", "--method", "agent",
                   "--out", out, "--script", script)
    assert code == 3
    assert (out / "traces" / "proj-beta.trace.json").exists()


def test_extract_missing_index_is_data_error(tmp_path):
    assert run_cli("extract", tmp_path / "noidx", "f.pdf", "--method", "zero",
                   "--out", tmp_path / "o") == 1


def _extract_all(tmp_path, indexed, method):
    out = tmp_path / f"run-{method}"
    for stem in ("proj-alpha", "proj-beta", "proj-gamma"):
        code = run_cli("extract", indexed, f"{stem}.pdf", "--method", method,
                       "--out", out, "--script", SCRIPTS / f"{stem}__{method}.json")
        assert code == 0
    return out


def test_evaluate_agent_run_perfect_amounts(tmp_path, indexed):
    run_dir = _extract_all(tmp_path, indexed, "agent")
    code = run_cli("evaluate", run_dir, CORPUS / "gold.csv", "--index", indexed)
    assert code == 0
    metrics = json.loads((run_dir / "metrics" / "metrics.json").read_text())
    assert metrics["amounts"]["accuracy"] == 1.0
    assert metrics["totals"]["fraction_within_tolerance"] == 1.0
    assert metrics["evidence"]["recall"] == 1.0


def test_evaluate_missing_gold_column(tmp_path, indexed):
    run_dir = _extract_all(tmp_path, indexed, "zero")
    bad_gold = tmp_path / "bad.csv"
    lines = (CORPUS / "gold.csv").read_text().splitlines()
    bad_gold.write_text(lines[0].replace("Page Number", "Page") + "\n" + "\n".join(lines[1:]))
    assert run_cli("evaluate", run_dir, bad_gold) == 1


def test_compare_two_runs_and_single_run_usage(tmp_path, indexed):
    run_a = _extract_all(tmp_path, indexed, "agent")
    run_b = _extract_all(tmp_path, indexed, "zero")
    for run in (run_a, run_b):
        assert run_cli("evaluate", run, CORPUS / "gold.csv") == 0
    out = tmp_path / "cmp.json"
    assert run_cli("compare", run_a, run_b, "--out", out) == 0
    table = json.loads(out.read_text())
    assert set(table["rows"]) == {"run-agent", "run-zero"}
    assert run_cli("compare", run_a) == 2


def test_report_command(tmp_path, indexed, capsys):
    run_dir = _extract_all(tmp_path, indexed, "agent")
    result_json = run_dir / "results" / "proj-gamma.json"
    assert run_cli("report", result_json, "--out", tmp_path / "rep") == 0
    text = capsys.readouterr().out
    assert "2,350,000 USD" in text
    assert "85.1%" in text  # 2,000,000 / 2,350,000 largest-remainder
    assert (tmp_path / "rep" / "reports" / "proj-gamma.txt").exists()


def test_report_missing_file_usage(tmp_path):
    assert run_cli("report", tmp_path / "nope.json") == 2


def test_evaluate_external_run_through_same_schema(tmp_path):
    # black-box assistant outputs arrive as schema-valid result JSON with
    # method "external" and compare through the same machinery
    import jsonschema

    from ews_tracker.extraction import result_schema

    run_dir = tmp_path / "external-run" / "results"
    run_dir.mkdir(parents=True)
    amounts = {
        "proj-alpha": {"P1": 400000.0, "P2": 1200000.0, "XP": 150000.0},
        "proj-beta": {"P3": 600000.0, "P4": 250000.0},
        "proj-gamma": {"P2": 2000000.0, "P4": 350000.0},
    }
    for stem, per_pillar in amounts.items():
        payload = {
            "file_name": f"{stem}.pdf", "method": "external", "currency": "USD",
            "total_ews_budget": sum(per_pillar.values()),
            "pillar_allocations": {
                p: {"amount": per_pillar.get(p, 0.0),
                    "evidence": [{"chunk_id": f"{stem}.pdf#1#table", "quote": "x", "page": 2}]
                    if per_pillar.get(p) else []}
                for p in ("P1", "P2", "P3", "P4", "XP")
            },
            "warnings": [],
        }
        jsonschema.validate(payload, result_schema())
        (run_dir / f"{stem}.json").write_text(json.dumps(payload))
    assert run_cli("evaluate", run_dir.parent, CORPUS / "gold.csv") == 0
    metrics = json.loads((run_dir.parent / "metrics" / "metrics.json").read_text())
    assert metrics["amounts"]["accuracy"] == 1.0


def test_ingest_in_place_directory(tmp_path):
    # out_dir == in_dir: documents validate without being rewritten over themselves
    import shutil

    work = tmp_path / "inplace"
    shutil.copytree(CORPUS, work, ignore=shutil.ignore_patterns("scripts", "gold.csv"))
    assert run_cli("ingest", work, work) == 0
    manifest = json.loads((work / "corpus_manifest.json").read_text())
    assert len(manifest["documents"]) == 3
