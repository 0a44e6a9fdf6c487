#!/usr/bin/env python3
"""Run the whole pipeline on the bundled fixture corpus with mock backends.

Ingests fixtures/corpus3, builds an index, extracts every document with the
agent and zero-shot strategies, evaluates both runs against the bundled gold
CSV, compares them, and prints the analytic report for one document.
Everything lands under ./demo_output (or the directory given as argv[1]).
"""

import sys
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(REPO / "src"))

from ews_tracker.cli import main  # noqa: E402

CORPUS = REPO / "fixtures" / "corpus3"
SCRIPTS = CORPUS / "scripts"
STEMS = ("proj-alpha", "proj-beta", "proj-gamma")


def run(*args):
    args = [str(a) for a in args]
    print(f"\n$ ews-tracker {' '.join(args)}")
    code = main(args)
    if code != 0:
        sys.exit(f"command failed with exit {code}")


def demo(base: Path):
    ingested = base / "ingested"
    index_dir = base / "index"
    run("ingest", CORPUS, ingested)
    run("index", ingested, index_dir, "--force", "--script", SCRIPTS / "index.json")

    for method in ("agent", "zero"):
        out = base / f"run-{method}"
        for stem in STEMS:
            run("extract", index_dir, f"{stem}.pdf", "--method", method,
                "--out", out, "--script", SCRIPTS / f"{stem}__{method}.json")
        run("evaluate", out, CORPUS / "gold.csv", "--index", index_dir)

    run("compare", base / "run-agent", base / "run-zero",
        "--out", base / "comparison.json")
    run("report", base / "run-agent" / "results" / "proj-alpha.json",
        "--out", base / "run-agent")


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("demo_output")
    target.mkdir(parents=True, exist_ok=True)
    demo(target)
    print(f"\ndemo outputs under {target.resolve()}")
