#!/usr/bin/env python3
"""Regenerate the test PDFs under pdf_ingest/fixtures/.

sample.pdf: one page of public-domain prose (US Constitution preamble plus
plain sentences). tabular.pdf: a page with an aligned two-column money table.
corrupt.pdf: deliberately not a PDF.
"""

from pathlib import Path

from reportlab.lib.pagesizes import A4
from reportlab.pdfgen import canvas

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

PREAMBLE = [
    "We the People of the United States, in Order to form a more perfect",
    "Union, establish Justice, insure domestic Tranquility, provide for the",
    "common defence, promote the general Welfare, and secure the Blessings",
    "of Liberty to ourselves and our Posterity, do ordain and establish this",
    "Constitution for the United States of America.",
    "",
    "This fixture page exists to exercise the PDF conversion adapter. It",
    "contains plain public-domain text only, set in a single column.",
]


def make_sample():
    path = FIXTURES / "sample.pdf"
    c = canvas.Canvas(str(path), pagesize=A4)
    c.setFont("Helvetica", 12)
    y = 780
    for line in PREAMBLE:
        if line:
            c.drawString(72, y, line)
        y -= 18
    c.save()


def make_tabular():
    path = FIXTURES / "tabular.pdf"
    c = canvas.Canvas(str(path), pagesize=A4)
    c.setFont("Helvetica", 12)
    c.drawString(72, 780, "Component budget annex")
    rows = [
        ("activity", "amount"),
        ("observation network", "1,200,000"),
        ("training campaign", "250,000"),
        ("coordination unit", "150,000"),
    ]
    y = 744
    for left, right in rows:
        c.drawString(72, y, left)
        c.drawString(300, y, right)
        y -= 20
    c.save()


def make_corrupt():
    (FIXTURES / "corrupt.pdf").write_bytes(b"this is not a pdf at all")


if __name__ == "__main__":
    FIXTURES.mkdir(parents=True, exist_ok=True)
    make_sample()
    make_tabular()
    make_corrupt()
    print(f"fixtures written under {FIXTURES}")
