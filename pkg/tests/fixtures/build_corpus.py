"""Author the mock-archive fixture corpus and its expected-outcome manifest.

Run from the repository root:  python tests/fixtures/build_corpus.py

Deliberately imports nothing from ``edgarcorpus``: the manifest records
what was authored (bodies, digests, which files are broken), so it is an
oracle independent of the parsers and pipeline it is used to check.
"""

from __future__ import annotations

import binascii
import hashlib
import json
import shutil
from pathlib import Path

HERE = Path(__file__).resolve().parent
CORPUS = HERE / "corpus"
YEAR = 2018

PRESS_RELEASE = (
    b"<html><body><h1>PRESS RELEASE</h1>\n"
    b"<p>The company announced results for the quarter. Management does not solicit "
    b"proxies in connection with this release and no solicitation is being made.</p>\n"
    b"<p>Revenue grew 12%; operating income grew 9%.</p></body></html>"
)


def _pdf_bytes() -> bytes:
    lines = [b"%PDF-1.4", b"1 0 obj << /Type /Catalog /Pages 2 0 R >> endobj"]
    # binary payload so the uuencoding exercises every 6-bit value
    lines.append(bytes(range(256)) * 3)
    lines.append(b"trailer << /Root 1 0 R >>\n%%EOF")
    return b"\n".join(lines)


PDF = _pdf_bytes()


def html(title: str, *paragraphs: str) -> bytes:
    body = "".join(f"<p>{p}</p>\n" for p in paragraphs)
    return (f"<html><head><title>{title}</title><style>p {{margin:0}}</style></head>"
            f"<body><h2>{title}</h2>\n{body}</body></html>").encode()


def uuencode(data: bytes, name: str) -> bytes:
    lines = [f"begin 644 {name}".encode()]
    for i in range(0, len(data), 45):
        lines.append(binascii.b2a_uu(data[i:i + 45], backtick=True).rstrip(b"\n"))
    lines += [b"`", b"end"]
    return b"\n".join(lines)


# Each document: (type, sequence or None, filename, description, body, expected content type,
#                 uuencode?, expected extractable?)
def doc(dtype, seq, filename, description, body, ctype, uu=False, extractable=True):
    return dict(type=dtype, sequence=seq, filename=filename, description=description, body=body,
                content_type=ctype, uuencode=uu, extractable=extractable)


FILINGS = [
    dict(accession="0000320193-18-000007", cik=320193, name="APPLE INC", form="10-K", date="2018-01-05",
         sic="ELECTRONIC COMPUTERS [3571]", state="CA", quarter=1, documents=[
             doc("10-K", 1, "a10-k2017.htm", "10-K",
                 html("Annual Report", "Apple designs smartphones.",
                      "Our employees may not solicit customers of the company.",
                      "Risk factors include competition &amp; regulation."), "text/html"),
             doc("EX-10.1", 2, "ex10-1.htm", "Employment Agreement - CEO",
                 html("Employment Agreement", "The Executive shall not solicit any employee.",
                      "Non-solicitation covenants survive termination; solicitation includes indirect contact."),
                 "text/html"),
             doc("EX-99.1", 3, "ex99-1.htm", "PRESS RELEASE", PRESS_RELEASE, "text/html"),
         ]),
    dict(accession="0000320193-18-000010", cik=320193, name="APPLE INC", form="8-K", date="2018-02-01",
         sic="ELECTRONIC COMPUTERS [3571]", state="CA", quarter=1, documents=[
             doc("8-K", 1, "form8-k.htm", "CURRENT REPORT",
                 html("Current Report", "Item 2.02 Results of Operations."), "text/html"),
             doc("EX-99.1", 2, "pr.htm", "Press release dated February 1, 2018", PRESS_RELEASE, "text/html"),
         ]),
    dict(accession="0000789019-18-000003", cik=789019, name="MICROSOFT CORP", form="10-K", date="2018-01-10",
         sic="SERVICES-PREPACKAGED SOFTWARE [7372]", state="WA", quarter=1, documents=[
             doc("10-K", 1, "msft-10k.htm", "ANNUAL REPORT",
                 html("Form 10-K", "Cloud revenue increased.", "We solicit feedback from customers."),
                 "text/html"),
             doc("GRAPHIC", 2, "chart.pdf", "Revenue chart", PDF, "application/pdf", uu=True,
                 extractable=False),
         ]),
    dict(accession="0000789019-18-000012", cik=789019, name="MICROSOFT CORP", form="10-Q", date="2018-02-20",
         sic="SERVICES-PREPACKAGED SOFTWARE [7372]", state="WA", quarter=1, documents=[
             doc("10-Q", 1, "msft-10q.txt", "QUARTERLY REPORT",
                 b"QUARTERLY REPORT\r\nPART I. FINANCIAL INFORMATION\r\nRevenue was $28.9 billion.\r\n",
                 "text/plain"),
             doc("EX-10.2", 2, "ex10-2.htm", "EMPLOYMENT AGREEMENT",
                 b"This employment agreement is made between the Company and the Executive. "
                 b"The Executive agrees not to SOLICIT clients. Solicit, solicit, solicitation.",
                 "text/html"),
         ]),
    dict(accession="0001018724-18-000004", cik=1018724, name="AMAZON COM INC", form="10-K", date="2018-02-02",
         sic="RETAIL-CATALOG & MAIL-ORDER HOUSES [5961]", state="DE", quarter=1, documents=[
             doc("10-K", 1, "amzn-10k.htm", "10-K",
                 html("Annual Report", "Net sales increased 31%.", "Amazon Web Services grew."), "text/html"),
             doc("EX-99.1", 2, "ex99.htm", "Press Release", PRESS_RELEASE, "text/html"),
         ]),
    dict(accession="0001018724-18-000009", cik=1018724, name="AMAZON COM INC", form="8-K", date="2018-03-01",
         sic="RETAIL-CATALOG & MAIL-ORDER HOUSES [5961]", state="DE", quarter=1,
         also_listed_under=[(1465112, "AMAZON SUBSIDIARY LLC")], documents=[
             doc("8-K", 1, "amzn-8k.htm", "CURRENT REPORT",
                 html("Current Report", "Item 5.02 Departure of Directors."), "text/html"),
         ]),
    dict(accession="0001652044-18-000002", cik=1652044, name="Alphabet Inc.", form="10-Q", date="2018-01-25",
         sic="SERVICES-COMPUTER PROGRAMMING, DATA PROCESSING, ETC. [7370]", state="DE", quarter=1,
         header="IMS-HEADER", documents=[
             doc("10-Q", 1, "goog10q.txt", "10-Q",
                 b"ALPHABET INC.\nQUARTERLY REPORT\nAdvertising revenues increased.\n", "text/plain"),
         ]),
    dict(accession="0001652044-18-000006", cik=1652044, name="Alphabet Inc.", form="8-K", date="2018-03-15",
         sic="SERVICES-COMPUTER PROGRAMMING, DATA PROCESSING, ETC. [7370]", state="DE", quarter=1,
         documents=[
             doc("8-K", 1, "goog8k.htm", "8-K",
                 html("Current Report", "Item 5.02 Compensatory arrangements."), "text/html"),
             # no SEQUENCE tag: the parser assigns position 2
             doc("EX-10.3", None, "ex10-3.htm", "Executive employment agreement amendment",
                 html("Amendment", "The non-solicit period is extended to 24 months."), "text/html"),
         ]),
    dict(accession="0001000045-18-000003", cik=1000045, name="NICHOLAS FINANCIAL INC", form="10-Q",
         date="2018-02-14", sic="SHORT-TERM BUSINESS CREDIT INSTITUTIONS [6153]", state="FL", quarter=1,
         documents=[
             doc("10-Q", 1, "nick-10q.htm", "10-Q",
                 html("Quarterly Report", "Finance receivables declined."), "text/html"),
             doc("EX-31.1", 2, "ex31.txt", "CERTIFICATION",
                 b"I certify that this report does not contain untrue statements.", "text/plain"),
         ]),
    dict(accession="0001000045-18-000008", cik=1000045, name="NICHOLAS FINANCIAL INC", form="8-K",
         date="2018-03-20", sic="SHORT-TERM BUSINESS CREDIT INSTITUTIONS [6153]", state="FL", quarter=1,
         documents=[
             doc("8-K", 1, "nick-8k.htm", "8-K", html("Current Report", "Item 8.01 Other events."),
                 "text/html"),
             doc("EX-99.1", 2, "nick-pr.htm", "press release",
                 html("News", "Nicholas Financial reports results; no solicitation intended."), "text/html"),
         ]),
    dict(accession="0001090012-18-000001", cik=1090012, name="DEVON ENERGY CORP", form="10-K",
         date="2018-02-21", sic="CRUDE PETROLEUM & NATURAL GAS [1311]", state="DE", quarter=1,
         malformed="no_header", documents=[
             doc("10-K", 1, "dvn-10k.htm", "10-K", html("Annual Report", "Production grew."), "text/html"),
         ]),
    dict(accession="0000001800-18-000005", cik=1800, name="ABBOTT LABORATORIES", form="8-K", date="2018-03-28",
         sic="PHARMACEUTICAL PREPARATIONS [2834]", state="IL", quarter=1, missing=True, documents=[]),
    dict(accession="0000320193-18-000070", cik=320193, name="APPLE INC", form="10-Q", date="2018-05-02",
         sic="ELECTRONIC COMPUTERS [3571]", state="CA", quarter=2, documents=[
             doc("10-Q", 1, "a10-q.htm", "10-Q", html("Quarterly Report", "iPhone revenue rose."), "text/html"),
         ]),
    dict(accession="0000789019-18-000100", cik=789019, name="MICROSOFT CORP", form="10-K", date="2018-08-03",
         sic="SERVICES-PREPACKAGED SOFTWARE [7372]", state="WA", quarter=3, documents=[
             doc("10-K", 1, "msft-10k-2018.htm", "10-K",
                 html("Annual Report", "Fiscal year 2018 results.", "Press release attached."), "text/html"),
             doc("EX-99.1", 2, "msft-pr.htm", "PRESS RELEASE", PRESS_RELEASE, "text/html"),
         ]),
]

# quarter -> (index type -> "ok" | "corrupt")
CORRUPT_INDEXES = {(3, "company")}
MALFORMED_FORM_IDX_LINE = 1  # QTR1 form.idx carries one row with its date blanked


def file_name(cik: int, accession: str) -> str:
    return f"edgar/data/{cik}/{accession}.txt"


def index_rows(quarter: int):
    rows = []
    for f in FILINGS:
        if f["quarter"] != quarter:
            continue
        rows.append((f["cik"], f["name"], f["form"], f["date"], file_name(f["cik"], f["accession"])))
        for cik, name in f.get("also_listed_under", []):
            rows.append((cik, name, f["form"], f["date"], file_name(cik, f["accession"])))
    return sorted(rows, key=lambda r: (r[0], r[3], r[4]))


PREAMBLE = [
    "Description:           {desc}",
    "Last Data Received:    {last}",
    "Comments:              webmaster@sec.gov",
    "Anonymous FTP:         ftp://ftp.sec.gov/edgar/",
    "Cloud HTTP:            https://www.sec.gov/Archives/",
    " ",
    " ",
    " ",
]
LAST = {1: "March 31, 2018", 2: "June 30, 2018", 3: "September 30, 2018", 4: "December 31, 2018"}


def pipe_index(rows, desc, quarter) -> bytes:
    lines = [p.format(desc=desc, last=LAST[quarter]) for p in PREAMBLE]
    lines.append("CIK|Company Name|Form Type|Date Filed|Filename")
    lines.append("-" * 80)
    lines += ["|".join(str(v) for v in r) for r in rows]
    return ("\n".join(lines) + "\n").encode()


def fixed_index(rows, desc, quarter, order, blank_date_on=None) -> bytes:
    widths = {"Company Name": 62, "Form Type": 12, "CIK": 12, "Date Filed": 12, "File Name": 0}
    pick = {"CIK": 0, "Company Name": 1, "Form Type": 2, "Date Filed": 3, "File Name": 4}
    lines = [p.format(desc=desc, last=LAST[quarter]) for p in PREAMBLE]
    lines.append("".join(col.ljust(widths[col]) if widths[col] else col for col in order))
    lines.append("-" * 140)
    for i, r in enumerate(rows):
        values = list(r)
        if blank_date_on is not None and i == blank_date_on:
            values[3] = ""
        lines.append("".join(str(values[pick[c]]).ljust(widths[c]) if widths[c] else str(values[pick[c]])
                             for c in order).rstrip())
    return ("\n".join(lines) + "\n").encode()


def filing_text(f) -> bytes:
    acc = f["accession"]
    tag = f.get("header", "SEC-HEADER")
    date = f["date"].replace("-", "")
    parts = [f"<SEC-DOCUMENT>{acc}.txt : {date}".encode()]
    if f.get("malformed") != "no_header":
        header = [
            f"<{tag}>{acc}.hdr.sgml : {date}",
            f"<ACCEPTANCE-DATETIME>{date}160512",
            f"ACCESSION NUMBER:\t\t{acc}",
            f"CONFORMED SUBMISSION TYPE:\t{f['form']}",
            f"PUBLIC DOCUMENT COUNT:\t\t{len(f['documents'])}",
            f"CONFORMED PERIOD OF REPORT:\t{date}",
            f"FILED AS OF DATE:\t\t{date}",
            f"DATE AS OF CHANGE:\t\t{date}",
            "",
            "FILER:",
            "",
            "\tCOMPANY DATA:\t",
            f"\t\tCOMPANY CONFORMED NAME:\t\t\t{f['name']}",
            f"\t\tCENTRAL INDEX KEY:\t\t\t{f['cik']:010d}",
            f"\t\tSTANDARD INDUSTRIAL CLASSIFICATION:\t{f['sic']}",
            f"\t\tSTATE OF INCORPORATION:\t\t\t{f['state']}",
            f"</{tag}>",
        ]
        parts.append("\n".join(header).encode())
    for d in f["documents"]:
        meta = [b"<DOCUMENT>", f"<TYPE>{d['type']}".encode()]
        if d["sequence"] is not None:
            meta.append(f"<SEQUENCE>{d['sequence']}".encode())
        meta.append(f"<FILENAME>{d['filename']}".encode())
        meta.append(f"<DESCRIPTION>{d['description']}".encode())
        body = d["body"]
        if d["uuencode"]:
            body = b"<PDF>\n" + uuencode(body, d["filename"]) + b"\n</PDF>"
        parts.append(b"\n".join(meta) + b"\n<TEXT>\n" + body + b"\n</TEXT>\n</DOCUMENT>")
    parts.append(b"</SEC-DOCUMENT>\n")
    return b"\n".join(parts)


def company_json(cik, name, state, sic) -> bytes:
    code = sic.rsplit("[", 1)[1].rstrip("]")
    doc = {"cik": str(cik), "entityType": "operating", "sic": code,
           "sicDescription": sic.rsplit("[", 1)[0].strip(), "name": name,
           "stateOfIncorporation": state, "tickers": [], "filings": {"recent": {}}}
    return (json.dumps(doc, indent=2, sort_keys=True) + "\n").encode()


def sha1(data: bytes) -> str:
    return hashlib.sha1(data).hexdigest()


def build(root: Path = CORPUS) -> dict:
    if root.exists():
        shutil.rmtree(root)
    files = {}
    index_expect = {}
    for q in (1, 2, 3, 4):
        rows = index_rows(q)
        base = f"edgar/full-index/{YEAR}/QTR{q}"
        xbrl_rows = [r for r in rows if r[2] in ("10-K", "10-Q")]
        files[f"{base}/master.idx"] = pipe_index(rows, "Master Index of EDGAR Dissemination Feed", q)
        files[f"{base}/xbrl.idx"] = pipe_index(xbrl_rows, "XBRL Index of EDGAR Dissemination Feed", q)
        blank = MALFORMED_FORM_IDX_LINE if q == 1 else None
        by_form = sorted(rows, key=lambda r: (r[2], r[1], r[4]))
        files[f"{base}/form.idx"] = fixed_index(
            by_form, "Daily Index of EDGAR Dissemination Feed by Form Type", q,
            ["Form Type", "Company Name", "CIK", "Date Filed", "File Name"], blank_date_on=blank)
        by_company = sorted(rows, key=lambda r: (r[1], r[2], r[4]))
        files[f"{base}/company.idx"] = fixed_index(
            by_company, "Daily Index of EDGAR Dissemination Feed by Company Name", q,
            ["Company Name", "Form Type", "CIK", "Date Filed", "File Name"])
        counts = {"master": len(rows), "xbrl": len(xbrl_rows),
                  "form": len(rows) - (1 if blank is not None else 0), "company": len(rows)}
        for itype in ("company", "form", "master", "xbrl"):
            path = f"{base}/{itype}.idx"
            if (q, itype) in CORRUPT_INDEXES:
                files[path] = b"\x1f\x8b\x08\x00" + b"this is not a deflate stream" * 4
                index_expect[path] = {"year": YEAR, "quarter": q, "index_type": itype,
                                      "is_processed": False, "is_error": True, "row_count": None}
            else:
                index_expect[path] = {"year": YEAR, "quarter": q, "index_type": itype,
                                      "is_processed": True, "is_error": False, "row_count": counts[itype]}

    for f in FILINGS:
        if not f.get("missing"):
            files[file_name(f["cik"], f["accession"])] = filing_text(f)

    companies = {}
    for f in FILINGS:
        companies.setdefault(f["cik"], (f["name"], f["state"], f["sic"]))
        for cik, name in f.get("also_listed_under", []):
            companies.setdefault(cik, (name, "DE", "RETAIL-CATALOG & MAIL-ORDER HOUSES [5961]"))
    no_metadata = {1800}
    for cik, (name, state, sic) in companies.items():
        if cik not in no_metadata:
            files[f"submissions/CIK{cik:010d}.json"] = company_json(cik, name, state, sic)

    for rel, data in files.items():
        target = root / rel
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(data)

    filings_expect = {}
    for f in FILINGS:
        path = file_name(f["cik"], f["accession"])
        ok = not f.get("missing") and f.get("malformed") is None
        docs = []
        for position, d in enumerate(f["documents"], start=1):
            docs.append({"sequence": d["sequence"] or position, "doc_type": d["type"],
                         "filename": d["filename"], "description": d["description"],
                         "sha1": sha1(d["body"]), "content_type": d["content_type"],
                         "was_uuencoded": d["uuencode"], "extractable": d["extractable"]})
        first_seen_ciks = [f["cik"]] + [c for c, _ in f.get("also_listed_under", [])]
        filings_expect[f["accession"]] = {
            "cik": f["cik"], "form_type": f["form"], "date_filed": f["date"], "quarter": f["quarter"],
            "edgar_path": path, "listed_ciks": first_seen_ciks,
            "is_processed": ok, "is_error": not ok,
            "raw_fetched": not f.get("missing"),
            "document_count": len(docs) if ok else None,
            "documents": docs if ok else [],
        }

    manifest = {
        "year": YEAR,
        "index_files": index_expect,
        "filings": filings_expect,
        "companies": sorted(companies),
        "companies_without_metadata": sorted(no_metadata),
        "company_metadata": {str(c): {"name": n, "state": s, "sic": sic.rsplit("[", 1)[1].rstrip("]")}
                             for c, (n, s, sic) in sorted(companies.items()) if c not in no_metadata},
        "press_release_sha1": sha1(PRESS_RELEASE),
        "pdf_sha1": sha1(PDF),
    }
    (HERE / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


MINIMAL = dict(accession="0000000000-18-000001", cik=320193, name="EXAMPLE CO", form="10-K",
               date="2018-01-05", sic="ELECTRONIC COMPUTERS [3571]", state="CA", quarter=1, documents=[
                   doc("10-K", 1, "example.htm", "ANNUAL REPORT",
                       b"<html><body><p>Hello&nbsp;world</p><script>x()</script></body></html>", "text/html"),
                   doc("GRAPHIC", 2, "a.pdf", "chart", PDF, "application/pdf", uu=True, extractable=False),
               ])


def build_small(root: Path = HERE) -> None:
    """Stand-alone fixtures for the parser examples, each with committed expected values."""
    rows = index_rows(1)[:12]
    (root / "index").mkdir(exist_ok=True)
    (root / "index" / "master_12.idx").write_bytes(pipe_index(rows, "Master Index of EDGAR Dissemination Feed", 1))
    order = ["CIK", "Company Name", "Form Type", "Date Filed", "File Name"]
    (root / "index" / "fixed_12.idx").write_bytes(
        fixed_index(rows, "Daily Index of EDGAR Dissemination Feed", 1, order))
    expected_rows = [{"cik": r[0], "company_name": r[1], "form_type": r[2], "date_filed": r[3], "file_name": r[4]}
                     for r in rows]
    (root / "index" / "expected_12.json").write_text(json.dumps(expected_rows, indent=2) + "\n")

    (root / "filing").mkdir(exist_ok=True)
    (root / "filing" / "minimal.txt").write_bytes(filing_text(MINIMAL))
    expected = {
        "accession_number": MINIMAL["accession"], "cik": MINIMAL["cik"], "company_name": MINIMAL["name"],
        "form_type": MINIMAL["form"], "sic": "3571", "date_filed": MINIMAL["date"],
        "documents": [{"sequence": d["sequence"], "doc_type": d["type"], "filename": d["filename"],
                       "description": d["description"], "content_type": d["content_type"],
                       "was_uuencoded": d["uuencode"], "sha1": sha1(d["body"]), "size": len(d["body"])}
                      for d in MINIMAL["documents"]],
    }
    (root / "filing" / "minimal.expected.json").write_text(json.dumps(expected, indent=2) + "\n")


if __name__ == "__main__":
    build()
    build_small()
    print(f"wrote {CORPUS}, {HERE / 'manifest.json'} and the stand-alone parser fixtures")
