#!/usr/bin/env python3
"""Reference computation of the expected report for the end-to-end fixture.

Run from this directory: python3 oracle.py
Writes expected/report.txt and expected/report.csv.
"""

import csv
import json
import math
import os
from decimal import Decimal, ROUND_HALF_UP

HERE = os.path.dirname(os.path.abspath(__file__))


def rust_float(x):
    """Shortest round-trip decimal without exponent, as Rust's Display prints f64."""
    s = format(Decimal(repr(x)), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    if s == "-0":
        s = "0"
    return s


def one_decimal(v):
    r = Decimal(v * 10).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    r = float(r) / 10
    if r == 0:
        r = 0.0
    return "%.1f" % r


def read_embeddings(path):
    out = {}
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    for row in rows[1:]:
        out[row[0]] = [float(x) for x in row[2:]]
    return out


def read_manifest(path):
    refs = {}
    ref_order = []
    probes = []
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    for r in rows:
        if r["kind"] == "bonafide":
            ident = ("bf", r["subject"])
        else:
            ident = ("morph", (r["contributor_a"], r["contributor_b"]))
        if r["role"] == "reference":
            if r["id"] not in refs:
                refs[r["id"]] = {"ident": ident, "paths": []}
                ref_order.append(r["id"])
            refs[r["id"]]["paths"].append(r["path"])
        else:
            probes.append({"id": r["id"], "ident": ident, "path": r["path"]})
    return refs, probes


def mean_vector(vectors):
    acc = [0.0] * len(vectors[0])
    for v in vectors:
        for i in range(len(v)):
            acc[i] = acc[i] + v[i]
    return [a / len(vectors) for a in acc]


def cosine(u, v):
    dot = 0.0
    nu = 0.0
    nv = 0.0
    for i in range(len(u)):
        dot += u[i] * v[i]
        nu += u[i] * u[i]
        nv += v[i] * v[i]
    c = dot / (math.sqrt(nu) * math.sqrt(nv))
    return max(-1.0, min(1.0, c))


def score_scenario(manifest_path, emb):
    refs, probes = read_manifest(manifest_path)
    genuine, zero_effort = [], []
    morph_scores = {}
    for mid, m in refs.items():
        model = mean_vector([emb[p] for p in m["paths"]])
        for p in probes:
            s = cosine(model, emb[p["path"]])
            a, b = m["ident"], p["ident"]
            if a[0] == "bf" and b[0] == "bf":
                (genuine if a[1] == b[1] else zero_effort).append(s)
            elif a[0] == "morph" and b[0] == "bf":
                if b[1] in a[1]:
                    morph_scores.setdefault(mid, {}).setdefault(b[1], []).append(s)
            elif a[0] == "bf" and b[0] == "morph":
                if a[1] in b[1]:
                    morph_scores.setdefault(p["id"], {}).setdefault(a[1], []).append(s)
    # Best attempt per contributor, then the weaker contributor decides.
    morph_min = []
    for mid, per_subject in morph_scores.items():
        assert len(per_subject) == 2
        morph_min.append(min(max(v) for v in per_subject.values()))
    return genuine, zero_effort, morph_min


def threshold_by_sweep(zero_effort, target):
    candidates = sorted(set(zero_effort)) + [math.nextafter(max(zero_effort), math.inf)]
    best = None
    for t in candidates:
        accepted = 0
        for s in zero_effort:
            if s >= t:
                accepted += 1
        if accepted / len(zero_effort) <= target and (best is None or t < best):
            best = t
    return best


def direction_result(manifest, emb, target):
    genuine, zero_effort, morph_min = score_scenario(manifest, emb)
    t = threshold_by_sweep(zero_effort, target)
    accepted_morphs = sum(1 for s in morph_min if s >= t)
    false_matches = sum(1 for s in zero_effort if s >= t)
    false_rejects = sum(1 for s in genuine if s < t)
    return {
        "threshold": t,
        "mmpmr": 100.0 * (accepted_morphs / len(morph_min)),
        "fmr": 100.0 * (false_matches / len(zero_effort)),
        "fnmr": 100.0 * (false_rejects / len(genuine)),
    }


def main():
    with open(os.path.join(HERE, "config.json")) as f:
        cfg = json.load(f)
    target = cfg["target_fmr"]
    cells = []
    for e in cfg["evaluations"]:
        emb = read_embeddings(os.path.join(HERE, e["embeddings"]))
        cell = {"dataset": e["dataset"], "frs": e["frs"], "tool": e["tool"]}
        for side in ("references", "probes"):
            cell[side] = direction_result(os.path.join(HERE, e[side]), emb, target) if side in e else None
        cells.append(cell)

    def side_text(d):
        return "N/A" if d is None else one_decimal(d["mmpmr"])

    rows, tools = [], []
    for c in cells:
        if (c["dataset"], c["frs"]) not in rows:
            rows.append((c["dataset"], c["frs"]))
        if c["tool"] not in tools:
            tools.append(c["tool"])
    table = [["Dataset", "FRS"] + tools]
    for ds, frs in rows:
        line = [ds, frs]
        for tool in tools:
            match = [c for c in cells if (c["dataset"], c["frs"], c["tool"]) == (ds, frs, tool)]
            if match:
                line.append(side_text(match[0]["references"]) + " | " + side_text(match[0]["probes"]))
            else:
                line.append("N/A")
        table.append(line)
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    text = "MMPMR @ FMR = %s%% (morphs as references | morphs as probes) [%%]\n" % rust_float(100 * target)
    for r in table:
        text += "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(r)).rstrip() + "\n"

    os.makedirs(os.path.join(HERE, "expected"), exist_ok=True)
    with open(os.path.join(HERE, "expected", "report.txt"), "w", newline="") as f:
        f.write(text)

    header = ["dataset", "frs", "tool", "mmpmr_ref", "mmpmr_probe", "threshold_ref", "threshold_probe",
              "fmr_ref", "fmr_probe", "fnmr_ref", "fnmr_probe"]
    lines = [",".join(header)]
    for c in cells:
        def field(side, key):
            d = c[side]
            return "" if d is None else rust_float(d[key])
        fields = [c["dataset"], c["frs"], c["tool"]]
        for key in ("mmpmr", "threshold", "fmr", "fnmr"):
            fields += [field("references", key), field("probes", key)]
        lines.append(",".join(fields))
    with open(os.path.join(HERE, "expected", "report.csv"), "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
