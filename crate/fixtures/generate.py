"""Regenerates the JSON/CSV fixtures in this directory.

    python3 fixtures/generate.py
"""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))
MI = 5280.0

# IEEE 37-node test feeder, underground cable configurations, ohm/mile (R, X).
CONFIGS = {
    "721": ([[0.2926, 0.0673, 0.0337], [0.0673, 0.2646, 0.0673], [0.0337, 0.0673, 0.2926]],
            [[0.1973, -0.0368, -0.0417], [-0.0368, 0.1900, -0.0368], [-0.0417, -0.0368, 0.1973]]),
    "722": ([[0.4751, 0.1629, 0.1234], [0.1629, 0.4488, 0.1629], [0.1234, 0.1629, 0.4751]],
            [[0.2973, -0.0326, -0.0607], [-0.0326, 0.2678, -0.0326], [-0.0607, -0.0326, 0.2973]]),
    "723": ([[1.2936, 0.4871, 0.4585], [0.4871, 1.3022, 0.4871], [0.4585, 0.4871, 1.2936]],
            [[0.6713, 0.2111, 0.1521], [0.2111, 0.6326, 0.2111], [0.1521, 0.2111, 0.6713]]),
    "724": ([[2.0952, 0.5204, 0.4926], [0.5204, 2.1068, 0.5204], [0.4926, 0.5204, 2.0952]],
            [[0.7758, 0.2738, 0.2123], [0.2738, 0.7398, 0.2738], [0.2123, 0.2738, 0.7758]]),
}

SEGMENTS = """SUB 799 0 SUBXF
799 701 1850 721
701 702 960 722
702 705 400 724
702 713 360 723
702 703 1320 722
703 727 240 724
703 730 600 723
704 714 80 724
704 720 800 723
705 742 320 724
705 712 240 724
706 725 280 724
707 724 760 724
707 722 120 724
708 733 320 723
708 732 320 724
709 731 600 723
709 708 320 723
709 775 0 XFM-1
710 735 200 724
710 736 1280 724
711 741 400 723
711 740 200 724
713 704 520 723
714 718 520 724
720 707 920 724
720 706 600 723
727 744 280 723
730 709 200 723
733 734 560 723
734 737 640 723
734 710 520 724
737 738 400 723
738 711 400 723
744 728 200 724
744 729 280 724"""

# Delta spot loads, kW/kvar on AB, BC, CA.
LOADS = """701 140 70 140 70 350 175
712 0 0 0 0 85 40
713 0 0 0 0 85 40
714 17 8 21 10 0 0
718 85 40 0 0 0 0
720 0 0 0 0 85 40
722 0 0 140 70 21 10
724 0 0 42 21 0 0
725 0 0 42 21 0 0
727 0 0 0 0 42 21
728 42 21 42 21 42 21
729 42 21 0 0 0 0
730 0 0 0 0 85 40
731 0 0 85 40 0 0
732 0 0 0 0 42 21
733 85 40 0 0 0 0
734 0 0 0 0 42 21
735 0 0 0 0 85 40
736 0 0 42 21 0 0
737 140 70 0 0 0 0
738 126 62 0 0 0 0
740 0 0 0 0 85 40
741 0 0 0 0 42 21
742 8 4 85 40 0 0
744 42 21 0 0 0 0"""

PEAK_KW = 2000.0
DER_SHARE = 0.9
OVERSIZE = 1.1


def ieee37():
    segs = [l.split() for l in SEGMENTS.splitlines()]
    names = sorted({s[0] for s in segs} | {s[1] for s in segs})
    names.remove("SUB")
    names.remove("799")
    names = ["SUB", "799"] + names
    nid = {n: i for i, n in enumerate(names)}
    lines = []
    for a, b, ft, cfg in segs:
        if cfg == "SUBXF":
            # Substation transformer, 2500 kVA, 115/4.8 kV, R = 2 %, X = 8 %.
            zb = 4.8 ** 2 / 2.5
            r = diag(0.02 * zb)
            x = diag(0.08 * zb)
        elif cfg == "XFM-1":
            # 500 kVA, 4.8/0.48 kV, R = 0.09 %, X = 1.81 %, referred to 4.8 kV.
            zb = 4.8 ** 2 / 0.5
            r = [[0.0009 * zb if i == j else 0.0 for j in range(3)] for i in range(3)]
            x = [[0.0181 * zb if i == j else 0.0 for j in range(3)] for i in range(3)]
        else:
            rm, xm = CONFIGS[cfg]
            f = float(ft) / MI
            r = [[round(v * f, 9) for v in row] for row in rm]
            x = [[round(v * f, 9) for v in row] for row in xm]
        lines.append({"from": nid[a], "to": nid[b], "r_ohm": r, "x_ohm": x})
    total = sum(float(v) for l in LOADS.splitlines() for v in l.split()[1::2])
    scale = PEAK_KW / total
    acc = {}
    for l in LOADS.splitlines():
        v = l.split()
        node = nid[v[0]]
        for k, (pa, pb) in enumerate([("a", "b"), ("b", "c"), ("c", "a")]):
            p, q = float(v[1 + 2 * k]) * scale, float(v[2 + 2 * k]) * scale
            for ph in (pa, pb):
                key = (node, ph)
                acc[key] = (acc.get(key, (0.0, 0.0))[0] + p / 2, acc.get(key, (0.0, 0.0))[1] + q / 2)
    loads = [
        {"node": n, "phase": ph, "p_kw": round(p, 6), "q_kvar": round(q, 6)}
        for (n, ph), (p, q) in sorted(acc.items())
        if p != 0.0 or q != 0.0
    ]
    slots = [(i, ph) for i in range(2, len(names)) for ph in "abc"]
    p_rated = PEAK_KW * DER_SHARE / len(slots)
    ders = [
        {"id": k, "node": n, "phase": ph, "p_rated_kw": round(p_rated, 9), "s_kva": round(OVERSIZE * p_rated, 9)}
        for k, (n, ph) in enumerate(slots)
    ]
    return {
        "name": "ieee37",
        "notes": (
            "IEEE 37-node test feeder (4.8 kV, underground cables 721-724, XFM-1 as a series "
            "impedance referred to 4.8 kV). Node SUB is the OLTC secondary; the substation "
            "transformer impedance connects it to node 799, and the 799-701 regulator is replaced "
            "by the OLTC. Delta spot loads are split equally "
            "between their two phases, treated as constant power and scaled to 2000 kW total. "
            "One single-phase PV unit per node-phase, total 1800 kW, inverter 1.1x kW rating. "
            "Node labels carry the published bus numbers."
        ),
        "base_kva": 1000.0,
        "base_kv": 4.8,
        "substation": {"tap_step": 0.00625, "max_taps": 16},
        "nodes": [{"id": i, "phases": "abc", "label": n} for i, n in enumerate(names)],
        "lines": lines,
        "loads": loads,
        "ders": ders,
    }


def diag(v):
    return [[v if i == j else 0.0 for j in range(3)] for i in range(3)]


def single_phase(r, x):
    m = [[0.0] * 3 for _ in range(3)]
    m[0][0] = r
    n = [[0.0] * 3 for _ in range(3)]
    n[0][0] = x
    return m, n


def two_node():
    r, x = single_phase(0.1, 0.1)
    return {
        "name": "two-node",
        "base_kva": 1000.0,
        "base_kv": 1.0,
        "substation": {"tap_step": 0.00625, "max_taps": 16},
        "nodes": [{"id": 0, "phases": "a"}, {"id": 1, "phases": "a"}],
        "lines": [{"from": 0, "to": 1, "r_ohm": r, "x_ohm": x}],
        "loads": [{"node": 1, "phase": "a", "p_kw": 100.0, "q_kvar": 50.0}],
        "ders": [{"id": 0, "node": 1, "phase": "a", "p_rated_kw": 50.0, "s_kva": 60.0}],
    }


def four_node():
    # base 3000 kVA / 1 kV: phase base 1000 kVA, impedance base 1/3 ohm.
    zb = 1.0 / 3.0
    spec = [(0, 1, 0.02, 0.03), (1, 2, 0.03, 0.02), (1, 3, 0.04, 0.03)]
    lines = []
    for a, b, r, x in spec:
        rm, xm = single_phase(r * zb, x * zb)
        lines.append({"from": a, "to": b, "r_ohm": rm, "x_ohm": xm})
    return {
        "name": "four-node",
        "base_kva": 3000.0,
        "base_kv": 1.0,
        "substation": {"tap_step": 0.00625, "max_taps": 16},
        "nodes": [{"id": i, "phases": "a"} for i in range(4)],
        "lines": lines,
        "loads": [
            {"node": 1, "phase": "a", "p_kw": 300.0, "q_kvar": 100.0},
            {"node": 2, "phase": "a", "p_kw": 200.0, "q_kvar": 80.0},
            {"node": 3, "phase": "a", "p_kw": 250.0, "q_kvar": 100.0},
        ],
        "ders": [
            {"id": 0, "node": 2, "phase": "a", "p_rated_kw": 60.0, "s_kva": 80.0},
            {"id": 1, "node": 3, "phase": "a", "p_rated_kw": 80.0, "s_kva": 100.0},
        ],
    }


def case9():
    buses = [
        (1, "slack", 1.0, 0, 0), (2, "pv", 1.0, 0, 0), (3, "pv", 1.0, 0, 0),
        (4, "pq", 1.0, 0, 0), (5, "pq", 1.0, 90, 30), (6, "pq", 1.0, 0, 0),
        (7, "pq", 1.0, 100, 35), (8, "pq", 1.0, 0, 0), (9, "pq", 1.0, 125, 50),
    ]
    br = [
        (1, 4, 0.0, 0.0576, 0.0), (4, 5, 0.017, 0.092, 0.158), (5, 6, 0.039, 0.17, 0.358),
        (3, 6, 0.0, 0.0586, 0.0), (6, 7, 0.0119, 0.1008, 0.209), (7, 8, 0.0085, 0.072, 0.149),
        (8, 2, 0.0, 0.0625, 0.0), (8, 9, 0.032, 0.161, 0.306), (9, 4, 0.01, 0.085, 0.176),
    ]
    return {
        "name": "ieee9",
        "notes": "IEEE/WSCC 9-bus system as distributed with MATPOWER (case9).",
        "base_mva": 100.0,
        "buses": [{"id": b, "type": t, "v_set": v, "p_load_mw": p, "q_load_mvar": q} for b, t, v, p, q in buses],
        "branches": [
            {"id": k + 1, "from": f, "to": t, "r_pu": r, "x_pu": x, "b_pu": b, "status": True}
            for k, (f, t, r, x, b) in enumerate(br)
        ],
        "gens": [
            {"bus": 1, "p_mw": 72.3, "q_min_mvar": -300.0, "q_max_mvar": 300.0},
            {"bus": 2, "p_mw": 163.0, "q_min_mvar": -300.0, "q_max_mvar": 300.0},
            {"bus": 3, "p_mw": 85.0, "q_min_mvar": -300.0, "q_max_mvar": 300.0},
        ],
    }


LOAD_PROFILE = [0.58, 0.55, 0.53, 0.52, 0.53, 0.58, 0.66, 0.75, 0.82, 0.86, 0.88, 0.90,
                0.92, 0.93, 0.94, 0.95, 0.97, 1.00, 0.99, 0.96, 0.90, 0.81, 0.71, 0.63]
SOLAR_PROFILE = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.18, 0.38, 0.58, 0.76, 0.90,
                 1.00, 0.96, 0.86, 0.70, 0.50, 0.30, 0.12, 0.02, 0.0, 0.0, 0.0, 0.0]


def write_json(name, doc):
    with open(os.path.join(HERE, name), "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


# Per-copy demand of the ieee37 feeder at full load and peak solar, tap at
# the lowest secondary voltage keeping every node above 0.95 pu, unity DERs
# (kW, kvar).
FEEDER_BASE = (223.313, 1025.042)
# Feeder copies behind each load bus of the cosim grid.
MULTIPLICITY = {5: 30, 7: 30, 9: 60}


def cosim_grid():
    doc = case9()
    doc["name"] = "ieee9-residual"
    doc["notes"] = ("case9 with the load buses reduced by the demand of the feeders "
                    "attached in the cosim scenarios.")
    for b in doc["buses"]:
        m = MULTIPLICITY.get(b["id"])
        if m:
            b["p_load_mw"] = round(b["p_load_mw"] - m * FEEDER_BASE[0] / 1000.0, 4)
            b["q_load_mvar"] = round(b["q_load_mvar"] - m * FEEDER_BASE[1] / 1000.0, 4)
    return doc


def cosim_case(name, notes, requests):
    events = [{"t": 5, "kind": "branch-outage", "branch": 3}]
    if requests:
        events.append({"t": 10, "kind": "var-request", "requests": requests,
                       "target_v": 0.95, "monitor": [5, 9]})
    return {
        "name": name,
        "notes": notes,
        "horizon": 16,
        "events": events,
        "boundaries": [
            {"bus": b, "feeder_file": "../ieee37.json", "multiplicity": m,
             "load_mult": 1.0, "solar_mult": 1.0}
            for b, m in sorted(MULTIPLICITY.items())
        ],
    }


def capped(bus):
    return {"bus": bus, "curtailment_cap": 0.0, "q_share": 0.44}


COSIM_CASES = {
    "case_a.json": ("no-support", "Line 5-6 trips at t=5, no var support.", []),
    "case_b.json": ("support-bus9", "Capped var support from the bus 9 feeders.", [capped(9)]),
    "case_c.json": ("support-bus9-bus5", "Capped var support from the bus 9 and bus 5 feeders.",
                    [capped(9), capped(5)]),
    "case_d.json": ("support-bus9-curtail", "Bus 9 feeders with 20% curtailment and no var cap.",
                    [{"bus": 9, "curtailment_cap": 0.2}]),
}


if __name__ == "__main__":
    write_json("ieee37.json", ieee37())
    write_json("two_node.json", two_node())
    write_json("four_node.json", four_node())
    write_json("ieee9.json", case9())
    with open(os.path.join(HERE, "profiles.csv"), "w") as f:
        f.write("hour,load_mult,solar_mult\n")
        for h, (l, s) in enumerate(zip(LOAD_PROFILE, SOLAR_PROFILE)):
            f.write(f"{h},{l},{s}\n")
    os.makedirs(os.path.join(HERE, "cosim"), exist_ok=True)
    write_json(os.path.join("cosim", "ieee9_residual.json"), cosim_grid())
    for fname, (name, notes, req) in COSIM_CASES.items():
        write_json(os.path.join("cosim", fname), cosim_case(name, notes, req))
