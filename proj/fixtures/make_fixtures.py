#!/usr/bin/env python3
"""Regenerates the JSON/CSV fixtures in this directory (deterministic)."""

import csv
import json
import math
import random
from pathlib import Path

HERE = Path(__file__).resolve().parent
GRADES = ["K", "1", "2", "3", "4", "5"]
GROUPS = ["white", "black", "hispanic", "asian"]


def school(sid, district, per_grade, capacity):
    """per_grade: dict group -> count (same every grade) or list of dicts per grade."""
    if isinstance(per_grade, dict):
        per_grade = [per_grade] * len(GRADES)
    enrollment = {g: {k: v for k, v in row.items() if v} for g, row in zip(GRADES, per_grade)}
    return {"id": sid, "district_id": district, "capacity": capacity, "enrollment": enrollment}


def instance(name, schools, adjacency, grades=GRADES, groups=GROUPS, focal=("white",)):
    return {
        "name": name,
        "grade_domain": list(grades),
        "groups": list(groups),
        "focal_groups": list(focal),
        "schools": schools,
        "adjacency": [list(e) for e in adjacency],
    }


def dump(path, doc):
    (HERE / path).parent.mkdir(parents=True, exist_ok=True)
    with open(HERE / path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


def write_csv(path, header, rows):
    with open(HERE / path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def total(s):
    return sum(sum(row.values()) for row in s["enrollment"].values())


def hand_fixtures():
    dump("pair.json", instance("pair", [
        school("A", "pair", {"white": 20}, 200),
        school("B", "pair", {"black": 10, "hispanic": 10}, 200),
    ], [("A", "B")]))

    # Canonical schema example: 4 schools on a path, 3 edges.
    dump("four_schools.json", instance("four_schools", [
        school("S1", "four", {"white": 12, "black": 4, "hispanic": 3, "asian": 1}, 140),
        school("S2", "four", {"white": 5, "black": 8, "hispanic": 6, "asian": 1}, 140),
        school("S3", "four", {"white": 9, "black": 5, "hispanic": 5, "asian": 2}, 150),
        school("S4", "four", {"white": 3, "black": 9, "hispanic": 7, "asian": 1}, 130),
    ], [("S1", "S2"), ("S2", "S3"), ("S3", "S4")]))

    mixed = {"white": 10, "black": 10}
    dump("path3.json", instance("path3", [
        school("A", "p3", {"white": 18, "black": 2}, 200),
        school("B", "p3", mixed, 200),
        school("C", "p3", {"white": 2, "black": 18}, 200),
    ], [("A", "B"), ("B", "C")]))
    dump("k3.json", instance("k3", [
        school("A", "k3", {"white": 18, "black": 2}, 200),
        school("B", "k3", mixed, 200),
        school("C", "k3", {"white": 2, "black": 18}, 200),
    ], [("A", "B"), ("B", "C"), ("A", "C")]))

    one = ["K"]
    dump("three_school.json", instance("three_school", [
        school("X", "t3", [{"white": 30, "black": 10}], 60),
        school("Y", "t3", [{"white": 10, "black": 30}], 60),
        school("Z", "t3", [{"white": 20, "black": 20}], 60),
    ], [("X", "Y"), ("Y", "Z")], grades=one))
    dump("segregated_pair.json", instance("segregated_pair", [
        school("A", "seg", [{"white": 50}], 80),
        school("B", "seg", [{"black": 50}], 80),
    ], [("A", "B")], grades=one))
    dump("proportional.json", instance("proportional", [
        school("A", "prop", {"white": 10, "black": 10}, 200),
        school("B", "prop", {"white": 5, "black": 5}, 200),
        school("C", "prop", {"white": 15, "black": 15}, 200),
    ], [("A", "B"), ("B", "C")]))
    dump("degenerate.json", instance("degenerate", [
        school("A", "deg", {"white": 20}, 200),
        school("B", "deg", {"white": 15}, 200),
    ], [("A", "B")]))

    # Two 3-school districts sharing one border edge (C3 -- D1).
    dump("district_c.json", instance("district_c", [
        school("C1", "C", {"white": 18, "black": 2}, 200),
        school("C2", "C", {"white": 16, "black": 4}, 200),
        school("C3", "C", {"white": 19, "black": 1}, 200),
    ], [("C1", "C2"), ("C2", "C3")]))
    dump("district_d.json", instance("district_d", [
        school("D1", "D", {"white": 1, "black": 19}, 200),
        school("D2", "D", {"white": 3, "black": 17}, 200),
        school("D3", "D", {"white": 2, "black": 18}, 200),
    ], [("D1", "D2"), ("D2", "D3")]))


def apportionment_fixture():
    # ABC has 100 Black students; 40 of them are in grades 3-5. Blocks hold
    # 30/25/15/40 Black residents (the paper's worked example).
    abc = [{"black": 20}] * 3 + [{"black": 14}, {"black": 13}, {"black": 13}]
    dump("abc_xyz.json", instance("abc_xyz", [
        school("ABC", "abc", abc, 150),
        school("XYZ", "abc", {"white": 20}, 150),
    ], [("ABC", "XYZ")]))
    write_csv("abc_xyz.blocks.csv", ["block_id", "school_id"] + GROUPS, [
        ["b1", "ABC", 0, 30, 0, 0],
        ["b2", "ABC", 0, 25, 0, 0],
        ["b3", "ABC", 0, 15, 0, 0],
        ["b4", "ABC", 0, 40, 0, 0],
        ["y1", "XYZ", 70, 0, 0, 0],
        ["y2", "XYZ", 50, 0, 0, 0],
    ])
    minutes = {("b1", "ABC"): 4, ("b1", "XYZ"): 7, ("b2", "ABC"): 5, ("b2", "XYZ"): 9,
               ("b3", "ABC"): 3, ("b3", "XYZ"): 6, ("b4", "ABC"): 6, ("b4", "XYZ"): 8,
               ("y1", "ABC"): 10, ("y1", "XYZ"): 4, ("y2", "ABC"): 12, ("y2", "XYZ"): 5}
    write_csv("abc_xyz.travel.csv", ["block_id", "school_id", "minutes"],
              [[b, s, m] for (b, s), m in minutes.items()])
    # Same matrix without (b3, XYZ).
    write_csv("abc_xyz.travel_missing.csv", ["block_id", "school_id", "minutes"],
              [[b, s, m] for (b, s), m in minutes.items() if (b, s) != ("b3", "XYZ")])

    def plan(spans):
        return {
            "format": "schoolmerge-plan/1",
            "instance": "abc_xyz",
            "status": "feasible",
            "d_before": 1.0,
            "d_after": 0.0,
            "clusters": [{"members": ["ABC", "XYZ"],
                          "spans": [{"school": s, "start": a, "end": b} for s, a, b in spans]}],
        }

    dump("abc_xyz.plan.json", plan([("ABC", "K", "2"), ("XYZ", "3", "5")]))
    dump("abc_xyz.identity.plan.json", {
        "format": "schoolmerge-plan/1", "instance": "abc_xyz", "status": "feasible",
        "d_before": 1.0, "d_after": 1.0,
        "clusters": [{"members": ["ABC"], "spans": [{"school": "ABC", "start": "K", "end": "5"}]},
                     {"members": ["XYZ"], "spans": [{"school": "XYZ", "start": "K", "end": "5"}]}]})


def grid_fixtures():
    rng = random.Random(1604)
    ids = [[f"g{r}{c}" for c in range(4)] for r in range(4)]
    edges = []
    for r in range(4):
        for c in range(4):
            if c + 1 < 4:
                edges.append((ids[r][c], ids[r][c + 1]))
            if r + 1 < 4:
                edges.append((ids[r][c], ids[r + 1][c]))

    def build(name, high):
        schools = []
        for r in range(4):
            for c in range(4):
                rows = []
                for _ in GRADES:
                    n = 20 + rng.randint(-2, 2)
                    white = round(n * (0.8 if high(r, c) else 0.2)) + rng.randint(-1, 1)
                    white = max(0, min(n, white))
                    rest = n - white
                    black = rest // 2
                    rows.append({"white": white, "black": black, "hispanic": rest - black})
                s = school(ids[r][c], name, rows, 0)
                s["capacity"] = math.ceil(total(s) * 1.3)
                schools.append(s)
        return instance(name, schools, edges)

    dump("grid_checkerboard.json", build("grid_checkerboard", lambda r, c: (r + c) % 2 == 0))
    dump("grid_coastal.json", build("grid_coastal", lambda r, c: c < 2))


def synthetic_districts():
    """Five 8-school districts with blocks and travel; segregation gradients vary."""
    for d in range(1, 6):
        rng = random.Random(7000 + d)
        name = f"synth_{d}"
        pts = [(rng.random(), rng.random()) for _ in range(8)]
        ids = [f"{name}_s{i}" for i in range(8)]
        edges = []
        for i in range(8):
            near = sorted(range(8), key=lambda j: math.dist(pts[i], pts[j]))[1:4]
            for j in near:
                e = tuple(sorted((ids[i], ids[j])))
                if e not in edges:
                    edges.append(e)
        strength = 0.15 * d
        schools = []
        blocks = []
        travel = []
        for i in range(8):
            share = min(0.95, max(0.05, 0.5 + strength * (pts[i][0] - 0.5) * 2))
            rows = []
            for _ in GRADES:
                n = rng.randint(15, 25)
                white = sum(rng.random() < share for _ in range(n))
                rest = n - white
                asian = rest // 5
                black = (rest - asian) // 2
                rows.append({"white": white, "black": black, "hispanic": rest - asian - black, "asian": asian})
            s = school(ids[i], name, rows, 0)
            s["capacity"] = math.ceil(total(s) * rng.uniform(1.15, 1.5))
            schools.append(s)
            by_group = {g: sum(r.get(g, 0) for r in s["enrollment"].values()) for g in GROUPS}
            for b in range(3):
                bid = f"{ids[i]}_b{b}"
                bx = (pts[i][0] + rng.uniform(-0.05, 0.05), pts[i][1] + rng.uniform(-0.05, 0.05))
                part = [1, 1, 2][b] / 4
                blocks.append([bid, ids[i]] + [round(by_group[g] * part, 2) for g in GROUPS])
                for j in range(8):
                    travel.append([bid, ids[j], round(2 + 25 * math.dist(bx, pts[j]), 2)])
        dump(f"{name}.json", instance(name, schools, edges))
        write_csv(f"{name}.blocks.csv", ["block_id", "school_id"] + GROUPS, blocks)
        write_csv(f"{name}.travel.csv", ["block_id", "school_id", "minutes"], travel)


def scenario_files():
    dump("sweep.json", {
        "instances": ["pair.json", "grid_checkerboard.json", "grid_coastal.json",
                      "synth_1.json", "synth_2.json", "synth_3.json", "synth_4.json", "synth_5.json"],
        "config": {"seed": 7, "time_limit_s": 60},
        "sweep": {"p_min": [0.8, 0.5, 0.0], "objective": ["default", "bhwa"]},
        "interdistrict": [{"name": "c_plus_d", "instances": ["district_c.json", "district_d.json"],
                           "cross_adjacency": [["C3", "D1"]]}],
        "travel": {f"synth_{d}": {"blocks": f"synth_{d}.blocks.csv", "travel": f"synth_{d}.travel.csv"}
                   for d in range(1, 6)},
        "opt_out_ratios": {"white": 0.2, "asian": 0.1},
        "workers": 2,
    })
    dump("sweep_small.json", {
        "instances": ["pair.json", "path3.json", "k3.json"],
        "config": {"seed": 3},
        "sweep": {"p_min": [0.8, 0.5, 0.0]},
        "workers": 1,
    })
    write_csv("redistricting.csv", ["district_id", "delta_d_relative", "percent_switching"], [
        ["synth_2", -0.12, 8.5],
        ["synth_4", -0.2, 11.0],
        ["elsewhere", -0.3, 9.0],
    ])


if __name__ == "__main__":
    hand_fixtures()
    apportionment_fixture()
    grid_fixtures()
    synthetic_districts()
    scenario_files()
