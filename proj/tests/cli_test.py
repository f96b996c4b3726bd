"""End-to-end checks of the leniency CLI: exit codes, outputs and JSON schemas.

usage: cli_test.py <leniency binary> <schema dir>
"""

import csv
import json
import os
import subprocess
import sys
import tempfile

import jsonschema

CLI, SCHEMAS = sys.argv[1], sys.argv[2]
failures = []


def run(*args):
    return subprocess.run([CLI, *args], capture_output=True, text=True)


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def validate(doc, name):
    with open(os.path.join(SCHEMAS, name + ".schema.json")) as f:
        schema = json.load(f)
    try:
        jsonschema.validate(doc, schema, cls=jsonschema.Draft202012Validator)
        check(True, f"{name} output validates")
    except jsonschema.ValidationError as e:
        check(False, f"{name} output validates: {e.message}")


def load(path):
    with open(path) as f:
        return json.load(f)


with tempfile.TemporaryDirectory() as tmp:
    data = os.path.join(tmp, "data.csv")
    counts = os.path.join(tmp, "counts.csv")
    p = os.path.join

    r = run("simulate", "--reps", "5", "--seed", "3", "--n", "800", "--cells", "8", "--examiners-per-cell", "4",
            "--emit-data", data, "--out", p(tmp, "sim.json"))
    check(r.returncode == 0, "simulate exits 0")
    sim = load(p(tmp, "sim.json"))
    validate(sim, "simulate")
    check("bias_ratio_empirical" in sim, "simulate summary has the bias ratio field")
    check(sim["manifest"]["seed"] == 3, "manifest records the seed")

    r = run("simulate", "--reps", "3", "--seed", "4", "--n", "800", "--cells", "8", "--examiners-per-cell", "4",
            "--effect-model", "heterogeneous", "--effect-heterogeneity", "0.5", "--outcome-type", "count",
            "--emit-data", counts, "--monotonicity", "--out", p(tmp, "sim2.json"))
    check(r.returncode == 0, "count-outcome simulate exits 0")
    validate(load(p(tmp, "sim2.json")), "simulate")

    # Extra columns: a fixed-effect dummy and a constant.
    with open(data) as f:
        rows = list(csv.DictReader(f))
    first_cell = rows[0]["cell"]
    for row in rows:
        row["cell_dummy"] = "1" if row["cell"] == first_cell else "0"
        row["one"] = "1"
    data2 = p(tmp, "data2.csv")
    with open(data2, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)

    r = run("estimate", "--data", data, "--out", p(tmp, "est.json"))
    check(r.returncode == 0, "estimate exits 0")
    est = load(p(tmp, "est.json"))
    validate(est, "estimate")
    names = [e["estimator"] for e in est["estimates"]]
    check(names == ["UJIVE", "2SLS", "OLS"], "default estimators are UJIVE, 2SLS, OLS")
    for e in est["estimates"]:
        check(all(k in e for k in ("beta", "se_robust", "F", "partial_R2", "n", "K", "L")), f"{e['estimator']} fields")

    r = run("estimate", "--data", data, "--estimator", "ujive", "--weak-iv-beta0", "0", "--weak-iv-grid", "-2:2:401",
            "--rho-beta", "0:2", "--out", p(tmp, "weak.json"))
    check(r.returncode == 0, "weak-IV estimate exits 0")
    weak = load(p(tmp, "weak.json"))
    validate(weak, "estimate")
    check(len(weak["weak_iv"]["set"]) >= 1, "confidence set reported")
    if len(weak["weak_iv"]["set"]) == 1:
        check("ci_lo" in weak["weak_iv"] and "ci_hi" in weak["weak_iv"], "confidence set endpoints reported")
    check("range" in weak["rho"], "rho range reported")

    r = run("estimate", "--data", data, "--estimator", "fejiv", "--fejiv-cap", "100")
    check(r.returncode == 3, "FEJIV over the capacity cap exits 3")
    check("FEJIV" in r.stderr, "capacity message names FEJIV")

    r = run("estimate", "--data", data, "--cluster", "cell")
    check(r.returncode == 2, "clustered SE request exits 2")
    check("cluster at the level of variation in the assignment" in r.stderr, "clustering guidance printed")

    r = run("simulate", "--defier-fraction", "0.6")
    check(r.returncode == 2, "defier fraction 0.6 exits 2")

    r = run("estimate", "--data", data, "--treatment", "nope")
    check(r.returncode == 2 and "nope" in r.stderr, "missing column exits 2 and names it")

    bad = p(tmp, "bad.csv")
    with open(bad, "w") as f:
        f.write("y,x,examiner,cell\n1,1,a,u\n0,1,,u\n")
    r = run("estimate", "--data", bad)
    check(r.returncode == 2 and "row 2" in r.stderr, "missing examiner exits 2 and names the row")

    r = run("estimate", "--data", p(tmp, "absent.csv"))
    check(r.returncode == 2, "unreadable file exits 2")

    r = run("balance", "--data", data2, "--covariates", "cell_dummy,v_indep,v_partial", "--out", p(tmp, "bal.json"))
    check(r.returncode == 0, "balance exits 0")
    bal = load(p(tmp, "bal.json"))
    validate(bal, "balance")
    check(abs(bal["rows"][0]["coefficient"]) < 1e-12, "balance on a fixed-effect column is 0")
    check(bal["rows"][2]["n_used"] < bal["rows"][1]["n_used"], "missing covariate uses a subsample")

    r = run("compliers", "--data", data2, "--covariates", "one,v_bin", "--out", p(tmp, "comp.json"))
    check(r.returncode == 0, "compliers exits 0")
    comp = load(p(tmp, "comp.json"))
    validate(comp, "compliers")
    check(comp["rows"][0]["complier_mean"] == 1.0, "complier mean of a constant 1 is exactly 1")

    r = run("monotonicity", "--data", counts, "--out", p(tmp, "mono.json"))
    check(r.returncode == 0, "monotonicity exits 0")
    mono = load(p(tmp, "mono.json"))
    validate(mono, "monotonicity")
    check(abs(sum(b["treated"] for b in mono["bins"]) - 1.0) < 1e-8, "bin masses sum to 1")

    r = run("monotonicity", "--data", counts, "--format", "csv", "--out", p(tmp, "mono.csv"))
    check(r.returncode == 0, "monotonicity CSV exits 0")
    with open(p(tmp, "mono.csv")) as f:
        table = list(csv.DictReader(f))
    check(len(table) == 2 * len(mono["bins"]), "plot-ready CSV has one row per bin and group")
    check(os.path.exists(p(tmp, "mono.csv.manifest.json")), "CSV output has a manifest alongside")

    r = run("monotonicity", "--data", data, "--edges", "0,1")
    check(r.returncode == 2, "bins that miss outcomes exit 2")

    cfg = p(tmp, "run.cfg")
    with open(cfg, "w") as f:
        f.write(f"# estimate defaults\ndata = {data}\nestimator = ols\n")
    r = run("estimate", "--config", cfg, "--out", p(tmp, "cfg.json"))
    check(r.returncode == 0, "estimate from a config file exits 0")
    check([e["estimator"] for e in load(p(tmp, "cfg.json"))["estimates"]] == ["OLS"], "config file values apply")

    simcfg = p(tmp, "sim.cfg")
    with open(simcfg, "w") as f:
        f.write("n = 500\nn_cells = 5\nexaminers_per_cell = 4\ntarget_F = 6\n")
    r = run("simulate", "--config", simcfg, "--reps", "3", "--out", p(tmp, "sim3.json"))
    check(r.returncode == 0, "simulate from a config file exits 0")
    check(load(p(tmp, "sim3.json"))["manifest"]["config"]["n"] == "500", "simulate config file applies")

    r = run("simulate", "--config", simcfg, "--reps", "3", "--threads", "1", "--out", p(tmp, "sim4.json"))
    with open(p(tmp, "sim3.json"), "rb") as a, open(p(tmp, "sim4.json"), "rb") as b:
        check(a.read() == b.read(), "thread count does not change output")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
