"""End-to-end checks of the volcast command line: schema, determinism, exit codes, CSV precision."""

import csv
import json
import math
import pathlib
import re
import subprocess
import sys

import jsonschema

cli, schema_path, work = sys.argv[1], pathlib.Path(sys.argv[2]), pathlib.Path(sys.argv[3])
work.mkdir(parents=True, exist_ok=True)
schema = json.loads(schema_path.read_text())
validator = jsonschema.Draft202012Validator(schema)
failures = []


def check(cond, what):
    print(("PASS " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def run(*args):
    return subprocess.run([cli, *args], capture_output=True, text=True)


prices = work / "prices.csv"
r = run("simulate", "-o", str(prices), "--n", "700", "--seed", "11")
check(r.returncode == 0, "simulate writes a price file")

grid = ["--input", str(prices), "--families", "GARCH,GJR", "--distributions", "norm,sged",
        "--test-length", "40", "--refit-every", "10", "--seed", "5"]
a = run("backtest", *grid, "--out", str(work / "a"))
b = run("backtest", *grid, "--out", str(work / "b"), "--threads", "2")
check(a.returncode == 0 and b.returncode == 0, "backtest exits 0")
report_a = (work / "a" / "report.json").read_bytes()
check(report_a == (work / "b" / "report.json").read_bytes(), "rerun gives a byte-identical report.json")

rep = json.loads(report_a)
errors = list(validator.iter_errors(rep))
check(not errors, "backtest report validates against the schema" + (f": {errors[0].message}" if errors else ""))
check(len(rep["backtest"]["models"]) == 4 and len(rep["ranking"]["MSE"]) == 4, "every model is ranked")
check(all(m["losses"]["rmse"] == math.sqrt(m["losses"]["mse"]) for m in rep["backtest"]["models"]),
      "rmse equals sqrt(mse) exactly")
with open(work / "a" / "fits.csv") as f:
    rows = list(csv.DictReader(f))
aic = {x["model"]: x["aic"] for x in rep["fits"]}
check(all(float(row["aic"]) == float(f"{aic[row['model']]:.10g}") for row in rows), "fits.csv AIC matches report")

sig = re.compile(r"^-?\d+(\.\d+)?(e[+-]\d+)?$")
too_long = []
for path in sorted((work / "a").glob("*.csv")):
    with open(path) as f:
        for row in csv.reader(f):
            for cell in row:
                if sig.match(cell):
                    digits = re.sub(r"e.*$", "", cell).replace("-", "").replace(".", "").lstrip("0")
                    if len(digits) > 10:
                        too_long.append((path.name, cell))
check(not too_long, "CSV numbers carry at most 10 significant digits" + (f": {too_long[:3]}" if too_long else ""))

single = run("backtest", "--input", str(prices), "--families", "GARCH", "--distributions", "norm",
             "--test-length", "40", "--refit-every", "20", "--out", str(work / "single"))
srep = json.loads((work / "single" / "report.json").read_text())
check(single.returncode == 0 and len(srep["backtest"]["models"]) == 1 and not srep["backtest"]["pairwise_dm"]
      and srep["backtest"]["models"][0]["dm_vs_benchmark"] is None, "benchmark-only run has no DM entries")
check(not list(validator.iter_errors(srep)), "benchmark-only report validates")

for command in ("describe", "select-arma", "fit"):
    out = work / command
    extra = ["--families", "GARCH", "--distributions", "norm,std"] if command == "fit" else []
    r = run(command, "--input", str(prices), "--out", str(out), *extra)
    ok = r.returncode == 0 and not list(validator.iter_errors(json.loads((out / "report.json").read_text())))
    check(ok, f"{command} report validates")

(work / "bad.cfg").write_text(f"input = {prices}\nunknown_key = 3\n")
check(run("fit", "--config", str(work / "bad.cfg")).returncode == 2, "unknown config key exits 2")
check(run("describe", "--input", str(work / "missing.csv")).returncode == 2, "missing input exits 2")
check(run("backtest", "--input", str(prices), "--families", "GJR").returncode == 2, "grid without benchmark exits 2")
check(run("backtest", "--input", str(prices), "--test-length", "600").returncode == 2, "overlong test exits 2")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
