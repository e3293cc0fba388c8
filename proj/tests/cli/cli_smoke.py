#!/usr/bin/env python3
"""End-to-end run of every dejavu subcommand on a small simulated system.

Each JSON output is checked against its schema; error paths must exit
nonzero with a message on stderr.

    cli_smoke.py <dejavu binary> <schema dir> <work dir>
"""

import json
import os
import shutil
import subprocess
import sys
from pathlib import Path

import jsonschema

CLI, SCHEMAS, WORK = sys.argv[1], Path(sys.argv[2]), Path(sys.argv[3])
ENV = dict(os.environ, DEJAVU_LOG_LEVEL="warn")
failures = []


def run(*args, expect_ok=True):
    proc = subprocess.run([CLI, *args], capture_output=True, text=True, env=ENV)
    ok = proc.returncode == 0
    if ok != expect_ok:
        failures.append(f"{' '.join(args)}: exit {proc.returncode}\n{proc.stderr}")
    return proc


def validate(path, schema):
    try:
        doc = json.loads(Path(path).read_text())
        jsonschema.validate(doc, json.loads((SCHEMAS / f"{schema}.schema.json").read_text()))
        return doc
    except (OSError, ValueError, jsonschema.ValidationError) as e:
        failures.append(f"{path} against {schema}: {e}")
        return None


shutil.rmtree(WORK, ignore_errors=True)
WORK.mkdir(parents=True)
cfg = WORK / "config.json"
cfg.write_text(json.dumps({
    "seed": 2,
    "sim": {"n_services": 4, "n_containers": 4, "n_hosts": 3, "n_failures": 30},
    "train": {"epochs": 4},
}))
data, model = str(WORK / "data"), str(WORK / "model")
common = ["--config", str(cfg)]

run("simulate", *common, "--out", data)
run("train", *common, "--dataset", data, "--out", model)
validate(WORK / "model/train_summary.json", "train_summary")

for producer in ["dejavu", "rw_metric", "rw_fi", "tree"]:
    extra = ["--checkpoint", model] if producer == "dejavu" else []
    run("evaluate", *common, "--dataset", data, "--producer", producer, *extra, "--out", str(WORK / "eval"))
    validate(WORK / f"eval/eval_{producer}.json", "eval_report")
    validate(WORK / f"eval/timing_{producer}.json", "timing")

failure = "F0025"
run("localize", *common, "--dataset", data, "--checkpoint", model, "--failure", failure, "--out", str(WORK / "loc"))
ranking = validate(WORK / f"loc/ranking_{failure}.json", "ranking")
if ranking is not None:
    ranks = [e["rank"] for e in ranking["ranking"]]
    if ranks != list(range(1, len(ranks) + 1)):
        failures.append("ranking is not 1..N")

stdout = run("localize", *common, "--dataset", data, "--checkpoint", model, "--failure", failure,
             "--format", "json").stdout
try:
    jsonschema.validate(json.loads(stdout), json.loads((SCHEMAS / "ranking.schema.json").read_text()))
except (ValueError, jsonschema.ValidationError) as e:
    failures.append(f"localize --format json stdout: {e}")

run("interpret-local", *common, "--dataset", data, "--checkpoint", model, "--failure", failure, "--k", "2",
    "--out", str(WORK / "local"))
similar = validate(WORK / f"local/similar_{failure}.json", "similar")
if similar is not None and len(similar["similar"]) != 2:
    failures.append("interpret-local did not honour --k")

run("interpret-global", *common, "--dataset", data, "--checkpoint", model, "--out", str(WORK / "global"))
validate(WORK / "global/rules.json", "rules")

run("ablate", *common, "--dataset", data, "--variant", "no_agg", "--out", str(WORK / "ablate"))
validate(WORK / "ablate/ablation_no_agg.json", "ablation")
run("edge-removal", *common, "--dataset", data, "--fraction", "0.2", "--repeats", "1", "--out", str(WORK / "er"))
validate(WORK / "er/edge_removal.json", "sweep")
run("train-fraction", *common, "--dataset", data, "--fraction", "0.5", "--out", str(WORK / "tf"))
validate(WORK / "tf/train_fraction.json", "sweep")

# Error paths.
err = run("localize", *common, "--dataset", data, "--checkpoint", model, "--failure", "nope", expect_ok=False)
if "unknown failure id" not in err.stderr:
    failures.append(f"unknown failure id message missing: {err.stderr!r}")
run("evaluate", *common, "--dataset", str(WORK / "missing"), "--producer", "rw_fi", expect_ok=False)
run("evaluate", *common, "--dataset", data, expect_ok=False)  # dejavu needs a checkpoint
run("ablate", *common, "--dataset", data, "--variant", "bogus", expect_ok=False)

if failures:
    print("\n".join(failures))
    sys.exit(1)
print("cli smoke: all subcommands and schemas ok")
