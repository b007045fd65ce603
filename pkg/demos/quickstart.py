"""Command-line walk-through on a small synthetic world.

Generates data, trains a temperature model on one fold, predicts the held-out
stations and scores them against the GP baseline, all through the ``downcnp``
command-line entry point. The model here is kept small so the script finishes in
seconds, and at this size the baseline usually wins; topography_ablation.py uses
the larger configuration from the acceptance suite.

    python demos/quickstart.py [workdir]
"""

import json
import sys
import tempfile
from pathlib import Path

from downcnp.cli import main
from downcnp.data import folds_for_dates, load_dataset, read_split


def run(*argv):
    print("$ downcnp", " ".join(argv))
    code = main(list(argv))
    if code:
        sys.exit(code)


def demo(work):
    work.mkdir(parents=True, exist_ok=True)
    cfg = work / "config.json"
    cfg.write_text(json.dumps({
        "data_dir": str(work / "data"), "variable": "tmax",
        "synth": {"seed": 0, "n_days": 120, "n_lat": 12, "n_lon": 12, "n_stations": 24, "n_heldout": 6},
        "model": {"hidden_channels": 16, "n_resnet_blocks": 2},
        "train": {"epochs": 10, "batches_per_epoch": 8, "patience": 4}}, indent=2))
    run("synth", "--config", str(cfg))
    run("train", "--config", str(cfg), "--out", str(work / "run"))

    ds = load_dataset(work / "data", "tmax")
    held = set(read_split(work / "data")["heldout"])
    rows = ["id,lon,lat,elev,elev_diff,mtpi"] + [
        f"{s.id},{s.lon},{s.lat},{s.elevation},{s.elev_diff},{s.mtpi}" for s in ds.stations if s.id in held]
    (work / "sites.csv").write_text("\n".join(rows) + "\n")
    # score both methods on the test window of fold 1, the fold train and baseline use by default
    _, test_days = folds_for_dates(ds.dates)[0].day_indices(ds.dates)
    span = f"{ds.dates[test_days[0]].isoformat()}:{ds.dates[test_days[-1]].isoformat()}"
    run("predict", "--checkpoint", str(work / "run" / "checkpoint"), "--sites", str(work / "sites.csv"),
        "--dates", span, "--samples", "5", "--out", str(work / "predictions.csv"))
    run("evaluate", "--config", str(cfg), "--predictions", str(work / "predictions.csv"),
        "--out", str(work / "report"))
    run("baseline", "--config", str(cfg), "--out", str(work / "baseline.csv"))
    run("evaluate", "--config", str(cfg), "--predictions", str(work / "baseline.csv"),
        "--out", str(work / "baseline_report"))

    for name in ("report", "baseline_report"):
        summary = json.loads((work / name / "summary.json").read_text())
        print(f"{name}: median held-out MAE {summary['quartiles']['mae']['median']:.3f}")
    print("outputs in", work)


if __name__ == "__main__":
    demo(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="downcnp-")))
