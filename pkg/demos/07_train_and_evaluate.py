# Train the dual-branch model on a small synthetic set and score the test split.
# About a minute on one core; raise epochs for better numbers.
import tempfile
import time

from segdiff import cli
from segdiff.config import RunConfig
from segdiff.synthdata import ScenarioConfig, write_dataset

with tempfile.TemporaryDirectory() as d:
    manifest = write_dataset(d + "/data", ScenarioConfig(persons=2, classes=4, snr=10.0), 40)
    cfg = RunConfig(lr=1e-3, epochs=15, manifest=str(manifest), out_dir=d + "/run")
    t0 = time.time()
    model, val = cli.run_training(cfg)
    print(f"trained in {time.time() - t0:.0f}s")
    rows = cli.load_split(cli.load_manifest(manifest), "test")
    report, preds = cli.evaluate_rows(model, rows, workers=1)
    print({k: round(v, 1) for k, v in report.headline().items()})

    from segdiff.render import render_timeline
    with open("timeline.svg", "w") as fh:
        fh.write(render_timeline(preds[0], rows[0][3], rows[0][0]))
    print("wrote timeline.svg")
