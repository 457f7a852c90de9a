# Compare the full model with variants that drop the partial branch or the frequency condition,
# on scenarios where the holistic stream cannot tell persons apart. Takes several minutes.
import tempfile

from segdiff import cli
from segdiff.config import RunConfig
from segdiff.synthdata import ScenarioConfig, write_dataset

with tempfile.TemporaryDirectory() as d:
    manifest = write_dataset(d + "/data", ScenarioConfig(persons=3, classes=4, snr=10.0, seed=1), 91)
    cfg = RunConfig(lr=1e-3, epochs=40, manifest=str(manifest), out_dir=d + "/abl")
    rows = cli.run_ablation(cfg, ["full", "no_dft_cond", "no_partial"])
    print(cli.format_table(rows))
