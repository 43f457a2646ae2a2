"""End-to-end artifact flow through the command line interface.

Every stage is the same `corrstn <subcommand>` a shell user would run; here
they are driven in-process so the demo cleans up after itself. Artifacts land
in a temporary directory: dataset -> spatial tensor -> temporal report ->
checkpoint -> metric report -> plot CSVs.
"""

import json
import os
import tempfile

from corrstn.cli import main

CONFIG = dict(encoder_layers=1, decoder_layers=1, d_model=8, heads=2,
              top_u=2, periods=["hourly"], learning_rate=0.01)

# 10% train / 10% val keeps the demo fast; real runs use the 6:2:2 default
RATIOS = "0.1,0.1,0.8"


def run(label, argv):
    print(f"\n$ corrstn {' '.join(argv)}")
    code = main(argv)
    if code != 0:
        raise SystemExit(f"{label} exited with {code}")


with tempfile.TemporaryDirectory() as work:
    art = lambda name: os.path.join(work, name)
    with open(art("config.json"), "w") as fh:
        json.dump(CONFIG, fh)

    run("synth", ["synth", "--out", art("traffic.sttf"),
                  "--edges-out", art("edges.csv"),
                  "--sensors", "4", "--weeks", "2", "--interval", "5",
                  "--noise", "0.1", "--seed", "11"])

    run("scorr", ["scorr", "--data", art("traffic.sttf"),
                  "--out", art("spatial.scor"),
                  "--csv-out", art("spatial.csv")])

    run("tcorr", ["tcorr", "--data", art("traffic.sttf"),
                  "--out", art("tcorr.json")])

    run("select", ["select", "--report", art("tcorr.json")])

    run("train", ["train", "--data", art("traffic.sttf"),
                  "--edges", art("edges.csv"),
                  "--scorr", art("spatial.scor"),
                  "--config", art("config.json"),
                  "--out-dir", art("run"),
                  "--epochs", "3", "--ratios", RATIOS, "--seed", "0"])

    run("evaluate", ["evaluate", "--data", art("traffic.sttf"),
                     "--edges", art("edges.csv"),
                     "--scorr", art("spatial.scor"),
                     "--config", os.path.join(art("run"), "config.json"),
                     "--checkpoint", os.path.join(art("run"), "checkpoint.cstn"),
                     "--out", art("eval.json"),
                     "--split", "val", "--ratios", RATIOS,
                     "--horizon-csv", art("horizon.csv")])

    run("predict", ["predict", "--data", art("traffic.sttf"),
                    "--edges", art("edges.csv"),
                    "--scorr", art("spatial.scor"),
                    "--config", os.path.join(art("run"), "config.json"),
                    "--checkpoint", os.path.join(art("run"), "checkpoint.cstn"),
                    "--out", art("forecasts.npy"),
                    "--split", "val", "--ratios", RATIOS])

    run("export-plot-data", ["export-plot-data",
                             "--metric-reports", art("eval.json"),
                             "--tcorr-report", art("tcorr.json"),
                             "--out-dir", art("plots")])

    print("\nartifacts produced:")
    for root, _, files in sorted(os.walk(work)):
        for name in sorted(files):
            path = os.path.join(root, name)
            rel = os.path.relpath(path, work)
            print(f"  {rel:<28} {os.path.getsize(path):>8} bytes")
