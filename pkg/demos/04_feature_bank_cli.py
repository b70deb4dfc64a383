"""
Offline labeling of exported features
=====================================

Features and logits from any model can be written to a BMDFB1 text bank
and labeled without the training loop. Here the bank comes from the
built-in benchmark; the same commands are available as ``bmd gen-data`` and
``bmd label`` on the command line.
"""

import csv
import tempfile
from pathlib import Path

import numpy as np

from bmd.cli import main
from bmd.io import read_feature_bank

work = Path(tempfile.mkdtemp())
assert main(["gen-data", "--seed", "3", "--labels", "--out", str(work / "bank.csv")]) == 0
bank = read_feature_bank(work / "bank.csv")
print(f"bank: n={bank.n} d={bank.d} K={bank.num_classes}")
print((work / "bank.csv").read_text().splitlines()[0])

for strategy in ("naive", "mono", "bp", "bmd-static"):
    out = work / strategy
    assert main(["label", "--input", str(work / "bank.csv"), "--strategy", strategy, "--out", str(out)]) == 0
    with open(out / "labels.csv") as fh:
        hard = np.array([int(r["hard_label"]) for r in csv.DictReader(fh)])
    print(f"{strategy:<11} agreement with truth {np.mean(hard == bank.labels):.4f}")

# %%
# Errors are single lines prefixed with "error:" and a nonzero exit status.
(work / "broken.csv").write_text("# BMDFB1 n=1 d=2 K=2 logits=1 labels=0\n0.1,oops,0,1\n")
status = main(["label", "--input", str(work / "broken.csv"), "--strategy", "bp", "--out", str(work)])
print("exit status", status)
