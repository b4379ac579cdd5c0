"""Running a sweep from a config file with the bench command.

The same entry point used on the command line is called here with a short
seed list. Output goes to a temporary directory through the environment
variable that sets the default output location.
"""

import csv
import os
import tempfile
from pathlib import Path

from diffstategrad.bench.cli import main

config = Path(__file__).resolve().parent.parent / "configs" / "step_size.ini"
with tempfile.TemporaryDirectory() as tmp:
    os.environ["DIFFSTATEGRAD_OUT"] = tmp
    code = main(["run", str(config), "--seeds", "0..3", "--workers", "2"])
    (path,) = Path(tmp).glob("*.csv")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
print(f"exit code {code}, {len(rows)} rows, columns: {', '.join(list(rows[0])[:6])} ...")
