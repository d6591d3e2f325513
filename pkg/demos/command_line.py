"""
Driving the toolkit from the command line
=========================================

Every capability is reachable through ``dln-nse`` (or ``python -m
dln_nse``). Here the entry point is called in-process and its output
files land in a temporary directory.
"""

import os
import tempfile
from pathlib import Path

from dln_nse.cli import main, read_ledger

root = Path(tempfile.mkdtemp())
os.environ["DLN_NSE_OUTPUT_ROOT"] = str(root)

main(["certify", "--theta", "0.5", "--dt", "0.2", "--output", "cert"])
main(["sweep", "--theta-grid", "0.1:0.9:0.2", "--dt-fracs", "0.5,0.99", "--output", "sweep"])
code = main(["simulate", "--preset", "unforced-decay", "--steps", "100", "--n", "16",
             "--output", "decay"])
print("simulate exit code:", code)

header, data, cols = read_ledger(root / "decay" / "ledger.csv")
g = data[:, cols.index("g_norm_sq")]
print(f"G-norm^2 went from {g[0]:.4e} to {g[-1]:.4e} over {len(g)} steps")
print("files:", sorted(p.name for p in (root / "decay").iterdir()))
