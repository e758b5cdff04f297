"""
Working from files
==================

The same steps through files: write a profile CSV, fit it with a JSON
config, and read back the artifacts. The ``aurora-nmrd`` command runs the
same functions; the equivalent shell lines are shown as comments.
"""

import json
import tempfile
from pathlib import Path

from aurora_nmrd.cli import run_fit, run_kernel_dump, run_synth
from aurora_nmrd.fileio import read_kernel_csv, read_profile, read_series

work = Path(tempfile.mkdtemp(prefix="aurora-demo-"))
config = work / "config.json"
config.write_text(json.dumps({"nu_lo": 1.5, "nu_hi": 3.5, "output_dir": str(work)}, indent=2))

# aurora-nmrd synth --delta 0.01 --output-dir DIR
code, paths = run_synth(flags={"delta": 0.01, "output_dir": str(work)})
print("synth wrote:", *(p.name for p in paths.values()))
profile = read_profile(paths["noisy"])
print("noisy profile: %d points from %.2f to %.1f MHz" % (profile.m, profile.nu[0], profile.nu[-1]))

# aurora-nmrd fit DIR/default_noisy.csv --config DIR/config.json
code, paths = run_fit(paths["noisy"], config)
print("\nfit exit code", code, "->", *(p.name for p in paths.values()))
doc = json.loads(paths["result"].read_text())
for key in ("r0", "c_hn", "tau_q", "nu_minus", "nu_plus", "lambda_star", "mse"):
    print(f"  {key:12s} {doc[key]:.5g}")

cols, curve = read_series(paths["curve"])
print("\ncurve columns:", cols, "rows:", len(curve))

# aurora-nmrd kernel-dump --n-tau 5 --nu-mhz 0.1,1,10
run_kernel_dump(flags={"n_tau": 5, "nu_mhz": "0.1,1,10", "output_dir": str(work)})
nu, tau, k = read_kernel_csv(work / "kernel.csv")
print("\nkernel tau headers:", tau)
print(k.round(5))
print("\nartifacts left in", work)
