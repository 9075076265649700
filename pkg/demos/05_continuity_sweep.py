"""
Following the flow as the twisting parameter changes
====================================================

The continuity protocol solves the flow on a slab for a list of s values,
checks that solutions for nearby s stay close, and runs each to
convergence.  Here it runs through the command line entry point, writing
its JSON and CSV output to a temporary directory.
"""
import json
import tempfile
from pathlib import Path

from twistcal.cli import cli_main

out = Path(tempfile.mkdtemp(prefix="twistcal-sweep-"))
code = cli_main([
    "sweep",
    "--set", "grid.n=32",
    "--set", "flow.T=0.5",
    "--set", "flow.dt=1e-3",
    "--set", "sweep.s_values=[0.02, 0.04, 0.08]",
    "--set", f"output.dir={out}",
])
print("exit code", code)
report = json.loads((out / "sweep_report.json").read_text())
print("all phases passed:", report["passed"])
for rec in report["records"]:
    print(f"s = {rec['s']:.3f}  {rec['verdict']:10s} rate {rec['eta_fit']:8.3f}  converged at t = {rec['t_converged']:.3f}")
print("output in", out)
