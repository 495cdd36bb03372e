"""Full solve at one delta: root in tau, physical wave, threshold table and SVG figures."""

import sys

from vortex_spike.pipeline import RunConfig, cmd_diagnose, cmd_solve

delta = float(sys.argv[1]) if len(sys.argv) > 1 else 0.35
cfg = RunConfig.from_dict({"delta": delta, "out": "runs"})
res = cmd_solve(cfg)
d = res.diagnostics
print(f"tau*           = {d['tau']:+.10e}")
print(f"sup |eta|      = {d['sup_eta']:.4e}   (surface depression, min eta = {d['min_eta']:.4e})")
print(f"kinetic ratio  = {d['kinetic_ratio']:.5f}")
print(f"|eta - eta0|   = {d['eta0_distance']:.4f} relative")
table, ok = cmd_diagnose(res.directory)
for name, row in table.items():
    print(f"  {'PASS' if row['pass'] else 'FAIL'}  {name:<20} {row['rule']}")
print(f"figures in {res.directory / 'figures'}")
