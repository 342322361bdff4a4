"""Print a label diagram from a sweep summary written by ``stochfem sweep``.

    stochfem sweep --model barkley --config demos/configs/barkley_sweep.toml
    python3 demos/bifurcation.py out/barkley_sweep/sweep_summary.csv

Rows are the second axis (top = largest), columns the first.  A trailing
``*`` marks a cell whose runs split between RW and DW.
"""
import csv
import sys

path = sys.argv[1] if len(sys.argv) > 1 else "out/barkley_sweep/sweep_summary.csv"
with open(path, newline="") as fh:
    cells = list(csv.DictReader(fh))
xs = sorted({float(c["axis1"]) for c in cells})
ys = sorted({float(c["axis2"]) for c in cells}, reverse=True)
label = {(float(c["axis1"]), float(c["axis2"])):
         c["modal"] + ("*" if c["transition"] == "1" else "") for c in cells}
print("axis2 \\ axis1 " + "".join(f"{x:>7g}" for x in xs))
for y in ys:
    print(f"{y:>13g} " + "".join(f"{label.get((x, y), '-'):>7}" for x in xs))
