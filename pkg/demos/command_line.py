"""
Driving everything from a config file
=====================================

The ``sniftle`` command reads a TOML file. This script writes one and
calls the entry point in-process, which is what ``sniftle point --config
run.toml`` does from a shell.
"""

from sniftle.cli import main

with open("run.toml", "w") as fh:
    fh.write("""\
seed = 42

[model]
builtin = "double_gyre"
params = { A = 0.1, eps = 0.1 }

[scales]
eps = 1e-3
delta = 1e-3
xi_cov = [[1.0, 0.0], [0.0, 0.25]]

[integrator]
step_size = 1e-2

[point]
xi0 = [1.0, 0.5]
t = 5.0

[scan]
grid = [[0.0, 2.0, 21], [0.0, 1.0, 11]]
times = [5.0]

[montecarlo]
samples = 2000
em_step = 5e-3
""")

main(["point", "--config", "run.toml"])
main(["scan", "--config", "run.toml", "--output", "field.csv"])
status = main(["validate", "--config", "run.toml"])
print("validate exit status", status)
