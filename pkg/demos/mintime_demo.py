"""Lower bound on the time needed to reach a steady state with v >= 0.

Two initial states are tried: one with extra mass outside the control
region (the comparison test function certifies) and one lying below the
target (a cut-off adjoint datum certifies). The search then looks for the
shortest horizon on a ladder where a nonnegative control actually works.
"""
from quasicontrol import ExperimentConfig, run_experiment

for case in (1, 2):
    cfg = ExperimentConfig(scenario="mintime", mintime_case=case, search_ladder=[0.25, 0.5, 1.0, 2.0])
    b = run_experiment(cfg, write=False)
    s = b.summary
    print(f"case {case} ({s['mode']}): T0 = {s['T0']:.3e}, smallest achieved = {s['smallest_achieved_nonneg']:g}")
    for row in b.tables["achievability"]:
        print(f"  T={row['T']:.3e}  {row['verdict']:<26} min v {row['min_control']:.3e}")
