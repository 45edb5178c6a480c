"""Multiplier inequality slack on a sequence of annulus meshes.

The slack (lhs - rhs) is positive at every level and shrinks like h, so
the discrete terms approach the equality case for phi = 1.

Run from the repository root:  python3 demos/morawetz_refinement.py
"""

from ewdecay.config import RunConfig
from ewdecay.diagnostics import CutoffSpec, MorawetzAccumulator
from ewdecay.dynamics import LeapfrogIntegrator, NonlinearityParams, initial_data, stable_dt
from ewdecay.pipeline import build_damping, build_mesh, build_tensor
from ewdecay.fem import assemble

base = RunConfig()
prev = None
print("  n_r  n_theta   normalized slack   cutoff phi slack   ratio")
for k in range(4):
    cfg = base.replace(geometry={"n_r": 6 * 2**k, "n_theta": 48 * 2**k})
    mesh = build_mesh(cfg)
    system = assemble(mesh, build_tensor(cfg), build_damping(cfg, mesh))
    nl = NonlinearityParams.make(3.0, 2)
    dt = stable_dt(system, 0.9, cfg.time.dt_max)
    u0, v0 = initial_data(mesh, "fourier-mode", 0.2)
    accs = [MorawetzAccumulator(system, 1.0, 4.0, CutoffSpec(), nl.p),
            MorawetzAccumulator(system, 1.0, 4.0, CutoffSpec("cutoff", 1.5, 1.8), nl.p)]
    integ = LeapfrogIntegrator(system, dt, nl)
    integ.start(u0, v0)
    trace = integ.run(int(round(cfg.time.T / dt)), 1, [a.observer for a in accs])
    one, cut = (a.report(trace.e_total[0]).normalized_slack for a in accs)
    ratio = "" if prev is None else f"{prev / one:7.3f}"
    print(f"{cfg.geometry.n_r:5d} {cfg.geometry.n_theta:8d} {one:18.6e} {cut:18.6e}   {ratio}")
    prev = one
