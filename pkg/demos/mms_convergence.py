"""Manufactured-solution refinement study in 2D and 3D.

Run from the repository root:  python3 demos/mms_convergence.py
"""

from ewdecay.mms import MMSConfig, convergence_study, format_table

for label, cfg in (("2D radial, damped, p = 3", MMSConfig()),
                   ("2D linear, undamped, f off", MMSConfig(case="linear", damping=False,
                                                           nonlinear=False)),
                   ("3D radial, damped, p = 3", MMSConfig(dim=3, n_r=4, n_face=4))):
    print(label)
    print(format_table(convergence_study(cfg, 3)))
    print()
