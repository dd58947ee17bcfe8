"""
Convergence under refinement
============================

Manufactured solutions give second order in space for the steady solver and
first order in time for the transient scheme.
"""

# %%
from viscomem import KernelParams
from viscomem.analysis import convergence_table

kp = KernelParams(0.5, 1.0, 0.5)


def show(title, rows):
    print(title)
    for r in rows:
        order = "" if r["order"] is None else f"{r['order']:.3f}"
        print(f"  h={r['h']:.5f} dt={r['dt']:.5f} error={r['error']:.3e} order={order}")


show("steady, space", convergence_table("space", 3, kp, base=16, solver="steady"))

# %%
# Time refinement uses forcing built from the grid operators, so the
# spatial error is absent and the first-order time error is visible.
show("transient, time", convergence_table("time", 3, kp, mu=0.1, base=32, dt0=0.05, alpha=0.9,
                                          solver="transient", discrete=True))
