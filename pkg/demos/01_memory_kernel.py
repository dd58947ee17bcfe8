"""
The fading-memory kernel
========================

Product-integration weights for ``K(t) = t**(-beta) exp(-delta t)``, their
total mass, the positivity of the quadrature, and a sum-of-exponentials
compression of the kernel.
"""

# %%
import math

import numpy as np

from viscomem import KernelParams, fit_soe, kernel_moment, make_weights
from viscomem.kernel import positivity_certificate, weight_matrix_spectrum

kp = KernelParams(beta=0.5, delta=1.0, rho=0.5)
w = make_weights(kp, dt=0.01, n=4000)
print("first weights:", w.omega[:4])

# %%
# The weights integrate the kernel exactly, so their sum approaches the
# kernel mass Gamma(1-beta)/delta**(1-beta).
print("sum of weights:", w.partial_sum(len(w)), " kernel mass:", kernel_moment(kp))

# %%
# Positivity: the symmetrized Toeplitz matrix of the first 128 weights has
# no negative eigenvalues, and random histories never give a negative form.
short = make_weights(kp, 0.05, 128)
lo, hi = weight_matrix_spectrum(short)
print(f"eigenvalues in [{lo:.3e}, {hi:.3e}]")
print("certificate over 1000 histories:", positivity_certificate(short, 1000, seed=1))

# %%
# Compression: a few dozen exponentials reproduce the kernel to 1e-8 on
# [dt, 10], which makes each history update O(modes) instead of O(n).
soe = fit_soe(kp, dt=1e-3, horizon=10.0, tol=1e-8)
t = np.geomspace(1e-3, 10.0, 7)
print(f"{soe.n_modes} modes, certified relative error {soe.certified_rel_error:.2e}")
for ti, approx in zip(t, soe(t)):
    exact = ti**-0.5 * math.exp(-ti)
    print(f"  t={ti:9.4f}  K={exact:.10f}  soe={approx:.10f}")
