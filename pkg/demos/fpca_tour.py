"""
Adaptive functional PCA on simulated curves
===========================================

Curves are drawn as ``mu(t) + xi_1 phi_1(t) + xi_2 phi_2(t) + noise`` and
the model is fitted with more components than needed. Components whose
variance is negligible are dropped when the cumulative share of variance
reaches ``pve``.

Run with ``python demos/fpca_tour.py``.
"""

import numpy as np

from afpca import FpcaConfig, fit_afpca, generate_dataset, ise

sim = generate_dataset(I=50, sigma2=0.1, seed=7)
grid = sim.grid
print(f"{sim.dataset.n_subjects} subjects, {sim.dataset.n_obs} observations")

model = fit_afpca(sim.dataset, FpcaConfig(P=40, K_init=15, pve=0.99))
print(f"K kept: {model.K}  iterations: {model.n_iter}  converged: {model.converged}")
print("score variances:", np.round(model.eigenvalues, 3), "(truth 4 and 1)")
print("cumulative share:", np.round(model.pve_cum, 4))
print(f"noise variance estimate: {model.sigma2:.4f} (truth 0.1)")

# Components are only defined up to sign.
true_fpcs = sim.truth.fpcs(grid)
for k in range(min(2, model.K)):
    err = ise(model.fpcs(grid)[:, k], true_fpcs[:, k], grid, sign_invariant=True)
    print(f"ISE phi_{k + 1}: {err:.4f}")
print(f"ISE mean: {ise(model.mean(grid), sim.truth.mean(grid), grid):.4f}")

# Reconstruction of the first subject against its noiseless curve.
fitted = model.reconstruct(0, grid)
print(f"subject 0 reconstruction ISE: {ise(fitted, sim.noiseless[0], grid):.4f}")

# Orthonormality of the fitted components on a fine grid.
fine = np.linspace(0, 1, 4001)
Phi = model.fpcs(fine)
gram = np.trapezoid(Phi[:, :, None] * Phi[:, None, :], fine, axis=0)
print("Gram matrix:\n", np.round(gram, 4))
