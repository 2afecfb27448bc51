"""Functional principal components: spectra, scores, and reconstruction.

Generates a sample of curves from a five-term expansion with decaying score
variances, fits FPCA, and shows how the estimated spectrum and truncation
behave.
"""

import dataclasses

import numpy as np

from sfdnn import Grid, fit_fpca, project_scores, reconstruct
from sfdnn.simgen import kl_basis_matrix, kl_score_variances

rng = np.random.default_rng(7)
grid = Grid.uniform(101)

n = 400
scores_true = rng.normal(size=(n, 5)) * np.sqrt(kl_score_variances())
curves = scores_true @ kl_basis_matrix(grid)

model = fit_fpca(curves, grid, variance_threshold=0.95)
print("estimated leading eigenvalues:", np.round(model.eigenvalues[:6], 4))
print("generating score variances:  ", np.round(kl_score_variances(), 4))
print(f"components kept for 95% of the variance: {model.k_retained}")

scores = project_scores(model, curves, grid)
print(f"\nscore matrix: {scores.shape};  column variances {np.round(scores.var(axis=0, ddof=1), 4)}")

rebuilt = reconstruct(model, scores)
err = np.mean((curves - rebuilt) ** 2)
print(f"mean squared reconstruction error at K={model.k_retained}: {err:.6f}")

print("\nreconstruction error as the truncation level grows:")
for k in range(1, 6):
    forced = dataclasses.replace(model, k_retained=k)
    rebuilt_k = reconstruct(forced, project_scores(forced, curves, grid))
    print(f"  K={k}: {np.mean((curves - rebuilt_k) ** 2):.6f}")
