"""Turning curves into features: B-spline bases and quadrature inner products.

A curve observed on a grid enters the regression models through its inner
products with a fixed spline basis.  This walk-through builds a cubic basis,
checks the partition of unity, and projects a couple of sample curves.
"""

import numpy as np

from sfdnn import Grid, evaluate_basis, functional_inner_products, make_bspline_basis

grid = Grid.uniform(101)
basis = make_bspline_basis(degree=3, num_basis=7)
print(f"cubic basis with {basis.num_basis} functions")
print(f"interior knots: {np.round(basis.interior_knots, 3)}")

values = evaluate_basis(basis, grid)
print(f"basis matrix shape: {values.shape}  (functions x grid points)")
print(f"max |column sum - 1| = {np.max(np.abs(values.sum(axis=0) - 1.0)):.2e}  (partition of unity)")

# two sample curves: a smooth sinusoid and a polynomial
curves = np.vstack([
    np.sin(2 * np.pi * grid.points),
    grid.points**2,
])
features = functional_inner_products(basis, curves, grid)
print("\ninner products of each curve with each basis function:")
for label, row in zip(("sin(2*pi*u)", "u^2"), features):
    print(f"  {label:12s} -> {np.round(row, 4)}")

# the row for a constant curve sums to one: the basis integrates to 1
const = functional_inner_products(basis, np.ones((1, grid.num_points)), grid)
print(f"\nconstant curve: feature row sums to {const.sum():.12f}")
