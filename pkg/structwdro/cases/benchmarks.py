"""
The two numerical instances used to exercise the relaxation hierarchy and the outer
minimisation, together with their reference sweep curves (:func:`golden_curves`)

Random instance generators for property checks live here as well.
"""

from itertools import permutations

import numpy as np

from ..core.distributions import TransportCost, make_distribution
from ..core.losses import ParametricPolyhedralLoss, PolyhedralLoss
from ..core.program import UQInstance, sweep_outer_dro, sweep_relaxation

# l(x) = min(2 x1 + 5 x2, -5 x1 + 2 x2)
piecewise_linear_vertices = np.array([[2.0, 5.0, 0.0], [-5.0, 2.0, 0.0]])

# Data-generating distribution behind the piecewise linear instance, at transport
# distance 0.19 from its nominal
piecewise_linear_true = {"atoms": [[-0.9], [1.1]], "weights": [0.3, 0.7]}

outer_W = np.array(
    [[1.0, 1.0, -1.0], [-1.0, 0.0, 0.0], [1.5, -0.5, -0.5], [0.0, 0.0, 1.0]]
)
outer_G = np.array([[-1.0], [1.0], [-1.0], [1.0]])
outer_g0 = np.array([1.0, 0.0, 0.5, 0.0])


def piecewise_linear_instance(rho=0.2, norm="l2"):
    """
    Loss min(2 x1 + 5 x2, -5 x1 + 2 x2) on two blocks, nominal
    0.25 delta_{-1} + 0.75 delta_1. At rho = 0 every bound equals -2.875.
    """
    nominal = make_distribution([[-1.0], [1.0]], [0.25, 0.75])
    loss = PolyhedralLoss.from_vertices(piecewise_linear_vertices, 1, 2)
    return UQInstance(nominal, rho, TransportCost(norm, 1), loss)


def outer_dro_instance(theta_lower=-3.0, theta_upper=3.0):
    """
    Parametric loss with H(theta) = {h : W h <= G theta + g0}, decision box
    [theta_lower, theta_upper], nominal (delta_{-1} + delta_1) / 2 and rho = 1/4

    H(theta) is empty for theta < -2/3.

    Returns
    -------
    (ParametricPolyhedralLoss, DiscreteDistribution, float, TransportCost)
    """
    ploss = ParametricPolyhedralLoss(
        outer_W, outer_G, outer_g0, [theta_lower], [theta_upper], 1, 2
    )
    nominal = make_distribution([[-1.0], [1.0]], [0.5, 0.5])
    return ploss, nominal, 0.25, TransportCost("l2", 1)


def symmetric_vertices(rng, n, N=2, n_pieces=2, scale=3.0):
    """
    Vertex set closed under block permutations, from ``n_pieces`` random affine
    pieces
    """
    rows = []
    for _ in range(n_pieces):
        a = rng.uniform(-scale, scale, size=(N, n))
        b = rng.uniform(-scale, scale)
        for perm in permutations(range(N)):
            rows.append(np.concatenate([a[list(perm)].ravel(), [b]]))
    return np.unique(np.array(rows), axis=0)


def random_instance(
    rng, *, n=1, N=2, n_atoms=2, n_pieces=2, norm="l2", symmetric=False
):
    """
    Random vertex-representation instance with a random nominal and radius
    """
    atoms = rng.uniform(-2.0, 2.0, size=(n_atoms, n))
    weights = rng.dirichlet(np.ones(n_atoms))
    nominal = make_distribution(atoms, weights)
    if symmetric:
        H = symmetric_vertices(rng, n, N, n_pieces)
    else:
        H = rng.uniform(-3.0, 3.0, size=(n_pieces, n * N + 1))
    loss = PolyhedralLoss.from_vertices(H, nominal.dimension, N)
    rho = float(rng.uniform(0.05, 0.5))
    return UQInstance(nominal, rho, TransportCost(norm, nominal.dimension), loss)


def golden_curves(*, tolerance=1.0e-9, jobs=1, atol=1.0e-7):
    """
    Relaxation sweep M = 2..16 of the piecewise linear instance at rho = 0.2 and
    outer sweep M = 2..8 (proxy at M_max = 8) of the parametric instance, in the
    layout of ``fixtures/golden_curves.json``

    ``atol`` is stored with each curve as the comparison tolerance.
    """

    def strip(points, keys):
        return [{key: point[key] for key in keys if key in point} for point in points]

    instance = piecewise_linear_instance(rho=0.2)
    relaxation = sweep_relaxation(
        instance, range(2, 17), tolerance=tolerance, jobs=jobs
    ).to_dict()
    ploss, nominal, rho, cost = outer_dro_instance()
    outer = sweep_outer_dro(
        ploss, nominal, rho, cost, range(2, 9), M_max=8, tolerance=tolerance, jobs=jobs
    ).to_dict()
    return {
        "relaxation": {
            "rho": instance.radius,
            "atol": atol,
            "points": strip(relaxation["points"], ("M", "value", "status")),
        },
        "outer_dro": {
            "rho": rho,
            "M_max": outer["M_max"],
            "M_star": outer["M_star"],
            "atol": atol,
            "points": strip(
                outer["points"], ("M", "theta", "value", "proxy", "status")
            ),
        },
    }
