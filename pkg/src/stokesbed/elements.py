"""Tensor-product Lagrange elements and Gauss quadrature on the unit square.

The reference cell is [0,1]^2.  Scalar spaces Q1/Q2/Q3 are tensor products
of 1D Lagrange polynomials on equispaced nodes.  Cell geometry is always
biquadratic (Q2, 9 nodes), so meshes can carry curved inclusion boundaries.

Local node ordering of a cell follows the mesh convention
(counter-clockwise corners, then edge midpoints, then interior nodes):

* Q1: corners BL, BR, TR, TL.
* Q2: corners, mids of edges (bottom, right, top, left), center.
* Q3: corners, two nodes per edge (in edge direction), 4 interior nodes.

Edge direction is bottom: BL->BR, right: BR->TR, top: TR->TL, left: TL->BL,
i.e. counter-clockwise around the cell.
"""

import numpy as np

# corner coordinates, counter-clockwise from bottom-left
CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
# local edges as (first corner, second corner), counter-clockwise
EDGE_CORNERS = ((0, 1), (1, 2), (2, 3), (3, 0))


def lagrange_nodes_1d(degree):
    """Equispaced 1D Lagrange nodes on [0,1]."""
    return np.linspace(0.0, 1.0, degree + 1)


def lagrange_eval_1d(degree, t, deriv=0):
    """Evaluate the 1D Lagrange basis (or its derivative) at points t.

    Returns array of shape (degree+1, len(t)).
    """
    t = np.asarray(t, dtype=float)
    nodes = lagrange_nodes_1d(degree)
    n = degree + 1
    out = np.empty((n, t.size))
    for i in range(n):
        others = np.delete(nodes, i)
        denom = np.prod(nodes[i] - others)
        if deriv == 0:
            vals = np.ones_like(t)
            for xj in others:
                vals = vals * (t - xj)
            out[i] = vals / denom
        elif deriv == 1:
            vals = np.zeros_like(t)
            for skip in range(n - 1):
                term = np.ones_like(t)
                for j, xj in enumerate(others):
                    if j != skip:
                        term = term * (t - xj)
                vals += term
            out[i] = vals / denom
        else:
            raise ValueError("only deriv 0 or 1 supported")
    return out


def local_nodes(degree):
    """Reference coordinates of the local nodes, shape (n_loc, 2).

    Ordering: corners CCW, then edge nodes edge by edge in edge direction,
    then interior nodes in lexicographic (x fastest) order.
    """
    ts = lagrange_nodes_1d(degree)
    pts = [c for c in CORNERS]
    for (a, b) in EDGE_CORNERS:
        pa, pb = CORNERS[a], CORNERS[b]
        for k in range(1, degree):
            s = ts[k]
            pts.append(pa + s * (pb - pa))
    interior = ts[1:-1]
    for y in interior:
        for x in interior:
            pts.append(np.array([x, y]))
    return np.array(pts).reshape(-1, 2)


def _tensor_index_map(degree):
    """Map local node index -> (i, j) tensor indices of the 1D bases."""
    ts = lagrange_nodes_1d(degree)
    pts = local_nodes(degree)
    idx = np.empty((len(pts), 2), dtype=int)
    for k, (x, y) in enumerate(pts):
        i = int(np.argmin(np.abs(ts - x)))
        j = int(np.argmin(np.abs(ts - y)))
        assert abs(ts[i] - x) < 1e-12 and abs(ts[j] - y) < 1e-12
        idx[k] = (i, j)
    return idx


class ScalarElement:
    """Scalar Q_degree element with vectorized evaluation."""

    def __init__(self, degree):
        self.degree = degree
        self.nodes = local_nodes(degree)
        self.n_loc = len(self.nodes)
        self._tmap = _tensor_index_map(degree)

    def eval(self, points):
        """Basis values at reference points, shape (n_loc, n_pts)."""
        pts = np.atleast_2d(points)
        fx = lagrange_eval_1d(self.degree, pts[:, 0])
        fy = lagrange_eval_1d(self.degree, pts[:, 1])
        return fx[self._tmap[:, 0]] * fy[self._tmap[:, 1]]

    def grad(self, points):
        """Basis reference gradients, shape (n_loc, n_pts, 2)."""
        pts = np.atleast_2d(points)
        fx = lagrange_eval_1d(self.degree, pts[:, 0])
        fy = lagrange_eval_1d(self.degree, pts[:, 1])
        dfx = lagrange_eval_1d(self.degree, pts[:, 0], deriv=1)
        dfy = lagrange_eval_1d(self.degree, pts[:, 1], deriv=1)
        i, j = self._tmap[:, 0], self._tmap[:, 1]
        g = np.empty((self.n_loc, pts.shape[0], 2))
        g[:, :, 0] = dfx[i] * fy[j]
        g[:, :, 1] = fx[i] * dfy[j]
        return g

    def edge_node_slots(self, edge):
        """Local indices of the nodes supported on a given local edge.

        Ordered along the edge (corner, interior nodes..., corner).
        """
        a, b = EDGE_CORNERS[edge]
        inner = [4 + edge * (self.degree - 1) + k for k in range(self.degree - 1)]
        return [a] + inner + [b]


GEOM = ScalarElement(2)


def gauss_1d(n):
    """Gauss-Legendre rule with n points on [0,1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_2d(n):
    """Tensor Gauss rule on [0,1]^2: points (n*n, 2) and weights (n*n,)."""
    x, w = gauss_1d(n)
    X, Y = np.meshgrid(x, x, indexing="xy")
    W = np.outer(w, w)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return pts, W.ravel()


def edge_points(edge, t):
    """Map 1D edge parameters t in [0,1] to reference-cell coordinates."""
    a, b = EDGE_CORNERS[edge]
    pa, pb = CORNERS[a], CORNERS[b]
    t = np.asarray(t, dtype=float)
    return pa[None, :] + t[:, None] * (pb - pa)[None, :]


def geometry_jacobians(cell_coords, ref_points):
    """Jacobians of the Q2 geometry map for a batch of cells.

    cell_coords: (C, 9, 2) geometry node coordinates.
    ref_points:  (Q, 2) reference points.
    Returns (jac, det, inv) with shapes (C,Q,2,2), (C,Q), (C,Q,2,2).
    """
    dN = GEOM.grad(ref_points)  # (9, Q, 2)
    jac = np.einsum("ckx,kqd->cqxd", cell_coords, dN)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1]
    inv[..., 1, 1] = jac[..., 0, 0]
    inv[..., 0, 1] = -jac[..., 0, 1]
    inv[..., 1, 0] = -jac[..., 1, 0]
    inv /= det[..., None, None]
    return jac, det, inv


def map_points(cell_coords, ref_points):
    """Physical coordinates of reference points, shape (C, Q, 2)."""
    N = GEOM.eval(ref_points)  # (9, Q)
    return np.einsum("ckx,kq->cqx", cell_coords, N)
