"""Solid inclusion shapes for the perforated unit cell.

An inclusion is a circle or a rotated ellipse whose closure must stay
strictly inside the open unit cell.  Instances also serve, after an
affine placement (scale + shift), as the exact curves that mesh nodes
are snapped onto.
"""

from dataclasses import dataclass

import numpy as np


class GeometryError(ValueError):
    """Invalid geometric configuration (inclusion touching cell boundary,
    non-integer tilings, misaligned evaluation lines...)."""


@dataclass(frozen=True)
class InclusionSpec:
    """Circle or rotated ellipse inside the unit cell Y=(0,1)^2.

    kind: 'circle' or 'ellipse'.  For circles only `radius` is used; for
    ellipses the semi-axes a, b and the anti-clockwise rotation in degrees.
    """

    kind: str = "circle"
    center: tuple = (0.5, 0.5)
    radius: float = 0.25
    semi_axis_a: float = 0.357142857
    semi_axis_b: float = 0.192307692
    rotation_deg: float = 45.0

    def __post_init__(self):
        if self.kind not in ("circle", "ellipse"):
            raise GeometryError(f"unknown inclusion kind {self.kind!r}")
        cx, cy = self.center
        ex, ey = self.extents()
        if not (cx - ex > 0 and cx + ex < 1 and cy - ey > 0 and cy + ey < 1):
            raise GeometryError("inclusion closure must stay inside the open unit cell")

    def extents(self):
        """Half-widths of the axis-aligned bounding box."""
        if self.kind == "circle":
            return self.radius, self.radius
        th = np.deg2rad(self.rotation_deg)
        a, b = self.semi_axis_a, self.semi_axis_b
        ex = np.hypot(a * np.cos(th), b * np.sin(th))
        ey = np.hypot(a * np.sin(th), b * np.cos(th))
        return ex, ey

    def area(self):
        if self.kind == "circle":
            return np.pi * self.radius**2
        return np.pi * self.semi_axis_a * self.semi_axis_b

    def second_moment_y(self):
        """Integral of (y - yc)^2 over the inclusion."""
        if self.kind == "circle":
            return np.pi * self.radius**4 / 4.0
        th = np.deg2rad(self.rotation_deg)
        a, b = self.semi_axis_a, self.semi_axis_b
        return np.pi * a * b / 4.0 * (a**2 * np.sin(th) ** 2 + b**2 * np.cos(th) ** 2)

    def mean_y(self):
        return self.center[1]

    def boundary_point(self, theta):
        """Boundary point in polar direction theta as seen from the center.

        Both shapes are star-shaped about their center, so the radial
        parameterization rho(theta) is well defined.
        """
        theta = np.asarray(theta, dtype=float)
        d = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        if self.kind == "circle":
            rho = self.radius * np.ones_like(theta)
        else:
            th = np.deg2rad(self.rotation_deg)
            c, s = np.cos(th), np.sin(th)
            # direction components in the ellipse frame
            u = d[..., 0] * c + d[..., 1] * s
            v = -d[..., 0] * s + d[..., 1] * c
            rho = 1.0 / np.sqrt((u / self.semi_axis_a) ** 2 + (v / self.semi_axis_b) ** 2)
        return np.asarray(self.center) + rho[..., None] * d

    def project(self, pts):
        """Radially project points onto the boundary curve (from the center)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rel = pts - np.asarray(self.center)
        theta = np.arctan2(rel[:, 1], rel[:, 0])
        return self.boundary_point(theta)

    def signed_distance_kind(self, pts):
        """Level-set value (negative inside): radial form, exact zero on curve."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        rel = pts - np.asarray(self.center)
        r = np.hypot(rel[:, 0], rel[:, 1])
        theta = np.arctan2(rel[:, 1], rel[:, 0])
        bp = self.boundary_point(theta) - np.asarray(self.center)
        rho = np.hypot(bp[:, 0], bp[:, 1])
        return r - rho


@dataclass(frozen=True)
class PlacedCurve:
    """An inclusion curve placed in physical space: x = scale*y + shift."""

    spec: InclusionSpec
    scale: float
    shift: tuple

    def project(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        local = (pts - np.asarray(self.shift)) / self.scale
        return self.spec.project(local) * self.scale + np.asarray(self.shift)

    def on_curve(self, pts, tol=1e-12):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        local = (pts - np.asarray(self.shift)) / self.scale
        return np.abs(self.spec.signed_distance_kind(local)) <= tol

    def area(self):
        return self.spec.area() * self.scale**2

    def center(self):
        return np.asarray(self.spec.center) * self.scale + np.asarray(self.shift)

    def mean_y(self):
        return self.center()[1]

    def second_moment_y(self):
        return self.spec.second_moment_y() * self.scale**4


CIRCLE = InclusionSpec(kind="circle")
ELLIPSE = InclusionSpec(kind="ellipse")


def inclusion_from_name(name):
    if name in ("circle", "circ"):
        return CIRCLE
    if name in ("ellipse", "oval"):
        return ELLIPSE
    raise GeometryError(f"unknown inclusion name {name!r}")
