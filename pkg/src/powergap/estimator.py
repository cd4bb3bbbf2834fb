"""Inclusion-size bounds from one boundary measurement pair.

The theory gives |D| bracketed by constants times |Re dW| / Re W'0 with
non-constructive constants, so the constants here are calibrated on a
family of scenes with known inclusion area and then frozen for held-out
scenes. The fatness condition gates only the upper bound; when it fails
the upper bound is reported as conditional rather than dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .energy import PowerReport
from .errors import DegenerateMeasurementError, StructuralError
from .geometry import erode, region_area
from .solver import NeumannData, Solution

__all__ = [
    "SizeEstimate",
    "SizeMeasurement",
    "CalibrationResult",
    "check_fatness",
    "interior_gradient_sup",
    "estimate_size",
    "calibrate_constants",
    "surrogate_size_constants",
    "boundary_data_norm_ratio",
]


@dataclass(frozen=True)
class SizeEstimate:
    delta_w_re: float
    w0_free_re: float
    lower: float
    upper: float
    true_area: Optional[float]
    fatness_ok: bool
    upper_conditional: bool
    constants_source: str
    constants: tuple[float, float]

    def brackets_truth(self) -> Optional[bool]:
        if self.true_area is None:
            return None
        return bool(self.lower <= self.true_area <= self.upper)

    def as_dict(self) -> dict:
        return {
            "delta_w_re": self.delta_w_re,
            "w0_free_re": self.w0_free_re,
            "lower": self.lower,
            "upper": self.upper,
            "true_area": self.true_area,
            "fatness_ok": self.fatness_ok,
            "upper_conditional": self.upper_conditional,
            "constants_source": self.constants_source,
        }


def check_fatness(scene, d1: Optional[float] = None, n: int = 400) -> dict:
    """Erosion-area test |D_{d1}| >= |D|/2."""
    depth = scene.d1 if d1 is None else d1
    if depth <= 0:
        raise ValueError("d1 must be positive")
    region = scene.inclusion_region()
    area = region_area(region, n=n)
    eroded_area = region_area(erode(region, depth), n=n) if area > 0 else 0.0
    ratio = eroded_area / area if area > 0 else 0.0
    return {"passed": bool(ratio >= 0.5), "ratio": float(ratio),
            "area": float(area), "eroded_area": float(eroded_area),
            "d1": float(depth)}


def interior_gradient_sup(u0: Solution, region=None) -> dict:
    """Max nodal-patch gradient over D and its ratio to the global L2 norm."""
    mesh = u0.mesh
    grads = u0.gradient()
    mask_e = mesh.in_d if region is None else region.contains(mesh.centroids)
    total = math.sqrt(float((np.abs(grads) ** 2).sum(axis=1) @ mesh.areas))
    if not mask_e.any() or total <= 0:
        return {"sup": 0.0, "ratio": 0.0, "l2_norm": total}
    # area-weighted patch average of element gradients at each node
    acc = np.zeros((mesh.num_points, 2), dtype=complex)
    wsum = np.zeros(mesh.num_points)
    for i in range(3):
        np.add.at(acc, mesh.triangles[:, i], grads * mesh.areas[:, None])
        np.add.at(wsum, mesh.triangles[:, i], mesh.areas)
    patch = acc / np.maximum(wsum, 1e-300)[:, None]
    d_nodes = np.unique(mesh.triangles[mask_e].ravel())
    sup = float(np.linalg.norm(np.abs(patch[d_nodes]), axis=1).max())
    return {"sup": sup, "ratio": sup / total, "l2_norm": total}


def estimate_size(power: PowerReport, constants: tuple[float, float],
                  fatness_ok: bool = True, true_area: Optional[float] = None,
                  constants_source: str = "calibrated",
                  w0_free_tol: float = 1e-12) -> SizeEstimate:
    """Bounds C1*|Re dW|/Re W'0 <= |D| <= C2*|Re dW|/Re W'0."""
    c1, c2 = float(constants[0]), float(constants[1])
    if c1 > c2:
        raise ValueError("require C1 <= C2")
    re_wf = power.w0_free.real
    if re_wf <= w0_free_tol:
        raise DegenerateMeasurementError(
            f"Re W'0 = {re_wf:.3e} at or below tolerance; measurement "
            "carries no power")
    q = abs(power.delta_w.real) / re_wf
    return SizeEstimate(
        delta_w_re=power.delta_w.real, w0_free_re=re_wf,
        lower=c1 * q, upper=c2 * q, true_area=true_area,
        fatness_ok=bool(fatness_ok),
        upper_conditional=not bool(fatness_ok),
        constants_source=constants_source, constants=(c1, c2))


@dataclass(frozen=True)
class SizeMeasurement:
    """One calibration sample: measured powers plus the known area."""

    delta_w_re: float
    w0_free_re: float
    area: float
    case: str
    label: str = ""


@dataclass(frozen=True)
class CalibrationResult:
    c1: float
    c2: float
    case: str
    n_used: int
    excluded: tuple


def calibrate_constants(family: Sequence[SizeMeasurement],
                        rel_tol: float = 1e-8) -> CalibrationResult:
    """Tight-by-construction constants from scenes with known |D|.

    C1 (C2) is the min (max) over the family of |D| * Re W'0 / |Re dW|.
    Members with a vanishing power gap are excluded with a warning entry;
    families mixing jump cases are rejected since the bracket constants
    are only case-uniform.
    """
    if not family:
        raise ValueError("calibration family is empty")
    cases = {m.case for m in family}
    if len(cases) > 1:
        raise StructuralError(
            f"calibration family mixes jump cases {sorted(cases)}; "
            "constants are only uniform within one case")
    ratios = []
    excluded = []
    for m in family:
        scale = max(abs(m.w0_free_re), 1e-300)
        if abs(m.delta_w_re) <= rel_tol * scale:
            excluded.append(m.label or "unnamed")
            continue
        ratios.append(m.area * m.w0_free_re / abs(m.delta_w_re))
    if not ratios:
        raise ValueError("every family member had a vanishing power gap")
    return CalibrationResult(c1=float(min(ratios)), c2=float(max(ratios)),
                             case=next(iter(cases)), n_used=len(ratios),
                             excluded=tuple(excluded))


def surrogate_size_constants(kappa_lo: float, kappa_hi: float,
                             interior_ratio: float, c_a: float,
                             lambda0: float, ell: float) -> tuple[float, float]:
    """Analytic-surrogate constants assembled from measured sub-constants.

    Lower: |Re dW| <= kappa_hi * |D| * sup_D|grad u0|^2 and
    sup_D|grad u0| <= interior_ratio * ||grad u0||_L2 with
    ||grad u0||^2 <= Re W'0 / lambda0 give
    C1 = lambda0 / (kappa_hi * interior_ratio^2).

    Upper: covering D_{d1} by squares of side ell, each containing a ball
    of radius ell/2 with energy fraction at least c_a, and the fatness
    count N >= |D| / (2 ell^2):
    C2 = 2 ell^2 / (kappa_lo * c_a * lambda0).
    """
    if min(kappa_lo, kappa_hi, interior_ratio, c_a, lambda0, ell) <= 0:
        raise ValueError("all surrogate ingredients must be positive")
    c1 = lambda0 / (kappa_hi * interior_ratio ** 2)
    c2 = 2.0 * ell ** 2 / (kappa_lo * c_a * lambda0)
    return c1, c2


def boundary_data_norm_ratio(mesh, g: NeumannData) -> float:
    """||g||_L2 / ||g||_H^{-1/2} on the discrete boundary.

    The negative-order norm comes from the generalized eigenproblem of the
    periodic boundary P1 stiffness against the boundary mass matrix.
    """
    loop = mesh.boundary_loop()
    pts = mesh.points[loop]
    nb = len(loop)
    nxt = np.roll(np.arange(nb), -1)
    lens = np.linalg.norm(pts[nxt] - pts, axis=1)
    mass = np.zeros((nb, nb))
    stiff = np.zeros((nb, nb))
    for i in range(nb):
        j = nxt[i]
        le = lens[i]
        mass[i, i] += le / 3.0
        mass[j, j] += le / 3.0
        mass[i, j] += le / 6.0
        mass[j, i] += le / 6.0
        stiff[i, i] += 1.0 / le
        stiff[j, j] += 1.0 / le
        stiff[i, j] -= 1.0 / le
        stiff[j, i] -= 1.0 / le
    gv = np.asarray(g.raw(pts), dtype=float)
    gv = gv - (mass.sum(axis=1) @ gv) / mass.sum()
    mu, w = scipy.linalg.eigh(stiff, mass)
    coeff = w.T @ (mass @ gv)
    l2_sq = float((coeff ** 2).sum())
    neg_sq = float(((1.0 + np.maximum(mu, 0.0)) ** (-0.5) * coeff ** 2).sum())
    if neg_sq <= 0:
        return math.inf
    return math.sqrt(l2_sq / neg_sq)
