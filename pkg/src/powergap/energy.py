"""Boundary powers, the Cherkaev-Gibiansky transform, and energy identities.

The constitutive relation (Re I, Im grad u) <-> (Re grad u, Im I) is
symmetrized by the 4x4 matrix

    B = [[(s+z)^-1,        (s+z)^-1 e],
         [e (s+z)^-1,  s - z + e (s+z)^-1 e]]

which is positive definite under the boundedness/ellipticity hypothesis.
With v_j = (Re I_j(grad u_j), Im grad u_j) and real boundary data g the
power gap dW = W0 - W1 satisfies, exactly at the discrete level,

    Re dW = int_D (B0 - B1) v0.v1                     (boundary form)
    Re dW = -int_Omega B0 (v0-v1).(v0-v1) + int_D (B0-B1) v1.v1
    Re dW =  int_Omega B1 (v0-v1).(v0-v1) + int_D (B0-B1) v0.v0

Note the sign convention: under jump case (i) the inclusion is effectively
resistive and Re dW < 0, under case (ii) effectively conductive and
Re dW > 0. (The source derivation displays the two quadratic identities
with inverted signs, which contradicts its own boundary form; the versions
above are the internally consistent ones and are verified here to solver
precision.) The two-sided bracket constants are computed as pointwise
eigenvalue surrogates following the same derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .coefficients import JumpCase
from .errors import StructuralError
from .solver import Solution, _EDGE_Q, _EDGE_W

__all__ = [
    "cg_transform",
    "state_vectors",
    "boundary_power",
    "free_energy",
    "verify_identities",
    "energy_bracket",
    "grad_energy_inclusion",
    "basic_pairing_residual",
    "IdentityReport",
    "BracketReport",
    "PowerReport",
    "power_report",
]


def cg_transform(sigma, eps, zeta=None) -> np.ndarray:
    """4x4 symmetrizing matrices from (n,2,2) or (2,2) coefficient arrays."""
    s = np.asarray(sigma, dtype=float)
    single = s.ndim == 2
    s = s[None] if single else s
    e = np.broadcast_to(np.asarray(eps, dtype=float), s.shape)
    if zeta is None:
        z = np.zeros_like(s)
    else:
        z = np.broadcast_to(np.asarray(zeta, dtype=float), s.shape)
    sz = s + z
    eigs = np.linalg.eigvalsh(sz)
    if eigs[:, 0].min() <= 1e-14:
        raise StructuralError(
            "sigma + zeta is singular on a sample; hypothesis (se0) "
            f"violated (min eig {eigs[:, 0].min():.3e})")
    inv = np.linalg.inv(sz)
    b = np.empty(s.shape[:-2] + (4, 4))
    b[..., :2, :2] = inv
    b[..., :2, 2:] = inv @ e
    b[..., 2:, :2] = e @ inv
    b[..., 2:, 2:] = s - z + e @ inv @ e
    return b[0] if single else b


def state_vectors(sol: Solution) -> np.ndarray:
    """Per-element v = (Re I(grad u), Im grad u), shape (m, 4)."""
    grad = sol.gradient()
    flux = np.einsum("mij,mj->mi",
                     sol.sigma_e.astype(complex) + 1j * sol.eps_e, grad)
    if sol.zeta_e is not None:
        flux = flux + np.einsum("mij,mj->mi",
                                sol.zeta_e.astype(complex), np.conj(grad))
    return np.concatenate([flux.real, grad.imag], axis=1)


def element_cg(sol: Solution) -> np.ndarray:
    return cg_transform(sol.sigma_e, sol.eps_e, sol.zeta_e)


def gradient_to_state_matrices(sol: Solution) -> np.ndarray:
    """Per-element 4x4 map (Re grad u, Im grad u) -> v for the background law."""
    m = len(sol.sigma_e)
    t = np.zeros((m, 4, 4))
    t[:, :2, :2] = sol.sigma_e
    t[:, :2, 2:] = -sol.eps_e
    t[:, 2:, 2:] = np.eye(2)
    return t


def _boundary_quadrature(sol: Solution, kind: str) -> complex:
    """Boundary integral of u*g, conj(u)*g, or the split Re/Im pairing."""
    mesh = sol.mesh
    e = mesh.boundary_edges
    a, b = mesh.points[e[:, 0]], mesh.points[e[:, 1]]
    lens = np.linalg.norm(b - a, axis=1)
    mean = sol.diagnostics.get("g_mean_offset", 0.0)
    total = 0.0 + 0.0j
    for q, w in zip(_EDGE_Q, _EDGE_W):
        x = a + q * (b - a)
        gv = np.asarray(sol.g.raw(x)).astype(complex) - mean
        uv = (1.0 - q) * sol.u[e[:, 0]] + q * sol.u[e[:, 1]]
        if kind == "plain":
            total += (w * uv * gv * lens).sum()
        elif kind == "conj":
            total += (w * np.conj(uv) * gv * lens).sum()
        else:
            raise ValueError(kind)
    return complex(total)


def boundary_power(sol: Solution, conjugate: bool = False) -> complex:
    """W = int_boundary u g ds (or conj(u) g with conjugate=True)."""
    return _boundary_quadrature(sol, "conj" if conjugate else "plain")


@dataclass(frozen=True)
class FreeEnergyReport:
    volume: complex
    boundary: complex
    mismatch: float
    flagged: bool


def free_energy(sol: Solution, mismatch_tol: float = 1e-6) -> FreeEnergyReport:
    """W'0 as the volume sesquilinear form, cross-checked against the boundary."""
    grad = sol.gradient()
    cg = np.conj(grad)
    s_part = np.einsum("mij,mj,mi->m", sol.sigma_e.astype(complex), grad, cg)
    e_part = np.einsum("mij,mj,mi->m", sol.eps_e.astype(complex), grad, cg)
    w = sol.mesh.areas
    volume = complex((s_part * w).sum() + 1j * (e_part * w).sum())
    boundary = boundary_power(sol, conjugate=True)
    mismatch = abs(volume - boundary) / max(abs(boundary), 1e-300)
    return FreeEnergyReport(volume=volume, boundary=boundary,
                            mismatch=float(mismatch),
                            flagged=bool(mismatch > mismatch_tol))


def grad_energy_inclusion(sol: Solution) -> float:
    """int_D |grad u|^2 over the inclusion-tagged elements."""
    grad = sol.gradient()
    d = sol.mesh.in_d
    val = (np.abs(grad[d]) ** 2).sum(axis=1) @ sol.mesh.areas[d]
    return float(val)


def _quad_form(b: np.ndarray, v: np.ndarray, w: np.ndarray,
               areas: np.ndarray) -> float:
    return float(np.einsum("mij,mj,mi,m->", b, v, w, areas))


def _require_same_mesh(sol0: Solution, sol1: Solution):
    if sol0.mesh is not sol1.mesh:
        raise ValueError("both solutions must live on the same mesh")


@dataclass(frozen=True)
class IdentityReport:
    re_dw_boundary: float
    re_dw_id1: float
    re_dw_id2: float
    im_dw: float
    max_pairwise_rel: float

    def values(self):
        return (self.re_dw_boundary, self.re_dw_id1, self.re_dw_id2)


def verify_identities(sol0: Solution, sol1: Solution) -> IdentityReport:
    """Compute Re dW three ways and report their pairwise agreement."""
    _require_same_mesh(sol0, sol1)
    mesh = sol0.mesh
    areas = mesh.areas
    d = mesh.in_d
    v0, v1 = state_vectors(sol0), state_vectors(sol1)
    b0, b1 = element_cg(sol0), element_cg(sol1)

    w0 = boundary_power(sol0, conjugate=True)
    w1 = boundary_power(sol1, conjugate=True)
    re_boundary = (w0 - w1).real

    diff = v0 - v1
    id1 = -_quad_form(b0, diff, diff, areas) \
        + _quad_form(b0[d] - b1[d], v1[d], v1[d], areas[d])
    id2 = _quad_form(b1, diff, diff, areas) \
        + _quad_form(b0[d] - b1[d], v0[d], v0[d], areas[d])

    dw = (boundary_power(sol0) - boundary_power(sol1))
    vals = np.array([re_boundary, id1, id2])
    scale = max(np.abs(vals).max(), 1e-300)
    rel = float(np.abs(vals[:, None] - vals[None, :]).max() / scale)
    return IdentityReport(re_dw_boundary=float(re_boundary),
                          re_dw_id1=float(id1), re_dw_id2=float(id2),
                          im_dw=float(dw.imag), max_pairwise_rel=rel)


@dataclass(frozen=True)
class BracketReport:
    case: str
    re_dw: float
    grad_energy_d: float
    ratio: float
    kappa_lo: float
    kappa_hi: float
    sign_ok: bool
    bracket_ok: bool
    surrogate_valid: bool
    degenerate: bool
    details: dict = field(default_factory=dict)


def energy_bracket(sol0: Solution, sol1: Solution, case: JumpCase,
                   tol: float = 0.05) -> BracketReport:
    """Two-sided eigenvalue bracket for |Re dW| / int_D |grad u0|^2.

    Case (i) brackets -Re dW, case (ii) brackets +Re dW; refuses when no
    jump case holds, and returns a degenerate marker when the inclusion
    carries no gradient energy (identical laws).
    """
    if case is JumpCase.NONE:
        raise StructuralError(
            "energy bracket is only asserted under jump condition (a0) "
            "case (i) or (ii)")
    _require_same_mesh(sol0, sol1)
    mesh = sol0.mesh
    d = mesh.in_d
    rep = verify_identities(sol0, sol1)
    re_dw = rep.re_dw_boundary
    denom = grad_energy_inclusion(sol0)
    total = float((np.abs(sol0.gradient()) ** 2).sum(axis=1) @ mesh.areas)
    if denom <= 1e-14 * max(total, 1e-300):
        return BracketReport(case=case.value, re_dw=re_dw, grad_energy_d=denom,
                             ratio=math.nan, kappa_lo=0.0, kappa_hi=0.0,
                             sign_ok=True, bracket_ok=True,
                             surrogate_valid=False, degenerate=True)

    b0, b1 = element_cg(sol0), element_cg(sol1)
    bdiff = (b1[d] - b0[d]) if case is JumpCase.CASE_I else (b0[d] - b1[d])
    eig_diff = np.linalg.eigvalsh(bdiff)
    lam_lo = float(eig_diff[:, 0].min())
    lam_hi = float(eig_diff[:, -1].max())
    surrogate_valid = lam_lo >= -1e-10

    t0 = gradient_to_state_matrices(sol0)[d]
    svals = np.linalg.svd(t0, compute_uv=False)
    smin2 = float(svals[:, -1].min()) ** 2
    smax2 = float(svals[:, 0].max()) ** 2

    if case is JumpCase.CASE_I:
        lam_b0 = float(np.linalg.eigvalsh(b0[d])[:, 0].min())
        kappa_lo = 0.5 * min(lam_b0, lam_lo) * smin2
        kappa_hi = lam_hi * smax2
        signed = -re_dw
    else:
        kappa_lo = lam_lo * smin2
        eig_b0 = np.linalg.eigvalsh(b0)
        eig_b1 = np.linalg.eigvalsh(b1)
        c_hat = float((eig_b0[:, -1] / eig_b1[:, 0]).max())
        kappa_hi = (c_hat + 1.0) * lam_hi * smax2
        signed = re_dw

    ratio = abs(re_dw) / denom
    sign_ok = signed > 0
    bracket_ok = (kappa_lo * (1.0 - tol) <= ratio <= kappa_hi * (1.0 + tol))
    return BracketReport(
        case=case.value, re_dw=re_dw, grad_energy_d=denom, ratio=ratio,
        kappa_lo=kappa_lo, kappa_hi=kappa_hi, sign_ok=bool(sign_ok),
        bracket_ok=bool(bracket_ok), surrogate_valid=bool(surrogate_valid),
        degenerate=False,
        details={"lambda_min_diff": lam_lo, "lambda_max_diff": lam_hi,
                 "smin2": smin2, "smax2": smax2})


def basic_pairing_residual(solj: Solution, solk: Solution) -> float:
    """Residual of int B_j v_j.v_k against its boundary pairing."""
    _require_same_mesh(solj, solk)
    areas = solj.mesh.areas
    lhs = _quad_form(element_cg(solj), state_vectors(solj),
                     state_vectors(solk), areas)
    mesh = solj.mesh
    e = mesh.boundary_edges
    a, b = mesh.points[e[:, 0]], mesh.points[e[:, 1]]
    lens = np.linalg.norm(b - a, axis=1)
    mean = solj.diagnostics.get("g_mean_offset", 0.0)
    rhs = 0.0
    for q, w in zip(_EDGE_Q, _EDGE_W):
        x = a + q * (b - a)
        gv = np.asarray(solj.g.raw(x)).astype(complex) - mean
        uj = (1.0 - q) * solj.u[e[:, 0]] + q * solj.u[e[:, 1]]
        uk = (1.0 - q) * solk.u[e[:, 0]] + q * solk.u[e[:, 1]]
        rhs += (w * (uj.real * gv.real + uk.imag * gv.imag) * lens).sum()
    return float(abs(lhs - rhs) / max(abs(rhs), 1e-300))


@dataclass(frozen=True)
class PowerReport:
    """Headline power quantities of one unperturbed/perturbed pair."""

    w0: complex
    w1: complex
    delta_w: complex
    w0_free: complex
    grad_energy_d: float
    identities: IdentityReport
    bracket: Optional[BracketReport]
    case: str

    def as_dict(self) -> dict:
        out = {
            "w0_re": self.w0.real, "w0_im": self.w0.imag,
            "w1_re": self.w1.real, "w1_im": self.w1.imag,
            "delta_w_re": self.delta_w.real, "delta_w_im": self.delta_w.imag,
            "w0_free_re": self.w0_free.real, "w0_free_im": self.w0_free.imag,
            "grad_energy_D": self.grad_energy_d,
            "id_residuals": {
                "boundary": self.identities.re_dw_boundary,
                "id1": self.identities.re_dw_id1,
                "id2": self.identities.re_dw_id2,
                "max_pairwise_rel": self.identities.max_pairwise_rel,
            },
            "case": self.case,
        }
        if self.bracket is not None:
            out["kappa_lo"] = self.bracket.kappa_lo
            out["kappa_hi"] = self.bracket.kappa_hi
            out["ratio"] = self.bracket.ratio
            out["bracket_ok"] = self.bracket.bracket_ok
            out["sign_ok"] = self.bracket.sign_ok
        return out


def power_report(sol0: Solution, sol1: Solution, case: JumpCase,
                 tol: float = 0.05) -> PowerReport:
    w0 = boundary_power(sol0)
    w1 = boundary_power(sol1)
    fe = free_energy(sol0)
    bracket = None
    if case is not JumpCase.NONE:
        bracket = energy_bracket(sol0, sol1, case, tol=tol)
    return PowerReport(
        w0=w0, w1=w1, delta_w=w0 - w1, w0_free=fe.volume,
        grad_energy_d=grad_energy_inclusion(sol0),
        identities=verify_identities(sol0, sol1),
        bracket=bracket, case=case.value)
