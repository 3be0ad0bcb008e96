"""Scalar diagnostics along a metric trajectory.

Covers the Calabi energy S = |gap|^2_g of the connection gap between g and a
fixed reference metric, torsion/curvature norms, the two metric traces, the
determinant ratio, the maximum-principle monitor G = S/f + A tr_hat(g), the
uniform-equivalence constant, and the torsion-control quantities
|d-hat-bar T| and |d-hat d-hat-bar T|.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chern import (
    ChernPackage,
    chern_package,
    connection_gap,
    covariant_deriv,
    lowered_torsion,
    pes,
)
from .tensors import MetricField, TensorField, norm, norm_sq, sup_norm

CSV_HEADER = (
    "t,max_S,max_T,max_Rm,tr_hat_g,tr_g_hat,detratio_min,detratio_max,"
    "max_G,min_eig,Tcond1,Tcond2"
)


class NonpositiveF(ValueError):
    """Monitor offset ``a`` is not above the trace it must dominate."""


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-sample scalar diagnostics; field order matches the CSV columns."""

    t: float
    max_S: float
    max_T: float
    max_Rm: float
    tr_hat_g: float
    tr_g_hat: float
    detratio_min: float
    detratio_max: float
    max_G: float
    min_eig: float
    tcond1: float
    tcond2: float

    def csv_row(self) -> str:
        vals = (
            self.t, self.max_S, self.max_T, self.max_Rm, self.tr_hat_g,
            self.tr_g_hat, self.detratio_min, self.detratio_max, self.max_G,
            self.min_eig, self.tcond1, self.tcond2,
        )
        return ",".join(repr(float(v)) for v in vals)

    def is_finite(self) -> bool:
        vals = (
            self.max_S, self.max_T, self.max_Rm, self.tr_hat_g, self.tr_g_hat,
            self.detratio_min, self.detratio_max, self.max_G, self.min_eig,
            self.tcond1, self.tcond2,
        )
        return all(math.isfinite(v) for v in vals)


@dataclass(frozen=True)
class MonitorParams:
    """Constants of the monitor G = S/f + A tr_hat(g), fixed at the start of a run.

    ``a`` is four times the initial maximum of tr_hat(g) (so f = a - tr starts
    at three quarters of a); ``A = 2 K (1 + 1/a + 1/a^2)`` with K the initial
    equivalence constant.
    """

    a: float
    A: float
    k_equiv: float


def trace_hat_g(m: MetricField, hat: MetricField) -> np.ndarray:
    """tr_hat(g) = hat_g^{sbar r} g_{r sbar} as a real field."""
    return pes("sr,rs->", hat.inv_matrix, m.matrix).real


def trace_g_hat(m: MetricField, hat: MetricField) -> np.ndarray:
    """tr_g(hat_g) = g^{lbar k} hat_g_{k lbar} as a real field."""
    return pes("lk,kl->", m.inv_matrix, hat.matrix).real


def relative_eigenvalues(m: MetricField, hat: MetricField) -> np.ndarray:
    """Eigenvalues of hat_g^{-1} g per point (real, positive), ascending for n <= 2."""
    x = np.matmul(hat.inv_matrix, m.matrix)
    n = m.grid.n
    if n == 1:
        return x[..., 0, 0].real[..., None]
    if n == 2:
        tr = (x[..., 0, 0] + x[..., 1, 1]).real
        det = (x[..., 0, 0] * x[..., 1, 1] - x[..., 0, 1] * x[..., 1, 0]).real
        disc = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
        return np.stack([0.5 * tr - disc, 0.5 * tr + disc], axis=-1)
    return np.sort(np.linalg.eigvals(x).real, axis=-1)


def equivalence_constant(m: MetricField, hat: MetricField) -> float:
    """Smallest K with K^{-1} hat_g <= g <= K hat_g, from relative eigenvalue extremes."""
    lam = relative_eigenvalues(m, hat)
    lam_min = float(np.min(lam))
    lam_max = float(np.max(lam))
    if lam_min <= 0:
        return math.inf
    return max(lam_max, 1.0 / lam_min)


def calabi_gap_energy(
    pkg: ChernPackage, hat_pkg: ChernPackage
) -> tuple[TensorField, np.ndarray]:
    """Connection gap (nabla - nabla_hat) and its squared g-norm S >= 0."""
    gap = connection_gap(pkg, hat_pkg)
    return gap, norm_sq(gap, pkg.metric)


def torsion_difference_residual(pkg: ChernPackage, hat_pkg: ChernPackage) -> float:
    """sup |(T - T_hat) - antisymmetrized connection gap|."""
    gap = connection_gap(pkg, hat_pkg).data
    lhs = pkg.torsion.data - hat_pkg.torsion.data
    rhs = gap - np.swapaxes(gap, -2, -1)
    return sup_norm(lhs - rhs)


@dataclass(frozen=True)
class InequalityReport:
    """Pointwise check of |T|_g <= 2 sqrt(S) + |T_hat|_g plus equivalence constants."""

    min_slack: float
    satisfied: bool
    k_equiv: float
    k_trace: float


def inequality_checks(
    m: MetricField,
    hat: MetricField,
    pkg: ChernPackage | None = None,
    hat_pkg: ChernPackage | None = None,
    slack_tol: float = 1e-9,
) -> InequalityReport:
    if pkg is None:
        pkg = chern_package(m)
    if hat_pkg is None:
        hat_pkg = chern_package(hat)
    _, s_field = calabi_gap_energy(pkg, hat_pkg)
    t_norm = norm(pkg.torsion, m)
    that_norm = norm(hat_pkg.torsion, m)
    slack = 2.0 * np.sqrt(np.maximum(s_field, 0.0)) + that_norm - t_norm
    min_slack = float(np.min(slack))
    k_eq = equivalence_constant(m, hat)
    k_tr = max(float(np.max(trace_hat_g(m, hat))), float(np.max(trace_g_hat(m, hat))))
    return InequalityReport(
        min_slack=min_slack,
        satisfied=min_slack >= -slack_tol,
        k_equiv=k_eq,
        k_trace=k_tr,
    )


def monitor_params(m0: MetricField, hat: MetricField) -> MonitorParams:
    tr0 = float(np.max(trace_hat_g(m0, hat)))
    a = 4.0 * tr0
    k = equivalence_constant(m0, hat)
    A = 2.0 * k * (1.0 + 1.0 / a + 1.0 / (a * a))
    return MonitorParams(a=a, A=A, k_equiv=k)


def calabi_monitor(
    m: MetricField,
    hat: MetricField,
    a: float,
    A: float,
    pkg: ChernPackage | None = None,
    hat_pkg: ChernPackage | None = None,
) -> np.ndarray:
    """Monitor field G = S/f + A tr_hat(g) with f = a - tr_hat(g).

    Raises :class:`NonpositiveF` when ``a`` does not exceed the trace
    everywhere.  The proof-side guidance f >= a/2 is not enforced here; the
    caller can compare min(f) to a/2.
    """
    if pkg is None:
        pkg = chern_package(m)
    if hat_pkg is None:
        hat_pkg = chern_package(hat)
    tr = trace_hat_g(m, hat)
    f = a - tr
    if float(np.min(f)) <= 0.0:
        raise NonpositiveF(f"a={a} must exceed max tr_hat(g)={float(np.max(tr))}")
    _, s_field = calabi_gap_energy(pkg, hat_pkg)
    return s_field / f + A * tr


def torsion_control_norms(
    pkg: ChernPackage, hat_pkg: ChernPackage
) -> tuple[float, float]:
    """Max g-norms of the hat-covariant torsion derivatives (the (Tcond) pair)."""
    m = pkg.metric
    t1 = covariant_deriv(pkg.torsion, hat_pkg, "a")
    t2 = covariant_deriv(t1, hat_pkg, "h")
    n1 = float(np.max(norm(t1, m)))
    n2 = float(np.max(norm(t2, m)))
    return n1, n2


def compute_record(
    t: float,
    m: MetricField,
    hat: MetricField,
    hat_pkg: ChernPackage,
    monitor: MonitorParams,
    pkg: ChernPackage | None = None,
) -> DiagnosticsRecord:
    """Full per-sample diagnostics row."""
    if pkg is None:
        pkg = chern_package(m)
    _, s_field = calabi_gap_energy(pkg, hat_pkg)
    det_ratio = m.det() / hat.det()
    tr_hg = trace_hat_g(m, hat)
    f = monitor.a - tr_hg
    if float(np.min(f)) <= 0.0:
        g_max = math.inf
    else:
        g_max = float(np.max(s_field / f + monitor.A * tr_hg))
    tc1, tc2 = torsion_control_norms(pkg, hat_pkg)
    return DiagnosticsRecord(
        t=float(t),
        max_S=float(np.max(s_field)),
        max_T=float(np.max(norm(pkg.torsion, m))),
        max_Rm=float(np.max(norm(pkg.riemann, m))),
        tr_hat_g=float(np.max(tr_hg)),
        tr_g_hat=float(np.max(trace_g_hat(m, hat))),
        detratio_min=float(np.min(det_ratio)),
        detratio_max=float(np.max(det_ratio)),
        max_G=g_max,
        min_eig=m.min_eigenvalue(),
        tcond1=tc1,
        tcond2=tc2,
    )


@dataclass(frozen=True)
class VolumeReport:
    """Determinant-ratio drift of a constant-volume trajectory."""

    max_drift: float
    passed: bool
    t_span: tuple[float, float]


def volume_conservation_check(
    states, *, tol: float = 1e-7, det0_flat_tol: float = 1e-10
) -> VolumeReport:
    """Max over time of sup |det g(t)/det g(0) - 1| for a trajectory.

    The initial determinant must be spatially constant (the Chern-Ricci-flat
    reference case on the torus); otherwise the check is not applicable and a
    ValueError is raised.
    """
    if not states:
        raise ValueError("empty trajectory")
    det0 = states[0].g.det()
    mean0 = float(np.mean(det0))
    if sup_norm(det0 - mean0) > det0_flat_tol * max(1.0, abs(mean0)):
        raise ValueError("initial metric does not have spatially constant determinant")
    drift = 0.0
    for s in states:
        drift = max(drift, sup_norm(s.g.det() / det0 - 1.0))
    return VolumeReport(
        max_drift=drift,
        passed=drift <= tol,
        t_span=(float(states[0].t), float(states[-1].t)),
    )
