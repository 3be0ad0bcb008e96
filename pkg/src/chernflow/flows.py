"""Flow right-hand sides, explicit RK4 time stepping, and run orchestration.

Flow catalog (all right-hand sides are Hermitian (1,1) fields):

    chern_ricci            dg/dt = -Ric
    second_chern_ricci     dg/dt = -Ric~
    pluriclosed            dg/dt = -Ric~ + g^{bbar a} g^{lbar m} T_{r a lbar} T_{sbar bbar m}
    positive_hcf           dg/dt = -Ric~ - (1/2) g^{bbar a} g^{lbar m} T_{a m sbar} T_{bbar lbar r}
    linear_family(a)       dg/dt = -a Ric + (a-1) Ric~
    exponential_test       dg/dt = -g      (closed form g(t) = exp(-t) g(0))

The integrator is classical fourth-order Runge-Kutta with a positivity guard
evaluated at every stage.  After each full step the metric is re-symmetrized
by averaging with its conjugate transpose; the measured drift is retained on
the emitted state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import diagnostics as diag
from .chern import ChernPackage, chern_package, metric_derivatives, pes
from .grid import PeriodicGrid
from .tensors import (
    LA,
    LH,
    MetricField,
    TensorField,
    eigenvalues_hermitian,
    sup_norm,
)

FLOW_TAGS = (
    "chern_ricci",
    "second_chern_ricci",
    "pluriclosed",
    "positive_hcf",
    "linear_family",
    "exponential_test",
)


@dataclass(frozen=True)
class FlowKind:
    """A flow tag plus the interpolation parameter of the linear family."""

    tag: str
    a: float = 0.0

    def __post_init__(self):
        if self.tag not in FLOW_TAGS:
            raise ValueError(f"unknown flow tag {self.tag!r}")


CHERN_RICCI = FlowKind("chern_ricci")
SECOND_CHERN_RICCI = FlowKind("second_chern_ricci")
PLURICLOSED = FlowKind("pluriclosed")
POSITIVE_HCF = FlowKind("positive_hcf")
EXPONENTIAL_TEST = FlowKind("exponential_test")


def linear_family(a: float) -> FlowKind:
    return FlowKind("linear_family", a=float(a))


class PositivityLost(RuntimeError):
    """The evolving metric approached loss of positive definiteness."""

    def __init__(self, t: float, min_eig: float, threshold: float, stage: int):
        super().__init__(
            f"positivity guard tripped at t={t:.6g}: min eigenvalue "
            f"{min_eig:.3e} <= threshold {threshold:.3e} (stage {stage})"
        )
        self.t = t
        self.min_eig = min_eig
        self.threshold = threshold
        self.stage = stage


# ---------------------------------------------------------------------------
# right-hand sides
# ---------------------------------------------------------------------------


def _ricci_light(m: MetricField, want_first: bool, want_second: bool):
    """First/second Chern-Ricci tensors from metric derivatives, no full package."""
    der = metric_derivatives(m)
    inv = m.inv_matrix
    ric1 = ric2 = None
    if want_second:
        h = pes("ba,asl->bsl", inv, der.dga)
        w = pes("lk,bsl->bsk", inv, h)
        q = pes("rbk,bsk->rs", der.dgh, w)
        ric2 = -pes("lk,rskl->rs", inv, der.d2g) + q
    if want_first:
        h1 = pes("ba,als->bls", inv, der.dga)
        w1 = pes("lk,bls->bks", inv, h1)
        q1 = pes("kbr,bks->rs", der.dgh, w1)
        ric1 = -pes("lk,klrs->rs", inv, der.d2g) + q1
    return ric1, ric2, der


def _lowered_torsion_from(der, m: MetricField) -> np.ndarray:
    """T_{r a lbar} = g_{m lbar} g^{ubar m}(dg_{a ubar, r} - dg_{r ubar, a})."""
    t_up = pes("um,aur->mra", m.inv_matrix, der.dgh) - pes(
        "um,rua->mra", m.inv_matrix, der.dgh
    )
    return pes("ml,mra->ral", m.matrix, t_up)


def flow_rhs(kind: FlowKind, m: MetricField) -> TensorField:
    """Time derivative of the metric for the chosen flow; a (1,1) lower tensor."""
    grid = m.grid
    if kind.tag == "exponential_test":
        return TensorField(grid, (LH, LA), -m.matrix)
    if kind.tag == "chern_ricci":
        ric1, _, _ = _ricci_light(m, True, False)
        return TensorField(grid, (LH, LA), -ric1)
    if kind.tag == "second_chern_ricci":
        _, ric2, _ = _ricci_light(m, False, True)
        return TensorField(grid, (LH, LA), -ric2)
    if kind.tag == "linear_family":
        ric1, ric2, _ = _ricci_light(m, True, True)
        return TensorField(grid, (LH, LA), -kind.a * ric1 + (kind.a - 1.0) * ric2)
    if kind.tag == "pluriclosed":
        _, ric2, der = _ricci_light(m, False, True)
        tl = _lowered_torsion_from(der, m)
        a_ = pes("ba,ral->rbl", m.inv_matrix, tl)
        b_ = pes("lm,sbm->sbl", m.inv_matrix, np.conj(tl))
        q = pes("rbl,sbl->rs", a_, b_)
        return TensorField(grid, (LH, LA), -ric2 + q)
    if kind.tag == "positive_hcf":
        _, ric2, der = _ricci_light(m, False, True)
        tl = _lowered_torsion_from(der, m)
        c_ = pes("ba,ams->bms", m.inv_matrix, tl)
        d_ = pes("lm,bms->bls", m.inv_matrix, c_)
        q = pes("bls,blr->rs", d_, np.conj(tl))
        return TensorField(grid, (LH, LA), -ric2 - 0.5 * q)
    raise ValueError(f"unknown flow tag {kind.tag!r}")


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowState:
    """One point of a flow trajectory; reference metric is fixed for a run."""

    t: float
    g: MetricField
    hat_g: MetricField
    kind: FlowKind
    herm_drift: float = 0.0


def _herm_average(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + np.conj(np.swapaxes(mat, -1, -2)))


def _guarded_metric(
    grid: PeriodicGrid, mat: np.ndarray, t: float, guard: float, stage: int
) -> MetricField:
    m = MetricField(grid, mat, check=False)
    min_eig = float(np.min(eigenvalues_hermitian(mat)))
    if min_eig <= guard:
        raise PositivityLost(t, min_eig, guard, stage)
    return m

def step(state: FlowState, dt: float, *, guard: float = 0.0) -> FlowState:
    """One classical RK4 step; the positivity guard runs at every stage.

    The updated metric is re-symmetrized (averaged with its conjugate
    transpose); the pre-symmetrization drift is recorded on the new state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = state.g.grid
    g0 = state.g.matrix
    t = state.t

    k1 = flow_rhs(state.kind, state.g).data
    m2 = _guarded_metric(grid, g0 + 0.5 * dt * k1, t, guard, 1)
    k2 = flow_rhs(state.kind, m2).data
    m3 = _guarded_metric(grid, g0 + 0.5 * dt * k2, t, guard, 2)
    k3 = flow_rhs(state.kind, m3).data
    m4 = _guarded_metric(grid, g0 + dt * k3, t, guard, 3)
    k4 = flow_rhs(state.kind, m4).data

    new = g0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    sym = _herm_average(new)
    drift = sup_norm(new - sym)
    m_new = _guarded_metric(grid, sym, t + dt, guard, 4)
    return FlowState(
        t=t + dt, g=m_new, hat_g=state.hat_g, kind=state.kind, herm_drift=drift
    )


@dataclass(frozen=True)
class DtPolicy:
    """Fixed step size, optionally capped by a parabolic CFL-style bound.

    In 'cfl' mode the step is min(dt, c * h^2 * min_eig(g) / rate) with h the
    smallest grid spacing and ``rate`` the largest pointwise operator norm of
    g^{-1} rhs (the dimensionless stiffness of the quasi-linear system).
    """

    mode: str = "fixed"
    dt: float = 1e-3
    c: float = 0.2

    def __post_init__(self):
        if self.mode not in ("fixed", "cfl"):
            raise ValueError(f"unknown dt policy {self.mode!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


def cfl_cap(m: MetricField, rhs: TensorField, c: float) -> float:
    """CFL-style bound c h^2 min_eig(g) / max |g^{-1} rhs|."""
    grid = m.grid
    h = min(L / grid.res for L in grid.periods)
    scaled = np.matmul(m.inv_matrix, rhs.data)
    rate = float(np.max(np.abs(eigenvalues_hermitian(_herm_average(scaled)))))
    if rate <= 0.0:
        return math.inf
    return c * h * h * m.min_eigenvalue() / rate


@dataclass(frozen=True)
class BlowUpReport:
    """Which monitored quantity tripped first, and when."""

    t_trip: float
    quantity: str
    value: float
    threshold: float
    message: str


@dataclass
class GuardConfig:
    """Positivity guard plus optional blow-up thresholds on monitored scalars."""

    min_eig: float | None = None       # absolute threshold
    min_eig_rel: float = 1e-8          # used when min_eig is None
    tr_g_hat: float = math.inf
    max_T: float = math.inf
    max_Rm: float = math.inf

    def resolve_min_eig(self, initial_min_eig: float) -> float:
        if self.min_eig is not None:
            return self.min_eig
        return self.min_eig_rel * initial_min_eig


@dataclass
class RunResult:
    trajectory: list[FlowState]
    diagnostics: list[diag.DiagnosticsRecord]
    report: BlowUpReport | None
    completed: bool
    monitor: diag.MonitorParams
    steps_taken: int = 0


def run_flow(
    initial: MetricField,
    kind: FlowKind,
    dt_policy: DtPolicy,
    t_end: float,
    sample_every: int = 1,
    hat_g: MetricField | None = None,
    guards: GuardConfig | None = None,
    collect_diagnostics: bool = True,
) -> RunResult:
    """Integrate a flow, sampling snapshots and diagnostics every ``sample_every`` steps.

    On a positivity-guard trip the partial trajectory is returned together
    with a report naming the first monitored quantity that crossed its
    threshold (the guard itself, unless a configured scalar threshold was
    crossed at an earlier sample).
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    guards = guards or GuardConfig()
    hat = hat_g if hat_g is not None else initial
    guard = guards.resolve_min_eig(initial.min_eigenvalue())
    hat_pkg = chern_package(hat) if collect_diagnostics else None
    monitor = (
        diag.monitor_params(initial, hat)
        if collect_diagnostics
        else diag.MonitorParams(a=math.inf, A=0.0, k_equiv=1.0)
    )

    state = FlowState(t=0.0, g=initial, hat_g=hat, kind=kind)
    trajectory = [state]
    records: list[diag.DiagnosticsRecord] = []
    report: BlowUpReport | None = None

    def sample(st: FlowState) -> BlowUpReport | None:
        if not collect_diagnostics:
            return None
        rec = diag.compute_record(st.t, st.g, hat, hat_pkg, monitor)
        records.append(rec)
        for qty, value, threshold in (
            ("tr_g_hat", rec.tr_g_hat, guards.tr_g_hat),
            ("max_T", rec.max_T, guards.max_T),
            ("max_Rm", rec.max_Rm, guards.max_Rm),
        ):
            if value >= threshold:
                return BlowUpReport(
                    t_trip=st.t,
                    quantity=qty,
                    value=value,
                    threshold=threshold,
                    message=f"{qty}={value:.6g} crossed threshold {threshold:.6g} at t={st.t:.6g}",
                )
        return None

    report = sample(state)
    steps = 0
    if dt_policy.mode == "fixed":
        n_steps = round(t_end / dt_policy.dt)
        if abs(n_steps * dt_policy.dt - t_end) > 1e-9 * max(1.0, t_end):
            n_steps = math.ceil(t_end / dt_policy.dt)
    else:
        n_steps = None

    t_cursor = 0.0
    while report is None:
        if dt_policy.mode == "fixed":
            if steps >= n_steps:
                break
            dt = dt_policy.dt
        else:
            if t_cursor >= t_end - 1e-12:
                break
            rhs = flow_rhs(kind, state.g)
            dt = min(dt_policy.dt, cfl_cap(state.g, rhs, dt_policy.c), t_end - t_cursor)
        try:
            state = step(state, dt, guard=guard)
        except PositivityLost as exc:
            if trajectory[-1] is not state:
                trajectory.append(state)
            report = BlowUpReport(
                t_trip=exc.t,
                quantity="min_eigenvalue",
                value=exc.min_eig,
                threshold=exc.threshold,
                message=str(exc),
            )
            break
        steps += 1
        t_cursor = state.t
        if steps % sample_every == 0:
            trajectory.append(state)
            report = sample(state)

    if report is None and trajectory[-1] is not state:
        trajectory.append(state)
        report = sample(state)

    completed = report is None
    return RunResult(
        trajectory=trajectory,
        diagnostics=records,
        report=report,
        completed=completed,
        monitor=monitor,
        steps_taken=steps,
    )
