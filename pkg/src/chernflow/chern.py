"""Chern-connection calculus for Hermitian metrics on flat tori.

Derived fields of a metric g (data layouts, comma-last convention):

    gamma[..., k, i, j]    connection coefficients  G^k_{ij} = g^{rbar k} dg_{j rbar}/dz^i
    torsion[..., k, i, j]  T^k_{ij} = G^k_{ij} - G^k_{ji}
    riemann[..., k, l, r, s]  R_{k lbar r sbar} = -g_{r sbar, k lbar}
                              + g^{bbar a} g_{a sbar, lbar} g_{r bbar, k}
    ric1[..., r, s]        R_{r sbar}      = g^{lbar k} R_{r sbar k lbar}
    ric2[..., r, s]        R~_{r sbar}     = g^{lbar k} R_{k lbar r sbar}

The curvature is assembled from metric derivatives only; the equivalent
"derivative of the connection" form is kept as an independent cross-check
(:func:`curvature_from_connection`).

Mixed-position curvature uses the raising convention fixed by the identity
d_rbar(G - G_hat) = -Rm + Rm_hat, i.e. R^k_{i rbar j} = g^{sbar k} R_{i rbar j sbar}
(raising on the last slot).  Conjugate objects follow by Hermitian symmetry.

The covariant derivative appends the new derivative slot last: holomorphic
derivatives correct holomorphic slots only (+Gamma on upper, -Gamma on lower),
antiholomorphic derivatives correct antiholomorphic slots with the conjugate
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import PeriodicGrid, wirtinger_stack
from .tensors import (
    LA,
    LH,
    UA,
    UH,
    MetricField,
    TensorField,
    ValenceError,
    hermitian_conj,
    norm_sq,
    slot_char,
    slot_is_upper,
    sup_norm,
)

_LETTERS = "abcdefghijklmnopqrstuvwxy"  # 'z' reserved for the flattened grid axis


def pes(expr: str, *arrays: np.ndarray) -> np.ndarray:
    """Pointwise einsum over grid points.

    ``expr`` uses one letter per component axis (no 'z'); grid axes are
    flattened into a single batch axis for speed and restored afterwards.
    """
    lhs, rhs = expr.split("->")
    terms = lhs.split(",")
    flats = []
    gshape = None
    for term, arr in zip(terms, arrays):
        r = len(term)
        gs = arr.shape[: arr.ndim - r]
        if gshape is None or len(gs) > len(gshape):
            gshape = gs
        flats.append(arr.reshape((-1,) + arr.shape[arr.ndim - r :]))
    out = np.einsum(
        ",".join("z" + t for t in terms) + "->z" + rhs, *flats, optimize=True
    )
    return out.reshape(gshape + out.shape[1:])


# ---------------------------------------------------------------------------
# metric derivative stacks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricDerivatives:
    """First and mixed second spectral derivatives of the metric samples.

    dgh[..., r, s, k] = d_k g_{r sbar}
    dga[..., r, s, l] = d_lbar g_{r sbar}      (= conj(dgh[..., s, r, l]))
    d2g[..., r, s, k, l] = d_lbar d_k g_{r sbar}
    """

    dgh: np.ndarray
    dga: np.ndarray
    d2g: np.ndarray | None


def metric_derivatives(m: MetricField, *, second: bool = True) -> MetricDerivatives:
    dgh = wirtinger_stack(m.matrix, m.grid, "h")
    dga = np.conj(np.swapaxes(dgh, -3, -2))
    d2g = wirtinger_stack(dgh, m.grid, "a") if second else None
    return MetricDerivatives(dgh=dgh, dga=dga, d2g=d2g)


# ---------------------------------------------------------------------------
# the connection package
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChernPackage:
    """Connection, torsion, curvature and both Ricci traces of one metric."""

    metric: MetricField
    gamma: TensorField
    torsion: TensorField
    riemann: TensorField
    ric1: TensorField
    ric2: TensorField
    derivs: MetricDerivatives = field(repr=False, default=None)

    @property
    def grid(self) -> PeriodicGrid:
        return self.metric.grid


def chern_package(m: MetricField) -> ChernPackage:
    """Compute the full Chern package of a metric."""
    grid = m.grid
    der = metric_derivatives(m)
    inv = m.inv_matrix

    gamma = pes("rk,jri->kij", inv, der.dgh)
    torsion = gamma - np.swapaxes(gamma, -2, -1)

    quad = pes("ba,asl,rbk->klrs", inv, der.dga, der.dgh)
    riemann = -np.transpose(
        der.d2g, axes=tuple(range(der.d2g.ndim - 4)) + tuple(
            der.d2g.ndim - 4 + i for i in (2, 3, 0, 1)
        )
    ) + quad

    ric1 = pes("lk,rskl->rs", inv, riemann)
    ric2 = pes("lk,klrs->rs", inv, riemann)

    return ChernPackage(
        metric=m,
        gamma=TensorField(grid, (UH, LH, LH), gamma),
        torsion=TensorField(grid, (UH, LH, LH), torsion),
        riemann=TensorField(grid, (LH, LA, LH, LA), riemann),
        ric1=TensorField(grid, (LH, LA), ric1),
        ric2=TensorField(grid, (LH, LA), ric2),
        derivs=der,
    )


def curvature_from_connection(pkg: ChernPackage) -> TensorField:
    """Cross-check form of the curvature: R_{k lbar r sbar} = -g_{u sbar} d_lbar G^u_{kr}."""
    dgamma = wirtinger_stack(pkg.gamma.data, pkg.grid, "a")  # [..., u, k, r, l]
    data = -pes("us,ukrl->klrs", pkg.metric.matrix, dgamma)
    return TensorField(pkg.grid, (LH, LA, LH, LA), data)


# ---------------------------------------------------------------------------
# covariant derivatives and Laplacian
# ---------------------------------------------------------------------------


def covariant_deriv(t: TensorField, pkg: ChernPackage, kind: str) -> TensorField:
    """Chern covariant derivative; appends one lower slot of the chosen character.

    kind 'h': nabla_i with Gamma corrections on holomorphic slots only.
    kind 'a': nabla_ibar with conjugate-Gamma corrections on antiholomorphic
    slots only.
    """
    if kind not in ("h", "a"):
        raise ValueError(f"kind must be 'h' or 'a', got {kind!r}")
    grid = t.grid
    data = wirtinger_stack(t.data, grid, kind)
    rank = t.rank
    sub = _LETTERS[:rank]
    dl = _LETTERS[rank]
    mm = _LETTERS[rank + 1]
    gam = pkg.gamma.data if kind == "h" else np.conj(pkg.gamma.data)
    target = "h" if kind == "h" else "a"
    for p, s in enumerate(t.slots):
        if slot_char(s) != target:
            continue
        tin = sub[:p] + mm + sub[p + 1 :]
        if slot_is_upper(s):
            gsub = sub[p] + dl + mm
            sign = 1.0
        else:
            gsub = mm + dl + sub[p]
            sign = -1.0
        data = data + sign * pes(f"{gsub},{tin}->{sub}{dl}", gam, t.data)
    new_slot = LH if kind == "h" else LA
    return TensorField(grid, t.slots + (new_slot,), data)


def chern_laplacian(f, m: MetricField, pkg: ChernPackage | None = None):
    """Chern Laplacian: plain-partial form on scalars, g^{bbar a} nabla_a nabla_bbar on tensors."""
    if isinstance(f, np.ndarray) or (isinstance(f, TensorField) and f.rank == 0):
        arr = f.data if isinstance(f, TensorField) else np.asarray(f, dtype=np.complex128)
        d1 = wirtinger_stack(arr, m.grid, "h")
        d2 = wirtinger_stack(d1, m.grid, "a")  # [..., r, s] = d_sbar d_r f
        return pes("sr,rs->", m.inv_matrix, d2)
    if pkg is None:
        pkg = chern_package(m)
    first = covariant_deriv(f, pkg, "a")
    second = covariant_deriv(first, pkg, "h")
    sub = _LETTERS[: f.rank]
    data = pes(f"ba,{sub}ba->{sub}", m.inv_matrix, second.data)
    return TensorField(f.grid, f.slots, data)


# ---------------------------------------------------------------------------
# mixed-position curvature and the commutator action
# ---------------------------------------------------------------------------


def raised_curvature_h(pkg: ChernPackage) -> np.ndarray:
    """R^c_{a bbar m} = g^{sbar c} R_{a bbar m sbar}, indexed [..., a, b, m, c]."""
    return pes("sc,abms->abmc", pkg.metric.inv_matrix, pkg.riemann.data)


def raised_curvature_a(pkg: ChernPackage) -> np.ndarray:
    """R^{nbar}_{bbar a pbar} = g^{nbar s} R_{a bbar s pbar}, indexed [..., a, b, p, n]."""
    return pes("ns,absp->abpn", pkg.metric.inv_matrix, pkg.riemann.data)


def curvature_action(t: TensorField, pkg: ChernPackage) -> np.ndarray:
    """Curvature action of [nabla_a, nabla_bbar] on a tensor, per slot valence.

    Returns an array with axes [..., slots..., b, a]: one curvature term per
    slot, sign + for lower slots of the acting character and - for upper.
    """
    rh = None
    ra = None
    rank = t.rank
    sub = _LETTERS[:rank]
    mm = _LETTERS[rank]
    out = 0.0
    for p, s in enumerate(t.slots):
        tin = sub[:p] + mm + sub[p + 1 :]
        c = sub[p]
        if slot_char(s) == "h":
            if rh is None:
                rh = raised_curvature_h(pkg)
            if slot_is_upper(s):
                term = pes(f"uv{mm}{c},{tin}->{sub}vu", rh, t.data)
                out = out + term
            else:
                term = pes(f"uv{c}{mm},{tin}->{sub}vu", rh, t.data)
                out = out - term
        else:
            if ra is None:
                ra = raised_curvature_a(pkg)
            if slot_is_upper(s):
                term = pes(f"uv{mm}{c},{tin}->{sub}vu", ra, t.data)
                out = out - term
            else:
                term = pes(f"uv{c}{mm},{tin}->{sub}vu", ra, t.data)
                out = out + term
    return out


def commutator_residual(m: MetricField, t: TensorField, pkg: ChernPackage | None = None) -> float:
    """Sup-norm residual of [nabla_a, nabla_bbar] t minus the curvature action.

    Supports tensors whose slots are all holomorphic or all antiholomorphic
    (the two cases used by the torsion- and curvature-norm evolution proofs).
    """
    chars = {slot_char(s) for s in t.slots}
    if len(chars) > 1:
        raise ValenceError("commutator_residual supports single-character tensors only")
    if pkg is None:
        pkg = chern_package(m)
    x1 = covariant_deriv(covariant_deriv(t, pkg, "a"), pkg, "h").data  # [..., b, a]
    x2 = covariant_deriv(covariant_deriv(t, pkg, "h"), pkg, "a").data  # [..., a, b]
    lhs = x1 - np.swapaxes(x2, -1, -2)
    rhs = curvature_action(t, pkg)
    return sup_norm(lhs - rhs)


# ---------------------------------------------------------------------------
# exact identity residuals
# ---------------------------------------------------------------------------


def metric_compatibility_residual(pkg: ChernPackage) -> float:
    """sup |nabla g| for both derivative characters (zero for the Chern connection)."""
    rh = covariant_deriv(pkg.metric.g, pkg, "h")
    ra = covariant_deriv(pkg.metric.g, pkg, "a")
    return max(sup_norm(rh), sup_norm(ra))


def lowered_torsion(pkg: ChernPackage) -> TensorField:
    """All-lower torsion T_{k i jbar} = g_{m jbar} T^m_{ki}, indexed [..., k, i, j]."""
    data = pes("mj,mki->kij", pkg.metric.matrix, pkg.torsion.data)
    return TensorField(pkg.grid, (LH, LH, LA), data)


def ricci_difference_residual(m: MetricField, pkg: ChernPackage | None = None) -> float:
    """Residual of Ric - Ric~ = g^{lbar k}(nabla_lbar T_{k i jbar} - nabla_i T_{lbar jbar k})."""
    if pkg is None:
        pkg = chern_package(m)
    tl = lowered_torsion(pkg)
    term1 = pes("lk,kijl->ij", m.inv_matrix, covariant_deriv(tl, pkg, "a").data)
    tlc = hermitian_conj(tl)  # [..., l, j, k] = T_{lbar jbar k}
    term2 = pes("lk,ljki->ij", m.inv_matrix, covariant_deriv(tlc, pkg, "h").data)
    lhs = pkg.ric1.data - pkg.ric2.data
    return sup_norm(lhs - (term1 - term2))


def bianchi_residual(m: MetricField, pkg: ChernPackage | None = None) -> float:
    """Second Bianchi identity: nabla_a R_{i bbar j qbar} - nabla_i R_{a bbar j qbar}
    - T^k_{ai} R_{k bbar j qbar} = 0."""
    if pkg is None:
        pkg = chern_package(m)
    dR = covariant_deriv(pkg.riemann, pkg, "h").data  # [..., i, b, j, q, a]
    swapped = np.moveaxis(dR, (-5, -1), (-1, -5))  # [..., a, b, j, q, i]
    tterm = pes("kai,kbjq->ibjqa", pkg.torsion.data, pkg.riemann.data)
    return sup_norm(dR - swapped - tterm)


def connection_gap(pkg: ChernPackage, hat_pkg: ChernPackage) -> TensorField:
    """Difference of the two Chern connections, a (1,2) tensor [..., k, i, j]."""
    return pkg.gamma - hat_pkg.gamma


def gap_curvature_residual(
    m: MetricField,
    hat: MetricField,
    pkg: ChernPackage | None = None,
    hat_pkg: ChernPackage | None = None,
) -> float:
    """Residual of d_rbar(connection gap) = -Rm + Rm_hat in raised form.

    Checks nabla_rbar (G - G_hat)^k_{ij} = -R^k_{i rbar j} + R_hat^k_{i rbar j},
    where each curvature is raised on its last slot with its own metric.
    """
    if pkg is None:
        pkg = chern_package(m)
    if hat_pkg is None:
        hat_pkg = chern_package(hat)
    gap = connection_gap(pkg, hat_pkg)
    lhs = covariant_deriv(gap, pkg, "a").data  # [..., k, i, j, r]
    rm = pes("sk,irjs->kijr", m.inv_matrix, pkg.riemann.data)
    rmh = pes("sk,irjs->kijr", hat.inv_matrix, hat_pkg.riemann.data)
    return sup_norm(lhs - (-rm + rmh))


def kahler_torsion_sup(pkg: ChernPackage) -> float:
    """sup |T| componentwise; a Kaehler detector at roundoff scale."""
    return sup_norm(pkg.torsion)


def riemann_pair_symmetry_residual(pkg: ChernPackage) -> float:
    """sup |R_{k lbar r sbar} - conj(R_{l kbar s rbar})|."""
    r = pkg.riemann.data
    swapped = np.conj(np.moveaxis(r, (-4, -3, -2, -1), (-3, -4, -1, -2)))
    return sup_norm(r - swapped)


def ricci_hermiticity_residual(pkg: ChernPackage) -> float:
    """Max Hermitian-symmetry residual of the two Ricci traces."""
    res1 = sup_norm(pkg.ric1.data - np.conj(np.swapaxes(pkg.ric1.data, -1, -2)))
    res2 = sup_norm(pkg.ric2.data - np.conj(np.swapaxes(pkg.ric2.data, -1, -2)))
    return max(res1, res2)
