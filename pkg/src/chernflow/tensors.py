"""Grid-sampled complex tensors with mixed holomorphic/antiholomorphic valence.

Valence bookkeeping
-------------------
Each tensor slot is one of four kinds, encoded as a two-character string:

    "uh"  upper holomorphic        "lh"  lower holomorphic
    "ua"  upper antiholomorphic    "la"  lower antiholomorphic

``TensorField.data`` has shape ``grid.shape + (n,)*rank`` with one trailing
axis per slot, in slot order (row-major).  All contractions reference slots
by position.

Metric conventions
------------------
The metric field stores g_{i jbar} as ``matrix[..., i, j]``.  The cached
inverse stores g^{rbar k} as ``inv[..., r, k]``, so that

    sum_k g^{rbar k} g_{k sbar} = delta_{rs},   sum_r g^{rbar k} g_{j rbar} = delta_{kj}.

Raising a slot with the inverse metric flips its character (a lower
holomorphic slot raises to an upper antiholomorphic one, etc.), matching the
pairing of holomorphic with antiholomorphic indices that the metric provides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import PeriodicGrid, wirtinger

UH, LH, UA, LA = "uh", "lh", "ua", "la"
_VALID_SLOTS = {UH, LH, UA, LA}

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class ValenceError(ValueError):
    """Illegal slot pairing or slot/direction combination."""


def slot_is_upper(slot: str) -> bool:
    return slot[0] == "u"


def slot_char(slot: str) -> str:
    """'h' for holomorphic, 'a' for antiholomorphic."""
    return slot[1]


def conjugate_slot(slot: str) -> str:
    return slot[0] + ("a" if slot[1] == "h" else "h")


@dataclass(frozen=True)
class TensorField:
    """A grid-sampled complex tensor with declared valence.

    Data is treated as immutable once constructed.
    """

    grid: PeriodicGrid
    slots: tuple[str, ...]
    data: np.ndarray

    def __post_init__(self):
        for s in self.slots:
            if s not in _VALID_SLOTS:
                raise ValenceError(f"unknown slot kind {s!r}")
        expected = self.grid.shape + (self.grid.n,) * len(self.slots)
        if self.data.shape != expected:
            raise ValenceError(
                f"data shape {self.data.shape} does not match grid+valence shape {expected}"
            )

    @property
    def rank(self) -> int:
        return len(self.slots)

    def __add__(self, other: "TensorField") -> "TensorField":
        if self.slots != other.slots or self.grid != other.grid:
            raise ValenceError("tensor addition requires identical grid and valence")
        return TensorField(self.grid, self.slots, self.data + other.data)

    def __sub__(self, other: "TensorField") -> "TensorField":
        if self.slots != other.slots or self.grid != other.grid:
            raise ValenceError("tensor subtraction requires identical grid and valence")
        return TensorField(self.grid, self.slots, self.data - other.data)

    def __mul__(self, scalar) -> "TensorField":
        return TensorField(self.grid, self.slots, self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "TensorField":
        return TensorField(self.grid, self.slots, -self.data)


def tensor(grid: PeriodicGrid, slots, data) -> TensorField:
    data = np.asarray(data, dtype=np.complex128)
    return TensorField(grid, tuple(slots), data)


def zeros(grid: PeriodicGrid, slots) -> TensorField:
    shape = grid.shape + (grid.n,) * len(slots)
    return TensorField(grid, tuple(slots), np.zeros(shape, dtype=np.complex128))


def sup_norm(data) -> float:
    """Deterministic sup norm over all samples and components."""
    arr = data.data if isinstance(data, TensorField) else np.asarray(data)
    return float(np.max(np.abs(arr)))


def partial(field: TensorField, r: int, kind: str) -> TensorField:
    """Spectral Wirtinger derivative of one field; valence unchanged.

    ``kind`` is 'h' for d_r and 'a' for d_rbar, r is 1-based.
    """
    return TensorField(field.grid, field.slots, wirtinger(field.data, field.grid, r, kind))


# ---------------------------------------------------------------------------
# metric fields
# ---------------------------------------------------------------------------


class MetricError(ValueError):
    """Metric field violates Hermitian symmetry or positivity."""


def _herm_transpose(matrix: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(matrix, -1, -2))


def _inverse_hermitian(matrix: np.ndarray) -> np.ndarray:
    """Per-point inverse; closed forms for n <= 2, LAPACK above."""
    n = matrix.shape[-1]
    if n == 1:
        return 1.0 / matrix
    if n == 2:
        a = matrix[..., 0, 0]
        b = matrix[..., 0, 1]
        c = matrix[..., 1, 0]
        d = matrix[..., 1, 1]
        det = a * d - b * c
        out = np.empty_like(matrix)
        out[..., 0, 0] = d / det
        out[..., 0, 1] = -b / det
        out[..., 1, 0] = -c / det
        out[..., 1, 1] = a / det
        return out
    return np.linalg.inv(matrix)


def eigenvalues_hermitian(matrix: np.ndarray) -> np.ndarray:
    """Real eigenvalues of a stack of Hermitian matrices, ascending.

    Closed forms for n <= 2 keep the flow guard cheap.
    """
    n = matrix.shape[-1]
    if n == 1:
        return matrix[..., 0].real
    if n == 2:
        a = matrix[..., 0, 0].real
        d = matrix[..., 1, 1].real
        b = matrix[..., 0, 1]
        half_tr = 0.5 * (a + d)
        disc = np.sqrt(np.maximum(0.25 * (a - d) ** 2 + (b * np.conj(b)).real, 0.0))
        return np.stack([half_tr - disc, half_tr + disc], axis=-1)
    return np.linalg.eigvalsh(matrix)


class MetricField:
    """Positive-definite Hermitian (1,1) metric samples with cached inverse.

    Parameters
    ----------
    grid : PeriodicGrid
    matrix : ndarray
        Shape ``grid.shape + (n, n)``; ``matrix[..., i, j]`` holds g_{i jbar}.
    check : bool
        Validate Hermitian symmetry, positivity and the inverse residual.
    herm_tol : float
        Sup-norm tolerance for the Hermitian-symmetry residual.
    """

    def __init__(self, grid: PeriodicGrid, matrix, *, check: bool = True, herm_tol: float = 1e-12):
        matrix = np.asarray(matrix, dtype=np.complex128)
        expected = grid.shape + (grid.n, grid.n)
        if matrix.shape != expected:
            raise MetricError(f"metric shape {matrix.shape}, expected {expected}")
        self.grid = grid
        self.matrix = matrix
        self._min_eig: float | None = None
        if check:
            herm_res = sup_norm(matrix - _herm_transpose(matrix))
            if herm_res > herm_tol:
                raise MetricError(f"Hermitian symmetry residual {herm_res:.3e} > {herm_tol:.1e}")
            if self.min_eigenvalue() <= 0.0:
                raise MetricError(
                    f"metric is not positive definite (min eigenvalue {self.min_eigenvalue():.3e})"
                )
        self.inv_matrix = _inverse_hermitian(matrix)

    def inverse_residual(self) -> float:
        """sup |g^{-1} g - I|; an invariant checked by the test suite."""
        return sup_norm(np.matmul(self.inv_matrix, self.matrix) - np.eye(self.grid.n))

    @property
    def g(self) -> TensorField:
        """g_{i jbar} as a TensorField."""
        return TensorField(self.grid, (LH, LA), self.matrix)

    @property
    def inv(self) -> TensorField:
        """g^{rbar k} as a TensorField; data[..., r, k] = g^{rbar k}."""
        return TensorField(self.grid, (UA, UH), self.inv_matrix)

    def eigenvalues(self) -> np.ndarray:
        return eigenvalues_hermitian(self.matrix)

    def min_eigenvalue(self) -> float:
        if self._min_eig is None:
            self._min_eig = float(np.min(self.eigenvalues()))
        return self._min_eig

    def max_eigenvalue(self) -> float:
        return float(np.max(self.eigenvalues()))

    def det(self) -> np.ndarray:
        """Per-point determinant (real positive for a valid metric)."""
        n = self.grid.n
        if n == 1:
            return self.matrix[..., 0, 0].real
        if n == 2:
            a = self.matrix[..., 0, 0]
            d = self.matrix[..., 1, 1]
            b = self.matrix[..., 0, 1]
            return (a * d - b * np.conj(b)).real
        return np.linalg.det(self.matrix).real


def identity_metric(grid: PeriodicGrid, scale: float = 1.0) -> MetricField:
    mat = np.zeros(grid.shape + (grid.n, grid.n), dtype=np.complex128)
    for i in range(grid.n):
        mat[..., i, i] = scale
    return MetricField(grid, mat)


def min_eigenvalue(m: MetricField) -> float:
    """Minimum over grid points of the smallest eigenvalue of g(x)."""
    return m.min_eigenvalue()


# ---------------------------------------------------------------------------
# contraction, raising/lowering, conjugation, norms
# ---------------------------------------------------------------------------


def _pair_legal(sa: str, sb: str) -> bool:
    return slot_is_upper(sa) != slot_is_upper(sb) and slot_char(sa) == slot_char(sb)


def contract(a: TensorField, b: TensorField, pairs) -> TensorField:
    """Pointwise Einstein contraction of slot pairs between two tensors.

    ``pairs`` is a list of (slot_of_a, slot_of_b) index pairs; each pair must
    join an upper and a lower slot of the same character.  Output slot order
    is the remaining slots of ``a`` followed by those of ``b``.
    """
    if a.grid != b.grid:
        raise ValenceError("contract requires identical grids")
    pairs = [(int(i), int(j)) for i, j in pairs]
    used_a = set()
    used_b = set()
    for ia, ib in pairs:
        if not (0 <= ia < a.rank and 0 <= ib < b.rank):
            raise ValenceError(f"slot pair ({ia},{ib}) out of range")
        if ia in used_a or ib in used_b:
            raise ValenceError("slot used in more than one pair")
        if not _pair_legal(a.slots[ia], b.slots[ib]):
            raise ValenceError(
                f"illegal pairing of {a.slots[ia]!r} with {b.slots[ib]!r} at ({ia},{ib})"
            )
        used_a.add(ia)
        used_b.add(ib)

    sub_a = list(_LETTERS[: a.rank])
    sub_b = list(_LETTERS[a.rank : a.rank + b.rank])
    for ia, ib in pairs:
        sub_b[ib] = sub_a[ia]
    out_slots = [s for i, s in enumerate(a.slots) if i not in used_a] + [
        s for i, s in enumerate(b.slots) if i not in used_b
    ]
    out_sub = [sub_a[i] for i in range(a.rank) if i not in used_a] + [
        sub_b[i] for i in range(b.rank) if i not in used_b
    ]
    expr = f"...{''.join(sub_a)},...{''.join(sub_b)}->...{''.join(out_sub)}"
    data = np.einsum(expr, a.data, b.data, optimize=True)
    return TensorField(a.grid, tuple(out_slots), data)


def raise_lower(t: TensorField, m: MetricField, slot: int, direction: str) -> TensorField:
    """Raise or lower one slot with the metric; other slots untouched.

    Raising a lower slot pairs it with the inverse metric and flips its
    character; lowering an upper slot pairs it with the metric.  The adjusted
    slot keeps its position.
    """
    if not (0 <= slot < t.rank):
        raise ValenceError(f"slot {slot} out of range")
    s = t.slots[slot]
    sub = list(_LETTERS[: t.rank])
    old = sub[slot]
    new = _LETTERS[t.rank]
    out_sub = sub.copy()
    out_sub[slot] = new

    if direction == "raise":
        if slot_is_upper(s):
            raise ValenceError("cannot raise an upper slot")
        # inv[..., r, k] = g^{rbar k}
        if slot_char(s) == "h":
            # X_k -> X^{rbar} = g^{rbar k} X_k
            expr = f"...{new}{old},...{''.join(sub)}->...{''.join(out_sub)}"
            new_slot = UA
        else:
            # X_{rbar} -> X^{k} = g^{rbar k} X_{rbar}
            expr = f"...{old}{new},...{''.join(sub)}->...{''.join(out_sub)}"
            new_slot = UH
        data = np.einsum(expr, m.inv_matrix, t.data, optimize=True)
    elif direction == "lower":
        if not slot_is_upper(s):
            raise ValenceError("cannot lower a lower slot")
        # matrix[..., k, s] = g_{k sbar}
        if slot_char(s) == "h":
            # X^k -> X_{sbar} = g_{k sbar} X^k
            expr = f"...{old}{new},...{''.join(sub)}->...{''.join(out_sub)}"
            new_slot = LA
        else:
            # X^{sbar} -> X_k = g_{k sbar} X^{sbar}
            expr = f"...{new}{old},...{''.join(sub)}->...{''.join(out_sub)}"
            new_slot = LH
        data = np.einsum(expr, m.matrix, t.data, optimize=True)
    else:
        raise ValenceError(f"direction must be 'raise' or 'lower', got {direction!r}")

    out_slots = list(t.slots)
    out_slots[slot] = new_slot
    return TensorField(t.grid, tuple(out_slots), data)


def hermitian_conj(t: TensorField) -> TensorField:
    """Complex conjugate; every slot swaps character, positions preserved."""
    return TensorField(t.grid, tuple(conjugate_slot(s) for s in t.slots), np.conj(t.data))


def norm_sq(t, m: MetricField) -> np.ndarray:
    """Pointwise squared norm |t|^2_g as a real scalar field.

    Each slot of ``t`` is paired with the corresponding slot of its Hermitian
    conjugate through the metric (inverse metric for lower slots, metric for
    upper slots).  Imaginary residue at roundoff level is truncated.
    """
    if isinstance(t, np.ndarray) or (isinstance(t, TensorField) and t.rank == 0):
        arr = t.data if isinstance(t, TensorField) else t
        return (arr * np.conj(arr)).real
    tc = hermitian_conj(t)
    for i, s in enumerate(t.slots):
        tc = raise_lower(tc, m, i, "lower" if slot_is_upper(s) else "raise")
    sub = _LETTERS[: t.rank]
    expr = f"...{sub},...{sub}->..."
    val = np.einsum(expr, t.data, tc.data, optimize=True)
    return val.real


def norm(t, m: MetricField) -> np.ndarray:
    """Pointwise norm |t|_g (clipped at zero before the square root)."""
    return np.sqrt(np.maximum(norm_sq(t, m), 0.0))
