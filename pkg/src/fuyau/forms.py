"""Coordinate exterior algebra for (p,q)-forms on the flat torus.

A form of bidegree ``(p, q)`` is stored densely on canonical multi-indices:
one complex coefficient field per pair ``(J, K)`` of strictly increasing
index tuples, representing the component on ``dz^J wedge dzbar^K`` (all
holomorphic factors first).  Coefficient fields broadcast against the grid,
so constant forms are stored as 0-d arrays and cost nothing to wedge.

Sign conventions are fixed by this kernel alone: a real (1,1)-form with
Hermitian coefficient matrix ``H`` (layout ``H[a, b] = H_{a-bar b}``) has
components ``i * H[k, j]`` on ``dz^j wedge dzbar^k``, and ``i del delbar``
of a scalar reproduces exactly the complex Hessian of the grid module.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .grid import TorusGrid, _fftn, _ifftn

# Fault-injection hook for the verification suites: flips the interleave
# sign in the wedge product so downstream identity checks must fail.
MUTATE_WEDGE_SIGN = False


def _merge_sign(a: tuple, b: tuple) -> int:
    """Parity sign of merge-sorting the disjoint increasing tuples a, b."""
    inv = 0
    for x in a:
        for y in b:
            if x > y:
                inv += 1
    return -1 if inv & 1 else 1


def _insert(idx: int, t: tuple) -> tuple:
    return tuple(sorted((idx,) + t))


@dataclass
class Form:
    """A (p,q)-form: dict of coefficient fields on increasing multi-indices."""

    grid: TorusGrid
    p: int
    q: int
    comps: dict

    def __post_init__(self):
        n = self.grid.n
        if not (0 <= self.p <= n and 0 <= self.q <= n):
            raise ValueError(f"bidegree ({self.p},{self.q}) out of range for n={n}")

    def component(self, J: tuple, K: tuple) -> np.ndarray:
        return self.comps.get((tuple(J), tuple(K)), np.zeros(()))

    def __add__(self, other: "Form") -> "Form":
        if (self.p, self.q) != (other.p, other.q):
            raise ValueError("cannot add forms of different bidegree")
        comps = dict(self.comps)
        for key, val in other.comps.items():
            comps[key] = comps[key] + val if key in comps else val
        return Form(self.grid, self.p, self.q, comps)

    def __sub__(self, other: "Form") -> "Form":
        return self + (-1.0) * other

    def __mul__(self, scalar) -> "Form":
        """Pointwise multiplication by a scalar or scalar field."""
        return Form(self.grid, self.p, self.q, {k: v * scalar for k, v in self.comps.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "Form":
        return self * (-1.0)

    def conjugate(self) -> "Form":
        """Complex conjugate; swaps bidegree (p,q) -> (q,p)."""
        comps = {}
        sign = -1 if (self.p * self.q) & 1 else 1
        for (J, K), val in self.comps.items():
            comps[(K, J)] = sign * np.conj(val)
        return Form(self.grid, self.q, self.p, comps)


def scalar_form(grid: TorusGrid, f) -> Form:
    return Form(grid, 0, 0, {((), ()): np.asarray(f, dtype=complex)})


def form_from_hermitian(grid: TorusGrid, H) -> Form:
    """Real (1,1)-form from a Hermitian coefficient field or constant matrix."""
    H = np.asarray(H)
    comps = {}
    for j in range(grid.n):
        for k in range(grid.n):
            comps[((j,), (k,))] = 1j * np.asarray(H[..., k, j], dtype=complex)
    return Form(grid, 1, 1, comps)


def wedge(a: Form, b: Form) -> Form:
    """Wedge product with full antisymmetrization and sign bookkeeping."""
    if a.grid is not b.grid and a.grid != b.grid:
        raise ValueError("wedge of forms on different grids")
    n = a.grid.n
    p, q = a.p + b.p, a.q + b.q
    if p > n or q > n:
        raise ValueError(f"wedge degree ({p},{q}) exceeds dimension n={n}")
    interleave = -1 if (b.p * a.q) & 1 else 1
    if MUTATE_WEDGE_SIGN:
        interleave = -interleave
    comps: dict = {}
    for (Ja, Ka), va in a.comps.items():
        for (Jb, Kb), vb in b.comps.items():
            if set(Ja) & set(Jb) or set(Ka) & set(Kb):
                continue
            sign = interleave * _merge_sign(Ja, Jb) * _merge_sign(Ka, Kb)
            key = (tuple(sorted(Ja + Jb)), tuple(sorted(Ka + Kb)))
            term = sign * va * vb
            comps[key] = comps[key] + term if key in comps else term
    return Form(a.grid, p, q, comps)


def del_holo(x: Form) -> Form:
    """Exterior derivative in the holomorphic directions (the operator del)."""
    g = x.grid
    spec: dict = {}
    for (J, K), val in x.comps.items():
        if val.ndim == 0:
            continue  # constant component: derivative vanishes identically
        hat = _fftn(val)
        for e in range(g.n):
            if e in J:
                continue
            sign = _merge_sign((e,), J)
            key = (_insert(e, J), K)
            term = sign * g.zeta(e) * hat
            spec[key] = spec[key] + term if key in spec else term
    comps = {key: _ifftn(val) for key, val in spec.items()}
    return Form(g, x.p + 1, x.q, comps)


def del_bar(x: Form) -> Form:
    """Exterior derivative in the antiholomorphic directions (delbar)."""
    g = x.grid
    spec: dict = {}
    for (J, K), val in x.comps.items():
        if val.ndim == 0:
            continue
        hat = _fftn(val)
        front = -1 if len(J) & 1 else 1  # dzbar^f crosses the |J| holomorphic factors
        for f in range(g.n):
            if f in K:
                continue
            sign = front * _merge_sign((f,), K)
            key = (J, _insert(f, K))
            term = sign * g.xi(f) * hat
            spec[key] = spec[key] + term if key in spec else term
    comps = {key: _ifftn(val) for key, val in spec.items()}
    return Form(g, x.p, x.q + 1, comps)


def i_del_delbar(x: Form) -> Form:
    """i del delbar of a form, both derivative layers fused in spectral space."""
    g = x.grid
    spec: dict = {}
    for (J, K), val in x.comps.items():
        if val.ndim == 0:
            continue
        hat = _fftn(val)
        front = -1 if len(J) & 1 else 1
        for f in range(g.n):
            if f in K:
                continue
            sign_f = front * _merge_sign((f,), K)
            Kf = _insert(f, K)
            mult_f = g.xi(f) * hat
            for e in range(g.n):
                if e in J:
                    continue
                sign_e = _merge_sign((e,), J)
                key = (_insert(e, J), Kf)
                term = (1j * sign_e * sign_f) * g.zeta(e) * mult_f
                spec[key] = spec[key] + term if key in spec else term
    comps = {key: _ifftn(val) for key, val in spec.items()}
    return Form(g, x.p + 1, x.q + 1, comps)


def i_del_delbar_scalar(grid: TorusGrid, f) -> Form:
    """i del delbar of a scalar field, as a (1,1)-form."""
    return form_from_hermitian(grid, grid.complex_hessian(f))


def del_scalar(grid: TorusGrid, f) -> Form:
    """del of a scalar field: the (1,0)-form with components d f / dz^c."""
    hat = _fftn(np.asarray(f, dtype=complex))
    comps = {((c,), ()): _ifftn(grid.zeta(c) * hat) for c in range(grid.n)}
    return Form(grid, 1, 0, comps)


def delbar_scalar(grid: TorusGrid, f) -> Form:
    hat = _fftn(np.asarray(f, dtype=complex))
    comps = {((), (c,)): _ifftn(grid.xi(c) * hat) for c in range(grid.n)}
    return Form(grid, 0, 1, comps)


def form_power(a: Form, k: int) -> Form:
    """k-fold wedge power (k >= 1)."""
    if k < 1:
        raise ValueError("wedge power requires k >= 1")
    out = a
    for _ in range(k - 1):
        out = wedge(out, a)
    return out


def volume_form(omega: Form) -> Form:
    """omega^n / n! for a (1,1)-form omega."""
    n = omega.grid.n
    return form_power(omega, n) * (1.0 / factorial(n))


_TOPKEY_CACHE: dict = {}


def top_key(n: int) -> tuple:
    if n not in _TOPKEY_CACHE:
        full = tuple(range(n))
        _TOPKEY_CACHE[n] = (full, full)
    return _TOPKEY_CACHE[n]


def top_component(T: Form) -> np.ndarray:
    n = T.grid.n
    if (T.p, T.q) != (n, n):
        raise ValueError(f"top_component requires an (n,n)-form, got ({T.p},{T.q})")
    return T.comps.get(top_key(n), np.zeros(()))


def top_ratio(T: Form, vol: complex) -> np.ndarray:
    """Scalar field T / (omega^n / n!) given the volume component ``vol``."""
    ratio = top_component(T) / vol
    out = np.real(ratio)
    return np.broadcast_to(out, T.grid.shape) if out.ndim == 0 else out
