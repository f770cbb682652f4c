"""Problem construction: presets, random band-limited data, JSON round trip.

Random data is drawn from a counter-based generator (Philox) keyed by the
seed, and problems are stored as *mode lists* (wavevector + complex
amplitude per Fourier mode) rather than sampled fields.  Mode lists are
grid-independent, so the same problem file can be synthesized at any N —
which is what the spectral-convergence checks rely on — and serialization
is byte-reproducible for a fixed seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import grid as gridmod
from .grid import TorusGrid
from .model import ProblemData, make_problem, residual_divergence

SCHEMA = "fy-problem-1"


class InadmissibleError(ValueError):
    """A manufactured base point left the admissible cone."""


# ---------------------------------------------------------------------------
# Fourier-mode synthesis


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based generator: identical streams on every platform."""
    return np.random.Generator(np.random.Philox(seed))


def draw_modes(rng: np.random.Generator, n: int, kmax: int, count: int) -> list:
    """Random low-frequency modes: list of (kvec, complex amplitude)."""
    modes = []
    for _ in range(count):
        k = rng.integers(-kmax, kmax + 1, size=2 * n)
        if not np.any(k):
            k[rng.integers(2 * n)] = 1
        c = rng.normal() + 1j * rng.normal()
        modes.append((tuple(int(v) for v in k), complex(c)))
    return modes


def synth_scalar(grid: TorusGrid, modes: list) -> np.ndarray:
    """Real field sum_m Re[c_m exp(i k_m . x)]."""
    out = np.zeros(grid.shape)
    x = [grid.axis_coordinate(m) for m in range(2 * grid.n)]
    for k, c in modes:
        theta = sum(k[m] * x[m] for m in range(2 * grid.n))
        out = out + (c.real * np.cos(theta) - c.imag * np.sin(theta))
    return out


def synth_complex(grid: TorusGrid, modes: list) -> np.ndarray:
    """Complex field sum_m c_m exp(i k_m . x)."""
    out = np.zeros(grid.shape, dtype=complex)
    x = [grid.axis_coordinate(m) for m in range(2 * grid.n)]
    for k, c in modes:
        theta = sum(k[m] * x[m] for m in range(2 * grid.n))
        out = out + c * np.exp(1j * theta)
    return out


def synth_hermitian(grid: TorusGrid, entry_modes: dict) -> np.ndarray:
    """Hermitian field from per-entry mode lists on the upper triangle.

    ``entry_modes[(a, b)]`` with ``a <= b`` holds the modes of entry
    ``(a, b)``; diagonal entries are synthesized real, off-diagonal entries
    get their conjugate mirror.
    """
    n = grid.n
    out = np.zeros(grid.shape + (n, n), dtype=complex)
    for (a, b), modes in entry_modes.items():
        if a == b:
            out[..., a, a] += synth_scalar(grid, modes)
        else:
            val = synth_complex(grid, modes)
            out[..., a, b] += val
            out[..., b, a] += np.conj(val)
    return out


def random_hermitian_modes(rng, n: int, kmax: int = 2, per_entry: int = 3,
                           sup_bound: float = 1.0) -> dict:
    """Mode lists for a random Hermitian field with a grid-free sup bound.

    Amplitudes are rescaled so that sum over all entries of sum |c_m| equals
    ``sup_bound``, which bounds the pointwise operator norm by ``sup_bound``
    on every grid.
    """
    entry_modes = {}
    total = 0.0
    for a in range(n):
        for b in range(a, n):
            modes = draw_modes(rng, n, kmax, per_entry)
            entry_modes[(a, b)] = modes
            weight = 2.0 if a != b else 1.0
            total += weight * sum(abs(c) for _, c in modes)
    scale = sup_bound / total
    return {
        key: [(k, c * scale) for k, c in modes] for key, modes in entry_modes.items()
    }


def random_scalar_modes(rng, n: int, kmax: int = 2, count: int = 6,
                        sup_bound: float = 1.0) -> list:
    modes = draw_modes(rng, n, kmax, count)
    total = sum(abs(c) for _, c in modes)
    return [(k, c * sup_bound / total) for k, c in modes]


# ---------------------------------------------------------------------------
# problem specification (serializable)


@dataclass
class ProblemSpec:
    """Serializable description of one Fu-Yau instance."""

    n: int
    N: int
    alpha: float
    M0: float
    g: np.ndarray
    rho_modes: dict = field(default_factory=dict)
    mu_modes: list = field(default_factory=list)
    rho_dump: str = None
    mu_dump: str = None
    label: str = ""

    def build(self, N: int = None, base_dir=None) -> ProblemData:
        """Synthesize the problem on its grid (or an override resolution)."""
        grid = TorusGrid(self.n, N or self.N)
        if self.rho_dump is not None:
            _, rho = gridmod.read_field(_resolve(base_dir, self.rho_dump))
        else:
            rho = synth_hermitian(grid, self.rho_modes)
        if self.mu_dump is not None:
            _, mu = gridmod.read_field(_resolve(base_dir, self.mu_dump))
        else:
            mu = synth_scalar(grid, self.mu_modes)
        return make_problem(grid, self.g, rho, mu, self.alpha, self.M0)


def _resolve(base_dir, path):
    import os

    if base_dir is None or os.path.isabs(path):
        return path
    return os.path.join(base_dir, path)


def _modes_to_json(modes: list) -> list:
    return [{"k": list(k), "re": c.real, "im": c.imag} for k, c in modes]


def _modes_from_json(data: list) -> list:
    return [(tuple(m["k"]), complex(m["re"], m["im"])) for m in data]


def spec_to_json(spec: ProblemSpec) -> str:
    doc = {
        "schema": SCHEMA,
        "label": spec.label,
        "n": spec.n,
        "N": spec.N,
        "alpha": spec.alpha,
        "M0": spec.M0,
        "g": [[[v.real, v.imag] for v in row] for row in np.asarray(spec.g, complex)],
    }
    doc["rho"] = (
        {"dump": spec.rho_dump}
        if spec.rho_dump is not None
        else {"modes": {f"{a},{b}": _modes_to_json(m) for (a, b), m in spec.rho_modes.items()}}
    )
    doc["mu"] = (
        {"dump": spec.mu_dump}
        if spec.mu_dump is not None
        else {"modes": _modes_to_json(spec.mu_modes)}
    )
    return json.dumps(doc, sort_keys=True, indent=1)


def spec_from_json(text: str) -> ProblemSpec:
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"unsupported problem schema {doc.get('schema')!r}")
    g = np.array([[complex(re, im) for re, im in row] for row in doc["g"]])
    spec = ProblemSpec(
        n=int(doc["n"]), N=int(doc["N"]), alpha=float(doc["alpha"]),
        M0=float(doc["M0"]), g=g, label=doc.get("label", ""),
    )
    rho = doc["rho"]
    if "dump" in rho:
        spec.rho_dump = rho["dump"]
    else:
        spec.rho_modes = {
            tuple(int(s) for s in key.split(",")): _modes_from_json(val)
            for key, val in rho["modes"].items()
        }
    mu = doc["mu"]
    if "dump" in mu:
        spec.mu_dump = mu["dump"]
    else:
        spec.mu_modes = _modes_from_json(mu["modes"])
    return spec


# ---------------------------------------------------------------------------
# presets


def preset(name: str, n: int = None, N: int = None, alpha: float = None,
           M0: float = None, seed: int = 0) -> ProblemSpec:
    """Named starting configurations.

    ``trivial``    mu = 0 and constant rho: the exact path is u = log M0.
    ``fy-example`` slope -2 with mu = 0 and a random band-limited rho, the
                   classical explicitly-solvable slope/source combination.
    ``generic``    random band-limited rho and mu.
    """
    n = n or 2
    N = N or (16 if n == 2 else 8)
    M0 = M0 if M0 is not None else 1e3
    rng = rng_from_seed(seed)
    if name == "trivial":
        alpha = alpha if alpha is not None else -1.0
        rho_modes = {}
        for a in range(n):
            rho_modes[(a, a)] = [((0,) * (2 * n), 0.4 + 0.0j)]
        for a in range(n):
            for b in range(a + 1, n):
                rho_modes[(a, b)] = [((0,) * (2 * n), 0.1 + 0.05j)]
        return ProblemSpec(n=n, N=N, alpha=alpha, M0=M0, g=np.eye(n),
                           rho_modes=rho_modes, mu_modes=[], label="trivial")
    if name == "fy-example":
        alpha = alpha if alpha is not None else -2.0
        rho_modes = random_hermitian_modes(rng, n, kmax=2, per_entry=3, sup_bound=1.0)
        return ProblemSpec(n=n, N=N, alpha=alpha, M0=M0, g=np.eye(n),
                           rho_modes=rho_modes, mu_modes=[], label="fy-example")
    if name == "generic":
        alpha = alpha if alpha is not None else -1.0
        rho_modes = random_hermitian_modes(rng, n, kmax=2, per_entry=3, sup_bound=1.0)
        mu_modes = random_scalar_modes(rng, n, kmax=2, count=6, sup_bound=0.5)
        return ProblemSpec(n=n, N=N, alpha=alpha, M0=M0, g=np.eye(n),
                           rho_modes=rho_modes, mu_modes=mu_modes, label="generic")
    raise ValueError(f"unknown preset {name!r}")


PRESETS = ("trivial", "fy-example", "generic")


# ---------------------------------------------------------------------------
# manufactured solutions


def default_u_star(grid: TorusGrid, M0: float, amplitude: float = 0.05) -> np.ndarray:
    """log(M0) + amplitude * sin(x^1) cos(x^3), the canonical test profile."""
    x1 = grid.axis_coordinate(0)
    x3 = grid.axis_coordinate(2)
    return np.log(M0) + amplitude * np.broadcast_to(np.sin(x1) * np.cos(x3), grid.shape)


def manufacture(spec: ProblemSpec, u_star: np.ndarray, out_mu_dump: str = None):
    """Forcing that makes ``u_star`` an exact solution at t = 1.

    Rescales ``u_star`` so the mass constraint holds exactly, evaluates the
    divergence-form bracket at ``u_star``, negates it to get the source, and
    mean-corrects.  Returns ``(new_spec, u_star_scaled, info)`` where info
    records the Stokes defect of the raw source and the cone margin.
    """
    from .model import admissibility

    grid = TorusGrid(spec.n, spec.N)
    u_star = u_star + np.log(spec.M0 / np.mean(np.exp(u_star)))
    base = ProblemSpec(n=spec.n, N=spec.N, alpha=spec.alpha, M0=spec.M0,
                       g=spec.g, rho_modes=spec.rho_modes, rho_dump=spec.rho_dump,
                       mu_modes=[], label=spec.label)
    P0 = base.build()
    adm = admissibility(u_star, 1.0, P0)
    if adm.margin <= 0.0:
        raise InadmissibleError(
            f"u_star leaves the cone: margin {adm.margin:.6e} at {adm.worst_point}"
        )
    mu_raw = -residual_divergence(u_star, 1.0, P0)
    stokes_defect = float(np.mean(mu_raw))
    info = {
        "stokes_defect": stokes_defect,
        "cone_margin": adm.margin,
        "constraint": float(np.mean(np.exp(u_star))),
    }
    new_spec = ProblemSpec(
        n=spec.n, N=spec.N, alpha=spec.alpha, M0=spec.M0, g=spec.g,
        rho_modes=spec.rho_modes, rho_dump=spec.rho_dump,
        mu_dump=out_mu_dump, label=(spec.label + "+manufactured").strip("+"),
    )
    return new_spec, u_star, mu_raw - stokes_defect, info


def manufactured_problem(spec: ProblemSpec, u_star: np.ndarray):
    """In-memory manufactured instance: returns (ProblemData, u_star, info)."""
    new_spec, us, mu, info = manufacture(spec, u_star)
    grid = TorusGrid(spec.n, spec.N)
    if spec.rho_dump is not None:
        _, rho = gridmod.read_field(spec.rho_dump)
    else:
        rho = synth_hermitian(grid, spec.rho_modes)
    P = make_problem(grid, spec.g, rho, mu, spec.alpha, spec.M0)
    return P, us, info
