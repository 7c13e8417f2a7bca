"""Continuous periodic Schrödinger operators in a plane-wave discretization.

The fibered operator at momentum k acts on cell-periodic functions; in the
Fourier basis {exp(i G.y)} its matrix is

    H(k)[G, G'] = 1/2 |k_cart + G_cart|^2 delta_{G,G'} + V_hat(G - G').

Unlike tight-binding families, H(k) is not periodic in k: dual-lattice shifts
act by the mode shift tau(lambda): G -> G + lambda. Evaluation therefore never
folds k.

Discrete modified Bloch-Floquet convention (1d per axis, tensorized): samples
w[c, j] live at x = (c + j/M) a with c in 0..N-1 cells and j in 0..M-1 points
per cell; momenta are k_n = (n/N) b with n = -N/2 .. N/2-1, and

    phi[n, j] = N^{-1/2} sum_c exp(-i 2 pi n (c + j/M) / N) w[c, j],

whose inverse is the exact adjoint, so the pair is exactly unitary on the
discrete inner product. The continuum |B|^{1/2} factors are absorbed here.
"""

from dataclasses import dataclass
from itertools import product

import json
import numpy as np

from .core import KPoint, Lattice, SpaceReflection, TauRep, TimeReversal

__all__ = [
    "PlaneWaveBasis",
    "FourierPotential",
    "SampledFunction",
    "make_plane_wave_basis",
    "fibered_hamiltonian",
    "potential_matrix",
    "bf_forward",
    "bf_inverse",
    "classical_intertwiner_check",
    "fiber_symmetry_ops",
    "load_potential",
    "save_potential",
]


@dataclass(frozen=True, eq=False)
class PlaneWaveBasis:
    """Dual-lattice modes with |G| <= cutoff, sorted by (|G|, lex integers).

    Closed under G -> -G by construction (the cutoff ball is symmetric).
    """

    lattice: Lattice
    cutoff: float
    g_integers: np.ndarray  # (n_modes, d) ints

    @property
    def n_modes(self):
        return self.g_integers.shape[0]

    @property
    def g_cart(self):
        return self.g_integers @ self.lattice.dual.T

    def index_table(self):
        return {tuple(g): i for i, g in enumerate(self.g_integers)}

    @property
    def negation_permutation(self):
        table = self.index_table()
        return np.array([table[tuple(-g)] for g in self.g_integers], dtype=int)


def make_plane_wave_basis(lattice, cutoff):
    """All modes within the cutoff ball; |m_j| <= |a_j| cutoff / 2 pi exactly bounds the search."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    d = lattice.dim
    bounds = [int(np.floor(np.linalg.norm(lattice.basis[:, j]) * cutoff / (2 * np.pi))) for j in range(d)]
    entries = []
    for m in product(*[range(-b, b + 1) for b in bounds]):
        g = lattice.dual @ np.asarray(m, dtype=float)
        norm = float(np.linalg.norm(g))
        if norm <= cutoff * (1 + 1e-12):
            entries.append((norm, tuple(m)))
    entries.sort(key=lambda e: (e[0], e[1]))
    if not entries:
        raise ValueError("cutoff retains no modes")
    g_integers = np.array([m for _, m in entries], dtype=int)
    return PlaneWaveBasis(lattice=lattice, cutoff=float(cutoff), g_integers=g_integers)


@dataclass(frozen=True, eq=False)
class FourierPotential:
    """Finite set of Fourier coefficients of a real periodic potential.

    Reality V_hat(-G) = conj(V_hat(G)) is required within 1e-14.
    """

    coefficients: dict

    def __post_init__(self):
        clean = {}
        for g, v in self.coefficients.items():
            clean[tuple(int(x) for x in g)] = complex(v)
        for g, v in clean.items():
            neg = tuple(-x for x in g)
            partner = clean.get(neg, 0.0)
            if abs(partner - np.conj(v)) > 1e-14:
                raise ValueError(f"potential is not real: V({neg}) != conj(V({g}))")
        object.__setattr__(self, "coefficients", clean)

    def value(self, g):
        return self.coefficients.get(tuple(int(x) for x in g), 0.0)

    def is_even(self, tol=1e-14):
        """Whether V(y) = V(-y), i.e. all coefficients are (real and) even."""
        return all(
            abs(self.value(tuple(-x for x in g)) - v) <= tol for g, v in self.coefficients.items()
        )


def potential_matrix(potential, basis):
    """Convolution matrix V_hat(G_i - G_j) over the basis modes."""
    gi = basis.g_integers
    n = basis.n_modes
    out = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for j in range(n):
            out[i, j] = potential.value(gi[i] - gi[j])
    return out


def fibered_hamiltonian(potential, basis, k):
    """Matrix of 1/2 (-i grad_y + k)^2 + V over the plane-wave modes.

    k may be a KPoint or reduced coordinates; coefficients absent from the
    potential map are zero by convention.
    """
    red = np.asarray(k.reduced if isinstance(k, KPoint) else k, dtype=float)
    kc = basis.lattice.kcart(red)
    shifted = basis.g_cart + kc
    kinetic = 0.5 * np.einsum("ij,ij->i", shifted, shifted)
    return np.diag(kinetic) + potential_matrix(potential, basis)


@dataclass(frozen=True, eq=False)
class SampledFunction:
    """Complex samples over a supercell or over (k-grid x cell samples).

    values has shape cells + per_cell in both cases; for kind "supercell" the
    leading axes are cell indices c = 0..N-1 (x = (c + j/M) a), for kind
    "bloch" they are momentum indices n = -N/2..N/2-1 in ascending order.
    """

    kind: str
    cells: tuple
    per_cell: tuple
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in ("supercell", "bloch"):
            raise ValueError(f"unknown SampledFunction kind {self.kind!r}")
        cells = tuple(int(n) for n in self.cells)
        per_cell = tuple(int(m) for m in self.per_cell)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "per_cell", per_cell)
        for m in per_cell:
            if m < 1 or (m & (m - 1)) != 0:
                raise ValueError(f"per-cell sample counts must be powers of two, got {per_cell}")
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape != cells + per_cell:
            raise ValueError(f"values shape {vals.shape} does not match {cells + per_cell}")
        object.__setattr__(self, "values", vals)

    @property
    def dim(self):
        return len(self.cells)

    def norm(self):
        return float(np.linalg.norm(self.values.ravel()))


def _axis_matrices(n, m):
    ks = np.arange(-(n // 2), n // 2)
    cs = np.arange(n)
    js = np.arange(m)
    dft = np.exp(-2j * np.pi * np.outer(ks, cs) / n) / np.sqrt(n)
    phase = np.exp(-2j * np.pi * np.outer(ks, js) / (n * m))
    return dft, phase


def bf_forward(w):
    """Modified Bloch-Floquet transform of a supercell sample array."""
    if w.kind != "supercell":
        raise ValueError("bf_forward expects a supercell SampledFunction")
    d = w.dim
    vals = w.values
    for axis in range(d):
        n, m = w.cells[axis], w.per_cell[axis]
        dft, phase = _axis_matrices(n, m)
        vals = np.tensordot(dft, vals, axes=(1, axis))
        vals = np.moveaxis(vals, 0, axis)
        shape = [1] * (2 * d)
        shape[axis] = n
        shape[d + axis] = m
        vals = vals * phase.reshape(shape)
    return SampledFunction(kind="bloch", cells=w.cells, per_cell=w.per_cell, values=vals)


def bf_inverse(phi):
    """Exact adjoint of bf_forward (so also its inverse)."""
    if phi.kind != "bloch":
        raise ValueError("bf_inverse expects a bloch SampledFunction")
    d = phi.dim
    vals = phi.values
    for axis in range(d):
        n, m = phi.cells[axis], phi.per_cell[axis]
        dft, phase = _axis_matrices(n, m)
        shape = [1] * (2 * d)
        shape[axis] = n
        shape[d + axis] = m
        vals = vals * np.conj(phase).reshape(shape)
        vals = np.tensordot(np.conj(dft.T), vals, axes=(1, axis))
        vals = np.moveaxis(vals, 0, axis)
    return SampledFunction(kind="supercell", cells=phi.cells, per_cell=phi.per_cell, values=vals)


def classical_intertwiner_check(potential, basis, k):
    """Spectral agreement between the fibered operator and its classical gauge.

    The classical-gauge operator (kinetic term acting on exp(i (k+G).y),
    assembled through a separate code path) is the conjugate of the fibered
    one by a diagonal phase, so the two matrices coincide entry-wise in exact
    arithmetic; the returned sup-distance of sorted spectra checks the two
    assembly conventions against each other and should sit at round-off.
    """
    red = np.asarray(k.reduced if isinstance(k, KPoint) else k, dtype=float)
    h_mod = fibered_hamiltonian(potential, basis, red)
    # independent classical assembly: build the shifted wavevectors first
    shifted = np.array([basis.lattice.kcart(red) + g for g in basis.g_cart])
    kinetic = np.array([0.5 * float(v @ v) for v in shifted])
    table = basis.index_table()
    n = basis.n_modes
    h_cl = np.zeros((n, n), dtype=complex)
    for (gi, i) in table.items():
        for (gj, j) in table.items():
            diff = tuple(a - b for a, b in zip(gi, gj))
            h_cl[i, j] = potential.value(diff)
    h_cl += np.diag(kinetic)
    spec_mod = np.sort(np.linalg.eigvalsh(h_mod))
    spec_cl = np.sort(np.linalg.eigvalsh(h_cl))
    return float(np.max(np.abs(spec_mod - spec_cl)))


@dataclass(frozen=True, eq=False)
class FiberSymmetries:
    tau: TauRep
    theta: TimeReversal
    reflection: SpaceReflection


def fiber_symmetry_ops(basis):
    """tau (mode shift), bosonic Theta (conjugate + negate), reflection (negate).

    In Fourier coefficients: (Theta phi)^(G) = conj(phi^(-G)) and
    (R phi)^(G) = phi^(-G); both use the same negation permutation, which is
    exact because the basis is closed under G -> -G. The compatibility
    relation Theta tau(lambda) = tau(lambda)^{-1} Theta holds exactly on the
    mutually retained modes.
    """
    perm = basis.negation_permutation
    n = basis.n_modes
    pmat = np.zeros((n, n))
    pmat[np.arange(n), perm] = 1.0
    tau = TauRep(kind="shift", fiber_dim=n, g_integers=basis.g_integers)
    theta = TimeReversal(pmat, +1)
    reflection = SpaceReflection(pmat)
    return FiberSymmetries(tau=tau, theta=theta, reflection=reflection)


def save_potential(lattice, potential, path):
    doc = {
        "dim": lattice.dim,
        "basis": lattice.basis.tolist(),
        "coefficients": [
            {"G": list(g), "re": float(np.real(v)), "im": float(np.imag(v))}
            for g, v in sorted(potential.coefficients.items())
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_potential(path):
    """Read a potential file; returns (Lattice, FourierPotential)."""
    with open(path) as fh:
        doc = json.load(fh)
    for key in ("dim", "basis", "coefficients"):
        if key not in doc:
            raise ValueError(f"potential file missing field {key!r}")
    lattice = Lattice.from_basis(doc["basis"])
    coeffs = {}
    for entry in doc["coefficients"]:
        g = tuple(int(x) for x in entry["G"])
        if len(g) != lattice.dim:
            raise ValueError(f"coefficient G {g} does not match dim {lattice.dim}")
        if g in coeffs:
            raise ValueError(f"duplicate coefficient for G {g}")
        coeffs[g] = float(entry["re"]) + 1j * float(entry["im"])
    return lattice, FourierPotential(coefficients=coeffs)
