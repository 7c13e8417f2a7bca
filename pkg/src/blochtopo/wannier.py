"""Composite Wannier functions and localization diagnostics.

A frame sampled on the full momentum grid is turned into a set of Wannier
functions on the matching supercell by the inverse (modified) Bloch-Floquet
transform. Localization is quantified three ways: polynomially weighted
moments, the second moment about the centroid (spread), and a log-linear fit
of the radial decay. Tight-binding sets live on integer cell offsets; plane
wave sets live on the real-space sample grid of the supercell.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .core import Lattice
from .floquet import SampledFunction, bf_inverse

__all__ = [
    "WannierSet",
    "LocalizationReport",
    "DecayFit",
    "wannier_from_frame",
    "wannier_from_plane_wave",
    "frame_from_wannier",
    "localization_moments",
    "decay_fit",
    "export_wannier_csv",
]


@dataclass(frozen=True, eq=False)
class WannierSet:
    """A set of Wannier functions on a centered supercell.

    Parameters
    ----------
    kind : str
        "tight_binding" (values indexed by cell offset and orbital) or
        "plane_wave" (values indexed by real-space sample).
    lattice : Lattice
        Bravais lattice used to convert offsets to Cartesian positions.
    sizes : tuple
        Supercell extent per axis (the momentum grid sizes).
    values : ndarray
        Shape (m, *sizes, n_orbitals) for tight binding, with the spatial
        axes running over centered offsets -N/2 .. N/2-1 in ascending order;
        shape (m, *sizes, *per_cell) for plane wave sets.
    positions : ndarray
        Cartesian position of every site (or sample), shape spatial + (d,).
    diagnostics : dict
        Construction residuals (per-function norm defects).
    """

    kind: str
    lattice: Lattice
    sizes: tuple
    values: np.ndarray
    positions: np.ndarray
    diagnostics: dict

    @property
    def n_functions(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return len(self.sizes)

    def site_weights(self):
        """|w_a|^2 per site: orbital axis summed out for tight binding."""
        w2 = np.abs(self.values) ** 2
        if self.kind == "tight_binding":
            return w2.sum(axis=-1)
        return w2

    def norms(self):
        return self.site_weights().reshape(self.n_functions, -1).sum(axis=1)

    def offsets(self):
        """Centered integer cell offsets, shape sizes + (d,)."""
        axes = [np.arange(-(n // 2), n - n // 2) for n in self.sizes]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def orthonormality_defect(self):
        """max |<w_a(.-R), w_b> - delta_ab delta_R0| over all a, b, R.

        Cyclic translations on the supercell; computed with FFTs, so the
        cost is m^2 N^d log N. For plane-wave sets only whole-cell
        translations are checked (per-cell sample axes are not shifted).
        """
        m = self.n_functions
        if self.kind == "tight_binding":
            flat = self.values.reshape((m,) + tuple(self.sizes) + (-1,))
            axes = tuple(range(1, 1 + len(self.sizes)))
            hat = np.fft.fftn(flat, axes=axes)
            corr = np.einsum("a...o,b...o->ab...", hat.conj(), hat)
        else:
            cells = tuple(self.sizes)
            flat = self.values.reshape((m,) + cells + (-1,))
            axes = tuple(range(1, 1 + len(cells)))
            hat = np.fft.fftn(flat, axes=axes)
            corr = np.einsum("a...j,b...j->ab...", hat.conj(), hat)
        overlaps = np.fft.ifftn(corr, axes=tuple(range(2, 2 + len(self.sizes))))
        target = np.zeros_like(overlaps)
        idx = (slice(None), slice(None)) + (0,) * len(self.sizes)
        target[idx] = np.eye(m)
        return float(np.max(np.abs(overlaps - target)))


def _centered_axis_integers(n):
    return np.arange(-(n // 2), n - n // 2)


def wannier_from_frame(grid, frames, supercell=None):
    """Wannier set of a tight-binding frame sampled on a full grid.

    w_a(R) = (1/N^d) sum_k exp(-i 2 pi k . R) phi_a(k), with R running over
    the centered supercell matching the grid.

    Parameters
    ----------
    grid : BrillouinGrid
        Full momentum grid; its sizes fix the supercell.
    frames : ndarray
        Orthonormal frames at grid.reduced, shape (npoints, n_orb, m).
    supercell : tuple, optional
        If given, must equal grid.sizes (a mismatch is an error).

    Returns
    -------
    WannierSet
    """
    sizes = tuple(grid.sizes)
    if supercell is not None and tuple(supercell) != sizes:
        raise ValueError(
            f"supercell {tuple(supercell)} does not match the frame grid {sizes}"
        )
    frames = np.asarray(frames, dtype=complex)
    if frames.shape[0] != grid.npoints:
        raise ValueError(
            f"frame count {frames.shape[0]} does not match the grid ({grid.npoints})"
        )
    n_orb, m = frames.shape[1], frames.shape[2]
    vals = frames.reshape(sizes + (n_orb, m))
    for axis, n in enumerate(sizes):
        ints = _centered_axis_integers(n)
        # rows R, columns k-index; both run over the same centered integers
        w = np.exp(-2j * np.pi * np.outer(ints, ints) / n) / n
        vals = np.moveaxis(np.tensordot(w, vals, axes=([1], [axis])), 0, axis)
    wann = np.moveaxis(vals, -1, 0)  # (m, *sizes, n_orb)

    offs = np.stack(
        np.meshgrid(*[_centered_axis_integers(n) for n in sizes], indexing="ij"),
        axis=-1,
    )
    positions = offs @ grid.lattice.basis.T
    norms = np.abs(wann).reshape(m, -1) ** 2
    defect = float(np.max(np.abs(norms.sum(axis=1) - 1.0)))
    return WannierSet(
        kind="tight_binding",
        lattice=grid.lattice,
        sizes=sizes,
        values=wann,
        positions=positions,
        diagnostics={"norm_defect": defect},
    )


def frame_from_wannier(wset, grid):
    """Forward transform back to frames; exact inverse of wannier_from_frame."""
    if wset.kind != "tight_binding":
        raise ValueError("frame reconstruction is defined for tight-binding sets")
    sizes = wset.sizes
    vals = np.moveaxis(wset.values, 0, -1)  # (*sizes, n_orb, m)
    for axis, n in enumerate(sizes):
        ints = _centered_axis_integers(n)
        w = np.exp(2j * np.pi * np.outer(ints, ints) / n)
        vals = np.moveaxis(np.tensordot(w, vals, axes=([1], [axis])), 0, axis)
    return vals.reshape(grid.npoints, vals.shape[-2], vals.shape[-1])


def wannier_from_plane_wave(family, grid, frames, per_cell=None):
    """Wannier set of a plane-wave frame, on real-space supercell samples.

    The frame coefficients are synthesized on a per-cell sample grid (fine
    enough to hold every retained mode without aliasing) and pushed through
    the inverse modified Bloch-Floquet transform; the result is recentered
    so cell offsets run over -N/2 .. N/2-1.
    """
    if family.tau.kind == "trivial":
        raise ValueError("use wannier_from_frame for tight-binding families")
    potential_basis = family.source[1]
    g = potential_basis.g_integers
    sizes = tuple(grid.sizes)
    d = len(sizes)
    if per_cell is None:
        per_cell = tuple(
            int(2 ** np.ceil(np.log2(2 * int(np.max(np.abs(g[:, ax]))) + 2)))
            for ax in range(d)
        )
    per_cell = tuple(int(p) for p in per_cell)
    samples = np.stack(
        np.meshgrid(*[np.arange(p) / p for p in per_cell], indexing="ij"), axis=-1
    ).reshape(-1, d)
    synth = np.exp(2j * np.pi * samples @ g.T)  # (n_samples, n_modes)

    frames = np.asarray(frames, dtype=complex)
    m = frames.shape[2]
    scale = np.sqrt(np.prod(per_cell)) * np.sqrt(np.prod(sizes))
    wann = np.empty((m,) + sizes + per_cell, dtype=complex)
    for a in range(m):
        u = np.einsum("sg,kg->ks", synth, frames[:, :, a])
        phi = SampledFunction(
            kind="bloch",
            cells=sizes,
            per_cell=per_cell,
            values=u.reshape(sizes + per_cell) / scale,
        )
        w = bf_inverse(phi).values
        wann[a] = np.roll(w, [n // 2 for n in sizes], axis=tuple(range(d)))

    cell_axes = [_centered_axis_integers(n).astype(float) for n in sizes]
    frac_axes = [np.arange(p) / p for p in per_cell]
    mesh_cells = np.meshgrid(*cell_axes, *frac_axes, indexing="ij")
    reduced = np.stack(
        [mesh_cells[ax] + mesh_cells[d + ax] for ax in range(d)], axis=-1
    )
    positions = reduced @ grid.lattice.basis.T
    norms = np.abs(wann).reshape(m, -1) ** 2
    defect = float(np.max(np.abs(norms.sum(axis=1) - 1.0)))
    return WannierSet(
        kind="plane_wave",
        lattice=grid.lattice,
        sizes=sizes,
        values=wann,
        positions=positions,
        diagnostics={"norm_defect": defect, "per_cell": per_cell},
    )


@dataclass(frozen=True, eq=False)
class LocalizationReport:
    """Weighted-moment and spread summary of a Wannier set.

    moments[r] is sum_x (1+|x|^2)^r |w(x)|^2 summed over the set; the
    per-function breakdown is kept alongside. spread is the second moment
    about each function's centroid, summed over the set.
    """

    moments: dict
    per_function_moments: dict
    spread: float
    per_function_spread: np.ndarray
    centroids: np.ndarray

    def to_json(self):
        return {
            "moments": {str(r): v for r, v in self.moments.items()},
            "per_function_moments": {
                str(r): list(map(float, v)) for r, v in self.per_function_moments.items()
            },
            "spread": self.spread,
            "per_function_spread": list(map(float, self.per_function_spread)),
            "centroids": [list(map(float, c)) for c in self.centroids],
        }


def localization_moments(wset, r_max=4):
    """Polynomially weighted localization moments of a Wannier set.

    Exact finite sums sum_x (1+|x|^2)^r |w_a(x)|^2 for r = 1..r_max, with x
    the Cartesian position of the cell offset (tight binding) or sample
    point (plane wave). r_max is capped at 4: the weights grow like
    |x|^(2r) and larger powers overflow the dynamic range on big supercells.
    """
    if r_max < 1 or r_max > 4:
        raise ValueError("r_max must be between 1 and 4")
    w2 = wset.site_weights()
    m = wset.n_functions
    flat_w2 = w2.reshape(m, -1)
    pos = wset.positions.reshape(-1, wset.positions.shape[-1])
    x2 = np.sum(pos**2, axis=1)

    per = {}
    totals = {}
    for r in range(1, r_max + 1):
        vals = flat_w2 @ (1.0 + x2) ** r
        per[r] = vals
        totals[r] = float(np.sum(vals))

    norms = flat_w2.sum(axis=1)
    centroids = (flat_w2 @ pos) / norms[:, None]
    spread_a = np.empty(m)
    for a in range(m):
        delta = pos - centroids[a]
        spread_a[a] = float(flat_w2[a] @ np.sum(delta**2, axis=1))
    return LocalizationReport(
        moments=totals,
        per_function_moments=per,
        spread=float(np.sum(spread_a)),
        per_function_spread=spread_a,
        centroids=centroids,
    )


@dataclass(frozen=True, eq=False)
class DecayFit:
    """Radial decay fit log(shell-max |w|) ~ -beta |x| + const."""

    beta: float
    r_squared: float
    exponential: bool
    boundary_contaminated: bool
    n_shells: int
    window: tuple

    def to_json(self):
        return {
            "beta": self.beta,
            "r_squared": self.r_squared,
            "exponential": self.exponential,
            "boundary_contaminated": self.boundary_contaminated,
            "n_shells": self.n_shells,
            "window": list(self.window),
        }


def decay_fit(wset):
    """Exponential-decay fit of a Wannier set.

    Sites are grouped into radial shells by Cartesian distance; the fit is
    least squares of log(shell max |w|) against the shell radius over the
    middle range [0.2, 0.8] * (N/2) (in units of the shortest lattice
    vector), which avoids both the core and wrap-around artifacts. Shell
    maxima are taken over all functions in the set. A boundary flag is
    raised when the supercell is too small for the tail to die out
    (max |w| on the boundary >= 1e-6 * global max).
    """
    amp = np.sqrt(wset.site_weights().max(axis=0)).ravel()
    pos = wset.positions.reshape(-1, wset.positions.shape[-1])
    radii = np.linalg.norm(pos, axis=1)

    if wset.kind == "tight_binding":
        offs = wset.offsets().reshape(-1, wset.dim)
        edge = np.zeros(len(offs), dtype=bool)
        for ax, n in enumerate(wset.sizes):
            edge |= (offs[:, ax] == -(n // 2)) | (offs[:, ax] == n - n // 2 - 1)
    else:
        spatial = wset.values.shape[1 : 1 + wset.dim]
        idx = np.stack(
            np.meshgrid(*[np.arange(n) for n in wset.values.shape[1:]], indexing="ij"),
            axis=-1,
        ).reshape(-1, wset.values.ndim - 1)
        edge = np.zeros(len(idx), dtype=bool)
        for ax, n in enumerate(spatial):
            edge |= (idx[:, ax] == 0) | (idx[:, ax] == n - 1)
    peak = float(np.max(amp))
    contaminated = bool(np.max(amp[edge]) >= 1e-6 * peak)

    scale = float(np.min(np.linalg.norm(wset.lattice.basis, axis=0)))
    half = min(wset.sizes) / 2.0
    lo, hi = 0.2 * half * scale, 0.8 * half * scale
    if wset.kind == "plane_wave":
        # one-cell-wide shells; finer bins would resolve the periodic
        # intra-cell modulation of |w| and ruin the log-linear fit
        keys = np.round(radii / scale) * scale
    else:
        keys = np.round(radii, 9)
    order = np.argsort(keys)
    uniq, starts = np.unique(keys[order], return_index=True)
    shell_max = np.maximum.reduceat(amp[order], starts)
    sel = (uniq >= lo) & (uniq <= hi) & (shell_max > 0)
    r_sel, a_sel = uniq[sel], np.log(shell_max[sel])
    if len(r_sel) < 3:
        return DecayFit(0.0, 0.0, False, contaminated, int(len(r_sel)), (lo, hi))
    slope, intercept = np.polyfit(r_sel, a_sel, 1)
    fitted = slope * r_sel + intercept
    ss_res = float(np.sum((a_sel - fitted) ** 2))
    ss_tot = float(np.sum((a_sel - np.mean(a_sel)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    beta = float(-slope)
    return DecayFit(
        beta=beta,
        r_squared=float(r2),
        exponential=bool(beta > 0 and r2 > 0.99 and not contaminated),
        boundary_contaminated=contaminated,
        n_shells=int(len(r_sel)),
        window=(lo, hi),
    )


def export_wannier_csv(wset, path):
    """Write the set to CSV: function, position columns, orbital, re, im."""
    d = wset.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if wset.kind == "tight_binding":
            writer.writerow(
                ["function"] + [f"r{ax + 1}" for ax in range(d)] + ["orbital", "re", "im"]
            )
            offs = wset.offsets().reshape(-1, d)
            n_orb = wset.values.shape[-1]
            flat = wset.values.reshape(wset.n_functions, -1, n_orb)
            for a in range(wset.n_functions):
                for site in range(flat.shape[1]):
                    for orb in range(n_orb):
                        v = flat[a, site, orb]
                        writer.writerow(
                            [a]
                            + [int(c) for c in offs[site]]
                            + [orb, f"{v.real:.12e}", f"{v.imag:.12e}"]
                        )
        else:
            writer.writerow(
                ["function"] + [f"x{ax + 1}" for ax in range(d)] + ["re", "im"]
            )
            pos = wset.positions.reshape(-1, d)
            flat = wset.values.reshape(wset.n_functions, -1)
            for a in range(wset.n_functions):
                for site in range(flat.shape[1]):
                    v = flat[a, site]
                    writer.writerow(
                        [a]
                        + [f"{c:.9f}" for c in pos[site]]
                        + [f"{v.real:.12e}", f"{v.imag:.12e}"]
                    )
