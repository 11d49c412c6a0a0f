"""Interval grids and axis-aligned quadrilateral meshes.

Cells are axis-aligned boxes described by a lower corner and per-axis
extents.  Faces know their normal axis, the two adjacent cells (minus side
first: the cell whose outward normal is +e_axis), and a boundary label.
Faces are numbered lexicographically by center coordinate so that every
assembled matrix is reproducible across runs.

The p-i-n benchmark grids are graded toward the two junction points; their
breakpoints are exact dyadic rationals scaled by the device length, which
makes grids of consecutive refinement levels exactly nested.
"""

from dataclasses import dataclass, replace

import numpy as np

INTERIOR = 0
DIRICHLET = 1
NEUMANN = 2

_LABEL_NAMES = {INTERIOR: "interior", DIRICHLET: "dirichlet", NEUMANN: "neumann"}


@dataclass(frozen=True)
class Mesh:
    """Axis-aligned mesh in 1 or 2 dimensions.

    ``face_cells[f] = (minus, plus)`` where ``minus`` is the cell for which
    the face's +axis normal is outward; missing neighbors are -1.
    ``cell_faces[c, 2*a]`` / ``cell_faces[c, 2*a + 1]`` are the low/high
    faces of cell ``c`` along axis ``a``.
    """

    dim: int
    cell_lower: np.ndarray
    cell_extent: np.ndarray
    face_axis: np.ndarray
    face_lower: np.ndarray
    face_extent: np.ndarray
    face_cells: np.ndarray
    face_label: np.ndarray
    cell_faces: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.cell_lower.shape[0]

    @property
    def n_faces(self) -> int:
        return self.face_axis.shape[0]

    def cell_center(self):
        return self.cell_lower + 0.5 * self.cell_extent

    def cell_measure(self):
        return np.prod(self.cell_extent, axis=1)

    def face_center(self):
        return self.face_lower + 0.5 * self.face_extent

    def face_measure(self):
        """(d-1)-measure of each face; 1 for point faces in 1d."""
        if self.dim == 1:
            return np.ones(self.n_faces)
        ext = self.face_extent.copy()
        ext[np.arange(self.n_faces), self.face_axis] = 1.0
        return np.prod(ext, axis=1)

    def orientation(self, cell: int, face: int) -> float:
        """+1 if the face's +axis normal points out of ``cell``, else -1."""
        return 1.0 if self.face_cells[face, 0] == cell else -1.0

    def boundary_faces(self):
        return np.nonzero(self.face_label != INTERIOR)[0]

    def with_labels(self, labeler) -> "Mesh":
        """New mesh whose boundary labels are ``labeler(center, axis, normal_sign)``.

        ``normal_sign`` is the outward direction (+1/-1 along the face axis).
        Interior faces are untouched.
        """
        labels = self.face_label.copy()
        centers = self.face_center()
        for f in self.boundary_faces():
            sign = -1.0 if self.face_cells[f, 0] < 0 else 1.0
            labels[f] = labeler(centers[f], int(self.face_axis[f]), sign)
        return replace(self, face_label=labels)


def _faces_from_tensor(breaks, cell_index):
    """Build face arrays for a tensor grid; returns unsorted face lists."""
    d = len(breaks)
    ns = [len(b) - 1 for b in breaks]
    axis_l, lower_l, extent_l, cells_l = [], [], [], []
    for axis in range(d):
        other = 1 - axis if d == 2 else None
        for i in range(ns[axis] + 1):
            pos = breaks[axis][i]
            if d == 1:
                minus = cell_index((i - 1,)) if i > 0 else -1
                plus = cell_index((i,)) if i < ns[0] else -1
                axis_l.append(axis)
                lower_l.append([pos])
                extent_l.append([0.0])
                cells_l.append([minus, plus])
            else:
                for j in range(ns[other]):
                    lo = np.zeros(2)
                    ext = np.zeros(2)
                    lo[axis] = pos
                    lo[other] = breaks[other][j]
                    ext[other] = breaks[other][j + 1] - breaks[other][j]
                    if axis == 0:
                        minus = cell_index((i - 1, j)) if i > 0 else -1
                        plus = cell_index((i, j)) if i < ns[0] else -1
                    else:
                        minus = cell_index((j, i - 1)) if i > 0 else -1
                        plus = cell_index((j, i)) if i < ns[1] else -1
                    axis_l.append(axis)
                    lower_l.append(lo)
                    extent_l.append(ext)
                    cells_l.append([minus, plus])
    return (
        np.asarray(axis_l, dtype=np.int64),
        np.asarray(lower_l, dtype=np.float64),
        np.asarray(extent_l, dtype=np.float64),
        np.asarray(cells_l, dtype=np.int64),
    )


def build_tensor_mesh(breaks) -> Mesh:
    """Mesh from per-axis breakpoint arrays (1 or 2 of them).

    All boundary faces start out labeled Dirichlet; use
    :meth:`Mesh.with_labels` to mark Neumann parts.
    """
    breaks = [np.asarray(b, dtype=np.float64) for b in breaks]
    d = len(breaks)
    if d not in (1, 2):
        raise ValueError(f"only 1d and 2d meshes are supported, got {d} axes")
    for b in breaks:
        if len(b) < 2 or np.any(np.diff(b) <= 0):
            raise ValueError("breakpoints must be strictly increasing with >= 2 entries")

    ns = [len(b) - 1 for b in breaks]

    def cell_index(idx):
        if d == 1:
            return idx[0]
        return idx[0] * ns[1] + idx[1]

    if d == 1:
        lower = breaks[0][:-1, None]
        extent = np.diff(breaks[0])[:, None]
    else:
        lx = np.repeat(breaks[0][:-1], ns[1])
        ly = np.tile(breaks[1][:-1], ns[0])
        ex = np.repeat(np.diff(breaks[0]), ns[1])
        ey = np.tile(np.diff(breaks[1]), ns[0])
        lower = np.column_stack([lx, ly])
        extent = np.column_stack([ex, ey])

    axis, flower, fextent, fcells = _faces_from_tensor(breaks, cell_index)

    centers = flower + 0.5 * fextent
    keys = [axis] + [centers[:, a] for a in range(d - 1, -1, -1)]
    order = np.lexsort(tuple(keys))
    axis, flower, fextent, fcells = axis[order], flower[order], fextent[order], fcells[order]

    label = np.where(np.any(fcells < 0, axis=1), DIRICHLET, INTERIOR).astype(np.int64)

    n_cells = lower.shape[0]
    cell_faces = -np.ones((n_cells, 2 * d), dtype=np.int64)
    for f in range(axis.shape[0]):
        a = axis[f]
        minus, plus = fcells[f]
        if plus >= 0:
            cell_faces[plus, 2 * a] = f  # low side of the plus cell
        if minus >= 0:
            cell_faces[minus, 2 * a + 1] = f
    if np.any(cell_faces < 0):
        raise AssertionError("incomplete cell-face incidence")

    return Mesh(
        dim=d,
        cell_lower=lower,
        cell_extent=extent,
        face_axis=axis,
        face_lower=flower,
        face_extent=fextent,
        face_cells=fcells,
        face_label=label,
        cell_faces=cell_faces,
    )


def build_uniform_cartesian(d: int, n: int, box) -> Mesh:
    """Uniform grid of ``n`` cells per axis over ``box``.

    ``box`` is ``(lo, hi)`` in 1d or ``((lo_x, hi_x), (lo_y, hi_y))`` in 2d;
    a single ``(lo, hi)`` pair is reused for every axis.
    """
    if n < 1:
        raise ValueError("need at least one cell per axis")
    box = np.asarray(box, dtype=np.float64)
    if box.ndim == 1:
        box = np.tile(box, (d, 1))
    if box.shape != (d, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("degenerate or malformed domain box")
    breaks = [box[a, 0] + (box[a, 1] - box[a, 0]) * np.arange(n + 1) / n for a in range(d)]
    return build_tensor_mesh(breaks)


def pin_reference_breakpoints(level: int) -> np.ndarray:
    """Breakpoints of the graded p-i-n grid on the reference domain (0, 6).

    Segments (0,1) and (5,6) are uniform with 2**(level-1) cells; each of
    the four unit segments touching a junction (at 2 and 4) holds
    2**(level+1) cells graded quadratically toward the junction, with
    reference offsets (k / 2**(level+1))**2.  All values are exact dyadic
    rationals, so consecutive levels are exactly nested.
    """
    if level < 1:
        raise ValueError("level must be >= 1")
    n_uni = 2 ** (level - 1)
    uni = np.arange(n_uni + 1) * (1.0 / n_uni)
    n_grad = 2 ** (level + 1)
    r = (np.arange(n_grad + 1) * (1.0 / n_grad)) ** 2
    segs = [
        uni,          # (0, 1)
        2.0 - r,      # graded toward 2 from the left
        2.0 + r,      # graded away from 2 to the right
        4.0 - r,
        4.0 + r,
        6.0 - uni,
    ]
    pts = np.unique(np.concatenate(segs))
    return pts


def build_pin_grid(level: int, ell: float) -> Mesh:
    """Graded 1d grid for a p-i-n device of length ``ell``."""
    if level < 1 or ell <= 0:
        raise ValueError("level must be >= 1 and ell > 0")
    return build_tensor_mesh([pin_reference_breakpoints(level) * (ell / 6.0)])


def bisect_breakpoints(breaks: np.ndarray, times: int = 1) -> np.ndarray:
    """Global refinement of a 1d breakpoint array by repeated bisection."""
    b = np.asarray(breaks, dtype=np.float64)
    for _ in range(times):
        mid = 0.5 * (b[:-1] + b[1:])
        b = np.sort(np.concatenate([b, mid]))
    return b


def mesh_to_csv(mesh: Mesh, path) -> None:
    """Dump cells and faces; one row per entity."""
    with open(path, "w") as fh:
        fh.write("kind,id,axis,label,cell_minus,cell_plus," +
                 ",".join(f"lower{a}" for a in range(mesh.dim)) + "," +
                 ",".join(f"extent{a}" for a in range(mesh.dim)) + "\n")
        for c in range(mesh.n_cells):
            lo = ",".join(f"{v:.16g}" for v in mesh.cell_lower[c])
            ex = ",".join(f"{v:.16g}" for v in mesh.cell_extent[c])
            fh.write(f"cell,{c},,,,,{lo},{ex}\n")
        for f in range(mesh.n_faces):
            lo = ",".join(f"{v:.16g}" for v in mesh.face_lower[f])
            ex = ",".join(f"{v:.16g}" for v in mesh.face_extent[f])
            fh.write(
                f"face,{f},{mesh.face_axis[f]},{_LABEL_NAMES[int(mesh.face_label[f])]},"
                f"{mesh.face_cells[f, 0]},{mesh.face_cells[f, 1]},{lo},{ex}\n"
            )


def check_mesh(mesh: Mesh, domain_measure: float | None = None) -> None:
    """Validate adjacency, orientation and tiling invariants; raises on failure."""
    measures = mesh.cell_measure()
    if np.any(measures <= 0):
        raise AssertionError("nonpositive cell measure")
    for f in range(mesh.n_faces):
        adjacent = mesh.face_cells[f] >= 0
        if mesh.face_label[f] == INTERIOR and adjacent.sum() != 2:
            raise AssertionError(f"interior face {f} must have two neighbors")
        if mesh.face_label[f] != INTERIOR and adjacent.sum() != 1:
            raise AssertionError(f"boundary face {f} must have one neighbor")
    for c in range(mesh.n_cells):
        for a in range(mesh.dim):
            lowf = mesh.cell_faces[c, 2 * a]
            highf = mesh.cell_faces[c, 2 * a + 1]
            if mesh.face_cells[lowf, 1] != c or mesh.face_cells[highf, 0] != c:
                raise AssertionError(f"cell {c} face orientation broken on axis {a}")
    if domain_measure is not None:
        total = measures.sum()
        if abs(total - domain_measure) > 1e-12 * abs(domain_measure):
            raise AssertionError("cells do not tile the domain")
