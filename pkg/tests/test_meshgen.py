import numpy as np
import pytest

from whdg import meshgen
from whdg.meshgen import DIRICHLET, INTERIOR, NEUMANN


def test_smallest_1d_split():
    mesh = meshgen.build_uniform_cartesian(1, 2, (0.0, 1.0))
    assert mesh.n_cells == 2
    np.testing.assert_allclose(mesh.cell_lower[:, 0], [0.0, 0.5])
    np.testing.assert_allclose(mesh.cell_extent[:, 0], [0.5, 0.5])
    assert mesh.n_faces == 3
    assert (mesh.face_label == INTERIOR).sum() == 1


def test_2d_counts_and_diameter():
    mesh = meshgen.build_uniform_cartesian(2, 4, (0.0, 1.0))
    assert mesh.n_cells == 16
    assert mesh.n_faces == 40              # 2 * n * (n + 1)
    assert (mesh.face_label == INTERIOR).sum() == 24
    assert (mesh.face_label == DIRICHLET).sum() == 16
    diam = np.linalg.norm(mesh.cell_extent[0])
    assert diam == pytest.approx(np.sqrt(2.0) / 4.0, rel=1e-14)
    meshgen.check_mesh(mesh, domain_measure=1.0)


@pytest.mark.parametrize("d,n", [(1, 5), (2, 3), (2, 7)])
def test_measures_tile_domain(d, n):
    mesh = meshgen.build_uniform_cartesian(d, n, (-0.3, 1.7))
    total = mesh.cell_measure().sum()
    assert total == pytest.approx(2.0**d, rel=1e-12)


def test_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        meshgen.build_uniform_cartesian(2, 0, (0.0, 1.0))
    with pytest.raises(ValueError):
        meshgen.build_uniform_cartesian(1, 4, (1.0, 1.0))
    with pytest.raises(ValueError):
        meshgen.build_tensor_mesh([[0.0, 0.5, 0.4]])


def test_neighbor_orientation_consistency():
    mesh = meshgen.build_uniform_cartesian(2, 3, (0.0, 1.0))
    for f in np.nonzero(mesh.face_label == INTERIOR)[0]:
        minus, plus = mesh.face_cells[f]
        assert mesh.orientation(int(minus), int(f)) == -mesh.orientation(int(plus), int(f))


@pytest.mark.parametrize("level,cells", [(1, 18), (2, 36), (3, 72)])
def test_pin_grid_cell_counts(level, cells):
    mesh = meshgen.build_pin_grid(level, 6e-6)
    assert mesh.n_cells == cells
    assert mesh.n_cells == 2 * 2 ** (level - 1) + 4 * 2 ** (level + 1)


def test_pin_grid_level1_graded_breakpoints():
    # reference offsets (k/4)^2 on the unit segment next to each junction
    ref = meshgen.pin_reference_breakpoints(1)
    seg = ref[(ref >= 1.0) & (ref <= 2.0)] - 1.0
    np.testing.assert_allclose(np.sort(seg), [0.0, 1 - 9/16, 1 - 1/4, 1 - 1/16, 1.0])


def test_pin_grid_junction_faces():
    ell = 6e-6
    mesh = meshgen.build_pin_grid(2, ell)
    pos = mesh.face_center()[:, 0]
    for junction in (2.0 * (ell / 6.0), 4.0 * (ell / 6.0)):
        assert np.min(np.abs(pos - junction)) == 0.0


def test_pin_grids_nested():
    for level in (1, 2, 3):
        coarse = meshgen.pin_reference_breakpoints(level)
        fine = meshgen.pin_reference_breakpoints(level + 1)
        assert np.all(np.isin(coarse, fine))
    coarse = meshgen.pin_reference_breakpoints(4)
    fine = meshgen.bisect_breakpoints(coarse, 2)
    assert np.all(np.isin(coarse, fine))
    assert fine.shape[0] == 4 * (coarse.shape[0] - 1) + 1


def test_pin_grid_measure():
    ell = 6e-6
    mesh = meshgen.build_pin_grid(3, ell)
    meshgen.check_mesh(mesh)
    # the outer segments are built additively from ell/6, so compare to the
    # assembled endpoints rather than to ell itself
    span = mesh.cell_extent.sum()
    assert span == pytest.approx(ell, rel=1e-12)


def test_relabeling_and_csv_dump(tmp_path):
    mesh = meshgen.build_uniform_cartesian(2, 2, (0.0, 1.0))
    relabeled = mesh.with_labels(
        lambda center, axis, sign: NEUMANN if (axis == 0 and sign < 0) else DIRICHLET)
    assert (relabeled.face_label == NEUMANN).sum() == 2
    assert (mesh.face_label == NEUMANN).sum() == 0  # original untouched
    path = tmp_path / "mesh.csv"
    meshgen.mesh_to_csv(relabeled, path)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 1 + mesh.n_cells + mesh.n_faces
    assert lines[0].startswith("kind,id")


def test_face_ordering_deterministic():
    a = meshgen.build_uniform_cartesian(2, 4, (0.0, 1.0))
    b = meshgen.build_uniform_cartesian(2, 4, (0.0, 1.0))
    np.testing.assert_array_equal(a.face_lower, b.face_lower)
    centers = a.face_center()
    keys = list(zip(centers[:, 0], centers[:, 1], a.face_axis))
    assert keys == sorted(keys)
