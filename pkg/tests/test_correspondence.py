import numpy as np
import pytest

from face6d import (
    CorrespondenceMatrix,
    PixelSet,
    RigidPose,
    TriangleMesh,
    barycentric_coordinates,
    build_gt_correspondence,
    corresponding_points,
    load_correspondence,
    positional_encoding_2d,
    project_perspective,
    rasterize_segmentation,
    sample_pixels,
    save_correspondence,
)
from face6d.errors import (
    DegenerateTriangle,
    DimensionMismatch,
    EmptyMask,
    InvalidDimension,
    InvariantViolation,
    ParseError,
    PixelOutsideFace,
)
from face6d.synth import PoseRanges, sample_pose


def brute_force_barycentric(p, a, b, c):
    """2x2 linear-system oracle."""
    mat = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
    wb, wc = np.linalg.solve(mat, np.asarray(p, float) - np.asarray(a, float))
    return 1.0 - wb - wc, wb, wc


class TestBarycentric:
    def test_centroid(self):
        a, b, c = (0.0, 0.0), (3.0, 0.0), (0.0, 3.0)
        w = barycentric_coordinates((1.0, 1.0), a, b, c)
        assert np.allclose(w, [1 / 3, 1 / 3, 1 / 3])

    def test_vertex_is_one_hot(self):
        w = barycentric_coordinates((0, 0), (0, 0), (2, 0), (0, 2))
        assert w == (1.0, 0.0, 0.0)

    def test_edge_midpoint_by_linear_system(self):
        w = barycentric_coordinates((1, 0), (0, 0), (2, 0), (0, 2))
        assert np.allclose(w, [0.5, 0.5, 0.0])

    def test_weights_sum_exactly_to_one(self, rng):
        for _ in range(200):
            a, b, c, p = rng.normal(size=(4, 2)) * 50
            try:
                wa, wb, wc = barycentric_coordinates(p, a, b, c)
            except DegenerateTriangle:
                continue
            assert wa == 1.0 - wb - wc  # exact by construction
            recon = wa * a + wb * b + wc * c
            assert np.max(np.abs(recon - p)) < 1e-9

    def test_matches_brute_force_solve(self, rng):
        for _ in range(1000):
            a, b, c, p = rng.normal(size=(4, 2)) * 100
            try:
                got = barycentric_coordinates(p, a, b, c)
            except DegenerateTriangle:
                continue
            want = brute_force_barycentric(p, a, b, c)
            assert np.max(np.abs(np.array(got) - np.array(want))) < 1e-9

    def test_affine_invariance(self, rng):
        for _ in range(100):
            a, b, c = (0.0, 0.0), (4.0, 1.0), (1.0, 3.0)
            p = rng.uniform(0, 2, size=2)
            m = rng.normal(size=(2, 2))
            if abs(np.linalg.det(m)) < 0.1:
                continue
            shift = rng.normal(size=2) * 10
            w0 = barycentric_coordinates(p, a, b, c)
            w1 = barycentric_coordinates(
                m @ p + shift, m @ a + shift, m @ b + shift, m @ c + shift
            )
            assert np.max(np.abs(np.array(w0) - np.array(w1))) < 1e-9

    def test_degenerate_triangle(self):
        with pytest.raises(DegenerateTriangle):
            barycentric_coordinates((0, 0), (0, 0), (1, 1), (2, 2))

    def test_inside_iff_all_weights_nonnegative(self):
        a, b, c = (0.0, 0.0), (2.0, 0.0), (0.0, 2.0)
        inside = barycentric_coordinates((0.5, 0.5), a, b, c)
        outside = barycentric_coordinates((2.0, 2.0), a, b, c)
        assert min(inside) >= -1e-9
        assert min(outside) < -1e-9


@pytest.fixture(scope="module")
def scene(face_mesh, default_intr):
    pose = sample_pose(PoseRanges(), [21, 0])
    mask = rasterize_segmentation(face_mesh, pose, default_intr, 720, 1280)
    pixels = sample_pixels(mask, 1024, 99)
    return pose, mask, pixels


class TestGtCorrespondence:
    def test_row_count_and_sparsity_at_paper_scale(self, face_mesh, default_intr, scene):
        pose, _, pixels = scene
        corr = build_gt_correspondence(face_mesh, pose, default_intr, pixels)
        assert corr.m == 1024
        assert corr.n == face_mesh.n_vertices
        assert corr.max_row_entries() <= 3
        sums = np.add.reduceat(corr.weights, corr.indptr[:-1])
        assert np.max(np.abs(sums - 1.0)) <= 1e-6

    def test_pixel_at_projected_vertex_is_one_hot(self, face_mesh, default_intr, scene):
        pose, _, _ = scene
        projected, depths = project_perspective(face_mesh.vertices, pose, default_intr)
        vid = int(np.argmin(depths))  # nearest vertex is never occluded
        corr = build_gt_correspondence(
            face_mesh, pose, default_intr,
            PixelSet(np.tile(projected[vid], (4, 1))),
        )
        idx, w = corr.row(0)
        assert vid in idx
        assert np.isclose(w[list(idx).index(vid)], 1.0)

    def test_centroid_of_equal_depth_triangle(self, toy_intr):
        # one isolated triangle at constant depth: projected centroid gets 1/3 each
        verts = np.array([[-0.1, -0.1, 0.0], [0.1, -0.1, 0.0], [0.0, 0.15, 0.0]])
        mesh = TriangleMesh(verts, [[0, 1, 2]], np.full((3, 2), 0.25) + np.eye(3, 2) * 0.3)
        pose = RigidPose(np.eye(3), [0, 0, 0.5])
        projected, _ = project_perspective(verts, pose, toy_intr)
        centroid = projected.mean(axis=0)
        corr = build_gt_correspondence(
            mesh, pose, toy_intr, PixelSet(np.tile(centroid, (4, 1)))
        )
        _, w = corr.row(0)
        assert np.allclose(w, [1 / 3, 1 / 3, 1 / 3], atol=1e-9)

    def test_rows_match_brute_force_over_all_triangles(
        self, face_mesh, default_intr, scene
    ):
        pose, _, pixels = scene
        corr = build_gt_correspondence(face_mesh, pose, default_intr, pixels)
        projected, depths = project_perspective(face_mesh.vertices, pose, default_intr)
        for i in rng_indices(len(pixels), 25):
            p = pixels.coords[i]
            best = None
            for tri in face_mesh.triangles:
                a, b, c = projected[tri]
                mat = np.array(
                    [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]]
                )
                if abs(np.linalg.det(mat)) / 2 <= 1e-12:
                    continue
                wb, wc = np.linalg.solve(mat, p - a)
                wa = 1.0 - wb - wc
                if min(wa, wb, wc) < -1e-9:
                    continue
                z = wa * depths[tri[0]] + wb * depths[tri[1]] + wc * depths[tri[2]]
                if best is None or z < best[0]:
                    best = (z, tri, (wa, wb, wc))
            assert best is not None
            idx, w = corr.row(i)
            dense = np.zeros(face_mesh.n_vertices)
            dense[idx] = w
            want = np.zeros(face_mesh.n_vertices)
            ww = np.clip(best[2], 0, 1)
            want[best[1]] = ww / ww.sum()
            assert np.max(np.abs(dense - want)) < 1e-9

    def test_screen_space_reprojection_within_2px(self, face_mesh, default_intr):
        for trial in range(5):
            pose = sample_pose(PoseRanges(), [31, trial])
            mask = rasterize_segmentation(face_mesh, pose, default_intr, 720, 1280)
            pixels = sample_pixels(mask, 256, trial)
            corr = build_gt_correspondence(face_mesh, pose, default_intr, pixels)
            pts = corresponding_points(corr, face_mesh)
            proj, _ = project_perspective(pts, pose, default_intr)
            err = np.linalg.norm(proj - pixels.coords, axis=1)
            assert np.max(err) < 2.0

    def test_perspective_correct_reprojection_is_exact(self, face_mesh, default_intr, scene):
        pose, _, pixels = scene
        corr = build_gt_correspondence(
            face_mesh, pose, default_intr, pixels, perspective_correct=True
        )
        pts = corresponding_points(corr, face_mesh)
        proj, _ = project_perspective(pts, pose, default_intr)
        assert np.max(np.linalg.norm(proj - pixels.coords, axis=1)) < 1e-9

    def test_pixel_outside_face_raises(self, face_mesh, default_intr, scene):
        pose, _, _ = scene
        with pytest.raises(PixelOutsideFace) as err:
            build_gt_correspondence(
                face_mesh, pose, default_intr,
                PixelSet(np.array([[1.0, 1.0]] * 4)),
            )
        assert err.value.index == 0


def rng_indices(n, k):
    return np.random.default_rng(8).choice(n, size=k, replace=False)


class TestCorrespondingPoints:
    def test_one_hot_rows_select_vertices(self, face_mesh):
        ids = np.array([3, 77, 400, 1219])
        corr = CorrespondenceMatrix.from_rows(
            [(np.array([i]), np.array([1.0])) for i in ids], face_mesh.n_vertices
        )
        pts = corresponding_points(corr, face_mesh)
        assert np.array_equal(pts, face_mesh.vertices[ids])

    def test_uniform_row_over_identical_vertices(self):
        verts = np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])
        mesh = TriangleMesh(verts, [[0, 1, 2]], np.zeros((3, 2)) + [[0.1, 0.1], [0.5, 0.1], [0.1, 0.5]])
        corr = CorrespondenceMatrix.from_rows(
            [(np.array([0, 1]), np.array([0.5, 0.5]))] * 4, 3
        )
        pts = corresponding_points(corr, mesh)
        assert np.allclose(pts[0], [1.0, 2.0, 3.0])

    def test_matches_dense_multiply_oracle(self, face_mesh, rng):
        rows = []
        for _ in range(64):
            k = rng.integers(1, 4)
            idx = rng.choice(face_mesh.n_vertices, size=k, replace=False)
            w = rng.dirichlet(np.ones(k))
            rows.append((idx, w))
        corr = CorrespondenceMatrix.from_rows(rows, face_mesh.n_vertices)
        got = corresponding_points(corr, face_mesh)
        want = corr.to_dense() @ face_mesh.vertices
        assert np.max(np.abs(got - want)) < 1e-12

    def test_dimension_mismatch(self, face_mesh):
        corr = CorrespondenceMatrix.from_rows(
            [(np.array([0]), np.array([1.0]))] * 4, 10
        )
        with pytest.raises(DimensionMismatch):
            corresponding_points(corr, face_mesh)


class TestSamplePixels:
    def test_single_pixel_mask_repeats(self):
        mask = np.zeros((8, 8), dtype=np.uint8)
        mask[3, 5] = 1
        pixels = sample_pixels(mask, 1024, 0)
        assert len(pixels) == 1024
        assert np.all(pixels.coords == [5.0, 3.0])

    def test_deterministic_per_seed(self):
        mask = np.ones((32, 32), dtype=np.uint8)
        a = sample_pixels(mask, 64, 7)
        b = sample_pixels(mask, 64, 7)
        c = sample_pixels(mask, 64, 8)
        assert np.array_equal(a.coords, b.coords)
        assert not np.array_equal(a.coords, c.coords)

    def test_without_replacement_when_enough(self):
        mask = np.ones((32, 32), dtype=np.uint8)
        pixels = sample_pixels(mask, 1000, 3)
        assert len(np.unique(pixels.coords, axis=0)) == 1000

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            sample_pixels(np.zeros((4, 4), dtype=np.uint8), 8, 0)

    def test_pixels_are_set_in_mask(self, face_mesh, default_intr):
        pose = sample_pose(PoseRanges(), [77, 0])
        mask = rasterize_segmentation(face_mesh, pose, default_intr, 720, 1280)
        pixels = sample_pixels(mask, 512, 5)
        xy = pixels.coords.astype(int)
        assert np.all(mask[xy[:, 1], xy[:, 0]] == 1)


class TestPositionalEncoding:
    def test_zero_pixel(self):
        out = positional_encoding_2d(PixelSet(np.zeros((4, 2))), 4)
        assert np.allclose(out, [[0, 1, 0, 1]] * 4)

    def test_unit_x_pixel(self):
        pix = PixelSet(np.array([[1.0, 0.0]] * 4))
        out = positional_encoding_2d(pix, 4)
        assert np.allclose(out[0], [np.sin(1.0), np.cos(1.0), 0.0, 1.0])

    def test_outputs_bounded(self, rng):
        pix = PixelSet(rng.uniform(0, 192, size=(128, 2)))
        out = positional_encoding_2d(pix, 32)
        assert np.all(out >= -1.0) and np.all(out <= 1.0)

    def test_distinct_pixels_distinct_rows_at_d16(self):
        xs, ys = np.meshgrid(np.arange(192), np.arange(192))
        pix = PixelSet(np.stack([xs.ravel(), ys.ravel()], axis=1).astype(float))
        out = positional_encoding_2d(pix, 16)
        assert len(np.unique(out, axis=0)) == len(out)

    def test_invalid_dimension(self):
        pix = PixelSet(np.zeros((4, 2)))
        with pytest.raises(InvalidDimension):
            positional_encoding_2d(pix, 6)


class TestSegmentation:
    def test_empty_mesh_gives_empty_mask(self, default_intr):
        mesh = TriangleMesh(
            np.array([[0.0, 0.0, 0.0]]), np.empty((0, 3), dtype=np.int64),
            np.array([[0.5, 0.5]]),
        )
        mask = rasterize_segmentation(
            mesh, RigidPose(np.eye(3), [0, 0, 0.5]), default_intr, 16, 16
        )
        assert mask.sum() == 0

    def test_covering_triangle_fills_frame(self, toy_intr):
        verts = np.array([[-5.0, -5.0, 0.0], [5.0, -5.0, 0.0], [0.0, 10.0, 0.0]])
        mesh = TriangleMesh(verts, [[0, 1, 2]], np.array([[0.1, 0.1], [0.9, 0.1], [0.5, 0.9]]))
        mask = rasterize_segmentation(
            mesh, RigidPose(np.eye(3), [0, 0, 1.0]), toy_intr, 192, 192
        )
        assert mask.all()

    def test_matches_brute_force_containment(self, toy_intr, rng):
        verts = rng.uniform(-0.1, 0.1, size=(9, 3))
        uvs = rng.uniform(0.05, 0.95, size=(9, 2))
        tris = np.array([[0, 1, 2], [3, 4, 5], [6, 7, 8]])
        mesh = TriangleMesh(verts, tris, uvs)
        pose = RigidPose(np.eye(3), [0, 0, 0.6])
        mask = rasterize_segmentation(mesh, pose, toy_intr, 192, 192)
        projected, _ = project_perspective(verts, pose, toy_intr)
        want = np.zeros((192, 192), dtype=np.uint8)
        for y in range(192):
            for x in range(192):
                for tri in tris:
                    a, b, c = projected[tri]
                    mat = np.array(
                        [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]]
                    )
                    if abs(np.linalg.det(mat)) / 2 <= 1e-12:
                        continue
                    wb, wc = np.linalg.solve(mat, np.array([x, y], float) - a)
                    if min(1.0 - wb - wc, wb, wc) >= -1e-9:
                        want[y, x] = 1
                        break
        assert np.array_equal(mask, want)


class TestSerialization:
    @staticmethod
    def _build_corr(face_mesh, default_intr):
        pose = sample_pose(PoseRanges(), [5, 5])
        mask = rasterize_segmentation(face_mesh, pose, default_intr, 720, 1280)
        pixels = sample_pixels(mask, 128, 6)
        return build_gt_correspondence(face_mesh, pose, default_intr, pixels)

    def test_save_load(self, tmp_path, face_mesh, default_intr):
        corr = self._build_corr(face_mesh, default_intr)
        path = tmp_path / "corr.txt"
        save_correspondence(corr, path)
        back = load_correspondence(path)
        assert back.m == corr.m and back.n == corr.n
        assert np.array_equal(back.indptr, corr.indptr)
        assert np.array_equal(back.indices, corr.indices)
        assert np.max(np.abs(back.weights - corr.weights)) < 1e-8

    def test_header_required(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("NOPE 1 2\n")
        with pytest.raises(ParseError):
            load_correspondence(path)

    def test_row_count_mismatch(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("CORR 2 5\n0 1 0:1.0\n")
        with pytest.raises(ParseError):
            load_correspondence(path)

    def test_matrix_invariants(self):
        with pytest.raises(InvariantViolation):
            CorrespondenceMatrix.from_rows(
                [(np.array([0]), np.array([0.5]))], 4
            )  # row does not sum to 1
        with pytest.raises(InvariantViolation):
            CorrespondenceMatrix.from_rows(
                [(np.array([9]), np.array([1.0]))], 4
            )  # index out of range
