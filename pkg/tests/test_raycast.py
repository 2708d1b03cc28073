import numpy as np
import pytest

from xray3d.camera import Ray
from xray3d.fixtures import cube, icosphere
from xray3d.mesh import MeshError, TriangleMesh
from xray3d.raycast import (
    EPS_DUP,
    EPS_MIN,
    MAX_HITS,
    build_bvh,
    cast_ray_all_hits,
    cast_rays,
    surface_attributes,
)


def brute_force_hits(mesh, origin, direction):
    """Independent all-triangle oracle with the same accept/merge rules."""
    hits = []
    v = mesh.vertices
    for fi, (i0, i1, i2) in enumerate(mesh.faces):
        v0, v1, v2 = v[i0], v[i1], v[i2]
        e1, e2 = v1 - v0, v2 - v0
        pvec = np.cross(direction, e2)
        det = float(e1 @ pvec)
        if abs(det) <= 1e-12:
            continue
        s = origin - v0
        u = float(s @ pvec) / det
        qvec = np.cross(s, e1)
        w = float(direction @ qvec) / det
        t = float(e2 @ qvec) / det
        if u >= 0.0 and w >= 0.0 and u + w <= 1.0 and t > EPS_MIN:
            hits.append((t, fi))
    hits.sort()
    merged = []
    for t, fi in hits:
        if merged and t - merged[-1][0] < EPS_DUP:
            continue
        merged.append((t, fi))
    return merged[:MAX_HITS]


def _z_ray():
    return Ray(np.array([0.0, 0.0, 1.2]), np.array([0.0, 0.0, -1.0]))


def test_cube_central_ray_two_hits(cube_mesh):
    accel = build_bvh(cube_mesh)
    hits = cast_ray_all_hits(accel, cube_mesh, _z_ray())
    assert len(hits) == 2
    assert hits[0].depth == pytest.approx(0.7, abs=1e-12)
    assert hits[1].depth == pytest.approx(1.7, abs=1e-12)


def test_miss_returns_empty(cube_mesh):
    accel = build_bvh(cube_mesh)
    ray = Ray(np.array([5.0, 5.0, 5.0]), np.array([0.0, 0.0, -1.0]))
    assert cast_ray_all_hits(accel, cube_mesh, ray) == []


def test_stacked_cubes_four_increasing_hits():
    lower = cube()
    upper = cube(center=(0.0, 0.0, -1.5))  # gap of 0.5 between z=-0.5 and z=-1.0
    mesh = TriangleMesh(
        np.vstack([lower.vertices, upper.vertices]),
        np.vstack([lower.faces, upper.faces + lower.n_vertices]),
    )
    accel = build_bvh(mesh)
    hits = cast_ray_all_hits(accel, mesh, _z_ray())
    depths = [h.depth for h in hits]
    np.testing.assert_allclose(depths, [0.7, 1.7, 2.2, 3.2], atol=1e-12)
    assert all(b > a for a, b in zip(depths, depths[1:]))


def test_single_triangle_hit_and_miss():
    mesh = TriangleMesh([[-1, -1, 0], [1, -1, 0], [0, 1, 0]], [[0, 1, 2]])
    accel = build_bvh(mesh)
    hit = cast_ray_all_hits(accel, mesh, Ray(np.array([0, 0, 1.0]), np.array([0, 0, -1.0])))
    assert len(hit) == 1 and hit[0].depth == pytest.approx(1.0)
    miss = cast_ray_all_hits(accel, mesh, Ray(np.array([2, 2, 1.0]), np.array([0, 0, -1.0])))
    assert miss == []


@pytest.mark.parametrize("mesh_name", ["cube", "sphere"])
def test_bvh_equals_brute_force(mesh_name, rng, sphere_mesh, cube_mesh):
    mesh = cube_mesh if mesh_name == "cube" else sphere_mesh
    accel = build_bvh(mesh)
    n = 1000
    origins = rng.uniform(-1.5, 1.5, size=(n, 3))
    directions = rng.normal(size=(n, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    batch = cast_rays(accel, origins, directions)
    offsets = batch.offsets(n)
    for i in range(n):
        got = [
            (batch.depth[k], batch.face[k]) for k in range(offsets[i], offsets[i + 1])
        ]
        expected = brute_force_hits(mesh, origins[i], directions[i])
        assert len(got) == len(expected)
        for (gt, gf), (et, ef) in zip(got, expected):
            assert gt == pytest.approx(et, abs=1e-9)
            assert gf == ef


def test_depths_strictly_increasing(sphere_mesh, rng):
    accel = build_bvh(sphere_mesh)
    origins = rng.uniform(-1.0, 1.0, size=(500, 3))
    directions = rng.normal(size=(500, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    batch = cast_rays(accel, origins, directions)
    same_ray = batch.ray[1:] == batch.ray[:-1]
    assert np.all(batch.depth[1:][same_ray] > batch.depth[:-1][same_ray])


@pytest.mark.parametrize("fixture", ["cube", "sphere"])
def test_even_parity_from_outside(fixture, rng, cube_mesh, sphere_mesh):
    mesh = cube_mesh if fixture == "cube" else sphere_mesh
    accel = build_bvh(mesh)
    n = 400
    # origins outside the unit-extent meshes, rays toward the interior
    origins = rng.normal(size=(n, 3))
    origins = 2.0 * origins / np.linalg.norm(origins, axis=1, keepdims=True)
    targets = rng.uniform(-0.2, 0.2, size=(n, 3))
    directions = targets - origins
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    batch = cast_rays(accel, origins, directions)
    offsets = batch.offsets(n)
    checked = 0
    for i in range(n):
        sel = slice(offsets[i], offsets[i + 1])
        bary_min = np.minimum(
            np.minimum(batch.bary_u[sel], batch.bary_v[sel]),
            1.0 - batch.bary_u[sel] - batch.bary_v[sel],
        )
        if len(bary_min) and bary_min.min() < 1e-4:
            continue  # edge-grazing rays excluded
        assert (offsets[i + 1] - offsets[i]) % 2 == 0
        checked += 1
    assert checked > n // 2


def test_translation_equivariance(sphere_mesh, rng):
    offset = np.array([0.37, -1.2, 0.81])
    moved = TriangleMesh(sphere_mesh.vertices + offset, sphere_mesh.faces)
    a1 = build_bvh(sphere_mesh)
    a2 = build_bvh(moved)
    origins = rng.uniform(-1.0, 1.0, size=(200, 3))
    directions = rng.normal(size=(200, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    b1 = cast_rays(a1, origins, directions)
    b2 = cast_rays(a2, origins + offset, directions)
    assert len(b1.depth) == len(b2.depth)
    np.testing.assert_array_equal(b1.ray, b2.ray)
    np.testing.assert_allclose(b1.depth, b2.depth, atol=1e-9)


def test_hit_record_invariants(sphere_mesh, rng):
    accel = build_bvh(sphere_mesh)
    for _ in range(20):
        origin = 2.0 * rng.normal(size=3)
        origin /= np.linalg.norm(origin) / 2.0
        direction = -origin / np.linalg.norm(origin)
        ray = Ray(origin, direction)
        for hit in cast_ray_all_hits(accel, sphere_mesh, ray):
            np.testing.assert_allclose(
                hit.position, origin + hit.depth * direction, atol=1e-6
            )
            w0, w1, w2 = hit.barycentric
            assert w0 + w1 + w2 == pytest.approx(1.0, abs=1e-9)
            i0, i1, i2 = sphere_mesh.faces[hit.face_index]
            recon = (
                w0 * sphere_mesh.vertices[i0]
                + w1 * sphere_mesh.vertices[i1]
                + w2 * sphere_mesh.vertices[i2]
            )
            np.testing.assert_allclose(recon, hit.position, atol=1e-6)


def test_surface_attributes_axis_face(cube_mesh):
    accel = build_bvh(cube_mesh)
    hits = cast_ray_all_hits(accel, cube_mesh, _z_ray())
    depth, normal, color = surface_attributes(cube_mesh, hits[0])
    assert depth == pytest.approx(0.7)
    np.testing.assert_allclose(normal, [0, 0, 1], atol=1e-12)
    np.testing.assert_allclose(color, [1, 1, 1])  # colorless default
    _, normal_back, _ = surface_attributes(cube_mesh, hits[1])
    np.testing.assert_allclose(normal_back, [0, 0, -1], atol=1e-12)


def test_surface_attributes_barycentric_color():
    mesh = TriangleMesh(
        [[-1, -1, 0], [1, -1, 0], [0, 1, 0]],
        [[0, 1, 2]],
        vertex_colors=[[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    )
    accel = build_bvh(mesh)
    centroid = mesh.vertices.mean(axis=0)
    ray = Ray(centroid + [0, 0, 1.0], np.array([0.0, 0.0, -1.0]))
    (hit,) = cast_ray_all_hits(accel, mesh, ray)
    _, _, color = surface_attributes(mesh, hit)
    np.testing.assert_allclose(color, [1 / 3, 1 / 3, 1 / 3], atol=1e-9)


def test_hit_cap_at_64():
    # 70 parallel unit squares stacked along z; a central ray crosses all.
    verts, faces = [], []
    for k in range(70):
        z = -0.05 * k
        base = 4 * k
        verts += [[-1, -1, z], [1, -1, z], [1, 1, z], [-1, 1, z]]
        faces += [[base, base + 1, base + 2], [base, base + 2, base + 3]]
    mesh = TriangleMesh(np.array(verts, dtype=float), np.array(faces))
    accel = build_bvh(mesh)
    ray = Ray(np.array([0.1, 0.1, 1.0]), np.array([0.0, 0.0, -1.0]))
    hits = cast_ray_all_hits(accel, mesh, ray)
    assert len(hits) == MAX_HITS


def test_duplicate_edge_hits_merged():
    # Two triangles sharing the diagonal of a square: a ray through the
    # shared edge must yield one record, not two.
    mesh = TriangleMesh(
        [[-1, -1, 0], [1, -1, 0], [1, 1, 0], [-1, 1, 0]],
        [[0, 1, 2], [0, 2, 3]],
    )
    accel = build_bvh(mesh)
    ray = Ray(np.array([0.0, 0.0, 1.0]), np.array([0.0, 0.0, -1.0]))
    hits = cast_ray_all_hits(accel, mesh, ray)
    assert len(hits) == 1


def test_concurrent_casting_over_shared_accel(sphere_mesh, rng):
    from concurrent.futures import ThreadPoolExecutor

    accel = build_bvh(sphere_mesh)
    origins = rng.uniform(-1.0, 1.0, size=(400, 3))
    directions = rng.normal(size=(400, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    serial = cast_rays(accel, origins, directions)
    chunks = [(origins[i::4], directions[i::4]) for i in range(4)]
    with ThreadPoolExecutor(max_workers=4) as pool:
        results = list(pool.map(lambda c: cast_rays(accel, *c), chunks))
    total = sum(len(r.depth) for r in results)
    assert total == len(serial.depth)
    for i, r in enumerate(results):
        own = serial.ray % 4 == i
        np.testing.assert_allclose(np.sort(r.depth), np.sort(serial.depth[own]))


def test_empty_mesh_rejected():
    empty = TriangleMesh(np.empty((0, 3)), np.empty((0, 3), dtype=int))
    with pytest.raises(MeshError):
        build_bvh(empty)


def test_bvh_leaf_sizes(sphere_mesh):
    accel = build_bvh(sphere_mesh)
    leaves = accel.leaf_count[accel.leaf_count > 0]
    assert leaves.max() <= 4
    assert leaves.sum() == sphere_mesh.n_faces
    order = np.sort(accel.tri_order)
    np.testing.assert_array_equal(order, np.arange(sphere_mesh.n_faces))
