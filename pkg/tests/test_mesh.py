import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moncap.errors import IncompatiblePair, InvalidInput, MeshMismatch
from moncap.mesh import (NodeSet, build_mesh, complement, difference,
                         discrete_boundary, disk, halfplane, intersect,
                         is_equal, is_subset, mask_to_rle, node_area,
                         node_diameter, rasterize, rect, rle_to_mask,
                         set_algebra, shape_all, shape_complement,
                         shape_difference, shape_from_json, shape_intersect,
                         shape_none, shape_union, union, validate_pair)


class TestBuildMesh:
    def test_n2_counts(self):
        m = build_mesh(2, 1.0)
        assert m.n_nodes == 9
        assert m.n_triangles == 8
        assert m.tri_area == pytest.approx(0.125, abs=0)

    def test_node_index_row_major(self):
        m = build_mesh(4)
        k = int(np.argmin(np.sum((m.nodes - [0.5, 0.5]) ** 2, axis=1)))
        assert k == 12
        assert m.node_index(2, 2) == 12

    @pytest.mark.parametrize("n", [2, 3, 8, 17])
    def test_total_area(self, n):
        m = build_mesh(n, 1.0)
        assert m.n_triangles * m.tri_area == pytest.approx(1.0, rel=1e-14)

    def test_right_triangles_with_leg_h(self):
        m = build_mesh(5, 2.0)
        pts = m.nodes[m.triangles]
        for tri in pts[:10]:
            d = [np.linalg.norm(tri[i] - tri[j])
                 for i, j in ((0, 1), (1, 2), (0, 2))]
            d.sort()
            assert d[0] == pytest.approx(m.h, rel=1e-12)
            assert d[1] == pytest.approx(m.h, rel=1e-12)
            assert d[2] == pytest.approx(m.h * np.sqrt(2), rel=1e-12)

    def test_interior_node_in_six_triangles(self):
        m = build_mesh(4)
        counts = np.zeros(m.n_nodes, dtype=int)
        np.add.at(counts, m.triangles.ravel(), 1)
        interior = np.ones(m.n_nodes, dtype=bool)
        i = np.arange(m.n_nodes) % 5
        j = np.arange(m.n_nodes) // 5
        interior &= (i > 0) & (i < 4) & (j > 0) & (j < 4)
        assert np.all(counts[interior] == 6)

    def test_deterministic_rebuild(self):
        a = build_mesh(6, 1.5)
        b = build_mesh(6, 1.5)
        assert a.mesh_id == b.mesh_id
        assert np.array_equal(a.nodes, b.nodes)
        assert np.array_equal(a.triangles, b.triangles)

    def test_small_n_rejected(self):
        with pytest.raises(InvalidInput):
            build_mesh(1)


class TestRasterize:
    def test_disk_five_nodes(self):
        m = build_mesh(4)
        s = rasterize(disk(0.5, 0.5, 0.26), m)
        got = {tuple(np.round(p, 6)) for p in m.nodes[s.mask]}
        assert got == {(0.5, 0.5), (0.25, 0.5), (0.75, 0.5),
                       (0.5, 0.25), (0.5, 0.75)}

    def test_halfplane_closed_boundary(self):
        m = build_mesh(4)
        s = rasterize(halfplane("x", 0.25, "le"), m)
        assert s.count == 10  # i in {0, 1}

    def test_difference_all_all_empty(self):
        m = build_mesh(4)
        s = rasterize(shape_difference(shape_all(), shape_all()), m)
        assert s.count == 0

    def test_json_roundtrip(self):
        shape = shape_union(disk(0.2, 0.3, 0.1),
                            shape_complement(rect(0.1, 0.1, 0.9, 0.9)))
        again = shape_from_json(shape.to_json())
        m = build_mesh(8)
        assert np.array_equal(rasterize(shape, m).mask,
                              rasterize(again, m).mask)

    @given(st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=100, deadline=None)
    def test_combinators_match_mask_algebra(self, seed):
        rng = np.random.default_rng(seed)
        m = build_mesh(6)

        def prim():
            k = rng.integers(0, 3)
            if k == 0:
                return disk(rng.uniform(0, 1), rng.uniform(0, 1),
                            rng.uniform(0, 0.5))
            if k == 1:
                x0, y0 = rng.uniform(0, 0.6, size=2)
                return rect(x0, y0, x0 + rng.uniform(0, 0.4),
                            y0 + rng.uniform(0, 0.4))
            return halfplane("x" if rng.random() < 0.5 else "y",
                             rng.uniform(0, 1),
                             "le" if rng.random() < 0.5 else "ge")

        a, b = prim(), prim()
        ma = rasterize(a, m).mask
        mb = rasterize(b, m).mask
        assert np.array_equal(rasterize(shape_union(a, b), m).mask, ma | mb)
        assert np.array_equal(rasterize(shape_intersect(a, b), m).mask,
                              ma & mb)
        assert np.array_equal(rasterize(shape_difference(a, b), m).mask,
                              ma & ~mb)
        assert np.array_equal(rasterize(shape_complement(a), m).mask, ~ma)


class TestSetAlgebra:
    def setup_method(self):
        self.m = build_mesh(6)
        self.a = rasterize(disk(0.3, 0.3, 0.2), self.m, "a")
        self.b = rasterize(disk(0.7, 0.7, 0.2), self.m, "b")

    def test_empty_subset_of_anything(self):
        empty = rasterize(shape_none(), self.m)
        assert is_subset(empty, self.a)
        assert set_algebra("subset", empty, self.b) is True

    def test_disjoint_union_counts(self):
        assert union(self.a, self.b).count == self.a.count + self.b.count

    def test_intersect_with_complement_empty(self):
        assert intersect(self.a, complement(self.a)).count == 0

    def test_equal(self):
        assert is_equal(self.a, self.a)
        assert not is_equal(self.a, self.b)

    def test_mesh_mismatch_rejected(self):
        other = rasterize(disk(0.3, 0.3, 0.2), build_mesh(7))
        with pytest.raises(MeshMismatch):
            union(self.a, other)

    def test_unknown_op_rejected(self):
        with pytest.raises(InvalidInput):
            set_algebra("xor", self.a, self.b)

    def test_difference(self):
        d = difference(self.a, self.a)
        assert d.count == 0


class TestDiscreteBoundary:
    def test_single_node(self):
        m = build_mesh(6)
        mask = np.zeros(m.n_nodes, dtype=bool)
        mask[m.node_index(3, 3)] = True
        e = NodeSet(mask, "one", m.mesh_id)
        assert np.array_equal(discrete_boundary(e, m).mask, mask)

    def test_all_nodes_has_empty_boundary(self):
        m = build_mesh(5)
        e = rasterize(shape_all(), m)
        assert discrete_boundary(e, m).count == 0

    def test_block_3x3_perimeter(self):
        m = build_mesh(8)
        e = rasterize(rect(3 / 8, 3 / 8, 5 / 8, 5 / 8), m)
        assert e.count == 9
        b = discrete_boundary(e, m)
        assert b.count == 8
        center = m.node_index(4, 4)
        assert not b.mask[center]

    def test_boundary_subset_and_empty(self):
        m = build_mesh(6)
        e = rasterize(disk(0.5, 0.5, 0.3), m)
        b = discrete_boundary(e, m)
        assert is_subset(b, e)
        empty = rasterize(shape_none(), m)
        assert discrete_boundary(empty, m).count == 0


class TestValidatePair:
    def setup_method(self):
        self.m = build_mesh(8)

    def test_empty_e_valid(self):
        e = rasterize(shape_none(), self.m, "E")
        f = rasterize(disk(0.5, 0.5, 0.3), self.m, "F")
        vp = validate_pair(e, f, self.m)
        assert vp.free_mask.sum() == f.count

    def test_e_not_inside_f_incompatible(self):
        e = rasterize(disk(0.5, 0.5, 0.2), self.m, "E")
        f = rasterize(disk(0.5, 0.5, 0.1), self.m, "F")
        with pytest.raises(IncompatiblePair):
            validate_pair(e, f, self.m)

    def test_e_equals_f_valid_no_free(self):
        e = rasterize(disk(0.5, 0.5, 0.2), self.m, "E")
        vp = validate_pair(e, e, self.m)
        assert vp.free_mask.sum() == 0

    def test_outer_boundary_contact_recorded(self):
        e = rasterize(disk(0.5, 0.5, 0.1), self.m, "E")
        f_in = rasterize(disk(0.5, 0.5, 0.3), self.m, "F")
        f_out = rasterize(shape_all(), self.m, "F")
        assert not validate_pair(e, f_in, self.m).touches_outer_boundary
        assert validate_pair(e, f_out, self.m).touches_outer_boundary


class TestMeasures:
    def test_node_area_all(self):
        m = build_mesh(4, 2.0)
        assert node_area(m, rasterize(shape_all(), m)) == pytest.approx(4.0)

    def test_node_area_grows_with_set(self):
        m = build_mesh(8)
        small = rasterize(disk(0.5, 0.5, 0.2), m)
        big = rasterize(disk(0.5, 0.5, 0.4), m)
        assert node_area(m, small) < node_area(m, big)

    def test_diameter(self):
        m = build_mesh(4)
        s = rasterize(rect(0.0, 0.0, 1.0, 0.0), m)  # bottom row
        assert node_diameter(m, s) == pytest.approx(1.0)
        empty = rasterize(shape_none(), m)
        assert node_diameter(m, empty) == 0.0

    def test_diameter_large_set_uses_hull(self):
        m = build_mesh(32)
        s = rasterize(disk(0.5, 0.5, 0.4), m)
        assert s.count > 64
        d = node_diameter(m, s)
        assert 0.75 <= d <= 0.8 + 1e-9


class TestRle:
    @given(st.integers(min_value=0, max_value=2 ** 31))
    @settings(max_examples=50, deadline=None)
    def test_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        mask = rng.random(rng.integers(1, 200)) < 0.4
        assert np.array_equal(rle_to_mask(mask_to_rle(mask)), mask)

    def test_known_encoding(self):
        mask = np.array([False, True, True, False])
        assert mask_to_rle(mask) == {"n": 4, "runs": [1, 2, 1]}
        mask = np.array([True, True])
        assert mask_to_rle(mask) == {"n": 2, "runs": [0, 2]}
