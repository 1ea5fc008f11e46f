import json

import numpy as np
import pytest

from fedfft.tensors import (
    BadWeightDump,
    ClientUpdate,
    EmptyUpdateSet,
    ExtraCoordinate,
    MissingCoordinate,
    ModelWeights,
    ShapeMismatch,
    add,
    coordinate_views,
    from_dump_dict,
    l2_norm,
    load_weight_dump,
    mean_weights,
    reassemble,
    save_weight_dump,
    scale,
    sub,
    to_dump_dict,
    validate_uniform,
)


def mw(*layers):
    return ModelWeights([np.asarray(a, dtype=float) for a in layers])


def update(cid, *layers, size=1):
    return ClientUpdate(client_id=cid, weights=mw(*layers), dataset_size=size)


class TestModelWeights:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            mw([1.0, np.nan])
        with pytest.raises(ValueError):
            mw([np.inf])

    def test_layers_are_read_only(self):
        w = mw([1.0, 2.0])
        with pytest.raises(ValueError):
            w.layers[0][0] = 5.0

    def test_flat_round_trip(self):
        w = mw([[1.0, 2.0], [3.0, 4.0]], [5.0])
        assert w.with_flat(w.flat()) == w


class TestValidateUniform:
    def test_identical_shapes_ok(self):
        validate_uniform([update(0, [1, 2, 3]), update(1, [4, 5, 6])])

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch) as err:
            validate_uniform([update(0, [1, 2, 3]), update(7, [1, 2, 3, 4])])
        assert err.value.client_id == 7

    def test_empty(self):
        with pytest.raises(EmptyUpdateSet):
            validate_uniform([])


class TestCoordinateViews:
    def test_two_clients_one_layer(self):
        views = list(coordinate_views([update(0, [1.0, 2.0]), update(1, [3.0, 4.0])]))
        assert [(v.layer_index, v.coord_index) for v in views] == [(0, 0), (0, 1)]
        assert views[0].values.tolist() == [1.0, 3.0]
        assert views[1].values.tolist() == [2.0, 4.0]

    def test_single_client(self):
        views = list(coordinate_views([update(0, [7.0, 8.0])]))
        assert all(v.values.shape == (1,) for v in views)

    def test_count_matches_parameter_count(self):
        # three clients, layers of sizes 2 and 1 -> exactly 3 vectors of length 3
        ups = [update(k, [k, k + 1], [k * 10]) for k in range(3)]
        views = list(coordinate_views(ups))
        assert len(views) == 3
        assert all(v.values.shape == (3,) for v in views)

    def test_count_property_random_shapes(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            shapes = [
                tuple(rng.integers(1, 4, size=rng.integers(1, 3)))
                for _ in range(rng.integers(1, 4))
            ]
            k = int(rng.integers(1, 5))
            ups = [
                ClientUpdate(i, ModelWeights([rng.normal(size=s) for s in shapes]), 1)
                for i in range(k)
            ]
            total = ups[0].weights.num_params
            assert sum(1 for _ in coordinate_views(ups)) == total


class TestReassemble:
    def test_identity_round_trip(self):
        template = mw([[1.0, 2.0], [3.0, 4.0]], [5.0, 6.0])
        picked = {
            (v.layer_index, v.coord_index): float(v.values[0])
            for v in coordinate_views([ClientUpdate(0, template, 1)])
        }
        assert reassemble(template, picked) == template

    def test_zero_selection(self):
        template = mw([[1.0, 2.0]], [3.0])
        zeros = {(0, 0): 0.0, (0, 1): 0.0, (1, 0): 0.0}
        assert reassemble(template, zeros) == mw([[0.0, 0.0]], [0.0])

    def test_missing_coordinate(self):
        template = mw([1.0, 2.0])
        with pytest.raises(MissingCoordinate):
            reassemble(template, {(0, 0): 1.0})

    def test_extra_coordinate(self):
        template = mw([1.0])
        with pytest.raises(ExtraCoordinate):
            reassemble(template, {(0, 0): 1.0, (0, 5): 2.0})


class TestAlgebra:
    def test_zero_norm(self):
        assert l2_norm(mw([0.0, 0.0], [0.0])) == 0.0

    def test_scale_identity(self):
        w = mw([1.5, -2.0])
        assert scale(w, 1.0) == w

    def test_hand_norm(self):
        assert l2_norm(mw([3.0, 4.0])) == pytest.approx(5.0, abs=1e-15)

    def test_vector_space_axioms(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            a = mw(rng.normal(size=4), rng.normal(size=(2, 2)))
            b = mw(rng.normal(size=4), rng.normal(size=(2, 2)))
            c = float(rng.normal())
            lhs = scale(add(a, b), c)
            rhs = add(scale(a, c), scale(b, c))
            diff = sub(lhs, rhs)
            assert l2_norm(diff) <= 1e-12 * (1.0 + l2_norm(lhs))
            assert add(a, sub(b, b)) == a

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            add(mw([1.0]), mw([1.0, 2.0]))

    def test_mean_weights(self):
        m = mean_weights([mw([0.0, 2.0]), mw([4.0, 6.0])])
        assert m == mw([2.0, 4.0])


class TestWeightDump:
    def test_round_trip(self, tmp_path):
        w = mw([[1.0, 2.5], [3.0, -4.0]], [0.125])
        path = tmp_path / "w.json"
        save_weight_dump(w, str(path))
        assert load_weight_dump(str(path)) == w

    def test_document_shape(self):
        doc = to_dump_dict(mw([1.0, 2.0]))
        assert doc["version"] == 1
        assert doc["layers"][0] == {"shape": [2], "data": [1.0, 2.0]}

    def test_rejects_unknown_version(self):
        doc = to_dump_dict(mw([1.0]))
        doc["version"] = 2
        with pytest.raises(BadWeightDump):
            from_dump_dict(doc)

    def test_rejects_bad_payloads(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("not json {")
        with pytest.raises(BadWeightDump):
            load_weight_dump(str(path))
        with pytest.raises(BadWeightDump):
            from_dump_dict({"version": 1, "layers": [{"shape": [3], "data": [1.0]}]})
