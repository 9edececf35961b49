import hashlib
import json

import numpy as np
import pytest

from helpers import layer, manifest, tensor, write_net, write_store
from mpq.cost import BudgetSpec
from mpq.errors import (
    DuplicateLayer,
    InvalidField,
    IoFailure,
    MalformedManifest,
    NegativeGain,
    NonNumeric,
    NonPositiveScale,
    ShapeMismatch,
    TruncatedBlob,
    UnknownLayer,
)
from mpq.knapsack import PrecisionAssignment
from mpq.model_io import (
    GainVector,
    RunTable,
    load_assignment,
    load_gains,
    load_manifest,
    load_run_table,
    load_tensor_container,
    write_assignment,
    write_gains,
    write_run_table,
)


def _write_json(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


class TestManifest:
    def test_three_layer_order_preserved(self, tmp_path):
        doc = {
            "name": "tiny",
            "layers": [
                {"name": f"l{i}", "macs": m, "params": 10, "input_features": 256}
                for i, m in enumerate([100, 200, 300])
            ],
        }
        man = load_manifest(_write_json(tmp_path / "net.json", doc))
        assert [l.macs for l in man.layers] == [100, 200, 300]
        assert man.layer_names() == ["l0", "l1", "l2"]

    def test_duplicate_layer(self, tmp_path):
        doc = {
            "layers": [
                {"name": "conv1", "macs": 1, "params": 1, "input_features": 256},
                {"name": "conv1", "macs": 2, "params": 1, "input_features": 256},
            ]
        }
        with pytest.raises(DuplicateLayer):
            load_manifest(_write_json(tmp_path / "net.json", doc))

    def test_bad_fixed_bits(self, tmp_path):
        doc = {"layers": [{"name": "a", "macs": 1, "params": 1, "input_features": 256, "fixed_bits": 3}]}
        with pytest.raises(InvalidField):
            load_manifest(_write_json(tmp_path / "net.json", doc))

    def test_negative_macs(self, tmp_path):
        doc = {"layers": [{"name": "a", "macs": -1, "params": 1, "input_features": 256}]}
        with pytest.raises(InvalidField):
            load_manifest(_write_json(tmp_path / "net.json", doc))

    def test_syntax_error(self, tmp_path):
        path = tmp_path / "net.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(MalformedManifest):
            load_manifest(path)

    def test_missing_field(self, tmp_path):
        doc = {"layers": [{"name": "a", "macs": 1, "params": 1}]}
        with pytest.raises(MalformedManifest):
            load_manifest(_write_json(tmp_path / "net.json", doc))

    def test_round_trip_identity(self, tmp_path):
        man = manifest(
            layer("a", macs=10, weight_tensor="a.weight"),
            layer("b", link_group="g", fixed_bits=8),
            layer("c", input_features=64),
            name="demo",
        )
        path = write_net(tmp_path, man)
        loaded = load_manifest(path)
        assert loaded == man
        path2 = write_net(tmp_path, loaded, "again.json")
        assert load_manifest(path2) == loaded

    def test_implicit_fixed_bits(self):
        narrow = layer("n", input_features=64)
        assert narrow.effective_fixed_bits == 4 and not narrow.selectable
        wide = layer("w", input_features=128)
        assert wide.effective_fixed_bits is None and wide.selectable
        pinned = layer("p", input_features=64, fixed_bits=8)
        assert pinned.effective_fixed_bits == 8

    def test_loading_does_not_mutate_file(self, tmp_path):
        path = write_net(tmp_path, manifest(layer("a")))
        before = hashlib.sha256(path.read_bytes()).hexdigest()
        load_manifest(path)
        assert hashlib.sha256(path.read_bytes()).hexdigest() == before


class TestTensorContainer:
    def test_load_basic(self, tmp_path):
        entry = tensor("fc.weight", [1.0, 2.0, 3.0, 4.0], scale=0.5, precision=4, shape=(2, 2))
        mpath, bpath = write_store(tmp_path, [entry])
        store = load_tensor_container(mpath, bpath)
        assert set(store) == {"fc.weight"}
        got = store["fc.weight"]
        assert got.shape == (2, 2)
        assert got.values.dtype == np.float64
        assert np.array_equal(got.values, [1.0, 2.0, 3.0, 4.0])

    def test_truncated_blob(self, tmp_path):
        mpath = _write_json(
            tmp_path / "t.json",
            [{"name": "w", "shape": [4], "offset": 0, "byte_length": 16, "scale": 1.0, "precision": 4}],
        )
        bpath = tmp_path / "t.blob"
        bpath.write_bytes(b"\x00" * 8)
        with pytest.raises(TruncatedBlob):
            load_tensor_container(mpath, bpath)

    def test_zero_scale(self, tmp_path):
        mpath = _write_json(
            tmp_path / "t.json",
            [{"name": "w", "shape": [1], "offset": 0, "byte_length": 4, "scale": 0.0, "precision": 4}],
        )
        bpath = tmp_path / "t.blob"
        bpath.write_bytes(b"\x00" * 4)
        with pytest.raises(NonPositiveScale):
            load_tensor_container(mpath, bpath)

    def test_shape_mismatch(self, tmp_path):
        mpath = _write_json(
            tmp_path / "t.json",
            [{"name": "w", "shape": [3], "offset": 0, "byte_length": 8, "scale": 1.0, "precision": 4}],
        )
        bpath = tmp_path / "t.blob"
        bpath.write_bytes(b"\x00" * 8)
        with pytest.raises(ShapeMismatch):
            load_tensor_container(mpath, bpath)

    def test_round_trip_is_byte_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        entries = [
            tensor("a.weight", rng.standard_normal(12).astype(np.float32), scale=0.25, precision=4, shape=(3, 4)),
            tensor("b.weight", rng.standard_normal(5).astype(np.float32), scale=0.03125, precision=2),
        ]
        mpath, bpath = write_store(tmp_path, entries)
        first_blob = bpath.read_bytes()
        store = load_tensor_container(mpath, bpath)
        mpath2, bpath2 = write_store(tmp_path, store, prefix="copy")
        assert bpath2.read_bytes() == first_blob
        assert load_tensor_container(mpath2, bpath2) == store


class TestGains:
    def test_load_basic(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("a\t0.5\nb\t1.0\n", encoding="utf-8")
        gains = load_gains(path)
        assert gains.entries == {"a": 0.5, "b": 1.0}

    def test_negative_gain(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("a\t-0.1\n", encoding="utf-8")
        with pytest.raises(NegativeGain):
            load_gains(path)
        assert load_gains(path, allow_negative=True).entries == {"a": -0.1}

    def test_nan_rejected(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("a\tNaN\n", encoding="utf-8")
        with pytest.raises(NonNumeric):
            load_gains(path)

    def test_grouped_digits_rejected(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("a\t1_000\n", encoding="utf-8")
        with pytest.raises(NonNumeric):
            load_gains(path)

    def test_unknown_layer_against_manifest(self, tmp_path):
        path = tmp_path / "g.tsv"
        path.write_text("ghost\t1.0\n", encoding="utf-8")
        with pytest.raises(UnknownLayer):
            load_gains(path, manifest=manifest(layer("a")))

    def test_round_trip(self, tmp_path):
        gains = GainVector(metric_name="g", entries={"a": 0.123456789012345, "b": 3.0})
        path = tmp_path / "g.tsv"
        write_gains(gains, path)
        loaded = load_gains(path, metric_name="g")
        assert loaded == gains
        write_gains(loaded, tmp_path / "g2.tsv")
        assert (tmp_path / "g2.tsv").read_text() == path.read_text()


class TestRunTable:
    def test_round_trip(self, tmp_path):
        table = RunTable(
            column_names=("p_1", "p_2", "p_3"),
            rows=[((0, 1, 1), 71.25), ((1, 1, 0), 70.0)],
        )
        path = tmp_path / "runs.csv"
        write_run_table(table, path)
        assert load_run_table(path) == table

    def test_bad_flag(self, tmp_path):
        path = tmp_path / "runs.csv"
        path.write_text("p_1,p_2,accuracy\n0,2,70.0\n", encoding="utf-8")
        with pytest.raises(InvalidField):
            load_run_table(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "runs.csv"
        path.write_text("p_1,p_2,acc\n0,1,70.0\n", encoding="utf-8")
        with pytest.raises(MalformedManifest):
            load_run_table(path)


class TestAssignment:
    def _assignment(self):
        return PrecisionAssignment(
            bits_per_layer={"a": 4, "b": 2, "fixed": 8},
            selected_items=("a",),
            total_cost=700,
            objective=22,
            budget=BudgetSpec(fraction=0.7, capacity_bmacs=200),
            compression_ratio=9.142857142857142,
            network="demo",
        )

    def test_round_trip_identity(self, tmp_path):
        assignment = self._assignment()
        path = tmp_path / "assign.json"
        write_assignment(assignment, path)
        loaded = load_assignment(path)
        assert loaded == assignment
        write_assignment(loaded, tmp_path / "again.json")
        assert (tmp_path / "again.json").read_text() == path.read_text()

    def test_layer_order_preserved(self, tmp_path):
        assignment = self._assignment()
        path = tmp_path / "assign.json"
        write_assignment(assignment, path)
        doc = json.loads(path.read_text())
        assert [l["name"] for l in doc["layers"]] == ["a", "b", "fixed"]
        assert doc["layers"][0]["bits"] == 4 and doc["layers"][1]["bits"] == 2

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(IoFailure):
            write_assignment(self._assignment(), tmp_path / "no" / "such" / "dir" / "a.json")
