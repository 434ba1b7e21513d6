import base64
import json

import numpy as np
import pytest

from evosynth.architecture import (
    Cluster,
    GeneTag,
    Verdict,
    ancestor_architecture,
    deserialize,
    serialize,
    storage_size,
    validate,
)
from evosynth.errors import InvalidTopologyError, MalformedInputError, VersionMismatchError
from helpers import random_masked_network


def brute_force_live(net):
    count = 0
    for layer in net.hidden_layers:
        for cluster in layer:
            for bit in cluster.incoming_mask.tolist():
                if bit:
                    count += 1
    rows, cols = net.output_weights.shape
    for _ in range(rows):
        for _ in range(cols):
            count += 1
    return count


def clear_first_bits(net, n):
    """Clear the first ``n`` input-synapse bits, walking clusters in order."""
    layers = [list(layer) for layer in net.hidden_layers]
    remaining = n
    for k, cluster in enumerate(layers[0]):
        mask = cluster.incoming_mask.copy()
        take = min(remaining, mask.size - 1)
        mask[:take] = False
        remaining -= take
        layers[0][k] = Cluster(cluster.tag, mask, np.where(mask, cluster.incoming_weights, 0.0))
    assert remaining == 0
    return net.replace(hidden_layers=tuple(tuple(layer) for layer in layers))


class TestAncestor:
    def test_small_topology(self):
        net = ancestor_architecture([4, 3, 2], 7)
        assert net.tags() == {GeneTag(0, 0), GeneTag(0, 1), GeneTag(0, 2)}
        assert storage_size(net).live_synapses == 18
        assert net.generation == 0

    def test_reference_topology_bytes(self):
        assert storage_size(ancestor_architecture([784, 64, 10], 0)).bytes == 203_264

    def test_deterministic(self):
        a = ancestor_architecture([10, 7, 5, 3], 99)
        b = ancestor_architecture([10, 7, 5, 3], 99)
        assert a == b
        for la, lb in zip(a.hidden_layers, b.hidden_layers):
            for ca, cb in zip(la, lb):
                assert ca.incoming_weights.tobytes() == cb.incoming_weights.tobytes()

    def test_init_scale(self):
        net = ancestor_architecture([2000, 50, 10], 3)
        weights = np.stack([c.incoming_weights for c in net.hidden_layers[0]])
        assert abs(weights.mean()) < 0.005
        assert weights.std() == pytest.approx(1 / np.sqrt(2000), rel=0.02)

    @pytest.mark.parametrize("widths", [[4, 2], [4], [4, 0, 2], [0, 3, 2]])
    def test_invalid_topology(self, widths):
        with pytest.raises(InvalidTopologyError):
            ancestor_architecture(widths, 0)

    def test_arrays_are_read_only(self):
        net = ancestor_architecture([4, 3, 2], 1)
        with pytest.raises(ValueError):
            net.hidden_layers[0][0].incoming_weights[0] = 1.0


class TestStorage:
    def test_dense(self):
        report = storage_size(ancestor_architecture([4, 3, 2], 7))
        assert (report.live_synapses, report.bytes, report.live_clusters) == (18, 72, 3)

    def test_six_bits_cleared(self):
        net = clear_first_bits(ancestor_architecture([4, 3, 2], 7), 6)
        report = storage_size(net)
        assert report.live_synapses == 12
        assert report.bytes == 48

    def test_matches_brute_force(self, rng):
        for i in range(100):
            net = random_masked_network(rng, widths=(9, 7, 4, 3))
            report = storage_size(net)
            assert report.live_synapses == brute_force_live(net)
            assert report.bytes == 4 * report.live_synapses
            assert report.live_clusters <= 11


class TestValidate:
    def test_fresh_ancestor_ok(self):
        assert validate(ancestor_architecture([4, 3, 2], 0)) is Verdict.OK

    def test_weight_under_cleared_bit_is_corrupt(self):
        net = ancestor_architecture([4, 3, 2], 0)
        c = net.hidden_layers[0][0]
        mask = c.incoming_mask.copy()
        mask[0] = False  # weight at position 0 stays nonzero
        broken = Cluster(c.tag, mask, c.incoming_weights)
        net = net.replace(hidden_layers=((broken,) + net.hidden_layers[0][1:],))
        assert validate(net) is Verdict.CORRUPT

    def test_empty_layer_is_degenerate(self):
        net = ancestor_architecture([4, 3, 2], 0)
        net = net.replace(hidden_layers=((),), output_weights=np.zeros((0, 2)))
        assert validate(net) is Verdict.DEGENERATE

    @pytest.mark.parametrize("mutation", ["dup_tag", "wrong_layer", "tag_range", "fan_in",
                                          "dead_cluster", "output_shape"])
    def test_corruptions(self, mutation):
        net = ancestor_architecture([4, 3, 2], 0)
        clusters = list(net.hidden_layers[0])
        c = clusters[0]
        output = net.output_weights
        if mutation == "dup_tag":
            clusters[1] = Cluster(c.tag, clusters[1].incoming_mask, clusters[1].incoming_weights)
        elif mutation == "wrong_layer":
            clusters[0] = Cluster(GeneTag(1, 0), c.incoming_mask, c.incoming_weights)
        elif mutation == "tag_range":
            clusters[0] = Cluster(GeneTag(0, 3), c.incoming_mask, c.incoming_weights)
        elif mutation == "fan_in":
            clusters[0] = Cluster(c.tag, np.ones(5, bool), np.ones(5))
        elif mutation == "dead_cluster":
            clusters[0] = Cluster(c.tag, np.zeros(4, bool), np.zeros(4))
        elif mutation == "output_shape":
            output = output[:2]
        net = net.replace(hidden_layers=(tuple(clusters),), output_weights=output)
        assert validate(net) is Verdict.CORRUPT


class TestSerialization:
    def test_ancestor_round_trip(self):
        net = ancestor_architecture([4, 3, 2], 7)
        assert deserialize(serialize(net)) == net

    def test_document_fields(self):
        doc = json.loads(serialize(ancestor_architecture([4, 3, 2], 7)))
        assert doc["version"] == 1
        assert set(doc) == {"version", "network_id", "generation", "rng_seed",
                            "layer_widths", "layers", "output_weights"}
        cluster = doc["layers"][0]["clusters"][1]
        assert cluster["tag"] == [0, 1]
        assert base64.b64decode(cluster["mask"]) == bytes([0b1111])
        assert all(isinstance(w, str) for w in cluster["weights"])

    def test_random_round_trips(self, rng):
        for _ in range(100):
            net = random_masked_network(rng, widths=(11, 7, 5, 3), keep_synapse=rng.random())
            back = deserialize(serialize(net))
            assert back == net

    def test_special_floats_exact(self):
        net = ancestor_architecture([3, 2, 2], 0)
        c = net.hidden_layers[0][0]
        weights = np.array([5e-324, -0.0, 1.0000000000000002])
        odd = Cluster(c.tag, np.ones(3, bool), weights)
        net = net.replace(hidden_layers=((odd,) + net.hidden_layers[0][1:],))
        back = deserialize(serialize(net))
        assert back.hidden_layers[0][0].incoming_weights.tobytes() == weights.tobytes()

    def test_degenerate_serializes(self):
        net = ancestor_architecture([4, 3, 2], 0)
        net = net.replace(hidden_layers=((),), output_weights=np.zeros((0, 2)))
        assert deserialize(serialize(net)) == net

    def test_corrupt_refused(self):
        net = ancestor_architecture([4, 3, 2], 0)
        net = net.replace(output_weights=net.output_weights[:1])
        with pytest.raises(InvalidTopologyError):
            serialize(net)

    def test_truncated(self):
        raw = serialize(ancestor_architecture([4, 3, 2], 7))
        with pytest.raises(MalformedInputError) as info:
            deserialize(raw[: len(raw) // 2])
        assert 0 < info.value.offset <= len(raw) // 2

    def test_version_mismatch(self):
        doc = json.loads(serialize(ancestor_architecture([4, 3, 2], 7)))
        doc["version"] = 2
        with pytest.raises(VersionMismatchError):
            deserialize(json.dumps(doc).encode())

    @pytest.mark.parametrize("edit", ["drop_widths", "bad_mask", "short_weights",
                                      "numeric_weight", "not_object"])
    def test_schema_errors(self, edit):
        doc = json.loads(serialize(ancestor_architecture([4, 3, 2], 7)))
        cluster = doc["layers"][0]["clusters"][0]
        if edit == "drop_widths":
            del doc["layer_widths"]
        elif edit == "bad_mask":
            cluster["mask"] = "***"
        elif edit == "short_weights":
            cluster["weights"] = cluster["weights"][:2]
        elif edit == "numeric_weight":
            cluster["weights"][0] = 0.5
        elif edit == "not_object":
            doc = [doc]
        raw = json.dumps(doc).encode()
        with pytest.raises(MalformedInputError) as info:
            deserialize(raw)
        assert 0 <= info.value.offset < len(raw)

    def test_non_utf8(self):
        with pytest.raises(MalformedInputError) as info:
            deserialize(b'{"version": \xff}')
        assert info.value.offset == 12
