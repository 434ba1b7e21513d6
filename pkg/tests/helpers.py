"""Network builders shared by the test modules."""

import struct

import numpy as np

from evosynth.architecture import Cluster, GeneTag, NetworkArchitecture, ancestor_architecture


def random_masked_network(rng, widths=(8, 6, 5, 3), keep_cluster=0.7, keep_synapse=0.5,
                          seed=None, network_id="rand"):
    """Ancestor with a random subset of clusters and synapses removed.

    Every kept cluster retains at least one live synapse.
    """
    seed = int(rng.integers(2**63)) if seed is None else seed
    base = ancestor_architecture(widths, seed, network_id=network_id)
    layers = []
    for layer in base.hidden_layers:
        kept = []
        for cluster in layer:
            if rng.random() > keep_cluster:
                continue
            mask = rng.random(cluster.incoming_mask.size) < keep_synapse
            if not mask.any():
                mask[rng.integers(mask.size)] = True
            kept.append(Cluster(cluster.tag, mask, np.where(mask, cluster.incoming_weights, 0.0)))
        if not kept:
            kept.append(layer[0])
        layers.append(tuple(kept))
    rows = [c.tag.ancestor_index for c in layers[-1]]
    return base.replace(hidden_layers=tuple(layers), output_weights=base.output_weights[rows])


def tagged_network(tag_indices, width=6, fan_in=2, n_out=2, network_id="t"):
    """Single-hidden-layer network holding exactly the given ancestor positions."""
    clusters = tuple(
        Cluster(GeneTag(0, k), np.ones(fan_in, dtype=bool), np.full(fan_in, 0.5))
        for k in sorted(tag_indices)
    )
    return NetworkArchitecture(
        layer_widths=(fan_in, width, n_out),
        hidden_layers=(clusters,),
        output_weights=np.ones((len(clusters), n_out)),
        network_id=network_id,
    )


def uniform_magnitude_network(widths, magnitude=0.25, seed=0, network_id="u"):
    """Dense network whose weights are all +-magnitude with random signs."""
    base = ancestor_architecture(widths, seed, network_id=network_id)
    layers = tuple(
        tuple(
            Cluster(c.tag, c.incoming_mask, magnitude * np.where(c.incoming_weights >= 0, 1.0, -1.0))
            for c in layer
        )
        for layer in base.hidden_layers
    )
    return base.replace(hidden_layers=layers)


def hidden_synapses(net):
    return sum(c.live_count for layer in net.hidden_layers for c in layer)


def write_idx_images(path, pixels):
    """Independent IDX writer: pixels is a (N, rows, cols) uint8 array."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack(">IIII", 0x803, n, rows, cols))
        fh.write(bytes(pixels.reshape(-1).tolist()))


def write_idx_labels(path, labels):
    labels = list(labels)
    with open(path, "wb") as fh:
        fh.write(struct.pack(">II", 0x801, len(labels)))
        fh.write(bytes(labels))


def write_tiny_mnist(directory, n_train=300, n_test=100, side=4, seed=0):
    """Learnable toy dataset in MNIST file layout: the label picks a bright pixel."""
    rng = np.random.default_rng(seed)
    for split, n in (("train", n_train), ("t10k", n_test)):
        labels = rng.integers(0, 10, size=n)
        pixels = rng.integers(0, 60, size=(n, side, side)).astype(np.uint8)
        flat = pixels.reshape(n, -1)
        flat[np.arange(n), labels % flat.shape[1]] = 255
        write_idx_images(directory / f"{split}-images.idx3-ubyte", pixels)
        write_idx_labels(directory / f"{split}-labels.idx1-ubyte", labels)
    return directory
