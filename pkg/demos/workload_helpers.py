"""Tiny model builders shared by the demo scripts."""

import random

from matpipe import model_ir as mir


def chain_tree(feature_count, depth, value_bits, class_count=2):
    """Right-leaning chain: each level splits off one leaf, full depth."""
    top = (1 << value_bits) - 1
    nodes = {}
    for d in range(depth):
        last = d == depth - 1
        nodes[2 * d] = mir.TreeNode(
            node_id=2 * d,
            feature=d % feature_count,
            threshold=top // 2,
            left=2 * d + 1,
            right=2 * depth if last else 2 * (d + 1),
        )
        nodes[2 * d + 1] = mir.TreeNode(node_id=2 * d + 1, label=d % class_count)
    nodes[2 * depth] = mir.TreeNode(node_id=2 * depth, label=depth % class_count)
    tree = mir.build_tree(0, nodes, class_count)
    spec = mir.ModelSpec(
        kind=mir.MODEL_DT,
        quantization=mir.QuantizationSpec(
            feature_count=feature_count, value_bits=value_bits
        ),
        model=tree,
    )
    return mir.validate_model(spec)


def random_rows(seed, count, feature_count, value_bits):
    rng = random.Random(seed)
    top = (1 << value_bits) - 1
    return [
        tuple(rng.randint(0, top) for _ in range(feature_count)) for _ in range(count)
    ]


def labeled_dataset(spec, rows, name="demo"):
    """Rows labeled by the fixed-point reference predictor."""
    labels = [mir.reference_predict(spec, r) for r in rows]
    return mir.Dataset(features=tuple(rows), labels=tuple(labels), name=name)
