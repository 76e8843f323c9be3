"""Portable model descriptions, quantization, and reference predictors.

The exchange format is a JSON document: a quantization block plus one model
body (decision tree, forest, or linear SVM).  Thresholds and dataset features
are already quantized integers; SVM weights and biases stay floating point
and are converted to fixed point here and in the translator with identical
arithmetic, so the reference predictor is the ground truth for what a
deployed pipeline must output bit for bit.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, replace

DEFAULT_VALUE_BITS = 16
DEFAULT_SCALE_SHIFT = 16
DEFAULT_ACC_BITS = 32
# Fixed-point SVM products index the feature by its top bits when value_bits
# exceeds this; the translator's table config defaults to the same constant.
DEFAULT_SVM_INDEX_BITS = 10

FORMAT_VERSION = 1

MODEL_DT = "dt"
MODEL_RF = "rf"
MODEL_SVM = "svm"

SCHEME_ONE_VS_ONE = "one_vs_one"
SCHEME_ONE_VS_REST = "one_vs_rest"


class ModelError(ValueError):
    """Malformed or inconsistent model description."""


class QuantizationError(ValueError):
    """Dataset cannot be quantized (constant feature, out-of-range value)."""


@dataclass(frozen=True)
class QuantizationSpec:
    feature_count: int
    value_bits: int = DEFAULT_VALUE_BITS
    scale_shift: int = DEFAULT_SCALE_SHIFT
    acc_bits: int = DEFAULT_ACC_BITS

    def __post_init__(self):
        if self.feature_count < 1:
            raise ModelError("feature_count must be >= 1")
        if not 1 <= self.value_bits <= 32:
            raise ModelError("value_bits must be in [1, 32]")
        if self.scale_shift < 0:
            raise ModelError("scale_shift must be >= 0")
        if not 2 <= self.acc_bits <= 64:
            raise ModelError("acc_bits must be in [2, 64]")


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    feature: int | None = None
    threshold: int | None = None
    left: int | None = None
    right: int | None = None
    label: int | None = None
    depth: int = 0

    @property
    def is_leaf(self):
        return self.label is not None


@dataclass(frozen=True)
class DecisionTreeModel:
    root_id: int
    nodes: dict[int, TreeNode]
    class_count: int

    @property
    def depth(self):
        return max(n.depth for n in self.nodes.values())

    def leaves(self):
        """Leaves in increasing node id order."""
        return [n for _, n in sorted(self.nodes.items()) if n.is_leaf]

    def internal_at_depth(self, d):
        return [
            n for _, n in sorted(self.nodes.items()) if not n.is_leaf and n.depth == d
        ]

    def predict(self, features):
        node = self.nodes[self.root_id]
        while not node.is_leaf:
            if features[node.feature] <= node.threshold:
                node = self.nodes[node.left]
            else:
                node = self.nodes[node.right]
        return node.label


@dataclass(frozen=True)
class RandomForestModel:
    trees: tuple[DecisionTreeModel, ...]
    class_count: int


@dataclass(frozen=True)
class Hyperplane:
    weights: tuple[float, ...]
    bias: float
    # For one-vs-one, the (lower, higher) class index pair this plane
    # separates; a non-negative score votes for the lower index.
    classes: tuple[int, int] | None = None


@dataclass(frozen=True)
class SvmModel:
    hyperplanes: tuple[Hyperplane, ...]
    scheme: str
    class_count: int


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    quantization: QuantizationSpec
    model: DecisionTreeModel | RandomForestModel | SvmModel


@dataclass(frozen=True)
class Dataset:
    features: tuple[tuple[int, ...], ...]
    labels: tuple[int, ...]
    name: str = ""

    def __len__(self):
        return len(self.features)


# ---------------------------------------------------------------------------
# Quantization


def quantize_value(x, lo, hi, value_bits):
    """Min-max map of x from [lo, hi] onto [0, 2^value_bits - 1]."""
    if hi <= lo:
        raise QuantizationError("empty value range [%r, %r]" % (lo, hi))
    top = (1 << value_bits) - 1
    q = math.floor(((x - lo) / (hi - lo)) * top)
    return min(max(q, 0), top)


def dequantize(q, value_bits):
    """Quantized feature back to the scaled domain [0, 1)."""
    return q / (1 << value_bits)


def fit_feature_range(rows):
    """Per-feature (min, max) over rows; a constant feature is an error."""
    if not rows:
        raise QuantizationError("cannot fit ranges on an empty dataset")
    n_features = len(rows[0])
    mins = [min(r[i] for r in rows) for i in range(n_features)]
    maxs = [max(r[i] for r in rows) for i in range(n_features)]
    for i, (lo, hi) in enumerate(zip(mins, maxs)):
        if hi <= lo:
            raise QuantizationError("feature %d is constant over the dataset" % i)
    return mins, maxs


def quantize_dataset(rows, labels, spec, mins=None, maxs=None, name=""):
    """Quantize real-valued rows into a Dataset.

    Ranges are fitted from the rows unless (mins, maxs) are given; pass the
    training split's ranges when quantizing a test split.
    """
    if len(rows) != len(labels):
        raise QuantizationError("rows and labels differ in length")
    if mins is None or maxs is None:
        mins, maxs = fit_feature_range(rows)
    quantized = []
    for r in rows:
        if len(r) != spec.feature_count:
            raise QuantizationError(
                "row has %d features, spec says %d" % (len(r), spec.feature_count)
            )
        quantized.append(
            tuple(
                quantize_value(x, lo, hi, spec.value_bits)
                for x, lo, hi in zip(r, mins, maxs)
            )
        )
    return Dataset(features=tuple(quantized), labels=tuple(int(y) for y in labels), name=name)


# ---------------------------------------------------------------------------
# Fixed-point SVM arithmetic (shared with the translator)


def wrap_signed(x, bits):
    """Two's-complement wrap of x to the given bit width."""
    half = 1 << (bits - 1)
    return ((x + half) & ((1 << bits) - 1)) - half


def svm_table_index(q, value_bits, index_bits):
    """Feature value as seen by a product table: its top index_bits bits."""
    b = min(value_bits, index_bits)
    return q >> (value_bits - b)


def fixed_point_product(weight, index, index_bits, scale_shift):
    """round(weight * (index / 2^index_bits) * 2^scale_shift) as an int."""
    return round(weight * index / (1 << index_bits) * (1 << scale_shift))


def fixed_point_bias(bias, scale_shift):
    return round(bias * (1 << scale_shift))


def svm_accumulators(model, features, quant, index_bits=DEFAULT_SVM_INDEX_BITS):
    """Per-hyperplane fixed-point scores, wrapped to acc_bits at every add."""
    b = min(quant.value_bits, index_bits)
    accs = []
    for hp in model.hyperplanes:
        acc = wrap_signed(fixed_point_bias(hp.bias, quant.scale_shift), quant.acc_bits)
        for i, w in enumerate(hp.weights):
            m = svm_table_index(features[i], quant.value_bits, b)
            term = fixed_point_product(w, m, b, quant.scale_shift)
            acc = wrap_signed(acc + term, quant.acc_bits)
        accs.append(acc)
    return accs


def sign_bit(acc, acc_bits):
    return (acc >> (acc_bits - 1)) & 1


def svm_vote(model, sign_bits):
    """Class decided by the hyperplane sign bits; ties break to the lowest index.

    One-vs-one: plane (a, b) votes a when its sign bit is 0 (score >= 0),
    else b.  One-vs-rest: plane h votes h when its sign bit is 0.
    """
    votes = [0] * model.class_count
    for h, (hp, s) in enumerate(zip(model.hyperplanes, sign_bits)):
        if model.scheme == SCHEME_ONE_VS_ONE:
            a, b = hp.classes
            votes[a if s == 0 else b] += 1
        elif s == 0:
            votes[hp.classes[0] if hp.classes else h] += 1
    best = max(votes)
    return votes.index(best)


# ---------------------------------------------------------------------------
# Reference predictors


def reference_predict(spec, features, svm_index_bits=DEFAULT_SVM_INDEX_BITS):
    """Ground-truth class for quantized features.

    Mirrors the deployed pipeline exactly: integer threshold walks for trees,
    majority vote with lowest-index ties for forests, and the fixed-point
    sum/sign/vote path for SVMs.  svm_index_bits must equal the translator's
    mul_index_bits when comparing against a deployed program.
    """
    _check_features(spec, features)
    if spec.kind == MODEL_DT:
        return spec.model.predict(features)
    if spec.kind == MODEL_RF:
        return majority_vote(
            [t.predict(features) for t in spec.model.trees], spec.model.class_count
        )
    if spec.kind == MODEL_SVM:
        accs = svm_accumulators(spec.model, features, spec.quantization, svm_index_bits)
        signs = [sign_bit(a, spec.quantization.acc_bits) for a in accs]
        return svm_vote(spec.model, signs)
    raise ModelError("unknown model kind %r" % spec.kind)


def reference_predict_float(spec, features):
    """Float-precision predictor, for measuring quantization loss only."""
    _check_features(spec, features)
    if spec.kind in (MODEL_DT, MODEL_RF):
        return reference_predict(spec, features)
    signs = []
    for hp in spec.model.hyperplanes:
        score = hp.bias + sum(
            w * dequantize(q, spec.quantization.value_bits)
            for w, q in zip(hp.weights, features)
        )
        signs.append(0 if score >= 0 else 1)
    return svm_vote(spec.model, signs)


def majority_vote(labels, class_count):
    votes = [0] * class_count
    for y in labels:
        votes[y] += 1
    return votes.index(max(votes))


def _check_features(spec, features):
    q = spec.quantization
    if len(features) != q.feature_count:
        raise ModelError(
            "expected %d features, got %d" % (q.feature_count, len(features))
        )
    top = (1 << q.value_bits) - 1
    for i, v in enumerate(features):
        if not 0 <= v <= top:
            raise ModelError("feature %d value %d outside [0, %d]" % (i, v, top))


# ---------------------------------------------------------------------------
# Construction and validation


def build_tree(root_id, plain_nodes, class_count):
    """Assemble and validate a DecisionTreeModel from nodes without depths.

    plain_nodes maps node_id to a TreeNode whose depth field is ignored.
    """
    if root_id not in plain_nodes:
        raise ModelError("root node %r missing from node table" % root_id)
    depths = {}
    order = [(root_id, 0)]
    while order:
        nid, d = order.pop()
        if nid not in plain_nodes:
            raise ModelError("node %r references missing child %r" % (_parent_of(plain_nodes, nid), nid))
        if nid in depths:
            raise ModelError("node %r is reachable twice; not a tree" % nid)
        depths[nid] = d
        node = plain_nodes[nid]
        if node.is_leaf:
            if node.label < 0 or node.label >= class_count:
                raise ModelError(
                    "leaf %r label %r outside [0, %d)" % (nid, node.label, class_count)
                )
            if node.left is not None or node.right is not None:
                raise ModelError("leaf %r must not have children" % nid)
        else:
            if node.feature is None or node.threshold is None:
                raise ModelError("internal node %r needs feature and threshold" % nid)
            if node.left is None or node.right is None:
                raise ModelError("internal node %r needs two children" % nid)
            order.append((node.left, d + 1))
            order.append((node.right, d + 1))
    unreachable = set(plain_nodes) - set(depths)
    if unreachable:
        raise ModelError("unreachable nodes: %s" % sorted(unreachable))
    nodes = {
        nid: replace(plain_nodes[nid], depth=depths[nid]) for nid in plain_nodes
    }
    return DecisionTreeModel(root_id=root_id, nodes=nodes, class_count=class_count)


def _parent_of(plain_nodes, child_id):
    for nid, n in plain_nodes.items():
        if n.left == child_id or n.right == child_id:
            return nid
    return "<root>"


def validate_model(spec):
    """Re-run all structural checks; raises ModelError on the first failure."""
    q = spec.quantization
    top = (1 << q.value_bits) - 1
    if spec.kind == MODEL_DT:
        trees = [spec.model]
    elif spec.kind == MODEL_RF:
        trees = list(spec.model.trees)
        if not trees:
            raise ModelError("forest has no trees")
    elif spec.kind == MODEL_SVM:
        trees = []
    else:
        raise ModelError("unknown model kind %r" % spec.kind)

    for t in trees:
        build_tree(t.root_id, t.nodes, t.class_count)
        for nid, n in t.nodes.items():
            if n.is_leaf:
                continue
            if not 0 <= n.feature < q.feature_count:
                raise ModelError(
                    "node %r tests feature %r outside [0, %d)"
                    % (nid, n.feature, q.feature_count)
                )
            if not 0 <= n.threshold <= top:
                raise ModelError(
                    "node %r threshold %r outside [0, %d]" % (nid, n.threshold, top)
                )

    if spec.kind == MODEL_SVM:
        m = spec.model
        if m.scheme not in (SCHEME_ONE_VS_ONE, SCHEME_ONE_VS_REST):
            raise ModelError("unknown svm scheme %r" % m.scheme)
        if not m.hyperplanes:
            raise ModelError("svm has no hyperplanes")
        for h, hp in enumerate(m.hyperplanes):
            if len(hp.weights) != q.feature_count:
                raise ModelError(
                    "hyperplane %d has %d weights, spec says %d"
                    % (h, len(hp.weights), q.feature_count)
                )
        if m.scheme == SCHEME_ONE_VS_ONE:
            want = list(itertools.combinations(range(m.class_count), 2))
            got = [hp.classes for hp in m.hyperplanes]
            if sorted(got) != want or len(got) != len(want):
                raise ModelError(
                    "one_vs_one needs exactly one plane per class pair %s, got %s"
                    % (want, got)
                )
        else:
            if len(m.hyperplanes) != m.class_count:
                raise ModelError(
                    "one_vs_rest needs one plane per class, got %d for %d classes"
                    % (len(m.hyperplanes), m.class_count)
                )
    return spec


# ---------------------------------------------------------------------------
# Exchange format


def model_to_dict(spec):
    doc = {
        "format_version": FORMAT_VERSION,
        "model_type": spec.kind,
        "quantization": {
            "feature_count": spec.quantization.feature_count,
            "value_bits": spec.quantization.value_bits,
            "scale_shift": spec.quantization.scale_shift,
            "acc_bits": spec.quantization.acc_bits,
        },
    }
    if spec.kind == MODEL_DT:
        doc["model"] = _tree_to_dict(spec.model)
        doc["model"]["class_count"] = spec.model.class_count
    elif spec.kind == MODEL_RF:
        doc["model"] = {
            "class_count": spec.model.class_count,
            "trees": [_tree_to_dict(t) for t in spec.model.trees],
        }
    else:
        doc["model"] = {
            "class_count": spec.model.class_count,
            "scheme": spec.model.scheme,
            "hyperplanes": [
                {
                    "weights": list(hp.weights),
                    "bias": hp.bias,
                    "classes": list(hp.classes) if hp.classes else None,
                }
                for hp in spec.model.hyperplanes
            ],
        }
    return doc


def _tree_to_dict(tree):
    nodes = []
    for nid, n in sorted(tree.nodes.items()):
        if n.is_leaf:
            nodes.append({"id": nid, "label": n.label})
        else:
            nodes.append(
                {
                    "id": nid,
                    "feature": n.feature,
                    "threshold": n.threshold,
                    "left": n.left,
                    "right": n.right,
                }
            )
    return {"root": tree.root_id, "nodes": nodes}


def model_from_dict(doc):
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelError("unsupported format_version %r" % version)
    kind = doc.get("model_type")
    try:
        qd = doc["quantization"]
        quant = QuantizationSpec(
            feature_count=qd["feature_count"],
            value_bits=qd.get("value_bits", DEFAULT_VALUE_BITS),
            scale_shift=qd.get("scale_shift", DEFAULT_SCALE_SHIFT),
            acc_bits=qd.get("acc_bits", DEFAULT_ACC_BITS),
        )
        body = doc["model"]
        if kind == MODEL_DT:
            model = _tree_from_dict(body, body["class_count"])
        elif kind == MODEL_RF:
            model = RandomForestModel(
                trees=tuple(
                    _tree_from_dict(td, body["class_count"]) for td in body["trees"]
                ),
                class_count=body["class_count"],
            )
        elif kind == MODEL_SVM:
            model = SvmModel(
                hyperplanes=tuple(
                    Hyperplane(
                        weights=tuple(float(w) for w in hd["weights"]),
                        bias=float(hd["bias"]),
                        classes=tuple(hd["classes"]) if hd.get("classes") else None,
                    )
                    for hd in body["hyperplanes"]
                ),
                scheme=body["scheme"],
                class_count=body["class_count"],
            )
        else:
            raise ModelError("unknown model_type %r" % kind)
    except KeyError as e:
        raise ModelError("missing field %s in model document" % e) from e
    return validate_model(ModelSpec(kind=kind, quantization=quant, model=model))


def _tree_from_dict(body, class_count):
    plain = {}
    for nd in body["nodes"]:
        nid = nd["id"]
        if nid in plain:
            raise ModelError("duplicate node id %r" % nid)
        if "label" in nd:
            plain[nid] = TreeNode(node_id=nid, label=nd["label"])
        else:
            plain[nid] = TreeNode(
                node_id=nid,
                feature=nd["feature"],
                threshold=nd["threshold"],
                left=nd["left"],
                right=nd["right"],
            )
    return build_tree(body["root"], plain, class_count)


def load_model(path):
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelError("not a well-formed model document: %s" % e) from e
    return model_from_dict(doc)


def save_model(spec, path):
    validate_model(spec)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(spec), f, indent=1, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# Dataset files: integer CSV, one row per sample, last column is the label.


def load_dataset_csv(path, name=None):
    features = []
    labels = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.reader(f):
            if not row:
                continue
            try:
                values = [int(c) for c in row]
            except ValueError:
                continue  # header row
            features.append(tuple(values[:-1]))
            labels.append(values[-1])
    if not features:
        raise QuantizationError("dataset file %s has no data rows" % path)
    return Dataset(
        features=tuple(features), labels=tuple(labels), name=name or str(path)
    )


def save_dataset_csv(dataset, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        n = len(dataset.features[0]) if dataset.features else 0
        writer.writerow(["f%d" % i for i in range(n)] + ["label"])
        for row, y in zip(dataset.features, dataset.labels):
            writer.writerow(list(row) + [y])
