"""Convert fitted scikit-learn classifiers into portable model files.

The output is the JSON model exchange format used by the matpipe toolkit
(documented in the repository's FORMATS.md).  This package writes the format
directly and never imports matpipe, so the two sides are coupled only by the
documented schema.

What the exporter owns:
  * estimator introspection (tree arrays, coefficient matrices),
  * min-max scaling of the feature space to [0, 1) over the training split,
  * quantizing split thresholds onto the same integer grid the runtime uses
    for features: q = clamp(floor((x - lo) / (hi - lo) * (2^W - 1))).

SVM weights and biases are rewritten into the scaled domain but kept at full
float precision; fixed-point conversion happens downstream.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.ensemble import RandomForestClassifier
from sklearn.exceptions import NotFittedError
from sklearn.svm import SVC, LinearSVC
from sklearn.tree import DecisionTreeClassifier
from sklearn.utils.validation import check_is_fitted

FORMAT_VERSION = 1
DEFAULT_VALUE_BITS = 16
DEFAULT_SCALE_SHIFT = 16
DEFAULT_ACC_BITS = 32

_LEAF = -1  # sklearn tree arrays mark missing children with -1


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportJob:
    """A fitted estimator plus the training-split feature ranges to scale by.

    mins/maxs must come from the training split (the same vectors used when
    quantizing evaluation data), one entry per feature, max strictly above min.
    """

    estimator: object
    mins: tuple
    maxs: tuple
    value_bits: int = DEFAULT_VALUE_BITS
    scale_shift: int = DEFAULT_SCALE_SHIFT
    acc_bits: int = DEFAULT_ACC_BITS

    def __post_init__(self):
        object.__setattr__(self, "mins", tuple(float(x) for x in self.mins))
        object.__setattr__(self, "maxs", tuple(float(x) for x in self.maxs))
        if len(self.mins) != len(self.maxs):
            raise ExportError("mins and maxs differ in length")
        if not self.mins:
            raise ExportError("need at least one feature range")
        for i, (lo, hi) in enumerate(zip(self.mins, self.maxs)):
            if hi <= lo:
                raise ExportError("feature %d has empty range [%r, %r]" % (i, lo, hi))
        if not 1 <= self.value_bits <= 32:
            raise ExportError("value_bits must be in [1, 32]")
        if self.scale_shift < 0:
            raise ExportError("scale_shift must be >= 0")
        if not 2 <= self.acc_bits <= 64:
            raise ExportError("acc_bits must be in [2, 64]")


def fit_ranges(rows):
    """Per-feature (mins, maxs) over raw training rows."""
    if not rows:
        raise ExportError("cannot fit feature ranges on an empty training split")
    n = len(rows[0])
    mins = [min(float(r[i]) for r in rows) for i in range(n)]
    maxs = [max(float(r[i]) for r in rows) for i in range(n)]
    for i, (lo, hi) in enumerate(zip(mins, maxs)):
        if hi <= lo:
            raise ExportError("feature %d is constant over the training split" % i)
    return tuple(mins), tuple(maxs)


def quantize_threshold(x, lo, hi, value_bits):
    """Raw-unit threshold onto the runtime's integer feature grid."""
    if hi <= lo:
        raise ExportError("empty value range [%r, %r]" % (lo, hi))
    top = (1 << value_bits) - 1
    q = math.floor((x - lo) / (hi - lo) * top)
    return min(max(q, 0), top)


def _ensure_fitted(est):
    try:
        check_is_fitted(est)
    except NotFittedError as e:
        raise ExportError("estimator %s is not fitted" % type(est).__name__) from e


def _check_feature_count(est, job):
    n = getattr(est, "n_features_in_", None)
    if n is not None and n != len(job.mins):
        raise ExportError(
            "estimator was fitted on %d features but %d ranges were given"
            % (n, len(job.mins))
        )


def _tree_nodes(t, job):
    """sklearn tree arrays to exchange-format node records.

    sklearn splits send x <= threshold to the left child, matching the
    exchange format's convention, so only the threshold value changes units.
    Leaf labels are the argmax of the leaf's class counts, which is exactly
    what the estimator's own predict() returns for that leaf (ties resolve to
    the lowest class index on both sides).
    """
    nodes = []
    for i in range(t.node_count):
        if t.children_left[i] == _LEAF:
            nodes.append({"id": int(i), "label": int(np.argmax(t.value[i][0]))})
        else:
            f = int(t.feature[i])
            nodes.append(
                {
                    "id": int(i),
                    "feature": f,
                    "threshold": quantize_threshold(
                        float(t.threshold[i]), job.mins[f], job.maxs[f], job.value_bits
                    ),
                    "left": int(t.children_left[i]),
                    "right": int(t.children_right[i]),
                }
            )
    return {"root": 0, "nodes": nodes}


def _scaled_plane(weights, bias, classes, job):
    """Rewrite w.x + b from raw feature units into the [0, 1) min-max domain.

    With x_i = lo_i + u_i * (hi_i - lo_i) the score is unchanged:
    sum(w_i * (hi_i - lo_i) * u_i) + (b + sum(w_i * lo_i)).
    """
    w = [float(wi) * (hi - lo) for wi, lo, hi in zip(weights, job.mins, job.maxs)]
    b = float(bias) + sum(float(wi) * lo for wi, lo in zip(weights, job.mins))
    return {"weights": w, "bias": b, "classes": list(classes) if classes else None}


def _svm_body(est, job):
    if isinstance(est, SVC) and est.kernel != "linear":
        raise ExportError("only linear-kernel SVMs export; got kernel=%r" % est.kernel)
    class_count = len(est.classes_)
    coef = np.asarray(est.coef_)
    intercept = np.asarray(est.intercept_)
    planes = []
    if class_count == 2:
        # Both SVC and LinearSVC orient the single binary plane so a positive
        # score means the higher class; the exchange format wants non-negative
        # to vote the lower index, so the plane is negated.
        planes.append(_scaled_plane(-coef[0], -intercept[0], (0, 1), job))
        scheme = "one_vs_one"
    elif isinstance(est, SVC):
        # libsvm's pairwise planes come in sorted (i, j) order and already
        # vote the lower index on a non-negative score.
        pairs = [
            (i, j) for i in range(class_count) for j in range(i + 1, class_count)
        ]
        if len(coef) != len(pairs):
            raise ExportError(
                "expected %d pairwise planes, estimator has %d" % (len(pairs), len(coef))
            )
        for k, pair in enumerate(pairs):
            planes.append(_scaled_plane(coef[k], intercept[k], pair, job))
        scheme = "one_vs_one"
    else:
        # LinearSVC: one plane per class; a non-negative score votes that class.
        for h in range(class_count):
            planes.append(_scaled_plane(coef[h], intercept[h], None, job))
        scheme = "one_vs_rest"
    return {"class_count": class_count, "scheme": scheme, "hyperplanes": planes}


def to_document(job):
    """ExportJob to an exchange-format document (a plain JSON-ready dict)."""
    est = job.estimator
    _ensure_fitted(est)
    _check_feature_count(est, job)
    if isinstance(est, RandomForestClassifier):
        kind = "rf"
        body = {
            "class_count": int(est.n_classes_),
            "trees": [_tree_nodes(e.tree_, job) for e in est.estimators_],
        }
    elif isinstance(est, DecisionTreeClassifier):
        kind = "dt"
        body = _tree_nodes(est.tree_, job)
        body["class_count"] = int(est.n_classes_)
    elif isinstance(est, (SVC, LinearSVC)):
        kind = "svm"
        body = _svm_body(est, job)
    else:
        raise ExportError("unsupported estimator type %s" % type(est).__name__)
    return {
        "format_version": FORMAT_VERSION,
        "model_type": kind,
        "quantization": {
            "feature_count": len(job.mins),
            "value_bits": job.value_bits,
            "scale_shift": job.scale_shift,
            "acc_bits": job.acc_bits,
        },
        "model": body,
    }


def export_model(job, out):
    """Write the job's exchange-format file; returns the document."""
    doc = to_document(job)
    with open(out, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")
    return doc
