#!/usr/bin/env python3
"""Forests chain trees with a voting table; SVMs accumulate sign bits.

Both land on the same virtual pipeline: the forest re-arms the decision-path
registers between trees and tallies per-tree results at the end, the SVM
adds fixed-point products per hyperplane and looks the sign pattern up.
"""

from matpipe import model_ir as mir
from matpipe import orchestrator as orch
from matpipe import topology as topo
from matpipe import translator as trn

from workload_helpers import labeled_dataset, random_rows

# --- A 3-tree forest over two 4-bit features -------------------------------


def stump(feature, threshold, lo_label, hi_label):
    return mir.build_tree(
        0,
        {
            0: mir.TreeNode(0, feature=feature, threshold=threshold, left=1, right=2),
            1: mir.TreeNode(1, label=lo_label),
            2: mir.TreeNode(2, label=hi_label),
        },
        2,
    )


forest = mir.ModelSpec(
    kind=mir.MODEL_RF,
    quantization=mir.QuantizationSpec(feature_count=2, value_bits=4),
    model=mir.RandomForestModel(
        trees=(stump(0, 6, 0, 1), stump(1, 9, 0, 1), stump(0, 12, 1, 0)),
        class_count=2,
    ),
)
mir.validate_model(forest)

program = trn.translate(forest)
kinds = [(s.index, s.tables[0].kind) for s in program.stages]
print("forest program stages: %s" % kinds)
voting = program.stages[-1].tables[0]
print("voting table: %d entries (= class_count ^ n_trees = 2^3)" % len(voting.entries))

net = topo.custom_network(
    [topo.DeviceInfo("sw0", stage_count=12)],
    [],
    {"a": "sw0", "b": "sw0"},
)
rows = random_rows(seed=44, count=200, feature_count=2, value_bits=4)
report = orch.run_pipeline(forest, net, labeled_dataset(forest, rows))
print("forest kappa vs oracle: %.3f" % report.metrics["kappa_vs_oracle"])

# --- A 3-class one-vs-one SVM over two 4-bit features ----------------------

svm = mir.ModelSpec(
    kind=mir.MODEL_SVM,
    quantization=mir.QuantizationSpec(feature_count=2, value_bits=4),
    model=mir.SvmModel(
        hyperplanes=(
            mir.Hyperplane(weights=(2.0, -1.0), bias=-0.25, classes=(0, 1)),
            mir.Hyperplane(weights=(-1.0, 1.5), bias=-0.125, classes=(0, 2)),
            mir.Hyperplane(weights=(1.0, 1.0), bias=-1.25, classes=(1, 2)),
        ),
        scheme=mir.SCHEME_ONE_VS_ONE,
        class_count=3,
    ),
)
mir.validate_model(svm)

program = trn.translate(svm)
print("svm program stages: %s" % [(s.index, s.tables[0].kind, s.group) for s in program.stages])
print("accumulator init (fixed-point biases): %s" % (program.init.acc_init,))

rows = random_rows(seed=45, count=200, feature_count=2, value_bits=4)
report = orch.run_pipeline(svm, net, labeled_dataset(svm, rows))
print("svm kappa vs oracle: %.3f" % report.metrics["kappa_vs_oracle"])
print("deployed on %s, %d stages used" % (
    report.plan.last_device, len(report.plan.placements)))
