#!/usr/bin/env python3
"""Translate a small decision tree into match-action table entries.

Builds a depth-2 tree by hand, compiles it, and walks through what came out:
one ternary stage per tree layer plus one exact-match predict stage.
"""

import tempfile
from pathlib import Path

from matpipe import model_ir as mir
from matpipe import translator as trn

# A 3-class tree over two 4-bit features:
#   root: f0 <= 9 ?  yes -> f1 <= 3 ?  yes -> class 0, no -> class 1
#                    no  -> f1 <= 12 ? yes -> class 2, no -> class 0
tree = mir.build_tree(
    0,
    {
        0: mir.TreeNode(0, feature=0, threshold=9, left=1, right=2),
        1: mir.TreeNode(1, feature=1, threshold=3, left=3, right=4),
        2: mir.TreeNode(2, feature=1, threshold=12, left=5, right=6),
        3: mir.TreeNode(3, label=0),
        4: mir.TreeNode(4, label=1),
        5: mir.TreeNode(5, label=2),
        6: mir.TreeNode(6, label=0),
    },
    class_count=3,
)
spec = mir.ModelSpec(
    kind=mir.MODEL_DT,
    quantization=mir.QuantizationSpec(feature_count=2, value_bits=4),
    model=tree,
)
mir.validate_model(spec)

program = trn.translate(spec, mid=1, vid=1)
print("stages: %d (tree depth %d + 1 predict stage)" % (program.stage_count, tree.depth))

for stage in program.stages:
    for table in stage.tables:
        if not table.entries:
            continue
        print("stage %d %s[%d]: %d entries" % (stage.index, table.kind, table.slot, len(table.entries)))
        for e in table.entries[:4]:
            keys = ", ".join(
                "%s=%s" % (name, "0x%x/0x%x" % (k.value, k.mask) if hasattr(k, "mask") else k)
                for name, k in e.keys
            )
            print("  p%d  %s  -> %s" % (e.priority, keys, e.action.kind))

# Every range [lo, hi] becomes a small prefix cover plus one wildcard
# fallback that fires the opposite branch.
report = trn.count_resources(program)
print("totals: %d TCAM entries, %d SRAM entries" % (report["tcam_total"], report["sram_total"]))
print("per stage: %s" % report["per_stage"])

out = Path(tempfile.mkdtemp(prefix="demo01_")) / "entries.jsonl"
trn.write_entries_file(program, out)
again = trn.read_entries_file(out)
assert trn.count_resources(again) == report
print("entries file round-trips: %s" % out)
