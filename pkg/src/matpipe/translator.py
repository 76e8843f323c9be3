"""Compile models into match-action table programs.

Decision trees become one pipeline stage per tree layer.  A layer stage holds
two ternary tables split by tested-feature index (below half goes to table 0,
which owns feature register f0; the rest to table 1 owning f1).  Two code
registers alternate roles: even layers match code_0 and write code_1, odd
layers do the reverse.  A node at depth d carries the path code 1 followed by
its d branch bits (root is 1); stepping to an internal child writes
(parent_code << 1) | branch_bit and loads the child's tested feature, while
stepping to a leaf writes a marker with the top code bit set, which no later
layer entry can match, so the packet coasts to the exact-match predict stage.
The predict stage recognizes each leaf by the frozen register pair (marker in
the register written at the leaf's depth, parent path code in the other).

Forests lay their trees out sequentially; each tree's predict action records
the tree's class in its own result slot and re-arms the code registers and
root feature for the next tree, and a final voting stage exact-matches the
tuple of result slots.  SVMs get one exact-match product table per
(hyperplane, feature) pair, grouped a few to a stage with all of one
hyperplane's stages tagged for same-device placement, plus a final stage that
exact-matches the pattern of accumulator sign bits.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .model_ir import (
    DEFAULT_SVM_INDEX_BITS,
    MODEL_DT,
    MODEL_RF,
    MODEL_SVM,
    QuantizationSpec,
    fixed_point_bias,
    fixed_point_product,
    majority_vote,
    svm_vote,
    validate_model,
)
from .packet import RESULT_SLOT_BITS, PacketLayout
from .ternary import TernaryKey, range_to_ternary, wildcard

DEFAULT_CODE_BITS = 34
DEFAULT_TREE_SLOT_BUDGET = 4
DEFAULT_HYPERPLANE_BUDGET = 4
DEFAULT_SVM_BLOCK_SLOTS = 4

KIND_DT_LAYER = "dt_layer"
KIND_DT_PREDICT = "dt_predict"
KIND_VOTING = "multitree_voting"
KIND_SVM_MUL = "svm_mul"
KIND_SVM_PREDICT = "svm_predict"

RESOURCE_TCAM = "tcam"
RESOURCE_SRAM = "sram"

PRIORITY_RANGE = 2
PRIORITY_FALLBACK = 1

ENTRIES_FORMAT_VERSION = 1


class TranslateError(ValueError):
    """Model cannot be expressed under the given translation config."""


def kind_resource(kind):
    return RESOURCE_TCAM if kind == KIND_DT_LAYER else RESOURCE_SRAM


@dataclass(frozen=True)
class TranslateConfig:
    code_bits: int = DEFAULT_CODE_BITS
    tree_slot_budget: int = DEFAULT_TREE_SLOT_BUDGET
    hyperplane_budget: int = DEFAULT_HYPERPLANE_BUDGET
    mul_index_bits: int = DEFAULT_SVM_INDEX_BITS
    svm_block_slots: int = DEFAULT_SVM_BLOCK_SLOTS

    def __post_init__(self):
        if self.code_bits < 3:
            raise TranslateError("code_bits must be at least 3")
        if min(self.tree_slot_budget, self.hyperplane_budget, self.svm_block_slots) < 1:
            raise TranslateError("budgets must be positive")
        if self.mul_index_bits < 1:
            raise TranslateError("mul_index_bits must be positive")


@dataclass(frozen=True)
class Action:
    kind: str
    target: str | None = None  # write_code: "code_0" or "code_1"
    code: int | None = None
    loads: tuple[tuple[str, int], ...] = ()  # (feature register, feature index)
    tree_slot: int | None = None
    label: int | None = None
    reset: tuple[int, int] | None = None  # re-arm (code_0, code_1) after a predict
    hyperplane: int | None = None
    product: int | None = None

    @classmethod
    def write_code(cls, target, code, loads=()):
        return cls(kind="write_code", target=target, code=code, loads=tuple(loads))

    @classmethod
    def set_dt_result(cls, tree_slot, label, reset=None, loads=()):
        return cls(
            kind="set_dt_result",
            tree_slot=tree_slot,
            label=label,
            reset=reset,
            loads=tuple(loads),
        )

    @classmethod
    def set_vote(cls, label):
        return cls(kind="set_vote", label=label)

    @classmethod
    def add_product(cls, hyperplane, product):
        return cls(kind="add_product", hyperplane=hyperplane, product=product)

    @classmethod
    def set_svm_result(cls, label):
        return cls(kind="set_svm_result", label=label)

    def to_json(self):
        out = {"kind": self.kind}
        if self.target is not None:
            out["target"] = self.target
        if self.code is not None:
            out["code"] = self.code
        if self.loads:
            out["loads"] = [list(l) for l in self.loads]
        if self.tree_slot is not None:
            out["tree_slot"] = self.tree_slot
        if self.label is not None:
            out["label"] = self.label
        if self.reset is not None:
            out["reset"] = list(self.reset)
        if self.hyperplane is not None:
            out["hyperplane"] = self.hyperplane
        if self.product is not None:
            out["product"] = self.product
        return out

    @classmethod
    def from_json(cls, obj):
        return cls(
            kind=obj["kind"],
            target=obj.get("target"),
            code=obj.get("code"),
            loads=tuple((r, i) for r, i in obj.get("loads", [])),
            tree_slot=obj.get("tree_slot"),
            label=obj.get("label"),
            reset=tuple(obj["reset"]) if obj.get("reset") else None,
            hyperplane=obj.get("hyperplane"),
            product=obj.get("product"),
        )


@dataclass(frozen=True)
class TableEntry:
    keys: tuple[tuple[str, int | TernaryKey], ...]
    priority: int
    action: Action


@dataclass
class ProgramTable:
    kind: str
    slot: int
    entries: list[TableEntry] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def resource(self):
        return kind_resource(self.kind)


@dataclass
class ProgramStage:
    index: int
    tables: list[ProgramTable] = field(default_factory=list)
    group: int | None = None  # same-device placement group (SVM hyperplane)


@dataclass(frozen=True)
class InitSpec:
    """Register state armed by the first device for a fresh request."""

    code_0: int = 0
    code_1: int = 0
    loads: tuple[tuple[str, int], ...] = ()
    acc_init: tuple[int, ...] = ()


@dataclass(frozen=True)
class ProgramMeta:
    mid: int
    vid: int
    kind: str
    class_count: int
    quantization: QuantizationSpec
    code_bits: int = 0
    tree_slots: int = 0
    hyperplanes: int = 0
    mul_index_bits: int = 0
    feature_boundary: int = 0
    root_features: tuple[int | None, ...] = ()

    def layout(self):
        return PacketLayout(
            kind=self.kind,
            feature_count=self.quantization.feature_count,
            value_bits=self.quantization.value_bits,
            code_bits=self.code_bits,
            acc_bits=self.quantization.acc_bits,
            tree_slots=self.tree_slots,
            hyperplanes=self.hyperplanes,
        )


@dataclass
class TableProgram:
    meta: ProgramMeta
    init: InitSpec
    stages: list[ProgramStage]

    @property
    def stage_count(self):
        return len(self.stages)

    def final_stage_index(self):
        return len(self.stages) - 1


# ---------------------------------------------------------------------------
# Status codes


def path_code_root():
    return 1


def child_code(parent_code, branch_bit):
    return (parent_code << 1) | branch_bit


def leaf_marker(leaf_id, code_bits):
    if leaf_id >= 1 << (code_bits - 1):
        raise TranslateError(
            "leaf id %d does not fit below the marker bit of %d code bits"
            % (leaf_id, code_bits)
        )
    return (1 << (code_bits - 1)) | leaf_id


def feature_register(feature_index, boundary):
    return "f0" if feature_index < boundary else "f1"


def feature_table_slot(feature_index, boundary):
    return 0 if feature_index < boundary else 1


def feature_boundary(feature_count):
    """Tested feature indices strictly below this go to table/register 0."""
    return (feature_count + 1) // 2


# ---------------------------------------------------------------------------
# Decision trees


def _tree_codes_and_leaves(tree, code_bits):
    """Path code per node plus dense leaf ids in node-id order."""
    depth = tree.depth
    if depth > code_bits - 2:
        raise TranslateError(
            "tree depth %d exceeds the maximum of %d for %d code bits"
            % (depth, code_bits - 2, code_bits)
        )
    codes = {tree.root_id: path_code_root()}
    stack = [tree.root_id]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if node.is_leaf:
            continue
        codes[node.left] = child_code(codes[nid], 0)
        codes[node.right] = child_code(codes[nid], 1)
        stack.extend((node.left, node.right))
    leaf_ids = {n.node_id: i for i, n in enumerate(tree.leaves())}
    return codes, leaf_ids


def _step_action(tree, child_id, codes, leaf_ids, boundary, code_bits, layer):
    """Action for taking the edge into child_id from a depth-`layer` node."""
    target = "code_1" if layer % 2 == 0 else "code_0"
    child = tree.nodes[child_id]
    if child.is_leaf:
        return Action.write_code(target, leaf_marker(leaf_ids[child_id], code_bits))
    return Action.write_code(
        target,
        codes[child_id],
        loads=((feature_register(child.feature, boundary), child.feature),),
    )


def _predict_keys(tree, leaf, codes, leaf_ids, code_bits):
    """Frozen (code_0, code_1) register pair identifying a leaf."""
    d = leaf.depth
    if d == 0:
        return (("code_0", path_code_root()), ("code_1", 0))
    marker = leaf_marker(leaf_ids[leaf.node_id], code_bits)
    parent_code = codes[leaf.node_id] >> 1
    if d % 2 == 0:
        return (("code_0", marker), ("code_1", parent_code))
    return (("code_0", parent_code), ("code_1", marker))


def _tree_layer_stages(tree, quant, cfg, stage_base):
    """One two-table ternary stage per tree layer."""
    boundary = feature_boundary(quant.feature_count)
    codes, leaf_ids = _tree_codes_and_leaves(tree, cfg.code_bits)
    top = (1 << quant.value_bits) - 1
    stages = []
    for layer in range(tree.depth):
        tables = [
            ProgramTable(kind=KIND_DT_LAYER, slot=0),
            ProgramTable(kind=KIND_DT_LAYER, slot=1),
        ]
        code_field = "code_0" if layer % 2 == 0 else "code_1"
        for node in tree.internal_at_depth(layer):
            slot = feature_table_slot(node.feature, boundary)
            feat_field = "f0" if slot == 0 else "f1"
            t = node.threshold
            left_size = t + 1
            right_size = top - t
            left_action = _step_action(
                tree, node.left, codes, leaf_ids, boundary, cfg.code_bits, layer
            )
            right_action = _step_action(
                tree, node.right, codes, leaf_ids, boundary, cfg.code_bits, layer
            )
            if left_size <= right_size:
                lo, hi = 0, t
                range_action, fallback_action = left_action, right_action
            else:
                lo, hi = t + 1, top
                range_action, fallback_action = right_action, left_action
            for key in range_to_ternary(lo, hi, quant.value_bits):
                tables[slot].entries.append(
                    TableEntry(
                        keys=((feat_field, key), (code_field, codes[node.node_id])),
                        priority=PRIORITY_RANGE,
                        action=range_action,
                    )
                )
            tables[slot].entries.append(
                TableEntry(
                    keys=(
                        (feat_field, wildcard(quant.value_bits)),
                        (code_field, codes[node.node_id]),
                    ),
                    priority=PRIORITY_FALLBACK,
                    action=fallback_action,
                )
            )
        stages.append(ProgramStage(index=stage_base + layer, tables=tables))
    return stages, codes, leaf_ids


def _tree_predict_stage(tree, cfg, stage_index, tree_slot, codes, leaf_ids, next_init):
    """Exact-match stage mapping frozen register pairs to the tree's class.

    next_init is None for the last (or only) tree; otherwise the (register,
    feature) load that re-arms the pipeline for the next tree in sequence.
    """
    table = ProgramTable(kind=KIND_DT_PREDICT, slot=0, meta={"tree_slot": tree_slot})
    for leaf in tree.leaves():
        reset = None
        loads = ()
        if next_init is not None:
            reset = (path_code_root(), 0)
            loads = next_init
        table.entries.append(
            TableEntry(
                keys=_predict_keys(tree, leaf, codes, leaf_ids, cfg.code_bits),
                priority=0,
                action=Action.set_dt_result(
                    tree_slot, leaf.label, reset=reset, loads=loads
                ),
            )
        )
    return ProgramStage(index=stage_index, tables=[table])


def _root_loads(tree, boundary):
    root = tree.nodes[tree.root_id]
    if root.is_leaf:
        return ()
    return ((feature_register(root.feature, boundary), root.feature),)


def _check_class_count(class_count):
    if class_count > 1 << RESULT_SLOT_BITS:
        raise TranslateError(
            "class_count %d does not fit %d-bit result slots"
            % (class_count, RESULT_SLOT_BITS)
        )


def translate_dt(spec, cfg=None, mid=1, vid=1):
    cfg = cfg or TranslateConfig()
    validate_model(spec)
    _check_class_count(spec.model.class_count)
    tree = spec.model
    boundary = feature_boundary(spec.quantization.feature_count)
    stages, codes, leaf_ids = _tree_layer_stages(tree, spec.quantization, cfg, 0)
    stages.append(
        _tree_predict_stage(tree, cfg, len(stages), 0, codes, leaf_ids, None)
    )
    meta = ProgramMeta(
        mid=mid,
        vid=vid,
        kind=MODEL_DT,
        class_count=tree.class_count,
        quantization=spec.quantization,
        code_bits=cfg.code_bits,
        tree_slots=1,
        feature_boundary=boundary,
        root_features=(_root_feature(tree),),
    )
    init = InitSpec(code_0=path_code_root(), code_1=0, loads=_root_loads(tree, boundary))
    return TableProgram(meta=meta, init=init, stages=stages)


def _root_feature(tree):
    root = tree.nodes[tree.root_id]
    return None if root.is_leaf else root.feature


def translate_rf(spec, cfg=None, mid=1, vid=1):
    cfg = cfg or TranslateConfig()
    validate_model(spec)
    _check_class_count(spec.model.class_count)
    forest = spec.model
    n = len(forest.trees)
    if n > cfg.tree_slot_budget:
        raise TranslateError(
            "forest has %d trees, budget is %d result slots" % (n, cfg.tree_slot_budget)
        )
    boundary = feature_boundary(spec.quantization.feature_count)
    stages = []
    for t, tree in enumerate(forest.trees):
        layer_stages, codes, leaf_ids = _tree_layer_stages(
            tree, spec.quantization, cfg, len(stages)
        )
        stages.extend(layer_stages)
        next_init = None
        if t + 1 < n:
            next_init = _root_loads(forest.trees[t + 1], boundary)
        stages.append(
            _tree_predict_stage(
                tree, cfg, len(stages), t, codes, leaf_ids, next_init
            )
        )
    voting = ProgramTable(kind=KIND_VOTING, slot=0)
    for combo in itertools.product(range(forest.class_count), repeat=n):
        voting.entries.append(
            TableEntry(
                keys=tuple(("slot%d" % t, c) for t, c in enumerate(combo)),
                priority=0,
                action=Action.set_vote(majority_vote(combo, forest.class_count)),
            )
        )
    stages.append(ProgramStage(index=len(stages), tables=[voting]))
    meta = ProgramMeta(
        mid=mid,
        vid=vid,
        kind=MODEL_RF,
        class_count=forest.class_count,
        quantization=spec.quantization,
        code_bits=cfg.code_bits,
        tree_slots=n,
        feature_boundary=boundary,
        root_features=tuple(_root_feature(t) for t in forest.trees),
    )
    init = InitSpec(
        code_0=path_code_root(), code_1=0, loads=_root_loads(forest.trees[0], boundary)
    )
    return TableProgram(meta=meta, init=init, stages=stages)


# ---------------------------------------------------------------------------
# SVM


def translate_svm(spec, cfg=None, mid=1, vid=1):
    cfg = cfg or TranslateConfig()
    validate_model(spec)
    _check_class_count(spec.model.class_count)
    model = spec.model
    quant = spec.quantization
    h_count = len(model.hyperplanes)
    if h_count > cfg.hyperplane_budget:
        raise TranslateError(
            "svm has %d hyperplanes, budget is %d" % (h_count, cfg.hyperplane_budget)
        )
    index_bits = min(quant.value_bits, cfg.mul_index_bits)
    half = 1 << (quant.acc_bits - 1)
    stages = []
    acc_init = []
    for h, hp in enumerate(model.hyperplanes):
        bias_fp = fixed_point_bias(hp.bias, quant.scale_shift)
        if not -half <= bias_fp < half:
            raise TranslateError(
                "hyperplane %d bias overflows the %d-bit accumulator"
                % (h, quant.acc_bits)
            )
        acc_init.append(bias_fp)
        lo = hi = bias_fp
        tables = []
        for i, w in enumerate(hp.weights):
            entries = []
            for m in range(1 << index_bits):
                p = fixed_point_product(w, m, index_bits, quant.scale_shift)
                entries.append(
                    TableEntry(
                        keys=(("feat%d" % i, m),),
                        priority=0,
                        action=Action.add_product(h, p),
                    )
                )
            p_last = fixed_point_product(
                w, (1 << index_bits) - 1, index_bits, quant.scale_shift
            )
            lo += min(0, p_last)
            hi += max(0, p_last)
            if lo < -half or hi >= half:
                raise TranslateError(
                    "accumulator overflow for hyperplane %d at feature %d: "
                    "partial sums reach [%d, %d] outside the %d-bit range"
                    % (h, i, lo, hi, quant.acc_bits)
                )
            tables.append(
                ProgramTable(
                    kind=KIND_SVM_MUL,
                    slot=len(tables) % cfg.svm_block_slots,
                    entries=entries,
                    meta={"hyperplane": h, "feature_index": i},
                )
            )
        for chunk_start in range(0, len(tables), cfg.svm_block_slots):
            chunk = tables[chunk_start : chunk_start + cfg.svm_block_slots]
            for slot, tbl in enumerate(chunk):
                tbl.slot = slot
            stages.append(
                ProgramStage(index=len(stages), tables=list(chunk), group=h)
            )
    predict = ProgramTable(kind=KIND_SVM_PREDICT, slot=0)
    for pattern in range(1 << h_count):
        signs = [(pattern >> h) & 1 for h in range(h_count)]
        predict.entries.append(
            TableEntry(
                keys=(("sign_pattern", pattern),),
                priority=0,
                action=Action.set_svm_result(svm_vote(model, signs)),
            )
        )
    stages.append(ProgramStage(index=len(stages), tables=[predict]))
    meta = ProgramMeta(
        mid=mid,
        vid=vid,
        kind=MODEL_SVM,
        class_count=model.class_count,
        quantization=quant,
        hyperplanes=h_count,
        mul_index_bits=index_bits,
    )
    init = InitSpec(acc_init=tuple(acc_init))
    return TableProgram(meta=meta, init=init, stages=stages)


def translate(spec, cfg=None, mid=1, vid=1):
    if spec.kind == MODEL_DT:
        return translate_dt(spec, cfg, mid, vid)
    if spec.kind == MODEL_RF:
        return translate_rf(spec, cfg, mid, vid)
    if spec.kind == MODEL_SVM:
        return translate_svm(spec, cfg, mid, vid)
    raise TranslateError("unknown model kind %r" % spec.kind)


# ---------------------------------------------------------------------------
# Resource accounting


def count_resources(program):
    """Entry totals per stage and table, plus the headline stage usage.

    For forests the headline is the mean per-tree depth (layer stages only);
    for a single tree it is the tree depth.
    """
    per_stage = []
    tcam_total = 0
    sram_total = 0
    for stage in program.stages:
        tables = []
        tcam = sram = 0
        for tbl in stage.tables:
            n = len(tbl.entries)
            tables.append(
                {"kind": tbl.kind, "slot": tbl.slot, "entries": n, "resource": tbl.resource}
            )
            if tbl.resource == RESOURCE_TCAM:
                tcam += n
            else:
                sram += n
        per_stage.append(
            {"stage": stage.index, "group": stage.group, "tables": tables,
             "tcam": tcam, "sram": sram}
        )
        tcam_total += tcam
        sram_total += sram
    report = {
        "kind": program.meta.kind,
        "stages_total": len(program.stages),
        "tcam_total": tcam_total,
        "sram_total": sram_total,
        "per_stage": per_stage,
    }
    if program.meta.kind in (MODEL_DT, MODEL_RF):
        depths = _per_tree_layer_counts(program)
        report["tree_stage_usage"] = depths
        report["avg_tree_stage_usage"] = sum(depths) / len(depths)
    return report


def _per_tree_layer_counts(program):
    counts = []
    run = 0
    for stage in program.stages:
        kinds = {t.kind for t in stage.tables}
        if KIND_DT_LAYER in kinds:
            run += 1
        elif KIND_DT_PREDICT in kinds:
            counts.append(run)
            run = 0
    return counts


# ---------------------------------------------------------------------------
# Entries file: JSON lines, one record per entry, plus header and init records.
# This is both the translator's output and the simulator's install format.


def _key_to_json(field_name, key):
    if isinstance(key, TernaryKey):
        return [field_name, key.to_json()]
    return [field_name, key]


def _key_from_json(obj):
    field_name, key = obj
    if isinstance(key, dict):
        return (field_name, TernaryKey.from_json(key))
    return (field_name, key)


def meta_to_json(meta):
    return {
        "mid": meta.mid,
        "vid": meta.vid,
        "kind": meta.kind,
        "class_count": meta.class_count,
        "quantization": {
            "feature_count": meta.quantization.feature_count,
            "value_bits": meta.quantization.value_bits,
            "scale_shift": meta.quantization.scale_shift,
            "acc_bits": meta.quantization.acc_bits,
        },
        "code_bits": meta.code_bits,
        "tree_slots": meta.tree_slots,
        "hyperplanes": meta.hyperplanes,
        "mul_index_bits": meta.mul_index_bits,
        "feature_boundary": meta.feature_boundary,
        "root_features": list(meta.root_features),
    }


def meta_from_json(obj):
    q = obj["quantization"]
    return ProgramMeta(
        mid=obj["mid"],
        vid=obj["vid"],
        kind=obj["kind"],
        class_count=obj["class_count"],
        quantization=QuantizationSpec(
            feature_count=q["feature_count"],
            value_bits=q["value_bits"],
            scale_shift=q["scale_shift"],
            acc_bits=q["acc_bits"],
        ),
        code_bits=obj["code_bits"],
        tree_slots=obj["tree_slots"],
        hyperplanes=obj["hyperplanes"],
        mul_index_bits=obj["mul_index_bits"],
        feature_boundary=obj["feature_boundary"],
        root_features=tuple(obj["root_features"]),
    )


def write_entries_file(program, path):
    with open(path, "w", encoding="utf-8") as f:
        header = {
            "record": "header",
            "format_version": ENTRIES_FORMAT_VERSION,
            "meta": meta_to_json(program.meta),
            "stage_groups": [s.group for s in program.stages],
            "tables": [
                {"stage": s.index, "kind": t.kind, "slot": t.slot, "meta": t.meta}
                for s in program.stages
                for t in s.tables
            ],
        }
        f.write(json.dumps(header) + "\n")
        init = {
            "record": "init",
            "code_0": program.init.code_0,
            "code_1": program.init.code_1,
            "loads": [list(l) for l in program.init.loads],
            "acc_init": list(program.init.acc_init),
        }
        f.write(json.dumps(init) + "\n")
        for stage in program.stages:
            for tbl in stage.tables:
                for e in tbl.entries:
                    rec = {
                        "record": "entry",
                        "stage": stage.index,
                        "kind": tbl.kind,
                        "slot": tbl.slot,
                        "priority": e.priority,
                        "keys": [_key_to_json(n, k) for n, k in e.keys],
                        "action": e.action.to_json(),
                    }
                    f.write(json.dumps(rec) + "\n")


def read_entries_file(path):
    meta = None
    init = None
    stages = {}
    tables = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise TranslateError("entries line %d is not JSON: %s" % (line_no, e))
            kind = rec.get("record")
            try:
                if kind == "header":
                    if rec.get("format_version") != ENTRIES_FORMAT_VERSION:
                        raise TranslateError(
                            "unsupported entries format_version %r"
                            % rec.get("format_version")
                        )
                    meta = meta_from_json(rec["meta"])
                    for i, group in enumerate(rec["stage_groups"]):
                        stages[i] = ProgramStage(index=i, group=group)
                    for t in rec["tables"]:
                        tbl = ProgramTable(
                            kind=t["kind"], slot=t["slot"], meta=t.get("meta", {})
                        )
                        tables[(t["stage"], t["kind"], t["slot"])] = tbl
                        stages[t["stage"]].tables.append(tbl)
                elif kind == "init":
                    init = InitSpec(
                        code_0=rec["code_0"],
                        code_1=rec["code_1"],
                        loads=tuple((r, i) for r, i in rec["loads"]),
                        acc_init=tuple(rec["acc_init"]),
                    )
                elif kind == "entry":
                    key = (rec["stage"], rec["kind"], rec["slot"])
                    if key not in tables:
                        raise TranslateError(
                            "entries line %d references undeclared table %r"
                            % (line_no, key)
                        )
                    tables[key].entries.append(
                        TableEntry(
                            keys=tuple(_key_from_json(k) for k in rec["keys"]),
                            priority=rec["priority"],
                            action=Action.from_json(rec["action"]),
                        )
                    )
                else:
                    raise TranslateError(
                        "entries line %d has unknown record %r" % (line_no, kind)
                    )
            except TranslateError:
                raise
            except (KeyError, TypeError, ValueError) as e:
                raise TranslateError(
                    "entries line %d is malformed: %r" % (line_no, e)
                )
    if meta is None or init is None:
        raise TranslateError("entries file lacks header or init record")
    return TableProgram(
        meta=meta, init=init, stages=[stages[i] for i in sorted(stages)]
    )
