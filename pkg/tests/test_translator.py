import itertools
import random

import pytest

from matpipe import model_ir as mir
from matpipe import translator as tr
from matpipe.ternary import TernaryKey, range_to_ternary


def leaf(nid, label):
    return mir.TreeNode(node_id=nid, label=label)


def split(nid, feature, threshold, left, right):
    return mir.TreeNode(
        node_id=nid, feature=feature, threshold=threshold, left=left, right=right
    )


def stump_spec(threshold=5, value_bits=4, feature_count=1):
    tree = mir.build_tree(
        0, {0: split(0, 0, threshold, 1, 2), 1: leaf(1, 0), 2: leaf(2, 1)}, 2
    )
    quant = mir.QuantizationSpec(feature_count=feature_count, value_bits=value_bits)
    return mir.ModelSpec(mir.MODEL_DT, quant, tree)


MARKER = 1 << 33  # top bit of the default 34-bit code space


def test_stump_layer_tables_and_counts():
    program = tr.translate_dt(stump_spec())
    assert program.stage_count == 2
    layer, predict = program.stages
    t0, t1 = layer.tables
    assert (t0.kind, t1.kind) == (tr.KIND_DT_LAYER, tr.KIND_DT_LAYER)
    # Left side [0,5] is smaller: two prefix entries, then one wildcard fallback.
    assert len(t0.entries) == 3
    assert len(t1.entries) == 0
    e_range = [e for e in t0.entries if e.priority == tr.PRIORITY_RANGE]
    e_fall = [e for e in t0.entries if e.priority == tr.PRIORITY_FALLBACK]
    assert len(e_range) == 2 and len(e_fall) == 1
    for e in e_range:
        assert e.keys[1] == ("code_0", 1)
        assert e.action.kind == "write_code"
        assert e.action.target == "code_1"
        assert e.action.code == MARKER | 0  # leaf id 0 (left leaf, lower node id)
    assert e_fall[0].keys[0][1].mask == 0
    assert e_fall[0].action.code == MARKER | 1
    # Predict stage knows both leaves by their frozen register pair.
    (pt,) = predict.tables
    assert pt.kind == tr.KIND_DT_PREDICT
    pairs = {e.keys: e.action.label for e in pt.entries}
    assert pairs == {
        (("code_0", 1), ("code_1", MARKER | 0)): 0,
        (("code_0", 1), ("code_1", MARKER | 1)): 1,
    }
    report = tr.count_resources(program)
    assert report["tcam_total"] == 3
    assert report["sram_total"] == 2
    assert report["tree_stage_usage"] == [1]


def test_stump_range_side_flips_when_right_smaller():
    program = tr.translate_dt(stump_spec(threshold=12))
    t0 = program.stages[0].tables[0]
    e_range = [e for e in t0.entries if e.priority == tr.PRIORITY_RANGE]
    # Right side [13,15] is smaller; its entries step to the right child.
    assert len(e_range) == len(range_to_ternary(13, 15, 4)) == 2
    assert all(e.action.code == MARKER | 1 for e in e_range)
    fall = [e for e in t0.entries if e.priority == tr.PRIORITY_FALLBACK][0]
    assert fall.action.code == MARKER | 0


def test_single_leaf_tree_predicts_on_initial_registers():
    tree = mir.build_tree(0, {0: leaf(0, 2)}, class_count=3)
    spec = mir.ModelSpec(
        mir.MODEL_DT, mir.QuantizationSpec(feature_count=1, value_bits=4), tree
    )
    program = tr.translate_dt(spec)
    assert program.stage_count == 1
    (pt,) = program.stages[0].tables
    (entry,) = pt.entries
    assert entry.keys == (("code_0", 1), ("code_1", 0))
    assert entry.action.label == 2
    assert tr.count_resources(program)["tree_stage_usage"] == [0]


def test_feature_halves_pick_tables_and_registers():
    # F=4: features 0,1 go to table 0 / f0; features 2,3 to table 1 / f1.
    tree = mir.build_tree(
        0,
        {
            0: split(0, 1, 7, 1, 2),
            1: split(1, 3, 4, 3, 4),
            2: leaf(2, 1),
            3: leaf(3, 0),
            4: leaf(4, 1),
        },
        2,
    )
    quant = mir.QuantizationSpec(feature_count=4, value_bits=4)
    program = tr.translate_dt(mir.ModelSpec(mir.MODEL_DT, quant, tree))
    layer0, layer1, predict = program.stages
    assert len(layer0.tables[0].entries) > 0  # feature 1 -> table 0
    assert len(layer0.tables[1].entries) == 0
    assert len(layer1.tables[0].entries) == 0
    assert len(layer1.tables[1].entries) > 0  # feature 3 -> table 1
    assert all(e.keys[0][0] == "f0" for e in layer0.tables[0].entries)
    assert all(e.keys[0][0] == "f1" for e in layer1.tables[1].entries)
    # Stepping into node 1 (feature 3, upper half) loads f1.
    into_node1 = [
        e for e in layer0.tables[0].entries if e.action.code == (1 << 1) | 0
    ]
    assert into_node1 and all(e.action.loads == (("f1", 3),) for e in into_node1)
    # Layer 1 matches code_1 and writes code_0.
    assert all(e.keys[1][0] == "code_1" for e in layer1.tables[1].entries)
    assert all(e.action.target == "code_0" for e in layer1.tables[1].entries)


def test_depth_limit_enforced_by_code_bits():
    nodes = {}
    for d in range(3):
        nodes[d] = split(d, 0, 5, d + 1, 100 + d)
        nodes[100 + d] = leaf(100 + d, 0)
    nodes[3] = leaf(3, 1)
    tree = mir.build_tree(0, nodes, 2)
    spec = mir.ModelSpec(
        mir.MODEL_DT, mir.QuantizationSpec(feature_count=1, value_bits=4), tree
    )
    with pytest.raises(tr.TranslateError, match="depth 3 exceeds"):
        tr.translate_dt(spec, tr.TranslateConfig(code_bits=4))
    program = tr.translate_dt(spec, tr.TranslateConfig(code_bits=5))
    assert program.stage_count == 4


def forest_spec(n_trees, threshold=5):
    tree = stump_spec(threshold).model
    quant = mir.QuantizationSpec(feature_count=1, value_bits=4)
    forest = mir.RandomForestModel(trees=(tree,) * n_trees, class_count=2)
    return mir.ModelSpec(mir.MODEL_RF, quant, forest)


def test_forest_layout_and_voting_entries():
    program = tr.translate_rf(forest_spec(3))
    # Per tree: 1 layer + 1 predict; then one voting stage.
    assert program.stage_count == 3 * 2 + 1
    voting = program.stages[-1].tables[0]
    assert voting.kind == tr.KIND_VOTING
    assert len(voting.entries) == 2 ** 3
    by_combo = {
        tuple(v for _, v in e.keys): e.action.label for e in voting.entries
    }
    assert by_combo[(0, 0, 1)] == 0
    assert by_combo[(1, 0, 1)] == 1
    assert tr.count_resources(program)["tree_stage_usage"] == [1, 1, 1]


def test_forest_predict_rearms_next_tree():
    program = tr.translate_rf(forest_spec(2))
    predict_stages = [
        s for s in program.stages if s.tables[0].kind == tr.KIND_DT_PREDICT
    ]
    first, last = predict_stages
    for e in first.tables[0].entries:
        assert e.action.tree_slot == 0
        assert e.action.reset == (1, 0)
        assert e.action.loads == (("f0", 0),)
    for e in last.tables[0].entries:
        assert e.action.tree_slot == 1
        assert e.action.reset is None
        assert e.action.loads == ()


def test_forest_over_budget_rejected():
    with pytest.raises(tr.TranslateError, match="budget"):
        tr.translate_rf(forest_spec(5))


def test_forest_average_stage_usage_is_mean_depth():
    deep = mir.build_tree(
        0,
        {
            0: split(0, 0, 3, 1, 2),
            1: split(1, 0, 1, 3, 4),
            2: leaf(2, 1),
            3: leaf(3, 0),
            4: leaf(4, 1),
        },
        2,
    )
    quant = mir.QuantizationSpec(feature_count=1, value_bits=4)
    forest = mir.RandomForestModel(trees=(deep, stump_spec().model), class_count=2)
    program = tr.translate_rf(mir.ModelSpec(mir.MODEL_RF, quant, forest))
    report = tr.count_resources(program)
    assert report["tree_stage_usage"] == [2, 1]
    assert report["avg_tree_stage_usage"] == 1.5


def svm_spec(weights_list, biases, classes, class_count, value_bits=4, scale_shift=8,
             acc_bits=32, feature_count=None):
    planes = tuple(
        mir.Hyperplane(weights=tuple(w), bias=b, classes=c)
        for w, b, c in zip(weights_list, biases, classes)
    )
    quant = mir.QuantizationSpec(
        feature_count=feature_count or len(weights_list[0]),
        value_bits=value_bits,
        scale_shift=scale_shift,
        acc_bits=acc_bits,
    )
    model = mir.SvmModel(
        hyperplanes=planes, scheme=mir.SCHEME_ONE_VS_ONE, class_count=class_count
    )
    return mir.ModelSpec(mir.MODEL_SVM, quant, model)


def test_svm_tables_products_and_init():
    spec = svm_spec([( 1.0, -2.0)], [0.5], [(0, 1)], 2)
    program = tr.translate_svm(spec)
    assert program.init.acc_init == (128,)
    mul_stage, predict_stage = program.stages
    assert mul_stage.group == 0
    t0, t1 = mul_stage.tables
    assert t0.meta == {"hyperplane": 0, "feature_index": 0}
    assert len(t0.entries) == 16  # min(2^4, 2^10)
    by_m0 = {e.keys[0][1]: e.action.product for e in t0.entries}
    by_m1 = {e.keys[0][1]: e.action.product for e in t1.entries}
    assert by_m0[4] == 64
    assert by_m1[8] == -256
    assert t0.entries[0].keys[0][0] == "feat0"
    assert t1.entries[0].keys[0][0] == "feat1"
    (pt,) = predict_stage.tables
    assert pt.kind == tr.KIND_SVM_PREDICT
    assert len(pt.entries) == 2
    votes = {e.keys[0][1]: e.action.label for e in pt.entries}
    assert votes == {0: 0, 1: 1}  # sign 0 -> class 0, sign 1 -> class 1


def test_svm_mul_index_bits_cap_table_size():
    spec = svm_spec([(0.5,)], [0.0], [(0, 1)], 2, value_bits=16, scale_shift=16)
    program = tr.translate_svm(spec)
    t = program.stages[0].tables[0]
    assert len(t.entries) == 1 << 10
    assert program.meta.mul_index_bits == 10
    # 16-bit features index the table by their top 10 bits.
    m = mir.svm_table_index(0xFFFF, 16, 10)
    assert m == 0x3FF


def test_svm_block_slots_split_wide_hyperplanes():
    spec = svm_spec([(0.1,) * 6], [0.0], [(0, 1)], 2)
    program = tr.translate_svm(spec, tr.TranslateConfig(svm_block_slots=4))
    mul_stages = [s for s in program.stages if s.tables[0].kind == tr.KIND_SVM_MUL]
    assert [len(s.tables) for s in mul_stages] == [4, 2]
    assert all(s.group == 0 for s in mul_stages)
    assert [t.slot for t in mul_stages[0].tables] == [0, 1, 2, 3]
    assert [t.slot for t in mul_stages[1].tables] == [0, 1]


def test_svm_hyperplane_budget_enforced():
    weights = [(1.0,)] * 6
    classes = list(itertools.combinations(range(4), 2))
    spec = svm_spec(weights, [0.0] * 6, classes, 4)
    with pytest.raises(tr.TranslateError, match="hyperplanes, budget"):
        tr.translate_svm(spec)


def test_svm_overflow_names_hyperplane_and_feature():
    spec = svm_spec([(1.0, 40000.0)], [0.0], [(0, 1)], 2, value_bits=4,
                    scale_shift=16, acc_bits=32)
    with pytest.raises(tr.TranslateError, match="hyperplane 0 at feature 1"):
        tr.translate_svm(spec)


def test_svm_predict_votes_match_oracle_rule():
    classes = [(0, 1), (0, 2), (1, 2)]
    spec = svm_spec([(1.0,)] * 3, [0.0] * 3, classes, 3)
    program = tr.translate_svm(spec)
    predict = program.stages[-1].tables[0]
    for e in predict.entries:
        pattern = e.keys[0][1]
        signs = [(pattern >> h) & 1 for h in range(3)]
        assert e.action.label == mir.svm_vote(spec.model, signs)


def test_class_count_must_fit_result_slots():
    tree = mir.build_tree(0, {0: leaf(0, 0)}, class_count=17)
    spec = mir.ModelSpec(
        mir.MODEL_DT, mir.QuantizationSpec(feature_count=1, value_bits=4), tree
    )
    with pytest.raises(tr.TranslateError, match="result slots"):
        tr.translate_dt(spec)


def random_tree(rng, feature_count, value_bits, max_depth, class_count):
    top = (1 << value_bits) - 1
    counter = itertools.count()
    nodes = {}

    def grow(depth):
        nid = next(counter)
        if depth == max_depth or rng.random() < 0.3:
            nodes[nid] = leaf(nid, rng.randrange(class_count))
            return nid
        f = rng.randrange(feature_count)
        t = rng.randrange(top)  # threshold in [0, top-1] keeps both sides non-empty
        left = grow(depth + 1)
        right = grow(depth + 1)
        nodes[nid] = split(nid, f, t, left, right)
        return nid

    root = grow(0)
    return mir.build_tree(root, nodes, class_count)


def test_per_layer_tcam_matches_cover_formula():
    rng = random.Random(31337)
    for _ in range(30):
        wf = rng.choice([3, 4, 5, 6])
        tree = random_tree(rng, rng.randint(1, 5), wf, rng.randint(1, 5), 3)
        quant = mir.QuantizationSpec(feature_count=5, value_bits=wf)
        spec = mir.ModelSpec(mir.MODEL_DT, quant, tree)
        program = tr.translate_dt(spec)
        report = tr.count_resources(program)
        top = (1 << wf) - 1
        for layer in range(tree.depth):
            expected = 0
            for node in tree.internal_at_depth(layer):
                t = node.threshold
                if t + 1 <= top - t:
                    cover = range_to_ternary(0, t, wf)
                else:
                    cover = range_to_ternary(t + 1, top, wf)
                expected += len(cover) + 1
            assert report["per_stage"][layer]["tcam"] == expected
        # Predict SRAM equals leaf count.
        assert report["per_stage"][tree.depth]["sram"] == len(tree.leaves())


def test_predict_pairs_unique_and_disjoint_from_layer_codes():
    rng = random.Random(99)
    for _ in range(20):
        tree = random_tree(rng, 3, 4, 6, 3)
        quant = mir.QuantizationSpec(feature_count=3, value_bits=4)
        program = tr.translate_dt(mir.ModelSpec(mir.MODEL_DT, quant, tree))
        predict = program.stages[-1].tables[0]
        pairs = [e.keys for e in predict.entries]
        assert len(pairs) == len(set(pairs)) == len(tree.leaves())
        markers = {
            v for e in predict.entries for name, v in e.keys if v >> 33
        }
        layer_codes = {
            v
            for s in program.stages[:-1]
            for t in s.tables
            for e in t.entries
            for name, v in e.keys
            if name.startswith("code")
        }
        assert markers.isdisjoint(layer_codes)


def test_entries_file_round_trip(tmp_path):
    for spec, fn in [
        (stump_spec(), tr.translate_dt),
        (forest_spec(2), tr.translate_rf),
        (svm_spec([(1.0, -2.0)], [0.5], [(0, 1)], 2), tr.translate_svm),
    ]:
        program = fn(spec, None, 3, 7)
        path = tmp_path / ("%s.jsonl" % spec.kind)
        tr.write_entries_file(program, path)
        again = tr.read_entries_file(path)
        assert again == program


def test_entries_file_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"record": "entry"}\n')
    with pytest.raises(tr.TranslateError):
        tr.read_entries_file(bad)
    bad.write_text("")
    with pytest.raises(tr.TranslateError, match="header"):
        tr.read_entries_file(bad)
