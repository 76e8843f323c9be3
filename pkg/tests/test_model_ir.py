import itertools
import math
import random

import pytest

from matpipe import model_ir as mir


def leaf(nid, label):
    return mir.TreeNode(node_id=nid, label=label)


def split(nid, feature, threshold, left, right):
    return mir.TreeNode(
        node_id=nid, feature=feature, threshold=threshold, left=left, right=right
    )


def stump_spec(threshold=5, value_bits=4):
    tree = mir.build_tree(
        0,
        {0: split(0, 0, threshold, 1, 2), 1: leaf(1, 0), 2: leaf(2, 1)},
        class_count=2,
    )
    quant = mir.QuantizationSpec(feature_count=1, value_bits=value_bits)
    return mir.ModelSpec(kind=mir.MODEL_DT, quantization=quant, model=tree)


def test_quantize_value_midpoint_example():
    assert mir.quantize_value(5, 0, 10, 8) == 127


def test_quantize_value_endpoints_and_clamping():
    assert mir.quantize_value(0, 0, 10, 8) == 0
    assert mir.quantize_value(10, 0, 10, 8) == 255
    assert mir.quantize_value(-3, 0, 10, 8) == 0
    assert mir.quantize_value(40, 0, 10, 8) == 255


def test_fit_feature_range_names_constant_feature():
    rows = [(1.0, 7.0), (2.0, 7.0), (3.0, 7.0)]
    with pytest.raises(mir.QuantizationError, match="feature 1"):
        mir.fit_feature_range(rows)


def test_quantize_dataset_reuses_training_ranges():
    spec = mir.QuantizationSpec(feature_count=1, value_bits=4)
    train_rows = [(0.0,), (10.0,)]
    mins, maxs = mir.fit_feature_range(train_rows)
    test = mir.quantize_dataset([(12.0,), (-1.0,)], [0, 1], spec, mins, maxs)
    assert test.features == ((15,), (0,))


def test_tree_predict_goes_left_on_equal():
    spec = stump_spec(threshold=5)
    assert mir.reference_predict(spec, (5,)) == 0
    assert mir.reference_predict(spec, (6,)) == 1


def test_single_leaf_tree_depth_zero():
    tree = mir.build_tree(7, {7: leaf(7, 2)}, class_count=3)
    assert tree.depth == 0
    assert len(tree.nodes) == 1
    assert tree.predict((0, 0)) == 2


def test_build_tree_rejects_dangling_child():
    with pytest.raises(mir.ModelError, match="missing child"):
        mir.build_tree(0, {0: split(0, 0, 1, 1, 99), 1: leaf(1, 0)}, 2)


def test_build_tree_rejects_unreachable_nodes():
    nodes = {0: leaf(0, 0), 5: leaf(5, 1)}
    with pytest.raises(mir.ModelError, match="unreachable"):
        mir.build_tree(0, nodes, 2)


def test_build_tree_rejects_shared_child():
    nodes = {0: split(0, 0, 3, 1, 1), 1: leaf(1, 0)}
    with pytest.raises(mir.ModelError, match="reachable twice"):
        mir.build_tree(0, nodes, 2)


def test_build_tree_rejects_label_out_of_range():
    with pytest.raises(mir.ModelError, match="label"):
        mir.build_tree(0, {0: leaf(0, 5)}, class_count=2)


def test_validate_rejects_bad_feature_and_threshold():
    quant = mir.QuantizationSpec(feature_count=1, value_bits=4)
    tree = mir.build_tree(
        0, {0: split(0, 3, 5, 1, 2), 1: leaf(1, 0), 2: leaf(2, 1)}, 2
    )
    with pytest.raises(mir.ModelError, match="feature 3"):
        mir.validate_model(mir.ModelSpec(mir.MODEL_DT, quant, tree))
    tree2 = mir.build_tree(
        0, {0: split(0, 0, 99, 1, 2), 1: leaf(1, 0), 2: leaf(2, 1)}, 2
    )
    with pytest.raises(mir.ModelError, match="threshold"):
        mir.validate_model(mir.ModelSpec(mir.MODEL_DT, quant, tree2))


def test_majority_vote_tie_breaks_low():
    assert mir.majority_vote([0, 0, 1], 2) == 0
    assert mir.majority_vote([1, 0, 1], 2) == 1
    assert mir.majority_vote([2, 1], 3) == 1
    assert mir.majority_vote([1, 2, 0, 0, 2], 3) == 0


def test_forest_predict_matches_per_tree_majority():
    t_left = mir.build_tree(
        0, {0: split(0, 0, 7, 1, 2), 1: leaf(1, 0), 2: leaf(2, 1)}, 2
    )
    t_right = mir.build_tree(
        0, {0: split(0, 1, 3, 1, 2), 1: leaf(1, 1), 2: leaf(2, 0)}, 2
    )
    forest = mir.RandomForestModel(trees=(t_left, t_right, t_left), class_count=2)
    quant = mir.QuantizationSpec(feature_count=2, value_bits=4)
    spec = mir.ModelSpec(mir.MODEL_RF, quant, forest)
    for f0, f1 in itertools.product(range(16), repeat=2):
        votes = [t.predict((f0, f1)) for t in forest.trees]
        assert mir.reference_predict(spec, (f0, f1)) == mir.majority_vote(votes, 2)


def svm_one_plane(weights, bias, feature_count, value_bits, scale_shift, acc_bits=32):
    model = mir.SvmModel(
        hyperplanes=(mir.Hyperplane(weights=weights, bias=bias, classes=(0, 1)),),
        scheme=mir.SCHEME_ONE_VS_ONE,
        class_count=2,
    )
    quant = mir.QuantizationSpec(
        feature_count=feature_count,
        value_bits=value_bits,
        scale_shift=scale_shift,
        acc_bits=acc_bits,
    )
    return mir.ModelSpec(mir.MODEL_SVM, quant, model)


def test_svm_fixed_point_worked_example():
    # w=(1,-2), b=0.5, s=8, inputs (4, 8) at 4 bits dequantize to (0.25, 0.5):
    # 128 + 64 - 256 = -64, so the sign bit is set and the plane votes class 1.
    spec = svm_one_plane((1.0, -2.0), 0.5, 2, value_bits=4, scale_shift=8)
    accs = mir.svm_accumulators(spec.model, (4, 8), spec.quantization)
    assert accs == [-64]
    assert mir.sign_bit(-64, 32) == 1
    assert mir.reference_predict(spec, (4, 8)) == 1
    assert mir.reference_predict(spec, (8, 4)) == 0  # 128 + 128 - 128 = 128 >= 0


def test_svm_sign_bit_uses_twos_complement():
    assert mir.wrap_signed(-64, 32) == -64
    assert mir.wrap_signed(-64, 32) & 0xFFFFFFFF == 0xFFFFFFC0
    assert mir.sign_bit(-1 & 0xFF, 8) == 1
    assert mir.sign_bit(127, 8) == 0


def test_svm_accumulator_wraps_at_acc_bits():
    # With an 8-bit accumulator, 128 + 64 wraps negative.
    spec = svm_one_plane((1.0,), 0.5, 1, value_bits=4, scale_shift=8, acc_bits=8)
    accs = mir.svm_accumulators(spec.model, (4,), spec.quantization)
    assert accs == [mir.wrap_signed(128 + 64, 8)]
    assert accs[0] < 0


def test_svm_index_bits_requantize_top_bits():
    assert mir.svm_table_index(0b1011010110101101, 16, 10) == 0b1011010110
    assert mir.svm_table_index(13, 4, 10) == 13


def test_svm_oracle_reproducible_across_runs():
    rng = random.Random(7)
    spec = svm_one_plane((0.37, -1.22, 0.05), -0.125, 3, 8, 16)
    rows = [tuple(rng.randrange(256) for _ in range(3)) for _ in range(200)]
    first = [mir.reference_predict(spec, r) for r in rows]
    second = [mir.reference_predict(spec, r) for r in rows]
    assert first == second


def test_svm_vote_one_vs_one_tie_breaks_low():
    planes = tuple(
        mir.Hyperplane(weights=(0.0,), bias=0.0, classes=c)
        for c in ((0, 1), (0, 2), (1, 2))
    )
    model = mir.SvmModel(hyperplanes=planes, scheme=mir.SCHEME_ONE_VS_ONE, class_count=3)
    # signs (0,1,0): votes land 0/2/1, a three-way tie, so lowest class wins.
    assert mir.svm_vote(model, (0, 1, 0)) == 0
    # signs (1,1,1): votes land 1/2/2, class 2 wins outright.
    assert mir.svm_vote(model, (1, 1, 1)) == 2


def test_svm_validation_requires_complete_pairs():
    quant = mir.QuantizationSpec(feature_count=1)
    planes = (mir.Hyperplane(weights=(1.0,), bias=0.0, classes=(0, 1)),)
    model = mir.SvmModel(hyperplanes=planes, scheme=mir.SCHEME_ONE_VS_ONE, class_count=3)
    with pytest.raises(mir.ModelError, match="class pair"):
        mir.validate_model(mir.ModelSpec(mir.MODEL_SVM, quant, model))


def test_exchange_round_trip_all_kinds(tmp_path):
    stump = stump_spec()
    forest = mir.ModelSpec(
        mir.MODEL_RF,
        mir.QuantizationSpec(feature_count=1, value_bits=4),
        mir.RandomForestModel(trees=(stump.model, stump.model), class_count=2),
    )
    svm = svm_one_plane((1.0, -2.0), 0.5, 2, 4, 8)
    for i, spec in enumerate([stump, forest, svm]):
        path = tmp_path / ("m%d.json" % i)
        mir.save_model(spec, path)
        again = mir.load_model(path)
        assert again == spec


def test_load_rejects_unknown_version_and_garbage(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"format_version": 99}')
    with pytest.raises(mir.ModelError, match="format_version"):
        mir.load_model(bad)
    bad.write_text("not json at all")
    with pytest.raises(mir.ModelError, match="well-formed"):
        mir.load_model(bad)


def test_dataset_csv_round_trip(tmp_path):
    ds = mir.Dataset(features=((1, 2), (3, 4)), labels=(0, 1), name="t")
    path = tmp_path / "d.csv"
    mir.save_dataset_csv(ds, path)
    again = mir.load_dataset_csv(path)
    assert again.features == ds.features
    assert again.labels == ds.labels


def test_float_oracle_agrees_away_from_boundaries():
    spec = svm_one_plane((1.0, -2.0), 0.5, 2, 4, 8)
    fixed = mir.reference_predict(spec, (4, 8))
    floaty = mir.reference_predict_float(spec, (4, 8))
    assert fixed == floaty == 1


def test_feature_validation_in_oracle():
    spec = stump_spec()
    with pytest.raises(mir.ModelError, match="feature 0"):
        mir.reference_predict(spec, (16,))
    with pytest.raises(mir.ModelError, match="expected 1"):
        mir.reference_predict(spec, (1, 2))
