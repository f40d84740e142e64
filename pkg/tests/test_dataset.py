import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nnasp.dataset import (
    Dataset,
    DatasetError,
    Instance,
    gen_modified_xor,
    gen_xor,
    load_csv,
    save_csv,
    stratified_kfold,
    xor_label,
    modified_xor_label,
)


def test_gen_xor_shape_and_labels():
    d = gen_xor(1000, 10, seed=3)
    assert len(d) == 1000
    assert d.n_features == 10
    assert set(d.y) <= {0, 1}
    assert d.feature_names[0] == "input_feat_0"
    assert np.all((d.X >= 0) & (d.X <= 1))


def test_xor_label_rules():
    assert xor_label([0.0, 0.0, 0.7]) == 0
    assert xor_label([0.5, 0.49]) == 1  # 0.5 rounds up
    assert modified_xor_label([0.6, 0.6, 0.6, 0.0]) == 1
    assert modified_xor_label([0.2, 0.9, 0.1, 0.0]) == 1


@pytest.mark.parametrize("gen", [gen_xor, gen_modified_xor])
def test_class_balance(gen):
    # each rounded bit is Bernoulli(0.5), so their XOR is too; recount directly
    d = gen(10000, 10, seed=11)
    frac = float(np.mean(d.y))
    assert 0.47 <= frac <= 0.53


def test_generated_labels_match_direct_recount():
    d = gen_modified_xor(500, 5, seed=2)
    bits = (d.X[:, :3] >= 0.5).astype(int)
    assert np.array_equal(d.y, bits[:, 0] ^ bits[:, 1] ^ bits[:, 2])


def test_arity_errors():
    with pytest.raises(DatasetError):
        gen_xor(10, 1, seed=0)
    with pytest.raises(DatasetError):
        gen_modified_xor(10, 2, seed=0)


def test_generators_reproducible():
    assert gen_xor(50, 4, seed=9) == gen_xor(50, 4, seed=9)
    assert gen_xor(50, 4, seed=9) != gen_xor(50, 4, seed=10)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 60), st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_xor_label_ignores_other_features(n, d, seed):
    data = gen_xor(n, d, seed)
    X = data.X.copy()
    X[:, 2:] = np.random.default_rng(seed + 1).uniform(size=X[:, 2:].shape)
    assert [xor_label(row) for row in X] == list(data.y)


def test_csv_round_trip(tmp_path):
    d = gen_xor(200, 10, seed=5)
    path = tmp_path / "xor.csv"
    save_csv(d, path)
    back = load_csv(path)
    assert back == d
    assert np.array_equal(back.X, d.X)


def test_csv_simple_row(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("feat_0,feat_1,xor\n0,0,0\n")
    d = load_csv(path)
    assert d.instances[0] == Instance((0.0, 0.0), 0)
    assert d.feature_names == ("feat_0", "feat_1")


def test_csv_ragged_row_names_row(tmp_path):
    header = ",".join(f"input_feat_{i}" for i in range(10)) + ",xor"
    path = tmp_path / "bad.csv"
    path.write_text(header + "\n" + ",".join(["0.5"] * 9) + ",1\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_csv(path)


def test_csv_non_numeric_and_unknown_label(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,y\n0.1,zz,1\n")
    with pytest.raises(DatasetError, match="row 2"):
        load_csv(path)
    path.write_text("a,b,y\n0.1,0.2,5\n")
    with pytest.raises(DatasetError, match="unknown label"):
        load_csv(path, class_count=2)


def test_dataset_invariants():
    with pytest.raises(DatasetError):
        Dataset(("a", "a"), 2, ())
    with pytest.raises(DatasetError):
        Dataset(("a",), 2, (Instance((0.0,), 2),))
    with pytest.raises(DatasetError):
        Dataset(("a", "b"), 2, (Instance((0.0,), 0),))


def test_kfold_sizes_and_balance():
    d = gen_xor(1000, 10, seed=1)
    folds = stratified_kfold(d, 5, seed=0)
    counts = np.bincount(d.y)
    for f in folds:
        assert len(f.test) == 200
        for c in range(2):
            expected = counts[c] / 5
            assert abs(np.sum(f.test.y == c) - expected) <= 1


def test_kfold_deterministic_and_partition():
    d = gen_xor(137, 3, seed=4)
    a = stratified_kfold(d, 5, seed=2)
    b = stratified_kfold(d, 5, seed=2)
    assert [f.test_indices for f in a] == [f.test_indices for f in b]
    seen = sorted(i for f in a for i in f.test_indices)
    assert seen == list(range(len(d)))
    for f in a:
        assert set(f.train_indices).isdisjoint(f.test_indices)
        assert len(f.train_indices) + len(f.test_indices) == len(d)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=6, max_size=80), st.integers(2, 5), st.integers(0, 1000))
def test_kfold_partition_property(labels, k, seed):
    counts = np.bincount(labels, minlength=3)
    d = Dataset.from_arrays(np.arange(len(labels), dtype=float)[:, None], labels, class_count=3)
    if any(0 < c < k for c in counts):
        with pytest.raises(DatasetError):
            stratified_kfold(d, k, seed)
        return
    folds = stratified_kfold(d, k, seed)
    assert sorted(i for f in folds for i in f.test_indices) == list(range(len(labels)))
    for f in folds:
        for c in range(3):
            assert abs(np.sum(f.test.y == c) - counts[c] / k) < 1 + 1e-9


def test_kfold_rejects_small_class():
    d = Dataset.from_arrays([[0.0], [1.0], [2.0]], [0, 0, 1], class_count=2)
    with pytest.raises(DatasetError, match="class 1"):
        stratified_kfold(d, 2, seed=0)
