import numpy as np
import pytest
from numpy.testing import assert_array_equal

from src.attributes import (
    AttributeMatrix, MutationConfig,
    cosine_distances, decode_batch, decode_nearest,
    load_attribute_csv, min_attributes, mutate, random_representation,
    read_attribute_table, save_attribute_csv,
    shared_attribute_count, sharing_matrix, targets_for_batch, validate_matrix,
)
from src.errors import DataError, MutationError, ValidationError
from src.rng import make_rng

EPS = 1e-6


def test_matrix_rejects_zero_and_duplicate_rows():
    with pytest.raises(ValidationError):
        AttributeMatrix([[1, 0], [0, 0]])
    with pytest.raises(ValidationError):
        AttributeMatrix([[1, 0], [1, 0]])
    with pytest.raises(ValidationError):
        AttributeMatrix([[1, 2], [0, 1]])
    assert validate_matrix([[1, 1], [1, 1], [0, 0]]) == ["fila 2 toda a cero", "filas 0 y 1 duplicadas"]


def test_matrix_is_immutable_copy():
    raw = np.array([[1, 0], [0, 1]])
    A = AttributeMatrix(raw)
    raw[0, 0] = 0
    assert A.bits[0, 0] == 1
    with pytest.raises(ValueError):
        A.bits[0, 0] = 0


def test_locomotion_sharing_counts(locomotion):
    idx = {name: k for k, name in enumerate(locomotion.class_names)}
    assert shared_attribute_count(locomotion, idx["Stand"], idx["Sit"]) == 4
    assert shared_attribute_count(locomotion, idx["Stand"], idx["Lie"]) == 5
    assert shared_attribute_count(locomotion, idx["Walk"], idx["Stand"]) == 3
    assert shared_attribute_count(locomotion, idx["Walk"], idx["Sit"]) == 2


def test_sharing_matrix_is_symmetric_with_popcount_diagonal(locomotion):
    S = sharing_matrix(locomotion)
    assert_array_equal(S, S.T)
    assert_array_equal(np.diag(S), locomotion.bits.sum(axis=1))
    with pytest.raises(ValidationError):
        shared_attribute_count(locomotion, 0, 5)


def test_random_representation_shapes_and_bounds(rng):
    A = random_representation(5, 10, rng)
    assert (A.K, A.n) == (5, 10)
    assert validate_matrix(A.bits) == []
    assert min_attributes(2) == 2
    with pytest.raises(ValidationError):
        random_representation(2, 1, rng)
    with pytest.raises(ValidationError):
        random_representation(1, 4, rng)


def test_random_representation_bits_are_fair():
    gen = make_rng(0, "fair")
    total = np.zeros(16)
    for _ in range(10_000):
        total += random_representation(2, 16, gen).bits.sum(axis=0)
    assert np.all(np.abs(total / 20_000 - 0.5) < 0.02)


def test_mutate_leaves_input_untouched(locomotion):
    before = locomotion.bits.copy()
    child = mutate(locomotion, MutationConfig(), make_rng(3, "m"))
    assert_array_equal(locomotion.bits, before)
    assert validate_matrix(child.bits) == []
    assert child.class_names == locomotion.class_names


def test_mutate_tiny_probability_is_identity(locomotion):
    assert mutate(locomotion, MutationConfig(p=1e-9), make_rng(0, "m")) == locomotion


def test_mutate_full_flip_complements_one_row(locomotion):
    child = mutate(locomotion, MutationConfig(p=1.0, unchecked=True), make_rng(0, "m"))
    changed = np.flatnonzero(np.any(child.bits != locomotion.bits, axis=1))
    assert len(changed) == 1
    k = changed[0]
    assert_array_equal(child.bits[k], 1 - locomotion.bits[k])


def test_mutate_expected_flip_count():
    gen = make_rng(1, "flips")
    A = random_representation(4, 32, gen)
    flips = 0
    for _ in range(10_000):
        flips += int(np.sum(mutate(A, MutationConfig(), gen).bits != A.bits))
    assert abs(flips / 10_000 - 1.0) < 0.05


def test_mutate_gives_up_after_retries():
    # con una sola fila válida posible, cualquier cambio la anula o duplica
    A = AttributeMatrix([[1, 0], [0, 1], [1, 1]])
    with pytest.raises(MutationError):
        mutate(A, MutationConfig(p=1.0, unchecked=True, retries=3), make_rng(0))


def test_mutation_config_validation():
    with pytest.raises(ValidationError):
        MutationConfig(p=1.0)
    with pytest.raises(ValidationError):
        MutationConfig(p=0.0)
    with pytest.raises(ValidationError):
        MutationConfig(scope="column")
    assert MutationConfig().flip_probability(8) == 0.125


def test_decode_examples(locomotion):
    walk = locomotion.class_names.index("Walk")
    assert decode_nearest([0, 1, 0, 0, 0, 0, 0, 0, 1, 1], locomotion) == walk
    for k in range(locomotion.K):
        assert decode_nearest(0.5 * locomotion.bits[k], locomotion) == k
        shifted = np.where(locomotion.bits[k] == 1, 1 - EPS, EPS)
        assert decode_nearest(shifted, locomotion) == k
    with pytest.raises(ValidationError):
        decode_nearest(np.zeros(10), locomotion)


def test_decode_matches_exhaustive_oracle(locomotion):
    gen = np.random.default_rng(4)
    rows = locomotion.bits.astype(float)
    for _ in range(200):
        s = gen.uniform(0.01, 0.99, size=10)
        dists = [1 - s @ r / (np.linalg.norm(s) * np.linalg.norm(r)) for r in rows]
        best = min(range(len(dists)), key=lambda k: (dists[k], k))
        assert decode_nearest(s, locomotion) == best
        assert decode_nearest(3.0 * s, locomotion) == best


def test_decode_ties_go_to_lowest_index():
    A = AttributeMatrix([[1, 0], [0, 1]])
    assert decode_nearest([0.5, 0.5], A) == 0


def test_decode_batch_agrees_with_single(locomotion):
    scores = np.random.default_rng(5).uniform(0.01, 0.99, size=(30, 10))
    assert_array_equal(decode_batch(scores, locomotion), [decode_nearest(s, locomotion) for s in scores])
    assert cosine_distances(scores, locomotion).shape == (30, 5)


def test_targets_for_batch(locomotion):
    assert_array_equal(targets_for_batch([2, 2], locomotion), np.tile(locomotion.bits[2], (2, 1)))
    assert targets_for_batch([], locomotion).shape == (0, 10)
    with pytest.raises(ValidationError):
        targets_for_batch([5], locomotion)


def test_csv_round_trip(tmp_path, locomotion):
    path = tmp_path / "attrs.csv"
    save_attribute_csv(locomotion, path)
    assert path.read_text().splitlines()[0] == "class," + ",".join(f"attr_{i}" for i in range(10))
    loaded = load_attribute_csv(path)
    assert loaded == locomotion
    assert loaded.class_names == locomotion.class_names


def test_csv_errors(tmp_path):
    bad_header = tmp_path / "bad.csv"
    bad_header.write_text("class,a,b\nx,1,0\n")
    with pytest.raises(DataError):
        load_attribute_csv(bad_header)
    dup = tmp_path / "dup.csv"
    dup.write_text("class,attr_0,attr_1\nx,1,0\ny,1,0\n")
    bits, names = read_attribute_table(dup)
    assert names == ("x", "y")
    with pytest.raises(DataError):
        load_attribute_csv(dup)
    with pytest.raises(DataError):
        load_attribute_csv(tmp_path / "missing.csv")
