import gzip
import math

import numpy as np
import pytest

from sparsegc.io import (
    rank_standardize,
    read_model,
    read_samples,
    subject_ranks,
    write_model,
    write_samples,
)
from sparsegc.types import CoefficientModel, DataError, SampleSet
from sparsegc.solver import predict_scores

from conftest import random_samples, random_symmetric


def test_ranks_example():
    assert subject_ranks(np.array([[0.5, 0.1, 0.9]])).tolist() == [[2, 1, 3]]
    assert subject_ranks(np.array([[1.0, 1.0, 0.0]])).tolist() == [[2.5, 2.5, 1]]


def test_two_subject_standardization():
    # Edge 0 ranks (1, 3) across two subjects -> mean 2, sd sqrt(2).
    data = SampleSet.from_arrays([[0.1, 0.5, 0.9], [0.9, 0.5, 0.1]], [1, -1])
    out, rec = rank_standardize(data)
    assert rec.means[0] == 2 and rec.sds[0] == pytest.approx(math.sqrt(2))
    assert out.X[:, 0].tolist() == pytest.approx([-1 / math.sqrt(2), 1 / math.sqrt(2)])
    # Middle edge has rank 2 in both subjects: constant, flagged and zeroed.
    assert rec.zero_sd.tolist() == [False, True, False]
    assert out.X[:, 1].tolist() == [0.0, 0.0]


def test_rank_invariance_to_monotone_transforms(rng):
    data = random_samples(rng, 6, 12)
    base, _ = rank_standardize(data)
    for f in (lambda x: x**3, np.exp):
        transformed = SampleSet.from_arrays(f(data.X), data.y, data.subject_ids)
        out, _ = rank_standardize(transformed)
        assert np.array_equal(out.X, base.X)


def test_transform_applies_training_statistics(rng):
    train = random_samples(rng, 5, 10)
    test = random_samples(rng, 5, 4)
    _, rec = rank_standardize(train)
    out = rec.apply(test)
    expected = (subject_ranks(test.X) - rec.means) / rec.sds
    assert np.allclose(out.X, expected)
    with pytest.raises(DataError):
        rec.apply(random_samples(rng, 4, 4))


def test_rank_standardize_needs_two(rng):
    with pytest.raises(DataError):
        rank_standardize(SampleSet.from_arrays([[1.0, 2.0, 3.0]], [1]))


@pytest.mark.parametrize("name", ["s.csv", "s.csv.gz"])
def test_sample_round_trip(tmp_path, rng, name):
    data = random_samples(rng, 5, 7)
    path = tmp_path / name
    write_samples(path, data)
    back = read_samples(path)
    assert np.array_equal(back.X, data.X)
    assert np.array_equal(back.y, data.y)
    assert back.subject_ids == data.subject_ids


def test_gzip_output_is_reproducible(tmp_path, rng):
    data = random_samples(rng, 4, 5)
    write_samples(tmp_path / "a.csv.gz", data)
    write_samples(tmp_path / "b.csv.gz", data)
    assert (tmp_path / "a.csv.gz").read_bytes() == (tmp_path / "b.csv.gz").read_bytes()
    with gzip.open(tmp_path / "a.csv.gz", "rt") as fh:
        assert fh.readline().startswith("subject,label,e_0_1,e_0_2")


def test_zero_one_labels_remapped(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("subject,label,e_0_1,e_0_2,e_1_2\na,0,1,2,3\nb,1,4,5,6\n")
    assert read_samples(p).y.tolist() == [-1, 1]


@pytest.mark.parametrize(
    "text,match",
    [
        ("subject,label,e_0_1,e_0_2\na,1,1,2\n", "row 1"),
        ("subject,label,e_0_1,e_1_2,e_0_2\na,1,1,2,3\n", "canonical"),
        ("subject,label,e_0_1,e_0_2,e_1_2\na,1,1,2\n", "row 2"),
        ("subject,label,e_0_1,e_0_2,e_1_2\na,1,1,2,3\nb,2,1,2,3\n", "row 3"),
        ("subject,label,e_0_1,e_0_2,e_1_2\na,1,1,x,3\n", "row 2"),
        ("subject,label,e_0_1,e_0_2,e_1_2\na,1,1,nan,3\n", "row 2"),
        ("", "empty"),
    ],
)
def test_malformed_samples(tmp_path, text, match):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(DataError, match=match):
        read_samples(p)


def test_node_count_mismatch(tmp_path, rng):
    write_samples(tmp_path / "s.csv", random_samples(rng, 4, 4))
    with pytest.raises(DataError, match="expected 5"):
        read_samples(tmp_path / "s.csv", num_nodes=5)


def test_model_round_trip_bit_exact(tmp_path, rng):
    C = random_symmetric(rng, 6)
    C[np.abs(C) < 0.5] = 0
    model = CoefficientModel(C, 0.123456789012345678)
    write_model(tmp_path / "m.csv", model, {"lambda": 0.1})
    back, meta = read_model(tmp_path / "m.csv")
    assert np.array_equal(back.coefficients, model.coefficients)
    assert back.intercept == model.intercept
    assert meta["lambda"] == 0.1
    data = random_samples(rng, 6, 10)
    assert np.array_equal(predict_scores(back, data), predict_scores(model, data))
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0].startswith("# {") and lines[1] == "i,j,coef"
    pairs = [tuple(map(int, ln.split(",")[:2])) for ln in lines[2:]]
    assert all(i < j for i, j in pairs) and len(pairs) == len(set(pairs)) == model.active_edges


@pytest.mark.parametrize(
    "body,match",
    [
        ("i,j,coef\n1,0,0.5\n", "row 3"),
        ("i,j,coef\n0,1,0.5\n0,1,0.2\n", "duplicate"),
        ("i,j,coef\n0,9,0.5\n", "row 3"),
        ("x,y\n", "row 2"),
    ],
)
def test_malformed_model(tmp_path, body, match):
    p = tmp_path / "m.csv"
    p.write_text('# {"num_nodes": 3, "intercept": "0"}\n' + body)
    with pytest.raises(DataError, match=match):
        read_model(p)


def test_failed_write_leaves_nothing(tmp_path, rng):
    from sparsegc.io import atomic_write

    target = tmp_path / "out.csv"
    with pytest.raises(RuntimeError):
        with atomic_write(target) as fh:
            fh.write("partial")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []
