import os

import numpy as np
import pytest

from services.corpus import (
    PolynomialPatchSpec,
    dump_patch_corpus,
    load_patch_corpus,
    monomial_powers,
    random_patch_specs,
)

PATCHES = os.path.join(os.path.dirname(__file__), "lemmas", "patches.json")


def test_random_corpus_is_deterministic():
    first = random_patch_specs(25, seed=20240611)
    second = random_patch_specs(25, seed=20240611)
    assert [s.to_record() for s in first] == [s.to_record() for s in second]
    other = random_patch_specs(25, seed=1)
    assert [s.to_record() for s in first] != [s.to_record() for s in other]


def test_random_specs_respect_grid_sizes():
    for spec in random_patch_specs(30, seed=3, nodes_by_dim={1: 11, 2: 9, 3: 7}):
        assert spec.nodes == {1: 11, 2: 9, 3: 7}[spec.m]
        assert spec.degree <= 4
        assert all(sum(powers) > 0 for _, powers, _ in spec.terms)


def test_monomial_powers():
    assert sorted(monomial_powers(2, 1)) == [(0, 0), (0, 1), (1, 0)]
    assert len(monomial_powers(3, 2)) == 10


def test_evaluate_polynomial():
    spec = PolynomialPatchSpec(m=2, n=2, radius=1.0, nodes=5,
                               terms=((0, (1, 1), 2.0), (1, (2, 0), -1.0)))
    values = spec.evaluate(np.array([[0.5, -2.0], [1.0, 1.0]]))
    assert np.allclose(values, [[-2.0, -0.25], [2.0, -1.0]])


def test_shipped_corpus_loads():
    specs = load_patch_corpus(PATCHES)
    assert [s.label for s in specs] == ["cubic-curve", "saddle", "twisted-surface", "solid-quartic"]
    assert specs[2].to_patch().values.shape == (9, 9, 2)


def test_dump_then_load(tmp_path):
    specs = random_patch_specs(5, seed=9)
    path = tmp_path / "corpus.json"
    dump_patch_corpus(specs, path)
    assert [s.to_record() for s in load_patch_corpus(path)] == [s.to_record() for s in specs]


def test_bad_records_are_rejected(tmp_path):
    with pytest.raises(ValueError, match="nodes"):
        PolynomialPatchSpec.from_record({"m": 1, "n": 1, "r": 0.5, "nodes": 3, "terms": []})
    with pytest.raises(ValueError, match="bad term"):
        PolynomialPatchSpec.from_record(
            {"m": 2, "n": 1, "r": 0.5, "nodes": 9, "terms": [{"powers": [1], "coef": 1.0}]}
        )
    empty = tmp_path / "empty.json"
    empty.write_text("[]", encoding="utf-8")
    with pytest.raises(ValueError):
        load_patch_corpus(empty)
