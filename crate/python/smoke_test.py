"""Smoke test for the novex extension module.

Build and install first:

    pip install --no-build-isolation ./crates/python
    python python/smoke_test.py
"""

from fractions import Fraction

import novex


def frac(p):
    return Fraction(p[0], p[1])


def main():
    p = novex.empirical_pvalues([0.1, 0.5, 0.9, 1.3], [1.0, 0.0])
    assert [frac(x) for x in p] == [Fraction(2, 5), Fraction(1, 1)], p

    pvals = [(1, 100), (2, 100), (50, 100), (90, 100)]
    assert novex.bh(pvals, "0.1") == [0, 1]
    rejected, trajectory = novex.fastlsu([pvals[:2], pvals[2:]], "1/10")
    assert rejected == [(0, 0), (0, 1)], rejected
    assert trajectory[0] == 4 and trajectory[-1] == 2, trajectory
    assert novex.comm_bound(2, 2) > 0

    try:
        novex.bh(pvals, "1.5")
    except ValueError:
        pass
    else:
        raise AssertionError("alpha above 1 accepted")

    data = novex.generate(delta=2.0, n_train=360, n_test=180, seed=1)
    assert len(data) == 3
    assert len(data[0].tests) == len(data[0].novelty)

    model = novex.ScoreModel.train(data[0].nulls, data[0].tests, seed=3, trees=5, max_depth=4)
    raw = model.to_bytes()
    packed = model.to_bytes(bits=4)
    assert raw[:4] == b"QMX1" and len(packed) < len(raw)
    back = novex.ScoreModel.from_bytes(raw, model.dim)
    assert back.params() == model.params()
    point = data[0].tests[0]
    assert back.score(point) == model.score(point)
    assert novex.ScoreModel.from_bytes(packed, model.dim).node_count == model.node_count
    try:
        novex.ScoreModel.from_bytes(raw[:-1], model.dim)
    except ValueError:
        pass
    else:
        raise AssertionError("truncated payload decoded")

    ep = novex.episode(method="ME", bits=6, n_train=360, n_test=180, trees=10, max_depth=5)
    assert 0.0 <= ep.fdp <= 1.0 and 0.0 <= ep.power <= 1.0
    assert len(ep.payload_bytes) == 6 and ep.comm_kb > 0

    table = novex.sweep(
        values=["0", "2"], methods=["B2", "ME"], trials=1,
        n_train=360, n_test=180, trees=5, max_depth=4, format="markdown",
    )
    assert "| axis | method |" in table, table
    print(table)
    print("smoke test ok")


if __name__ == "__main__":
    main()
