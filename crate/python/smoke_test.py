"""Smoke test for the qudit_indel extension module.

Build and install first:
    pip install maturin
    maturin develop -m crates/python/Cargo.toml
then run
    python python/smoke_test.py
"""

import math

import qudit_indel as qi


def main():
    code = qi.Code.example()
    assert (code.l, code.n) == (3, 6)
    assert qi.Code.from_json(code.to_json()).classes == code.classes

    report = code.verify()
    assert report["satisfied"], report

    bad = qi.Code(3, 6, [["001122", "112200", "220012"], code.classes[1], code.classes[2]])
    assert not bad.verify()["satisfied"]
    assert not qi.kl_check(bad)

    assert qi.kl_check(code, "del")
    assert qi.kl_check(code, "ins", sigma=[0.5, 1 / 3, 1 / 6])

    plan = qi.synthesize(code, "del")
    assert plan.d == 9
    assert all(math.isclose(p, 1 / 9) for p in plan.probabilities())

    alphas = [0.6, -0.48j, 0.64]
    exact = plan.simulate(alphas)
    assert abs(exact["mean_fidelity"] - 1) < 1e-10
    assert abs(sum(exact["probabilities"].values()) - 1) < 1e-10

    sampled = plan.simulate(alphas, trials=3000, seed=1)
    assert sampled == plan.simulate(alphas, trials=3000, seed=1)

    ins = qi.synthesize(code, "ins")
    assert ins.d == 21

    try:
        qi.synthesize(bad, "del")
    except RuntimeError:
        pass
    else:
        raise AssertionError("expected a Knill-Laflamme failure")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
