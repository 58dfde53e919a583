"""Smoke test for the cmtop_py extension: python python/smoke_test.py"""
import json

import cmtop_py as cm


def main():
    rep = cm.hamiltonians("appendix-R", 2)
    top = [s for s in rep["selected"] if not s["central"]][0]
    assert top["index"] == "z^1", top
    assert top["text"] == "(2)·g11·g12 + (-2)·g12·g22", top["text"]

    lax = cm.lax("appendix-T", 2)
    assert lax["N"] == 2

    g = [[0.3 + 0.1j, -0.2j], [0.5, -0.3 - 0.1j]]
    m = cm.lax_eval("appendix-R", 0.2 + 0.1j, g)
    m2 = cm.lax_eval("appendix-R", 0.2 + 0.1j, [[2 * x for x in r] for r in g])
    assert any(abs(x) > 0 for r in m for x in r)
    assert all(abs(b - 2 * a) < 1e-12 for ra, rb in zip(m, m2) for a, b in zip(ra, rb))

    with open(__file__.replace("python/smoke_test.py", "crates/core/data/hamiltonians_T_N3.json")) as f:
        res = cm.commute(f.read())
    assert res["pass"], res

    ap = cm.against_paper("trig", 2)
    assert ap["hamiltonians"][0]["comparison"]["central"]

    reps = cm.verify("sl2-trig", seed=3)
    assert reps[0]["pass"], reps
    a = json.dumps(cm.verify("eq-n", seed=2, n=3), sort_keys=True)
    b = json.dumps(cm.verify("eq-n", seed=2, n=3), sort_keys=True)
    assert a == b

    z = 0.21 + 0.13j
    assert abs(cm.theta(1, 1, -z) + cm.theta(1, 1, z)) < 1e-13
    u = 0.3 + 0.2j
    lhs = cm.phi(u, z) * cm.phi(-u, z)
    assert abs(lhs - (cm.wp(z) - cm.wp(u))) < 1e-9 * max(1.0, abs(lhs))

    try:
        cm.verify("sl2-trig")
    except ValueError:
        pass
    else:
        raise AssertionError("missing seed accepted")
    print("smoke test: PASS")


if __name__ == "__main__":
    main()
