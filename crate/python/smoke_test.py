"""Smoke test for the castleforge_py extension.

Build first with `pip install --no-build-isolation ./crates/py`.
"""

import json

import castleforge_py as cf


def main():
    sys = cf.System("dyadic")
    assert sys.measure("1:0") == ("1/2", "1/2")

    rows = sys.density_curve("1:0", [2, 4])
    assert all(lo == hi == "1/2" for _, lo, hi in rows), rows

    castle = sys.castle("-1;1", "1/5", "1/5")
    assert castle.passed, castle.claims
    checked = cf.verify(castle.artifact)
    assert checked.passed, checked.claims
    print("castle:", castle.notes[0], "|", checked.notes[-1])

    full = cf.match_castle(castle.artifact, "-8..=8", "1/10")
    assert full.passed, full.claims

    # Corrupt one tower so two levels collide.
    doc = json.loads(castle.artifact)
    doc["data"]["towers"][0]["shape"].append([130])
    assert not cf.verify(json.dumps(doc)).passed

    rot = cf.rotate(4, samples=500)
    assert rot.passed, rot.claims
    assert cf.verify(rot.artifact).passed
    print("rotation:", "; ".join(rot.notes))

    try:
        cf.rotate(2, alpha="1/3")
    except ValueError as e:
        print("rational angle rejected:", e)
    else:
        raise AssertionError("rational angle accepted")
    print("ok")


if __name__ == "__main__":
    main()
