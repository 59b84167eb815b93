import pytest

from trinitygate import LabelLattice, load_default_policy


@pytest.fixture(scope="session")
def default_policy():
    return load_default_policy()


@pytest.fixture()
def chain():
    return LabelLattice.default()


def brute_force_leq(labels, edges):
    """Independent oracle: reachability over declared edges by expansion.

    Deliberately naive (set growth to a fixed point over pairs) so it shares
    no code with the lattice's own closure.
    """
    reach = {(a, a) for a in labels}
    reach |= set(edges)
    grown = True
    while grown:
        grown = False
        for (a, b) in list(reach):
            for (c, d) in list(reach):
                if b == c and (a, d) not in reach:
                    reach.add((a, d))
                    grown = True
    return lambda a, b: (a, b) in reach


def brute_force_join(labels, leq, subset):
    """Independent oracle: enumerate upper bounds, keep the unique minimum."""
    ubs = [u for u in labels if all(leq(s, u) for s in subset)]
    minimal = [u for u in ubs if not any(v != u and leq(v, u) for v in ubs)]
    assert len(minimal) == 1, f"no unique LUB for {subset}: {minimal}"
    return minimal[0]


# Small lattices used across property tests (all <= 5 labels).
CHAIN3 = (
    ["UNTRUSTED", "INTERNAL", "CONFIDENTIAL"],
    [("UNTRUSTED", "INTERNAL"), ("INTERNAL", "CONFIDENTIAL")],
    "UNTRUSTED",
    "CONFIDENTIAL",
)
DIAMOND4 = (
    ["LO", "LEFT", "RIGHT", "HI"],
    [("LO", "LEFT"), ("LO", "RIGHT"), ("LEFT", "HI"), ("RIGHT", "HI")],
    "LO",
    "HI",
)
SINGLE1 = (["ONLY"], [], "ONLY", "ONLY")
M5 = (
    ["BOT", "A", "B", "C", "TOP"],
    [("BOT", "A"), ("BOT", "B"), ("BOT", "C"), ("A", "TOP"), ("B", "TOP"), ("C", "TOP")],
    "BOT",
    "TOP",
)
SMALL_LATTICES = [CHAIN3, DIAMOND4, SINGLE1, M5]
