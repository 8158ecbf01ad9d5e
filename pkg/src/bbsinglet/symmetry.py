"""Exact block reduction over magnetically equivalent spins.

Sites of one species that share the offset and couple identically to every
other site (and equally among themselves) can be permuted without changing
H0, the RF terms, the thermal state or the singlet projector. All of those
are then functions of the group's collective spin, so the 2^n-dimensional
space of an n-member group splits into total-spin blocks J = n/2, n/2 - 1, ...
each appearing with a known multiplicity. Propagating every block once and
weighting traces by the multiplicity reproduces the dense result exactly.

Nine equivalent protons reduce a 2048-dimensional problem to five blocks of
dimension 40, 32, 24, 16 and 8.
"""

from __future__ import annotations

from fractions import Fraction
from itertools import product
from math import comb

from .spins import Slot, SpinSystem


def _coupling_key(sys: SpinSystem, i: int, j: int):
    c = sys.couplings.get(i, j)
    return (0.0, "weak") if c is None or c.j == 0 else (c.j, c.form)


def _twins(sys: SpinSystem, a: int, b: int) -> bool:
    sa, sb = sys.sites[a], sys.sites[b]
    if sa.species != sb.species or sa.offset != sb.offset:
        return False
    for c in range(sys.n_spins):
        if c in (a, b):
            continue
        if _coupling_key(sys, a, c) != _coupling_key(sys, b, c):
            return False
    return True


def equivalence_groups(sys: SpinSystem) -> list[tuple[int, ...]]:
    """Partition of the sites into equivalence classes (singlet pair kept apart).

    The pairwise twin relation is transitive, so greedy assignment against
    the first member of each class is exact.
    """
    pair = set(sys.singlet_pair or ())
    groups: list[list[int]] = []
    for s in range(sys.n_spins):
        if s in pair:
            groups.append([s])
            continue
        for g in groups:
            if g[0] not in pair and _twins(sys, g[0], s):
                g.append(s)
                break
        else:
            groups.append([s])
    return sorted((tuple(g) for g in groups), key=lambda g: g[0])


def spin_multiplicities(n: int) -> list[tuple[float, int]]:
    """(J, multiplicity) for the total spin of n spins-1/2, J descending."""
    out = []
    k = 0
    while n - 2 * k >= 0:
        j = Fraction(n - 2 * k, 2)
        mult = comb(n, k) - (comb(n, k - 1) if k > 0 else 0)
        out.append((float(j), mult))
        k += 1
    return out


def reduced_blocks(sys: SpinSystem) -> list[tuple[int, list[Slot]]]:
    """(multiplicity, slot layout) for every total-spin block of ``sys``."""
    groups = equivalence_groups(sys)
    choices = []
    for g in groups:
        if len(g) == 1:
            choices.append([(0.5, 1)])
        else:
            choices.append(spin_multiplicities(len(g)))
    blocks = []
    for combo in product(*choices):
        mult = 1
        slots = []
        for g, (j, m) in zip(groups, combo):
            mult *= m
            site = sys.sites[g[0]]
            slots.append(Slot(tuple(g), j, site.species, site.offset))
        blocks.append((mult, slots))
    return blocks
