"""Which index triples survive the cancellations.

Expanding the exponential moment produces integrals indexed by triples
(I, J, K) of length 2m.  Two simple rules identify triples whose integrals
vanish.  We enumerate every triple for small N and m, and for each label
class ask a quadrature oracle whether the integral really is zero.  A sound
rule never rejects a nonzero integral.  We also count multiplicity patterns
and find that the displayed closed form for the restricted count is off.
"""

from chaoslab.lde import IndexTriple, enumerate_survivors, oracle_field, survives
from chaoslab.lde.enumeration import compositions, restricted_count, restricted_count_paper

field = oracle_field(0)
for N, m in [(2, 1), (3, 1), (4, 1), (2, 2), (3, 2)]:
    rep = enumerate_survivors(N, m, field=field)
    o = rep.oracle
    print(f"N={N} m={m}: {rep.survivors:7d} of {rep.total:7d} survive "
          f"(bound {rep.paper_bound:.3g}); classes {o['classes']}, rejected "
          f"{o['rejected_classes']}, rejected but nonzero {o['rejected_nonvanishing']}, "
          f"surviving but zero {o['survivor_classes_vanishing']}")

t = IndexTriple((1, 2), (3, 3), (3, 3), 3)
print(f"{t.I} {t.J} {t.K}: survives = {survives(t)} (index 1 and 2 occur once)")

print("restricted counts: a_1 + ... + a_s = 2m with every a_i >= 2")
for two_m, s in [(4, 1), (4, 2), (6, 2), (6, 3), (8, 3)]:
    direct = sum(1 for _ in compositions(two_m, s, 2))
    print(f"  2m={two_m} s={s}: direct {direct}, C(2m-s-1, s-1) = "
          f"{restricted_count(two_m, s)}, C(2m-2s-1, s-1) = {restricted_count_paper(two_m, s)}")
