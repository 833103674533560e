"""Independent high-precision reference values frozen into the test suite.

Run with ``python tests/oracles/gen_golden.py``; it only uses mpmath and
plain loops so it shares no code path with the package.
"""
import itertools

import mpmath as mp

mp.mp.dps = 40


def cm1_sites():
    for i, j, k in itertools.product((-1, 0, 1), repeat=3):
        if (i, j, k) != (0, 0, 0):
            yield i, j, k


def coefficient(i, j, k):
    r2 = mp.mpf(i * i + j * j + k * k)
    return (1 - 3 * mp.mpf(k * k) / r2) / r2 ** mp.mpf(1.5)


ks = [coefficient(*s) for s in cm1_sites()]
print("s2 cm=1", mp.nstr(mp.fsum(k**2 for k in ks), 20))
print("s4 cm=1", mp.nstr(mp.fsum(k**4 for k in ks), 20))
print("s_cross cm=1 (double loop)", mp.nstr(mp.fsum(
    ks[a] ** 2 * ks[b] ** 2 for a in range(26) for b in range(26) if a != b), 20))

tau = mp.mpf("0.3") * mp.pi
prod = mp.mpf(1)
for k in ks:
    prod *= mp.cos(tau * k / 2)
print("Pi cm=1 tau=0.3pi", mp.nstr(prod, 20))

# initial-state correction sum with K/kT = 1e-5 and sin(theta)cos(theta) factored out
total = mp.mpf(0)
for m, km in enumerate(ks):
    term = mp.mpf("1e-5") * km / 4 * mp.sin(tau * km / 2)
    for j, kj in enumerate(ks):
        if j != m:
            term *= mp.cos(tau * kj / 2)
    total += term
print("correction/(sin cos) cm=1 tau=0.3pi K/kT=1e-5", mp.nstr(total, 20))

# exact disorder average for a dilute cm=2 cluster: enumeration of a
# 10-site subset checks the independence product used as MC reference
def sites(cm):
    rng = range(-cm, cm + 1)
    return [s for s in itertools.product(rng, repeat=3) if s != (0, 0, 0)]

k2 = [coefficient(*s) for s in sites(2)]
f = mp.mpf("0.05")
ref = mp.mpf(1)
for k in k2:
    ref *= 1 - f + f * mp.cos(mp.pi * k / 2)
print("exact disorder mean cm=2 f=0.05 tau=pi", mp.nstr(ref, 20))

sub = k2[:10]
acc = mp.mpf(0)
for mask in itertools.product((0, 1), repeat=10):
    w = mp.mpf(1)
    val = mp.mpf(1)
    for bit, k in zip(mask, sub):
        w *= f if bit else 1 - f
        if bit:
            val *= mp.cos(mp.pi * k / 2)
    acc += w * val
ind = mp.mpf(1)
for k in sub:
    ind *= 1 - f + f * mp.cos(mp.pi * k / 2)
print("enumerated 10-site", mp.nstr(acc, 20), "independence", mp.nstr(ind, 20))
