"""Pseudosnapshots of a directed stream, one degree class pair at a time.

A snapshot run watches a directed edge stream while holding sketch
tokens for a hash-selected slice of the vertices. At the end of the
stream it reports a single cell of a matrix indexed by bias classes:
the head's out-bias class against the tail's in-bias class, where a
vertex's bias compares its out-degree to its total degree against fixed
thresholds. Averaged over runs, the matrix converges entrywise to the
number of qualifying in-class edges per cell, which is the ingredient a
directed cut approximation needs from each degree class pair.
"""

import numpy as np

from pairsketch import pseudosnapshot as snap

# Build a small directed stream. Self loops and repeated ordered pairs
# are rejected; opposite directions of the same pair are fine.
rng = np.random.default_rng(65)
pairs, edges = set(), []
while len(edges) < 30:
    u, v = (int(x) for x in rng.integers(1, 13, size=2))
    if u != v and (u, v) not in pairs:
        pairs.add((u, v))
        edges.append((u, v))
stream = snap.DirectedEdgeStream(12, tuple(edges))

# Degree classes come from a geometric grid, and two bias thresholds
# cut the bias range into two classes.
grid = snap.DegreeGrid.from_eps(12, "1/2")
hashes = snap.HashOracles(seed=6, kappa=2, eps="1/2")
params = snap.SnapshotParams(
    kappa=2,
    eps="1/2",
    thresholds=("-1", "0"),
    class_pair=(grid.levels.index(4), grid.levels.index(3)),
)
print("stream: n = %d, m = %d; watching heads of final out-degree 4,"
      " tails of final in-degree 3" % (stream.n, stream.m))

# The oracle replays the stream deterministically and reports what the
# snapshot is trying to measure.
oracle = snap.lemma_expectation(stream, hashes, grid, params)
print("in-class edges: %d, of which %d qualify and %d do not"
      % (oracle.in_class, oracle.qualifying, oracle.nonqualifying))
print("expected matrix (rows: head bias class, cols: tail bias class):")
for row in oracle.expectation:
    print("  ", [str(x) for x in row])

# The terminal law is the exact distribution of one run: a cell and a
# signed value of magnitude big_m / 2. Its expectation already matches
# the oracle cell for cell, so sampling is only needed to show the
# convergence rate, which is slow because single runs are so coarse.
law = snap.terminal_law(stream, hashes, grid, params)
print("single runs output +-%d into one cell, or nothing" % (law.big_m // 2))
for a, row in enumerate(law.expectation()):
    assert list(row) == list(oracle.expectation[a])

trials = 400_000
rows, cols, vals = law.sample(master_seed=14, trials=trials)
ell = len(params.thresholds)
sums = np.zeros((ell, ell))
sqsums = np.zeros((ell, ell))
hit = rows >= 0
np.add.at(sums, (rows[hit], cols[hit]), vals[hit])
np.add.at(sqsums, (rows[hit], cols[hit]), vals[hit].astype(np.float64) ** 2)
means = sums / trials
sigmas = np.sqrt((sqsums / trials - means**2) / trials)
print("sampled matrix over %d runs (per-cell standard errors in brackets):"
      % trials)
for a in range(ell):
    print("  ", ["%.2f [%.2f]" % (means[a][b], sigmas[a][b]) for b in range(ell)])

for a in range(ell):
    for b in range(ell):
        assert abs(means[a][b] - float(oracle.expectation[a][b])) < 5 * sigmas[a][b]

# The same numbers through the front door estimator.
est = snap.estimate_sampled(stream, hashes, grid, params, master_seed=14,
                            copies=trials)
print("estimate_sampled returns the same tally:", np.allclose(est, means))

# Nonqualifying in-class edges can inflate a cell, but never deflate
# one, and the total inflation is at most their count.
restricted = snap.pseudosnapshot_exact(stream, hashes, grid, params,
                                       restricted=True)
gaps = [[restricted[a][b] - oracle.expectation[a][b] for b in range(ell)]
        for a in range(ell)]
print("in-class tally minus qualifying tally, per cell:", gaps)
assert all(g >= 0 for row in gaps for g in row)
assert sum(g for row in gaps for g in row) <= oracle.nonqualifying
print("bias stays within the nonqualifying budget of", oracle.nonqualifying)
