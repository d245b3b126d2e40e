"""Brute-force hazard-curve inversion over a dense height grid."""
import numpy as np

from wavesurrogate import hazard


def brute_force_curve(peaks, rates, grid, n_dense=1001):
    peaks = np.asarray(peaks, float)
    rates = np.asarray(rates, float)
    top = peaks.max() if len(peaks) else 0.0
    heights = np.union1d(np.linspace(0.0, top, n_dense), peaks)
    aep = np.array([1.0 - np.exp(-rates[peaks >= h].sum()) for h in heights])
    out = []
    for a in grid:
        ok = heights[(aep >= a) & (heights > 0)]
        out.append(ok.max() if len(ok) else 0.0)
    return np.array(out)


def random_instances(count=200, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(1, 7))
        if rng.random() < 0.3:
            peaks = rng.choice([0.0, 0.5, 1.0, 1.5], size=n)  # ties and zeros
        else:
            peaks = np.round(rng.uniform(0, 4, size=n), 3)
        rates = rng.uniform(1e-4, 0.4, size=n)
        yield peaks, rates


def mismatches(count=200, seed=0):
    grid = hazard.aep_grid()
    bad = []
    for k, (peaks, rates) in enumerate(random_instances(count, seed)):
        ids = list(range(1, len(peaks) + 1))
        got = hazard.exceedance_curve(dict(zip(ids, peaks)), dict(zip(ids, rates)), grid).hs
        want = brute_force_curve(peaks, rates, grid)
        if not np.array_equal(got, want):
            bad.append((k, peaks, rates, got, want))
    return bad
