"""What does feedback delay cost, and when does adaptivity stop paying?

For each mode shape the best constant feedback gain is found at a range of
delays (in units of the pulse width).  Delay erodes the merit steadily.  Past
a shape-dependent delay no finite gain beats simply turning the gain up until
the measurement becomes heterodyne, whose merit is 7/8; the optimizer then
reports the gain clamp.
"""

import numpy as np

from dynelab import Family, ShapeKind, delay_sweep, normalized

taus = np.round(np.arange(0.0, 0.501, 0.05), 3)
order = (ShapeKind.RISEEXP, ShapeKind.BILAT, ShapeKind.RECT, ShapeKind.FALLEXP)
sweeps = {k: delay_sweep(normalized(k), Family.CONSTANT, taus) for k in order}

print("best constant-gain merit F~* (gain in brackets, 'het' = heterodyne limit)")
print(f"{'tau':>6}" + "".join(f"{k.value:>20}" for k in order))
for i, tau in enumerate(taus):
    cells = []
    for k in order:
        r = sweeps[k][i]
        lam = "het" if "clamp" in r.message else f"{r.lambda1:.3f}"
        cells.append(f"{r.f_tilde_star:.5f} [{lam:>5}]")
    print(f"{tau:>6.2f}" + "".join(f"{c:>20}" for c in cells))

print()
for k in order:
    crossover = next((r.tau for r in sweeps[k] if "clamp" in r.message), None)
    print(f"{k.value:>8}: heterodyne is no longer beaten from tau = {crossover} on this grid")
