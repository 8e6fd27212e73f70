"""Does letting the gain change once during the pulse help under delay?

With a delay the phase estimate lags the record, so a gain that is right
early in the pulse is too aggressive later.  A two-level gain (lam1 before the
switch time, lam2 after) lets the optimizer back off.  For a box-shaped pulse
the best schedule indeed starts high and drops.
"""

from dynelab import ConstantGain, merit_quadrature_delay, normalized, optimize_constant_gain, optimize_piecewise_gain

shape = normalized("rect")
for tau in (0.05, 0.1):
    const = optimize_constant_gain(shape, tau)
    pw = optimize_piecewise_gain(shape, tau, constant=const)
    print(f"tau = {tau}")
    print(f"  constant : lam = {const.lambda1:.4f}            F~* = {const.f_tilde_star:.6f}")
    print(f"  two-level: lam1 = {pw.lambda1:.4f}, lam2 = {pw.lambda2:.4f}, switch at t = {pw.t_l:.3f}"
          f"  F~* = {pw.f_tilde_star:.6f}  ({pw.message})")

base = merit_quadrature_delay(shape, ConstantGain(1.0), 0.1).f_tilde
print()
print(f"for reference, an untuned gain of 1 at tau = 0.1 gives F~ = {base:.6f}")
