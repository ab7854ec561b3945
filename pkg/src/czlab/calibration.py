"""Frozen calibration constants.

The underlying estimates only hold up to non-explicit universal constants,
so the lab replaces each of them with a number measured once on the
calibration ensemble (seeds 0-49 at the default configuration) and frozen
here.  Everything downstream -- regression tests, reports, acceptance
bounds -- quotes these values; re-deriving them is `czlab ensemble` on the
calibration seed range followed by the notes in each entry.

"""

# gate constant for the level-set iteration: beta >= C_GATE required
C_GATE = 8.0

# decay alternative slack: |B_5r \ A(beta t)| <= C_CLIMB * sigma/beta * |B_5r|
C_CLIMB = 16.0

# schedule entry point t_0 = C_0 * t_star and its companion c_0.  The gate
# c_0^(2/(p-2)) * C_0^(2 nu / p) >= C_GATE forces C_0 = (C_GATE/c_0)^(p/(2 nu));
# at p=4, q=8, c_0=1/2 that is 16^4.
C_0 = 65536.0
C_0_SMALL = 0.5

# exit ball inflation
EPS_EXIT = 1.0 / 16.0

# Lipschitz probe threshold: avg_{B_r}|grad u|^2 <= C_LIP * M^2.  Chosen on
# calibration probes (seeds 0-2, all cells): zero censoring, ~17% of cells
# with r_star above the ladder base, so the K distribution is nondegenerate.
C_LIP = 2.0

# moment normalization Y_R = C_Y * Z_R^((p+2)/(2(q-p))).  The raw Z_R
# power spans [2.5, 175] on the calibration seeds, so exp(Y_R^s) at
# C_Y = 1 is dominated by the single largest realization (first-25 vs
# all-50 empirical means differ by x2.1).  C_Y = 1/16 brings the
# exponential moment into the measurable range (x1.31 between halves,
# largest single term 27) while keeping Y_R order-one.
C_Y = 0.0625

# level threshold factor on the good-lambda exceptional sets: a ball is
# charged to f (resp. K) when its average of f^2 exceeds C_LEVEL*sigma*t
# (resp. of K^{q/2} exceeds C_LEVEL*omega^{q/2})
C_LEVEL = 0.25

# measured good-lambda constant: LHS <= C_MEAS * RHS at every attainable
# ladder level.  On the calibration seeds every non-aborted row has an
# empty LHS set (|{M_1 > beta t}| = 0 for t >= 2 t_star), so any positive
# constant verifies; 1.0 is kept as the neutral regression bound.
C_MEAS = 1.0

# maximal-function regression constants (weak-L1, strong-Lp, inf-on-ball),
# measured on 50 seeded lognormal-plus-spikes fields at R=16, delta=1/4,
# h=1 (worst cases 0.61 / 0.0085 / 0.0015 / 2.22) and frozen with margin
C_WEAK = 1.0
C_STRONG_P3 = 0.015
C_STRONG_P4 = 0.0025
C_INF = 3.5

# sparse-spike load: one spike per trial (density ~ 1/#candidate cells at
# R=32) so each realization contributes one clean sample of the local
# gradient-amplification ratio and t_star is not inflated by crowding;
# the peak-to-t_star reach needed for the upper tail ladder only appears
# in this dilute regime (measured on calibration seeds).  The amplitude
# cancels from M_1(|grad u|^2)/t_star and only sets the overall scale.
F_AMPLITUDE = 10.0
F_DENSITY = 0.0016
