"""Compiled integration kernel for the regularized semiparabolic dynamics.

State layout (length 5 or 13):

    y[0:4]  = (mu, nu, p_mu, p_nu)   regularized phase-space point
    y[4]    = s                      accumulated scaled action
    y[5:13] = two columns of the variational (monodromy) solution,
              each column ordered (dmu, dnu, dp_mu, dp_nu); column 0 is
              launched as a transverse position deviation, column 1 as
              a transverse momentum deviation.

The pseudo-Hamiltonian is

    h = (p_mu^2 + p_nu^2)/2 - e*(mu^2 + nu^2) + mu^2 nu^2 (mu^2 + nu^2)/8

with e the (negative) scaled energy and h = 2 fixed on every trajectory.
The independent variable is the regularized time; the action rate is
p_mu^2 + p_nu^2.

The stepper is an adaptive Dormand-Prince 5(4) pair with the standard
quartic continuous extension, which is used to localize

  * closest-approach passes: ascending zeros of g = mu*p_mu + nu*p_nu,
  * zeros of the transverse focusing function F = dq x p built from the
    momentum-deviation column (caustic crossings; chart-free),
  * the exact point where the accumulated action reaches the cutoff.

Events are appended to a caller-provided buffer with rows

    (lam, s, mu, nu, p_mu, p_nu, ell, dist2, W[0:8])

where ell = mu*p_nu - nu*p_mu is the signed miss function and dist2 the
squared distance from the origin at the pass.
"""

import numpy as np
from numba import njit

# Status codes returned by propagate().
OK = 0
MAX_STEPS = 1
STEP_UNDERFLOW = 2
BUFFER_FULL = 3

EV_COLS = 16

# Dormand-Prince 5(4) tableau.
_C2, _C3, _C4, _C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = (19372.0 / 6561.0, -25360.0 / 2187.0,
                          64448.0 / 6561.0, -212.0 / 729.0)
_A61, _A62, _A63, _A64, _A65 = (9017.0 / 3168.0, -355.0 / 33.0,
                                46732.0 / 5247.0, 49.0 / 176.0,
                                -5103.0 / 18656.0)
_B1, _B3, _B4, _B5, _B6 = (35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0,
                           -2187.0 / 6784.0, 11.0 / 84.0)
# Error coefficients (5th minus embedded 4th order).
_E1, _E3, _E4, _E5, _E6, _E7 = (71.0 / 57600.0, -71.0 / 16695.0,
                                71.0 / 1920.0, -17253.0 / 339200.0,
                                22.0 / 525.0, -1.0 / 40.0)
# Dense-output coefficients.
_D1 = -12715105075.0 / 11282082432.0
_D3 = 87487479700.0 / 32700410799.0
_D4 = -10690763975.0 / 1880347072.0
_D5 = 701980252875.0 / 199316789632.0
_D6 = -1453857185.0 / 822651844.0
_D7 = 69997945.0 / 29380423.0

_HMAX = 0.1
_SAFETY = 0.9


@njit(cache=True, inline="always")
def _rhs(y, out, e, nvar):
    mu = y[0]
    nu = y[1]
    pmu = y[2]
    pnu = y[3]
    mu2 = mu * mu
    nu2 = nu * nu
    out[0] = pmu
    out[1] = pnu
    out[2] = 2.0 * e * mu - 0.5 * mu * mu2 * nu2 - 0.25 * mu * nu2 * nu2
    out[3] = 2.0 * e * nu - 0.5 * nu * nu2 * mu2 - 0.25 * nu * mu2 * mu2
    out[4] = pmu * pmu + pnu * pnu
    if nvar > 5:
        # Variational flow: d(dq) = dp, d(dp) = -Hess(V) dq.
        vmm = -2.0 * e + 1.5 * mu2 * nu2 + 0.25 * nu2 * nu2
        vnn = -2.0 * e + 1.5 * mu2 * nu2 + 0.25 * mu2 * mu2
        vmn = mu * nu * (mu2 + nu2)
        for c in range(2):
            b = 5 + 4 * c
            out[b + 0] = y[b + 2]
            out[b + 1] = y[b + 3]
            out[b + 2] = -(vmm * y[b + 0] + vmn * y[b + 1])
            out[b + 3] = -(vmn * y[b + 0] + vnn * y[b + 1])


@njit(cache=True, inline="always")
def hamiltonian_value(mu, nu, pmu, pnu, e):
    r2 = mu * mu + nu * nu
    return (0.5 * (pmu * pmu + pnu * pnu) - e * r2
            + 0.125 * mu * mu * nu * nu * r2)


@njit(cache=True, inline="always")
def _dense_eval(rcont, theta, out, nvar):
    th1 = 1.0 - theta
    for i in range(nvar):
        out[i] = rcont[0, i] + theta * (
            rcont[1, i] + th1 * (
                rcont[2, i] + theta * (rcont[3, i] + th1 * rcont[4, i])))


@njit(cache=True, inline="always")
def _dense_build(y0, y1, h, k, rcont, nvar):
    for i in range(nvar):
        dy = y1[i] - y0[i]
        rcont[0, i] = y0[i]
        rcont[1, i] = dy
        rcont[2, i] = h * k[0, i] - dy
        rcont[3, i] = dy - h * k[6, i] - rcont[2, i]
        rcont[4, i] = h * (_D1 * k[0, i] + _D3 * k[2, i] + _D4 * k[3, i]
                           + _D5 * k[4, i] + _D6 * k[5, i] + _D7 * k[6, i])


@njit(cache=True)
def _bisect_dense(rcont, nvar, kind, target, lo, hi, flo, scratch):
    """Bisect theta in [lo, hi] for a dense-output scalar crossing.

    kind 0: g = mu*p_mu + nu*p_nu - target
    kind 1: s - target
    kind 2: F = dq1 x p - target  (momentum-deviation column cross p)
    """
    a, b = lo, hi
    fa = flo
    for _ in range(90):
        m = 0.5 * (a + b)
        _dense_eval(rcont, m, scratch, nvar)
        if kind == 0:
            fm = scratch[0] * scratch[2] + scratch[1] * scratch[3] - target
        elif kind == 1:
            fm = scratch[4] - target
        else:
            fm = scratch[9] * scratch[3] - scratch[10] * scratch[2] - target
        if fa * fm <= 0.0:
            b = m
        else:
            a = m
            fa = fm
        if b - a < 1e-15:
            break
    m = 0.5 * (a + b)
    _dense_eval(rcont, m, scratch, nvar)
    return m


@njit(cache=True, nogil=True)
def propagate(y0, nvar, e, s_limit, rtol, atol, h0, max_steps,
              ev_out, fz_out, y_final):
    """Integrate until the accumulated action reaches s_limit.

    The step-size controller acts on the trajectory components only
    (indices 0..4), so the computed phase-space flow is bit-identical
    with and without the variational columns; the latter are validated
    downstream through the unit-determinant invariant of the reduced
    monodromy.

    Returns (status, n_events, n_fzeros, n_fzero_flags, lam_final,
    max_energy_drift).
    """
    y = np.empty(nvar)
    ynew = np.empty(nvar)
    ytmp = np.empty(nvar)
    scratch = np.empty(nvar)
    k = np.empty((7, nvar))
    rcont = np.empty((5, nvar))
    for i in range(nvar):
        y[i] = y0[i]

    max_ev = ev_out.shape[0]
    max_fz = fz_out.shape[0]
    n_ev = 0
    n_fz = 0
    n_flag = 0
    lam = 0.0
    h = h0
    status = MAX_STEPS
    have_dense = False

    _rhs(y, k[0], e, nvar)
    g_prev = y[0] * y[2] + y[1] * y[3]
    f_prev = 0.0
    f_started = False
    fscale = 1.0

    h_drift = 0.0

    step = 0
    while step < max_steps:
        step += 1
        if h > _HMAX:
            h = _HMAX
        if h < 1e-14 * max(1.0, abs(lam)):
            status = STEP_UNDERFLOW
            break

        # Stage evaluations.
        for i in range(nvar):
            ytmp[i] = y[i] + h * _A21 * k[0, i]
        _rhs(ytmp, k[1], e, nvar)
        for i in range(nvar):
            ytmp[i] = y[i] + h * (_A31 * k[0, i] + _A32 * k[1, i])
        _rhs(ytmp, k[2], e, nvar)
        for i in range(nvar):
            ytmp[i] = y[i] + h * (_A41 * k[0, i] + _A42 * k[1, i]
                                  + _A43 * k[2, i])
        _rhs(ytmp, k[3], e, nvar)
        for i in range(nvar):
            ytmp[i] = y[i] + h * (_A51 * k[0, i] + _A52 * k[1, i]
                                  + _A53 * k[2, i] + _A54 * k[3, i])
        _rhs(ytmp, k[4], e, nvar)
        for i in range(nvar):
            ytmp[i] = y[i] + h * (_A61 * k[0, i] + _A62 * k[1, i]
                                  + _A63 * k[2, i] + _A64 * k[3, i]
                                  + _A65 * k[4, i])
        _rhs(ytmp, k[5], e, nvar)
        for i in range(nvar):
            ynew[i] = y[i] + h * (_B1 * k[0, i] + _B3 * k[2, i]
                                  + _B4 * k[3, i] + _B5 * k[4, i]
                                  + _B6 * k[5, i])
        _rhs(ynew, k[6], e, nvar)

        # Error norm over the trajectory components.
        errsum = 0.0
        for i in range(5):
            ei = h * (_E1 * k[0, i] + _E3 * k[2, i] + _E4 * k[3, i]
                      + _E5 * k[4, i] + _E6 * k[5, i] + _E7 * k[6, i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            errsum += (ei / sc) ** 2
        err = np.sqrt(errsum / 5.0)

        if err > 1.0:
            fac = _SAFETY * err ** -0.2
            if fac < 0.2:
                fac = 0.2
            h *= fac
            continue

        # Accepted step: localize events with the dense interpolant.
        have_dense = False
        theta_end = 1.0
        hit_limit = ynew[4] >= s_limit

        if hit_limit:
            _dense_build(y, ynew, h, k, rcont, nvar)
            have_dense = True
            theta_end = _bisect_dense(rcont, nvar, 1, s_limit, 0.0, 1.0,
                                      y[4] - s_limit, scratch)
            for i in range(nvar):
                y_final[i] = scratch[i]

        g_new = ynew[0] * ynew[2] + ynew[1] * ynew[3]
        if g_prev < 0.0 and g_new >= 0.0:
            if not have_dense:
                _dense_build(y, ynew, h, k, rcont, nvar)
                have_dense = True
            th = _bisect_dense(rcont, nvar, 0, 0.0, 0.0, 1.0, g_prev,
                               scratch)
            if th <= theta_end:
                if n_ev >= max_ev:
                    status = BUFFER_FULL
                    break
                ev_out[n_ev, 0] = lam + th * h
                ev_out[n_ev, 1] = scratch[4]
                ev_out[n_ev, 2] = scratch[0]
                ev_out[n_ev, 3] = scratch[1]
                ev_out[n_ev, 4] = scratch[2]
                ev_out[n_ev, 5] = scratch[3]
                ev_out[n_ev, 6] = (scratch[0] * scratch[3]
                                   - scratch[1] * scratch[2])
                ev_out[n_ev, 7] = (scratch[0] * scratch[0]
                                   + scratch[1] * scratch[1])
                if nvar > 5:
                    for i in range(8):
                        ev_out[n_ev, 8 + i] = scratch[5 + i]
                else:
                    for i in range(8):
                        ev_out[n_ev, 8 + i] = 0.0
                n_ev += 1

        if nvar > 5:
            f_new = ynew[9] * ynew[3] - ynew[10] * ynew[2]
            af = abs(f_new)
            if af > fscale:
                fscale = af
            if f_started:
                if f_prev * f_new < 0.0:
                    if not have_dense:
                        _dense_build(y, ynew, h, k, rcont, nvar)
                        have_dense = True
                    th = _bisect_dense(rcont, nvar, 2, 0.0, 0.0, 1.0,
                                       f_prev, scratch)
                    if th <= theta_end:
                        if n_fz >= max_fz:
                            status = BUFFER_FULL
                            break
                        fz_out[n_fz] = lam + th * h
                        n_fz += 1
                elif af < 1e-12 * fscale and not hit_limit:
                    # Grid point suspiciously close to a focusing zero.
                    n_flag += 1
            f_prev = f_new
            f_started = True

        if hit_limit:
            lam += theta_end * h
            status = OK
            break

        lam += h
        for i in range(nvar):
            y[i] = ynew[i]
        for i in range(nvar):
            k[0, i] = k[6, i]
        g_prev = g_new

        drift = abs(hamiltonian_value(y[0], y[1], y[2], y[3], e) - 2.0)
        if drift > h_drift:
            h_drift = drift

        fac = _SAFETY * err ** -0.2 if err > 0.0 else 5.0
        if fac > 5.0:
            fac = 5.0
        if fac < 0.2:
            fac = 0.2
        h *= fac

    if status != OK:
        for i in range(nvar):
            y_final[i] = y[i]

    return status, n_ev, n_fz, n_flag, lam, h_drift
