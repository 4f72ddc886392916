"""Scaled, regularized classical dynamics of hydrogen in a magnetic field.

The electron motion at constant scaled energy e < 0 is described in
semiparabolic coordinates mu = sqrt(r+z), nu = sqrt(r-z) with conjugate
momenta, where the Coulomb singularity is regularized and trajectories
pass smoothly through the nucleus.  The pseudo-Hamiltonian

    h = (p_mu^2 + p_nu^2)/2 - e*(mu^2 + nu^2) + mu^2 nu^2 (mu^2 + nu^2)/8

is fixed to h = 2 on every physical trajectory; at the nucleus this
forces p_mu^2 + p_nu^2 = 4.  The accumulated scaled action
s = int p_mu dmu + p_nu dnu is carried as an extra state component so
that it shares the integrator's error control.

Stability information is propagated through two columns of the
variational equations, launched at the nucleus as unit transverse
position/momentum deviations.  The 2x2 transverse monodromy matrix at
any later point is obtained by projecting onto the instantaneous
direction perpendicular to the velocity, after quotienting out the
time-shift freedom along the flow (see transverse_monodromy).
"""

from dataclasses import dataclass, field

import numpy as np

from . import _integrator
from .errors import IntegrationError

# Column indices of Trajectory.events rows.
EV_LAM, EV_S, EV_MU, EV_NU, EV_PMU, EV_PNU, EV_ELL, EV_DIST2 = range(8)
EV_W = 8  # columns 8..15 hold the two variational columns

DEFAULT_RTOL = 1e-12
DEFAULT_ATOL = 1e-12
ENERGY_DRIFT_BOUND = 1e-9


@dataclass(frozen=True)
class ScaledEnergy:
    """Dimensionless scaled energy; only the bound regime (value < 0)."""

    value: float

    def __post_init__(self):
        if not self.value < 0.0:
            raise ValueError(
                f"scaled energy must be negative, got {self.value}")


@dataclass
class PhaseState:
    """Regularized phase-space point with accumulated action and time."""

    mu: float
    nu: float
    p_mu: float
    p_nu: float
    s: float = 0.0
    t: float = 0.0


@dataclass
class MonodromyState:
    """2x2 transverse linearization of the flow about a trajectory."""

    m: np.ndarray = field(
        default_factory=lambda: np.eye(2))

    @classmethod
    def identity(cls):
        return cls(np.eye(2))

    @property
    def m12(self):
        return float(self.m[0, 1])

    @property
    def det_residual(self):
        """|det(m) - 1|; symplecticity demands this stays at zero."""
        return abs(float(np.linalg.det(self.m)) - 1.0)


def hamiltonian(state: PhaseState, e: ScaledEnergy) -> float:
    """Pseudo-energy h(state); equals 2 on every physical trajectory."""
    return float(_integrator.hamiltonian_value(
        state.mu, state.nu, state.p_mu, state.p_nu, e.value))


def potential_gradient(mu, nu, e: ScaledEnergy):
    """Gradient of the regularized potential wrt (mu, nu)."""
    ev = e.value
    dmu = -2.0 * ev * mu + 0.5 * mu ** 3 * nu ** 2 + 0.25 * mu * nu ** 4
    dnu = -2.0 * ev * nu + 0.5 * nu ** 3 * mu ** 2 + 0.25 * nu * mu ** 4
    return np.array([dmu, dnu])


def eom_rhs(state: PhaseState, e: ScaledEnergy):
    """Hamilton's equations of h plus the action rate.

    Returns (dmu, dnu, dp_mu, dp_nu, ds) with respect to the
    regularized time; ds = p_mu*dmu + p_nu*dnu.
    """
    out = np.empty(5)
    y = np.array([state.mu, state.nu, state.p_mu, state.p_nu, state.s])
    _integrator._rhs(y, out, e.value, 5)
    return tuple(out)


def launch_from_nucleus(theta_i: float, e: ScaledEnergy) -> PhaseState:
    """State at the origin for a launch at physical angle theta_i.

    The half-angle parametrization p_mu = 2 cos(theta_i/2),
    p_nu = 2 sin(theta_i/2) maps the physical launch angle with respect
    to the field axis onto the semiparabolic momentum direction.
    """
    if not 0.0 <= theta_i <= np.pi:
        raise ValueError(f"launch angle must lie in [0, pi], got {theta_i}")
    half = 0.5 * theta_i
    return PhaseState(0.0, 0.0, 2.0 * np.cos(half), 2.0 * np.sin(half))


def fold_return_angle(p_mu: float, p_nu: float) -> float:
    """Physical return angle from semiparabolic momenta at the nucleus.

    Semiparabolic coordinates are sign-gauge: fold both momentum signs
    into the first quadrant, theta = 2*atan2(|p_nu|, |p_mu|) in [0, pi].
    """
    return 2.0 * np.arctan2(abs(p_nu), abs(p_mu))


def _transverse_frame(p_mu, p_nu):
    pnorm = np.hypot(p_mu, p_nu)
    e_v = np.array([p_mu, p_nu]) / pnorm
    e_t = np.array([-p_nu, p_mu]) / pnorm
    return pnorm, e_v, e_t


def transverse_monodromy(mu, nu, p_mu, p_nu, w, e: ScaledEnergy) -> np.ndarray:
    """Reduce the variational columns to the 2x2 transverse monodromy.

    The reduction quotients out the time-shift freedom along the flow
    (the longitudinal position component) and evaluates deviations in
    the chart (dq_perp, dp_perp) perpendicular to the instantaneous
    velocity.  Valid wherever |p| > 0; at a nucleus passage it reduces
    to plain transverse projection because the potential gradient
    vanishes there.
    """
    pnorm, e_v, e_t = _transverse_frame(p_mu, p_nu)
    grad = potential_gradient(mu, nu, e)
    gt = float(e_t @ grad)
    m = np.empty((2, 2))
    for c in range(2):
        dq = np.asarray(w[4 * c:4 * c + 2], dtype=float)
        dp = np.asarray(w[4 * c + 2:4 * c + 4], dtype=float)
        shift = float(e_v @ dq) / pnorm
        m[0, c] = float(e_t @ dq)
        m[1, c] = float(e_t @ dp) + shift * gt
    return m


@dataclass
class Trajectory:
    """Record of one integrated trajectory.

    events holds one row per closest-approach pass (local minimum of
    mu^2 + nu^2) with columns indexed by the EV_* constants; fzeros
    holds the regularized times of transverse-focusing zeros (caustic
    crossings) when the monodromy was propagated.
    """

    final: PhaseState
    events: np.ndarray
    fzeros: np.ndarray
    fzero_flags: int
    energy_drift: float
    scaled_energy: ScaledEnergy
    monodromy: bool
    theta_i: float | None = None

    @property
    def n_passes(self) -> int:
        return self.events.shape[0]

    def pass_state(self, i: int) -> PhaseState:
        r = self.events[i]
        return PhaseState(r[EV_MU], r[EV_NU], r[EV_PMU], r[EV_PNU],
                          s=r[EV_S], t=r[EV_LAM])

    def monodromy_at_pass(self, i: int) -> MonodromyState:
        if not self.monodromy:
            raise ValueError("trajectory was integrated without monodromy")
        r = self.events[i]
        m = transverse_monodromy(r[EV_MU], r[EV_NU], r[EV_PMU], r[EV_PNU],
                                 r[EV_W:EV_W + 8], self.scaled_energy)
        return MonodromyState(m)

    def caustics_before(self, lam: float) -> int:
        """Number of transverse-focusing zeros strictly before time lam."""
        return int(np.searchsorted(self.fzeros, lam - 1e-13))


def _initial_vector(state: PhaseState, monodromy: bool) -> np.ndarray:
    if monodromy:
        y0 = np.zeros(13)
        pnorm, _, e_t = _transverse_frame(state.p_mu, state.p_nu)
        # Column 0: unit transverse position deviation; column 1: unit
        # transverse momentum deviation.  Identity in the reduced chart.
        y0[5:7] = e_t
        y0[11:13] = e_t
    else:
        y0 = np.zeros(5)
    y0[0:4] = (state.mu, state.nu, state.p_mu, state.p_nu)
    y0[4] = state.s
    return y0


def integrate(state0: PhaseState, e: ScaledEnergy, s_limit: float, *,
              monodromy: bool = False, rtol: float = DEFAULT_RTOL,
              atol: float = DEFAULT_ATOL, max_events: int = 16384,
              max_steps: int = 50_000_000,
              h0: float = 1e-4) -> Trajectory:
    """Integrate until the accumulated action reaches s_limit.

    Records every closest-approach pass with interpolated states and,
    with monodromy=True, the variational columns at each pass plus the
    times of transverse-focusing zeros.  Raises IntegrationError (with
    the partial trajectory attached) on step-size underflow or buffer
    exhaustion; an energy drift beyond the 1e-9 bound is reported on the
    returned record, never silently accepted.
    """
    h_val = hamiltonian(state0, e)
    if abs(h_val - 2.0) > 1e-8:
        raise ValueError(
            f"initial state violates h = 2 (got h = {h_val!r})")
    if s_limit <= state0.s:
        raise ValueError("s_limit must exceed the initial action")

    nvar = 13 if monodromy else 5
    y0 = _initial_vector(state0, monodromy)
    ev = np.empty((max_events, _integrator.EV_COLS))
    fz = np.empty(max_events if monodromy else 1)
    y_final = np.empty(nvar)

    status, n_ev, n_fz, n_flag, lam, drift = _integrator.propagate(
        y0, nvar, e.value, s_limit, rtol, atol, h0, max_steps, ev, fz,
        y_final)

    final = PhaseState(y_final[0], y_final[1], y_final[2], y_final[3],
                       s=y_final[4], t=lam)
    traj = Trajectory(
        final=final,
        events=ev[:n_ev].copy(),
        fzeros=np.sort(fz[:n_fz].copy()),
        fzero_flags=n_flag,
        energy_drift=drift,
        scaled_energy=e,
        monodromy=monodromy,
        theta_i=None,
    )
    if status == _integrator.STEP_UNDERFLOW:
        raise IntegrationError(
            f"step-size underflow at t = {lam!r} (singular configuration)",
            partial=traj)
    if status == _integrator.MAX_STEPS:
        raise IntegrationError(
            f"step budget exhausted at t = {lam!r}", partial=traj)
    if status == _integrator.BUFFER_FULL:
        raise IntegrationError(
            "event buffer exhausted; raise max_events", partial=traj)
    return traj


def integrate_from_angle(theta_i: float, e: ScaledEnergy, s_limit: float,
                         **kwargs) -> Trajectory:
    """Convenience wrapper: launch from the nucleus and integrate."""
    traj = integrate(launch_from_nucleus(theta_i, e), e, s_limit, **kwargs)
    traj.theta_i = theta_i
    return traj
