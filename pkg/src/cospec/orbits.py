"""Search, refinement and bookkeeping of closed-at-the-nucleus orbits.

A closed orbit leaves the nucleus at launch angle theta_i, returns to it
at angle theta_f, and is characterized by its scaled action s, the
monodromy element m12 and the caustic (Maslov) count.  The search scans
launch angles over (0, pi), records the signed miss function

    ell = mu*p_nu - nu*p_mu

at every closest-approach pass, and brackets sign changes of ell between
adjacent seeds at fixed pass index.  Brackets are refined by a Brent
iteration on theta_i; an accepted orbit must return to within 1e-10 of
the origin.

Because trajectories pass smoothly through the regularized nucleus, the
continuation of a closed orbit retraces it backwards, so the k-th return
is the k-th repetition with action exactly k*s.  Repetitions are
produced by direct integration over k returns (never by composing
matrices), which keeps the action/stability/caustic bookkeeping honest
for asymmetric orbits.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import dynamics as dyn
from .dynamics import (EV_DIST2, EV_ELL, EV_LAM, EV_PMU, EV_PNU, EV_S,
                       ScaledEnergy, Trajectory)
from .errors import IntegrationError, RefinementError

log = logging.getLogger(__name__)

# Acceptance thresholds for a refined orbit.  The miss function cannot
# be driven below the launch-angle roundoff amplified by the orbit's
# own instability, so the gate grows with |m12| while the closure
# distance stays bounded by the table invariant.
MISS_TOL = 1e-12          # |ell| at the return pass, stable orbits
CLOSURE_TOL = 1e-10       # distance of the return from the origin


def _miss_gate(m12: float) -> float:
    return max(MISS_TOL, 100.0 * abs(m12) * 2.23e-16)
PASS_MATCH_WINDOW = 2.5   # max |s - s_expected| when re-identifying a pass
SCAN_RTOL = 1e-10         # bracketing only; refinement re-integrates tighter
# Angular resolution floor of the adaptive scan.  Closed orbits keep
# accumulating geometrically in launch angle near unstable channels, so
# any census is resolution-qualified; this floor reproduces the
# published census convention while the members it skips carry
# amplitudes |m12|^(-1/2) too small to affect recurrence signals.
DEFAULT_MIN_WIDTH = 1e-5
S_PAD = 3.0               # integrate slightly past the cutoff


@dataclass(frozen=True)
class ClosedOrbit:
    """One closed orbit (or repetition) with its semiclassical data."""

    id: int
    primitive_id: int
    repetition: int
    theta_i: float
    theta_f: float
    s: float
    m12: float
    maslov: int
    closure_residual: float

    @property
    def is_primitive(self) -> bool:
        return self.repetition == 1

    @property
    def is_axial(self) -> bool:
        return self.theta_i < 1e-12 or self.theta_i > math.pi - 1e-12


@dataclass(frozen=True)
class Bracket:
    """Launch-angle interval with a sign change of the miss function."""

    theta_lo: float
    theta_hi: float
    ell_lo: float
    ell_hi: float
    s_est: float
    pass_index: int


@dataclass
class OrbitTable:
    """Immutable-by-convention table of closed orbits, sorted by action."""

    orbits: list
    scaled_energy: float
    s_max: float
    n_seeds: int
    rejections: list = field(default_factory=list)

    def __len__(self):
        return len(self.orbits)

    def primitives(self):
        return [o for o in self.orbits if o.is_primitive]

    def save(self, path):
        lines = [
            "# closed-orbit table",
            f"# scaled_energy = {self.scaled_energy!r}",
            f"# s_max = {self.s_max!r}",
            f"# n_seeds = {self.n_seeds}",
            "# columns: id primitive_id repetition theta_i theta_f s "
            "m12 maslov closure_residual",
        ]
        for o in self.orbits:
            lines.append(
                f"{o.id} {o.primitive_id} {o.repetition} "
                f"{o.theta_i:.17g} {o.theta_f:.17g} {o.s:.17g} "
                f"{o.m12:.17g} {o.maslov} {o.closure_residual:.17g}")
        text = "\n".join(lines) + "\n"
        with open(path, "w") as fh:
            fh.write(text)

    @classmethod
    def load(cls, path):
        orbits = []
        meta = {"scaled_energy": math.nan, "s_max": math.nan, "n_seeds": 0}
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    for key in ("scaled_energy", "s_max", "n_seeds"):
                        tag = f"# {key} ="
                        if line.startswith(tag):
                            meta[key] = float(line[len(tag):])
                    continue
                f = line.split()
                orbits.append(ClosedOrbit(
                    id=int(f[0]), primitive_id=int(f[1]),
                    repetition=int(f[2]), theta_i=float(f[3]),
                    theta_f=float(f[4]), s=float(f[5]), m12=float(f[6]),
                    maslov=int(f[7]), closure_residual=float(f[8])))
        return cls(orbits=orbits, scaled_energy=meta["scaled_energy"],
                   s_max=meta["s_max"], n_seeds=int(meta["n_seeds"]))

    def sha256(self):
        h = hashlib.sha256()
        for o in self.orbits:
            h.update((f"{o.theta_i:.17g},{o.s:.17g},{o.m12:.17g},"
                      f"{o.maslov}\n").encode())
        return h.hexdigest()

    def census(self):
        """(primitive, total) orbit counts, z-reflection pairs counted once.

        The table stores both members of every reflection pair because
        each enters the recurrence sum individually; the conventional
        census counts mirror-image orbits as one.
        """
        def classes(rows):
            keys = set()
            for o in rows:
                k1 = (round(o.theta_i, 8), round(o.theta_f, 8),
                      round(o.s, 6))
                k2 = (round(math.pi - o.theta_i, 8),
                      round(math.pi - o.theta_f, 8), round(o.s, 6))
                keys.add(min(k1, k2))
            return len(keys)

        return classes(self.primitives()), classes(self.orbits)


class _ScanState:
    """Bookkeeping for the adaptive launch-angle scan."""

    def __init__(self, e, s_max, rtol, atol, min_width, max_depth):
        self.e = e
        self.s_max = s_max
        self.rtol = rtol
        self.atol = atol
        self.min_width = min_width
        self.max_depth = max_depth
        self.brackets = []
        self.n_traj = 0

    def sample(self, theta):
        traj = dyn.integrate_from_angle(
            theta, self.e, self.s_max + S_PAD,
            rtol=self.rtol, atol=self.atol)
        self.n_traj += 1
        ev = traj.events
        return (ev[:, EV_S].copy(), ev[:, EV_ELL].copy(),
                ev[:, EV_DIST2].copy())


# A pass farther than this from the origin cannot be continued into a
# nucleus return nearby; unmatched passes beyond it do not trigger
# angular subdivision.
_DEEP_PASS_DIST = 0.6
# Same-sign miss values below this hint at a root pair hiding between
# two seeds (orbits near a tangent bifurcation have a flat, shallow dip).
_SMALL_ELL = 0.02


def _suspicious(state, da, db, pairs, depth):
    sa, la, d2a = da
    sb, lb, d2b = db
    matched_a = {i for i, _ in pairs}
    matched_b = {j for _, j in pairs}
    lim = _DEEP_PASS_DIST ** 2
    for i in range(len(sa)):
        if i not in matched_a and d2a[i] < lim and sa[i] <= state.s_max:
            return True
    for j in range(len(sb)):
        if j not in matched_b and d2b[j] < lim and sb[j] <= state.s_max:
            return True
    if depth == 0:
        for i, j in pairs:
            if (la[i] * lb[j] > 0.0
                    and min(abs(la[i]), abs(lb[j])) < _SMALL_ELL
                    and min(d2a[i], d2b[j]) < lim):
                return True
    return False


def _scan_interval(state, th_a, da, th_b, db, depth):
    pairs = _match_passes(da[0], db[0])
    subdivide = (th_b - th_a > state.min_width
                 and depth < state.max_depth
                 and _suspicious(state, da, db, pairs, depth))
    if subdivide:
        th_m = 0.5 * (th_a + th_b)
        dm = state.sample(th_m)
        _scan_interval(state, th_a, da, th_m, dm, depth + 1)
        _scan_interval(state, th_m, dm, th_b, db, depth + 1)
        return
    sa, la, _ = da
    sb, lb, _ = db
    for ka, kb in pairs:
        a, b = la[ka], lb[kb]
        if sa[ka] > state.s_max and sb[kb] > state.s_max:
            continue
        if a == 0.0:
            state.brackets.append(Bracket(th_a, th_a, 0.0, 0.0,
                                          sa[ka], ka))
        elif a * b < 0.0:
            state.brackets.append(Bracket(
                th_a, th_b, a, b, 0.5 * (sa[ka] + sb[kb]), ka))


def scan_launch_angles(e: ScaledEnergy, s_max: float, n_seeds: int, *,
                       rtol: float = SCAN_RTOL, atol: float = SCAN_RTOL,
                       min_width: float = DEFAULT_MIN_WIDTH,
                       max_depth: int = 40) -> list:
    """Bracket closed-orbit candidates over launch angles in (0, pi).

    Integrates n_seeds equidistant (midpoint-offset) launches, records
    the miss function at every closest-approach pass, and emits a
    Bracket wherever ell changes sign between adjacent seeds for passes
    matched by nearest action along the continuation in theta_i.

    Seed intervals whose pass structure changes near the nucleus (a
    pass is created or destroyed, or a matched pass shows a shallow
    same-sign dip) are subdivided recursively down to min_width: closed
    orbits accumulate geometrically in launch angle wherever a
    trajectory shadows an unstable periodic orbit, and a uniform grid
    cannot resolve such families.  Exactly axial launches sit on the
    interval boundary and are handled separately.
    """
    if n_seeds < 2:
        raise ValueError("n_seeds must be at least 2")
    state = _ScanState(e, s_max, rtol, atol, min_width, max_depth)
    thetas = np.pi * (np.arange(n_seeds) + 0.5) / n_seeds
    prev_theta = None
    prev_data = None
    for j, theta in enumerate(thetas):
        data = state.sample(theta)
        if prev_data is not None:
            _scan_interval(state, prev_theta, prev_data, theta, data, 0)
        prev_theta, prev_data = theta, data
        if (j + 1) % 2000 == 0:
            log.info("scan: %d/%d seeds (%d trajectories), %d brackets",
                     j + 1, n_seeds, state.n_traj, len(state.brackets))
    log.info("scan complete: %d brackets from %d seeds "
             "(%d trajectories)", len(state.brackets), n_seeds,
             state.n_traj)
    return state.brackets


def _match_passes(s_a, s_b, tol: float = 1.0):
    """Pair up two sorted pass-action lists from adjacent seeds.

    Pass actions drift only slightly between neighbouring launch
    angles, while pass indices shift whenever a shallow local minimum
    of the nucleus distance is created or destroyed; matching on
    nearest action (mutually closest, within tol) tracks a pass along
    the continuation in theta_i through such events.
    """
    pairs = []
    i = j = 0
    na, nb = len(s_a), len(s_b)
    while i < na and j < nb:
        d = s_a[i] - s_b[j]
        if abs(d) <= tol:
            if i + 1 < na and abs(s_a[i + 1] - s_b[j]) < abs(d):
                i += 1
                continue
            if j + 1 < nb and abs(s_a[i] - s_b[j + 1]) < abs(d):
                j += 1
                continue
            pairs.append((i, j))
            i += 1
            j += 1
        elif d < 0.0:
            i += 1
        else:
            j += 1
    return pairs


def _pass_nearest(traj: Trajectory, s_target: float) -> int:
    if traj.n_passes == 0:
        raise RefinementError("trajectory has no closest-approach passes")
    i = int(np.argmin(np.abs(traj.events[:, EV_S] - s_target)))
    if abs(traj.events[i, EV_S] - s_target) > PASS_MATCH_WINDOW:
        raise RefinementError(
            f"pass near s = {s_target:.3f} disappeared during refinement")
    return i


def _miss(theta, e, s_est, rtol, atol):
    traj = dyn.integrate_from_angle(theta, e, s_est + S_PAD,
                                    rtol=rtol, atol=atol)
    i = _pass_nearest(traj, s_est)
    return float(traj.events[i, EV_ELL])


def maslov_index(traj: Trajectory, return_pass: int) -> int:
    """Caustic count: transverse-focusing zeros before the return pass.

    Counts sign changes of the focusing function F = dq x p along the
    open trajectory from launch to the given pass.  F is smooth through
    classical turning points, where the velocity-aligned chart itself
    would flip; each such touch contributes one caustic.
    """
    if traj.fzero_flags:
        log.warning("focusing function grazed zero %d time(s); "
                    "caustic count may need manual resolution",
                    traj.fzero_flags)
    lam = traj.events[return_pass, EV_LAM]
    return traj.caustics_before(lam)


def _orbit_from_trajectory(traj: Trajectory, theta: float, pass_idx: int,
                           repetition: int) -> ClosedOrbit:
    row = traj.events[pass_idx]
    m = traj.monodromy_at_pass(pass_idx).m
    return ClosedOrbit(
        id=-1, primitive_id=-1, repetition=repetition,
        theta_i=theta,
        theta_f=dyn.fold_return_angle(row[EV_PMU], row[EV_PNU]),
        s=float(row[EV_S]),
        m12=float(m[0, 1]),
        maslov=maslov_index(traj, pass_idx),
        closure_residual=float(math.sqrt(row[EV_DIST2])),
    )


def _secant_polish(theta0: float, e: ScaledEnergy, s_est: float,
                   rtol: float, atol: float, *,
                   guard: float = 1e-5, max_iter: int = 14) -> float:
    """Polish a miss-function root at the working tolerance.

    The computed miss function is smooth in theta at fixed integrator
    settings, so a secant iteration reaches the evaluation floor in a
    few steps even where d(ell)/d(theta) = -2*m12 is tiny (orbits near a
    bifurcation).  The iteration is confined to a guard interval around
    the starting point; leaving it means the root was an artifact.
    """
    lo = max(theta0 - guard, 0.0)
    hi = min(theta0 + guard, math.pi)
    f0 = _miss(theta0, e, s_est, rtol, atol)
    if f0 == 0.0:
        return theta0
    t1 = theta0 + 1e-9 if theta0 + 1e-9 <= hi else theta0 - 1e-9
    f1 = _miss(t1, e, s_est, rtol, atol)
    best_t, best_f = (theta0, abs(f0)) if abs(f0) < abs(f1) else (t1, abs(f1))
    t0 = theta0
    for _ in range(max_iter):
        if f1 == f0:
            break
        t2 = t1 - f1 * (t1 - t0) / (f1 - f0)
        if not lo <= t2 <= hi:
            raise RefinementError(
                f"secant polish left its guard interval near {theta0!r}")
        f2 = _miss(t2, e, s_est, rtol, atol)
        t0, f0, t1, f1 = t1, f1, t2, f2
        if abs(f2) < best_f:
            best_t, best_f = t2, abs(f2)
        if best_f < 0.25 * MISS_TOL:
            break
    return best_t


def refine_closed_orbit(bracket: Bracket, e: ScaledEnergy, *,
                        rtol: float = dyn.DEFAULT_RTOL,
                        atol: float = dyn.DEFAULT_ATOL,
                        max_iter: int = 80) -> ClosedOrbit:
    """Refine a bracket to a closed orbit; raises RefinementError if the
    candidate does not converge to a genuine nucleus return.

    The root of ell(theta_i) at the bracketed pass is located by a Brent
    iteration at scan tolerance, then polished at the requested
    tolerance; the refined orbit quantities come from a final
    integration with the variational columns.
    """
    s_est = bracket.s_est
    if bracket.theta_lo == bracket.theta_hi:
        theta = bracket.theta_lo
    else:
        try:
            theta = brentq(
                _miss, bracket.theta_lo, bracket.theta_hi,
                args=(e, s_est, SCAN_RTOL, SCAN_RTOL),
                xtol=1e-13, rtol=9e-16, maxiter=max_iter)
            theta = _secant_polish(theta, e, s_est, rtol, atol)
        except (ValueError, RuntimeError, RefinementError) as exc:
            raise RefinementError(f"root polish failed: {exc}") from exc

    traj = dyn.integrate_from_angle(theta, e, s_est + S_PAD,
                                    monodromy=True, rtol=rtol, atol=atol)
    i = _pass_nearest(traj, s_est)
    row = traj.events[i]
    dist = math.sqrt(row[EV_DIST2])
    m12 = traj.monodromy_at_pass(i).m12
    if abs(row[EV_ELL]) > _miss_gate(m12) or dist > CLOSURE_TOL:
        raise RefinementError(
            f"no convergence: |ell| = {abs(row[EV_ELL]):.3e}, "
            f"distance = {dist:.3e} at theta_i = {theta!r}")
    return _orbit_from_trajectory(traj, theta, i, repetition=1)


def axial_orbits(e: ScaledEnergy, s_max: float, *,
                 rtol: float = dyn.DEFAULT_RTOL,
                 atol: float = dyn.DEFAULT_ATOL) -> list:
    """The two exactly axial closed orbits (launch along +z and -z).

    They sit on the boundary of the scanned angle interval and on an
    invariant subspace of the dynamics, so they are constructed directly
    rather than bracketed.  The primitive action has the closed form
    2*pi*(-2e)**-0.5.
    """
    out = []
    for theta in (0.0, math.pi):
        traj = dyn.integrate_from_angle(
            theta, e, min(2.5 * math.pi * (-2.0 * e.value) ** -0.5,
                          s_max + S_PAD),
            monodromy=True, rtol=rtol, atol=atol)
        if traj.n_passes == 0:
            raise RefinementError("axial orbit did not return")
        out.append(_orbit_from_trajectory(traj, theta, 0, repetition=1))
    return out


def _dedup_primitives(cands: list) -> list:
    """Drop duplicate roots and scan-found repetitions.

    Candidates sharing a launch angle belong to one trajectory; the one
    with the smallest action is the primitive, the rest are its returns
    (action an integer multiple) and are regenerated later by
    extend_repetitions.
    """
    cands = sorted(cands, key=lambda o: (o.s, o.theta_i))
    kept = []
    for cand in cands:
        dup = False
        for prim in kept:
            if abs(cand.theta_i - prim.theta_i) > 1e-8:
                continue
            ratio = cand.s / prim.s
            if abs(ratio - round(ratio)) < 1e-6:
                dup = True
                break
        if not dup:
            kept.append(cand)
    return kept


def extend_repetitions(primitives: list, s_max: float, e: ScaledEnergy, *,
                       rtol: float = dyn.DEFAULT_RTOL,
                       atol: float = dyn.DEFAULT_ATOL,
                       rejections: list | None = None) -> list:
    """All repetitions k >= 2 with k*s <= s_max, by direct integration.

    One trajectory per primitive is integrated out to the cutoff; the
    k-th nucleus return is identified as the pass nearest k*s.  If the
    accumulated closure error at high k exceeds the tolerance (unstable
    orbits amplify the launch-angle truncation), the launch angle is
    re-polished against that specific return before giving up.
    """
    out = []
    for prim in primitives:
        n_rep = int(math.floor(s_max / prim.s + 1e-9))
        if n_rep < 2:
            continue
        traj = dyn.integrate_from_angle(
            prim.theta_i, e, min(n_rep * prim.s + S_PAD, s_max + S_PAD),
            monodromy=True, rtol=rtol, atol=atol)
        for k in range(2, n_rep + 1):
            target = k * prim.s
            try:
                i = _pass_nearest(traj, target)
                row = traj.events[i]
                dist = math.sqrt(row[EV_DIST2])
                m12 = traj.monodromy_at_pass(i).m12
                if abs(row[EV_ELL]) > _miss_gate(m12) or dist > CLOSURE_TOL:
                    orbit = _repolish_repetition(prim, k, e, rtol, atol)
                else:
                    orbit = _orbit_from_trajectory(
                        traj, prim.theta_i, i, repetition=k)
            except (RefinementError, IntegrationError) as exc:
                msg = (f"repetition {k} of orbit at theta_i = "
                       f"{prim.theta_i!r} absent: {exc}")
                log.warning(msg)
                if rejections is not None:
                    rejections.append(msg)
                continue
            out.append(orbit)
    return out


def _repolish_repetition(prim: ClosedOrbit, k: int, e: ScaledEnergy,
                         rtol: float, atol: float) -> ClosedOrbit:
    target = k * prim.s
    theta = _secant_polish(prim.theta_i, e, target, rtol, atol)
    traj = dyn.integrate_from_angle(theta, e, target + S_PAD,
                                    monodromy=True, rtol=rtol, atol=atol)
    i = _pass_nearest(traj, target)
    row = traj.events[i]
    dist = math.sqrt(row[EV_DIST2])
    m12 = traj.monodromy_at_pass(i).m12
    if abs(row[EV_ELL]) > _miss_gate(m12) or dist > CLOSURE_TOL:
        raise RefinementError(
            f"repetition {k} did not converge (distance {dist:.3e})")
    return _orbit_from_trajectory(traj, theta, i, repetition=k)


def search_closed_orbits(e: ScaledEnergy, s_max: float, n_seeds: int, *,
                         rtol: float = dyn.DEFAULT_RTOL,
                         atol: float = dyn.DEFAULT_ATOL,
                         scan_rtol: float = SCAN_RTOL) -> OrbitTable:
    """Full search: scan, refine, deduplicate, add repetitions.

    Returns the orbit table sorted by (s, theta_i) with stable ids;
    non-convergent candidates are collected as diagnostics on the table,
    never silently dropped.
    """
    brackets = scan_launch_angles(e, s_max, n_seeds,
                                  rtol=scan_rtol, atol=scan_rtol)
    rejections = []
    cands = []
    for n, br in enumerate(brackets):
        try:
            cands.append(refine_closed_orbit(br, e, rtol=rtol, atol=atol))
        except (RefinementError, IntegrationError) as exc:
            rejections.append(
                f"bracket [{br.theta_lo!r}, {br.theta_hi!r}] at "
                f"s ~ {br.s_est:.3f}: {exc}")
        if (n + 1) % 1000 == 0:
            log.info("refine: %d/%d brackets", n + 1, len(brackets))

    primitives = _dedup_primitives(cands)
    primitives.extend(axial_orbits(e, s_max, rtol=rtol, atol=atol))
    primitives = [o for o in primitives if o.s <= s_max]
    log.info("refined %d primitives (%d rejected candidates)",
             len(primitives), len(rejections))

    reps = extend_repetitions(primitives, s_max, e, rtol=rtol, atol=atol,
                              rejections=rejections)
    rows = sorted(primitives + reps, key=lambda o: (o.s, o.theta_i))

    table = []
    prim_ids = {}
    for i, o in enumerate(rows):
        key = (round(o.theta_i, 12), round(o.s / o.repetition, 9))
        if o.repetition == 1:
            prim_ids[key] = i
        table.append(replace(o, id=i, primitive_id=prim_ids.get(key, i)))
    log.info("orbit table: %d orbits (%d primitive, %d repetitions)",
             len(table), len(primitives), len(reps))
    return OrbitTable(orbits=table, scaled_energy=e.value, s_max=s_max,
                      n_seeds=n_seeds, rejections=rejections)
