"""Cross-correlated recurrence signals built from closed-orbit data.

Every closed orbit contributes a delta spike at its scaled action s_co
with the L x L complex amplitude matrix

    A_ab = -(2 pi)^(5/2) |m12|^(-1/2) sqrt(sin th_i sin th_f)
           * Y_a(th_i) Y_b(th_f) * exp(i(-pi/2 * mu + pi/4)),

all quantities taken from the orbit table.  For sampling on an
equidistant action grid the delta comb is regularized with a unit-area
Gaussian of width sigma; the harmonic-inversion engine removes the
smoothing again through the factor exp(+sigma^2 w^2/4) per amplitude.

The quantum-model counterpart (used as the inversion test oracle) is

    C_ab(s) = -i sum_k b_ak b_bk exp(-i w_k s),

evaluated exactly on the same grid by synthesize_signal.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .angular import AngularFunction, evaluate
from .errors import FocalSingularityError
from .lines import LineSet

log = logging.getLogger(__name__)

_PREFACTOR = -(2.0 * math.pi) ** 2.5
_M12_FLOOR = 1e-12
_SPIKE_CHUNK = 512


@dataclass(frozen=True)
class RecurrenceSpike:
    """One orbit's contribution: action position and amplitude matrix."""

    s: float
    amp: np.ndarray


@dataclass
class SampledSignal:
    """L x L complex recurrence functions on an equidistant action grid.

    data has shape (n, L, L); sample m sits at action m*tau.  sigma is
    the Gaussian smoothing width (0 for exactly synthesized signals).
    """

    tau: float
    sigma: float
    data: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def s_grid(self) -> np.ndarray:
        return self.tau * np.arange(self.n)

    def channel(self, alpha: int, beta: int) -> np.ndarray:
        return self.data[:, alpha, beta]

    def save(self, path):
        L = self.n_channels
        hdr = [
            "# cross-correlated recurrence signal",
            f"# tau = {self.tau:.17g}",
            f"# n = {self.n}",
            f"# L = {L}",
            f"# sigma = {self.sigma:.17g}",
        ]
        for key in sorted(self.meta):
            hdr.append(f"# {key} = {self.meta[key]}")
        rows = []
        for m in range(self.n):
            parts = []
            for a in range(L):
                for b in range(L):
                    z = self.data[m, a, b]
                    parts.append(f"{z.real:.17g}")
                    parts.append(f"{z.imag:.17g}")
            rows.append(" ".join(parts))
        with open(path, "w") as fh:
            fh.write("\n".join(hdr + rows) + "\n")

    @classmethod
    def load(cls, path):
        meta = {}
        tau = sigma = None
        n = L = None
        rows = []
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "=" in line:
                        key, _, val = line[1:].partition("=")
                        key = key.strip()
                        val = val.strip()
                        if key == "tau":
                            tau = float(val)
                        elif key == "sigma":
                            sigma = float(val)
                        elif key == "n":
                            n = int(val)
                        elif key == "L":
                            L = int(val)
                        else:
                            meta[key] = val
                    continue
                rows.append([float(x) for x in line.split()])
        if tau is None or sigma is None or n is None or L is None:
            raise ValueError(f"{path}: missing signal header fields")
        arr = np.array(rows)
        if arr.shape != (n, 2 * L * L):
            raise ValueError(f"{path}: expected {n} records of "
                             f"{2 * L * L} floats, got {arr.shape}")
        data = (arr[:, 0::2] + 1j * arr[:, 1::2]).reshape(n, L, L)
        return cls(tau=tau, sigma=sigma, data=data, meta=meta)


def spike_amplitude(orbit, fa: AngularFunction,
                    fb: AngularFunction) -> complex:
    """Closed-orbit amplitude for one channel pair.

    Determined exclusively by closed-orbit quantities; orbits too close
    to a focal point (|m12| below 1e-12) have no finite semiclassical
    amplitude and raise FocalSingularityError.
    """
    if abs(orbit.m12) < _M12_FLOOR:
        raise FocalSingularityError(
            f"orbit at theta_i = {orbit.theta_i!r} has |m12| = "
            f"{abs(orbit.m12):.2e}; near a bifurcation")
    geom = math.sqrt(max(math.sin(orbit.theta_i), 0.0)
                     * max(math.sin(orbit.theta_f), 0.0))
    if geom == 0.0:
        return 0.0j
    mag = (_PREFACTOR / math.sqrt(abs(orbit.m12)) * geom
           * evaluate(fa, orbit.theta_i) * evaluate(fb, orbit.theta_f))
    phase = -0.5 * math.pi * orbit.maslov + 0.25 * math.pi
    return mag * complex(math.cos(phase), math.sin(phase))


def build_spikes(orbits, funcs) -> list:
    """Amplitude matrices for all orbits; axial (zero-amplitude) orbits
    are skipped with a log entry, focal singularities are skipped with
    a warning."""
    L = len(funcs)
    spikes = []
    n_zero = n_focal = 0
    for o in orbits:
        try:
            amp = np.empty((L, L), dtype=complex)
            for a in range(L):
                for b in range(L):
                    amp[a, b] = spike_amplitude(o, funcs[a], funcs[b])
        except FocalSingularityError as exc:
            log.warning("excluded from signal: %s", exc)
            n_focal += 1
            continue
        if not np.any(amp):
            n_zero += 1
            continue
        spikes.append(RecurrenceSpike(s=o.s, amp=amp))
    if n_zero:
        log.info("skipped %d zero-amplitude (axial) orbits", n_zero)
    if n_focal:
        log.warning("excluded %d orbits at focal singularities", n_focal)
    return spikes


def build_signal(orbits, funcs, sigma: float, tau: float, s_max: float,
                 meta: dict | None = None) -> SampledSignal:
    """Sample the Gaussian-smoothed spike comb on an equidistant grid.

    data[m]_ab = sum_co A_ab(co) * g_sigma(m*tau - s_co) with g_sigma
    the unit-area Gaussian.  The matrix is symmetrized exactly after
    asserting that the residual asymmetry (time-reversal partner pairs
    enter individually) is at floating-point level.
    """
    if sigma < tau:
        raise ValueError(
            f"sigma = {sigma} < tau = {tau}: spikes would be "
            "undersampled")
    orbits = [o for o in orbits if o.s <= s_max]
    if not orbits:
        raise ValueError("no orbits within the action cutoff")
    spikes = build_spikes(orbits, funcs)
    if not spikes:
        raise ValueError("all orbits had zero amplitude")

    L = len(funcs)
    n = int(math.floor(s_max / tau)) + 1
    grid = tau * np.arange(n)
    data_flat = np.zeros((n, L * L), dtype=complex)
    norm = 1.0 / (sigma * math.sqrt(2.0 * math.pi))
    for lo in range(0, len(spikes), _SPIKE_CHUNK):
        chunk = spikes[lo:lo + _SPIKE_CHUNK]
        pos = np.array([sp.s for sp in chunk])
        amps = np.array([sp.amp.ravel() for sp in chunk])
        g = norm * np.exp(-0.5 * ((grid[:, None] - pos[None, :])
                                  / sigma) ** 2)
        data_flat += g @ amps
    data = data_flat.reshape(n, L, L)

    asym = np.max(np.abs(data - data.transpose(0, 2, 1)))
    scale = np.max(np.abs(data))
    if scale > 0.0 and asym > 1e-8 * scale:
        raise AssertionError(
            f"signal asymmetry {asym:.3e} exceeds 1e-8 of scale "
            f"{scale:.3e}; orbit table is missing reversed partners")
    data = 0.5 * (data + data.transpose(0, 2, 1))

    full_meta = {
        "labels": ",".join(f.label for f in funcs),
        "n_orbits": str(len(orbits)),
        "n_spikes": str(len(spikes)),
    }
    if meta:
        full_meta.update(meta)
    return SampledSignal(tau=tau, sigma=sigma, data=data, meta=full_meta)


def synthesize_signal(lines: LineSet, tau: float, n: int,
                      sigma: float = 0.0,
                      meta: dict | None = None) -> SampledSignal:
    """Exact quantum-model signal C_ab(m tau) = -i sum_k b b e^{-i w s}.

    With sigma > 0 each line is attenuated by exp(-sigma^2 w_k^2 / 2),
    which is what Gaussian smoothing in action does to an exact line
    signal; this is the oracle for the deconvolution step.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    lns = list(lines)
    L = lns[0].n_channels if lns else 1
    grid = tau * np.arange(n)
    data_flat = np.zeros((n, L * L), dtype=complex)
    if lns:
        w = np.array([ln.w for ln in lns])
        d = np.array([np.outer(ln.b, ln.b).ravel() for ln in lns])
        if sigma > 0.0:
            d = d * np.exp(-0.5 * sigma ** 2 * w ** 2)[:, None]
        phases = np.exp(-1j * np.outer(grid, w))
        data_flat = -1j * (phases @ d)
    full_meta = {"synthetic": "true"}
    if meta:
        full_meta.update(meta)
    return SampledSignal(tau=tau, sigma=sigma,
                         data=data_flat.reshape(n, L, L), meta=full_meta)


def smoothed_orbit_sum(orbits, funcs, w_grid, s_cutoff: float,
                       damping: float) -> np.ndarray:
    """Convergent, smoothed rendition of the closed-orbit sum.

    g_ab(w) = w^(-1/2) sum_co A_ab exp(i s_co w) exp(-damping s_co^2),
    truncated at s_cutoff: the conventional low-resolution spectrum.
    Returns an array of shape (len(w_grid), L, L).
    """
    w_grid = np.asarray(w_grid, dtype=float)
    if np.any(w_grid <= 0.0):
        raise ValueError("w grid must be positive")
    L = len(funcs)
    spikes = build_spikes([o for o in orbits if o.s <= s_cutoff], funcs) \
        if len(orbits) else []
    out = np.zeros((len(w_grid), L * L), dtype=complex)
    if spikes:
        pos = np.array([sp.s for sp in spikes])
        amps = np.array([sp.amp.ravel() for sp in spikes])
        weights = np.exp(-damping * pos ** 2)
        phases = np.exp(1j * np.outer(w_grid, pos))
        out = phases @ (weights[:, None] * amps)
    out *= w_grid[:, None] ** -0.5
    return out.reshape(len(w_grid), L, L)


def signal_to_frequency(sig: SampledSignal, w_grid,
                        window: str = "hann") -> np.ndarray:
    """Windowed Fourier magnitude of a sampled signal over frequencies.

    A synthetic line signal peaks at w = w_k; a built orbit signal shows
    the conjugate-domain view used for plotting.
    """
    w_grid = np.asarray(w_grid, dtype=float)
    win = _window(sig.n, window)
    grid = sig.s_grid
    kernel = np.exp(1j * np.outer(w_grid, grid)) * win[None, :]
    flat = sig.data.reshape(sig.n, -1)
    out = sig.tau * (kernel @ flat)
    L = sig.n_channels
    return np.abs(out).reshape(len(w_grid), L, L)


def spectrum_to_action(w_grid, g, s_grid, window: str = "hann") -> np.ndarray:
    """Fourier magnitude of w^(1/2) g(w) over actions: the recurrence
    spectrum, peaking at closed-orbit actions."""
    w_grid = np.asarray(w_grid, dtype=float)
    g = np.asarray(g)
    s_grid = np.asarray(s_grid, dtype=float)
    win = _window(len(w_grid), window)
    dw = w_grid[1] - w_grid[0] if len(w_grid) > 1 else 1.0
    weight = (win * w_grid ** 0.5)[None, :]
    kernel = np.exp(-1j * np.outer(s_grid, w_grid)) * weight
    flat = g.reshape(len(w_grid), -1)
    out = (dw / (2.0 * math.pi)) * (kernel @ flat)
    return np.abs(out).reshape((len(s_grid),) + g.shape[1:])


def _window(n: int, kind: str) -> np.ndarray:
    if kind == "hann":
        return np.hanning(n)
    if kind in (None, "", "rect", "boxcar"):
        return np.ones(n)
    raise ValueError(f"unknown window {kind!r}")
