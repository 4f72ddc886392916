"""High-resolution harmonic inversion by filter diagonalization.

The sampled L x L cross-correlation signal is fitted to the model

    i * C_ab(n tau) = sum_k  b_ak b_bk  exp(-i n tau w_k)

by recasting the nonlinear fit as a generalized eigenproblem of a
fictitious complex-symmetric effective Hamiltonian.  A frequency window
[w_min, w_max] selects J basis phases z_j = exp(-i tau phi_j) per
channel; the matrices

    U^(p)_(ja),(j'b) = sum_{m=0}^{2M} c_ab((m+p) tau) * G_jj'(m),
    G_jj'(m) = sum_n z_j^-n z_j'^-(m-n)   (geometric sum, closed form)

are built from the working samples c = i*C, the generalized problem
U^(1) B = u U^(0) B is solved in the SVD-filtered subspace of U^(0),
and w_k = (i/tau) ln u_k.  Eigenvectors are normalized through the
complex-symmetric bilinear form (no conjugation); amplitudes follow by
projecting the signal onto the eigenvectors, and Gaussian smoothing of
the input is removed by the factor exp(+sigma^2 w_k^2 / 4) per
amplitude.
"""

import cmath
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import NyquistError
from .lines import LineSet, SpectralLine, fix_sign_gauge
from .signal import SampledSignal

log = logging.getLogger(__name__)


@dataclass
class InversionConfig:
    """Window and numerical knobs for one inversion run.

    J is the number of basis frequencies per channel (at least the
    expected number of lines in the window; 1.5-2x is a safe choice).
    M is the half-length index: samples n0..n0+2M+1 are consumed, where
    n0 = round(s_start/tau).  A semiclassical signal carries no
    information below the shortest orbit action (the smooth part of the
    spectrum lives there), so fits may start above that hole; the
    extracted amplitudes are rephased by exp(+i w s_start) exactly.
    """

    window: tuple
    J: int
    M: int | None = None
    svd_cutoff: float = 1e-10
    accept_im: float = 1e-3
    accept_err: float = 1e-6
    s_start: float = 0.0

    def validate(self, sig: SampledSignal) -> tuple:
        w_min, w_max = self.window
        if not 0.0 < w_min < w_max:
            raise ValueError(f"bad window {self.window}")
        if w_max >= math.pi / sig.tau:
            raise NyquistError(
                f"window edge {w_max} exceeds the sampling guard "
                f"pi/tau = {math.pi / sig.tau:.4f}")
        n0 = int(round(self.s_start / sig.tau)) if self.s_start else 0
        if not 0 <= n0 < sig.n - 3:
            raise ValueError(f"s_start = {self.s_start} leaves no samples")
        avail = sig.n - n0
        m = self.M if self.M is not None else (avail - 2) // 2
        if m < 1 or avail < 2 * m + 2:
            raise ValueError(
                f"signal has {avail} usable samples, needs at least "
                f"2M+2 = {2 * m + 2}")
        if self.J < 2:
            raise ValueError("need at least two basis frequencies")
        return m, n0


def invert(sig: SampledSignal, cfg: InversionConfig) -> LineSet:
    """Extract spectral lines {w_k, b_ak} from a sampled signal.

    Returns the lines inside the window with |Im w_k| <= accept_im,
    sign-gauge fixed and sorted by Re w.  A numerically dead window
    (U^(0) ~ 0) yields an empty set.
    """
    m_half, n0 = cfg.validate(sig)
    tau = sig.tau
    L = sig.n_channels
    J = cfg.J
    K = J * L
    w_min, w_max = cfg.window

    # Working samples: multiply by i so the model is a plain sum of
    # complex exponentials with symmetric amplitude products.
    c = 1j * sig.data[n0:n0 + 2 * m_half + 2].reshape(
        2 * m_half + 2, L * L)

    phi = w_min + (np.arange(1, J + 1) - 0.5) * (w_max - w_min) / J
    x = np.exp(1j * tau * phi)          # x_j = 1/z_j, unit modulus

    # Power sums over the first half (f) and second half (h) of the
    # signal, for p = 0, 1:  f_j = sum_m c[m+p] x_j^m,
    # h_j = sum_{l=1..M} c[M+l+p] x_j^l.
    powers = x[:, None] ** np.arange(m_half + 1)[None, :]   # (J, M+1)
    f0 = powers @ c[0:m_half + 1]
    f1 = powers @ c[1:m_half + 2]
    h0 = powers[:, 1:] @ c[m_half + 1:2 * m_half + 1]
    h1 = powers[:, 1:] @ c[m_half + 2:2 * m_half + 2]
    x_m1 = x ** (m_half + 1)

    # Diagonal j = j' needs the triangular-count weighted sum.
    m_grid = np.arange(2 * m_half + 1)
    counts = (m_half + 1 - np.abs(m_half - m_grid)).astype(float)
    powers2 = x[:, None] ** m_grid[None, :]                 # (J, 2M+1)
    diag0 = powers2 @ (counts[:, None] * c[0:2 * m_half + 1])
    diag1 = powers2 @ (counts[:, None] * c[1:2 * m_half + 2])

    denom = x[None, :] - x[:, None]
    np.fill_diagonal(denom, 1.0)

    u0 = np.empty((K, K), dtype=complex)
    u1 = np.empty((K, K), dtype=complex)
    for a in range(L):
        for b in range(L):
            ab = a * L + b
            for (u_mat, f, h, dg) in ((u0, f0, h0, diag0),
                                      (u1, f1, h1, diag1)):
                num = (x[None, :] * f[None, :, ab]
                       - x[:, None] * f[:, None, ab]
                       + x_m1[None, :] * h[:, None, ab]
                       - x_m1[:, None] * h[None, :, ab])
                block = num / denom
                np.fill_diagonal(block, dg[:, ab])
                u_mat[a::L, b::L] = block

    scale = np.max(np.abs(u0))
    if scale == 0.0 or not np.isfinite(scale):
        log.info("window [%g, %g]: dead signal, no lines", w_min, w_max)
        return LineSet(lines=[], meta=_meta(sig, cfg, m_half, 0))

    # Regularized generalized eigenproblem in the SVD-filtered subspace.
    w_svd, s_svd, vh_svd = np.linalg.svd(u0)
    rank = int(np.sum(s_svd >= cfg.svd_cutoff * s_svd[0]))
    if rank == 0:
        return LineSet(lines=[], meta=_meta(sig, cfg, m_half, 0))
    wr = w_svd[:, :rank]
    vr = vh_svd[:rank].conj().T
    inv_sqrt_s = 1.0 / np.sqrt(s_svd[:rank])
    t = (inv_sqrt_s[:, None] * (wr.conj().T @ u1 @ vr)) * inv_sqrt_s[None, :]
    try:
        evals, evecs = np.linalg.eig(t)
    except np.linalg.LinAlgError as exc:
        cond = s_svd[0] / s_svd[rank - 1]
        raise np.linalg.LinAlgError(
            f"eigen-solver failed on window [{w_min}, {w_max}]: {exc}; "
            f"U0 condition in retained subspace = {cond:.3e}") from exc
    bvecs = vr @ (inv_sqrt_s[:, None] * evecs)              # (K, rank)

    # Frequencies from the principal branch of the logarithm.
    w_k = np.array([1j * cmath.log(u) / tau for u in evals])

    # Keep lines inside the window with small imaginary part.
    keep = np.where(
        (w_k.real >= w_min) & (w_k.real <= w_max)
        & (np.abs(w_k.imag) <= cfg.accept_im))[0]

    lines = []
    for idx in keep:
        bk = bvecs[:, idx]
        norm = bk @ (u0 @ bk)
        if norm == 0.0 or not np.isfinite(norm):
            continue
        bk = bk / np.sqrt(norm)
        # Amplitudes: project the first-half signal onto the eigenvector.
        amp = np.empty(L, dtype=complex)
        for alpha in range(L):
            acc = 0.0j
            for beta in range(L):
                acc += bk[beta::L] @ f0[:, beta * L + alpha]
            amp[alpha] = acc
        if sig.sigma > 0.0:
            amp = amp * np.exp(0.25 * sig.sigma ** 2 * w_k[idx] ** 2)
        if n0:
            # Undo the fit offset: d_k was extracted as d*exp(-i w s0).
            amp = amp * np.exp(0.5j * w_k[idx] * (n0 * tau))
        lines.append(SpectralLine(w=complex(w_k[idx]),
                                  b=fix_sign_gauge(amp)))
    lines.sort(key=lambda ln: ln.w.real)
    log.info("window [%g, %g]: rank %d/%d, %d lines accepted",
             w_min, w_max, rank, K, len(lines))
    return LineSet(lines=lines, meta=_meta(sig, cfg, m_half, rank))


def _meta(sig, cfg, m_half, rank):
    meta = {
        "window": f"{cfg.window[0]:.17g} {cfg.window[1]:.17g}",
        "J": str(cfg.J),
        "M": str(m_half),
        "tau": f"{sig.tau:.17g}",
        "sigma": f"{sig.sigma:.17g}",
        "svd_rank": str(rank),
    }
    for key in ("signal_sha256", "orbit_table_sha256"):
        if key in sig.meta:
            meta[key] = sig.meta[key]
    return meta


def cross_validate(lines_a: LineSet, lines_b: LineSet, tol_w: float,
                   tol_b: float) -> LineSet:
    """Keep lines of lines_a confirmed by lines_b.

    Lines are matched by nearest real frequency within tol_w (mutually
    closest); per-line error estimates |dw| and max_a |db_a| are
    recorded on the survivors, amplitudes compared up to the per-line
    global sign.  Unmatched lines are dropped.
    """
    la = sorted(lines_a, key=lambda ln: ln.w.real)
    lb = sorted(lines_b, key=lambda ln: ln.w.real)
    kept = []
    i = j = 0
    while i < len(la) and j < len(lb):
        d = la[i].w.real - lb[j].w.real
        if abs(d) <= tol_w:
            if (i + 1 < len(la)
                    and abs(la[i + 1].w.real - lb[j].w.real) < abs(d)):
                i += 1
                continue
            if (j + 1 < len(lb)
                    and abs(la[i].w.real - lb[j + 1].w.real) < abs(d)):
                j += 1
                continue
            err_w = abs(la[i].w - lb[j].w)
            err_b = float(min(
                np.max(np.abs(la[i].b - lb[j].b)),
                np.max(np.abs(la[i].b + lb[j].b))))
            if err_b <= tol_b:
                kept.append(SpectralLine(w=la[i].w, b=la[i].b,
                                         err_w=err_w, err_b=err_b))
            i += 1
            j += 1
        elif d < 0.0:
            i += 1
        else:
            j += 1
    meta = dict(lines_a.meta)
    meta["cross_validated"] = "true"
    return LineSet(lines=kept, meta=meta)


def recommend_signal_length(lines_trial: LineSet, window) -> float | None:
    """Advisory required signal length from the trial line density.

    Estimates the mean density rho = (line count)/(window width) and
    returns 4*pi*rho; with fewer than two lines the advisory is
    unavailable (None).
    """
    n = len(lines_trial)
    if n < 2:
        return None
    width = window[1] - window[0]
    return 4.0 * math.pi * n / width
