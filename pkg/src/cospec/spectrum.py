"""Physical observables from extracted spectral lines.

Amplitudes relate to dipole transition matrix elements through
b_ak = w_k^(1/4) <phi_a|D|psi_k>; stick strengths for a channel are
built from the gauge-invariant diagonal product b_ak^2, so per-line
sign flips cannot move them.  Laboratory units enter only through the
scaling laws gamma = w^-3 and B = 2.35e5 T * gamma.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .lines import SpectralLine

B_FIELD_UNIT_TESLA = 2.35e5
E_INITIAL_2P = -0.125  # field-free 2p0 energy, atomic units


@dataclass(frozen=True)
class Stick:
    w: float
    strength: float
    error: float


@dataclass
class StickSpectrum:
    sticks: list
    channel: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.sticks)

    def __iter__(self):
        return iter(self.sticks)

    def save(self, path):
        hdr = ["# stick spectrum", f"# channel = {self.channel}"]
        for key in sorted(self.meta):
            hdr.append(f"# {key} = {self.meta[key]}")
        hdr.append("# columns: w strength error")
        rows = [f"{s.w:.17g} {s.strength:.17g} {s.error:.17g}"
                for s in self.sticks]
        with open(path, "w") as fh:
            fh.write("\n".join(hdr + rows) + "\n")

    @classmethod
    def load(cls, path):
        meta = {}
        channel = 0
        sticks = []
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "=" in line:
                        key, _, val = line[1:].partition("=")
                        key = key.strip()
                        if key == "channel":
                            channel = int(val)
                        else:
                            meta[key] = val.strip()
                    continue
                w, st, err = (float(x) for x in line.split())
                sticks.append(Stick(w, st, err))
        return cls(sticks=sticks, channel=channel, meta=meta)


def matrix_element(line: SpectralLine, alpha: int):
    """Transition matrix element of channel alpha for one line.

    Returns (value, detail): value = Re(b) * w^(-1/4) is the gauge-fixed
    real matrix element; detail carries the full complex
    b_a * (Re w)^(-1/4) for diagnostics.
    """
    if line.w.real <= 0.0:
        raise ValueError(f"line at w = {line.w} rejected: "
                         "nonpositive real part")
    detail = line.b[alpha] * line.w.real ** -0.25
    return float(detail.real), complex(detail)


def line_strength(line: SpectralLine, alpha: int):
    """Squared matrix element from the gauge-free diagonal product.

    strength = Re(b_a^2) / sqrt(w); the imaginary residue of the
    product (zero for a perfect line) is returned as an error measure.
    """
    if line.w.real <= 0.0:
        raise ValueError(f"line at w = {line.w} rejected: "
                         "nonpositive real part")
    d = line.product(alpha, alpha) * line.w.real ** -0.5
    return float(d.real), abs(d.imag)


def oscillator_strength(line: SpectralLine, e_initial: float,
                        scaled_energy: float, alpha: int = 0) -> float:
    """Stick oscillator strength f = 2 (E_k - E_i) |<phi|D|psi_k>|^2.

    Each line fixes its own field through w = gamma^(-1/3), so its
    absolute energy is E_k = scaled_energy * gamma^(2/3)
    = scaled_energy / w^2 (scaled spectroscopy).
    """
    w = line.w.real
    strength, _ = line_strength(line, alpha)
    e_k = scaled_energy / w ** 2
    return 2.0 * (e_k - e_initial) * strength


def field_of_w(w: float) -> float:
    """Magnetic field in Tesla for a scaling-parameter value."""
    if w <= 0.0:
        raise ValueError(f"w must be positive, got {w}")
    return B_FIELD_UNIT_TESLA * w ** -3


def gamma_of_w(w: float) -> float:
    """Dimensionless field strength gamma = w^-3."""
    if w <= 0.0:
        raise ValueError(f"w must be positive, got {w}")
    return w ** -3


def w_of_gamma(gamma: float) -> float:
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return gamma ** (-1.0 / 3.0)


def assemble_stick_spectrum(lines, channel: int = 0, *,
                            merge_tol: float = 1e-6,
                            meta: dict | None = None) -> StickSpectrum:
    """Sorted, deduplicated stick spectrum for one physical channel.

    Lines closer than merge_tol in w are merged by summing strengths;
    per-stick errors combine the imaginary residue of the amplitude
    product with the propagated cross-validation uncertainties.
    """
    entries = []
    for ln in sorted(lines, key=lambda l: l.w.real):
        strength, im_resid = line_strength(ln, channel)
        db = 2.0 * abs(ln.b[channel]) * ln.err_b * ln.w.real ** -0.5
        entries.append((ln.w.real, strength, im_resid + db))
    merged = []
    for w, strength, err in entries:
        if merged and abs(w - merged[-1][0]) <= merge_tol:
            w0, s0, e0 = merged[-1]
            merged[-1] = (w0, s0 + strength, e0 + err)
        else:
            merged.append((w, strength, err))
    sticks = [Stick(w, s, e) for w, s, e in merged]
    return StickSpectrum(sticks=sticks, channel=channel,
                         meta=dict(meta or {}))


def svg_sticks(spec: StickSpectrum, path, *, width: int = 900,
               height: int = 300, title: str = "") -> None:
    """Minimal deterministic SVG stick plot (impulses over w)."""
    pad = 50
    if spec.sticks:
        w_lo = min(s.w for s in spec.sticks)
        w_hi = max(s.w for s in spec.sticks)
        s_hi = max(max(s.strength for s in spec.sticks), 1e-30)
    else:
        w_lo, w_hi, s_hi = 0.0, 1.0, 1.0
    if w_hi <= w_lo:
        w_hi = w_lo + 1.0
    span = w_hi - w_lo

    def xm(w):
        return pad + (w - w_lo) / span * (width - 2 * pad)

    def ym(s):
        return height - pad - s / s_hi * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<text x="{width // 2}" y="{height - 10}" text-anchor="middle" '
        f'font-size="13">w (scaling parameter)</text>',
        f'<text x="14" y="{height // 2}" text-anchor="middle" '
        f'font-size="13" transform="rotate(-90 14 {height // 2})">'
        f'strength</text>',
    ]
    if title:
        parts.append(f'<text x="{width // 2}" y="20" '
                     f'text-anchor="middle" font-size="14">{title}</text>')
    for tick in np.linspace(w_lo, w_hi, 7):
        x = xm(tick)
        parts.append(f'<line x1="{x:.2f}" y1="{height - pad}" '
                     f'x2="{x:.2f}" y2="{height - pad + 5}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{height - pad + 18}" '
                     f'text-anchor="middle" font-size="11">'
                     f'{tick:.2f}</text>')
    for s in spec.sticks:
        x = xm(s.w)
        parts.append(f'<line x1="{x:.2f}" y1="{height - pad}" '
                     f'x2="{x:.2f}" y2="{ym(max(s.strength, 0.0)):.2f}" '
                     f'stroke="steelblue" stroke-width="1.2"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def svg_curve(x, y, path, *, width: int = 900, height: int = 300,
              xlabel: str = "", ylabel: str = "", title: str = "") -> None:
    """Minimal deterministic SVG polyline plot."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pad = 50
    x_lo, x_hi = float(x.min()), float(x.max())
    y_lo, y_hi = float(min(y.min(), 0.0)), float(y.max())
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0

    def xm(v):
        return pad + (v - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def ym(v):
        return height - pad - (v - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    pts = " ".join(f"{xm(a):.2f},{ym(b):.2f}" for a, b in zip(x, y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" '
        f'stroke="black"/>',
        f'<polyline points="{pts}" fill="none" stroke="firebrick" '
        f'stroke-width="1"/>',
    ]
    if xlabel:
        parts.append(f'<text x="{width // 2}" y="{height - 10}" '
                     f'text-anchor="middle" font-size="13">{xlabel}</text>')
    if ylabel:
        parts.append(f'<text x="14" y="{height // 2}" text-anchor="middle" '
                     f'font-size="13" transform="rotate(-90 14 '
                     f'{height // 2})">{ylabel}</text>')
    if title:
        parts.append(f'<text x="{width // 2}" y="20" text-anchor="middle" '
                     f'font-size="14">{title}</text>')
    for tick in np.linspace(x_lo, x_hi, 7):
        xx = xm(tick)
        parts.append(f'<line x1="{xx:.2f}" y1="{height - pad}" '
                     f'x2="{xx:.2f}" y2="{height - pad + 5}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{xx:.2f}" y="{height - pad + 18}" '
                     f'text-anchor="middle" font-size="11">'
                     f'{tick:.3g}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
