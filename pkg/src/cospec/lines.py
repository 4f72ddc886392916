"""Spectral lines: eigenvalues of the scaling parameter with amplitudes.

A line k carries a (complex) scaling-parameter eigenvalue w_k and the
L-vector of complex amplitudes b_k, one entry per correlation channel.
Only products b_ak * b_a'k are observable; the per-channel signs follow
the convention that the largest-magnitude channel has nonnegative real
part.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class SpectralLine:
    w: complex
    b: np.ndarray
    err_w: float = 0.0
    err_b: float = 0.0

    @property
    def n_channels(self) -> int:
        return len(self.b)

    def product(self, alpha: int, beta: int) -> complex:
        """Gauge-invariant amplitude product b_alpha * b_beta."""
        return complex(self.b[alpha] * self.b[beta])


def fix_sign_gauge(b: np.ndarray) -> np.ndarray:
    """Flip the per-line global sign so that the largest-|b| channel has
    a nonnegative real part."""
    i = int(np.argmax(np.abs(b)))
    if b[i].real < 0.0 or (b[i].real == 0.0 and b[i].imag < 0.0):
        return -b
    return b


@dataclass
class LineSet:
    """Extracted lines plus the inversion context they came from."""

    lines: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.lines)

    def __iter__(self):
        return iter(self.lines)

    def sorted(self):
        return LineSet(sorted(self.lines, key=lambda l: l.w.real),
                       dict(self.meta))

    def save(self, path):
        hdr = ["# spectral line set"]
        for key in sorted(self.meta):
            hdr.append(f"# {key} = {self.meta[key]}")
        hdr.append("# columns: Re_w Im_w (Re_b Im_b per channel) "
                   "err_w err_b")
        rows = []
        for ln in self.lines:
            parts = [f"{ln.w.real:.17g}", f"{ln.w.imag:.17g}"]
            for amp in ln.b:
                parts.append(f"{amp.real:.17g}")
                parts.append(f"{amp.imag:.17g}")
            parts.append(f"{ln.err_w:.17g}")
            parts.append(f"{ln.err_b:.17g}")
            rows.append(" ".join(parts))
        with open(path, "w") as fh:
            fh.write("\n".join(hdr + rows) + "\n")

    @classmethod
    def load(cls, path):
        meta = {}
        lines = []
        with open(path) as fh:
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    if "=" in line:
                        key, _, val = line[1:].partition("=")
                        meta[key.strip()] = val.strip()
                    continue
                f = [float(x) for x in line.split()]
                n_b = (len(f) - 4) // 2
                b = np.array([complex(f[2 + 2 * i], f[3 + 2 * i])
                              for i in range(n_b)])
                lines.append(SpectralLine(
                    w=complex(f[0], f[1]), b=b,
                    err_w=f[-2], err_b=f[-1]))
        return cls(lines=lines, meta=meta)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
