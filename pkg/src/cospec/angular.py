"""Angular functions weighting the closed-orbit amplitudes.

Each correlation channel is described by a function of the launch or
return angle, expanded in a finite list of Legendre coefficients:

    Y(theta) = sum_l  B_l * P_l(cos theta).

The functions encode the initial state and the dipole operator of a
channel; only a few coefficients are nonzero for low-lying states.
"""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class AngularFunction:
    """Finite Legendre-coefficient representation of a channel weight."""

    coeffs: tuple
    label: str

    def __call__(self, theta: float) -> float:
        return evaluate(self, theta)


def evaluate(f: AngularFunction, theta: float) -> float:
    """Evaluate sum_l B_l P_l(cos theta) for theta in [0, pi].

    Uses the upward three-term recurrence
    (l+1) P_{l+1} = (2l+1) x P_l - l P_{l-1}, which is stable on [-1, 1].
    """
    if not 0.0 <= theta <= math.pi:
        raise ValueError(f"angle must lie in [0, pi], got {theta}")
    x = math.cos(theta)
    p_prev = 1.0
    total = f.coeffs[0] * p_prev if f.coeffs else 0.0
    if len(f.coeffs) == 1:
        return total
    p = x
    total += f.coeffs[1] * p
    for l in range(1, len(f.coeffs) - 1):
        p_prev, p = p, ((2 * l + 1) * x * p - l * p_prev) / (l + 1)
        total += f.coeffs[l + 1] * p
    return total


# Normalization of the 2p0 channel: (2 pi)^(-1/2) * 2^7 * e^(-4).
_NORM_2P0 = 128.0 * math.exp(-4.0) / math.sqrt(2.0 * math.pi)
SWAVE_DEFAULT = 1.0 / math.sqrt(2.0 * math.pi)


def build_2p0_parallel() -> AngularFunction:
    """Channel for the 2p0 initial state, light polarized along the axis.

    The angular weight is (2 pi)^(-1/2) 2^7 e^-4 (4 cos^2 theta - 1);
    with 4 cos^2 - 1 = (8/3) P_2 + (1/3) P_0 this is a two-coefficient
    Legendre list.
    """
    return AngularFunction(
        coeffs=(_NORM_2P0 / 3.0, 0.0, _NORM_2P0 * 8.0 / 3.0),
        label="2p0_parallel")


def build_swave(c: float = SWAVE_DEFAULT) -> AngularFunction:
    """Constant channel (outgoing s-wave); c rescales one signal
    row/column without moving any eigenvalue."""
    if c == 0.0:
        raise ValueError("s-wave constant must be nonzero "
                         "(degenerate correlation channel)")
    return AngularFunction(coeffs=(c,), label="swave")


def from_coefficients(coeffs, label: str) -> AngularFunction:
    """Channel from an explicit Legendre coefficient list."""
    coeffs = tuple(float(c) for c in coeffs)
    if not coeffs:
        raise ValueError("coefficient list must be nonempty")
    return AngularFunction(coeffs=coeffs, label=label)
