"""Benchmark plants: a two-disk slider system and a magnetic bearing rotor.

Both are built in continuous time, wrapped with their weighting filters and
discretized by zero-order hold.  Weight placement that the published data
leaves open is fixed by :data:`TWO_DISK_TOPOLOGY` and :data:`AMB_TOPOLOGY`.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .lft_model import (AffineLpvSystem, LftPlant, Topology, UncertaintyStructure, augment_with_weights,
                        lpv_to_lft, rho_to_delta, static_gain, validate_plant, weight_tf, zoh_discretize)

NU0 = 4e-7 * np.pi   # vacuum permeability


# ---------------------------------------------------------------------------
# two-disk system


@dataclass(frozen=True)
class TwoDiskParams:
    M1: float = 1.0
    M2: float = 0.5
    b: float = 1.0
    k: float = 200.0
    omega1_range: tuple = (0.0, 3.0)
    omega2_range: tuple = (0.0, 5.0)
    ts: float = 0.01
    dist_gain: float = 0.1      # force disturbance gain on each slider

    def __post_init__(self):
        for name in ("M1", "M2", "b", "k", "ts"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for r in (self.omega1_range, self.omega2_range):
            if not 0 <= r[0] <= r[1]:
                raise ValueError("angular velocity ranges must satisfy 0 <= lo <= hi")


# e = [We r2; Wu u]; Act in series with u; Wa scales an extra force disturbance
# at the actuator output; Wn shapes sensor noise on y = r2.
TWO_DISK_TOPOLOGY = Topology(actuator="Act", perf=(("We", "e", None), ("Wu", "u", None)),
                             sensor_noise="Wn", input_disturbance="Wa")


def two_disk_weights() -> dict:
    return {"We": weight_tf([0.3, 1.2], [1.0, 0.04]),
            "Wu": weight_tf([1.0, 0.1], [0.01, 125.0]),
            "Wn": weight_tf([1.0, 0.4], [0.01, 400.0]),
            "Wa": static_gain(1e-5),
            "Act": weight_tf([1.0], [0.01, 1.0])}


def _sq_split(rng):
    lo, hi = rng
    return (lo ** 2 + hi ** 2) / 2.0, (hi ** 2 - lo ** 2) / 2.0


def two_disk_raw(p: TwoDiskParams = TwoDiskParams()) -> LftPlant:
    """Continuous LFT plant; ``delta_i`` normalizes ``Omega_i^2`` to [-1, 1].

    Outputs: ``q`` (the two slider positions), ``e = r2`` and ``y = r2``.
    Blocks with zero-width speed range are dropped.
    """
    c1, h1 = _sq_split(p.omega1_range)
    c2, h2 = _sq_split(p.omega2_range)
    A = np.array([[0.0, 0.0, 1.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0],
                  [c1 - p.k / p.M1, -p.k / p.M1, -p.b / p.M1, 0.0],
                  [-p.k / p.M2, c2 - p.k / p.M2, 0.0, -p.b / p.M2]])
    keep = [i for i, h in enumerate((h1, h2)) if h > 0]
    B0 = np.zeros((4, 2))
    B0[2, 0], B0[3, 1] = h1, h2
    C0 = np.hstack([np.eye(2), np.zeros((2, 2))])
    B0, C0 = B0[:, keep], C0[keep]
    structure = UncertaintyStructure(tuple(1 for _ in keep), ())
    B1 = np.zeros((4, 2))
    B1[2, 0], B1[3, 1] = p.dist_gain / p.M1, p.dist_gain / p.M2
    B2 = np.array([[0.0], [0.0], [1.0 / p.M1], [0.0]])
    C = np.array([[0.0, 1.0, 0.0, 0.0]])
    return LftPlant.create(A, structure=structure, ts=0.0, np_=len(keep), B0=B0, C0=C0,
                           B1=B1, B2=B2, C1=C, C2=C)


# State feedback measures every state, so noise on y cannot enter the loop;
# keeping its weight would only add a state that u cannot reach and e cannot see.
TWO_DISK_SF_TOPOLOGY = Topology(actuator="Act", perf=TWO_DISK_TOPOLOGY.perf, input_disturbance="Wa")


def build_two_disk(p: TwoDiskParams = TwoDiskParams()) -> dict:
    """``{"raw": continuous LFT plant, "weighted": discrete weighted plant,
    "weighted_sf": the same without the sensor-noise channel}``."""
    raw = two_disk_raw(p)
    out = {"raw": raw}
    for key, top in (("weighted", TWO_DISK_TOPOLOGY), ("weighted_sf", TWO_DISK_SF_TOPOLOGY)):
        out[key] = zoh_discretize(augment_with_weights(raw, two_disk_weights(), top), p.ts)
        validate_plant(out[key])
    return out


def omega_to_delta(p: TwoDiskParams, omega1: float, omega2: float) -> np.ndarray:
    """Normalized parameters for given rod speeds (only blocks with nonzero width)."""
    out = []
    for om, rng in ((omega1, p.omega1_range), (omega2, p.omega2_range)):
        c, h = _sq_split(rng)
        if h > 0:
            out.append((om ** 2 - c) / h)
    return np.diag(out)


# ---------------------------------------------------------------------------
# magnetic bearing


@dataclass(frozen=True)
class AmbParams:
    area_mm2: float = 1531.79
    h_mm: float = 40.0
    gap_mm: float = 0.55
    Jr: float = 0.333
    Ja: float = 0.0136
    ell: float = 0.13
    k_const: float = 4.6755576e8
    N_turns: float = 400.0
    R_coil: float = 14.6
    phi0: float = 2.09e-4
    nu0: float = NU0             # not in the parameter table: vacuum permeability
    m_rotor: float = 10.0        # not in the parameter table: configurable default
    rho_range: tuple = (315.0, 1100.0)
    ts: float = 0.01
    force_disturbance: bool = True

    def __post_init__(self):
        for k, v in asdict(self).items():
            if isinstance(v, float) and not v > 0:
                raise ValueError(f"{k} must be positive")
        if not 0 < self.rho_range[0] < self.rho_range[1]:
            raise ValueError("rho_range must be a nonempty positive interval")

    def constants(self) -> dict:
        A = self.area_mm2 * 1e-6
        h = self.h_mm * 1e-3
        G0 = self.gap_mm * 1e-3
        c1 = 2 * self.k_const * self.phi0 * (1 + 2 * G0 / (np.pi * h))
        c2 = 2 * self.k_const * self.phi0 ** 2 / (np.pi * h)
        d1 = 2 * self.R_coil * G0 / (self.nu0 * A * self.N_turns)
        d2 = 2 * self.R_coil * self.phi0 / (self.nu0 * A * self.N_turns)
        return {"c1": float(c1), "c2": float(c2), "d1": float(d1), "d2": float(d2)}


# Channel order of d: [sensor noise (2); force disturbance (2)].  The noise is
# prefiltered by Wn; e = [Wz (l theta, l psi); Wu u].
AMB_TOPOLOGY = Topology(perf=(("Wz", "e", [0, 1]), ("Wu", "u", None)), d_weights=(("Wn", [0, 1]),))

AMB_DISPLACEMENT_STATES = (0, 1)


def amb_weights() -> dict:
    return {"Wz": weight_tf([10.0, 80.0], [1.0, 0.001], 2),
            "Wu": weight_tf([0.01, 1.0], [1.0, 100000.0], 2),
            "Wn": static_gain(0.001, 2)}


def amb_lpv(p: AmbParams = AmbParams()) -> AffineLpvSystem:
    c = p.constants()
    m, N = p.m_rotor, p.N_turns
    A0 = np.zeros((6, 6))
    A0[0, 2] = A0[1, 3] = 1.0
    A0[2, 0] = A0[3, 1] = -4 * c["c2"] / m
    A0[2, 4] = A0[3, 5] = 2 * c["c1"] / m
    A0[4, 0] = A0[5, 1] = 2 * c["d2"] / N
    A0[4, 4] = A0[5, 5] = -c["d1"] / N
    A1 = np.zeros((6, 6))
    A1[2, 3] = -p.Ja / p.Jr
    A1[3, 2] = p.Ja / p.Jr
    B2 = np.vstack([np.zeros((4, 2)), np.eye(2) / N])
    B1 = np.zeros((6, 2))
    D21 = np.eye(2)
    if p.force_disturbance:
        Bf = np.zeros((6, 2))
        Bf[2, 0] = Bf[3, 1] = 1.0 / m
        B1 = np.hstack([B1, Bf])
        D21 = np.hstack([D21, np.zeros((2, 2))])
    C1 = np.vstack([np.hstack([np.eye(2), np.zeros((2, 4))]), np.zeros((2, 6))])
    D12 = np.vstack([np.zeros((2, 2)), np.eye(2)])
    C2 = np.hstack([np.eye(2), np.zeros((2, 4))])
    nd = B1.shape[1]
    return AffineLpvSystem(A0, A1, B1, B2, C1, C2, np.zeros((4, nd)), D12, D21, np.zeros((2, 2)), p.rho_range)


def build_amb(p: AmbParams = AmbParams()) -> dict:
    """``{"lpv": affine LPV model, "raw": continuous LFT, "weighted": discrete weighted plant}``."""
    lpv = amb_lpv(p)
    raw = lpv_to_lft(lpv)
    weighted = zoh_discretize(augment_with_weights(raw, amb_weights(), AMB_TOPOLOGY), p.ts)
    validate_plant(weighted)
    return {"lpv": lpv, "raw": raw, "weighted": weighted}


def amb_delta(p: AmbParams, rho: float) -> np.ndarray:
    """Plant-side Delta at rotor speed ``rho`` (repeated scalar of size 2)."""
    return float(rho_to_delta(amb_lpv(p), rho)) * np.eye(2)


EXAMPLES = {"two-disk": build_two_disk, "amb": build_amb}
