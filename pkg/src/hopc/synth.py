"""Deterministic synthetic pointcloud sequences for invariance tests and demos.

Lengths are in decimetres: the articulated actor is about 17 units tall, so
a support radius of 1 unit is a 10 cm neighbourhood.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geom import Frame, PointCloudSequence

SCENARIOS = ("oscillating-blob", "rod-sweep", "two-limb-articulation", "static-plane")
N_ACTIONS = 6


@dataclass(frozen=True)
class SynthScenario:
    """Scenario description; ``speed`` > 1 plays the motion faster.

    Frame ``k`` (0-based) of a sequence generated at speed ``s`` shows the
    motion phase of frame ``s * k`` at speed 1. ``view_angle`` is in degrees
    about ``view_axis`` through the origin. ``action`` selects the limb
    motion of the articulated actor (0..5); ``amplitude`` 0 freezes it.
    """

    scenario: str = "two-limb-articulation"
    duration: int = 24
    speed: float = 1.0
    view_axis: tuple = (0.0, 1.0, 0.0)
    view_angle: float = 0.0
    actor_scale: float = 1.0
    noise_sigma: float = 0.0
    seed: int = 0
    action: int = 0
    period: float = 16.0
    amplitude: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        if self.duration < 2:
            raise ConfigError("duration must be >= 2 frames")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if not 0 <= self.action < N_ACTIONS:
            raise ConfigError(f"action must be in 0..{N_ACTIONS - 1}")


def rotation_matrix(axis, angle_deg):
    """Right-handed rotation about ``axis`` (Rodrigues)."""
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    th = math.radians(angle_deg)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(th) * K + (1 - math.cos(th)) * K @ K


def _ellipsoid_surface(rng, n, radii):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return v * np.asarray(radii)


def _cylinder_surface(rng, n, length, radius):
    """Points on a cylinder along +y from 0 to ``-length`` (hangs down)."""
    s = rng.uniform(0, length, n)
    ang = rng.uniform(0, 2 * np.pi, n)
    return np.stack([radius * np.cos(ang), -s, radius * np.sin(ang)], axis=1)


def _limb_rotation(kind, side, phase, amp):
    """Rotation of a hanging limb for one of the motion primitives."""
    if kind == "frontal":
        # raised sideways, waving in the image plane
        ang = side * (110.0 + 35.0 * amp * math.sin(phase))
        return rotation_matrix((0, 0, 1), ang)
    # swinging forwards/backwards towards the camera
    ang = 50.0 * amp * math.sin(phase)
    return rotation_matrix((1, 0, 0), -ang)


_ACTIONS = {
    0: (("frontal", 0.0), None),
    1: (None, ("frontal", 0.0)),
    2: (("frontal", 0.0), ("frontal", 0.0)),
    3: (("sagittal", 0.0), None),
    4: (None, ("sagittal", 0.0)),
    5: (("sagittal", 0.0), ("sagittal", math.pi)),
}


def _actor(sc: SynthScenario):
    rng = np.random.default_rng([sc.seed, 1])
    s = sc.actor_scale
    parts = {
        "torso": (_ellipsoid_surface(rng, 160, (1.8, 3.0, 1.0)) + (0, 11.0, 0)) * s,
        "head": (_ellipsoid_surface(rng, 40, (1.1, 1.1, 1.1)) + (0, 15.3, 0)) * s,
        "legs": np.concatenate([
            (_cylinder_surface(rng, 40, 8.0, 0.6) + (x, 8.0, 0)) * s for x in (-0.9, 0.9)]),
        "arm_r": _cylinder_surface(rng, 60, 6.5, 0.45) * s,
        "arm_l": _cylinder_surface(rng, 60, 6.5, 0.45) * s,
    }
    shoulders = {"arm_r": np.array([-2.2, 13.6, 0.0]) * s, "arm_l": np.array([2.2, 13.6, 0.0]) * s}
    return parts, shoulders


def _pose_actor(sc, parts, shoulders, phase):
    right, left = _ACTIONS[sc.action]
    pts, moving = [], []
    for name in ("torso", "head", "legs"):
        pts.append(parts[name])
        moving.append(np.zeros(len(parts[name]), dtype=bool))
    for name, spec, side in (("arm_r", right, -1.0), ("arm_l", left, 1.0)):
        if spec is None:
            R = np.eye(3)
            mov = False
        else:
            kind, off = spec
            R = _limb_rotation(kind, side, phase + off, sc.amplitude)
            mov = sc.amplitude != 0
        pts.append(parts[name] @ R.T + shoulders[name])
        moving.append(np.full(len(parts[name]), mov))
    return np.concatenate(pts), np.concatenate(moving)


def _blob(sc, phase):
    # a slender capsule swinging sideways: the merged sideways sweep competes
    # with the thin cross-section, so the temporal profile has a clear minimum
    rng = np.random.default_rng([sc.seed, 2])
    s = sc.actor_scale
    body = _ellipsoid_surface(rng, 600, (3.0, 0.3, 0.3)) * s
    shift = np.array([0.0, 1.5 * s * sc.amplitude * math.sin(phase), 0.0])
    return body + shift, np.full(len(body), sc.amplitude != 0)


def _rod(sc, phase):
    rng = np.random.default_rng([sc.seed, 3])
    s = sc.actor_scale
    half = 2.0 * s
    # dense thick rod: single noise points barely move its eigenvalues, so
    # l1/l2 keeps growing until the radius passes the rod's ends
    n = 2001
    t = np.linspace(-half, half, n)
    a = np.arange(n) * 2.4
    rod = np.stack([t, 0.2 * s * np.cos(a), 0.2 * s * np.sin(a)], axis=1)
    ang = math.radians(30.0) * sc.amplitude * math.sin(phase)
    R = rotation_matrix((0, 0, 1), math.degrees(ang))
    rod = rod @ R.T
    noise = rng.uniform(-6 * s, 6 * s, size=(400, 3))
    pts = np.concatenate([rod, noise])
    moving = np.concatenate([np.full(len(rod), sc.amplitude != 0), np.zeros(len(noise), dtype=bool)])
    return pts, moving


def _plane(sc):
    s = sc.actor_scale
    g = np.arange(-10, 11) * 0.4 * s
    xx, yy = np.meshgrid(g, g)
    pts = np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=1)
    return pts, np.zeros(len(pts), dtype=bool)


def synth_generate(sc: SynthScenario, with_truth: bool = False):
    """Generate the scenario's sequence (and per-frame motion masks if asked).

    Pure function of the scenario: sampling and noise are seeded from
    ``sc.seed`` and the motion tick, so equal ticks get equal noise.
    """
    R = rotation_matrix(sc.view_axis, sc.view_angle)
    parts = shoulders = None
    if sc.scenario == "two-limb-articulation":
        parts, shoulders = _actor(sc)
    frames, truth = [], []
    for k in range(sc.duration):
        tick = k * sc.speed
        phase = 2 * math.pi * tick / sc.period + sc.phase
        if sc.scenario == "two-limb-articulation":
            pts, mov = _pose_actor(sc, parts, shoulders, phase)
        elif sc.scenario == "oscillating-blob":
            pts, mov = _blob(sc, phase)
        elif sc.scenario == "rod-sweep":
            pts, mov = _rod(sc, phase)
        else:
            pts, mov = _plane(sc)
        if sc.noise_sigma > 0:
            nrng = np.random.default_rng([sc.seed, 4, int(round(tick * 1000))])
            pts = pts + nrng.normal(scale=sc.noise_sigma, size=pts.shape)
        frames.append(Frame(k + 1, pts @ R.T))
        truth.append(mov)
    seq = PointCloudSequence(tuple(frames), frame_rate=30.0 / sc.speed, subject_id=None,
                             action_label=sc.action if sc.scenario == "two-limb-articulation" else None)
    return (seq, truth) if with_truth else seq


def action_suite(n_subjects: int = 10, duration: int = 24, seed: int = 0, speed: float = 1.0,
                 view_angle: float = 0.0):
    """Six articulated actions performed by ``n_subjects`` scale/noise variants.

    Subject ``i`` (1-based) gets its own body sampling, actor scale in
    ``[0.85, 1.15]``, noise level, motion amplitude and starting phase.
    """
    rng = np.random.default_rng([seed, 99])
    subj = [dict(scale=rng.uniform(0.85, 1.15), noise=rng.uniform(0.0, 0.05),
                 amp=rng.uniform(0.8, 1.2), phase=rng.uniform(0, 2 * np.pi),
                 period=rng.uniform(14.0, 18.0))
            for _ in range(n_subjects)]
    seqs = []
    for si, sp in enumerate(subj, start=1):
        for a in range(N_ACTIONS):
            sc = SynthScenario("two-limb-articulation", duration=duration, speed=speed,
                               view_angle=view_angle, actor_scale=sp["scale"],
                               noise_sigma=sp["noise"], seed=seed * 1000 + si * 10 + a, action=a,
                               period=sp["period"], amplitude=sp["amp"], phase=sp["phase"])
            s = synth_generate(sc)
            seqs.append(PointCloudSequence(s.frames, s.frame_rate, si, a))
    return seqs
