"""Landmark-to-joint retargeting for multi-DoF hands.

21 streamed hand landmarks (device frame, wrist first, then four joints
per finger thumb/index/middle/ring/little) are mapped to robot hand
joints by minimizing

    C(q) = sum_i || alpha * v_i - f_i(q) ||^2  +  beta * || q - q_prev ||^2

where v_i is a human landmark difference (tip - origin) and f_i(q) is the
matching robot frame difference under forward kinematics. The solver is
projected Gauss-Newton: the least-squares step is line-searched by
halving (up to 20 times) on the limit-clamped candidate, which guarantees
the objective never increases; iteration stops when the accepted step
norm drops below step_tolerance or after max_iterations.

Hand profiles (YAML) declare either this retargeting config or, for
parallel-jaw pseudo-hands, an aperture rule: gripper width follows the
distance between two landmarks (thumb tip and index tip by default).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .geometry import Pose, Vec3
from .kinematics import (
    DimensionMismatch,
    KinematicModel,
    clamp_to_limits,
    forward_kinematics,
    jacobian,
)

__all__ = [
    "LANDMARK_NAMES",
    "LANDMARK_COUNT",
    "NonFiniteObjective",
    "HandFrame",
    "VectorPair",
    "RetargetConfig",
    "RetargetState",
    "ApertureProfile",
    "RetargetProfile",
    "load_profile",
    "target_vectors",
    "bind",
    "retarget_step",
    "objective_value",
]

log = logging.getLogger(__name__)

LANDMARK_COUNT = 21

# Index 0 is the wrist; each finger contributes four points base-to-tip.
LANDMARK_NAMES = (
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "little_mcp", "little_pip", "little_dip", "little_tip",
)

DEFAULT_SCALE_ALPHA = 1.6
DEFAULT_SMOOTHING_BETA = 0.05
DEFAULT_MAX_ITERATIONS = 30
DEFAULT_STEP_TOLERANCE = 1e-5


class NonFiniteObjective(ValueError):
    """Corrupted landmark input produced a non-finite residual."""


@dataclass(frozen=True, slots=True)
class HandFrame:
    landmarks: tuple[Vec3, ...]
    device_pose: Pose
    timestamp_us: int

    def __post_init__(self):
        if len(self.landmarks) != LANDMARK_COUNT:
            raise ValueError(f"expected {LANDMARK_COUNT} landmarks, got {len(self.landmarks)}")


@dataclass(frozen=True, slots=True)
class VectorPair:
    human: tuple[int, int]  # (origin landmark index, tip landmark index)
    robot: tuple[str, str]  # (origin frame, tip frame)


@dataclass(slots=True)
class RetargetConfig:
    vector_pairs: tuple[VectorPair, ...]
    scale_alpha: float = DEFAULT_SCALE_ALPHA
    smoothing_beta: float = DEFAULT_SMOOTHING_BETA
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    step_tolerance: float = DEFAULT_STEP_TOLERANCE

    def __post_init__(self):
        if not self.vector_pairs:
            raise ValueError("need at least one vector pair")
        for pair in self.vector_pairs:
            for idx in pair.human:
                if not (0 <= idx < LANDMARK_COUNT):
                    raise ValueError(f"landmark index {idx} out of range")
        if not (0.0 < self.scale_alpha <= 5.0):
            raise ValueError(f"scale_alpha must be in (0, 5], got {self.scale_alpha}")
        if self.smoothing_beta < 0.0:
            raise ValueError("smoothing_beta must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.step_tolerance <= 0.0:
            raise ValueError("step_tolerance must be > 0")


@dataclass(slots=True)
class RetargetState:
    q_prev: tuple[float, ...]
    last_timestamp_us: int = -1
    stale_frames: int = 0


@dataclass(frozen=True, slots=True)
class ApertureProfile:
    """Parallel-jaw pseudo-hand: aperture follows a landmark distance."""

    name: str
    pair: tuple[int, int] = (4, 8)  # thumb tip, index tip
    gain: float = 1.0
    max_aperture: float = 0.08

    def aperture(self, frame: HandFrame) -> float:
        a, b = self.pair
        d = (frame.landmarks[b] - frame.landmarks[a]).norm()
        return min(max(d * self.gain, 0.0), self.max_aperture)


@dataclass(frozen=True, slots=True)
class RetargetProfile:
    name: str
    config: RetargetConfig


def load_profile(path: str | Path) -> RetargetProfile | ApertureProfile:
    """Load a hand profile file; `kind` selects retarget vs aperture."""
    path = Path(path)
    doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: profile must be a mapping")
    name = str(doc.get("name", path.stem))
    kind = doc.get("kind", "retarget")
    if kind == "aperture":
        pair = tuple(doc.get("pair", (4, 8)))
        if len(pair) != 2:
            raise ValueError(f"{path}: aperture pair needs two landmark indices")
        return ApertureProfile(
            name=name,
            pair=(int(pair[0]), int(pair[1])),
            gain=float(doc.get("gain", 1.0)),
            max_aperture=float(doc.get("max_aperture", 0.08)),
        )
    if kind != "retarget":
        raise ValueError(f"{path}: unknown profile kind {kind!r}")
    raw_pairs = doc.get("vector_pairs")
    if not raw_pairs:
        raise ValueError(f"{path}: retarget profile needs vector_pairs")
    pairs = []
    for entry in raw_pairs:
        human = entry["human"]
        robot = entry["robot"]
        pairs.append(VectorPair(human=(int(human[0]), int(human[1])),
                                robot=(str(robot[0]), str(robot[1]))))
    cfg = RetargetConfig(
        vector_pairs=tuple(pairs),
        scale_alpha=float(doc.get("scale_alpha", DEFAULT_SCALE_ALPHA)),
        smoothing_beta=float(doc.get("smoothing_beta", DEFAULT_SMOOTHING_BETA)),
        max_iterations=int(doc.get("max_iterations", DEFAULT_MAX_ITERATIONS)),
        step_tolerance=float(doc.get("step_tolerance", DEFAULT_STEP_TOLERANCE)),
    )
    return RetargetProfile(name=name, config=cfg)


def target_vectors(frame: HandFrame, config: RetargetConfig) -> list[Vec3]:
    return [frame.landmarks[p.human[1]] - frame.landmarks[p.human[0]] for p in config.vector_pairs]


def bind(model: KinematicModel, config: RetargetConfig, q_init) -> RetargetState:
    """Validate config against the model and seed the solver state."""
    for pair in config.vector_pairs:
        model.resolve_frame(pair.robot[0])
        model.resolve_frame(pair.robot[1])
    q = tuple(float(v) for v in q_init)
    if len(q) != model.dof:
        raise DimensionMismatch(f"q_init has {len(q)} values for a {model.dof}-DoF model")
    clamped = clamp_to_limits(model, q)
    if clamped != q:
        log.warning("retarget bind: q_init clamped to joint limits")
    return RetargetState(q_prev=clamped)


def _robot_vectors(model, config, fk) -> np.ndarray:
    out = np.empty((len(config.vector_pairs), 3))
    for i, pair in enumerate(config.vector_pairs):
        o = fk[model.resolve_frame(pair.robot[0])].translation
        t = fk[model.resolve_frame(pair.robot[1])].translation
        out[i] = (t.x - o.x, t.y - o.y, t.z - o.z)
    return out


def _residual(model, config, q, targets: np.ndarray, q_prev: np.ndarray) -> np.ndarray:
    fk = forward_kinematics(model, q)
    r = (config.scale_alpha * targets - _robot_vectors(model, config, fk)).reshape(-1)
    if config.smoothing_beta > 0.0:
        r = np.concatenate([r, math.sqrt(config.smoothing_beta) * (np.asarray(q) - q_prev)])
    return r


def objective_value(model: KinematicModel, config: RetargetConfig, q, q_prev,
                    frame: HandFrame) -> float:
    """C(q); exposed for tests and diagnostics."""
    targets = np.array([v.as_tuple() for v in target_vectors(frame, config)])
    r = _residual(model, config, tuple(float(v) for v in q), targets,
                  np.asarray(q_prev, dtype=float))
    return float(r @ r)


def _residual_jacobian(model, config, q, n_dof: int, with_smoothing: bool,
                       beta: float) -> np.ndarray:
    rows = []
    for pair in config.vector_pairs:
        j_o = jacobian(model, q, pair.robot[0])[:3]
        j_t = jacobian(model, q, pair.robot[1])[:3]
        rows.append(-(j_t - j_o))  # d residual / dq = -d f_i / dq
    J = np.vstack(rows)
    if with_smoothing:
        J = np.vstack([J, math.sqrt(beta) * np.eye(n_dof)])
    return J


def retarget_step(
    model: KinematicModel,
    config: RetargetConfig,
    state: RetargetState,
    frame: HandFrame,
) -> tuple[float, ...]:
    """One control-tick retargeting solve; updates state.q_prev to the result.

    Frames older than the last consumed one are discarded (counted in
    state.stale_frames) and q_prev is returned unchanged.
    """
    if len(state.q_prev) != model.dof:
        raise DimensionMismatch(
            f"state has {len(state.q_prev)} values for a {model.dof}-DoF model"
        )
    if frame.timestamp_us <= state.last_timestamp_us:
        state.stale_frames += 1
        return state.q_prev

    try:
        targets = np.array([v.as_tuple() for v in target_vectors(frame, config)])
    except ValueError as exc:
        # Vec3 arithmetic refuses non-finite components, so corrupted
        # landmarks surface here; map to the documented signal.
        raise NonFiniteObjective(str(exc)) from exc
    if not np.all(np.isfinite(targets)):
        raise NonFiniteObjective("non-finite landmark vectors")
    q_prev = np.asarray(state.q_prev, dtype=float)
    beta = config.smoothing_beta

    q = tuple(state.q_prev)
    r0 = _residual(model, config, q, targets, q_prev)
    cost = float(r0 @ r0)
    if not math.isfinite(cost):
        raise NonFiniteObjective("objective not finite at q_prev")

    for _ in range(config.max_iterations):
        r = _residual(model, config, q, targets, q_prev)
        J = _residual_jacobian(model, config, q, model.dof, beta > 0.0, beta)
        # Minimum-norm Gauss-Newton step; lstsq handles rank deficiency
        # (e.g. beta = 0 with collapsed target vectors) deterministically.
        dq = np.linalg.lstsq(J, -r, rcond=None)[0]

        step = 1.0
        accepted = None
        for _ in range(20):
            cand = clamp_to_limits(model, np.asarray(q) + step * dq)
            rc = _residual(model, config, cand, targets, q_prev)
            cand_cost = float(rc @ rc)
            if cand_cost <= cost:
                accepted = (cand, cand_cost)
                break
            step *= 0.5
        if accepted is None:
            break  # no halving improves; q is as good as this model of C gets
        moved = math.sqrt(sum((a - b) ** 2 for a, b in zip(accepted[0], q)))
        q, cost = accepted
        if moved < config.step_tolerance:
            break

    state.q_prev = q
    state.last_timestamp_us = frame.timestamp_us
    return q
