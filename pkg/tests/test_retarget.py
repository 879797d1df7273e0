"""Retargeting tests against analytic brute-force oracles.

The oracles never call the solver's internals: hinge and planar-finger
costs are written out in trig, and minimizers come from dense grid
search (full 1e-4 grid for 1 DoF, coarse-to-fine refinement reaching
1e-4 resolution for 2 DoF).
"""

import logging
import math

import numpy as np
import pytest

from dexlink.assets import asset_path
from dexlink.geometry import Pose, Vec3
from dexlink.kinematics import DimensionMismatch, load_model, load_model_file
from dexlink.retarget import (
    ApertureProfile,
    HandFrame,
    NonFiniteObjective,
    RetargetConfig,
    RetargetProfile,
    RetargetState,
    VectorPair,
    bind,
    load_profile,
    retarget_step,
    target_vectors,
)

# ---------------------------------------------------------------------------
# fixtures


HINGE_LEN = 0.04
HINGE_HI = math.pi / 2

TWO_DOF_TABULAR = """\
# planar two-segment finger
f1 revolute base prox 0 0 0  0 0 0  0 0 1  0 1.6
f2 revolute prox dist 0.035 0 0  0 0 0  0 0 1  0 1.6
tf fixed dist tip 0.03 0 0  0 0 0  0 0 0  0 0
"""

# Open-hand landmark layout in the device frame (meters). Wrist at the
# origin, fingers fanned along +x, thumb toward -y.
NEUTRAL_LANDMARKS = [
    (0.0, 0.0, 0.0),
    (0.02, -0.03, 0.0), (0.04, -0.045, 0.0), (0.055, -0.055, 0.0), (0.065, -0.065, 0.0),
    (0.08, 0.025, 0.0), (0.115, 0.025, 0.0), (0.135, 0.025, 0.0), (0.15, 0.025, 0.0),
    (0.082, 0.0, 0.0), (0.12, 0.0, 0.0), (0.142, 0.0, 0.0), (0.158, 0.0, 0.0),
    (0.08, -0.022, 0.0), (0.115, -0.022, 0.0), (0.135, -0.022, 0.0), (0.148, -0.022, 0.0),
    (0.072, -0.044, 0.0), (0.098, -0.044, 0.0), (0.112, -0.044, 0.0), (0.124, -0.044, 0.0),
]


def make_frame(overrides=None, ts=1000):
    pts = [Vec3(*p) for p in NEUTRAL_LANDMARKS]
    for idx, v in (overrides or {}).items():
        pts[idx] = v
    return HandFrame(landmarks=tuple(pts), device_pose=Pose.identity(), timestamp_us=ts)


@pytest.fixture(scope="module")
def hinge_model():
    return load_model_file(asset_path("models", "hinge_finger.urdf"))


@pytest.fixture(scope="module")
def two_dof_model():
    return load_model(TWO_DOF_TABULAR)


@pytest.fixture(scope="module")
def hand4_model():
    return load_model_file(asset_path("models", "hand4.urdf"))


def hinge_config(alpha=1.6, beta=0.05):
    return RetargetConfig(
        vector_pairs=(VectorPair(human=(5, 8), robot=("palm", "fingertip")),),
        scale_alpha=alpha,
        smoothing_beta=beta,
    )


def two_dof_config(alpha=1.6, beta=0.05):
    return RetargetConfig(
        vector_pairs=(VectorPair(human=(5, 8), robot=("base", "tip")),),
        scale_alpha=alpha,
        smoothing_beta=beta,
    )


# ---------------------------------------------------------------------------
# analytic oracles


def hinge_tip(q):
    return np.array([HINGE_LEN * np.cos(q), HINGE_LEN * np.sin(q), 0.0 * q])


def hinge_cost(q, v, alpha, beta, q_prev):
    """C(q) for the hinge finger, vectorized over q."""
    q = np.asarray(q, dtype=float)
    rx = alpha * v[0] - HINGE_LEN * np.cos(q)
    ry = alpha * v[1] - HINGE_LEN * np.sin(q)
    rz = alpha * v[2] + 0.0 * q
    return rx * rx + ry * ry + rz * rz + beta * (q - q_prev) ** 2


def hinge_grid_argmin(v, alpha, beta, q_prev):
    qs = np.arange(0.0, HINGE_HI + 1e-12, 1e-4)
    return float(qs[np.argmin(hinge_cost(qs, v, alpha, beta, q_prev))])


def two_dof_tip(q1, q2):
    return np.stack(
        [
            0.035 * np.cos(q1) + 0.03 * np.cos(q1 + q2),
            0.035 * np.sin(q1) + 0.03 * np.sin(q1 + q2),
            np.zeros_like(np.asarray(q1, dtype=float)),
        ]
    )


def two_dof_cost(q1, q2, v, alpha, beta, q_prev):
    f = two_dof_tip(q1, q2)
    r0 = alpha * v[0] - f[0]
    r1 = alpha * v[1] - f[1]
    r2 = alpha * v[2] - f[2]
    c = r0 * r0 + r1 * r1 + r2 * r2
    return c + beta * ((q1 - q_prev[0]) ** 2 + (q2 - q_prev[1]) ** 2)


def two_dof_grid_argmin(v, alpha, beta, q_prev):
    """Coarse pass at 2e-3 over the full range, then a 1e-4 window refine."""
    lo, hi = 0.0, 1.6

    def argmin_on(a1, a2):
        g1, g2 = np.meshgrid(a1, a2, indexing="ij")
        c = two_dof_cost(g1, g2, v, alpha, beta, q_prev)
        i, j = np.unravel_index(np.argmin(c), c.shape)
        return float(a1[i]), float(a2[j])

    coarse = np.arange(lo, hi + 1e-12, 2e-3)
    c1, c2 = argmin_on(coarse, coarse)
    w = 4e-3  # two coarse cells each side; basin is far wider than this
    f1 = np.arange(max(lo, c1 - w), min(hi, c1 + w) + 1e-12, 1e-4)
    f2 = np.arange(max(lo, c2 - w), min(hi, c2 + w) + 1e-12, 1e-4)
    return argmin_on(f1, f2)


def hand4_vectors(q):
    """Knuckle-to-tip vectors of hand4 in world frame, order thumb..ring.

    Each finger is a planar two-segment chain hinged about +y, so its
    knuckle-to-tip vector lives in the x-z plane of the palm.
    """
    out = []
    for f in range(4):
        q1, q2 = q[2 * f], q[2 * f + 1]
        x = 0.035 * math.cos(q1) + 0.03 * math.cos(q1 + q2)
        z = -(0.035 * math.sin(q1) + 0.03 * math.sin(q1 + q2))
        out.append(np.array([x, 0.0, z]))
    return out


def hand4_cost(q, targets, alpha, beta, q_prev):
    c = 0.0
    for v, f in zip(targets, hand4_vectors(q)):
        r = alpha * np.asarray(v) - f
        c += float(r @ r)
    return c + beta * float(np.sum((np.asarray(q) - np.asarray(q_prev)) ** 2))


def hand4_config(beta=0.05):
    return RetargetConfig(
        vector_pairs=(
            VectorPair(human=(2, 4), robot=("thumb_prox", "thumb_tip")),
            VectorPair(human=(5, 8), robot=("index_prox", "index_tip")),
            VectorPair(human=(9, 12), robot=("middle_prox", "middle_tip")),
            VectorPair(human=(13, 16), robot=("ring_prox", "ring_tip")),
        ),
        smoothing_beta=beta,
    )


HAND4_HUMAN_PAIRS = ((2, 4), (5, 8), (9, 12), (13, 16))


def hand4_frame_for_targets(targets, ts):
    """Place finger tips so the human vectors equal the given targets."""
    over = {}
    for (o, t), v in zip(HAND4_HUMAN_PAIRS, targets):
        base = Vec3(*NEUTRAL_LANDMARKS[o])
        over[t] = base + Vec3(*np.asarray(v, dtype=float))
    return make_frame(over, ts=ts)


# ---------------------------------------------------------------------------
# target_vectors


def test_target_vectors_subtraction():
    cfg = RetargetConfig(vector_pairs=(VectorPair(human=(0, 8), robot=("palm", "fingertip")),))
    frame = make_frame({0: Vec3(0, 0, 0), 8: Vec3(0, 0.15, 0.02)})
    (v,) = target_vectors(frame, cfg)
    assert v == Vec3(0.0, 0.15, 0.02)


def test_target_vectors_degenerate_zero():
    cfg = RetargetConfig(vector_pairs=(VectorPair(human=(5, 8), robot=("palm", "fingertip")),))
    frame = make_frame({8: Vec3(*NEUTRAL_LANDMARKS[5])})
    (v,) = target_vectors(frame, cfg)
    assert v.as_tuple() == (0.0, 0.0, 0.0)


def test_open_hand_fixture_fingertip_norms():
    pairs = tuple(
        VectorPair(human=(0, tip), robot=("palm", "fingertip")) for tip in (4, 8, 12, 16, 20)
    )
    cfg = RetargetConfig(vector_pairs=pairs)
    vs = target_vectors(make_frame(), cfg)
    assert len(vs) == 5
    for v in vs:
        assert 0.05 <= v.norm() <= 0.20


# ---------------------------------------------------------------------------
# grid-search equivalence


def test_hinge_q07_matches_grid(hinge_model):
    # Tip position at q = 0.7 rad, pre-divided by alpha so the scaled
    # human vector reproduces it exactly.
    alpha = 1.6
    cfg = hinge_config(alpha=alpha, beta=0.0)
    tip = hinge_tip(0.7)
    v = tip / alpha
    frame = make_frame({5: Vec3(0, 0, 0), 8: Vec3(*v)})
    state = bind(hinge_model, cfg, (0.2,))
    (q,) = retarget_step(hinge_model, cfg, state, frame)
    q_grid = hinge_grid_argmin(v, alpha, 0.0, 0.2)
    assert abs(q - q_grid) < 1e-3
    assert abs(q - 0.7) < 1e-3


@pytest.mark.parametrize("beta", [0.0, 0.05])
def test_hinge_random_targets_match_grid(hinge_model, beta):
    rng = np.random.default_rng(42)
    for _ in range(20):
        # Mix reachable tips with out-of-reach scalings of them.
        q_true = rng.uniform(0.0, HINGE_HI)
        scale = rng.choice([0.5, 1.0, 1.0, 2.5])
        v = hinge_tip(q_true) * scale / 1.6
        q_prev = float(rng.uniform(0.0, HINGE_HI))
        cfg = hinge_config(beta=beta)
        state = bind(hinge_model, cfg, (q_prev,))
        (q,) = retarget_step(hinge_model, cfg, state, make_frame({5: Vec3(0, 0, 0), 8: Vec3(*v)}))
        q_grid = hinge_grid_argmin(v, 1.6, beta, q_prev)
        assert abs(q - q_grid) < 1e-3


def test_two_dof_matches_coarse_to_fine_grid(two_dof_model):
    rng = np.random.default_rng(7)
    for _ in range(6):
        q_true = rng.uniform(0.1, 1.5, size=2)
        v = two_dof_tip(q_true[0], q_true[1]) / 1.6
        q_prev = tuple(rng.uniform(0.0, 1.6, size=2))
        cfg = two_dof_config(beta=0.05)
        state = bind(two_dof_model, cfg, q_prev)
        frame = make_frame({5: Vec3(0, 0, 0), 8: Vec3(*v)})
        q = retarget_step(two_dof_model, cfg, state, frame)
        g = two_dof_grid_argmin(v, 1.6, 0.05, q_prev)
        assert abs(q[0] - g[0]) < 1e-3 and abs(q[1] - g[1]) < 1e-3


# ---------------------------------------------------------------------------
# fixed point, smoothing, descent, limits


def test_fixed_point_returns_q_prev(hand4_model):
    cfg = hand4_config()
    q_prev = (0.3, 0.4, 0.5, 0.2, 0.7, 0.1, 0.25, 0.6)
    state = bind(hand4_model, cfg, q_prev)
    targets = [f / cfg.scale_alpha for f in hand4_vectors(q_prev)]
    frame = hand4_frame_for_targets(targets, ts=10)
    q = retarget_step(hand4_model, cfg, state, frame)
    assert q == q_prev


def test_huge_beta_pins_q_prev(hand4_model):
    cfg = hand4_config(beta=1e9)
    q_prev = (0.3, 0.4, 0.5, 0.2, 0.7, 0.1, 0.25, 0.6)
    state = bind(hand4_model, cfg, q_prev)
    rng = np.random.default_rng(3)
    over = {t: Vec3(*rng.uniform(-0.1, 0.1, size=3)) for t in (4, 8, 12, 16)}
    q = retarget_step(hand4_model, cfg, state, make_frame(over))
    assert max(abs(a - b) for a, b in zip(q, q_prev)) < 1e-6


def test_descent_and_exact_limits_on_random_frames(hand4_model):
    cfg = hand4_config()
    state = bind(hand4_model, cfg, (0.8,) * 8)
    lo, hi = hand4_model.limits_arrays()
    rng = np.random.default_rng(11)
    for i in range(300):
        targets = [rng.uniform(-0.06, 0.06, size=3) for _ in range(4)]
        frame = hand4_frame_for_targets(targets, ts=100 + i)
        q_prev = state.q_prev
        tv = [np.asarray(t.as_tuple()) for t in target_vectors(frame, cfg)]
        c_before = hand4_cost(q_prev, tv, cfg.scale_alpha, cfg.smoothing_beta, q_prev)
        q = retarget_step(hand4_model, cfg, state, frame)
        c_after = hand4_cost(q, tv, cfg.scale_alpha, cfg.smoothing_beta, q_prev)
        assert c_after <= c_before + 1e-12
        assert all(lo[k] <= q[k] <= hi[k] for k in range(8))


def test_limits_pin_exactly_on_far_targets(hinge_model):
    cfg = hinge_config(beta=0.0)
    state = bind(hinge_model, cfg, (1.0,))
    # Target far along -x: straightening past the lower limit would help,
    # so the solver must pin exactly at 0.
    frame = make_frame({5: Vec3(0, 0, 0), 8: Vec3(0.5, -0.5, 0.0)})
    (q,) = retarget_step(hinge_model, cfg, state, frame)
    grid = hinge_grid_argmin(np.array([0.5, -0.5, 0.0]), 1.6, 0.0, 1.0)
    assert abs(q - grid) < 1e-3
    assert q == 0.0


def test_scale_covariance_on_hinge(hinge_model):
    base_v = hinge_tip(0.9) / 1.6
    results = []
    for s in (1.0, 0.5, 2.0, 3.7):
        # alpha/s must stay within the (0, 5] config bound
        if not (0.0 < 1.6 / s <= 5.0):
            continue
        cfg = hinge_config(alpha=1.6 / s, beta=0.05)
        state = bind(hinge_model, cfg, (0.3,))
        frame = make_frame({5: Vec3(0, 0, 0), 8: Vec3(*(base_v * s))})
        (q,) = retarget_step(hinge_model, cfg, state, frame)
        results.append(q)
    assert max(results) - min(results) < 1e-9


def test_temporal_continuity_small_motion(hand4_model):
    cfg = hand4_config(beta=0.1)
    state = bind(hand4_model, cfg, (0.4,) * 8)
    rng = np.random.default_rng(5)
    targets = [np.array([0.04, 0.0, -0.03]) for _ in range(4)]
    prev_q = None
    for i in range(50):
        frame = hand4_frame_for_targets(targets, ts=1000 + i)
        q = retarget_step(hand4_model, cfg, state, frame)
        if prev_q is not None:
            assert max(abs(a - b) for a, b in zip(q, prev_q)) < 0.05
        prev_q = q
        # under 1 mm of per-frame landmark motion
        targets = [t + rng.uniform(-5e-4, 5e-4, size=3) for t in targets]


# ---------------------------------------------------------------------------
# state handling and errors


def test_stale_frames_discarded(hinge_model):
    cfg = hinge_config()
    state = bind(hinge_model, cfg, (0.2,))
    frame1 = make_frame({8: Vec3(0.03, 0.02, 0.0)}, ts=100)
    q1 = retarget_step(hinge_model, cfg, state, frame1)
    assert state.last_timestamp_us == 100
    old = make_frame({8: Vec3(0.1, 0.1, 0.0)}, ts=100)  # same stamp: stale
    q2 = retarget_step(hinge_model, cfg, state, old)
    assert q2 == q1
    assert state.stale_frames == 1
    assert state.last_timestamp_us == 100


def test_bind_midrange_and_clamped(hinge_model, caplog):
    state = bind(hinge_model, hinge_config(), (0.5,))
    assert state.q_prev == (0.5,)
    with caplog.at_level(logging.WARNING, logger="dexlink.retarget"):
        state = bind(hinge_model, hinge_config(), (2.4,))
    assert state.q_prev == (HINGE_HI,)
    assert any("clamped" in r.message for r in caplog.records)


def test_bind_then_step_within_limits(hand4_model):
    cfg = hand4_config()
    state = bind(hand4_model, cfg, (0.0,) * 8)
    q = retarget_step(hand4_model, cfg, state, make_frame())
    lo, hi = hand4_model.limits_arrays()
    assert all(lo[i] <= q[i] <= hi[i] for i in range(8))


def test_dimension_mismatch(hinge_model):
    with pytest.raises(DimensionMismatch):
        bind(hinge_model, hinge_config(), (0.1, 0.2))
    state = RetargetState(q_prev=(0.1, 0.2))
    with pytest.raises(DimensionMismatch):
        retarget_step(hinge_model, hinge_config(), state, make_frame())


def test_config_validation():
    pair = VectorPair(human=(5, 8), robot=("a", "b"))
    with pytest.raises(ValueError):
        RetargetConfig(vector_pairs=())
    with pytest.raises(ValueError):
        RetargetConfig(vector_pairs=(VectorPair(human=(5, 21), robot=("a", "b")),))
    with pytest.raises(ValueError):
        RetargetConfig(vector_pairs=(pair,), scale_alpha=0.0)
    with pytest.raises(ValueError):
        RetargetConfig(vector_pairs=(pair,), scale_alpha=5.1)
    with pytest.raises(ValueError):
        RetargetConfig(vector_pairs=(pair,), smoothing_beta=-0.1)
    with pytest.raises(ValueError):
        RetargetConfig(vector_pairs=(pair,), max_iterations=0)
    with pytest.raises(ValueError):
        RetargetConfig(vector_pairs=(pair,), step_tolerance=0.0)


def test_frame_needs_21_landmarks():
    with pytest.raises(ValueError):
        HandFrame(landmarks=(Vec3(0, 0, 0),) * 20, device_pose=Pose.identity(), timestamp_us=0)


def test_nonfinite_landmarks_raise_and_leave_state(hinge_model):
    # Simulate corruption that slipped past construction-time checks.
    bad = object.__new__(Vec3)
    object.__setattr__(bad, "x", float("nan"))
    object.__setattr__(bad, "y", 0.0)
    object.__setattr__(bad, "z", 0.0)
    cfg = hinge_config()
    state = bind(hinge_model, cfg, (0.2,))
    frame = make_frame({8: bad}, ts=50)
    with pytest.raises(NonFiniteObjective):
        retarget_step(hinge_model, cfg, state, frame)
    assert state.q_prev == (0.2,)
    assert state.last_timestamp_us == -1


# ---------------------------------------------------------------------------
# profiles


def test_shipped_profiles_load_and_bind(hinge_model, hand4_model):
    hp = load_profile(asset_path("profiles", "hinge_finger.yaml"))
    assert isinstance(hp, RetargetProfile)
    assert len(hp.config.vector_pairs) == 1
    bind(hinge_model, hp.config, (0.0,))

    h4 = load_profile(asset_path("profiles", "hand4.yaml"))
    assert isinstance(h4, RetargetProfile)
    assert len(h4.config.vector_pairs) == 4
    bind(hand4_model, h4.config, (0.0,) * 8)

    pj = load_profile(asset_path("profiles", "parallel_jaw.yaml"))
    assert isinstance(pj, ApertureProfile)
    assert pj.pair == (4, 8)


def test_aperture_profile_tracks_pinch_distance():
    pj = ApertureProfile(name="t", pair=(4, 8), gain=1.0, max_aperture=0.08)
    frame = make_frame({4: Vec3(0.0, 0.0, 0.0), 8: Vec3(0.03, 0.04, 0.0)})
    assert pj.aperture(frame) == pytest.approx(0.05)
    wide = make_frame({4: Vec3(0.0, 0.0, 0.0), 8: Vec3(0.2, 0.0, 0.0)})
    assert pj.aperture(wide) == 0.08


def test_profile_kind_rejected(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("name: x\nkind: telepathy\n")
    with pytest.raises(ValueError):
        load_profile(p)
