from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg

from anchorloc import AnchorWeightSolver, CameraModel, Localizer
from anchorloc.exception import ConfigurationError, SingularSystemError
from anchorloc.models import (
    N_PARAMETERS,
    Anchor,
    CameraParams,
    Distortion,
    Extrinsics,
    FrameInitial,
    FrameObservations,
    Intrinsics,
    LocalizationModeEnum,
    ObservationEntry,
    Position3D,
    SmoothingConfig,
    SolverConfig,
)
from anchorloc.objects.anchor_weights import group_by_camera
from anchorloc.objects.localizer import _FrameObjective
from anchorloc.objects.simulator import look_at

INTRINSICS = Intrinsics(fx=800.0, fy=800.0, cx=640.0, cy=360.0)
LOOK_AT = np.array([1.0, 1.0, 0.0])
HEAD = Position3D(x=1.0, y=1.5, z=1.7)
START_OFFSET = np.array([0.3, -0.2, 0.25])
EPSILONS = [1e-4, 1e-3, 1e-2, 1e-1]
# pitch, yaw, roll, T, distortion, intrinsics
DIRECTION = np.array([1.0, -1.0, 0.0, 0.5, -0.3, 0.2, 0.1, -0.05, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
TETRAHEDRON = np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]) / np.sqrt(3.0)


def make_camera(camera_id, center):
    rotation, translation = look_at(np.array(center), LOOK_AT)
    return CameraParams(
        id=camera_id,
        intrinsics=INTRINSICS,
        extrinsics=Extrinsics.from_arrays(rotation, translation),
        distortion=Distortion(k1=-0.2, k2=0.05),
        image_size=(1280, 720),
    )


CAMERAS = [
    make_camera("cam00", (-6.0, -6.0, 4.0)),
    make_camera("cam01", (8.0, -6.0, 5.0)),
    make_camera("cam02", (1.0, 9.0, 4.5)),
]


def observe(point, cams, frame_index=0, target_id="t000", pixel_noise=None):
    camera_model = CameraModel()
    entries = []
    for index, cam in enumerate(cams):
        pixel = camera_model.project_points(point.as_array(), cam)[0]
        if pixel_noise is not None:
            pixel = pixel + pixel_noise[index]
        entries.append(ObservationEntry(camera_id=cam.id, visible=True, pixel={"u": pixel[0], "v": pixel[1]}))
    return FrameObservations(frame_index=frame_index, target_id=target_id, entries=entries)


def make_anchors(points, cams):
    camera_model = CameraModel()
    anchors = []
    for cam in cams:
        pixels = camera_model.project_points(points, cam)
        for index, (point, pixel) in enumerate(zip(points, pixels)):
            anchors.append(
                Anchor(
                    camera_id=cam.id,
                    anchor_id=f"{cam.id}_a{index:02d}",
                    world=Position3D.from_array(point),
                    observed_pixel={"u": pixel[0], "v": pixel[1]},
                ),
            )
    return group_by_camera(anchors)


def perturb(cams, epsilon):
    camera_model = CameraModel()
    return [camera_model.apply_increment(cam, epsilon * DIRECTION) for cam in cams]


def slope(xs, ys):
    return np.polyfit(np.log(xs), np.log(ys), 1)[0]


def cube_anchors():
    corners = np.array([[x, y, z] for x in (-1.5, 1.5) for y in (-1.5, 1.5) for z in (-1.0, 1.0)])
    return make_anchors(HEAD.as_array() + corners, CAMERAS)


def test_solve_frame_recovers_exact_position():
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    result = Localizer().solve_frame(observe(HEAD, CAMERAS), CAMERAS, init=init)

    np.testing.assert_allclose(result.position.as_array(), HEAD.as_array(), atol=1e-6)
    assert result.converged
    assert result.mode == LocalizationModeEnum.nominal
    assert [item.camera_id for item in result.per_camera_residuals] == ["cam00", "cam01", "cam02"]
    assert result.final_objective < 1e-10


def test_solve_frame_anchor_mode_recovers_exact_position():
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    result = Localizer().solve_frame(
        observe(HEAD, CAMERAS),
        CAMERAS,
        cube_anchors(),
        LocalizationModeEnum.anchor,
        init,
    )
    np.testing.assert_allclose(result.position.as_array(), HEAD.as_array(), atol=1e-6)
    assert result.mode == LocalizationModeEnum.anchor


def test_solve_frame_without_init_raises():
    with pytest.raises(ConfigurationError):
        Localizer().solve_frame(observe(HEAD, CAMERAS), CAMERAS)


def test_solve_frame_single_camera_needs_fixed_height():
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    with pytest.raises(ConfigurationError):
        Localizer().solve_frame(observe(HEAD, CAMERAS[:1]), CAMERAS, init=init)


def test_solve_frame_single_camera_pins_height():
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    solver = SolverConfig(fixed_height=HEAD.z)
    result = Localizer().solve_frame(observe(HEAD, CAMERAS[:1]), CAMERAS, init=init, solver=solver)

    assert result.position.z == HEAD.z
    np.testing.assert_allclose(result.position.as_array(), HEAD.as_array(), atol=1e-6)
    assert result.n_cameras == 1


def test_solve_frame_never_increases_objective():
    localizer = Localizer()
    perturbed = perturb(CAMERAS, 1e-2)
    noise = np.random.default_rng(3).normal(0.0, 3.0, size=(3, 2))
    obs = observe(HEAD, CAMERAS, pixel_noise=noise)
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    start_cost = float(np.sum(localizer.residual_nominal(init, obs, perturbed) ** 2))
    result = localizer.solve_frame(obs, perturbed, init=init)

    assert result.final_objective <= start_cost
    assert result.final_objective == pytest.approx(
        float(np.sum(localizer.residual_nominal(result.position, obs, perturbed) ** 2)),
    )


def test_solve_frame_reports_exhausted_budget():
    init = Position3D.from_array(HEAD.as_array() + 3.0 * START_OFFSET)
    result = Localizer().solve_frame(observe(HEAD, CAMERAS), CAMERAS, init=init, solver=SolverConfig(max_iters=1))
    assert not result.converged
    assert result.iterations == 1


def test_residual_nominal_vanishes_at_truth():
    residual = Localizer().residual_nominal(HEAD, observe(HEAD, CAMERAS), CAMERAS)
    assert residual.shape == (6,)
    np.testing.assert_allclose(residual, 0.0, atol=1e-9)


def test_nominal_residual_is_first_order_in_calibration_error():
    localizer = Localizer()
    obs = observe(HEAD, CAMERAS)
    norms = [np.linalg.norm(localizer.residual_nominal(HEAD, obs, perturb(CAMERAS, eps))) for eps in EPSILONS]
    assert 0.8 <= slope(EPSILONS, norms) <= 1.2


def test_anchor_residual_is_second_order_in_anchor_offset():
    localizer = Localizer()
    solver = AnchorWeightSolver()
    obs = observe(HEAD, CAMERAS)
    perturbed = perturb(CAMERAS, 1e-2)
    sizes = [0.16, 0.04, 0.01]
    norms = []
    for size in sizes:
        anchors = make_anchors(HEAD.as_array() + size * TETRAHEDRON, CAMERAS)
        weights = solver.solve_all(anchors, HEAD, [cam.id for cam in CAMERAS], lambda_=0.0)
        norms.append(np.linalg.norm(localizer.residual_anchor(HEAD, obs, perturbed, anchors, weights)))
    assert 1.8 <= slope(sizes, norms) <= 2.2


def test_anchor_residual_cancels_calibration_error():
    localizer = Localizer()
    obs = observe(HEAD, CAMERAS)
    anchors = make_anchors(HEAD.as_array() + 0.01 * TETRAHEDRON, CAMERAS)
    weights = AnchorWeightSolver().solve_all(anchors, HEAD, [cam.id for cam in CAMERAS], lambda_=0.0)
    for eps in EPSILONS:
        perturbed = perturb(CAMERAS, eps)
        nominal = np.linalg.norm(localizer.residual_nominal(HEAD, obs, perturbed))
        anchored = np.linalg.norm(localizer.residual_anchor(HEAD, obs, perturbed, anchors, weights))
        assert anchored < 1e-3 * nominal


def test_anchor_mode_reduces_calibration_error():
    localizer = Localizer()
    perturbed = perturb(CAMERAS, 1e-2)
    obs = observe(HEAD, CAMERAS)
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    nominal = localizer.solve_frame(obs, perturbed, init=init)
    anchored = localizer.solve_frame(obs, perturbed, cube_anchors(), LocalizationModeEnum.anchor, init)

    nominal_error = np.linalg.norm(nominal.position.as_array() - HEAD.as_array())
    anchored_error = np.linalg.norm(anchored.position.as_array() - HEAD.as_array())
    assert anchored_error < 0.5 * nominal_error


def test_anchor_corrections_vanish_for_exact_cameras():
    anchors = cube_anchors()
    weights = AnchorWeightSolver().solve_all(anchors, HEAD, [cam.id for cam in CAMERAS])
    corrections = Localizer().anchor_corrections(observe(HEAD, CAMERAS), CAMERAS, anchors, weights)
    assert sorted(corrections) == ["cam00", "cam01", "cam02"]
    for correction in corrections.values():
        np.testing.assert_allclose(correction, 0.0, atol=1e-9)


def test_solve_batch_without_smoothing_solves_frames(mocker):
    localizer = Localizer()
    mocker.spy(localizer, "solve_frame")
    frames = [observe(HEAD, CAMERAS, frame_index=index) for index in range(3)]
    inits = [Position3D.from_array(HEAD.as_array() + START_OFFSET)] * 3
    results = localizer.solve_batch(
        frames,
        CAMERAS,
        smoothing=SmoothingConfig(batch_size=3, rho=0.0),
        inits=inits,
        mode=LocalizationModeEnum.nominal,
    )

    assert localizer.solve_frame.call_count == 3
    assert [result.frame_index for result in results] == [0, 1, 2]


def test_solve_batch_recovers_static_target():
    frames = [observe(HEAD, CAMERAS, frame_index=index) for index in range(4)]
    inits = [Position3D.from_array(HEAD.as_array() + (index + 1) * 0.1 * START_OFFSET) for index in range(4)]
    results = Localizer().solve_batch(
        frames,
        CAMERAS,
        smoothing=SmoothingConfig(batch_size=4, rho=60.0),
        inits=inits,
        mode=LocalizationModeEnum.nominal,
    )
    for result in results:
        np.testing.assert_allclose(result.position.as_array(), HEAD.as_array(), atol=1e-6)


def test_solve_batch_rejects_several_targets():
    frames = [observe(HEAD, CAMERAS, target_id="t000"), observe(HEAD, CAMERAS, frame_index=1, target_id="t001")]
    with pytest.raises(ConfigurationError):
        Localizer().solve_batch(
            frames,
            CAMERAS,
            smoothing=SmoothingConfig(batch_size=2, rho=60.0),
            inits=[HEAD, HEAD],
            mode=LocalizationModeEnum.nominal,
        )


def test_smoothing_reduces_single_camera_error():
    rng = np.random.default_rng(7)
    truth = [Position3D(x=0.5 + 0.01 * index, y=1.5, z=HEAD.z) for index in range(60)]
    frames = [
        observe(point, CAMERAS[:1], frame_index=index, pixel_noise=rng.normal(0.0, 10.0, size=(1, 2)))
        for index, point in enumerate(truth)
    ]
    solver = SolverConfig(fixed_height=HEAD.z)
    localizer = Localizer(solver=solver)
    errors = {}
    for batch_size in (1, 5):
        results = localizer.solve_trajectory(
            frames,
            CAMERAS,
            smoothing=SmoothingConfig(batch_size=batch_size, rho=1e4),
            inits=truth,
            mode=LocalizationModeEnum.nominal,
        )
        assert len(results) == len(truth)
        errors[batch_size] = np.mean(
            [np.linalg.norm(result.position.as_array() - point.as_array()) for result, point in zip(results, truth)],
        )
    assert errors[5] < 0.8 * errors[1]


def test_localize_all_reports_failed_frames():
    good = observe(HEAD, CAMERAS, frame_index=0, target_id="t000")
    bad = FrameObservations(
        frame_index=0,
        target_id="t001",
        entries=[ObservationEntry(camera_id="cam09", visible=True, pixel={"u": 10.0, "v": 10.0})],
    )
    initialized = [
        (obs, FrameInitial(frame_index=0, target_id=obs.target_id, position=HEAD, n_cameras=obs.n_visible))
        for obs in (bad, good)
    ]
    run = Localizer().localize_all(initialized, CAMERAS, mode=LocalizationModeEnum.nominal)

    assert [result.target_id for result in run.results] == ["t000"]
    assert [initial.target_id for initial in run.initials] == ["t000"]
    assert len(run.failures) == 1
    assert run.failures[0].stage == "localize"
    assert run.failures[0].error == "ConfigurationError"
    assert run.n_converged == 1


def test_parameter_direction_covers_every_parameter():
    assert DIRECTION.shape == (N_PARAMETERS,)


@pytest.mark.parametrize("failure", [np.linalg.LinAlgError, scipy.linalg.LinAlgWarning])
def test_singular_normal_equations_raise(mocker, failure):
    mocker.patch.object(_FrameObjective, "step", side_effect=failure("singular matrix"))
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    with pytest.raises(SingularSystemError):
        Localizer().solve_frame(observe(HEAD, CAMERAS), CAMERAS, init=init)


def test_failed_factorization_retries_with_more_damping(mocker):
    step = _FrameObjective.step
    dampings = []

    def flaky(objective, gradient, normal, damping):
        dampings.append(damping)
        if len(dampings) == 1:
            raise np.linalg.LinAlgError("singular matrix")
        return step(objective, gradient, normal, damping)

    mocker.patch.object(_FrameObjective, "step", autospec=True, side_effect=flaky)
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    result = Localizer().solve_frame(observe(HEAD, CAMERAS), CAMERAS, init=init)

    np.testing.assert_allclose(result.position.as_array(), HEAD.as_array(), atol=1e-6)
    assert dampings[1] == pytest.approx(dampings[0] * SolverConfig().damping_up)


def test_localize_all_reports_singular_frames(mocker):
    mocker.patch.object(_FrameObjective, "step", side_effect=np.linalg.LinAlgError("singular matrix"))
    obs = observe(HEAD, CAMERAS)
    initialized = [(obs, FrameInitial(frame_index=0, target_id="t000", position=HEAD, n_cameras=3))]
    run = Localizer().localize_all(initialized, CAMERAS)

    assert run.results == []
    assert [failure.error for failure in run.failures] == ["SingularSystemError"]


def test_frame_solvers_default_to_nominal_mode():
    frames = [observe(HEAD, CAMERAS, frame_index=index) for index in range(2)]
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    localizer = Localizer()
    single = localizer.solve_frame(frames[0], CAMERAS, init=init)
    batch = localizer.solve_batch(frames, CAMERAS, smoothing=SmoothingConfig(batch_size=2), inits=[init, init])
    assert single.mode == LocalizationModeEnum.nominal
    assert {result.mode for result in batch} == {LocalizationModeEnum.nominal}


def test_window_of_single_frames_is_solved_per_frame(mocker):
    localizer = Localizer()
    mocker.spy(localizer, "solve_frame")
    frames = [observe(HEAD, CAMERAS, frame_index=index) for index in range(2)]
    init = Position3D.from_array(HEAD.as_array() + START_OFFSET)
    localizer.solve_batch(frames, CAMERAS, smoothing=SmoothingConfig(batch_size=1, rho=60.0), inits=[init, init])
    assert localizer.solve_frame.call_count == 2


def test_larger_smoothness_weight_gives_smoother_path():
    rng = np.random.default_rng(21)
    truth = [Position3D(x=0.5 + 0.02 * index, y=1.5, z=HEAD.z) for index in range(10)]
    frames = [
        observe(point, CAMERAS[:1], frame_index=index, pixel_noise=rng.normal(0.0, 10.0, size=(1, 2)))
        for index, point in enumerate(truth)
    ]
    solver = SolverConfig(fixed_height=HEAD.z, step_tol=1e-10, grad_tol=1e-12)
    roughness = []
    for rho in (10.0, 1e3, 1e5):
        results = Localizer(solver=solver).solve_batch(
            frames,
            CAMERAS,
            smoothing=SmoothingConfig(batch_size=len(frames), rho=rho),
            inits=truth,
        )
        points = np.array([result.position.as_array() for result in results])
        roughness.append(float(np.sum(np.diff(points, axis=0) ** 2)))
    assert all(later <= earlier + 1e-9 for earlier, later in zip(roughness, roughness[1:]))
    assert roughness[-1] < 0.5 * roughness[0]


def test_identical_frames_get_identical_positions():
    perturbed = perturb(CAMERAS, 1e-2)
    noise = np.random.default_rng(5).normal(0.0, 3.0, size=(3, 2))
    frames = [observe(HEAD, CAMERAS, frame_index=index, pixel_noise=noise) for index in range(2)]
    inits = [
        Position3D.from_array(HEAD.as_array() + START_OFFSET),
        Position3D.from_array(HEAD.as_array() - START_OFFSET),
    ]
    solver = SolverConfig(step_tol=1e-10, grad_tol=1e-12)
    localizer = Localizer(solver=solver)
    first, second = localizer.solve_batch(
        frames,
        perturbed,
        smoothing=SmoothingConfig(batch_size=2, rho=60.0),
        inits=inits,
    )
    alone = localizer.solve_frame(frames[0], perturbed, init=inits[0])

    np.testing.assert_allclose(first.position.as_array(), second.position.as_array(), atol=1e-7)
    np.testing.assert_allclose(first.position.as_array(), alone.position.as_array(), atol=1e-7)
