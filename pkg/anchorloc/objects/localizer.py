"""
Target localization by damped Gauss-Newton.

The objective of a frame is the sum of squared per-camera residuals
f(x, h_k) - y_k, optionally minus the constant anchor correction
sum_j w_kj (f(a_kj, h_k) - b_kj). A window of frames adds rho * sum_t ||x_t - x_{t-1}||^2.
"""
from __future__ import annotations

import logging
import warnings
from collections import defaultdict
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from anchorloc.exception import (
    AnchorLocError,
    ConfigurationError,
    MissingWeightsError,
    NoVisibleCameraError,
    PointBehindCameraError,
    SingularSystemError,
)
from anchorloc.models.anchor import Anchor, AnchorWeights
from anchorloc.models.camera import CameraParams, Position3D
from anchorloc.models.config import NumericsConfig
from anchorloc.models.localization import (
    CameraResidual,
    FrameFailure,
    LocalizationModeEnum,
    LocalizationResult,
    LocalizationRun,
    SmoothingConfig,
    SolverConfig,
)
from anchorloc.models.observation import FrameInitial, FrameObservations
from anchorloc.objects.anchor_weights import AnchorWeightSolver
from anchorloc.objects.camera_model import CameraModel, CameraStack
from anchorloc.objects.object import AnchorLocObject

logger = logging.getLogger("anchorloc")

AnchorMap = Mapping[str, Sequence[Anchor]]
# Upper bandwidth of the window normal matrix: 3 unknowns per frame, neighbours coupled.
WINDOW_BANDWIDTH = 3


class _FrameProblem:
    """Residuals of one frame as a function of its free coordinates."""

    def __init__(
        self,
        camera_model: CameraModel,
        cams: List[CameraParams],
        observed: np.ndarray,
        corrections: np.ndarray,
        fixed_height: Optional[float],
    ) -> None:
        self.camera_model = camera_model
        self.cams = cams
        self.stack = CameraStack.of(cams)
        self.observed = observed
        self.corrections = corrections
        self.fixed_height = fixed_height

    @property
    def n_free(self) -> int:
        return 2 if self.fixed_height is not None else 3

    def point(self, free: np.ndarray) -> np.ndarray:
        if self.fixed_height is not None:
            return np.array([free[0], free[1], self.fixed_height])
        return np.asarray(free, dtype=float)

    def residuals(self, point: np.ndarray) -> np.ndarray:
        """(m, 2) residuals at a world point."""
        return self.camera_model.project_stack(point, self.stack) - self.observed - self.corrections

    def linearize(self, point: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Stacked residual vector and its (2m, 3) derivative with respect to the world point."""
        pixels, d_pixel_d_x = self.camera_model.stack_jacobians(point, self.stack)
        residual = pixels - self.observed - self.corrections
        return residual.reshape(-1), d_pixel_d_x.reshape(-1, 3)

    def cost(self, point: np.ndarray) -> float:
        return float(np.sum(self.residuals(point) ** 2))

    def camera_residuals(self, point: np.ndarray) -> List[CameraResidual]:
        return [
            CameraResidual(camera_id=cam.id, residual=(float(residual[0]), float(residual[1])))
            for cam, residual in zip(self.cams, self.residuals(point))
        ]


class _FrameObjective:
    """Single frame objective over its free coordinates."""

    def __init__(self, problem: _FrameProblem) -> None:
        self.problem = problem

    def cost(self, free: np.ndarray) -> float:
        return self.problem.cost(self.problem.point(free))

    def linearize(self, free: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        residual, jacobian = self.problem.linearize(self.problem.point(free))
        jacobian = jacobian[:, : self.problem.n_free]
        return jacobian.T @ residual, jacobian.T @ jacobian

    def step(self, gradient: np.ndarray, normal: np.ndarray, damping: float) -> np.ndarray:
        damped = normal + damping * np.eye(normal.shape[0])
        return scipy.linalg.solve(damped, -gradient, assume_a="pos")


class _WindowObjective:
    """Several frames of one target coupled by a smoothness penalty."""

    def __init__(self, problems: List[_FrameProblem], rho: float) -> None:
        self.problems = problems
        self.rho = rho
        n_frames = len(problems)
        difference = np.diff(np.eye(n_frames), axis=0)
        self.smoothness = rho * np.kron(difference.T @ difference, np.eye(3))
        self.pinned = np.array(
            [3 * index + 2 for index, problem in enumerate(problems) if problem.fixed_height is not None],
            dtype=int,
        )

    def points(self, variables: np.ndarray) -> np.ndarray:
        return variables.reshape(len(self.problems), 3)

    def penalty(self, variables: np.ndarray) -> float:
        return float(self.rho * np.sum(np.diff(self.points(variables), axis=0) ** 2))

    def cost(self, variables: np.ndarray) -> float:
        points = self.points(variables)
        return sum(problem.cost(point) for problem, point in zip(self.problems, points)) + self.penalty(variables)

    def linearize(self, variables: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        gradient = self.smoothness @ variables
        normal = self.smoothness.copy()
        for index, (problem, point) in enumerate(zip(self.problems, self.points(variables))):
            residual, jacobian = problem.linearize(point)
            block = slice(3 * index, 3 * index + 3)
            gradient[block] += jacobian.T @ residual
            normal[block, block] += jacobian.T @ jacobian
        if self.pinned.size:
            gradient[self.pinned] = 0.0
            normal[self.pinned, :] = 0.0
            normal[:, self.pinned] = 0.0
            normal[self.pinned, self.pinned] = 1.0
        return gradient, normal

    def step(self, gradient: np.ndarray, normal: np.ndarray, damping: float) -> np.ndarray:
        damped = normal + damping * np.eye(normal.shape[0])
        banded = np.zeros((WINDOW_BANDWIDTH + 1, damped.shape[0]))
        for offset in range(WINDOW_BANDWIDTH + 1):
            banded[WINDOW_BANDWIDTH - offset, offset:] = np.diagonal(damped, offset)
        return scipy.linalg.solveh_banded(banded, -gradient)


class Localizer(AnchorLocObject):
    """Models per-frame and windowed target localization."""

    def __init__(
        self,
        numerics: Optional[NumericsConfig] = None,
        camera_model: Optional[CameraModel] = None,
        weight_solver: Optional[AnchorWeightSolver] = None,
        solver: Optional[SolverConfig] = None,
    ) -> None:
        super().__init__(numerics)
        self._camera_model = camera_model if camera_model is not None else CameraModel(self._numerics)
        self._weight_solver = weight_solver if weight_solver is not None else AnchorWeightSolver(self._numerics)
        self._solver = solver if solver is not None else SolverConfig()

    @property
    def solver(self) -> SolverConfig:
        return self._solver

    def _visible_cameras(
        self,
        obs: FrameObservations,
        cams: Sequence[CameraParams],
    ) -> Tuple[List[CameraParams], np.ndarray]:
        cams_by_id = {cam.id: cam for cam in cams}
        visible = sorted(obs.visible_entries(), key=lambda item: item.camera_id)
        missing = [entry.camera_id for entry in visible if entry.camera_id not in cams_by_id]
        if missing:
            logger.error("Cameras %s are not calibrated", missing)
            raise ConfigurationError(f"Observations reference unknown cameras {missing}")
        if not visible:
            logger.error("No visible camera for target %s in frame %s", obs.target_id, obs.frame_index)
            raise NoVisibleCameraError(f"No visible camera for target {obs.target_id} in frame {obs.frame_index}")
        observed = np.array([entry.pixel.as_array() for entry in visible])  # type: ignore[union-attr]
        return [cams_by_id[entry.camera_id] for entry in visible], observed

    def anchor_corrections(
        self,
        obs: FrameObservations,
        cams: Sequence[CameraParams],
        anchors: AnchorMap,
        weights: Mapping[str, AnchorWeights],
    ) -> Dict[str, np.ndarray]:
        """
        Constant anchor term of every visible camera.
        :param obs: Observations of the frame
        :param cams: Calibrated cameras
        :param anchors: Anchors per camera id
        :param weights: Weights per camera id
        :return: sum_j w_j (f(a_j, h) - b_j) per visible camera id
        """
        visible_cams, _ = self._visible_cameras(obs, cams)
        corrections = {}
        for cam in visible_cams:
            camera_weights = weights.get(cam.id)
            if camera_weights is None:
                logger.error("Weights of camera %s are missing", cam.id)
                raise MissingWeightsError(f"Weights of camera {cam.id} are missing")
            by_id = {anchor.anchor_id: anchor for anchor in anchors.get(cam.id, [])}
            unknown = [anchor_id for anchor_id in camera_weights.anchor_ids if anchor_id not in by_id]
            if unknown:
                logger.error("Weights of camera %s name unknown anchors %s", cam.id, unknown)
                raise MissingWeightsError(f"Weights of camera {cam.id} name unknown anchors {unknown}")
            selected = [by_id[anchor_id] for anchor_id in camera_weights.anchor_ids]
            world = np.array([anchor.world.as_array() for anchor in selected])
            observed = np.array([anchor.observed_pixel.as_array() for anchor in selected])
            errors = self._camera_model.project_points(world, cam) - observed
            corrections[cam.id] = camera_weights.values @ errors
        return corrections

    def residual_nominal(self, x: Position3D, obs: FrameObservations, cams: Sequence[CameraParams]) -> np.ndarray:
        """
        :param x: Candidate target position
        :param obs: Observations of the frame
        :param cams: Calibrated cameras
        :return: f(x, h_k) - y_k stacked over visible cameras in camera id order
        """
        visible_cams, observed = self._visible_cameras(obs, cams)
        problem = _FrameProblem(self._camera_model, visible_cams, observed, np.zeros_like(observed), None)
        return problem.residuals(x.as_array()).reshape(-1)

    def residual_anchor(
        self,
        x: Position3D,
        obs: FrameObservations,
        cams: Sequence[CameraParams],
        anchors: AnchorMap,
        weights: Mapping[str, AnchorWeights],
    ) -> np.ndarray:
        """
        :param x: Candidate target position
        :param obs: Observations of the frame
        :param cams: Calibrated cameras
        :param anchors: Anchors per camera id
        :param weights: Weights per camera id
        :return: Nominal residual minus the anchor correction, stacked like residual_nominal
        """
        visible_cams, observed = self._visible_cameras(obs, cams)
        corrections = self.anchor_corrections(obs, cams, anchors, weights)
        stacked = np.array([corrections[cam.id] for cam in visible_cams])
        problem = _FrameProblem(self._camera_model, visible_cams, observed, stacked, None)
        return problem.residuals(x.as_array()).reshape(-1)

    def _frame_problem(
        self,
        obs: FrameObservations,
        cams: Sequence[CameraParams],
        anchors: Optional[AnchorMap],
        mode: LocalizationModeEnum,
        init: Position3D,
        solver: SolverConfig,
        weights: Optional[Mapping[str, AnchorWeights]],
    ) -> Tuple[_FrameProblem, Position3D]:
        visible_cams, observed = self._visible_cameras(obs, cams)
        fixed_height = None
        if len(visible_cams) == 1:
            if solver.fixed_height is None:
                logger.error("Single camera frame %s without a fixed height", obs.frame_index)
                raise ConfigurationError(f"Frame {obs.frame_index} has one visible camera but no fixed_height")
            fixed_height = solver.fixed_height
            init = Position3D(x=init.x, y=init.y, z=fixed_height)

        corrections = np.zeros_like(observed)
        if mode == LocalizationModeEnum.anchor:
            if anchors is None:
                logger.error("Anchor mode without anchors")
                raise MissingWeightsError("Anchor mode needs anchors")
            if weights is None:
                weights = self._weight_solver.solve_all(anchors, init, [cam.id for cam in visible_cams])
            by_camera = self.anchor_corrections(obs, cams, anchors, weights)
            corrections = np.array([by_camera[cam.id] for cam in visible_cams])
        return _FrameProblem(self._camera_model, visible_cams, observed, corrections, fixed_height), init

    def _minimize(self, objective, start: np.ndarray, solver: SolverConfig) -> Tuple[np.ndarray, bool, int, float]:
        variables = np.asarray(start, dtype=float).copy()
        cost = objective.cost(variables)
        damping = solver.damping_init
        converged = False
        iterations = 0
        while iterations < solver.max_iters:
            gradient, normal = objective.linearize(variables)
            if np.linalg.norm(gradient) < solver.grad_tol:
                converged = True
                break
            iterations += 1
            accepted = False
            factored = False
            step = np.zeros_like(variables)
            while damping <= solver.damping_max:
                try:
                    with warnings.catch_warnings():
                        # an ill-conditioned solve counts as a failed factorization
                        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                        step = objective.step(gradient, normal, damping)
                except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning, ValueError):
                    damping *= solver.damping_up
                    continue
                factored = True
                candidate = variables + step
                try:
                    candidate_cost = objective.cost(candidate)
                except PointBehindCameraError:
                    damping *= solver.damping_up
                    continue
                if candidate_cost <= cost:
                    variables, cost = candidate, candidate_cost
                    damping *= solver.damping_down
                    accepted = True
                    break
                if np.linalg.norm(step) < solver.step_tol:
                    break
                damping *= solver.damping_up
            if not factored:
                logger.error("Normal equations stay singular up to damping %g", solver.damping_max)
                raise SingularSystemError(f"Normal equations are singular up to damping {solver.damping_max:g}")
            if np.linalg.norm(step) < solver.step_tol:
                converged = True
                break
            if not accepted:
                break
        return variables, converged, iterations, cost

    def solve_frame(
        self,
        obs: FrameObservations,
        cams: Sequence[CameraParams],
        anchors: Optional[AnchorMap] = None,
        mode: LocalizationModeEnum = LocalizationModeEnum.nominal,
        init: Optional[Position3D] = None,
        solver: Optional[SolverConfig] = None,
        weights: Optional[Mapping[str, AnchorWeights]] = None,
    ) -> LocalizationResult:
        """
        Localize a target in one frame.
        :param obs: Observations of the frame
        :param cams: Calibrated cameras
        :param anchors: Anchors per camera id, needed in anchor mode
        :param mode: NOMINAL or ANCHOR residual
        :param init: Start of the iteration, normally the initial estimate
        :param solver: Solver settings, defaults to the localizer's
        :param weights: Precomputed weights, otherwise solved at init
        :return: Localization result, converged=False when the budget ran out
        """
        solver = solver if solver is not None else self._solver
        if init is None:
            logger.error("Frame %s has no initial estimate", obs.frame_index)
            raise ConfigurationError(f"Frame {obs.frame_index} needs an initial estimate")
        problem, init = self._frame_problem(obs, cams, anchors, mode, init, solver, weights)
        start = init.as_array()[: problem.n_free]
        free, converged, iterations, cost = self._minimize(_FrameObjective(problem), start, solver)
        point = problem.point(free)
        if converged:
            logger.debug("Frame %s solved in %d iterations", obs.frame_index, iterations)
        else:
            logger.warning("Frame %s did not converge in %d iterations", obs.frame_index, iterations)
        return LocalizationResult(
            frame_index=obs.frame_index,
            target_id=obs.target_id,
            position=Position3D.from_array(point),
            converged=converged,
            iterations=iterations,
            final_objective=cost,
            per_camera_residuals=problem.camera_residuals(point),
            mode=mode,
        )

    def solve_batch(
        self,
        frames: Sequence[FrameObservations],
        cams: Sequence[CameraParams],
        anchors: Optional[AnchorMap] = None,
        smoothing: Optional[SmoothingConfig] = None,
        solver: Optional[SolverConfig] = None,
        inits: Optional[Sequence[Position3D]] = None,
        mode: LocalizationModeEnum = LocalizationModeEnum.nominal,
    ) -> List[LocalizationResult]:
        """
        Jointly localize one target over a window of frames.
        :param frames: Consecutive frames of one target
        :param cams: Calibrated cameras
        :param anchors: Anchors per camera id, needed in anchor mode
        :param smoothing: Window size and smoothness weight
        :param solver: Solver settings, defaults to the localizer's
        :param inits: Initial estimate of every frame
        :param mode: NOMINAL or ANCHOR residual
        :return: One result per frame
        """
        smoothing = smoothing if smoothing is not None else SmoothingConfig()
        solver = solver if solver is not None else self._solver
        if inits is None or len(inits) != len(frames):
            logger.error("Window of %d frames needs as many initial estimates", len(frames))
            raise ConfigurationError("solve_batch needs one initial estimate per frame")
        if not frames:
            return []
        if len({obs.target_id for obs in frames}) > 1:
            logger.error("Window mixes several targets")
            raise ConfigurationError("A window must hold frames of a single target")
        if smoothing.is_per_frame or len(frames) == 1:
            return [
                self.solve_frame(obs, cams, anchors, mode, init, solver)
                for obs, init in zip(frames, inits)
            ]

        problems = []
        starts = []
        for obs, init in zip(frames, inits):
            problem, start = self._frame_problem(obs, cams, anchors, mode, init, solver, None)
            problems.append(problem)
            starts.append(start.as_array())
        objective = _WindowObjective(problems, smoothing.rho)
        variables, converged, iterations, _ = self._minimize(objective, np.concatenate(starts), solver)
        points = objective.points(variables)
        logger.debug("Window of %d frames solved in %d iterations", len(frames), iterations)
        return [
            LocalizationResult(
                frame_index=obs.frame_index,
                target_id=obs.target_id,
                position=Position3D.from_array(point),
                converged=converged,
                iterations=iterations,
                final_objective=problem.cost(point),
                per_camera_residuals=problem.camera_residuals(point),
                mode=mode,
            )
            for obs, problem, point in zip(frames, problems, points)
        ]

    def solve_trajectory(
        self,
        frames: Sequence[FrameObservations],
        cams: Sequence[CameraParams],
        anchors: Optional[AnchorMap] = None,
        smoothing: Optional[SmoothingConfig] = None,
        solver: Optional[SolverConfig] = None,
        inits: Optional[Sequence[Position3D]] = None,
        mode: LocalizationModeEnum = LocalizationModeEnum.nominal,
    ) -> List[LocalizationResult]:
        """
        Localize one target over a sequence using non-overlapping windows; the last window may be shorter.
        :param frames: Frames of one target in frame order
        :param cams: Calibrated cameras
        :param anchors: Anchors per camera id, needed in anchor mode
        :param smoothing: Window size and smoothness weight
        :param solver: Solver settings, defaults to the localizer's
        :param inits: Initial estimate of every frame
        :param mode: NOMINAL or ANCHOR residual
        :return: One result per frame
        """
        smoothing = smoothing if smoothing is not None else SmoothingConfig()
        if inits is None or len(inits) != len(frames):
            logger.error("Trajectory of %d frames needs as many initial estimates", len(frames))
            raise ConfigurationError("solve_trajectory needs one initial estimate per frame")
        results: List[LocalizationResult] = []
        size = smoothing.batch_size
        for begin in range(0, len(frames), size):
            results.extend(
                self.solve_batch(
                    frames[begin : begin + size],
                    cams,
                    anchors,
                    smoothing,
                    solver,
                    inits[begin : begin + size],
                    mode,
                ),
            )
        return results

    def localize_all(
        self,
        initialized: Sequence[Tuple[FrameObservations, FrameInitial]],
        cams: Sequence[CameraParams],
        anchors: Optional[AnchorMap] = None,
        mode: LocalizationModeEnum = LocalizationModeEnum.nominal,
        smoothing: Optional[SmoothingConfig] = None,
        solver: Optional[SolverConfig] = None,
    ) -> LocalizationRun:
        """
        Localize every initialised frame, target by target. A window that fails falls back to
        solving its frames one by one; frames that still fail are reported, not raised.
        :param initialized: Frames with their initial estimate
        :param cams: Calibrated cameras
        :param anchors: Anchors per camera id, needed in anchor mode
        :param mode: NOMINAL or ANCHOR residual
        :param smoothing: Window size and smoothness weight
        :param solver: Solver settings; a missing fixed_height is taken from the initial estimate
        :return: Results and initial estimates sorted by frame and target, and the failed frames
        """
        smoothing = smoothing if smoothing is not None else SmoothingConfig()
        solver = solver if solver is not None else self._solver
        by_target: Dict[str, List[Tuple[FrameObservations, FrameInitial]]] = defaultdict(list)
        for obs, initial in initialized:
            by_target[obs.target_id].append((obs, initial))

        solved: List[Tuple[LocalizationResult, FrameInitial]] = []
        failures: List[FrameFailure] = []
        for target_id in sorted(by_target):
            items = sorted(by_target[target_id], key=lambda item: item[0].frame_index)
            size = smoothing.batch_size
            for begin in range(0, len(items), size):
                window = items[begin : begin + size]
                target_solver = solver
                if solver.fixed_height is None:
                    target_solver = solver.model_copy(update={"fixed_height": window[0][1].position.z})
                frames = [obs for obs, _ in window]
                inits = [initial.position for _, initial in window]
                try:
                    results = self.solve_batch(frames, cams, anchors, smoothing, target_solver, inits, mode)
                except AnchorLocError as error:
                    logger.warning("Window of %s at frame %s failed: %s", target_id, frames[0].frame_index, error)
                else:
                    solved.extend(zip(results, [initial for _, initial in window]))
                    continue
                for obs, initial in window:
                    try:
                        result = self.solve_frame(obs, cams, anchors, mode, initial.position, target_solver)
                    except AnchorLocError as error:
                        failures.append(
                            FrameFailure(
                                frame_index=obs.frame_index,
                                target_id=obs.target_id,
                                stage="localize",
                                error=type(error).__name__,
                                message=str(error),
                            ),
                        )
                        continue
                    solved.append((result, initial))

        solved.sort(key=lambda item: (item[0].frame_index, item[0].target_id))
        logger.debug("Localized %d frames, %d failed", len(solved), len(failures))
        return LocalizationRun(
            results=[result for result, _ in solved],
            initials=[initial for _, initial in solved],
            failures=failures,
        )
