from __future__ import annotations

import logging
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from anchorloc.exception import AnchorLocError, LengthMismatchError, NoValidProbesError
from anchorloc.models.anchor import Anchor
from anchorloc.models.camera import CameraParams, Position3D
from anchorloc.models.config import NumericsConfig
from anchorloc.models.evaluation import MethodEnum, MetricsReport, SweepCell, SweepSpec
from anchorloc.models.localization import LocalizationModeEnum, LocalizationResult, SmoothingConfig, SolverConfig
from anchorloc.models.observation import FrameInitial, FrameObservations, ObservationEntry, RepresentativeEnum
from anchorloc.models.simulation import SignModeEnum
from anchorloc.objects.anchor_weights import AnchorWeightSolver, group_by_camera, limit_anchors
from anchorloc.objects.camera_model import CameraModel
from anchorloc.objects.dataset import DatasetStore
from anchorloc.objects.initializer import Initializer
from anchorloc.objects.localizer import AnchorMap, Localizer
from anchorloc.objects.object import AnchorLocObject
from anchorloc.objects.simulator import Simulator

logger = logging.getLogger("anchorloc")

PROBE_DEPTH = 10.0
PROBE_GRID = 5
PROBE_SPAN = 0.8

SWEEP_COLUMNS = [
    "experiment",
    "cell",
    "group",
    "rx_deg",
    "ry_deg",
    "t_m",
    "d_rel",
    "sign_mode",
    "pixel_sigma",
    "method",
    "anchor_count",
    "seed",
    "batch_size",
    "rho",
    "average_distance",
    "distance_std",
    "improvement_ratio",
    "n_frames",
    "n_failed",
    "init_distance",
    "single_camera_distance",
    "multi_camera_distance",
    "angular_error_deg",
]
SUMMARY_KEYS = ["rx_deg", "ry_deg", "t_m", "d_rel", "pixel_sigma", "method", "anchor_count", "batch_size", "rho"]
SUMMARY_METRICS = [
    "average_distance",
    "distance_std",
    "improvement_ratio",
    "n_frames",
    "n_failed",
    "init_distance",
    "single_camera_distance",
    "multi_camera_distance",
    "angular_error_deg",
]


def _report(distances: np.ndarray, initial_distances: np.ndarray) -> MetricsReport:
    if distances.size == 0:
        return MetricsReport(average_distance=0.0, distance_std=0.0, improvement_ratio=0.0, n_frames=0)
    return MetricsReport(
        average_distance=float(np.mean(distances)),
        distance_std=float(np.std(distances)),
        improvement_ratio=float(np.mean(distances < initial_distances)),
        n_frames=int(distances.size),
    )


def _distances(points: np.ndarray, truth: np.ndarray, single_camera: np.ndarray) -> np.ndarray:
    """Euclidean distances; single camera rows are compared in the ground plane only."""
    delta = points - truth
    delta[single_camera, 2] = 0.0
    return np.linalg.norm(delta, axis=1)


def _breakdown_distance(report: MetricsReport, scope: str) -> float:
    part = report.breakdown.get(scope)
    return part.average_distance if part is not None else float("nan")


def _run_scenario_job(payload: Tuple[NumericsConfig, SweepSpec, List[SweepCell]]) -> List[Dict[str, Any]]:
    numerics, spec, cells = payload
    return Evaluator(numerics).run_scenario(spec, cells)


class Evaluator(AnchorLocObject):
    """Models metrics and experiment sweeps."""

    def __init__(
        self,
        numerics: Optional[NumericsConfig] = None,
        camera_model: Optional[CameraModel] = None,
        simulator: Optional[Simulator] = None,
        initializer: Optional[Initializer] = None,
        localizer: Optional[Localizer] = None,
        dataset: Optional[DatasetStore] = None,
    ) -> None:
        super().__init__(numerics)
        self._camera_model = camera_model if camera_model is not None else CameraModel(self._numerics)
        self._simulator = simulator if simulator is not None else Simulator(self._numerics, self._camera_model)
        self._initializer = initializer if initializer is not None else Initializer(self._numerics, self._camera_model)
        self._localizer = localizer if localizer is not None else Localizer(self._numerics, self._camera_model)
        self._dataset = dataset if dataset is not None else DatasetStore(self._numerics)

    def evaluate_positions(
        self,
        estimates: Sequence[Position3D],
        ground_truth: Sequence[Position3D],
        initials: Sequence[Position3D],
        single_camera: Optional[Sequence[bool]] = None,
        target_ids: Optional[Sequence[str]] = None,
    ) -> MetricsReport:
        """
        Distance metrics of index-aligned estimates.
        :param estimates: Estimated positions
        :param ground_truth: True positions
        :param initials: Initial estimates
        :param single_camera: Rows solved with one camera, compared in the ground plane
        :param target_ids: Target of every row, adds per-target breakdowns
        :return: Report with single/multi camera and per-target breakdowns
        """
        n_rows = len(estimates)
        lengths = [len(ground_truth), len(initials)]
        lengths += [len(single_camera)] if single_camera is not None else []
        lengths += [len(target_ids)] if target_ids is not None else []
        if any(length != n_rows for length in lengths):
            logger.error("Cannot evaluate sequences of lengths %s", [n_rows, *lengths])
            raise LengthMismatchError(f"Sequences of lengths {[n_rows, *lengths]} are not index aligned")
        if n_rows == 0:
            return _report(np.zeros(0), np.zeros(0))

        single = np.array(single_camera if single_camera is not None else [False] * n_rows, dtype=bool)
        truth = np.array([position.as_array() for position in ground_truth])
        distances = _distances(np.array([position.as_array() for position in estimates]), truth, single)
        initial_distances = _distances(np.array([position.as_array() for position in initials]), truth, single)

        breakdown: Dict[str, MetricsReport] = {}
        if target_ids is not None:
            ids = np.array(target_ids)
            for target_id in sorted(set(target_ids)):
                mask = ids == target_id
                breakdown[f"target:{target_id}"] = _report(distances[mask], initial_distances[mask])
        if np.any(single):
            breakdown["single_camera"] = _report(distances[single], initial_distances[single])
        if np.any(~single):
            breakdown["multi_camera"] = _report(distances[~single], initial_distances[~single])
        report = _report(distances, initial_distances).model_copy(update={"breakdown": breakdown})
        logger.debug("Evaluated %d frames", n_rows)
        return report

    def evaluate(
        self,
        estimates: Sequence[LocalizationResult],
        ground_truth: Sequence[Position3D],
        initials: Sequence[Position3D],
        by_target: bool = True,
    ) -> MetricsReport:
        """
        :param estimates: Localization results
        :param ground_truth: True positions, index aligned
        :param initials: Initial estimates, index aligned
        :param by_target: Add per-target breakdowns
        :return: Metrics report
        """
        return self.evaluate_positions(
            [result.position for result in estimates],
            ground_truth,
            initials,
            single_camera=[result.n_cameras == 1 for result in estimates],
            target_ids=[result.target_id for result in estimates] if by_target else None,
        )

    @staticmethod
    def default_probes(cam: CameraParams) -> np.ndarray:
        """Pixel grid spanning the central part of the image."""
        width, height = cam.image_size
        margin = (1.0 - PROBE_SPAN) / 2.0
        us = np.linspace(margin, 1.0 - margin, PROBE_GRID) * width
        vs = np.linspace(margin, 1.0 - margin, PROBE_GRID) * height
        grid_u, grid_v = np.meshgrid(us, vs)
        return np.column_stack((grid_u.ravel(), grid_v.ravel()))

    def angular_error(
        self,
        cam_true: CameraParams,
        cam_perturbed: CameraParams,
        probe_points: Optional[np.ndarray] = None,
        depth: float = PROBE_DEPTH,
    ) -> float:
        """
        Mean angle, seen from the midpoint of both camera centers, between the points each camera
        back-projects a probe pixel to at the given depth.
        :param cam_true: Ground-truth camera
        :param cam_perturbed: Perturbed camera
        :param probe_points: (N, 2) pixels, defaults to default_probes of the true camera
        :param depth: Back-projection depth in meters
        :return: Angle in degrees
        """
        probes = self.default_probes(cam_true) if probe_points is None else np.atleast_2d(probe_points)
        middle = 0.5 * (cam_true.center + cam_perturbed.center)
        angles = []
        for probe in probes:
            try:
                first = self._camera_model.back_project(probe[None, :], cam_true, depth)[0] - middle
                second = self._camera_model.back_project(probe[None, :], cam_perturbed, depth)[0] - middle
            except AnchorLocError:
                continue
            angles.append(np.arctan2(np.linalg.norm(np.cross(first, second)), np.dot(first, second)))
        if not angles:
            logger.error("No probe of camera %s could be back-projected", cam_true.id)
            raise NoValidProbesError(f"No probe of camera {cam_true.id} could be back-projected by both cameras")
        return float(np.rad2deg(np.mean(angles)))

    def _localize_anchors(
        self,
        cams_true: Sequence[CameraParams],
        cams_initial: Sequence[CameraParams],
        cams_solver: Sequence[CameraParams],
        anchors: Sequence[Anchor],
        corrections: Optional[AnchorMap],
        mode: LocalizationModeEnum,
        solver: SolverConfig,
        localizer: Localizer,
        leave_one_out: bool = True,
    ) -> Tuple[List[Tuple[LocalizationResult, FrameInitial, Position3D]], int]:
        """
        Localize the anchors themselves as targets. The anchor's own camera sees its surveyed pixel,
        every other camera that sees it gets the exact projection through the true camera.
        :return: (result, initial estimate, true position) per localized anchor, and the number skipped
        """
        solved = []
        ordered = sorted(anchors, key=lambda item: (item.camera_id, item.anchor_id))
        for index, anchor in enumerate(ordered):
            entries = []
            for cam in sorted(cams_true, key=lambda item: item.id):
                if cam.id == anchor.camera_id:
                    entries.append(ObservationEntry(camera_id=cam.id, visible=True, pixel=anchor.observed_pixel))
                elif self._camera_model.is_visible(anchor.world, cam):
                    pixel = self._camera_model.project(anchor.world, cam)
                    entries.append(ObservationEntry(camera_id=cam.id, visible=True, pixel=pixel))
                else:
                    entries.append(ObservationEntry(camera_id=cam.id, visible=False))
            obs = FrameObservations(
                frame_index=index,
                target_id=anchor.anchor_id,
                representative=RepresentativeEnum.ankle,
                entries=entries,
            )
            available = None
            if corrections is not None:
                available = {
                    camera_id: [
                        item
                        for item in items
                        if not (leave_one_out and camera_id == anchor.camera_id and item.anchor_id == anchor.anchor_id)
                    ]
                    for camera_id, items in corrections.items()
                }
            height = anchor.world.z
            try:
                init = self._initializer.initial_estimate(obs, cams_initial, height)
                result = localizer.solve_frame(
                    obs,
                    cams_solver,
                    available,
                    mode,
                    init.position,
                    solver.model_copy(update={"fixed_height": height}),
                )
            except AnchorLocError as error:
                logger.warning("Anchor %s skipped: %s", anchor.anchor_id, error)
                continue
            initial = FrameInitial(
                frame_index=index,
                target_id=anchor.anchor_id,
                position=init.position,
                n_cameras=obs.n_visible,
            )
            solved.append((result, initial, anchor.world))
        logger.debug("Localized %d of %d anchors", len(solved), len(ordered))
        return solved, len(ordered) - len(solved)

    def anchor_targets(
        self,
        cams_true: Sequence[CameraParams],
        cams_calibrated: Sequence[CameraParams],
        anchors: Sequence[Anchor],
        solver: Optional[SolverConfig] = None,
        leave_one_out: bool = True,
        mode: LocalizationModeEnum = LocalizationModeEnum.anchor,
        anchor_count: Optional[int] = None,
    ) -> MetricsReport:
        """
        Localize the anchors themselves as targets with exact pixels in every camera that sees them.
        :param cams_true: Ground-truth cameras, render the pixels
        :param cams_calibrated: Calibrated cameras the initial estimate and the solver use
        :param anchors: All anchors
        :param solver: Solver settings, the fixed height is the anchor height
        :param leave_one_out: Leave the localized anchor out of its own camera's anchor set
        :param mode: NOMINAL or ANCHOR residual
        :param anchor_count: Anchors per camera used for the correction, all by default
        :return: Report with single and multi camera breakdowns
        """
        solver = solver if solver is not None else self._localizer.solver
        corrections = None
        if mode == LocalizationModeEnum.anchor:
            corrections = limit_anchors(group_by_camera(anchors), anchor_count)
        solved, _ = self._localize_anchors(
            cams_true,
            cams_calibrated,
            cams_calibrated,
            anchors,
            corrections,
            mode,
            solver,
            self._localizer,
            leave_one_out,
        )
        return self.evaluate(
            [result for result, _, _ in solved],
            [truth for _, _, truth in solved],
            [initial.position for _, initial, _ in solved],
            by_target=False,
        )

    @staticmethod
    def enumerate_cells(spec: SweepSpec) -> List[SweepCell]:
        """
        Every cell of a sweep, sorted by key. With average_signs, each perturbation drawn with
        random signs becomes a forced positive and a forced negative cell.
        :param spec: Sweep spec
        :return: Cells
        """
        perturbations = []
        for perturbation in spec.perturbations:
            if spec.average_signs and perturbation.sign_mode == SignModeEnum.both and not perturbation.is_zero:
                perturbations.append(perturbation.with_sign(SignModeEnum.positive))
                perturbations.append(perturbation.with_sign(SignModeEnum.negative))
            else:
                perturbations.append(perturbation)
        sigmas = spec.pixel_sigmas if spec.pixel_sigmas is not None else [spec.scene.noise.pixel_sigma]
        cells = {}
        for perturbation in perturbations:
            for sigma in sigmas:
                for seed in spec.seeds:
                    for method in spec.methods:
                        for batch_size in spec.batch_sizes:
                            for rho in spec.rhos:
                                cell = SweepCell(
                                    experiment=spec.experiment,
                                    perturbation=perturbation,
                                    pixel_sigma=sigma,
                                    method=method,
                                    seed=seed,
                                    batch_size=batch_size,
                                    rho=rho,
                                )
                                cells[cell.key] = cell
        return [cells[key] for key in sorted(cells)]

    def run_scenario(self, spec: SweepSpec, cells: Sequence[SweepCell]) -> List[Dict[str, Any]]:
        """
        Simulate one scenario and evaluate every method cell on it.
        :param spec: Sweep spec
        :param cells: Cells sharing perturbation, pixel noise and seed
        :return: One sweep row per cell, in cell order
        """
        first = cells[0]
        scene = spec.scene.model_copy(
            update={
                "rng_seed": first.seed,
                "perturbation": first.perturbation,
                "noise": spec.scene.noise.model_copy(update={"pixel_sigma": first.pixel_sigma}),
            },
        )
        simulated = self._simulator.simulate_scene(scene)
        truth = {
            (frame, trajectory.target_id): position
            for trajectory in simulated.trajectories
            for frame, position in enumerate(trajectory.representative_positions(scene.representative))
        }
        seen = [obs for obs in simulated.observations if obs.n_visible > 0]
        initialized, init_failures = self._initializer.initialize_all(
            seen,
            simulated.perturbed_cameras,
            simulated.target_heights,
        )
        init_report = self.evaluate_positions(
            [initial.position for _, initial in initialized],
            [truth[initial.key] for _, initial in initialized],
            [initial.position for _, initial in initialized],
            single_camera=[initial.n_cameras == 1 for _, initial in initialized],
        )
        angular = 0.0
        if not first.perturbation.is_zero:
            try:
                angular = float(
                    np.mean(
                        [
                            self.angular_error(true_cam, perturbed_cam)
                            for true_cam, perturbed_cam in zip(simulated.cameras, simulated.perturbed_cameras)
                        ],
                    ),
                )
            except NoValidProbesError:
                angular = float("nan")

        localizer = Localizer(
            self._numerics,
            self._camera_model,
            AnchorWeightSolver(self._numerics, spec.weights),
            spec.solver,
        )
        grouped = group_by_camera(simulated.anchors)
        rows = []
        for cell in cells:
            method = cell.method
            cams = simulated.cameras if method.method == MethodEnum.ground_truth else simulated.perturbed_cameras
            anchored = method.method == MethodEnum.anchor
            mode = LocalizationModeEnum.anchor if anchored else LocalizationModeEnum.nominal
            corrections = limit_anchors(grouped, method.anchor_count) if anchored else None
            if spec.anchor_targets:
                solved, n_skipped = self._localize_anchors(
                    simulated.cameras,
                    simulated.perturbed_cameras,
                    cams,
                    simulated.anchors,
                    corrections,
                    mode,
                    spec.solver,
                    localizer,
                )
                results = [result for result, _, _ in solved]
                initials = [initial for _, initial, _ in solved]
                truths = [position for _, _, position in solved]
                n_failed = n_skipped
                cell_init_report = self.evaluate_positions(
                    [initial.position for initial in initials],
                    truths,
                    [initial.position for initial in initials],
                    single_camera=[initial.n_cameras == 1 for initial in initials],
                )
            else:
                run = localizer.localize_all(
                    initialized,
                    cams,
                    corrections,
                    mode,
                    SmoothingConfig(batch_size=cell.batch_size, rho=cell.rho),
                    spec.solver,
                )
                results, initials = run.results, run.initials
                truths = [truth[(result.frame_index, result.target_id)] for result in results]
                n_failed = len(init_failures) + len(run.failures)
                cell_init_report = init_report
            report = self.evaluate(results, truths, [initial.position for initial in initials], by_target=False)
            group = cell.group_key if spec.average_signs else f"{cell.group_key}__{cell.perturbation.sign_mode.value}"
            rows.append(
                {
                    "experiment": cell.experiment,
                    "cell": cell.key,
                    "group": group,
                    "rx_deg": cell.perturbation.rx_deg,
                    "ry_deg": cell.perturbation.ry_deg,
                    "t_m": cell.perturbation.t_m,
                    "d_rel": cell.perturbation.d_rel,
                    "sign_mode": cell.perturbation.sign_mode.value,
                    "pixel_sigma": cell.pixel_sigma,
                    "method": method.name,
                    "anchor_count": method.anchor_count if anchored else 0,
                    "seed": cell.seed,
                    "batch_size": cell.batch_size,
                    "rho": cell.rho,
                    "average_distance": report.average_distance,
                    "distance_std": report.distance_std,
                    "improvement_ratio": report.improvement_ratio,
                    "n_frames": report.n_frames,
                    "n_failed": n_failed,
                    "init_distance": cell_init_report.average_distance,
                    "single_camera_distance": _breakdown_distance(report, "single_camera"),
                    "multi_camera_distance": _breakdown_distance(report, "multi_camera"),
                    "angular_error_deg": angular,
                },
            )
            logger.debug("Cell %s successfully evaluated", cell.key)
        return rows

    @staticmethod
    def summarize(table: pd.DataFrame, average_signs: bool = True) -> pd.DataFrame:
        """
        Average sweep rows over seeds and, with average_signs, over forced signs.
        :param table: Sweep rows
        :param average_signs: Whether positive and negative cells share a summary row
        :return: One row per group, sorted by group
        """
        keys = SUMMARY_KEYS if average_signs else [*SUMMARY_KEYS, "sign_mode"]
        aggregations: Dict[str, Tuple[str, str]] = {key: (key, "first") for key in keys}
        aggregations.update({metric: (metric, "mean") for metric in SUMMARY_METRICS})
        aggregations["n_cells"] = ("cell", "count")
        return table.groupby("group", sort=True).agg(**aggregations).reset_index()

    def run_sweep(
        self,
        spec: SweepSpec,
        out_dir: Optional[Union[str, Path]] = None,
        jobs: int = 1,
    ) -> pd.DataFrame:
        """
        Run every cell of a sweep. With an output directory, finished cells are stored as
        cells/<key>.json and skipped when the sweep is run again.
        :param spec: Sweep spec
        :param out_dir: Directory of <experiment>.csv, <experiment>_summary.csv and the cell files
        :param jobs: Number of worker processes
        :return: One row per cell, sorted by cell key
        """
        cell_dir = Path(out_dir) / "cells" if out_dir is not None else None
        scenarios: Dict[str, List[SweepCell]] = OrderedDict()
        for cell in self.enumerate_cells(spec):
            scenarios.setdefault(cell.scenario_key, []).append(cell)

        rows: Dict[str, Dict[str, Any]] = {}
        pending = []
        for members in scenarios.values():
            paths = [cell_dir / f"{cell.key}.json" for cell in members] if cell_dir is not None else []
            if paths and all(path.exists() for path in paths):
                for cell, path in zip(members, paths):
                    rows[cell.key] = self._dataset.read_json(path)
                continue
            pending.append(members)
        logger.debug("%d scenarios to run, %d already done", len(pending), len(scenarios) - len(pending))

        def store(members: List[SweepCell], output: List[Dict[str, Any]]) -> None:
            for cell, row in zip(members, output):
                rows[cell.key] = row
                if cell_dir is not None:
                    self._dataset.write_json(cell_dir / f"{cell.key}.json", row)

        # cell files are written as soon as their scenario finishes
        if jobs > 1 and len(pending) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = {
                    pool.submit(_run_scenario_job, (self._numerics, spec, members)): members for members in pending
                }
                for future in as_completed(futures):
                    store(futures[future], future.result())
        else:
            for members in pending:
                store(members, self.run_scenario(spec, members))

        table = pd.DataFrame([rows[key] for key in sorted(rows)], columns=SWEEP_COLUMNS)
        if out_dir is not None:
            self._dataset.write_table(Path(out_dir) / f"{spec.experiment}.csv", table)
            self._dataset.write_table(
                Path(out_dir) / f"{spec.experiment}_summary.csv",
                self.summarize(table, spec.average_signs),
            )
        logger.debug("Sweep %s successfully run with %d cells", spec.experiment, len(table))
        return table
