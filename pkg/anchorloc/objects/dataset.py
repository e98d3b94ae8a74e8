"""
File schemas of the pipeline.

CSV files are written by pandas with 9 significant digits and LF line endings; JSON files
use ``custom_encoder``. Schema violations raise ``SchemaError`` carrying the file and,
where the format has lines, the 1-based line number.
"""
from __future__ import annotations

import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Type, TypeVar, Union

import pandas as pd
from pydantic import BaseModel, ValidationError

from anchorloc.exception import SchemaError
from anchorloc.models.anchor import Anchor, AnchorRecord
from anchorloc.models.camera import CameraParams, CameraRecord, Position3D
from anchorloc.models.evaluation import MetricsReport
from anchorloc.models.localization import LocalizationResult
from anchorloc.models.observation import (
    Detection,
    FrameInitial,
    FrameObservations,
    ObservationEntry,
    RepresentativeEnum,
)
from anchorloc.models.simulation import GroundTruthTrajectory, SimulatedScene
from anchorloc.objects.object import AnchorLocObject
from anchorloc.utils import CSV_FLOAT_FORMAT, custom_encoder

logger = logging.getLogger("anchorloc")

PathLike = Union[str, Path]
ModelT = TypeVar("ModelT", bound=BaseModel)

ANCHOR_COLUMNS = ["camera_id", "anchor_id", "x", "y", "z", "u", "v"]
POSITION_COLUMNS = ["frame", "target_id", "x", "y", "z"]
TARGET_COLUMNS = ["target_id", "height"]
ESTIMATE_COLUMNS = ["frame", "target_id", "x", "y", "z", "converged", "objective"]
INITIAL_COLUMNS = ["frame", "target_id", "x", "y", "z", "n_cameras"]
DETECTION_COLUMNS = ["frame", "target_id", "camera_id", "x1", "y1", "x2", "y2"]
METRIC_COLUMNS = ["scope", "average_distance", "distance_std", "improvement_ratio", "n_frames"]
ID_COLUMNS = {"camera_id": str, "anchor_id": str, "target_id": str}


def describe_validation_error(error: ValidationError) -> str:
    """One line summary of a pydantic error: location and message of every violation."""
    return "; ".join(
        f"{'.'.join(str(part) for part in item['loc']) or '<root>'}: {item['msg']}" for item in error.errors()
    )


class DatasetStore(AnchorLocObject):
    """Models reading and writing pipeline files."""

    def read_json(self, path: PathLike) -> Any:
        """
        :param path: JSON file
        :return: The decoded document
        """
        path = Path(path)
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as error:
            logger.error("%s is not valid JSON", path)
            raise SchemaError(error.msg, path, error.lineno) from error

    def write_json(self, path: PathLike, payload: Any) -> Path:
        """
        :param path: Destination, parent directories are created
        :param payload: Document, pydantic and numpy values allowed
        :return: The written path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(payload, default=custom_encoder, indent=2) + "\n", encoding="utf-8")
        logger.debug("%s successfully written", path)
        return path

    def read_model(self, path: PathLike, model: Type[ModelT]) -> ModelT:
        """
        Read and validate a JSON document.
        :param path: JSON file
        :param model: Pydantic model of the document
        :return: The validated model
        """
        data = self.read_json(path)
        try:
            return model.model_validate(data)
        except ValidationError as error:
            logger.error("%s does not follow the %s schema", path, model.__name__)
            raise SchemaError(describe_validation_error(error), path) from error

    def read_table(self, path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
        """
        :param path: CSV file with a header line
        :param columns: Columns that must be present
        :return: The table, id columns read as strings
        """
        path = Path(path)
        try:
            frame = pd.read_csv(path, dtype=ID_COLUMNS, keep_default_na=False, na_values=[""])
        except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as error:
            logger.error("%s is not a valid CSV table", path)
            raise SchemaError(str(error), path, 1) from error
        missing = [column for column in columns if column not in frame.columns]
        if missing:
            logger.error("%s misses columns %s", path, missing)
            raise SchemaError(f"missing columns {missing}", path, 1)
        return frame

    def write_table(self, path: PathLike, frame: pd.DataFrame) -> Path:
        """
        :param path: Destination, parent directories are created
        :param frame: Table to write without its index
        :return: The written path
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
        logger.debug("%s successfully written", path)
        return path

    def _rows(
        self,
        path: PathLike,
        columns: Sequence[str],
        record: Type[ModelT],
    ) -> Iterable[Tuple[int, ModelT]]:
        frame = self.read_table(path, columns)
        for index, row in enumerate(frame[list(columns)].to_dict(orient="records")):
            line = index + 2
            try:
                yield line, record.model_validate(row)
            except ValidationError as error:
                logger.error("%s line %d does not follow the schema", path, line)
                raise SchemaError(describe_validation_error(error), path, line) from error

    def read_cameras(self, path: PathLike) -> List[CameraParams]:
        """
        :param path: JSON array of camera records
        :return: Cameras sorted by id
        """
        data = self.read_json(path)
        if not isinstance(data, list):
            logger.error("%s is not a JSON array", path)
            raise SchemaError("camera file must hold a JSON array of records", path)
        cams = []
        for index, item in enumerate(data):
            try:
                cams.append(CameraRecord.model_validate(item).to_params())
            except ValidationError as error:
                logger.error("%s camera record %d does not follow the schema", path, index)
                raise SchemaError(f"camera record {index}: {describe_validation_error(error)}", path) from error
        ids = [cam.id for cam in cams]
        if len(ids) != len(set(ids)):
            logger.error("%s repeats camera ids", path)
            raise SchemaError("camera ids must be unique", path)
        logger.debug("Read %d cameras from %s", len(cams), path)
        return sorted(cams, key=lambda cam: cam.id)

    def write_cameras(self, path: PathLike, cams: Sequence[CameraParams]) -> Path:
        return self.write_json(path, [CameraRecord.from_params(cam) for cam in cams])

    def read_anchors(self, path: PathLike) -> List[Anchor]:
        """
        :param path: CSV with header camera_id,anchor_id,x,y,z,u,v
        :return: Anchors in file order
        """
        anchors = []
        seen = set()
        for line, record in self._rows(path, ANCHOR_COLUMNS, AnchorRecord):
            key = (record.camera_id, record.anchor_id)
            if key in seen:
                logger.error("%s line %d repeats anchor %s", path, line, key)
                raise SchemaError(f"anchor {record.anchor_id} of camera {record.camera_id} is repeated", path, line)
            seen.add(key)
            try:
                anchors.append(record.to_anchor())
            except ValidationError as error:
                logger.error("%s line %d has non finite values", path, line)
                raise SchemaError(describe_validation_error(error), path, line) from error
        logger.debug("Read %d anchors from %s", len(anchors), path)
        return anchors

    def write_anchors(self, path: PathLike, anchors: Sequence[Anchor]) -> Path:
        rows = [AnchorRecord.from_anchor(anchor).model_dump() for anchor in anchors]
        return self.write_table(path, pd.DataFrame(rows, columns=ANCHOR_COLUMNS))

    def write_trajectories(
        self,
        path: PathLike,
        trajectories: Sequence[GroundTruthTrajectory],
        representative: RepresentativeEnum = RepresentativeEnum.head,
    ) -> Path:
        """Ground truth of the representative point, one row per frame and target."""
        rows = [
            (frame, trajectory.target_id, position.x, position.y, position.z)
            for trajectory in trajectories
            for frame, position in enumerate(trajectory.representative_positions(representative))
        ]
        rows.sort(key=lambda row: (row[0], row[1]))
        return self.write_table(path, pd.DataFrame(rows, columns=POSITION_COLUMNS))

    def read_positions(self, path: PathLike) -> Dict[Tuple[int, str], Position3D]:
        """
        :param path: CSV with at least the columns frame,target_id,x,y,z
        :return: Positions keyed by (frame, target_id)
        """
        frame = self.read_table(path, POSITION_COLUMNS)
        positions = {}
        for index, row in enumerate(frame[POSITION_COLUMNS].to_dict(orient="records")):
            line = index + 2
            try:
                key = (int(row["frame"]), str(row["target_id"]))
                position = Position3D(x=row["x"], y=row["y"], z=row["z"])
            except (ValidationError, ValueError, TypeError) as error:
                logger.error("%s line %d is not a valid position", path, line)
                raise SchemaError(str(error), path, line) from error
            if key in positions:
                logger.error("%s line %d repeats %s", path, line, key)
                raise SchemaError(f"frame {key[0]} of target {key[1]} is repeated", path, line)
            positions[key] = position
        return positions

    def write_targets(self, path: PathLike, trajectories: Sequence[GroundTruthTrajectory]) -> Path:
        rows = sorted((trajectory.target_id, trajectory.height) for trajectory in trajectories)
        return self.write_table(path, pd.DataFrame(rows, columns=TARGET_COLUMNS))

    def read_targets(self, path: PathLike) -> Dict[str, float]:
        """
        :param path: CSV with header target_id,height
        :return: Height per target id
        """
        frame = self.read_table(path, TARGET_COLUMNS)
        heights = {}
        for index, row in enumerate(frame[TARGET_COLUMNS].to_dict(orient="records")):
            height = row["height"]
            if isinstance(height, bool) or not isinstance(height, (int, float)) or not height > 0:
                logger.error("%s line %d has an invalid height", path, index + 2)
                raise SchemaError(f"height of target {row['target_id']} must be positive", path, index + 2)
            heights[str(row["target_id"])] = float(height)
        return heights

    def write_observations(self, path: PathLike, observations: Sequence[FrameObservations]) -> Path:
        """One JSON record per line: frame, target_id, representative, entries."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = []
        for obs in sorted(observations, key=lambda item: (item.frame_index, item.target_id)):
            record = {
                "frame": obs.frame_index,
                "target_id": obs.target_id,
                "representative": obs.representative.value,
                "entries": [entry.model_dump(mode="json") for entry in obs.entries],
            }
            lines.append(json.dumps(record, default=custom_encoder))
        path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        logger.debug("%s successfully written", path)
        return path

    def read_observations(self, path: PathLike) -> List[FrameObservations]:
        """
        :param path: JSON lines file, blank lines ignored
        :return: Observations in file order
        """
        path = Path(path)
        observations = []
        for number, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as error:
                logger.error("%s line %d is not valid JSON", path, number)
                raise SchemaError(error.msg, path, number) from error
            if not isinstance(data, dict) or "frame" not in data:
                logger.error("%s line %d has no frame", path, number)
                raise SchemaError("record needs a frame field", path, number)
            data["frame_index"] = data.pop("frame")
            try:
                observations.append(FrameObservations.model_validate(data))
            except ValidationError as error:
                logger.error("%s line %d does not follow the observation schema", path, number)
                raise SchemaError(describe_validation_error(error), path, number) from error
        logger.debug("Read %d observation records from %s", len(observations), path)
        return observations

    def read_detections(
        self,
        path: PathLike,
        camera_ids: Sequence[str],
        representative: RepresentativeEnum = RepresentativeEnum.head,
    ) -> List[FrameObservations]:
        """
        Convert detection boxes to observations: the top-centre of a box stands for the head,
        the bottom-centre for the ankle. Cameras without a box are invisible in that frame.
        :param path: CSV with header frame,target_id,camera_id,x1,y1,x2,y2
        :param camera_ids: Calibrated cameras
        :param representative: Which point of the box to extract
        :return: One record per (frame, target) with a box, sorted by frame and target
        """
        known = sorted(camera_ids)
        boxes: Dict[Tuple[int, str], Dict[str, Detection]] = defaultdict(dict)
        for line, detection in self._rows(path, DETECTION_COLUMNS, Detection):
            if detection.camera_id not in known:
                logger.error("%s line %d names unknown camera %s", path, line, detection.camera_id)
                raise SchemaError(f"unknown camera {detection.camera_id}", path, line)
            key = (detection.frame, detection.target_id)
            if detection.camera_id in boxes[key]:
                logger.error("%s line %d repeats a box", path, line)
                message = f"camera {detection.camera_id} has several boxes in frame {detection.frame}"
                raise SchemaError(f"{message} for target {detection.target_id}", path, line)
            boxes[key][detection.camera_id] = detection

        observations = []
        for (frame, target_id), by_camera in sorted(boxes.items()):
            entries = [
                ObservationEntry(
                    camera_id=camera_id,
                    visible=camera_id in by_camera,
                    pixel=by_camera[camera_id].representative_pixel(representative) if camera_id in by_camera else None,
                )
                for camera_id in known
            ]
            observations.append(
                FrameObservations(
                    frame_index=frame,
                    target_id=target_id,
                    representative=representative,
                    entries=entries,
                ),
            )
        logger.debug("Converted detections of %s into %d observation records", path, len(observations))
        return observations

    def write_estimates(self, path: PathLike, results: Sequence[LocalizationResult]) -> Path:
        rows = [
            (
                result.frame_index,
                result.target_id,
                result.position.x,
                result.position.y,
                result.position.z,
                result.converged,
                result.final_objective,
            )
            for result in results
        ]
        return self.write_table(path, pd.DataFrame(rows, columns=ESTIMATE_COLUMNS))

    def write_initials(self, path: PathLike, initials: Sequence[FrameInitial]) -> Path:
        rows = [
            (
                initial.frame_index,
                initial.target_id,
                initial.position.x,
                initial.position.y,
                initial.position.z,
                initial.n_cameras,
            )
            for initial in initials
        ]
        return self.write_table(path, pd.DataFrame(rows, columns=INITIAL_COLUMNS))

    def read_initials(self, path: PathLike) -> List[FrameInitial]:
        """
        :param path: CSV with header frame,target_id,x,y,z,n_cameras
        :return: Initial estimates in file order
        """
        frame = self.read_table(path, INITIAL_COLUMNS)
        initials = []
        for index, row in enumerate(frame[INITIAL_COLUMNS].to_dict(orient="records")):
            try:
                initials.append(
                    FrameInitial(
                        frame_index=row["frame"],
                        target_id=row["target_id"],
                        position=Position3D(x=row["x"], y=row["y"], z=row["z"]),
                        n_cameras=row["n_cameras"],
                    ),
                )
            except ValidationError as error:
                logger.error("%s line %d does not follow the initials schema", path, index + 2)
                raise SchemaError(describe_validation_error(error), path, index + 2) from error
        return initials

    def write_metrics(self, out_dir: PathLike, report: MetricsReport) -> List[Path]:
        """
        :param out_dir: Directory of metrics.json and metrics.csv
        :param report: Report to write
        :return: The written paths
        """
        out_dir = Path(out_dir)
        scopes = [("all", report), *sorted(report.breakdown.items())]
        rows = [
            (scope, item.average_distance, item.distance_std, item.improvement_ratio, item.n_frames)
            for scope, item in scopes
        ]
        return [
            self.write_json(out_dir / "metrics.json", report),
            self.write_table(out_dir / "metrics.csv", pd.DataFrame(rows, columns=METRIC_COLUMNS)),
        ]

    def write_scene(self, out_dir: PathLike, scene: SimulatedScene) -> List[Path]:
        """
        Write every file of a simulated scene.
        :param out_dir: Destination directory
        :param scene: Simulated scene
        :return: The written paths
        """
        out_dir = Path(out_dir)
        paths = [
            self.write_json(out_dir / "scene.json", scene.spec),
            self.write_cameras(out_dir / "cameras.json", scene.cameras),
            self.write_cameras(out_dir / "cameras_perturbed.json", scene.perturbed_cameras),
            self.write_anchors(out_dir / "anchors.csv", scene.anchors),
            self.write_trajectories(out_dir / "trajectories.csv", scene.trajectories, scene.spec.representative),
            self.write_targets(out_dir / "targets.csv", scene.trajectories),
            self.write_observations(out_dir / "observations.jsonl", scene.observations),
        ]
        logger.debug("Scene with %d cameras successfully written to %s", len(scene.cameras), out_dir)
        return paths
