from .camera import CameraModel, LidarModel, LidarSweep, CalibrationError, project_point
from .primitives import Box, Ground, RoomShell, Scene, Sphere
from .synth import (SceneSpec, SceneConfigError, synth_scene, simulate_lidar,
                    render_gt_views, lidar_point_color, lidar_point_colors, posed_camera)
from .dataset import (Dataset, DatasetError, FrameBundle, load_dataset, save_dataset,
                      generate_dataset, rebuild_scene, holdout_split)
from .formats import FileFormatError
from . import transforms
